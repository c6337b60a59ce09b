use serde::{Deserialize, Serialize};

use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    GradTol,
    Diverged,
    LeftDomain,
    /// A nonnegative objective reached zero.
    ZeroObjective,
}

/// Full history of an optimizer run. `steps_taken[k]` is the step that
/// led from `iterates[k]` to `iterates[k + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerTrace {
    #[serde(serialize_with = "serialize_points")]
    pub iterates: Vec<Point>,
    pub objective_values: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub steps_taken: Vec<f64>,
    pub termination: Termination,
    /// The rejected point when the run left the domain.
    #[serde(serialize_with = "serialize_opt_point")]
    pub offending_point: Option<Point>,
}

fn serialize_points<S: serde::Serializer>(pts: &[Point], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(pts.iter().map(|p| p.iter().copied().collect::<Vec<f64>>()))
}

fn serialize_opt_point<S: serde::Serializer>(p: &Option<Point>, s: S) -> Result<S::Ok, S::Error> {
    match p {
        Some(p) => s.collect_seq(p.iter()),
        None => s.serialize_none(),
    }
}

impl OptimizerTrace {
    pub(crate) fn new() -> Self {
        Self {
            iterates: Vec::new(),
            objective_values: Vec::new(),
            gradient_norms: Vec::new(),
            steps_taken: Vec::new(),
            termination: Termination::MaxIters,
            offending_point: None,
        }
    }

    pub(crate) fn push(&mut self, x: Point, value: f64, grad_norm: f64) {
        self.iterates.push(x);
        self.objective_values.push(value);
        self.gradient_norms.push(grad_norm);
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn last_iterate(&self) -> Option<&Point> {
        self.iterates.last()
    }

    pub fn dim(&self) -> Option<usize> {
        self.iterates.first().map(|p| p.len())
    }

    /// `‖x^k - target‖` for every iterate.
    pub fn errors_to(&self, target: &Point) -> Vec<f64> {
        self.iterates.iter().map(|x| (x - target).norm()).collect()
    }

    /// Number of `k` with `objective[k + 1] > objective[k]`.
    pub fn objective_increases(&self) -> usize {
        self.objective_values.windows(2).filter(|w| w[1] > w[0]).count()
    }

    pub fn lengths_consistent(&self) -> bool {
        let n = self.iterates.len();
        self.objective_values.len() == n
            && self.gradient_norms.len() == n
            && self.steps_taken.len() + usize::from(n > 0) == n
    }
}
