//! Domains, points and scalar fields.
//!
//! Every operator in this crate works on an axis-aligned open box
//! `Ω = (lower, upper)` and a [`ScalarField`] defined on it. Fields are
//! evaluation callbacks, so quadrature can sample them anywhere.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A point of `ℝ^D`.
pub type Point = DVector<f64>;

pub(crate) fn serialize_point<S: serde::Serializer>(p: &Point, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(p.iter())
}

/// An axis-aligned open box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite lower < upper, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `(0, 1)^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::cube(dim, 0.0, 1.0)
    }

    /// The cube `(lo, hi)^dim`. Panics on an empty cube.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim]).expect("nonempty cube")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    pub fn center(&self) -> Point {
        Point::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)),
        )
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Open-box membership: `lower[i] < x[i] < upper[i]` for every axis.
    pub fn contains(&self, x: &Point) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &Point) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *a < *v && *v < *b)
    }

    /// Closed-box membership.
    pub fn contains_closed(&self, x: &Point) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Errors unless `x` is an interior point.
    pub fn require_interior(&self, x: &Point) -> Result<()> {
        if self.contains(x)? {
            Ok(())
        } else {
            Err(Error::OutsideDomain(x.iter().copied().collect()))
        }
    }

    /// Distance from `x` along the unit direction `dir` to the boundary.
    ///
    /// `x` is assumed to lie in the closed box.
    pub fn exit_distance(&self, x: &Point, dir: &Point) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..self.dim() {
            let d = dir[i];
            if d > 0.0 {
                t = t.min((self.upper[i] - x[i]) / d);
            } else if d < 0.0 {
                t = t.min((self.lower[i] - x[i]) / d);
            }
        }
        t.max(0.0)
    }

    /// Clamp `x` into the closed box. Returns whether any coordinate moved.
    pub fn clamp(&self, x: &mut Point) -> bool {
        let mut moved = false;
        for i in 0..self.dim() {
            let c = x[i].clamp(self.lower[i], self.upper[i]);
            if c != x[i] {
                x[i] = c;
                moved = true;
            }
        }
        moved
    }

    /// Interval of ray parameters `t >= 0` with `x + t·dir` in the closed box.
    pub(crate) fn ray_interval(&self, x: &Point, dir: &Point) -> Option<(f64, f64)> {
        let mut lo: f64 = 0.0;
        let mut hi = f64::INFINITY;
        for i in 0..self.dim() {
            let d = dir[i];
            if d == 0.0 {
                if x[i] < self.lower[i] || x[i] > self.upper[i] {
                    return None;
                }
                continue;
            }
            let t1 = (self.lower[i] - x[i]) / d;
            let t2 = (self.upper[i] - x[i]) / d;
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        (lo < hi).then_some((lo, hi))
    }
}

pub type EvalFn = dyn Fn(&Point) -> f64 + Send + Sync;
pub type GradientFn = dyn Fn(&Point) -> DVector<f64> + Send + Sync;
pub type HessianFn = dyn Fn(&Point) -> DMatrix<f64> + Send + Sync;

/// An objective `u: Ω → ℝ` with optional analytic derivatives.
#[derive(Clone)]
pub struct ScalarField {
    domain: BoxDomain,
    eval: Arc<EvalFn>,
    gradient: Option<Arc<GradientFn>>,
    hessian: Option<Arc<HessianFn>>,
    lipschitz: Option<f64>,
    support: Option<BoxDomain>,
    extended: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("domain", &self.domain)
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .field("lipschitz", &self.lipschitz)
            .field("support", &self.support)
            .field("extended", &self.extended)
            .finish()
    }
}

impl ScalarField {
    pub fn new(domain: BoxDomain, eval: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            domain,
            eval: Arc::new(eval),
            gradient: None,
            hessian: None,
            lipschitz: None,
            support: None,
            extended: false,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_hessian(mut self, hessian: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    pub fn with_lipschitz(mut self, m: f64) -> Self {
        self.lipschitz = Some(m);
        self
    }

    /// Declare that the field vanishes outside the closed box `support`,
    /// which must sit strictly inside the domain.
    pub fn with_compact_support(mut self, support: BoxDomain) -> Result<Self> {
        if support.dim() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                got: support.dim(),
            });
        }
        let inside = (0..support.dim())
            .all(|i| self.domain.lower[i] < support.lower[i] && support.upper[i] < self.domain.upper[i]);
        if !inside {
            return Err(Error::InvalidDomain(
                "compact support must lie strictly inside the domain".into(),
            ));
        }
        self.support = Some(support);
        Ok(self)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn compact_support(&self) -> Option<&BoxDomain> {
        self.support.as_ref()
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    /// Raw evaluation. Outside the support of an extended field this is 0.
    pub fn eval(&self, x: &Point) -> f64 {
        match (&self.support, self.extended) {
            (Some(s), true) if !s.contains_closed(x) => 0.0,
            _ => (self.eval)(x),
        }
    }

    /// Evaluation that rejects non-finite values.
    pub fn value(&self, x: &Point) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                location: x.iter().copied().collect(),
            })
        }
    }

    /// Evaluation anywhere in `ℝ^D`: inside the domain the field itself,
    /// outside it the zero extension (requires a compact support).
    pub fn value_extended(&self, x: &Point) -> Result<f64> {
        if self.domain.contains_closed(x) {
            return self.value(x);
        }
        match &self.support {
            Some(s) if !s.contains_closed(x) => Ok(0.0),
            Some(_) => self.value(x),
            None => Err(Error::NotExtendable {
                location: x.iter().copied().collect(),
            }),
        }
    }

    pub fn analytic_gradient(&self, x: &Point) -> Option<DVector<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn analytic_hessian(&self, x: &Point) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }

    /// The extension by zero of a compactly supported field: identical on
    /// the closed support, zero everywhere else (including outside Ω).
    pub fn extend_by_zero(&self) -> Result<ScalarField> {
        if self.support.is_none() {
            return Err(Error::MissingCompactSupport);
        }
        let mut out = self.clone();
        out.extended = true;
        Ok(out)
    }

    /// Pointwise linear combination `a·self + b·other` on the same domain.
    pub fn linear_combination(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        let (f, g) = (self.clone(), other.clone());
        ScalarField::new(self.domain.clone(), move |x| a * f.eval(x) + b * g.eval(x))
    }

    /// Pointwise product on the same domain.
    pub fn product(&self, other: &ScalarField) -> ScalarField {
        let (f, g) = (self.clone(), other.clone());
        ScalarField::new(self.domain.clone(), move |x| f.eval(x) * g.eval(x))
    }
}

/// A measurable subset `Ω* ⊂ Ω` given as a finite union of closed boxes
/// (intervals when `D = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetIndicator {
    dim: usize,
    pieces: Vec<BoxDomain>,
}

impl SubsetIndicator {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            pieces: Vec::new(),
        }
    }

    pub fn full(domain: &BoxDomain) -> Self {
        Self {
            dim: domain.dim(),
            pieces: vec![domain.clone()],
        }
    }

    pub fn from_boxes(dim: usize, pieces: Vec<BoxDomain>) -> Result<Self> {
        if let Some(b) = pieces.iter().find(|b| b.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: b.dim(),
            });
        }
        Ok(Self { dim, pieces })
    }

    /// A 1-D union of closed intervals. Degenerate intervals (`a >= b`) are dropped.
    pub fn intervals(intervals: &[(f64, f64)]) -> Self {
        let pieces = intervals
            .iter()
            .filter(|(a, b)| a < b)
            .map(|&(a, b)| BoxDomain {
                lower: vec![a],
                upper: vec![b],
            })
            .collect();
        Self { dim: 1, pieces }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[BoxDomain] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.pieces.iter().any(|b| b.contains_closed(x))
    }

    /// Total length of the pieces (1-D) or total volume, overlaps counted once
    /// only for disjoint inputs.
    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(BoxDomain::volume).sum()
    }

    /// Merged parameter intervals `t ∈ [lo, hi]` where `x + t·dir` lies in the subset.
    pub(crate) fn ray_segments(&self, x: &Point, dir: &Point) -> Vec<(f64, f64)> {
        let mut segs: Vec<(f64, f64)> = self.pieces.iter().filter_map(|b| b.ray_interval(x, dir)).collect();
        merge_intervals(&mut segs);
        segs
    }
}

pub(crate) fn merge_intervals(segs: &mut Vec<(f64, f64)>) {
    segs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(segs.len());
    for &(a, b) in segs.iter() {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    *segs = out;
}
