use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};
use crate::kernels::{RadialKernel, MAX_ATTEMPTS};
use crate::operators::difference_quotient;
use crate::quadrature::NODE_BUDGET;

/// Central differences `(u(x + s e_i) - u(x - s e_i)) / 2s`.
pub fn fd_gradient(field: &ScalarField, x: &Point, step: f64) -> Result<DVector<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("fd step must be positive, got {step}")));
    }
    let dom = field.domain();
    if x.len() != dom.dim() {
        return Err(Error::DimensionMismatch {
            expected: dom.dim(),
            got: x.len(),
        });
    }
    for i in 0..x.len() {
        if x[i] - step < dom.lower()[i] || x[i] + step > dom.upper()[i] {
            return Err(Error::InvalidArgument(format!(
                "point {:?} is closer than the step {step} to the boundary along axis {i}",
                x.as_slice()
            )));
        }
    }
    let mut y = x.clone();
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + step;
        let up = field.value(&y)?;
        y[i] = x[i] - step;
        let um = field.value(&y)?;
        y[i] = x[i];
        g[i] = (up - um) / (2.0 * step);
    }
    Ok(g)
}

/// Absolute slack in Monte-Carlo comparisons: kernel tails too rare to be
/// drawn leave a zero-variance estimate that misses contributions this small.
pub const MC_FLOOR: f64 = 1e-8;

/// Monte-Carlo estimate with per-component standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

impl McEstimate {
    /// Whether every component of `value` lies within `k` standard errors,
    /// up to [`MC_FLOOR`].
    pub fn agrees_with(&self, value: &DVector<f64>, k: f64) -> bool {
        self.mean
            .iter()
            .zip(&self.stderr)
            .zip(value.iter())
            .all(|((m, s), v)| (m - v).abs() <= k * s + MC_FLOOR)
    }
}

/// `D · mean k_u(x, x - h_i)` over kernel draws `h_i`, rejecting `x - h_i ∉ Ω`.
pub fn mc_nonlocal_gradient(
    field: &ScalarField,
    x: &Point,
    kernel: &RadialKernel,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if kernel.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: kernel.dim(),
        });
    }
    field.domain().require_interior(x)?;
    let dim = field.dim();
    let d = dim as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford running moments
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for k in 0..samples {
        let mut attempts = 0;
        let y = loop {
            let y = x - kernel.sample_offset(&mut rng)?;
            if field.domain().contains_unchecked(&y) && y != *x {
                break y;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS {
                return Err(Error::SamplerExhausted { attempts });
            }
        };
        let g = difference_quotient(field, x, &y)? * d;
        let count = (k + 1) as f64;
        for i in 0..dim {
            let delta = g[i] - mean[i];
            mean[i] += delta / count;
            m2[i] += delta * (g[i] - mean[i]);
        }
    }
    let n = samples as f64;
    Ok(McEstimate {
        stderr: m2.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect(),
        mean,
        samples,
    })
}

/// Grid minimum over cell midpoints, polished by coordinate-wise golden
/// section inside the winning cell. Ties keep the first grid index.
pub fn brute_force_min(field: &ScalarField, resolution: usize) -> Result<(Point, f64)> {
    let dom = field.domain();
    let dim = dom.dim();
    if resolution < 1 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let requested = u32::try_from(dim)
        .ok()
        .and_then(|d| resolution.checked_pow(d))
        .unwrap_or(usize::MAX);
    if requested > NODE_BUDGET {
        return Err(Error::NodeBudget {
            requested,
            budget: NODE_BUDGET,
        });
    }
    let h: Vec<f64> = (0..dim)
        .map(|i| (dom.upper()[i] - dom.lower()[i]) / resolution as f64)
        .collect();
    let node = |idx: &[usize]| Point::from_fn(dim, |i, _| dom.lower()[i] + (idx[i] as f64 + 0.5) * h[i]);
    let mut idx = vec![0usize; dim];
    let mut best: Option<(Point, f64)> = None;
    'outer: loop {
        let x = node(&idx);
        let v = field.value(&x)?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < resolution {
                continue 'outer;
            }
            *slot = 0;
        }
        break;
    }
    let (mut x, mut v) = best.expect("grid is nonempty");
    let cell_lo: Vec<f64> = (0..dim).map(|i| x[i] - 0.5 * h[i]).collect();
    for _ in 0..4 {
        let before = v;
        for i in 0..dim {
            let (mut a, mut b) = (cell_lo[i], cell_lo[i] + h[i]);
            let mut y = x.clone();
            let mut f = |t: f64| -> Result<f64> {
                y[i] = t;
                field.value(&y)
            };
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
            let (mut fc, mut fd) = (f(c)?, f(d)?);
            while b - a > 1e-12 * (1.0 + b.abs()) {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - r * (b - a);
                    fc = f(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + r * (b - a);
                    fd = f(d)?;
                }
            }
            let t = 0.5 * (a + b);
            let ft = f(t)?;
            if ft < v {
                x[i] = t;
                v = ft;
            }
        }
        if v >= before {
            break;
        }
    }
    Ok((x, v))
}
