//! Deterministic quadrature: tensor grids over boxes, masked ball grids,
//! principal-value exclusion, and the polar rule used by the nonlocal
//! operators.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point};

/// Default cap on the number of nodes a grid may hold.
pub const NODE_BUDGET: usize = 10_000_000;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    fn compute(m: usize) -> Self {
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 1..=m {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                dp = mf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[m - 1 - i] = z;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(z, w)| (mid + half * z, half * w))
    }
}

/// Cached `m`-point Gauss–Legendre rule.
pub fn gauss_legendre(m: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    assert!(m > 0, "Gauss-Legendre rule needs at least one node");
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(m)
        .or_insert_with(|| Arc::new(GaussRule::compute(m)))
        .clone()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]` with `panels`
/// panels of `nodes` points each.
pub fn composite_gauss(a: f64, b: f64, panels: usize, nodes: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gauss_legendre(nodes);
    let width = (b - a) / panels as f64;
    let mut acc = CompensatedSum::default();
    for p in 0..panels {
        let lo = a + width * p as f64;
        for (x, w) in rule.on_interval(lo, lo + width) {
            acc.add(w * f(x));
        }
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[serde(rename = "gauss")]
    TensorGaussLegendre,
    #[serde(rename = "midpoint")]
    TensorMidpoint,
}

/// Nodes and positive weights over a region.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub scheme: Scheme,
    pub resolution: usize,
    spacing: f64,
}

fn axis_rule(a: f64, b: f64, m: usize, scheme: Scheme) -> Vec<(f64, f64)> {
    match scheme {
        Scheme::TensorGaussLegendre => gauss_legendre(m).on_interval(a, b).collect(),
        Scheme::TensorMidpoint => {
            let h = (b - a) / m as f64;
            (0..m).map(|i| (a + (i as f64 + 0.5) * h, h)).collect()
        }
    }
}

fn min_spacing(axis: &[(f64, f64)]) -> f64 {
    axis.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min)
}

fn check_budget(resolution: usize, dim: usize, budget: usize) -> Result<()> {
    let requested = u32::try_from(dim)
        .ok()
        .and_then(|d| resolution.checked_pow(d))
        .unwrap_or(usize::MAX);
    if requested > budget {
        return Err(Error::NodeBudget { requested, budget });
    }
    Ok(())
}

fn tensor_product(axes: &[Vec<(f64, f64)>], mut keep: impl FnMut(&Point) -> bool) -> (Vec<Point>, Vec<f64>) {
    let dim = axes.len();
    let mut idx = vec![0usize; dim];
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if axes.iter().any(Vec::is_empty) {
        return (nodes, weights);
    }
    loop {
        let x = Point::from_iterator(dim, (0..dim).map(|k| axes[k][idx[k]].0));
        if keep(&x) {
            weights.push((0..dim).map(|k| axes[k][idx[k]].1).product());
            nodes.push(x);
        }
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                return (nodes, weights);
            }
        }
    }
}

impl QuadratureGrid {
    /// Tensor-product grid over the box with `resolution` nodes per axis.
    pub fn build_box_grid(domain: &BoxDomain, resolution: usize, scheme: Scheme) -> Result<Self> {
        Self::build_box_grid_with_budget(domain, resolution, scheme, NODE_BUDGET)
    }

    pub fn build_box_grid_with_budget(
        domain: &BoxDomain,
        resolution: usize,
        scheme: Scheme,
        budget: usize,
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        check_budget(resolution, domain.dim(), budget)?;
        let axes: Vec<_> = (0..domain.dim())
            .map(|i| axis_rule(domain.lower()[i], domain.upper()[i], resolution, scheme))
            .collect();
        let spacing = axes.iter().map(|a| min_spacing(a)).fold(f64::INFINITY, f64::min);
        let (nodes, weights) = tensor_product(&axes, |_| true);
        Ok(Self {
            nodes,
            weights,
            scheme,
            resolution,
            spacing,
        })
    }

    /// Grid over `B_radius(center) ∩ Ω`: a midpoint grid on the clipped
    /// bounding box with nodes outside the ball masked out.
    pub fn build_ball_grid(center: &Point, radius: f64, domain: &BoxDomain, resolution: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("ball radius must be positive".into()));
        }
        if center.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: center.len(),
            });
        }
        if resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        check_budget(resolution, domain.dim(), NODE_BUDGET)?;
        let axes: Vec<_> = (0..domain.dim())
            .map(|i| {
                let a = (center[i] - radius).max(domain.lower()[i]);
                let b = (center[i] + radius).min(domain.upper()[i]);
                if a < b {
                    axis_rule(a, b, resolution, Scheme::TensorMidpoint)
                } else {
                    Vec::new()
                }
            })
            .collect();
        let spacing = axes.iter().map(|a| min_spacing(a)).fold(f64::INFINITY, f64::min);
        let r2 = radius * radius;
        let (nodes, weights) = tensor_product(&axes, |x| (x - center).norm_squared() < r2);
        Ok(Self {
            nodes,
            weights,
            scheme: Scheme::TensorMidpoint,
            resolution,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        let mut s = CompensatedSum::default();
        self.weights.iter().for_each(|w| s.add(*w));
        s.value()
    }

    /// Smallest distance between neighbouring nodes along an axis.
    pub fn min_spacing(&self) -> f64 {
        self.spacing
    }

    /// `Σ weight · integrand(node)`.
    pub fn integrate(&self, integrand: impl Fn(&Point) -> f64) -> Result<f64> {
        self.integrate_masked(|_| true, integrand)
    }

    fn integrate_masked(&self, keep: impl Fn(&Point) -> bool, integrand: impl Fn(&Point) -> f64) -> Result<f64> {
        let mut acc = CompensatedSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            if !keep(x) {
                continue;
            }
            let v = integrand(x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: x.iter().copied().collect(),
                });
            }
            acc.add(w * v);
        }
        Ok(acc.value())
    }

    /// Principal-value integral excluding a ball around `x`.
    pub fn pv_integrate(&self, x: &Point, policy: PvPolicy, integrand: impl Fn(&Point) -> f64) -> Result<f64> {
        let drop_at = |eps: f64| self.integrate_masked(|y| (y - x).norm() > eps, &integrand);
        match policy.mode {
            PvMode::DropNodes => drop_at(policy.exclusion_radius),
            PvMode::LimitSequence => {
                let eps = policy.exclusion_radius;
                let levels = [drop_at(eps)?, drop_at(eps / 2.0)?, drop_at(eps / 4.0)?];
                richardson(levels, self.nodes.first().map_or(1, |p| p.len()))
            }
        }
    }
}

/// Richardson extrapolation of a principal-value sequence at `ε, ε/2, ε/4`,
/// assuming the excluded contribution scales like `ε^dim`.
pub(crate) fn richardson(levels: [f64; 3], dim: usize) -> Result<f64> {
    let d1 = levels[1] - levels[0];
    let d2 = levels[2] - levels[1];
    let scale = 1e-12 * (1.0 + levels[2].abs());
    if d2.abs() > d1.abs() + scale {
        return Err(Error::PvDivergence {
            levels: levels.to_vec(),
        });
    }
    let factor = 2f64.powi(dim as i32) - 1.0;
    Ok(levels[2] + d2 / factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvMode {
    DropNodes,
    LimitSequence,
}

/// Exclusion of a ball `B_ε(x)` around the singular point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvPolicy {
    pub exclusion_radius: f64,
    pub mode: PvMode,
}

impl PvPolicy {
    pub fn drop_nodes(exclusion_radius: f64) -> Result<Self> {
        Self::new(exclusion_radius, PvMode::DropNodes)
    }

    pub fn new(exclusion_radius: f64, mode: PvMode) -> Result<Self> {
        if !(exclusion_radius >= 0.0 && exclusion_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "exclusion radius must be finite and nonnegative, got {exclusion_radius}"
            )));
        }
        Ok(Self { exclusion_radius, mode })
    }

    /// DropNodes at half the grid's minimal node spacing.
    pub fn default_for(grid: &QuadratureGrid) -> Self {
        Self {
            exclusion_radius: 0.5 * grid.min_spacing(),
            mode: PvMode::DropNodes,
        }
    }
}

impl Default for PvPolicy {
    /// No exclusion: the Lebesgue integral. The polar rule never places a
    /// node at the singular point.
    fn default() -> Self {
        Self {
            exclusion_radius: 0.0,
            mode: PvMode::DropNodes,
        }
    }
}

/// Surface measure of the unit sphere `S^{dim-1}`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        d => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Resolution of the polar rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarSettings {
    /// Gauss–Legendre nodes per radial segment.
    pub radial: usize,
    /// Azimuthal directions (ignored for `D = 1`).
    pub angular: usize,
}

impl Default for PolarSettings {
    fn default() -> Self {
        Self {
            radial: 128,
            angular: 32,
        }
    }
}

const PANEL_NODES: usize = 16;

/// Product rule in polar coordinates `y = x + r·ω`: an angular rule on the
/// unit sphere (exact on low-degree spherical polynomials and symmetric
/// under `ω → -ω`) times composite Gauss–Legendre in `r`.
#[derive(Debug, Clone)]
pub struct PolarRule {
    dim: usize,
    directions: Vec<Point>,
    dir_weights: Vec<f64>,
    panels: usize,
    panel: Arc<GaussRule>,
}

impl PolarRule {
    pub fn new(dim: usize, settings: PolarSettings) -> Result<Self> {
        if settings.radial == 0 {
            return Err(Error::InvalidArgument("radial resolution must be positive".into()));
        }
        let angular = (settings.angular.max(4) + 1) & !1;
        let (directions, dir_weights) = match dim {
            1 => (
                vec![Point::from_element(1, 1.0), Point::from_element(1, -1.0)],
                vec![1.0, 1.0],
            ),
            2 => (0..angular)
                .map(|j| {
                    let t = (j as f64 + 0.5) * 2.0 * PI / angular as f64;
                    (Point::from_column_slice(&[t.cos(), t.sin()]), 2.0 * PI / angular as f64)
                })
                .unzip(),
            3 => {
                let zr = gauss_legendre((angular / 2).max(3));
                let mut dirs = Vec::new();
                let mut ws = Vec::new();
                for (z, wz) in zr.nodes.iter().zip(&zr.weights) {
                    let s = (1.0 - z * z).sqrt();
                    for j in 0..angular {
                        let t = (j as f64 + 0.5) * 2.0 * PI / angular as f64;
                        dirs.push(Point::from_column_slice(&[s * t.cos(), s * t.sin(), *z]));
                        ws.push(wz * 2.0 * PI / angular as f64);
                    }
                }
                (dirs, ws)
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "polar quadrature supports dimensions 1 to 3, got {dim}"
                )))
            }
        };
        let nodes = settings.radial.min(PANEL_NODES);
        Ok(Self {
            dim,
            directions,
            dir_weights,
            panels: settings.radial.div_ceil(nodes),
            panel: gauss_legendre(nodes),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    /// Radial nodes per segment.
    pub fn radial_nodes(&self) -> usize {
        self.panels * self.panel.nodes.len()
    }

    /// Node count for one radial segment per direction.
    pub fn node_count(&self) -> usize {
        self.directions.len() * self.radial_nodes()
    }

    /// Visit every node `(ω, r, weight)`; `weight` already contains the
    /// Jacobian `r^{D-1}`. `segments(ω)` lists radial intervals to integrate
    /// along direction `ω`.
    pub fn for_each_node<S, F>(&self, mut segments: S, mut f: F) -> Result<()>
    where
        S: FnMut(&Point) -> Vec<(f64, f64)>,
        F: FnMut(&Point, f64, f64) -> Result<()>,
    {
        let pow = self.dim as i32 - 1;
        for (omega, wd) in self.directions.iter().zip(&self.dir_weights) {
            for (a, b) in segments(omega) {
                if !(b > a) {
                    continue;
                }
                let width = (b - a) / self.panels as f64;
                for p in 0..self.panels {
                    let lo = a + width * p as f64;
                    for (r, wr) in self.panel.on_interval(lo, lo + width) {
                        f(omega, r, wd * wr * r.powi(pow))?;
                    }
                }
            }
        }
        Ok(())
    }
}
