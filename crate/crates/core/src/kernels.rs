//! Radial interaction kernels `ρ_n(h) = C · φ(‖h‖ / ℓ_n)` with `ℓ_n = ℓ₀ / n`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point};
use crate::quadrature::{composite_gauss, sphere_area, CompensatedSum, PolarRule, PolarSettings};

/// Gaussian kernels are truncated at this many standard deviations.
pub const GAUSSIAN_RADIUS: f64 = 8.0;

/// Upper bound on rejection-sampling attempts per draw.
pub const MAX_ATTEMPTS: usize = 1_000_000;

const RADIAL_PANELS: usize = 64;
const RADIAL_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Bump,
    Custom,
}

/// Kernel block of the JSON configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// σ₀ for the Gaussian, r₀ for the bump.
    pub base_scale: f64,
    pub n: u32,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            base_scale: 0.1,
            n: 16,
        }
    }
}

impl KernelSpec {
    pub fn build(&self, dim: usize) -> Result<RadialKernel> {
        match self.family {
            KernelFamily::Gaussian => RadialKernel::gaussian(dim, self.base_scale, self.n),
            KernelFamily::Bump => RadialKernel::bump(dim, self.base_scale, self.n),
            KernelFamily::Custom => Err(Error::InvalidKernel(
                "custom profiles cannot be built from a config block".into(),
            )),
        }
    }
}

type ProfileFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Profile {
    Gaussian,
    Bump,
    Custom {
        phi: Arc<ProfileFn>,
        support: f64,
        peak: f64,
    },
}

impl Profile {
    fn phi(&self, s: f64) -> f64 {
        match self {
            Profile::Gaussian => (-0.5 * s * s).exp(),
            Profile::Bump => bump_profile(s),
            Profile::Custom { phi, support, .. } => {
                if s < *support {
                    phi(s)
                } else {
                    0.0
                }
            }
        }
    }

    /// Support of φ in units of the scale.
    fn support(&self) -> f64 {
        match self {
            Profile::Gaussian => GAUSSIAN_RADIUS,
            Profile::Bump => 1.0,
            Profile::Custom { support, .. } => *support,
        }
    }
}

fn bump_profile(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `∫_0^{support} φ(s) s^{D-1} ds`.
fn unit_moment(profile: &Profile, dim: usize) -> f64 {
    composite_gauss(0.0, profile.support(), RADIAL_PANELS, RADIAL_NODES, |s| {
        profile.phi(s) * s.powi(dim as i32 - 1)
    })
}

fn bump_unit_moment(dim: usize) -> f64 {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    *guard.entry(dim).or_insert_with(|| unit_moment(&Profile::Bump, dim))
}

/// One member `ρ_n` of a radial density family concentrating at the origin.
#[derive(Clone)]
pub struct RadialKernel {
    family: KernelFamily,
    profile: Profile,
    dim: usize,
    n: u32,
    base_scale: f64,
    scale: f64,
    normalization: f64,
}

impl fmt::Debug for RadialKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialKernel")
            .field("family", &self.family)
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("base_scale", &self.base_scale)
            .field("normalization", &self.normalization)
            .finish()
    }
}

fn check_common(dim: usize, base_scale: f64, n: u32) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidKernel("dimension must be positive".into()));
    }
    if !(base_scale > 0.0 && base_scale.is_finite()) {
        return Err(Error::InvalidKernel(format!(
            "base scale must be positive and finite, got {base_scale}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidKernel("scale index n must be positive".into()));
    }
    Ok(())
}

impl RadialKernel {
    /// Isotropic normal density with standard deviation `σ₀ / n`.
    pub fn gaussian(dim: usize, sigma0: f64, n: u32) -> Result<Self> {
        check_common(dim, sigma0, n)?;
        let scale = sigma0 / n as f64;
        Ok(Self {
            family: KernelFamily::Gaussian,
            profile: Profile::Gaussian,
            dim,
            n,
            base_scale: sigma0,
            scale,
            normalization: (2.0 * PI * scale * scale).powf(-0.5 * dim as f64),
        })
    }

    /// `C · exp(-1/(1 - ‖h/r_n‖²))` on the open ball of radius `r₀ / n`.
    pub fn bump(dim: usize, r0: f64, n: u32) -> Result<Self> {
        check_common(dim, r0, n)?;
        let scale = r0 / n as f64;
        let mass = sphere_area(dim) * scale.powi(dim as i32) * bump_unit_moment(dim);
        Ok(Self {
            family: KernelFamily::Bump,
            profile: Profile::Bump,
            dim,
            n,
            base_scale: r0,
            scale,
            normalization: 1.0 / mass,
        })
    }

    /// Kernel with a user profile `φ`, evaluated as `C · φ(‖h‖ / ℓ_n)` and
    /// vanishing for `‖h‖ ≥ support · ℓ_n`.
    pub fn custom(
        dim: usize,
        base_scale: f64,
        n: u32,
        support: f64,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_common(dim, base_scale, n)?;
        if !(support > 0.0 && support.is_finite()) {
            return Err(Error::InvalidKernel(
                "profile support must be positive and finite".into(),
            ));
        }
        let mut peak = 0.0f64;
        for k in 0..=4096 {
            let v = phi(support * k as f64 / 4096.0);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidKernel(format!(
                    "profile must be finite and nonnegative, got {v} at s = {}",
                    support * k as f64 / 4096.0
                )));
            }
            peak = peak.max(v);
        }
        let profile = Profile::Custom {
            phi: Arc::new(phi),
            support,
            peak,
        };
        let moment = unit_moment(&profile, dim);
        if !(moment > 0.0 && moment.is_finite()) {
            return Err(Error::InvalidKernel("profile has no positive finite mass".into()));
        }
        let scale = base_scale / n as f64;
        Ok(Self {
            family: KernelFamily::Custom,
            profile,
            dim,
            n,
            base_scale,
            scale,
            normalization: 1.0 / (sphere_area(dim) * scale.powi(dim as i32) * moment),
        })
    }

    /// The same family and base scale at a different scale index.
    pub fn with_scale_index(&self, n: u32) -> Result<Self> {
        check_common(self.dim, self.base_scale, n)?;
        let ratio = self.n as f64 / n as f64;
        Ok(Self {
            n,
            scale: self.base_scale / n as f64,
            normalization: self.normalization / ratio.powi(self.dim as i32),
            ..self.clone()
        })
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec {
            family: self.family,
            base_scale: self.base_scale,
            n: self.n,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale_index(&self) -> u32 {
        self.n
    }

    pub fn base_scale(&self) -> f64 {
        self.base_scale
    }

    /// `ℓ_n`: the standard deviation for the Gaussian, the support radius for the bump.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Radius beyond which the kernel is treated as zero.
    pub fn effective_radius(&self) -> f64 {
        self.profile.support() * self.scale
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self.profile, Profile::Gaussian)
    }

    /// `ρ̂_n(r)`.
    pub fn radial_density(&self, r: f64) -> f64 {
        match self.profile {
            // untruncated normal density
            Profile::Gaussian => self.normalization * (-0.5 * (r / self.scale).powi(2)).exp(),
            _ => self.normalization * self.profile.phi(r / self.scale),
        }
    }

    pub fn eval_density(&self, h: &Point) -> Result<f64> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: h.len(),
            });
        }
        Ok(self.radial_density(h.norm()))
    }

    /// `∫_{‖h‖>δ} ρ_n(h) dh`.
    pub fn tail_mass(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        let outer = self.effective_radius();
        if delta >= outer {
            return Ok(0.0);
        }
        let pow = self.dim as i32 - 1;
        let tail = sphere_area(self.dim)
            * composite_gauss(delta, outer, RADIAL_PANELS, RADIAL_NODES, |r| {
                self.radial_density(r) * r.powi(pow)
            });
        Ok(tail.clamp(0.0, 1.0))
    }

    /// Draw `h ~ ρ_n`.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        let dim = self.dim;
        match &self.profile {
            Profile::Gaussian => Ok(Point::from_iterator(
                dim,
                (0..dim).map(|_| self.scale * rng.sample::<f64, _>(StandardNormal)),
            )),
            profile => {
                let peak = match profile {
                    Profile::Custom { peak, .. } => *peak,
                    _ => bump_profile(0.0),
                };
                let radius = self.effective_radius();
                for _ in 0..MAX_ATTEMPTS {
                    let h = uniform_in_ball(rng, dim, radius);
                    let accept = profile.phi(h.norm() / self.scale) / peak;
                    if rng.random::<f64>() < accept {
                        return Ok(h);
                    }
                }
                Err(Error::SamplerExhausted { attempts: MAX_ATTEMPTS })
            }
        }
    }

    /// `c_n^i(x) = ∫_Ω (x_i - y_i)² / ‖x - y‖² ρ_n(x - y) dy`.
    pub fn moment_c(&self, domain: &BoxDomain, x: &Point, axis: usize) -> Result<f64> {
        if axis >= self.dim {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        Ok(self.moments(domain, x)?[axis])
    }

    pub fn moment_diagnostics(&self, domain: &BoxDomain, x: &Point) -> Result<MomentDiagnostics> {
        Ok(MomentDiagnostics {
            c_values: self.moments(domain, x)?,
            point: x.clone(),
            kernel: self.spec(),
        })
    }

    fn moments(&self, domain: &BoxDomain, x: &Point) -> Result<Vec<f64>> {
        if domain.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: domain.dim(),
            });
        }
        domain.require_interior(x)?;
        let rule = PolarRule::new(
            self.dim,
            PolarSettings {
                radial: 128,
                angular: 128,
            },
        )?;
        let radius = self.effective_radius();
        let mut acc = vec![CompensatedSum::default(); self.dim];
        rule.for_each_node(
            |omega| vec![(0.0, radius.min(domain.exit_distance(x, omega)))],
            |omega, r, w| {
                let v = w * self.radial_density(r);
                for (i, a) in acc.iter_mut().enumerate() {
                    a.add(v * omega[i] * omega[i]);
                }
                Ok(())
            },
        )?;
        Ok(acc.iter().map(CompensatedSum::value).collect())
    }
}

fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Point {
    if dim == 1 {
        return Point::from_element(1, radius * (2.0 * rng.random::<f64>() - 1.0));
    }
    loop {
        let g = Point::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = g.norm();
        if norm > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            return g * (r / norm);
        }
    }
}

/// Directional second moments `c_n^i(x)` of a kernel truncated to Ω.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentDiagnostics {
    pub c_values: Vec<f64>,
    #[serde(serialize_with = "crate::geometry::serialize_point")]
    pub point: Point,
    pub kernel: KernelSpec,
}

impl MomentDiagnostics {
    /// `max_i |D·c_i - 1|`.
    pub fn deviation(&self) -> f64 {
        let d = self.c_values.len() as f64;
        self.c_values.iter().map(|c| (d * c - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn kernels(dim: usize, n: u32) -> Vec<RadialKernel> {
        vec![
            RadialKernel::gaussian(dim, 0.1, n).unwrap(),
            RadialKernel::bump(dim, 0.2, n).unwrap(),
        ]
    }

    /// Composite Simpson on the radial profile, independent of the GL rules.
    fn simpson_mass(k: &RadialKernel) -> f64 {
        let m = 200_000;
        let b = k.effective_radius();
        let h = b / m as f64;
        let f = |r: f64| {
            let mut v = Point::zeros(k.dim());
            v[0] = r;
            k.eval_density(&v).unwrap() * r.powi(k.dim() as i32 - 1)
        };
        let mut s = f(0.0) + f(b);
        for j in 1..m {
            s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
        }
        sphere_area(k.dim()) * s * h / 3.0
    }

    #[test]
    fn gaussian_peak_and_density() {
        let k = RadialKernel::gaussian(1, 1.0, 1).unwrap();
        let peak = k.eval_density(&Point::zeros(1)).unwrap();
        assert!((peak - 0.398942280401).abs() < 1e-9);
        let k = RadialKernel::gaussian(1, 0.2, 2).unwrap();
        let oracle = Normal::new(0.0, 0.1).unwrap();
        use statrs::distribution::Continuous;
        let v = k.eval_density(&Point::from_element(1, 0.1)).unwrap();
        assert!((v - oracle.pdf(0.1)).abs() < 1e-12);
    }

    #[test]
    fn bump_vanishes_on_sphere() {
        for dim in 1..=3 {
            let k = RadialKernel::bump(dim, 0.2, 4).unwrap();
            let mut h = Point::zeros(dim);
            h[0] = k.scale();
            assert_eq!(k.eval_density(&h).unwrap(), 0.0);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let k = RadialKernel::gaussian(2, 0.1, 1).unwrap();
        assert!(matches!(
            k.eval_density(&Point::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalization_all_families() {
        for dim in 1..=3 {
            for n in [1u32, 2, 7, 32, 64] {
                for k in kernels(dim, n) {
                    let mass = simpson_mass(&k);
                    assert!((mass - 1.0).abs() < 1e-8, "{k:?}: {mass}");
                }
            }
        }
    }

    #[test]
    fn gaussian_tail_matches_normal_cdf() {
        let k = RadialKernel::gaussian(1, 1.0, 1).unwrap();
        let phi = Normal::new(0.0, 1.0).unwrap();
        let expect = 2.0 * (1.0 - phi.cdf(1.0));
        assert!((k.tail_mass(1.0).unwrap() - expect).abs() < 1e-10);
        assert!((expect - 0.3173).abs() < 1e-4);
    }

    #[test]
    fn tail_edge_cases() {
        let b = RadialKernel::bump(2, 0.2, 4).unwrap();
        assert_eq!(b.tail_mass(b.scale()).unwrap(), 0.0);
        for k in kernels(2, 3) {
            assert!((k.tail_mass(1e-9).unwrap() - 1.0).abs() < 1e-8);
        }
        assert!(b.tail_mass(0.0).is_err());
    }

    #[test]
    fn tail_mass_decreases_with_n() {
        // Strict while the tail is representable; once it is exactly zero
        // (compact support, or Gaussian underflow) it stays zero.
        for dim in 1..=3 {
            for delta in [0.05, 0.1, 0.5] {
                for base in kernels(dim, 1) {
                    let mut prev = base.tail_mass(delta).unwrap();
                    for n in 2..=32 {
                        let t = base.with_scale_index(n).unwrap().tail_mass(delta).unwrap();
                        if prev > 0.0 {
                            assert!(t < prev, "{base:?} n={n} δ={delta}: {t} !< {prev}");
                        } else {
                            assert_eq!(t, 0.0);
                        }
                        prev = t;
                    }
                }
            }
        }
    }

    #[test]
    fn with_scale_index_matches_fresh_construction() {
        for dim in 1..=3 {
            for k in kernels(dim, 3) {
                let a = k.with_scale_index(11).unwrap();
                let b = k.spec();
                let b = KernelSpec { n: 11, ..b }.build(dim).unwrap();
                assert!((a.normalization() / b.normalization() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_sample_mean() {
        let k = RadialKernel::gaussian(1, 0.1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| k.sample_offset(&mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005);
    }

    #[test]
    fn bump_samples_inside_support() {
        let k = RadialKernel::bump(2, 0.2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            assert!(k.sample_offset(&mut rng).unwrap().norm() < k.scale());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for k in kernels(3, 2) {
            let a: Vec<Point> = {
                let mut rng = ChaCha8Rng::seed_from_u64(42);
                (0..10).map(|_| k.sample_offset(&mut rng).unwrap()).collect()
            };
            let b: Vec<Point> = {
                let mut rng = ChaCha8Rng::seed_from_u64(42);
                (0..10).map(|_| k.sample_offset(&mut rng).unwrap()).collect()
            };
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empirical_tail_matches_quadrature() {
        for dim in 1..=3 {
            for k in kernels(dim, 2) {
                let delta = 0.5 * k.scale();
                let p = k.tail_mass(delta).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
                let n = 100_000;
                let hits = (0..n)
                    .filter(|_| k.sample_offset(&mut rng).unwrap().norm() > delta)
                    .count() as f64;
                let std = (p * (1.0 - p) / n as f64).sqrt();
                assert!(
                    (hits / n as f64 - p).abs() <= 3.0 * std,
                    "{k:?}: {} vs {p}",
                    hits / n as f64
                );
            }
        }
    }

    #[test]
    fn malformed_custom_profile_exhausts_sampler() {
        // a spike far narrower than the sampling envelope resolution
        let k = RadialKernel::custom(2, 1.0, 1, 1.0, |s| if s < 1e-4 { 1.0 } else { 1e-300 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(k.sample_offset(&mut rng), Err(Error::SamplerExhausted { .. })));
    }

    #[test]
    fn custom_profile_validation() {
        assert!(RadialKernel::custom(1, 1.0, 1, 1.0, |s| s - 0.5).is_err());
        assert!(RadialKernel::custom(1, 1.0, 1, 1.0, |_| 0.0).is_err());
        let k = RadialKernel::custom(2, 0.3, 2, 1.0, |s| 1.0 - s).unwrap();
        assert!((simpson_mass(&k) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn moment_c_examples() {
        let unit1 = BoxDomain::unit(1);
        let k = RadialKernel::bump(1, 0.2, 1).unwrap();
        let c = k.moment_c(&unit1, &Point::from_element(1, 0.5), 0).unwrap();
        assert!((c - 1.0).abs() < 1e-10);

        let unit2 = BoxDomain::unit(2);
        let k = RadialKernel::bump(2, 0.2, 1).unwrap();
        let d = k.moment_diagnostics(&unit2, &Point::from_element(2, 0.5)).unwrap();
        for c in &d.c_values {
            assert!((c - 0.5).abs() < 1e-6, "{c}");
        }

        let k = RadialKernel::gaussian(2, 0.5, 1).unwrap();
        let d = k.moment_diagnostics(&unit2, &Point::from_element(2, 0.05)).unwrap();
        for c in &d.c_values {
            assert!(2.0 * c < 1.0);
        }
    }

    proptest! {
        #[test]
        fn density_is_nonnegative_and_radial(
            dim in 1usize..=3,
            n in 1u32..=64,
            r in 0.0f64..0.5,
            a in 0.0f64..std::f64::consts::TAU,
            b in 0.0f64..std::f64::consts::PI,
        ) {
            for k in kernels(dim, n) {
                let mut h1 = Point::zeros(dim);
                h1[0] = r;
                let h2 = match dim {
                    1 => Point::from_element(1, -r),
                    2 => Point::from_column_slice(&[r * a.cos(), r * a.sin()]),
                    _ => Point::from_column_slice(&[r * b.sin() * a.cos(), r * b.sin() * a.sin(), r * b.cos()]),
                };
                let (v1, v2) = (k.eval_density(&h1).unwrap(), k.eval_density(&h2).unwrap());
                prop_assert!(v1 >= 0.0);
                prop_assert!((v1 - v2).abs() <= 1e-12 * v1.max(1.0));
            }
        }

        #[test]
        fn moment_c_is_bounded(x0 in 0.01f64..0.99, x1 in 0.01f64..0.99, n in 1u32..8) {
            let dom = BoxDomain::unit(2);
            let x = Point::from_column_slice(&[x0, x1]);
            for k in kernels(2, n) {
                for c in k.moment_diagnostics(&dom, &x).unwrap().c_values {
                    prop_assert!(c >= 0.0 && 2.0 * c <= 1.0 + 1e-9);
                }
            }
        }
    }
}
