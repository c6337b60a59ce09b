use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularity {
    C0,
    Lipschitz,
    C1,
    C2,
    /// `C²` with compact support inside Ω.
    C2c,
}

/// A named test field with its regularity class and, where known, its
/// minimizer over Ω.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub regularity: Regularity,
    pub field: ScalarField,
    pub minimizer: Option<Point>,
}

pub const CATALOG_NAMES: [&str; 8] = [
    "constant",
    "linear",
    "quadratic",
    "quadratic_indefinite",
    "sin_product",
    "quartic",
    "ridge",
    "bump",
];

/// Quartic weight in the perturbed quadratic.
pub const QUARTIC_GAMMA: f64 = 1.0;

/// Every catalog field on `domain`.
pub fn catalog(domain: &BoxDomain) -> Vec<CatalogEntry> {
    CATALOG_NAMES
        .iter()
        .map(|n| catalog_field(n, domain).expect("catalog names are valid"))
        .collect()
}

fn rel(domain: &BoxDomain, frac: &[f64]) -> Point {
    Point::from_fn(domain.dim(), |i, _| {
        let f = frac[i % frac.len()];
        domain.lower()[i] + f * (domain.upper()[i] - domain.lower()[i])
    })
}

fn spd(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            [2.0, 1.0, 1.5][i % 3]
        } else if i + j == 1 {
            0.3
        } else {
            0.0
        }
    })
}

pub fn catalog_field(name: &str, domain: &BoxDomain) -> Result<CatalogEntry> {
    let dim = domain.dim();
    let d = domain.clone();
    let entry = match name {
        "constant" => CatalogEntry {
            name: "constant",
            regularity: Regularity::C2,
            field: ScalarField::new(d, |_| 1.0)
                .with_gradient(move |_| DVector::zeros(dim))
                .with_hessian(move |_| DMatrix::zeros(dim, dim))
                .with_lipschitz(0.0),
            minimizer: None,
        },
        "linear" => {
            let c = DVector::from_fn(dim, |i, _| [0.7, -0.4, 0.25][i % 3]);
            let (c1, c2) = (c.clone(), c.clone());
            CatalogEntry {
                name: "linear",
                regularity: Regularity::C2,
                field: ScalarField::new(d, move |x| c1.dot(x))
                    .with_gradient(move |_| c2.clone())
                    .with_hessian(move |_| DMatrix::zeros(dim, dim))
                    .with_lipschitz(c.norm()),
                minimizer: None,
            }
        }
        "quadratic" | "quadratic_indefinite" => {
            let indefinite = name == "quadratic_indefinite";
            let a = if indefinite {
                DMatrix::from_fn(dim, dim, |i, j| {
                    if i != j {
                        0.0
                    } else if i % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
            } else {
                spd(dim)
            };
            let c = rel(domain, &[0.5, 0.45, 0.55]);
            let lip = a.norm() * domain.diameter();
            let (a1, a2, a3, c1, c2) = (a.clone(), a.clone(), a, c.clone(), c.clone());
            CatalogEntry {
                name: if indefinite {
                    "quadratic_indefinite"
                } else {
                    "quadratic"
                },
                regularity: Regularity::C2,
                field: ScalarField::new(d, move |x| {
                    let z = x - &c1;
                    0.5 * z.dot(&(&a1 * &z))
                })
                .with_gradient(move |x| &a2 * (x - &c2))
                .with_hessian(move |_| a3.clone())
                .with_lipschitz(lip),
                minimizer: (!indefinite).then_some(c),
            }
        }
        "sin_product" => {
            let (lo, hi) = (domain.lower().to_vec(), domain.upper().to_vec());
            let w: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| PI / (b - a)).collect();
            let (lo1, w1, lo2, w2, lo3, w3) = (lo.clone(), w.clone(), lo.clone(), w.clone(), lo, w.clone());
            let lip = w.iter().map(|k| k * k).sum::<f64>().sqrt();
            CatalogEntry {
                name: "sin_product",
                regularity: Regularity::C2,
                field: ScalarField::new(d, move |x| {
                    (0..x.len()).map(|i| (w1[i] * (x[i] - lo1[i])).sin()).product()
                })
                .with_gradient(move |x| {
                    DVector::from_fn(x.len(), |i, _| {
                        (0..x.len())
                            .map(|k| {
                                let t = w2[k] * (x[k] - lo2[k]);
                                if k == i {
                                    w2[k] * t.cos()
                                } else {
                                    t.sin()
                                }
                            })
                            .product()
                    })
                })
                .with_hessian(move |x| {
                    let n = x.len();
                    DMatrix::from_fn(n, n, |i, j| {
                        (0..n)
                            .map(|k| {
                                let t = w3[k] * (x[k] - lo3[k]);
                                match (k == i, k == j) {
                                    (true, true) => -w3[k] * w3[k] * t.sin(),
                                    (true, false) | (false, true) => w3[k] * t.cos(),
                                    (false, false) => t.sin(),
                                }
                            })
                            .product()
                    })
                })
                .with_lipschitz(lip),
                minimizer: None,
            }
        }
        "quartic" => {
            let a = spd(dim);
            let c = rel(domain, &[0.5, 0.45, 0.55]);
            let shift = rel(domain, &[0.6, 0.4, 0.5]);
            let (a1, a2, a3) = (a.clone(), a.clone(), a);
            let (c1, c2) = (c.clone(), c.clone());
            let (s1, s2, s3) = (shift.clone(), shift.clone(), shift);
            let g = QUARTIC_GAMMA;
            let field = ScalarField::new(d, move |x| {
                let z = x - &c1;
                0.5 * z.dot(&(&a1 * &z)) + g * (x - &s1).norm_squared().powi(2)
            })
            .with_gradient(move |x| {
                let e = x - &s2;
                &a2 * (x - &c2) + &e * (4.0 * g * e.norm_squared())
            })
            .with_hessian(move |x| {
                let e = x - &s3;
                let n = x.len();
                &a3 + (DMatrix::identity(n, n) * e.norm_squared() + &e * e.transpose() * 2.0) * (4.0 * g)
            });
            let minimizer = newton_minimizer(&field, c)?;
            CatalogEntry {
                name: "quartic",
                regularity: Regularity::C2,
                field,
                minimizer: Some(minimizer),
            }
        }
        "ridge" => {
            let m = 1.0;
            let c = rel(domain, &[0.4])[0];
            CatalogEntry {
                name: "ridge",
                regularity: Regularity::Lipschitz,
                field: ScalarField::new(d, move |x| m * (x[0] - c).abs()).with_lipschitz(m),
                minimizer: (dim == 1).then(|| Point::from_element(1, c)),
            }
        }
        "bump" => bump_entry(domain)?,
        other => return Err(Error::InvalidArgument(format!("unknown catalog field `{other}`"))),
    };
    Ok(entry)
}

/// `exp(-1/(1 - ‖(x - c)/a‖²))` around the domain centre with radius `0.3`
/// relative to the shortest side.
fn bump_entry(domain: &BoxDomain) -> Result<CatalogEntry> {
    let dim = domain.dim();
    let c = domain.center();
    let a = 0.3
        * (0..dim)
            .map(|i| domain.upper()[i] - domain.lower()[i])
            .fold(f64::INFINITY, f64::min);
    let support = BoxDomain::new(
        (0..dim).map(|i| c[i] - a).collect(),
        (0..dim).map(|i| c[i] + a).collect(),
    )?;
    let (c1, c2, c3) = (c.clone(), c.clone(), c);
    let profile = move |z: &DVector<f64>| {
        let s2 = z.norm_squared();
        if s2 < 1.0 {
            (-1.0 / (1.0 - s2)).exp()
        } else {
            0.0
        }
    };
    let field = ScalarField::new(domain.clone(), move |x| profile(&((x - &c1) / a)))
        .with_gradient(move |x| {
            let z = (x - &c2) / a;
            let q = 1.0 - z.norm_squared();
            if q <= 0.0 {
                return DVector::zeros(x.len());
            }
            let u = (-1.0 / q).exp();
            &z * (-2.0 * u / (a * q * q))
        })
        .with_hessian(move |x| {
            let n = x.len();
            let z = (x - &c3) / a;
            let q = 1.0 - z.norm_squared();
            if q <= 0.0 {
                return DMatrix::zeros(n, n);
            }
            let u = (-1.0 / q).exp();
            let v = &z * (-2.0 / (a * q * q));
            (&v * v.transpose()
                - DMatrix::identity(n, n) * (2.0 / (a * a * q * q))
                - &z * z.transpose() * (8.0 / (a * a * q * q * q)))
                * u
        })
        .with_compact_support(support)?;
    Ok(CatalogEntry {
        name: "bump",
        regularity: Regularity::C2c,
        field,
        minimizer: None,
    })
}

/// Undamped Newton on the analytic derivatives, used to pin down minimizers
/// without a closed form.
fn newton_minimizer(field: &ScalarField, start: Point) -> Result<Point> {
    let mut x = start;
    for _ in 0..100 {
        let g = field.analytic_gradient(&x).expect("catalog fields carry gradients");
        let h = field.analytic_hessian(&x).expect("catalog fields carry Hessians");
        let step = h
            .lu()
            .solve(&g)
            .ok_or_else(|| Error::InvalidArgument("singular Hessian in catalog minimizer".into()))?;
        x -= &step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::fd_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for dim in 1..=3 {
            let dom = BoxDomain::unit(dim);
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            for e in catalog(&dom) {
                if !e.field.has_gradient() {
                    continue;
                }
                for _ in 0..100 {
                    let x = Point::from_fn(dim, |_, _| rng.random_range(0.01..0.99));
                    let g = e.field.analytic_gradient(&x).unwrap();
                    let fd = fd_gradient(&e.field, &x, 1e-5).unwrap();
                    assert!((&g - fd).amax() <= 1e-6 * (1.0 + g.norm()), "{} at {x:?}", e.name);
                }
            }
        }
    }

    #[test]
    fn analytic_hessians_match_gradient_differences() {
        for dim in 1..=3 {
            let dom = BoxDomain::unit(dim);
            let mut rng = ChaCha8Rng::seed_from_u64(10 + dim as u64);
            for e in catalog(&dom) {
                if !e.field.has_hessian() {
                    continue;
                }
                for _ in 0..50 {
                    let x = Point::from_fn(dim, |_, _| rng.random_range(0.01..0.99));
                    let h = e.field.analytic_hessian(&x).unwrap();
                    let step = 1e-6;
                    for j in 0..dim {
                        let mut xp = x.clone();
                        xp[j] += step;
                        let mut xm = x.clone();
                        xm[j] -= step;
                        let col = (e.field.analytic_gradient(&xp).unwrap() - e.field.analytic_gradient(&xm).unwrap())
                            / (2.0 * step);
                        assert!(
                            (h.column(j) - col).amax() <= 1e-5 * (1.0 + h.amax()),
                            "{} at {x:?}",
                            e.name
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn quartic_minimizer_is_stationary_and_off_centre() {
        let dom = BoxDomain::unit(2);
        let e = catalog_field("quartic", &dom).unwrap();
        let x = e.minimizer.unwrap();
        assert!(e.field.analytic_gradient(&x).unwrap().norm() < 1e-13);
        assert!((x - rel(&dom, &[0.5, 0.45])).norm() > 1e-3);
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let dom = BoxDomain::unit(2);
        let e = catalog_field("bump", &dom).unwrap();
        assert_eq!(e.field.eval(&Point::from_column_slice(&[0.1, 0.5])), 0.0);
        assert!(e.field.eval(&Point::from_element(2, 0.5)) > 0.3);
        assert_eq!(e.regularity, Regularity::C2c);
    }

    #[test]
    fn unknown_name() {
        assert!(catalog_field("kernell", &BoxDomain::unit(1)).is_err());
    }
}
