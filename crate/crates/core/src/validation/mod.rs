//! Independent oracles (finite differences, Monte-Carlo, brute-force
//! minimization), the catalog of test fields and the convergence sweeps.

mod catalog;
mod oracles;
mod sweep;

pub use catalog::{catalog, catalog_field, CatalogEntry, Regularity, CATALOG_NAMES, QUARTIC_GAMMA};
pub use oracles::{brute_force_min, fd_gradient, mc_nonlocal_gradient, McEstimate, MC_FLOOR};
pub use sweep::{
    convergence_sweep, convergence_sweep_named, is_monotone_decreasing, Check, SweepReport, SweepSettings, NOISE_FLOOR,
};
