//! Nonlocal gradients and Hessians built from radial interaction kernels,
//! and the descent methods that use them in place of classical derivatives.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kernels;
pub mod operators;
pub mod optimizers;
pub mod quadrature;
pub mod validation;

pub use error::{Error, Result};
pub use geometry::{BoxDomain, Point, ScalarField, SubsetIndicator};
pub use kernels::{KernelFamily, KernelSpec, RadialKernel};
pub use operators::{
    difference_quotient, nonlocal_gradient, nonlocal_hessian, restricted_nonlocal_gradient, H4Constant, HessianVariant,
    NonlocalConfig,
};
pub use optimizers::{OptimizerTrace, StepSchedule, Termination};
pub use validation::{convergence_sweep, Check, SweepReport, SweepSettings};
