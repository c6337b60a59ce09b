//! JSON run configurations: loading with defaults, dotted `key=value`
//! overrides, and the resolved-config and manifest files written next to
//! every run's outputs.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::PulseRunConfig;
use crate::geometry::BoxDomain;
use crate::kernels::KernelSpec;
use crate::operators::HessianVariant;
use crate::optimizers::{BetaSchedule, SgdConfig, StepSchedule};
use crate::quadrature::PolarSettings;
use crate::validation::{Check, SweepSettings};

/// Tag keys of internally tagged enums. A user object whose tag differs from
/// the default replaces the default instead of being merged into it.
const TAG_KEYS: [&str; 3] = ["kind", "method", "variant"];

/// A configuration schema with defaults that may depend on the raw input.
pub trait ConfigSchema: Serialize + DeserializeOwned {
    fn defaults(raw: &Value) -> Result<Self>;
}

/// Read `path` (or start from `{}`), apply `overrides` and fill defaults.
pub fn load_config<T: ConfigSchema>(path: Option<&Path>, overrides: &[String]) -> Result<T> {
    let raw = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config {
                key: p.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => Value::Object(Map::new()),
    };
    resolve_config(raw, overrides)
}

/// [`load_config`] on an already parsed document.
pub fn resolve_config<T: ConfigSchema>(mut raw: Value, overrides: &[String]) -> Result<T> {
    if !raw.is_object() {
        return Err(Error::Config {
            key: ".".into(),
            message: "configuration must be a JSON object".into(),
        });
    }
    for o in overrides {
        apply_override(&mut raw, o)?;
    }
    let mut merged = serde_json::to_value(T::defaults(&raw)?).map_err(|e| Error::Config {
        key: ".".into(),
        message: e.to_string(),
    })?;
    deep_merge(&mut merged, raw);
    let text = merged.to_string();
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        key: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// Apply one `dotted.key=value` override. The value is parsed as JSON and
/// taken as a string when that fails.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::Config {
        key: assignment.to_string(),
        message: "override must have the form key=value".into(),
    })?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config {
            key: key.to_string(),
            message: "empty path segment".into(),
        });
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| Error::Config {
            key: parts[..i].join("."),
            message: "cannot set a key inside a non-object value".into(),
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("the loop returns on the last segment")
}

/// Merge `over` into `base`, objects key by key, everything else replaced.
pub fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retagged = TAG_KEYS.iter().any(|t| o.get(*t).is_some_and(|v| b.get(*t) != Some(v)));
            if retagged {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A catalog field on the cube `[lower, upper]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub field: String,
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for Problem {
    fn default() -> Self {
        Self {
            field: "quadratic".into(),
            dim: 2,
            lower: 0.0,
            upper: 1.0,
        }
    }
}

impl Problem {
    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(vec![self.lower; self.dim], vec![self.upper; self.dim])
    }
}

fn kernel(n: u32) -> KernelSpec {
    KernelSpec {
        n,
        ..KernelSpec::default()
    }
}

/// `grad-check`: nonlocal gradient against the analytic gradient at probes
/// whose kernel ball lies inside Ω, and against the Monte-Carlo oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckConfig {
    pub problem: Problem,
    pub kernel: KernelSpec,
    pub polar: PolarSettings,
    pub probes: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Monte-Carlo samples per probe; 0 skips the cross-check.
    pub mc_samples: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            problem: Problem::default(),
            kernel: kernel(16),
            polar: PolarSettings::default(),
            probes: 20,
            seed: 0,
            tolerance: 1e-6,
            mc_samples: 20_000,
        }
    }
}

/// `hess-check`: a nonlocal Hessian against the analytic Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessCheckConfig {
    pub problem: Problem,
    pub kernel: KernelSpec,
    pub polar: PolarSettings,
    pub hessian: HessianVariant,
    pub probes: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for HessCheckConfig {
    fn default() -> Self {
        Self {
            problem: Problem::default(),
            kernel: kernel(16),
            polar: PolarSettings::default(),
            hessian: HessianVariant::default(),
            probes: 20,
            seed: 0,
            tolerance: 1e-5,
        }
    }
}

/// `sweep`: one registered convergence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub check: Check,
    pub n_values: Vec<u32>,
    pub settings: SweepSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::for_check(Check::GradientLocalization)
    }
}

impl SweepConfig {
    pub fn for_check(check: Check) -> Self {
        Self {
            check,
            n_values: check.default_n_values(),
            settings: SweepSettings::defaults_for(check),
        }
    }
}

/// Step rule of `descend`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum DescentMethod {
    Fixed { schedule: StepSchedule },
    LineSearch { cap: f64 },
}

/// `descend`: nonlocal gradient descent next to its classical counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescendConfig {
    pub problem: Problem,
    pub kernel: KernelSpec,
    pub polar: PolarSettings,
    pub x0: Vec<f64>,
    pub descent: DescentMethod,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub compare_local: bool,
}

impl Default for DescendConfig {
    fn default() -> Self {
        Self {
            problem: Problem::default(),
            kernel: kernel(16),
            polar: PolarSettings::default(),
            x0: vec![0.25, 0.75],
            descent: DescentMethod::Fixed {
                schedule: StepSchedule::Fixed { alpha: 0.2 },
            },
            max_iters: 50,
            grad_tol: 1e-8,
            compare_local: true,
        }
    }
}

/// `sgd`: repeated ε-SGD runs and the empirical check of the gap bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdRunConfig {
    pub problem: Problem,
    pub kernel: KernelSpec,
    pub sgd: SgdConfig,
    pub seeds: usize,
    pub seed: u64,
}

impl Default for SgdRunConfig {
    fn default() -> Self {
        Self {
            problem: Problem {
                field: "quadratic".into(),
                dim: 2,
                lower: -1.0,
                upper: 1.0,
            },
            kernel: KernelSpec {
                n: 32,
                ..KernelSpec::default()
            },
            sgd: SgdConfig::default(),
            seeds: 400,
            seed: 0,
        }
    }
}

/// `newton`: nonlocal Newton next to classical Newton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    pub problem: Problem,
    pub kernel: KernelSpec,
    pub polar: PolarSettings,
    pub x0: Vec<f64>,
    pub beta: BetaSchedule,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub compare_local: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            problem: Problem {
                field: "quartic".into(),
                ..Problem::default()
            },
            kernel: KernelSpec {
                n: 32,
                ..KernelSpec::default()
            },
            polar: PolarSettings::default(),
            x0: vec![0.3, 0.3],
            beta: BetaSchedule::Fixed { beta: 1.0 },
            max_iters: 12,
            grad_tol: 1e-10,
            compare_local: true,
        }
    }
}

macro_rules! plain_defaults {
    ($($t:ty),*) => {$(
        impl ConfigSchema for $t {
            fn defaults(_: &Value) -> Result<Self> {
                Ok(Self::default())
            }
        }
    )*};
}

plain_defaults!(
    GradCheckConfig,
    HessCheckConfig,
    DescendConfig,
    SgdRunConfig,
    NewtonConfig,
    PulseRunConfig
);

impl ConfigSchema for SweepConfig {
    /// Defaults follow the requested check.
    fn defaults(raw: &Value) -> Result<Self> {
        let check = match raw.get("check") {
            Some(v) => Check::deserialize(v).map_err(|e| match v.as_str() {
                Some(name) => Error::UnknownCheck(name.to_string()),
                None => Error::Config {
                    key: "check".into(),
                    message: e.to_string(),
                },
            })?,
            None => Check::GradientLocalization,
        };
        Ok(Self::for_check(check))
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Record of one run, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub workers: usize,
    pub version: String,
    pub wall_time_secs: f64,
    pub outputs: Vec<String>,
    pub passed: Option<bool>,
}
