use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nonlocal", version, about, arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Nonlocal gradient against the analytic gradient and a Monte-Carlo estimate
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemFlags,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Nonlocal Hessian against the analytic Hessian
    HessCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemFlags,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Error of one convergence check over a range of scales
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Check name, e.g. gradient-localization
        #[arg(long)]
        check: Option<String>,
        #[arg(long)]
        field: Option<String>,
        /// Scale indices to sweep (repeatable)
        #[arg(long = "n")]
        n: Vec<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Nonlocal gradient descent next to classical gradient descent
    Descend {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemFlags,
    },
    /// Repeated ε-stochastic subgradient descent and its gap bound
    Sgd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemFlags,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Nonlocal Newton next to classical Newton
    Newton {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemFlags,
    },
    /// Translation estimation of a rectangular pulse
    Pulse {
        #[command(flatten)]
        common: Common,
        /// Scale indices to run (repeatable)
        #[arg(long = "n")]
        n: Vec<u32>,
    },
    /// The full acceptance suite
    Acceptance {
        #[command(flatten)]
        common: Common,
        /// Criteria to run (repeatable, 1 to 10); all when absent
        #[arg(long)]
        criterion: Vec<usize>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; machine parallelism when absent
    #[arg(long)]
    pub workers: Option<usize>,
    /// Dotted override `key=value`, applied after the file and the flags (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print less
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ProblemFlags {
    /// Catalog field name
    #[arg(long)]
    pub field: Option<String>,
    /// Kernel scale index
    #[arg(long)]
    pub n: Option<u32>,
}

impl ProblemFlags {
    pub fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        if let Some(f) = &self.field {
            o.push(format!("problem.field={}", json_string(f)));
        }
        if let Some(n) = self.n {
            o.push(format!("kernel.n={n}"));
        }
        o
    }
}

/// A JSON string literal, so that names such as `true` stay strings.
pub fn json_string(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

impl Cli {
    pub fn common(&self) -> &Common {
        match &self.command {
            Command::GradCheck { common, .. }
            | Command::HessCheck { common, .. }
            | Command::Sweep { common, .. }
            | Command::Descend { common, .. }
            | Command::Sgd { common, .. }
            | Command::Newton { common, .. }
            | Command::Pulse { common, .. }
            | Command::Acceptance { common, .. } => common,
        }
    }

    pub fn workers(&self) -> Option<usize> {
        self.common().workers
    }

    pub fn name(&self) -> &'static str {
        match self.command {
            Command::GradCheck { .. } => "grad-check",
            Command::HessCheck { .. } => "hess-check",
            Command::Sweep { .. } => "sweep",
            Command::Descend { .. } => "descend",
            Command::Sgd { .. } => "sgd",
            Command::Newton { .. } => "newton",
            Command::Pulse { .. } => "pulse",
            Command::Acceptance { .. } => "acceptance",
        }
    }
}
