//! The pulse-translation recovery experiment and the CSV/SVG writers shared
//! by all runs.

mod output;
mod pulse;

pub use output::{emit_csv, emit_plot_svg, emit_sweep_csv, parse_trace_csv, plot_svg, trace_csv, TraceTable};
pub use pulse::{
    holder_exponent_fit, pulse_gradient, pulse_objective, run_pulse_experiment, run_single, NormMode, PulseManifold,
    PulseRun, PulseRunConfig,
};
