//! Experiment driver: configuration, Monte-Carlo simulation, theory runs,
//! parameter sweeps, the weight-error normality check and file output.
//!
//! Every random draw is keyed by the experiment seed, so a spec reproduces
//! its output files byte for byte regardless of thread count.

pub mod emit;
pub mod gaussianity;
pub mod simulate;
pub mod spec;
pub mod sweep;
pub mod theory_run;

pub use emit::{compare_curves, emit_gaussianity, emit_simulation, emit_sweep, emit_theory, read_column, Comparison};
pub use gaussianity::{gaussianity_check, histogram, normality_stats, GaussianityReport, Histogram, NormalityStats};
pub use simulate::{
    run_simulation, run_simulation_with_snapshots, shared_system, AlgoCurve, Manifest, RunResult, Snapshots, THREADS_ENV,
};
pub use spec::{steady_window, BankSpec, ExperimentSpec, SystemSpec, Tracking};
pub use sweep::{apply_axis, sweep, SweepAxis, SweepRow};
pub use theory_run::{run_theory, run_theory_with, theory_inputs, SteadyReport, TheoryCurve, TheoryResult};
