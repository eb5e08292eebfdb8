//! End-to-end orchestration: configuration, layout sampling, Monte Carlo
//! verification and run directories.

mod config;
mod monte_carlo;
mod pipeline;
mod sampling;

pub use config::{load_config, parse_config, preset, CatalogKind, ProblemConfig, PRESETS, REQUIRED_KEYS};
pub use monte_carlo::{evaluate_layouts, monte_carlo_evaluate, McReport, McSample, Statistic};
pub use pipeline::{
    export_design, gradient_checks, initial_design, master_stream, obtain_catalog, resume_optimize, run_catalog_build,
    run_fdcheck, run_optimize, run_rve_sample, run_verify, write_gradient_csv, write_report, DesignSource, RunContext,
    RunDir, RunSummary, CATALOG, CHECKPOINT, DESIGN_PGM, DESIGN_VTK, HISTORY, MANIFEST, MC_REPORT,
};
pub use sampling::{enumerate_layouts, sample_layouts};
