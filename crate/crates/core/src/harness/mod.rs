//! Scenario files, experiment runs, parameter sweeps and HOM synthesis
//! runs.

mod hom;
mod run;
mod scenario;
mod sweep;

pub use hom::{run_hom, HomRun, HomRunResult};
pub use run::{
    execute, prepare_arm, run_scenario, validate_scenario, write_outcome, PreparedArm, RunOutcome,
    Summary,
};
pub use scenario::{
    ArmConfig, CreepSettings, EmitterConfig, ExportSettings, MonitorSettings, Scenario,
    VisibilitySettings,
};
pub use sweep::{override_scenario, sweep, SweepTable};
