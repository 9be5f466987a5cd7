//! Curate mutually compatible package picks per toolchain version, bundle
//! them into calendar-versioned releases, check compatibility policy and
//! smoke-test the result.

pub mod buildrun;
pub mod index;
pub mod json;
pub mod policy;
pub mod release;
pub mod solver;
pub mod versioning;

pub use buildrun::{
    emit_install_script, install_plan, run_plan, InstallPlan, SmokeReport, StepStatus,
};
pub use index::{
    compatible_versions, load_repository, load_repository_with_cache, validate_repository,
    PackageManifest, Repository, Requirement, Source,
};
pub use policy::{
    check_removals, check_succession, coordinate, CoordinationReport, CoordinationStatus,
};
pub use release::{
    assemble_release, diff_picks, read_lockfile, upgrade_path, write_lockfile, PickDiff, Release,
};
pub use solver::{
    enumerate_best, resolve_pick, verify_pick, Pick, RequestFile, Resolution, SelectionRequest,
    SolveError, UnsatReport,
};
pub use versioning::{CalendarVersion, Constraint, Version};
