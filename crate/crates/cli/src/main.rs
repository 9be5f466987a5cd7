//! `pickforge` command-line tool.
//!
//! Exit codes: 0 ok, 1 policy or smoke failure, 2 unsat, 3 I/O or schema
//! error, 64 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pickforge::{CalendarVersion, Version};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_UNSAT: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "pickforge",
    version,
    about = "Curate, release and smoke-test package picks"
)]
pub struct Cli {
    /// Repository index: a directory or an http(s) URL.
    #[arg(long, global = true, value_name = "PATH|URL")]
    pub index: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Fail when a release drops packages that were not deprecated first.
    #[arg(long, global = true)]
    pub strict_removals: bool,
    /// Where HTTP indexes are mirrored (default: $PICKFORGE_CACHE or the user cache dir).
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resolve one pick for a toolchain.
    Resolve(ResolveArgs),
    /// Assemble picks into a calendar-versioned lockfile.
    Release(ReleaseArgs),
    /// Compare two picks.
    Diff(DiffArgs),
    /// Show the step-by-step upgrade between two toolchains of a release.
    Upgrade(UpgradeArgs),
    /// Report what each maintainer must do for a release candidate.
    Coordinate(CoordinateArgs),
    /// Enforce compatibility policy.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Build and smoke-test a pick in a sandbox.
    Smoke(SmokeArgs),
    /// Print a standalone install script for a pick.
    Script(PickSelector),
}

#[derive(Debug, Args)]
pub struct RequestArgs {
    /// JSON file with mandatory, optional, overrides and include_dev.
    #[arg(long, value_name = "FILE")]
    pub request: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub mandatory: Vec<String>,
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub optional: Vec<String>,
    /// Force a version, e.g. `--override foo=1.2`.
    #[arg(long = "override", value_name = "NAME=VERSION", value_parser = parse_override)]
    pub overrides: Vec<(String, Version)>,
    /// Allow development snapshots.
    #[arg(long)]
    pub include_dev: bool,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub toolchain: Version,
    #[command(flatten)]
    pub request: RequestArgs,
    /// Write the pick here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReleaseArgs {
    /// Calendar version, e.g. 2022.01.0.
    #[arg(long = "version", value_name = "YYYY.MM.P")]
    pub release_version: CalendarVersion,
    /// Pick files to include; without any, picks are resolved from the request.
    #[arg(long = "pick", value_name = "FILE")]
    pub picks: Vec<PathBuf>,
    #[command(flatten)]
    pub request: RequestArgs,
    /// Toolchains to resolve for (default: every toolchain of the index).
    #[arg(long, value_delimiter = ',')]
    pub toolchains: Vec<Version>,
    /// Lockfile of the previous release.
    #[arg(long, value_name = "LOCKFILE")]
    pub previous: Option<PathBuf>,
    /// Re-ship previous picks for toolchains not covered by the new ones.
    #[arg(long)]
    pub carry_forward: bool,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    pub old: PathBuf,
    pub new: PathBuf,
    #[arg(long)]
    pub toolchain: Version,
    /// Toolchain of the pick in NEW (default: the same as --toolchain).
    #[arg(long)]
    pub to_toolchain: Option<Version>,
}

#[derive(Debug, Args)]
pub struct UpgradeArgs {
    #[arg(long, value_name = "LOCKFILE")]
    pub lockfile: PathBuf,
    #[arg(long)]
    pub from: Version,
    #[arg(long)]
    pub to: Version,
}

#[derive(Debug, Args)]
pub struct CoordinateArgs {
    /// Release candidate toolchain.
    #[arg(long)]
    pub rc: Version,
    /// Lockfile or single pick file to compare against.
    #[arg(long, value_name = "FILE")]
    pub reference: PathBuf,
    /// Pick of the reference lockfile to use (default: its newest).
    #[arg(long)]
    pub toolchain: Option<Version>,
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Check that releases span consecutive toolchains.
    Succession {
        /// Packages to check (default: all).
        #[arg(long = "package", value_name = "NAME")]
        packages: Vec<String>,
    },
    /// Check that a release only drops deprecated packages.
    Removals {
        #[arg(long, value_name = "LOCKFILE")]
        previous: PathBuf,
        #[arg(long, value_name = "LOCKFILE")]
        candidate: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PickSelector {
    #[arg(long, value_name = "LOCKFILE")]
    pub lockfile: PathBuf,
    #[arg(long)]
    pub toolchain: Version,
}

#[derive(Debug, Args)]
pub struct SmokeArgs {
    #[command(flatten)]
    pub pick: PickSelector,
    /// Empty or missing directory to build in.
    #[arg(long, value_name = "DIR")]
    pub sandbox: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
}

fn parse_override(text: &str) -> Result<(String, Version), String> {
    let (name, version) = text
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VERSION, got `{text}`"))?;
    let version = version.parse::<Version>().map_err(|e| e.to_string())?;
    Ok((name.to_string(), version))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match commands::run(&cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    };
    ExitCode::from(code)
}
