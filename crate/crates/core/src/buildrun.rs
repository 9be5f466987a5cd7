//! Install plans, the smoke test kit and standalone install scripts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::index::Repository;
use crate::json::{to_canonical_compact, to_canonical_string};
use crate::solver::{verify_pick, Pick, Violation};
use crate::versioning::Version;

pub const LOG_DIR: &str = "logs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub name: String,
    pub version: Version,
    pub build_cmd: String,
    pub smoke_cmd: String,
    /// Selected packages this step depends on.
    pub depends: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstallPlan {
    pub toolchain: Version,
    pub steps: Vec<PlanStep>,
    pub plan_digest: String,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    toolchain: &'a Version,
    steps: &'a [PlanStep],
}

impl InstallPlan {
    pub fn new(toolchain: Version, steps: Vec<PlanStep>) -> Self {
        let digest = Sha256::digest(to_canonical_compact(&DigestInput {
            toolchain: &toolchain,
            steps: &steps,
        }));
        Self {
            toolchain,
            steps,
            plan_digest: hex::encode(digest),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("pick for toolchain {toolchain} is not valid ({} violations)", violations.len())]
    InvalidPick {
        toolchain: Version,
        violations: Vec<Violation>,
    },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

/// Orders the selected packages so every dependency is installed first.
/// Among packages that are ready at the same time, name order wins.
pub fn install_plan(r: &Repository, p: &Pick) -> Result<InstallPlan, PlanError> {
    let violations = verify_pick(r, p);
    if !violations.is_empty() {
        return Err(PlanError::InvalidPick {
            toolchain: p.toolchain.clone(),
            violations,
        });
    }
    let mut steps: BTreeMap<&str, PlanStep> = BTreeMap::new();
    for (name, version) in &p.selected {
        let m = r.manifest(name, version).expect("verified pick");
        let depends: BTreeSet<String> = m
            .depends
            .iter()
            .filter(|d| p.selected.contains_key(&d.name))
            .map(|d| d.name.clone())
            .collect();
        steps.insert(
            name,
            PlanStep {
                name: name.clone(),
                version: version.clone(),
                build_cmd: m.build_cmd.clone(),
                smoke_cmd: m.smoke_cmd.clone(),
                depends: depends.into_iter().collect(),
            },
        );
    }

    let mut waiting: BTreeMap<&str, usize> =
        steps.iter().map(|(n, s)| (*n, s.depends.len())).collect();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (name, step) in &steps {
        for d in &step.depends {
            dependents.entry(d.as_str()).or_default().push(name);
        }
    }
    let mut ready: BTreeSet<&str> = waiting
        .iter()
        .filter(|(_, &w)| w == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut order = Vec::with_capacity(steps.len());
    while let Some(name) = ready.pop_first() {
        waiting.remove(name);
        order.push(name);
        for &d in dependents.get(name).into_iter().flatten() {
            let w = waiting.get_mut(d).expect("not yet placed");
            *w -= 1;
            if *w == 0 {
                ready.insert(d);
            }
        }
    }
    if !waiting.is_empty() {
        return Err(PlanError::Cycle(find_cycle(&steps, &waiting)));
    }
    let ordered = order.into_iter().map(|n| steps[n].clone()).collect();
    Ok(InstallPlan::new(p.toolchain.clone(), ordered))
}

/// Every unplaced step still waits on another unplaced step, so walking
/// dependencies from any of them must revisit a step.
fn find_cycle(steps: &BTreeMap<&str, PlanStep>, unplaced: &BTreeMap<&str, usize>) -> Vec<String> {
    let mut path: Vec<&str> = Vec::new();
    let mut at = *unplaced.keys().next().expect("non-empty");
    while !path.contains(&at) {
        path.push(at);
        at = steps[at]
            .depends
            .iter()
            .map(String::as_str)
            .find(|d| unplaced.contains_key(d))
            .expect("unplaced step has an unplaced dependency");
    }
    let start = path.iter().position(|n| *n == at).expect("revisited");
    let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
    let smallest = (0..cycle.len())
        .min_by_key(|&i| &cycle[i])
        .expect("non-empty");
    cycle.rotate_left(smallest);
    cycle
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    BuildFailed,
    SmokeFailed,
    Passed,
    Skipped,
}

impl StepStatus {
    /// Dependents may only be built on top of a successful build.
    fn unblocks_dependents(self) -> bool {
        matches!(self, StepStatus::Passed | StepStatus::SmokeFailed)
    }

    fn label(self) -> &'static str {
        match self {
            StepStatus::BuildFailed => "build-failed",
            StepStatus::SmokeFailed => "smoke-failed",
            StepStatus::Passed => "passed",
            StepStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub name: String,
    pub version: Version,
    pub status: StepStatus,
    pub build_exit: Option<i32>,
    pub smoke_exit: Option<i32>,
    /// Relative to the sandbox.
    pub log: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmokeReport {
    pub toolchain: Version,
    pub plan_digest: String,
    pub steps: Vec<StepReport>,
    pub passed: bool,
}

impl SmokeReport {
    pub fn count(&self, status: StepStatus) -> usize {
        self.steps.iter().filter(|s| s.status == status).count()
    }

    pub fn to_json(&self) -> String {
        to_canonical_string(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "smoke test for toolchain {}: {} ({} passed, {} build failed, {} smoke failed, {} skipped)",
            self.toolchain,
            if self.passed { "PASS" } else { "FAIL" },
            self.count(StepStatus::Passed),
            self.count(StepStatus::BuildFailed),
            self.count(StepStatus::SmokeFailed),
            self.count(StepStatus::Skipped),
        );
        for s in &self.steps {
            let _ = write!(out, "  {:<13} {} {}", s.status.label(), s.name, s.version);
            match s.status {
                StepStatus::BuildFailed => {
                    let _ = write!(out, " (build exit {}", s.build_exit.unwrap_or(-1));
                }
                StepStatus::SmokeFailed => {
                    let _ = write!(out, " (smoke exit {}", s.smoke_exit.unwrap_or(-1));
                }
                _ => {}
            }
            if matches!(s.status, StepStatus::BuildFailed | StepStatus::SmokeFailed) {
                let _ = write!(out, ", see {})", s.log.as_deref().unwrap_or("-"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("max_parallel must be at least 1")]
    NoWorkers,
    #[error("sandbox {0} is not an empty directory")]
    NotEmpty(PathBuf),
    #[error("sandbox {path} is not writable: {source}")]
    Sandbox {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

enum Slot {
    Pending,
    Running,
    Done(StepReport),
}

struct Board {
    slots: Vec<Slot>,
    index: BTreeMap<String, usize>,
}

impl Board {
    fn status(&self, i: usize) -> Option<StepStatus> {
        match &self.slots[i] {
            Slot::Done(r) => Some(r.status),
            _ => None,
        }
    }

    /// Marks blocked steps skipped and returns the first runnable step in
    /// plan order.
    fn next(&mut self, plan: &InstallPlan) -> Option<usize> {
        let mut runnable = None;
        for i in 0..self.slots.len() {
            if !matches!(self.slots[i], Slot::Pending) {
                continue;
            }
            let deps: Vec<Option<StepStatus>> = plan.steps[i]
                .depends
                .iter()
                .map(|d| self.status(self.index[d]))
                .collect();
            if deps
                .iter()
                .any(|s| matches!(s, Some(s) if !s.unblocks_dependents()))
            {
                let step = &plan.steps[i];
                self.slots[i] = Slot::Done(StepReport {
                    name: step.name.clone(),
                    version: step.version.clone(),
                    status: StepStatus::Skipped,
                    build_exit: None,
                    smoke_exit: None,
                    log: None,
                });
            } else if runnable.is_none() && deps.iter().all(Option::is_some) {
                runnable = Some(i);
            }
        }
        runnable
    }

    fn finished(&self) -> bool {
        self.slots.iter().all(|s| matches!(s, Slot::Done(_)))
    }
}

/// Builds and smoke-tests every step inside `sandbox`, running up to
/// `max_parallel` steps at once. A failed build skips everything that
/// depends on it; a failed smoke test does not.
pub fn run_plan(
    plan: &InstallPlan,
    sandbox: &Path,
    max_parallel: usize,
) -> Result<SmokeReport, RunError> {
    if max_parallel == 0 {
        return Err(RunError::NoWorkers);
    }
    prepare_sandbox(sandbox)?;

    let board = Mutex::new(Board {
        slots: plan.steps.iter().map(|_| Slot::Pending).collect(),
        index: plan
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect(),
    });
    let wake = Condvar::new();
    let workers = max_parallel.min(plan.steps.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut guard = board.lock().expect("board lock");
                loop {
                    let next = guard.next(plan);
                    if guard.finished() {
                        wake.notify_all();
                        return;
                    }
                    match next {
                        Some(i) => {
                            guard.slots[i] = Slot::Running;
                            drop(guard);
                            let report = run_step(&plan.steps[i], &plan.toolchain, sandbox);
                            guard = board.lock().expect("board lock");
                            guard.slots[i] = Slot::Done(report);
                            wake.notify_all();
                        }
                        None => guard = wake.wait(guard).expect("board lock"),
                    }
                }
            });
        }
    });

    let steps: Vec<StepReport> = board
        .into_inner()
        .expect("board lock")
        .slots
        .into_iter()
        .map(|s| match s {
            Slot::Done(r) => r,
            _ => unreachable!("all steps finish"),
        })
        .collect();
    Ok(SmokeReport {
        toolchain: plan.toolchain.clone(),
        plan_digest: plan.plan_digest.clone(),
        passed: steps.iter().all(|s| s.status == StepStatus::Passed),
        steps,
    })
}

fn prepare_sandbox(sandbox: &Path) -> Result<(), RunError> {
    let wrap = |source| RunError::Sandbox {
        path: sandbox.to_path_buf(),
        source,
    };
    if sandbox.exists() {
        if !sandbox.is_dir() || fs::read_dir(sandbox).map_err(wrap)?.next().is_some() {
            return Err(RunError::NotEmpty(sandbox.to_path_buf()));
        }
    } else {
        fs::create_dir_all(sandbox).map_err(wrap)?;
    }
    fs::create_dir(sandbox.join(LOG_DIR)).map_err(wrap)
}

fn run_step(step: &PlanStep, toolchain: &Version, sandbox: &Path) -> StepReport {
    let log_rel = format!("{LOG_DIR}/{}-{}.log", step.name, step.version);
    let mut report = StepReport {
        name: step.name.clone(),
        version: step.version.clone(),
        status: StepStatus::BuildFailed,
        build_exit: None,
        smoke_exit: None,
        log: Some(log_rel.clone()),
    };
    let mut log = File::create(sandbox.join(&log_rel)).ok();
    let build = run_command(&step.build_cmd, step, toolchain, sandbox, log.as_mut());
    report.build_exit = Some(build);
    if build != 0 {
        return report;
    }
    let smoke = run_command(&step.smoke_cmd, step, toolchain, sandbox, log.as_mut());
    report.smoke_exit = Some(smoke);
    report.status = if smoke == 0 {
        StepStatus::Passed
    } else {
        StepStatus::SmokeFailed
    };
    report
}

/// Exit code of `sh -c cmd`, or -1 when it could not be started or was
/// killed by a signal.
fn run_command(
    cmd: &str,
    step: &PlanStep,
    toolchain: &Version,
    sandbox: &Path,
    log: Option<&mut File>,
) -> i32 {
    let mut command = Command::new("sh");
    command
        .arg("-c")
        .arg(cmd)
        .current_dir(sandbox)
        .env("PKG_NAME", &step.name)
        .env("PKG_VERSION", step.version.to_string())
        .env("TOOLCHAIN", toolchain.to_string())
        .stdin(Stdio::null());
    match log {
        Some(file) => {
            let _ = writeln!(file, "$ {cmd}");
            let _ = file.flush();
            match (file.try_clone(), file.try_clone()) {
                (Ok(out), Ok(err)) => {
                    command.stdout(out).stderr(err);
                }
                _ => {
                    command.stdout(Stdio::null()).stderr(Stdio::null());
                }
            }
        }
        None => {
            command.stdout(Stdio::null()).stderr(Stdio::null());
        }
    }
    match command.status() {
        Ok(status) => status.code().unwrap_or(-1),
        Err(_) => -1,
    }
}

fn sh_quote(text: &str) -> String {
    format!("'{}'", text.replace('\'', r"'\''"))
}

/// A POSIX shell script running the plan sequentially, stopping at the
/// first failing command.
pub fn emit_install_script(plan: &InstallPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#!/bin/sh");
    let _ = writeln!(
        out,
        "# Install plan for toolchain {} ({} steps)",
        plan.toolchain,
        plan.steps.len()
    );
    let _ = writeln!(out, "# plan digest: {}", plan.plan_digest);
    let total = plan.steps.len();
    for (i, step) in plan.steps.iter().enumerate() {
        let env = format!(
            "PKG_NAME={} PKG_VERSION={} TOOLCHAIN={}",
            sh_quote(&step.name),
            sh_quote(&step.version.to_string()),
            sh_quote(&plan.toolchain.to_string())
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "echo {}",
            sh_quote(&format!(
                "==> [{}/{total}] {} {}",
                i + 1,
                step.name,
                step.version
            ))
        );
        let _ = writeln!(out, "{env} sh -c {} || exit 1", sh_quote(&step.build_cmd));
        let _ = writeln!(out, "{env} sh -c {} || exit 1", sh_quote(&step.smoke_cmd));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{PackageManifest, Requirement};
    use crate::versioning::Constraint;

    fn v(s: &str) -> Version {
        s.parse().unwrap()
    }

    fn repo(edges: &[(&str, &str)], names: &[&str]) -> (Repository, Pick) {
        let mut r = Repository::new(vec![v("8.15")]);
        for n in names {
            let mut m = PackageManifest::new(*n, v("1.0"), Constraint::Any);
            for (from, to) in edges {
                if from == n {
                    m.depends.push(Requirement::new(*to, Constraint::Any));
                }
            }
            r.insert(m);
        }
        let mut p = Pick::empty(v("8.15"));
        p.selected = names.iter().map(|n| (n.to_string(), v("1.0"))).collect();
        (r, p)
    }

    fn order(plan: &InstallPlan) -> Vec<&str> {
        plan.steps.iter().map(|s| s.name.as_str()).collect()
    }

    #[test]
    fn dependencies_come_first() {
        let (r, p) = repo(&[("a", "b")], &["a", "b"]);
        assert_eq!(order(&install_plan(&r, &p).unwrap()), ["b", "a"]);
        let (r, p) = repo(&[], &["b", "a"]);
        assert_eq!(order(&install_plan(&r, &p).unwrap()), ["a", "b"]);
    }

    #[test]
    fn ready_steps_follow_name_order() {
        let (r, p) = repo(&[("a", "z"), ("m", "b")], &["a", "b", "m", "z"]);
        assert_eq!(order(&install_plan(&r, &p).unwrap()), ["b", "m", "z", "a"]);
    }

    #[test]
    fn cycles_are_reported_from_the_smallest_name() {
        let (r, p) = repo(&[("a", "b"), ("b", "a")], &["a", "b"]);
        assert_eq!(
            install_plan(&r, &p).unwrap_err(),
            PlanError::Cycle(vec!["a".into(), "b".into()])
        );
        let (r, p) = repo(
            &[("a", "d"), ("d", "c"), ("c", "b"), ("b", "d")],
            &["a", "b", "c", "d"],
        );
        assert_eq!(
            install_plan(&r, &p).unwrap_err(),
            PlanError::Cycle(vec!["b".into(), "d".into(), "c".into()])
        );
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let (r, p) = repo(&[("a", "b")], &["a", "b"]);
        let one = install_plan(&r, &p).unwrap();
        assert_eq!(one.plan_digest, install_plan(&r, &p).unwrap().plan_digest);
        assert_eq!(one.plan_digest.len(), 64);
        let mut changed = one.steps.clone();
        changed[0].build_cmd = "make".into();
        assert_ne!(
            InstallPlan::new(v("8.15"), changed).plan_digest,
            one.plan_digest
        );
    }

    #[test]
    fn invalid_picks_are_rejected() {
        let (r, mut p) = repo(&[("a", "b")], &["a", "b"]);
        p.selected.remove("b");
        assert!(matches!(
            install_plan(&r, &p),
            Err(PlanError::InvalidPick { .. })
        ));
    }

    fn plan_with(cmds: &[(&str, &str, &str, &[&str])]) -> InstallPlan {
        let steps = cmds
            .iter()
            .map(|(name, build, smoke, deps)| PlanStep {
                name: name.to_string(),
                version: v("1.0"),
                build_cmd: build.to_string(),
                smoke_cmd: smoke.to_string(),
                depends: deps.iter().map(|d| d.to_string()).collect(),
            })
            .collect();
        InstallPlan::new(v("8.15"), steps)
    }

    fn statuses(report: &SmokeReport) -> Vec<StepStatus> {
        report.steps.iter().map(|s| s.status).collect()
    }

    #[test]
    fn all_true_passes() {
        let dir = tempfile::tempdir().unwrap();
        let plan = plan_with(&[("a", "true", "true", &[]), ("b", "true", "true", &["a"])]);
        let report = run_plan(&plan, &dir.path().join("box"), 2).unwrap();
        assert!(report.passed);
        assert_eq!(statuses(&report), [StepStatus::Passed, StepStatus::Passed]);
        assert!(dir.path().join("box/logs/a-1.0.log").exists());
    }

    #[test]
    fn build_failure_skips_dependents_smoke_failure_does_not() {
        let plan = plan_with(&[
            ("b", "false", "true", &[]),
            ("c", "true", "exit 3", &[]),
            ("a", "true", "true", &["b"]),
            ("d", "true", "true", &["c"]),
            ("e", "true", "true", &["a"]),
        ]);
        for jobs in [1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let report = run_plan(&plan, dir.path(), jobs).unwrap();
            assert!(!report.passed);
            assert_eq!(
                statuses(&report),
                [
                    StepStatus::BuildFailed,
                    StepStatus::SmokeFailed,
                    StepStatus::Skipped,
                    StepStatus::Passed,
                    StepStatus::Skipped
                ]
            );
            assert_eq!(report.steps[0].build_exit, Some(1));
            assert_eq!(report.steps[1].smoke_exit, Some(3));
            assert_eq!(report.steps[2].log, None);
        }
    }

    #[test]
    fn commands_see_the_step_environment() {
        let dir = tempfile::tempdir().unwrap();
        let plan = plan_with(&[(
            "a",
            r#"test "$PKG_NAME-$PKG_VERSION-$TOOLCHAIN" = a-1.0-8.15 && touch built"#,
            "test -f built",
            &[],
        )]);
        let report = run_plan(&plan, dir.path(), 1).unwrap();
        assert!(report.passed, "{}", report.to_text());
    }

    #[test]
    fn sandbox_must_be_empty() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("junk"), "").unwrap();
        let plan = plan_with(&[]);
        assert!(matches!(
            run_plan(&plan, dir.path(), 1),
            Err(RunError::NotEmpty(_))
        ));
        assert!(matches!(
            run_plan(&plan, dir.path(), 0),
            Err(RunError::NoWorkers)
        ));
    }

    #[test]
    fn scripts() {
        let empty = emit_install_script(&plan_with(&[]));
        assert!(empty.starts_with("#!/bin/sh\n"));
        assert!(!empty.contains("echo"));

        let plan = plan_with(&[
            ("b", "true", "true", &[]),
            ("a", "echo 'hi'", "true", &["b"]),
        ]);
        let script = emit_install_script(&plan);
        assert_eq!(script, emit_install_script(&plan));
        let first = script.find("[1/2] b 1.0").unwrap();
        let second = script.find("[2/2] a 1.0").unwrap();
        assert!(first < second);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("install.sh");
        fs::write(&path, &script).unwrap();
        let out = Command::new("sh")
            .arg(&path)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        assert_eq!(
            String::from_utf8_lossy(&out.stdout),
            "==> [1/2] b 1.0\n==> [2/2] a 1.0\nhi\n"
        );

        let failing = emit_install_script(&plan_with(&[
            ("a", "false", "true", &[]),
            ("b", "true", "true", &[]),
        ]));
        fs::write(&path, failing).unwrap();
        let out = Command::new("sh").arg(&path).output().unwrap();
        assert_eq!(out.status.code(), Some(1));
        assert_eq!(String::from_utf8_lossy(&out.stdout), "==> [1/2] a 1.0\n");
    }
}
