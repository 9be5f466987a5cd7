use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pickforge::index::default_cache_dir;
use pickforge::json::to_canonical_string;
use pickforge::policy::{render_coordination_markdown, SuccessionReport};
use pickforge::release::{AssembleOptions, UpgradeReport};
use pickforge::{
    assemble_release, check_removals, check_succession, coordinate, diff_picks,
    emit_install_script, install_plan, load_repository_with_cache, read_lockfile, resolve_pick,
    run_plan, upgrade_path, write_lockfile, Pick, PickDiff, Release, Repository, RequestFile,
    Resolution, SelectionRequest, SolveError, Source, Version,
};
use serde::Serialize;

use crate::{
    Cli, Command, CoordinateArgs, DiffArgs, Format, PickSelector, PolicyCommand, ReleaseArgs,
    RequestArgs, ResolveArgs, SmokeArgs, UpgradeArgs, EXIT_FAILURE, EXIT_IO, EXIT_OK, EXIT_UNSAT,
    EXIT_USAGE,
};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn io_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_IO,
        message: message.into(),
    }
}

fn usage_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Resolve(args) => resolve(cli, args),
        Command::Release(args) => release(cli, args),
        Command::Diff(args) => diff(cli, args),
        Command::Upgrade(args) => upgrade(cli, args),
        Command::Coordinate(args) => coordinate_cmd(cli, args),
        Command::Policy(PolicyCommand::Succession { packages }) => succession(cli, packages),
        Command::Policy(PolicyCommand::Removals {
            previous,
            candidate,
        }) => removals(cli, previous, candidate),
        Command::Smoke(args) => smoke(cli, args),
        Command::Script(args) => script(cli, args),
    }
}

fn repository(cli: &Cli) -> Result<Repository, Failure> {
    let index = cli
        .index
        .as_deref()
        .ok_or_else(|| usage_failure("this command needs --index"))?;
    let cache = cli.cache_dir.clone().unwrap_or_else(default_cache_dir);
    load_repository_with_cache(&Source::parse(index), &cache)
        .map(|(r, _)| r)
        .map_err(|e| io_failure(e.to_string()))
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| io_failure(format!("cannot read {}: {e}", path.display())))
}

fn load_lockfile(path: &Path) -> Result<Release, Failure> {
    read_lockfile(&read_file(path)?).map_err(|e| io_failure(format!("{}: {e}", path.display())))
}

fn load_pick(path: &Path) -> Result<Pick, Failure> {
    serde_json::from_slice(&read_file(path)?)
        .map_err(|e| io_failure(format!("{}: invalid pick: {e}", path.display())))
}

fn pick_from(release: &Release, toolchain: &Version, path: &Path) -> Result<Pick, Failure> {
    release.pick_for(toolchain).cloned().ok_or_else(|| {
        io_failure(format!(
            "{} has no pick for toolchain {toolchain}",
            path.display()
        ))
    })
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| io_failure(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render<T: Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) -> String {
    match cli.format {
        Format::Json => to_canonical_string(value),
        Format::Text => text(),
    }
}

fn request_file(args: &RequestArgs) -> Result<RequestFile, Failure> {
    let mut request = match &args.request {
        Some(path) => serde_json::from_slice(&read_file(path)?)
            .map_err(|e| io_failure(format!("{}: invalid request: {e}", path.display())))?,
        None => RequestFile::default(),
    };
    request.mandatory.extend(args.mandatory.iter().cloned());
    request.optional.extend(args.optional.iter().cloned());
    request.overrides.extend(args.overrides.iter().cloned());
    request.include_dev |= args.include_dev;
    Ok(request)
}

fn solve(r: &Repository, req: &SelectionRequest) -> Result<Resolution, Failure> {
    resolve_pick(r, req).map_err(|e| match e {
        SolveError::OverlappingRequest(_) | SolveError::OverrideNotRequested(_) => {
            usage_failure(e.to_string())
        }
        other => io_failure(other.to_string()),
    })
}

fn pick_text(p: &Pick) -> String {
    let mut out = format!(
        "toolchain {}: {} selected, {} excluded\n",
        p.toolchain,
        p.selected.len(),
        p.excluded.len()
    );
    for (name, version) in &p.selected {
        let _ = writeln!(out, "  {name} {version}");
    }
    if !p.excluded.is_empty() {
        out.push_str("excluded:\n");
        for (name, reason) in &p.excluded {
            let _ = writeln!(out, "  {name}: {reason}");
        }
    }
    out
}

fn resolve(cli: &Cli, args: &ResolveArgs) -> Outcome {
    let r = repository(cli)?;
    let req = request_file(&args.request)?.for_toolchain(args.toolchain.clone());
    match solve(&r, &req)? {
        Resolution::Pick(p) => {
            emit(&render(cli, &p, || pick_text(&p)), args.output.as_deref())?;
            Ok(EXIT_OK)
        }
        Resolution::Unsat(report) => {
            let text = render(cli, &report, || {
                let mut out = format!("toolchain {}: unsat\n", args.toolchain);
                let names: Vec<&str> = report.culprits.iter().map(String::as_str).collect();
                let _ = writeln!(out, "culprits: {}", names.join(", "));
                for line in &report.narrative {
                    let _ = writeln!(out, "  {line}");
                }
                out
            });
            print!("{text}");
            Ok(EXIT_UNSAT)
        }
    }
}

fn release(cli: &Cli, args: &ReleaseArgs) -> Outcome {
    let r = repository(cli)?;
    let picks = if args.picks.is_empty() {
        let request = request_file(&args.request)?;
        let toolchains = if args.toolchains.is_empty() {
            r.toolchains.clone()
        } else {
            args.toolchains.clone()
        };
        let mut picks = Vec::new();
        for tc in toolchains {
            match solve(&r, &request.for_toolchain(tc.clone()))? {
                Resolution::Pick(p) => picks.push(p),
                Resolution::Unsat(report) => {
                    eprintln!("toolchain {tc}: unsat");
                    for line in &report.narrative {
                        eprintln!("  {line}");
                    }
                    return Ok(EXIT_UNSAT);
                }
            }
        }
        picks
    } else {
        args.picks
            .iter()
            .map(|p| load_pick(p))
            .collect::<Result<_, _>>()?
    };
    let previous = args.previous.as_deref().map(load_lockfile).transpose()?;
    let options = AssembleOptions {
        carry_forward: args.carry_forward,
    };
    let (release, warnings) =
        assemble_release(args.release_version, picks, previous.as_ref(), &r, options)
            .map_err(|e| io_failure(e.to_string()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if cli.strict_removals && !warnings.is_empty() {
        return Ok(EXIT_FAILURE);
    }
    let lockfile = write_lockfile(&release);
    emit(&lockfile, args.output.as_deref())?;
    if let Some(path) = &args.output {
        let toolchains: Vec<String> = release.toolchains().map(|t| t.to_string()).collect();
        let summary = serde_json::json!({
            "version": release.version,
            "toolchains": toolchains,
            "output": path.display().to_string(),
        });
        print!(
            "{}",
            render(cli, &summary, || format!(
                "wrote release {} ({} picks: {}) to {}\n",
                release.version,
                release.picks.len(),
                toolchains.join(", "),
                path.display()
            ))
        );
    }
    Ok(EXIT_OK)
}

fn diff_text(old: &Pick, new: &Pick, d: &PickDiff) -> String {
    let mut out = format!("{} -> {}\n", old.toolchain, new.toolchain);
    for name in &d.added {
        let _ = writeln!(out, "  + {name} {}", new.selected[name]);
    }
    for name in &d.removed {
        let _ = writeln!(out, "  - {name} {}", old.selected[name]);
    }
    for (name, c) in &d.upgraded {
        let _ = writeln!(out, "  ^ {name} {} -> {}", c.from, c.to);
    }
    for (name, c) in &d.downgraded {
        let _ = writeln!(out, "  v {name} {} -> {}", c.from, c.to);
    }
    let _ = writeln!(out, "  {} unchanged", d.unchanged.len());
    out
}

fn diff(cli: &Cli, args: &DiffArgs) -> Outcome {
    let old = pick_from(&load_lockfile(&args.old)?, &args.toolchain, &args.old)?;
    let to = args.to_toolchain.as_ref().unwrap_or(&args.toolchain);
    let new = pick_from(&load_lockfile(&args.new)?, to, &args.new)?;
    let d = diff_picks(&old, &new);
    print!("{}", render(cli, &d, || diff_text(&old, &new, &d)));
    for name in &d.removed {
        eprintln!("warning: {name} is removed");
    }
    Ok(if cli.strict_removals && !d.is_monotone() {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

fn upgrade_text(release: &Release, report: &UpgradeReport) -> String {
    let (Some(first), Some(last)) = (report.steps.first(), report.steps.last()) else {
        return String::new();
    };
    let mut out = format!(
        "upgrade {} -> {}: {} steps, {}\n",
        first.from,
        last.to,
        report.steps.len(),
        if report.monotone {
            "monotone"
        } else {
            "not monotone"
        }
    );
    for step in &report.steps {
        let old = release
            .pick_for(&step.from)
            .expect("step endpoints are picks");
        let new = release
            .pick_for(&step.to)
            .expect("step endpoints are picks");
        out.push_str(&diff_text(old, new, &step.diff));
    }
    out
}

fn upgrade(cli: &Cli, args: &UpgradeArgs) -> Outcome {
    let release = load_lockfile(&args.lockfile)?;
    let report =
        upgrade_path(&release, &args.from, &args.to).map_err(|e| io_failure(e.to_string()))?;
    print!(
        "{}",
        render(cli, &report, || upgrade_text(&release, &report))
    );
    for step in &report.steps {
        for name in &step.diff.removed {
            eprintln!(
                "warning: {name} is removed between {} and {}",
                step.from, step.to
            );
        }
    }
    Ok(if cli.strict_removals && !report.monotone {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

fn reference_pick(args: &CoordinateArgs) -> Result<Pick, Failure> {
    let bytes = read_file(&args.reference)?;
    let release = match read_lockfile(&bytes) {
        Ok(release) => release,
        Err(lock_err) => {
            return serde_json::from_slice::<Pick>(&bytes)
                .map_err(|_| io_failure(format!("{}: {lock_err}", args.reference.display())))
        }
    };
    match &args.toolchain {
        Some(tc) => pick_from(&release, tc, &args.reference),
        None => release
            .picks
            .iter()
            .rev()
            .find(|p| p.toolchain < args.rc)
            .cloned()
            .ok_or_else(|| {
                io_failure(format!(
                    "{} has no pick older than {}",
                    args.reference.display(),
                    args.rc
                ))
            }),
    }
}

fn coordinate_cmd(cli: &Cli, args: &CoordinateArgs) -> Outcome {
    let r = repository(cli)?;
    let reference = reference_pick(args)?;
    let report = coordinate(&r, &args.rc, &reference).map_err(|e| io_failure(e.to_string()))?;
    print!(
        "{}",
        render(cli, &report, || render_coordination_markdown(&report))
    );
    Ok(EXIT_OK)
}

fn succession(cli: &Cli, packages: &[String]) -> Outcome {
    let r = repository(cli)?;
    let names: Vec<String> = if packages.is_empty() {
        r.packages.keys().cloned().collect()
    } else {
        packages.to_vec()
    };
    let reports: Vec<SuccessionReport> = names
        .iter()
        .map(|n| check_succession(&r, n).map_err(|e| io_failure(e.to_string())))
        .collect::<Result<_, _>>()?;
    let failing = reports.iter().filter(|rep| !rep.is_compliant()).count();
    print!(
        "{}",
        render(cli, &reports, || {
            let mut out = String::new();
            for rep in &reports {
                for pair in &rep.pairs {
                    let verdict = match (&pair.witness, pair.violation) {
                        (Some(w), _) => format!("ok, {w} supports both"),
                        (None, true) => "VIOLATION, no single release supports both".to_string(),
                        (None, false) => "not released on both sides".to_string(),
                    };
                    let _ = writeln!(
                        out,
                        "{} {} -> {}: {verdict}",
                        rep.package, pair.from, pair.to
                    );
                }
            }
            let _ = writeln!(
                out,
                "{failing} of {} packages violate the succession rule",
                reports.len()
            );
            out
        })
    );
    Ok(if failing > 0 { EXIT_FAILURE } else { EXIT_OK })
}

fn removals(cli: &Cli, previous: &Path, candidate: &Path) -> Outcome {
    let r = repository(cli)?;
    let prev = load_lockfile(previous)?;
    let cand = load_lockfile(candidate)?;
    let violations = check_removals(&prev, &cand, &r).map_err(|e| io_failure(e.to_string()))?;
    print!(
        "{}",
        render(cli, &violations, || {
            let mut out = String::new();
            for v in &violations {
                let _ = writeln!(out, "{v}");
            }
            let _ = writeln!(out, "{} removal violations", violations.len());
            out
        })
    );
    Ok(if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn plan_for(cli: &Cli, sel: &PickSelector) -> Result<pickforge::InstallPlan, Failure> {
    let r = repository(cli)?;
    let pick = pick_from(
        &load_lockfile(&sel.lockfile)?,
        &sel.toolchain,
        &sel.lockfile,
    )?;
    install_plan(&r, &pick).map_err(|e| io_failure(e.to_string()))
}

fn smoke(cli: &Cli, args: &SmokeArgs) -> Outcome {
    let plan = plan_for(cli, &args.pick)?;
    let report = run_plan(&plan, &args.sandbox, usize::from(args.jobs))
        .map_err(|e| io_failure(e.to_string()))?;
    print!("{}", render(cli, &report, || report.to_text()));
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}

fn script(cli: &Cli, args: &PickSelector) -> Outcome {
    let plan = plan_for(cli, args)?;
    print!("{}", emit_install_script(&plan));
    Ok(EXIT_OK)
}
