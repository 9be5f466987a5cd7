//! Package pick resolution.
//!
//! A pick chooses at most one version per package for one toolchain such
//! that every dependency of a selected version is selected at a satisfying
//! version and no declared conflict holds between two selected versions.
//! Only requested packages and whatever they transitively depend on are
//! ever selected.
//!
//! Among all valid picks, [`resolve_pick`] returns the best one under a
//! lexicographic objective:
//!
//! 1. every mandatory package is selected, otherwise resolution is unsat;
//! 2. as many optional packages as possible are selected;
//! 3. ties prefer selecting optional packages with earlier names;
//! 4. remaining ties maximize each package's version, visiting packages in
//!    name order (absence ranks below every version).
//!
//! [`enumerate_best`] computes the same optimum by exhaustive enumeration
//! and serves as the test oracle.

mod enumerate;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{validate_repository, Issue, PackageManifest, Repository};
use crate::versioning::Version;

pub use enumerate::{enumerate_best, DEFAULT_ENUMERATION_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRequest {
    pub toolchain: Version,
    pub mandatory: BTreeSet<String>,
    pub optional: BTreeSet<String>,
    /// Forced versions.
    pub overrides: BTreeMap<String, Version>,
    pub include_dev: bool,
}

impl SelectionRequest {
    pub fn new(toolchain: Version) -> Self {
        Self {
            toolchain,
            mandatory: BTreeSet::new(),
            optional: BTreeSet::new(),
            overrides: BTreeMap::new(),
            include_dev: false,
        }
    }

    pub fn mandatory<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.mandatory.extend(names.into_iter().map(Into::into));
        self
    }

    pub fn optional<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.optional.extend(names.into_iter().map(Into::into));
        self
    }

    pub fn pin(mut self, name: impl Into<String>, version: Version) -> Self {
        self.overrides.insert(name.into(), version);
        self
    }

    pub fn with_dev(mut self, include_dev: bool) -> Self {
        self.include_dev = include_dev;
        self
    }

    fn is_requested(&self, name: &str) -> bool {
        self.mandatory.contains(name) || self.optional.contains(name)
    }
}

/// Toolchain-independent part of a [`SelectionRequest`], as stored on disk
/// next to a repository.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestFile {
    #[serde(default)]
    pub mandatory: BTreeSet<String>,
    #[serde(default)]
    pub optional: BTreeSet<String>,
    #[serde(default)]
    pub overrides: BTreeMap<String, Version>,
    #[serde(default)]
    pub include_dev: bool,
}

impl RequestFile {
    pub fn for_toolchain(&self, toolchain: Version) -> SelectionRequest {
        SelectionRequest {
            toolchain,
            mandatory: self.mandatory.clone(),
            optional: self.optional.clone(),
            overrides: self.overrides.clone(),
            include_dev: self.include_dev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pick {
    pub toolchain: Version,
    pub selected: BTreeMap<String, Version>,
    /// Optional packages left out, with the reason.
    pub excluded: BTreeMap<String, String>,
}

impl Pick {
    pub fn empty(toolchain: Version) -> Self {
        Self {
            toolchain,
            selected: BTreeMap::new(),
            excluded: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsatReport {
    /// Minimal set of mandatory packages that cannot be selected together.
    pub culprits: BTreeSet<String>,
    pub narrative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Pick(Pick),
    Unsat(UnsatReport),
}

impl Resolution {
    pub fn pick(&self) -> Option<&Pick> {
        match self {
            Resolution::Pick(p) => Some(p),
            Resolution::Unsat(_) => None,
        }
    }

    pub fn into_pick(self) -> Option<Pick> {
        match self {
            Resolution::Pick(p) => Some(p),
            Resolution::Unsat(_) => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("repository is invalid: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidRepository(Vec<Issue>),
    #[error("unknown package {0}")]
    UnknownPackage(String),
    #[error("package {0} is both mandatory and optional")]
    OverlappingRequest(String),
    #[error("override targets {0}, which is neither mandatory nor optional")]
    OverrideNotRequested(String),
    #[error("override pins {name} {version}, which does not exist")]
    UnknownVersion { name: String, version: Version },
    #[error("override pins {name} {version}, which does not support toolchain {toolchain}")]
    OverrideIncompatible {
        name: String,
        version: Version,
        toolchain: Version,
    },
    #[error("assignment space of {space} exceeds the enumeration limit {limit}")]
    SpaceExceeded { space: u128, limit: u128 },
}

fn check_request(r: &Repository, req: &SelectionRequest) -> Result<(), SolveError> {
    let issues = validate_repository(r);
    if !issues.is_empty() {
        return Err(SolveError::InvalidRepository(issues));
    }
    for name in req.mandatory.iter().chain(&req.optional) {
        if !r.contains(name) {
            return Err(SolveError::UnknownPackage(name.clone()));
        }
    }
    if let Some(name) = req.mandatory.intersection(&req.optional).next() {
        return Err(SolveError::OverlappingRequest(name.clone()));
    }
    for (name, version) in &req.overrides {
        if !r.contains(name) {
            return Err(SolveError::UnknownPackage(name.clone()));
        }
        if !req.is_requested(name) {
            return Err(SolveError::OverrideNotRequested(name.clone()));
        }
        let manifest = r
            .manifest(name, version)
            .ok_or_else(|| SolveError::UnknownVersion {
                name: name.clone(),
                version: version.clone(),
            })?;
        if !manifest.toolchain.matches(&req.toolchain) {
            return Err(SolveError::OverrideIncompatible {
                name: name.clone(),
                version: version.clone(),
                toolchain: req.toolchain.clone(),
            });
        }
    }
    Ok(())
}

/// Versions of `name` the request allows, newest first. An override pins a
/// single version and bypasses the development-snapshot filter.
fn viable_versions<'r>(
    r: &'r Repository,
    req: &SelectionRequest,
    name: &str,
) -> Vec<&'r PackageManifest> {
    let Some(versions) = r.packages.get(name) else {
        return Vec::new();
    };
    if let Some(pin) = req.overrides.get(name) {
        return versions.get(pin).into_iter().collect();
    }
    versions
        .values()
        .rev()
        .filter(|m| req.include_dev || !m.dev)
        .filter(|m| m.toolchain.matches(&req.toolchain))
        .collect()
}

/// Why optional package `name` is absent from `selected`. Depends only on
/// the final selection, so every search strategy reports the same text.
fn exclusion_reason(
    r: &Repository,
    req: &SelectionRequest,
    selected: &BTreeMap<String, Version>,
    name: &str,
) -> String {
    let viable = viable_versions(r, req, name);
    if viable.is_empty() {
        return format!("no version compatible with toolchain {}", req.toolchain);
    }
    let conflict_partner = |m: &PackageManifest| -> Option<String> {
        selected.iter().find_map(|(other, other_version)| {
            let ours = m
                .conflicts
                .iter()
                .any(|c| &c.name == other && c.constraint.matches(other_version));
            let theirs = r.manifest(other, other_version).is_some_and(|om| {
                om.conflicts
                    .iter()
                    .any(|c| c.name == name && c.constraint.matches(&m.version))
            });
            (ours || theirs).then(|| other.clone())
        })
    };
    let partners: Vec<Option<String>> = viable.iter().map(|m| conflict_partner(m)).collect();
    match partners.first() {
        Some(Some(first)) if partners.iter().all(Option::is_some) => {
            format!("conflict with {first}")
        }
        _ => "not co-installable with the selected packages".to_string(),
    }
}

fn unsat_narrative(
    r: &Repository,
    req: &SelectionRequest,
    culprits: &BTreeSet<String>,
) -> Vec<String> {
    let mut lines = Vec::new();
    for name in culprits {
        let viable = viable_versions(r, req, name);
        if viable.is_empty() {
            lines.push(format!(
                "{name} has no version compatible with toolchain {}",
                req.toolchain
            ));
            continue;
        }
        for m in viable {
            if m.depends.is_empty() && m.conflicts.is_empty() {
                lines.push(format!(
                    "{name} {} has no dependencies or conflicts",
                    m.version
                ));
            }
            for d in &m.depends {
                lines.push(format!(
                    "{name} {} depends on {} {}",
                    m.version, d.name, d.constraint
                ));
            }
            for c in &m.conflicts {
                lines.push(format!(
                    "{name} {} conflicts with {} {}",
                    m.version, c.name, c.constraint
                ));
            }
        }
    }
    let joined: Vec<&str> = culprits.iter().map(String::as_str).collect();
    lines.push(format!(
        "no selection for toolchain {} satisfies {{{}}} together",
        req.toolchain,
        joined.join(", ")
    ));
    lines
}

fn build_pick(r: &Repository, req: &SelectionRequest, selected: BTreeMap<String, Version>) -> Pick {
    let excluded = req
        .optional
        .iter()
        .filter(|n| !selected.contains_key(*n))
        .map(|n| (n.clone(), exclusion_reason(r, req, &selected, n)))
        .collect();
    Pick {
        toolchain: req.toolchain.clone(),
        selected,
        excluded,
    }
}

fn build_unsat(r: &Repository, req: &SelectionRequest, culprits: BTreeSet<String>) -> UnsatReport {
    let narrative = unsat_narrative(r, req, &culprits);
    UnsatReport {
        culprits,
        narrative,
    }
}

/// Resolves the optimal pick for `req`, or explains why the mandatory set
/// cannot be satisfied.
pub fn resolve_pick(r: &Repository, req: &SelectionRequest) -> Result<Resolution, SolveError> {
    check_request(r, req)?;
    Ok(match search::optimize(r, req) {
        Ok(selected) => Resolution::Pick(build_pick(r, req, selected)),
        Err(culprits) => Resolution::Unsat(build_unsat(r, req, culprits)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationKind {
    UnknownPackage,
    ToolchainMismatch,
    DependencyViolation,
    MutualExclusion,
    SelectedAndExcluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub packages: Vec<String>,
    pub constraint: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} [{}]: {}",
            self.kind,
            self.packages.join(", "),
            self.detail
        )
    }
}

/// Checks every pick invariant directly against the repository.
pub fn verify_pick(r: &Repository, p: &Pick) -> Vec<Violation> {
    let mut out = Vec::new();
    for name in p.excluded.keys() {
        if p.selected.contains_key(name) {
            out.push(Violation {
                kind: ViolationKind::SelectedAndExcluded,
                packages: vec![name.clone()],
                constraint: None,
                detail: format!("{name} is both selected and excluded"),
            });
        }
    }
    for (name, version) in &p.selected {
        let Some(m) = r.manifest(name, version) else {
            out.push(Violation {
                kind: ViolationKind::UnknownPackage,
                packages: vec![name.clone()],
                constraint: None,
                detail: format!("{name} {version} is not in the repository"),
            });
            continue;
        };
        if !m.toolchain.matches(&p.toolchain) {
            out.push(Violation {
                kind: ViolationKind::ToolchainMismatch,
                packages: vec![name.clone()],
                constraint: Some(m.toolchain.to_string()),
                detail: format!(
                    "{name} {version} does not support toolchain {}",
                    p.toolchain
                ),
            });
        }
        for dep in &m.depends {
            let detail = match p.selected.get(&dep.name) {
                None => Some(format!(
                    "{name} {version} depends on {}, which is not selected",
                    dep.name
                )),
                Some(dv) if !dep.constraint.matches(dv) => Some(format!(
                    "{name} {version} depends on {} {}, but {dv} is selected",
                    dep.name, dep.constraint
                )),
                Some(_) => None,
            };
            if let Some(detail) = detail {
                out.push(Violation {
                    kind: ViolationKind::DependencyViolation,
                    packages: vec![name.clone(), dep.name.clone()],
                    constraint: Some(dep.constraint.to_string()),
                    detail,
                });
            }
        }
        for conflict in &m.conflicts {
            if let Some(cv) = p.selected.get(&conflict.name) {
                if conflict.constraint.matches(cv) {
                    out.push(Violation {
                        kind: ViolationKind::MutualExclusion,
                        packages: vec![name.clone(), conflict.name.clone()],
                        constraint: Some(conflict.constraint.to_string()),
                        detail: format!(
                            "{name} {version} conflicts with {} {}, and {cv} is selected",
                            conflict.name, conflict.constraint
                        ),
                    });
                }
            }
        }
    }
    out
}
