//! Compatibility policy checks and the release-coordination report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::index::Repository;
use crate::release::{dropped_without_deprecation, Release};
use crate::solver::Pick;
use crate::versioning::{CalendarVersion, Version};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown package {0}")]
    UnknownPackage(String),
    #[error("package {name} {version} from the reference pick is not in the repository")]
    UnknownReference { name: String, version: Version },
    #[error("release candidate {0} is the reference pick's own toolchain")]
    RcIsReference(Version),
    #[error("candidate's predecessor is {found:?}, expected {expected}")]
    PredecessorMismatch {
        expected: CalendarVersion,
        found: Option<CalendarVersion>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuccessionPair {
    pub from: Version,
    pub to: Version,
    /// Newest released version supporting both toolchains.
    pub witness: Option<Version>,
    /// The package has releases for both toolchains but none spanning them.
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuccessionReport {
    pub package: String,
    pub pairs: Vec<SuccessionPair>,
}

impl SuccessionReport {
    pub fn violations(&self) -> impl Iterator<Item = &SuccessionPair> {
        self.pairs.iter().filter(|p| p.violation)
    }

    pub fn is_compliant(&self) -> bool {
        self.violations().next().is_none()
    }
}

/// For every consecutive toolchain pair, looks for one released version of
/// `name` compatible with both.
///
/// A missing witness only counts as a violation when the package does have
/// releases on each side of the pair; a package that joins or leaves the
/// repository at some toolchain is not penalized for it.
pub fn check_succession(r: &Repository, name: &str) -> Result<SuccessionReport, PolicyError> {
    let versions = r
        .packages
        .get(name)
        .ok_or_else(|| PolicyError::UnknownPackage(name.to_string()))?;
    let released: Vec<_> = versions.values().rev().filter(|m| !m.dev).collect();
    let pairs = r
        .toolchains
        .windows(2)
        .map(|pair| {
            let (from, to) = (&pair[0], &pair[1]);
            let witness = released
                .iter()
                .find(|m| m.toolchain.matches(from) && m.toolchain.matches(to))
                .map(|m| m.version.clone());
            let on_both_sides = released.iter().any(|m| m.toolchain.matches(from))
                && released.iter().any(|m| m.toolchain.matches(to));
            SuccessionPair {
                from: from.clone(),
                to: to.clone(),
                violation: witness.is_none() && on_both_sides,
                witness,
            }
        })
        .collect();
    Ok(SuccessionReport {
        package: name.to_string(),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CoordinationStatus {
    AlreadyCompatible { version: Version },
    DevCompatible { source_ref: String },
    NoneKnown,
}

impl CoordinationStatus {
    pub fn action(&self) -> String {
        match self {
            CoordinationStatus::AlreadyCompatible { .. } => "no action needed".to_string(),
            CoordinationStatus::DevCompatible { source_ref } => {
                format!("please cut a release from {source_ref}")
            }
            CoordinationStatus::NoneKnown => "please provide a compatible version".to_string(),
        }
    }

    fn describe(&self) -> String {
        match self {
            CoordinationStatus::AlreadyCompatible { version } => {
                format!("already compatible ({version})")
            }
            CoordinationStatus::DevCompatible { source_ref } => {
                format!("compatible development snapshot ({source_ref})")
            }
            CoordinationStatus::NoneKnown => "no known compatible version".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoordinationEntry {
    /// Version in the reference pick.
    pub current: Version,
    pub status: CoordinationStatus,
    pub action: String,
    pub maintainer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoordinationReport {
    pub rc: Version,
    pub reference_toolchain: Version,
    pub entries: BTreeMap<String, CoordinationEntry>,
}

/// Classifies every package of `reference` by what is known to work with
/// the release candidate `rc`: a released version, else a development
/// snapshot, else nothing.
pub fn coordinate(
    r: &Repository,
    rc: &Version,
    reference: &Pick,
) -> Result<CoordinationReport, PolicyError> {
    if rc == &reference.toolchain {
        return Err(PolicyError::RcIsReference(rc.clone()));
    }
    let mut entries = BTreeMap::new();
    for (name, current) in &reference.selected {
        let manifest = r
            .manifest(name, current)
            .ok_or_else(|| PolicyError::UnknownReference {
                name: name.clone(),
                version: current.clone(),
            })?;
        let versions = &r.packages[name];
        let released = versions
            .values()
            .rev()
            .find(|m| !m.dev && m.toolchain.matches(rc));
        let status = if let Some(newest) = released {
            CoordinationStatus::AlreadyCompatible {
                version: newest.version.clone(),
            }
        } else {
            versions
                .values()
                .filter(|m| m.dev && m.toolchain.matches(rc))
                .filter_map(|m| m.source_ref.as_ref().map(|s| (&m.version, s)))
                .max()
                .map(|(_, source_ref)| CoordinationStatus::DevCompatible {
                    source_ref: source_ref.clone(),
                })
                .unwrap_or(CoordinationStatus::NoneKnown)
        };
        entries.insert(
            name.clone(),
            CoordinationEntry {
                current: current.clone(),
                action: status.action(),
                status,
                maintainer: manifest.maintainer.clone(),
            },
        );
    }
    Ok(CoordinationReport {
        rc: rc.clone(),
        reference_toolchain: reference.toolchain.clone(),
        entries,
    })
}

/// One section per maintainer, packages in name order.
pub fn render_coordination_markdown(report: &CoordinationReport) -> String {
    let mut by_maintainer: BTreeMap<&str, Vec<(&String, &CoordinationEntry)>> = BTreeMap::new();
    for (name, entry) in &report.entries {
        by_maintainer
            .entry(entry.maintainer.as_str())
            .or_default()
            .push((name, entry));
    }
    let count = |f: fn(&CoordinationStatus) -> bool| {
        report.entries.values().filter(|e| f(&e.status)).count()
    };

    let mut out = String::new();
    let _ = writeln!(out, "# Coordination report for toolchain {}", report.rc);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Reference pick: toolchain {} ({} packages).",
        report.reference_toolchain,
        report.entries.len()
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "- already compatible: {}",
        count(|s| matches!(s, CoordinationStatus::AlreadyCompatible { .. }))
    );
    let _ = writeln!(
        out,
        "- development snapshot only: {}",
        count(|s| matches!(s, CoordinationStatus::DevCompatible { .. }))
    );
    let _ = writeln!(
        out,
        "- no known compatible version: {}",
        count(|s| matches!(s, CoordinationStatus::NoneKnown))
    );
    for (maintainer, packages) in by_maintainer {
        let _ = writeln!(out);
        let heading = if maintainer.is_empty() {
            "(no maintainer)"
        } else {
            maintainer
        };
        let _ = writeln!(out, "## {heading}");
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "| package | in {} | status | action |",
            report.reference_toolchain
        );
        let _ = writeln!(out, "|---|---|---|---|");
        for (name, entry) in packages {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} |",
                entry.current,
                entry.status.describe(),
                entry.action
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RemovalViolation {
    RemovalWithoutDeprecation { package: String },
}

impl std::fmt::Display for RemovalViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RemovalViolation::RemovalWithoutDeprecation { package } => {
                write!(f, "{package} was removed without being deprecated first")
            }
        }
    }
}

/// Packages `candidate` drops relative to `previous` that were not flagged
/// deprecated in the manifests `previous` shipped.
pub fn check_removals(
    previous: &Release,
    candidate: &Release,
    repo: &Repository,
) -> Result<Vec<RemovalViolation>, PolicyError> {
    if candidate.predecessor != Some(previous.version) {
        return Err(PolicyError::PredecessorMismatch {
            expected: previous.version,
            found: candidate.predecessor,
        });
    }
    Ok(dropped_without_deprecation(previous, candidate, repo)
        .into_iter()
        .map(|package| RemovalViolation::RemovalWithoutDeprecation { package })
        .collect())
}
