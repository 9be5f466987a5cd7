//! Calendar-versioned releases bundling one pick per toolchain, pick diffs,
//! stepwise upgrade paths and the lockfile format.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::Repository;
use crate::json::to_canonical_string;
use crate::solver::{verify_pick, Pick, Violation};
use crate::versioning::{CalendarVersion, Version};

pub const LOCKFILE_NAME: &str = "pickforge.lock.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Release {
    pub version: CalendarVersion,
    /// One pick per toolchain, ascending by toolchain.
    pub picks: Vec<Pick>,
    pub predecessor: Option<CalendarVersion>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReleaseError {
    #[error("a release needs at least one pick")]
    NoPicks,
    #[error("two picks target toolchain {0}")]
    DuplicateToolchain(Version),
    #[error("picks are not in ascending toolchain order at {0}")]
    UnorderedPicks(Version),
    #[error("release {version} is not newer than its predecessor {predecessor}")]
    NotNewer {
        version: CalendarVersion,
        predecessor: CalendarVersion,
    },
    #[error("pick for toolchain {toolchain} is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPick {
        toolchain: Version,
        violations: Vec<Violation>,
    },
    #[error("toolchain {0} has no pick in this release")]
    UnknownToolchain(Version),
    #[error("upgrade path must go from an older to a newer toolchain, got {from} -> {to}")]
    BackwardsPath { from: Version, to: Version },
}

impl Release {
    /// Checks the structural invariants: picks present, toolchains strictly
    /// ascending, version above the predecessor.
    pub fn check(&self) -> Result<(), ReleaseError> {
        if self.picks.is_empty() {
            return Err(ReleaseError::NoPicks);
        }
        for pair in self.picks.windows(2) {
            match pair[0].toolchain.cmp(&pair[1].toolchain) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => {
                    return Err(ReleaseError::DuplicateToolchain(pair[1].toolchain.clone()))
                }
                std::cmp::Ordering::Greater => {
                    return Err(ReleaseError::UnorderedPicks(pair[1].toolchain.clone()))
                }
            }
        }
        if let Some(pred) = self.predecessor {
            if self.version <= pred {
                return Err(ReleaseError::NotNewer {
                    version: self.version,
                    predecessor: pred,
                });
            }
        }
        Ok(())
    }

    pub fn toolchains(&self) -> impl Iterator<Item = &Version> {
        self.picks.iter().map(|p| &p.toolchain)
    }

    pub fn pick_for(&self, toolchain: &Version) -> Option<&Pick> {
        self.picks.iter().find(|p| &p.toolchain == toolchain)
    }

    /// Names selected in at least one pick.
    pub fn package_names(&self) -> BTreeSet<&str> {
        self.picks
            .iter()
            .flat_map(|p| p.selected.keys().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReleaseWarning {
    /// A package shipped by the previous release is missing from every pick
    /// of the new one without having been deprecated first.
    Monotonicity { package: String },
}

impl std::fmt::Display for ReleaseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReleaseWarning::Monotonicity { package } => write!(
                f,
                "package {package} was shipped by the previous release, is not deprecated, and is missing from every pick"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssembleOptions {
    /// Re-ship previous picks whose toolchain the new picks do not cover.
    pub carry_forward: bool,
}

/// Packages selected somewhere in `previous`, selected nowhere in
/// `candidate`, and not deprecated in any manifest `previous` used.
pub fn dropped_without_deprecation(
    previous: &Release,
    candidate: &Release,
    repo: &Repository,
) -> Vec<String> {
    let kept = candidate.package_names();
    previous
        .package_names()
        .into_iter()
        .filter(|name| !kept.contains(name))
        .filter(|name| {
            let deprecated = previous.picks.iter().any(|p| {
                p.selected
                    .get(*name)
                    .and_then(|v| repo.manifest(name, v))
                    .is_some_and(|m| m.deprecated)
            });
            !deprecated
        })
        .map(str::to_string)
        .collect()
}

pub fn assemble_release(
    version: CalendarVersion,
    picks: Vec<Pick>,
    previous: Option<&Release>,
    repo: &Repository,
    options: AssembleOptions,
) -> Result<(Release, Vec<ReleaseWarning>), ReleaseError> {
    if picks.is_empty() {
        return Err(ReleaseError::NoPicks);
    }
    for pick in &picks {
        let violations = verify_pick(repo, pick);
        if !violations.is_empty() {
            return Err(ReleaseError::InvalidPick {
                toolchain: pick.toolchain.clone(),
                violations,
            });
        }
    }
    let mut picks = picks;
    picks.sort_by(|a, b| a.toolchain.cmp(&b.toolchain));
    for pair in picks.windows(2) {
        if pair[0].toolchain == pair[1].toolchain {
            return Err(ReleaseError::DuplicateToolchain(pair[1].toolchain.clone()));
        }
    }
    if options.carry_forward {
        if let Some(prev) = previous {
            for old in &prev.picks {
                if !picks.iter().any(|p| p.toolchain == old.toolchain) {
                    picks.push(old.clone());
                }
            }
            picks.sort_by(|a, b| a.toolchain.cmp(&b.toolchain));
        }
    }

    let release = Release {
        version,
        picks,
        predecessor: previous.map(|p| p.version),
    };
    release.check()?;

    let warnings = previous
        .map(|prev| dropped_without_deprecation(prev, &release, repo))
        .unwrap_or_default()
        .into_iter()
        .map(|package| ReleaseWarning::Monotonicity { package })
        .collect();
    Ok((release, warnings))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VersionChange {
    pub from: Version,
    pub to: Version,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PickDiff {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub upgraded: BTreeMap<String, VersionChange>,
    pub downgraded: BTreeMap<String, VersionChange>,
    pub unchanged: BTreeSet<String>,
}

impl PickDiff {
    pub fn is_monotone(&self) -> bool {
        self.removed.is_empty()
    }
}

pub fn diff_picks(a: &Pick, b: &Pick) -> PickDiff {
    let mut diff = PickDiff::default();
    for (name, old) in &a.selected {
        match b.selected.get(name) {
            None => {
                diff.removed.insert(name.clone());
            }
            Some(new) => {
                let change = VersionChange {
                    from: old.clone(),
                    to: new.clone(),
                };
                match old.cmp(new) {
                    std::cmp::Ordering::Less => {
                        diff.upgraded.insert(name.clone(), change);
                    }
                    std::cmp::Ordering::Greater => {
                        diff.downgraded.insert(name.clone(), change);
                    }
                    std::cmp::Ordering::Equal => {
                        diff.unchanged.insert(name.clone());
                    }
                }
            }
        }
    }
    for name in b.selected.keys() {
        if !a.selected.contains_key(name) {
            diff.added.insert(name.clone());
        }
    }
    diff
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpgradeStep {
    pub from: Version,
    pub to: Version,
    pub diff: PickDiff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpgradeReport {
    pub steps: Vec<UpgradeStep>,
    /// No step removes a package.
    pub monotone: bool,
}

/// Steps through every toolchain of `rel` between `from` and `to`.
pub fn upgrade_path(
    rel: &Release,
    from: &Version,
    to: &Version,
) -> Result<UpgradeReport, ReleaseError> {
    let position = |t: &Version| {
        rel.picks
            .iter()
            .position(|p| &p.toolchain == t)
            .ok_or_else(|| ReleaseError::UnknownToolchain(t.clone()))
    };
    let start = position(from)?;
    let end = position(to)?;
    if start >= end {
        return Err(ReleaseError::BackwardsPath {
            from: from.clone(),
            to: to.clone(),
        });
    }
    let steps: Vec<UpgradeStep> = rel.picks[start..=end]
        .windows(2)
        .map(|pair| UpgradeStep {
            from: pair[0].toolchain.clone(),
            to: pair[1].toolchain.clone(),
            diff: diff_picks(&pair[0], &pair[1]),
        })
        .collect();
    let monotone = steps.iter().all(|s| s.diff.is_monotone());
    Ok(UpgradeReport { steps, monotone })
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid lockfile at `{field}`: {message}")]
pub struct LockfileError {
    pub field: String,
    pub message: String,
}

/// Canonical lockfile bytes: sorted keys, two-space indent, trailing
/// newline.
pub fn write_lockfile(rel: &Release) -> String {
    to_canonical_string(rel)
}

pub fn read_lockfile(bytes: &[u8]) -> Result<Release, LockfileError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let release: Release = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        LockfileError {
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    release.check().map_err(|e| LockfileError {
        field: match e {
            ReleaseError::NotNewer { .. } => "predecessor",
            _ => "picks",
        }
        .to_string(),
        message: e.to_string(),
    })?;
    Ok(release)
}
