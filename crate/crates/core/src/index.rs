//! The package repository: one manifest per (package, version) plus the
//! ordered list of toolchain versions packages are built against.
//!
//! On disk (or behind a static HTTP server) a repository looks like:
//!
//! ```text
//! index.json                      {"packages": [...], "toolchains": [...]}
//! packages/<name>/<version>.json  one manifest
//! packages/<name>/versions.json   ["1.0", "2.0"], required for HTTP sources
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::json::to_canonical_string;
use crate::versioning::{Constraint, Version};

pub const INDEX_FILE: &str = "index.json";
pub const VERSIONS_FILE: &str = "versions.json";
pub const CACHE_ENV: &str = "PICKFORGE_CACHE";
const COMPLETE_MARKER: &str = ".complete";

/// A `(package, constraint)` edge, used for both dependencies and conflicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub name: String,
    pub constraint: Constraint,
}

impl Requirement {
    pub fn new(name: impl Into<String>, constraint: Constraint) -> Self {
        Self {
            name: name.into(),
            constraint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageManifest {
    pub name: String,
    pub version: Version,
    /// Toolchain versions this package version builds against.
    pub toolchain: Constraint,
    #[serde(default)]
    pub depends: Vec<Requirement>,
    #[serde(default)]
    pub conflicts: Vec<Requirement>,
    /// Unreleased development snapshot.
    #[serde(default)]
    pub dev: bool,
    #[serde(default)]
    pub source_ref: Option<String>,
    #[serde(default)]
    pub deprecated: bool,
    pub maintainer: String,
    pub build_cmd: String,
    pub smoke_cmd: String,
}

impl PackageManifest {
    /// A released, non-deprecated manifest with no edges and `true` commands.
    pub fn new(name: impl Into<String>, version: Version, toolchain: Constraint) -> Self {
        Self {
            name: name.into(),
            version,
            toolchain,
            depends: Vec::new(),
            conflicts: Vec::new(),
            dev: false,
            source_ref: None,
            deprecated: false,
            maintainer: String::new(),
            build_cmd: "true".to_string(),
            smoke_cmd: "true".to_string(),
        }
    }
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repository {
    pub toolchains: Vec<Version>,
    pub packages: BTreeMap<String, BTreeMap<Version, PackageManifest>>,
}

impl Repository {
    pub fn new(toolchains: Vec<Version>) -> Self {
        Self {
            toolchains,
            packages: BTreeMap::new(),
        }
    }

    /// Inserts under the manifest's own name and version, replacing any
    /// previous manifest with an equal key.
    pub fn insert(&mut self, manifest: PackageManifest) {
        self.packages
            .entry(manifest.name.clone())
            .or_default()
            .insert(manifest.version.clone(), manifest);
    }

    pub fn manifest(&self, name: &str, version: &Version) -> Option<&PackageManifest> {
        self.packages.get(name)?.get(version)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.packages.contains_key(name)
    }

    pub fn package_count(&self) -> usize {
        self.packages.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum IssueKind {
    InvalidName,
    SelfDependency,
    SelfConflict,
    DuplicateDependency,
    DuplicateConflict,
    DevWithoutSourceRef,
    UnorderedToolchains,
    KeyMismatch,
    DanglingReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub package: Option<String>,
    pub version: Option<Version>,
    pub detail: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        match (&self.package, &self.version) {
            (Some(p), Some(v)) => write!(f, " [{p} {v}]")?,
            (Some(p), None) => write!(f, " [{p}]")?,
            _ => {}
        }
        write!(f, ": {}", self.detail)
    }
}

/// Every invariant violation in `r`. An empty list means the repository is
/// valid.
pub fn validate_repository(r: &Repository) -> Vec<Issue> {
    let mut issues = Vec::new();

    for (i, pair) in r.toolchains.windows(2).enumerate() {
        if pair[0] >= pair[1] {
            issues.push(Issue {
                kind: IssueKind::UnorderedToolchains,
                package: None,
                version: None,
                detail: format!(
                    "toolchain {} at position {} is not below {} at position {}",
                    pair[0],
                    i,
                    pair[1],
                    i + 1
                ),
            });
        }
    }

    for (name, versions) in &r.packages {
        if !is_valid_name(name) {
            issues.push(Issue {
                kind: IssueKind::InvalidName,
                package: Some(name.clone()),
                version: None,
                detail: "names are lowercase ASCII letters, digits and '-'".to_string(),
            });
        }
        for (key, m) in versions {
            let issue = |kind, detail: String| Issue {
                kind,
                package: Some(name.clone()),
                version: Some(key.clone()),
                detail,
            };
            if &m.name != name || &m.version != key || m.version.to_string() != key.to_string() {
                issues.push(issue(
                    IssueKind::KeyMismatch,
                    format!(
                        "stored as {name} {key} but manifest says {} {}",
                        m.name, m.version
                    ),
                ));
            }
            if m.dev && m.source_ref.is_none() {
                issues.push(issue(
                    IssueKind::DevWithoutSourceRef,
                    "development snapshot has no source_ref".to_string(),
                ));
            }
            for (edges, self_kind, dup_kind, label) in [
                (
                    &m.depends,
                    IssueKind::SelfDependency,
                    IssueKind::DuplicateDependency,
                    "depends",
                ),
                (
                    &m.conflicts,
                    IssueKind::SelfConflict,
                    IssueKind::DuplicateConflict,
                    "conflicts",
                ),
            ] {
                let mut seen = BTreeSet::new();
                for edge in edges {
                    if edge.name == m.name {
                        issues.push(issue(self_kind, format!("{label} on itself")));
                    }
                    if !seen.insert(edge.name.as_str()) {
                        issues.push(issue(
                            dup_kind,
                            format!("{label} lists {} twice", edge.name),
                        ));
                    }
                    if !r.packages.contains_key(&edge.name) {
                        issues.push(issue(
                            IssueKind::DanglingReference,
                            format!(
                                "{name} {label} on {}, which is not in the repository",
                                edge.name
                            ),
                        ));
                    }
                }
            }
        }
    }
    issues
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot fetch {url}: {message}")]
    Http { url: String, message: String },
    #[error("malformed {path}: at `{field}`: {message}")]
    Malformed {
        path: String,
        field: String,
        message: String,
    },
    #[error("package {from} refers to {to}, which is not in the repository")]
    Dangling { from: String, to: String },
    #[error("unknown package {0}")]
    UnknownPackage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    toolchains: Vec<Version>,
    packages: Vec<String>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &str) -> Result<T, IndexError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        IndexError::Malformed {
            path: path.to_string(),
            field,
            message: e.into_inner().to_string(),
        }
    })
}

/// Where a repository is read from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Directory(PathBuf),
    Http(String),
}

impl Source {
    pub fn parse(text: &str) -> Self {
        if text.starts_with("http://") || text.starts_with("https://") {
            Source::Http(text.trim_end_matches('/').to_string())
        } else {
            Source::Directory(PathBuf::from(text))
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Directory(p) => write!(f, "{}", p.display()),
            Source::Http(u) => f.write_str(u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    /// Local directory source; no cache involved.
    Direct,
    /// Fetched over HTTP and mirrored into the cache.
    Miss,
    /// Served from a previously mirrored copy.
    Hit,
}

/// `$PICKFORGE_CACHE`, else `$XDG_CACHE_HOME/pickforge`, else
/// `~/.cache/pickforge`, else a directory under the system temp dir.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(dir).join("pickforge");
    }
    if let Some(home) = std::env::var_os("HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(home).join(".cache").join("pickforge");
    }
    std::env::temp_dir().join("pickforge-cache")
}

/// Loads with the default cache location.
pub fn load_repository(source: &Source) -> Result<Repository, IndexError> {
    load_repository_with_cache(source, &default_cache_dir()).map(|(r, _)| r)
}

pub fn load_repository_with_cache(
    source: &Source,
    cache_dir: &Path,
) -> Result<(Repository, CacheStatus), IndexError> {
    match source {
        Source::Directory(dir) => Ok((load_directory(dir)?, CacheStatus::Direct)),
        Source::Http(base) => load_http(base, cache_dir),
    }
}

pub fn load_directory(dir: &Path) -> Result<Repository, IndexError> {
    let index_path = dir.join(INDEX_FILE);
    let bytes = fs::read(&index_path).map_err(io_err(&index_path))?;
    let index: IndexFile = parse_json(&bytes, &index_path.display().to_string())?;

    let mut repo = Repository::new(index.toolchains);
    for name in &index.packages {
        let pkg_dir = dir.join("packages").join(name);
        let mut files = Vec::new();
        for entry in fs::read_dir(&pkg_dir).map_err(io_err(&pkg_dir))? {
            let path = entry.map_err(io_err(&pkg_dir))?.path();
            let is_manifest = path.extension().is_some_and(|e| e == "json")
                && path.file_name().is_some_and(|f| f != VERSIONS_FILE);
            if is_manifest {
                files.push(path);
            }
        }
        files.sort();
        let versions = repo.packages.entry(name.clone()).or_default();
        for path in files {
            let shown = path.display().to_string();
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let key = Version::parse(&stem).map_err(|e| IndexError::Malformed {
                path: shown.clone(),
                field: "<file name>".to_string(),
                message: e.to_string(),
            })?;
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let manifest: PackageManifest = parse_json(&bytes, &shown)?;
            versions.insert(key, manifest);
        }
    }
    check_dangling(&repo)?;
    Ok(repo)
}

fn check_dangling(repo: &Repository) -> Result<(), IndexError> {
    for (name, versions) in &repo.packages {
        for m in versions.values() {
            for edge in m.depends.iter().chain(&m.conflicts) {
                if !repo.packages.contains_key(&edge.name) {
                    return Err(IndexError::Dangling {
                        from: name.clone(),
                        to: edge.name.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn http_get(url: &str) -> Result<Vec<u8>, IndexError> {
    let response = ureq::get(url).call().map_err(|e| IndexError::Http {
        url: url.to_string(),
        message: e.to_string(),
    })?;
    let mut body = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| IndexError::Http {
            url: url.to_string(),
            message: e.to_string(),
        })?;
    Ok(body)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Mirrors an HTTP repository into `cache_dir/<source>/<digest of index.json>`
/// and loads the mirror. The index is always fetched; manifests are only
/// fetched when no complete mirror for that digest exists.
fn load_http(base: &str, cache_dir: &Path) -> Result<(Repository, CacheStatus), IndexError> {
    let index_url = format!("{base}/{INDEX_FILE}");
    let index_bytes = http_get(&index_url)?;
    let index: IndexFile = parse_json(&index_bytes, &index_url)?;

    let source_key = &sha256_hex(base.as_bytes())[..16];
    let digest = sha256_hex(&index_bytes);
    let mirror = cache_dir.join(source_key).join(&digest);
    if mirror.join(COMPLETE_MARKER).is_file() {
        return Ok((load_directory(&mirror)?, CacheStatus::Hit));
    }

    let staging = cache_dir
        .join(source_key)
        .join(format!("{digest}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    let write = |path: &Path, bytes: &[u8]| -> Result<(), IndexError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(path, bytes).map_err(io_err(path))
    };

    for name in &index.packages {
        let listing_url = format!("{base}/packages/{name}/{VERSIONS_FILE}");
        let listing_bytes = http_get(&listing_url)?;
        let listing: Vec<String> = parse_json(&listing_bytes, &listing_url)?;
        let pkg_dir = staging.join("packages").join(name);
        write(&pkg_dir.join(VERSIONS_FILE), &listing_bytes)?;
        for version in &listing {
            if Version::parse(version).is_err() || version.contains('/') {
                return Err(IndexError::Malformed {
                    path: listing_url.clone(),
                    field: version.clone(),
                    message: "not a version".to_string(),
                });
            }
            let bytes = http_get(&format!("{base}/packages/{name}/{version}.json"))?;
            write(&pkg_dir.join(format!("{version}.json")), &bytes)?;
        }
    }
    write(&staging.join(INDEX_FILE), &index_bytes)?;
    write(&staging.join(COMPLETE_MARKER), b"")?;

    match fs::rename(&staging, &mirror) {
        Ok(()) => {}
        // Another loader finished the same mirror first.
        Err(_) if mirror.join(COMPLETE_MARKER).is_file() => {
            let _ = fs::remove_dir_all(&staging);
        }
        Err(e) => return Err(io_err(&mirror)(e)),
    }
    Ok((load_directory(&mirror)?, CacheStatus::Miss))
}

/// Writes `r` in the directory layout [`load_directory`] reads, including
/// the per-package `versions.json` listings HTTP sources need.
pub fn write_repository(r: &Repository, dir: &Path) -> io::Result<()> {
    let index = IndexFile {
        toolchains: r.toolchains.clone(),
        packages: r.packages.keys().cloned().collect(),
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join(INDEX_FILE), to_canonical_string(&index))?;
    for (name, versions) in &r.packages {
        let pkg_dir = dir.join("packages").join(name);
        fs::create_dir_all(&pkg_dir)?;
        let listing: Vec<String> = versions.keys().map(|v| v.to_string()).collect();
        fs::write(pkg_dir.join(VERSIONS_FILE), to_canonical_string(&listing))?;
        for (version, manifest) in versions {
            fs::write(
                pkg_dir.join(format!("{version}.json")),
                to_canonical_string(manifest),
            )?;
        }
    }
    Ok(())
}

/// Versions of `name` whose toolchain constraint admits `toolchain`,
/// newest first. Development snapshots are dropped unless `include_dev`.
pub fn compatible_versions(
    r: &Repository,
    name: &str,
    toolchain: &Version,
    include_dev: bool,
) -> Result<Vec<Version>, IndexError> {
    let versions = r
        .packages
        .get(name)
        .ok_or_else(|| IndexError::UnknownPackage(name.to_string()))?;
    Ok(versions
        .values()
        .rev()
        .filter(|m| include_dev || !m.dev)
        .filter(|m| m.toolchain.matches(toolchain))
        .map(|m| m.version.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Version {
        s.parse().unwrap()
    }

    fn c(s: &str) -> Constraint {
        s.parse().unwrap()
    }

    fn two_version_repo() -> Repository {
        let mut r = Repository::new(vec![v("8.14"), v("8.15")]);
        r.insert(PackageManifest::new("p", v("1.0"), c("<8.15")));
        r.insert(PackageManifest::new("p", v("2.0"), c(">=8.14")));
        r
    }

    #[test]
    fn compatible_versions_filters_and_sorts() {
        let r = two_version_repo();
        assert_eq!(
            compatible_versions(&r, "p", &v("8.14"), false).unwrap(),
            vec![v("2.0"), v("1.0")]
        );
        assert_eq!(
            compatible_versions(&r, "p", &v("8.15"), false).unwrap(),
            vec![v("2.0")]
        );
        assert!(matches!(
            compatible_versions(&r, "q", &v("8.15"), false),
            Err(IndexError::UnknownPackage(_))
        ));
    }

    #[test]
    fn dev_snapshots_need_opt_in() {
        let mut r = Repository::new(vec![v("8.15")]);
        let mut snap = PackageManifest::new("p", v("3.0-dev"), c(">=8.15"));
        snap.dev = true;
        snap.source_ref = Some("abc123".into());
        r.insert(snap);
        assert!(compatible_versions(&r, "p", &v("8.15"), false)
            .unwrap()
            .is_empty());
        assert_eq!(
            compatible_versions(&r, "p", &v("8.15"), true).unwrap(),
            vec![v("3.0-dev")]
        );
    }

    #[test]
    fn valid_repository_has_no_issues() {
        assert!(validate_repository(&two_version_repo()).is_empty());
    }

    #[test]
    fn self_dependency_is_one_issue() {
        let mut r = two_version_repo();
        let mut m = PackageManifest::new("q", v("1.0"), Constraint::Any);
        m.depends.push(Requirement::new("q", Constraint::Any));
        r.insert(m);
        let issues = validate_repository(&r);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].kind, IssueKind::SelfDependency);
    }

    #[test]
    fn unordered_toolchains_is_one_issue() {
        let mut r = two_version_repo();
        r.toolchains = vec![v("8.15"), v("8.14")];
        let issues = validate_repository(&r);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].kind, IssueKind::UnorderedToolchains);
    }

    #[test]
    fn reports_each_kind() {
        let mut r = two_version_repo();
        let mut m = PackageManifest::new("q", v("1.0"), Constraint::Any);
        m.conflicts.push(Requirement::new("q", Constraint::Any));
        m.depends.push(Requirement::new("p", Constraint::Any));
        m.depends.push(Requirement::new("p", c(">=1")));
        m.depends.push(Requirement::new("ghost", Constraint::Any));
        m.dev = true;
        r.insert(m);
        let mut wrong = PackageManifest::new("r", v("2.0"), Constraint::Any);
        wrong.name = "r".into();
        r.packages
            .entry("r".into())
            .or_default()
            .insert(v("1.0"), wrong);
        r.insert(PackageManifest::new("Bad_Name", v("1.0"), Constraint::Any));

        let kinds: BTreeSet<IssueKind> = validate_repository(&r).iter().map(|i| i.kind).collect();
        let expected: BTreeSet<IssueKind> = [
            IssueKind::SelfConflict,
            IssueKind::DuplicateDependency,
            IssueKind::DanglingReference,
            IssueKind::DevWithoutSourceRef,
            IssueKind::KeyMismatch,
            IssueKind::InvalidName,
        ]
        .into_iter()
        .collect();
        assert_eq!(kinds, expected);
    }

    #[test]
    fn manifest_defaults_and_unknown_fields() {
        let m: PackageManifest = parse_json(
            br#"{"name":"a","version":"1.0","toolchain":"*","maintainer":"m","build_cmd":"true","smoke_cmd":"true"}"#,
            "a.json",
        )
        .unwrap();
        assert!(m.depends.is_empty() && !m.dev && !m.deprecated && m.source_ref.is_none());

        let err = parse_json::<PackageManifest>(
            br#"{"name":"a","version":"1.0","toolchain":"*","maintainer":"m","build_cmd":"true","smoke_cmd":"true","color":1}"#,
            "a.json",
        )
        .unwrap_err();
        assert!(err.to_string().contains("color"), "{err}");

        let err = parse_json::<PackageManifest>(
            br#"{"name":"a","version":"1.0","toolchain":"*","maintainer":"m","build_cmd":"true","smoke_cmd":"true","depends":[{"name":"b","constraint":"==1"}]}"#,
            "pkgs/a.json",
        )
        .unwrap_err();
        match err {
            IndexError::Malformed { path, field, .. } => {
                assert_eq!(path, "pkgs/a.json");
                assert_eq!(field, "depends[0].constraint");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
