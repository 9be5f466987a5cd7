//! Regenerates the bundled fixture repositories.
//!
//! ```text
//! cargo run -p pickforge --example gen_fixtures [-- OUT_DIR]
//! ```
//!
//! `platform/` is a 50-package index over toolchains 8.12 to 8.15 with a
//! few deliberately planted problems recorded in `expected.json`.
//! `allpass/` and `unsat/` are tiny indexes for command-line tests.

use std::fs;
use std::path::{Path, PathBuf};

use pickforge::index::write_repository;
use pickforge::json::to_canonical_string;
use pickforge::{Constraint, PackageManifest, Repository, RequestFile, Requirement, Version};
use serde_json::json;

const MAINTAINERS: [&str; 5] = ["alice", "bruno", "chen", "dana", "emeka"];

const BASE: [&str; 11] = [
    "arith",
    "bignums",
    "containers",
    "equations-core",
    "flocq",
    "interval-base",
    "lists-ext",
    "numbers",
    "relations",
    "sets",
    "strings",
];

const MID: [&str; 20] = [
    "algebra",
    "analysis",
    "automata",
    "category",
    "coinduction",
    "combinators",
    "crypto-prims",
    "decidable",
    "finmap",
    "geometry",
    "graphs",
    "hierarchy",
    "logic",
    "matrices",
    "monads",
    "order",
    "parsing",
    "polynomials",
    "reals",
    "topology",
];

const TOP: [&str; 6] = [
    "compiler",
    "hoare-logic",
    "model-checker",
    "verified-db",
    "textbook",
    "workbench",
];

const VIOLATORS: [&str; 3] = ["fragile-plugin", "native-bridge", "serapi-lite"];
const NEWCOMERS: [&str; 3] = ["elpi-ext", "fresh-tactics", "smt-bridge"];
const EXCLUSIVE: [&str; 2] = ["printer-classic", "printer-modern"];
const BROKEN: &str = "tactics-ext";
const BROKEN_DEPENDENTS: [&str; 2] = ["proof-tools", "proof-suite"];
const SNAPSHOT_ONLY: &str = "snapshot-only";
const UNPORTED: &str = "unported";

fn v(s: &str) -> Version {
    s.parse().expect("fixture version")
}

fn c(s: &str) -> Constraint {
    s.parse().expect("fixture constraint")
}

struct Builder {
    repo: Repository,
    count: usize,
}

impl Builder {
    fn maintainer(&self) -> String {
        MAINTAINERS[self.count % MAINTAINERS.len()].to_string()
    }

    /// Adds a package with one manifest per `(version, toolchain)` entry.
    fn add(&mut self, name: &str, versions: &[(&str, &str)], depends: &[(&str, &str)]) {
        let maintainer = self.maintainer();
        for (version, toolchain) in versions {
            let mut m = PackageManifest::new(name, v(version), c(toolchain));
            m.maintainer = maintainer.clone();
            m.depends = depends
                .iter()
                .map(|(d, k)| Requirement::new(*d, c(k)))
                .collect();
            m.build_cmd =
                r#"mkdir -p "lib/$PKG_NAME" && echo "$PKG_VERSION" > "lib/$PKG_NAME/VERSION""#
                    .to_string();
            m.smoke_cmd = r#"test "$(cat "lib/$PKG_NAME/VERSION")" = "$PKG_VERSION""#.to_string();
            self.repo.insert(m);
        }
        self.count += 1;
    }

    fn edit(&mut self, name: &str, f: impl Fn(&mut PackageManifest)) {
        for m in self
            .repo
            .packages
            .get_mut(name)
            .expect("added")
            .values_mut()
        {
            f(m);
        }
    }
}

/// Three version histories that all satisfy the succession rule.
fn regular_versions(i: usize) -> &'static [(&'static str, &'static str)] {
    match i % 3 {
        0 => &[("1.0", ">=8.12, <8.14"), ("2.0", ">=8.13")],
        1 => &[("1.0", ">=8.12, <8.15"), ("1.1", ">=8.14")],
        _ => &[("1.0", "*")],
    }
}

fn platform() -> (Repository, RequestFile, serde_json::Value) {
    let toolchains = ["8.12", "8.13", "8.14", "8.15"].map(v).to_vec();
    let mut b = Builder {
        repo: Repository::new(toolchains),
        count: 0,
    };

    for (i, name) in BASE.iter().enumerate() {
        b.add(name, regular_versions(i), &[]);
    }
    for (j, name) in MID.iter().enumerate() {
        let first = BASE[j % BASE.len()];
        let second = BASE[(3 * j + 1) % BASE.len()];
        let mut deps = vec![(first, ">=1.0")];
        if second != first {
            deps.push((second, ">=1.0"));
        }
        b.add(name, regular_versions(j + 1), &deps);
    }
    for (k, name) in TOP.iter().enumerate() {
        b.add(
            name,
            regular_versions(k + 2),
            &[(MID[2 * k], ">=1.0"), (MID[2 * k + 1], "*")],
        );
    }

    b.add(BROKEN, &[("1.0", "*")], &[("arith", ">=1.0")]);
    b.edit(BROKEN, |m| {
        m.build_cmd = r#"echo "$PKG_NAME: missing plugin dependency" >&2; exit 1"#.to_string();
    });
    b.add(BROKEN_DEPENDENTS[0], &[("1.0", "*")], &[(BROKEN, ">=1.0")]);
    b.add(
        BROKEN_DEPENDENTS[1],
        &[("1.0", "*")],
        &[(BROKEN_DEPENDENTS[0], ">=1.0"), ("logic", "*")],
    );

    for name in VIOLATORS {
        b.add(
            name,
            &[
                ("1.0", "=8.12"),
                ("1.1", "=8.13"),
                ("1.2", "=8.14"),
                ("1.3", "=8.15"),
            ],
            &[],
        );
    }
    for name in NEWCOMERS {
        b.add(name, &[("1.0", ">=8.14")], &[("algebra", ">=1.0")]);
    }

    b.add(EXCLUSIVE[0], &[("1.0", "*")], &[]);
    b.add(EXCLUSIVE[1], &[("1.0", "*")], &[]);
    b.edit(EXCLUSIVE[1], |m| {
        m.conflicts = vec![Requirement::new(EXCLUSIVE[0], Constraint::Any)]
    });

    b.add(
        SNAPSHOT_ONLY,
        &[("1.0", ">=8.12, <8.15")],
        &[("sets", ">=1.0")],
    );
    for (version, source_ref) in [("1.1-dev.1", "3f2a9c1"), ("1.1-dev.2", "9b41e07")] {
        let mut m = PackageManifest::new(SNAPSHOT_ONLY, v(version), c(">=8.14"));
        m.maintainer = b.repo.packages[SNAPSHOT_ONLY][&v("1.0")].maintainer.clone();
        m.dev = true;
        m.source_ref = Some(source_ref.to_string());
        m.depends = vec![Requirement::new("sets", c(">=1.0"))];
        b.repo.insert(m);
    }
    b.add(UNPORTED, &[("0.9", "<8.15")], &[]);

    assert_eq!(b.repo.package_count(), 50);

    let mut request = RequestFile::default();
    request.mandatory.extend(BASE.iter().map(|s| s.to_string()));
    request.optional.extend(
        MID.iter()
            .chain(&TOP)
            .chain(&VIOLATORS)
            .chain(&NEWCOMERS)
            .chain(&EXCLUSIVE)
            .chain(&BROKEN_DEPENDENTS)
            .map(|s| s.to_string()),
    );

    let expected = json!({
        "release_version": "2022.01.0",
        "succession_violators": VIOLATORS,
        "mutually_exclusive": EXCLUSIVE,
        "build_failure": BROKEN,
        "coordination": {
            "rc": "8.15",
            "reference_toolchain": "8.14",
            "extra_optional": [SNAPSHOT_ONLY, UNPORTED],
            "planted": {
                SNAPSHOT_ONLY: "dev_compatible",
                UNPORTED: "none_known",
            },
            "default": "already_compatible",
        },
    });
    (b.repo, request, expected)
}

fn allpass() -> (Repository, RequestFile) {
    let mut r = Repository::new(vec![v("8.14"), v("8.15")]);
    let mut app = PackageManifest::new("app", v("1.0"), Constraint::Any);
    app.depends.push(Requirement::new("lib", c(">=1.0")));
    app.maintainer = "alice".into();
    let mut lib = PackageManifest::new("lib", v("1.2"), c(">=8.14"));
    lib.maintainer = "bruno".into();
    r.insert(app);
    r.insert(lib);
    let mut request = RequestFile::default();
    request.mandatory.insert("app".into());
    (r, request)
}

fn unsat() -> (Repository, RequestFile) {
    let mut r = Repository::new(vec![v("8.15")]);
    let mut a = PackageManifest::new("a", v("1.0"), Constraint::Any);
    a.conflicts.push(Requirement::new("b", Constraint::Any));
    r.insert(a);
    r.insert(PackageManifest::new("b", v("1.0"), Constraint::Any));
    r.insert(PackageManifest::new("c", v("1.0"), Constraint::Any));
    let mut request = RequestFile::default();
    request.mandatory.extend(["a", "b", "c"].map(String::from));
    (r, request)
}

fn write(
    dir: &Path,
    repo: &Repository,
    request: &RequestFile,
    expected: Option<&serde_json::Value>,
) {
    if dir.exists() {
        fs::remove_dir_all(dir).expect("clear old fixture");
    }
    fs::create_dir_all(dir).expect("create fixture dir");
    let index = dir.join("index");
    write_repository(repo, &index).expect("write index");
    fs::write(dir.join("request.json"), to_canonical_string(request)).expect("write request");
    if let Some(expected) = expected {
        fs::write(dir.join("expected.json"), to_canonical_string(expected))
            .expect("write expected");
    }
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    let (repo, request, expected) = platform();
    write(&out.join("platform"), &repo, &request, Some(&expected));
    let (repo, request) = allpass();
    write(&out.join("allpass"), &repo, &request, None);
    let (repo, request) = unsat();
    write(&out.join("unsat"), &repo, &request, None);

    println!("wrote fixtures under {}", out.display());
}
