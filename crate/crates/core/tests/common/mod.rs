#![allow(dead_code)]

use std::path::PathBuf;

use pickforge::release::Release;
use pickforge::{
    CalendarVersion, Constraint, PackageManifest, Pick, Repository, Requirement, SelectionRequest,
    Version,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOOLCHAINS: [&str; 3] = ["8.13", "8.14", "8.15"];

pub fn v(s: &str) -> Version {
    s.parse().unwrap()
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn random_toolchain_constraint(rng: &mut impl Rng) -> Constraint {
    let text = *[
        "*",
        "*",
        "*",
        ">=8.14",
        "<8.15",
        "=8.14",
        "!=8.13",
        ">=8.13, <8.15",
        "=8.13 | =8.15",
    ]
    .choose(rng)
    .unwrap();
    text.parse().unwrap()
}

fn random_edge_constraint(rng: &mut impl Rng, target_versions: &[Version]) -> Constraint {
    let pivot = target_versions.choose(rng).unwrap();
    let text = match rng.gen_range(0..7) {
        0 => "*".to_string(),
        1 => format!(">={pivot}"),
        2 => format!("<{pivot}"),
        3 => format!("={pivot}"),
        4 => format!("!={pivot}"),
        5 => format!("<={pivot}"),
        _ => {
            let other = target_versions.choose(rng).unwrap();
            format!(">{pivot} | ={other}")
        }
    };
    text.parse().unwrap()
}

/// A valid repository with up to `max_packages` packages of up to
/// `max_versions` versions each, with random dependency and conflict edges.
pub fn random_repository(
    rng: &mut impl Rng,
    max_packages: usize,
    max_versions: usize,
) -> Repository {
    let mut r = Repository::new(TOOLCHAINS.map(v).to_vec());
    let n = rng.gen_range(1..=max_packages);
    let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    let versions: Vec<Vec<Version>> = names
        .iter()
        .map(|_| {
            let k = rng.gen_range(1..=max_versions);
            let mut vs: Vec<Version> = (0..k)
                .map(|i| Version::new(vec![i as u64 + 1, 0], None).unwrap())
                .collect();
            if rng.gen_bool(0.1) {
                vs[k - 1] = format!("{}.0-dev", k).parse().unwrap();
            }
            vs
        })
        .collect();

    for (p, name) in names.iter().enumerate() {
        for version in &versions[p] {
            let mut m = PackageManifest::new(
                name.clone(),
                version.clone(),
                random_toolchain_constraint(rng),
            );
            if version.suffix().is_some() {
                m.dev = true;
                m.source_ref = Some(format!("{:07x}", rng.gen::<u32>() & 0xfff_ffff));
            }
            let mut others: Vec<usize> = (0..n).filter(|&q| q != p).collect();
            others.shuffle(rng);
            let deps = rng.gen_range(0..=2.min(others.len()));
            for &q in &others[..deps] {
                m.depends.push(Requirement::new(
                    names[q].clone(),
                    random_edge_constraint(rng, &versions[q]),
                ));
            }
            if deps < others.len() && rng.gen_bool(0.25) {
                let q = others[deps];
                m.conflicts.push(Requirement::new(
                    names[q].clone(),
                    random_edge_constraint(rng, &versions[q]),
                ));
            }
            r.insert(m);
        }
    }
    r
}

/// A request that passes validation against `r`.
pub fn random_request(rng: &mut impl Rng, r: &Repository) -> SelectionRequest {
    let toolchain = v(TOOLCHAINS.choose(rng).unwrap());
    let mut req = SelectionRequest::new(toolchain.clone()).with_dev(rng.gen_bool(0.2));
    for name in r.packages.keys() {
        match rng.gen_range(0..10) {
            0 | 1 => {
                req.mandatory.insert(name.clone());
            }
            2..=5 => {
                req.optional.insert(name.clone());
            }
            _ => {}
        }
    }
    let requested: Vec<String> = req.mandatory.iter().chain(&req.optional).cloned().collect();
    for name in requested {
        if rng.gen_bool(0.1) {
            let compatible: Vec<&Version> = r.packages[&name]
                .values()
                .filter(|m| m.toolchain.matches(&toolchain))
                .map(|m| &m.version)
                .collect();
            if let Some(pin) = compatible.choose(rng) {
                req.overrides.insert(name.clone(), (*pin).clone());
            }
        }
    }
    req
}

pub fn random_instance(
    seed: u64,
    max_packages: usize,
    max_versions: usize,
) -> (Repository, SelectionRequest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_repository(&mut rng, max_packages, max_versions);
    let req = random_request(&mut rng, &r);
    (r, req)
}

pub fn version_strategy() -> impl Strategy<Value = Version> {
    (
        prop::collection::vec(prop_oneof![0u64..20, any::<u64>()], 1..5),
        prop::option::weighted(0.3, "[a-z0-9][a-z0-9._-]{0,6}"),
    )
        .prop_map(|(segments, suffix)| Version::new(segments, suffix).unwrap())
}

pub fn constraint_strategy() -> impl Strategy<Value = Constraint> {
    let op = prop::sample::select(vec!["=", "!=", ">=", ">", "<=", "<"]);
    let atom = (op, version_strategy()).prop_map(|(op, v)| format!("{op}{v}"));
    let conjunction = prop::collection::vec(atom, 1..4).prop_map(|atoms| atoms.join(", "));
    prop_oneof![
        1 => Just("*".to_string()),
        6 => prop::collection::vec(conjunction, 1..4).prop_map(|alts| alts.join(" | ")),
    ]
    .prop_map(|text| text.parse().unwrap())
}

pub fn calendar_strategy() -> impl Strategy<Value = CalendarVersion> {
    (2000u32..2100, 1u8..=12, 0u32..50).prop_map(|(y, m, p)| CalendarVersion::new(y, m, p).unwrap())
}

fn name_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,8}"
}

pub fn pick_strategy(toolchain: Version) -> impl Strategy<Value = Pick> {
    (
        prop::collection::btree_map(name_strategy(), version_strategy(), 0..8),
        prop::collection::btree_map(name_strategy(), "[a-z ]{1,20}", 0..3),
    )
        .prop_map(move |(selected, excluded)| Pick {
            toolchain: toolchain.clone(),
            selected,
            excluded,
        })
}

/// Releases that pass [`Release::check`].
pub fn release_strategy() -> impl Strategy<Value = Release> {
    (
        prop::collection::btree_set(version_strategy(), 1..5),
        calendar_strategy(),
        prop::option::of(calendar_strategy()),
    )
        .prop_flat_map(|(toolchains, version, predecessor)| {
            let picks: Vec<_> = toolchains.into_iter().map(pick_strategy).collect();
            let predecessor = predecessor.filter(|p| *p < version);
            (picks, Just(version), Just(predecessor))
        })
        .prop_map(|(picks, version, predecessor)| Release {
            version,
            picks,
            predecessor,
        })
}
