mod common;

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use pickforge::buildrun::StepStatus;
use pickforge::solver::DEFAULT_ENUMERATION_LIMIT;
use pickforge::{
    diff_picks, enumerate_best, install_plan, read_lockfile, resolve_pick, run_plan, verify_pick,
    write_lockfile, Constraint, PackageManifest, Pick, Repository, Requirement, Resolution,
    Version,
};
use proptest::prelude::*;

use common::{
    constraint_strategy, pick_strategy, random_instance, release_strategy, v, version_strategy,
};

fn hash_of(x: &Version) -> u64 {
    let mut h = DefaultHasher::new();
    x.hash(&mut h);
    h.finish()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn version_order_is_total_and_consistent(a in version_strategy(), b in version_strategy(), c in version_strategy()) {
        prop_assert_eq!(a.cmp(&b), b.cmp(&a).reverse());
        prop_assert_eq!(a == b, a.cmp(&b) == Ordering::Equal);
        if a == b {
            prop_assert_eq!(hash_of(&a), hash_of(&b));
        }
        if a <= b && b <= c {
            prop_assert!(a <= c);
        }
    }

    #[test]
    fn trailing_zero_segments_do_not_matter(a in version_strategy(), zeros in 1usize..3) {
        let mut segments = a.segments().to_vec();
        segments.extend(std::iter::repeat_n(0, zeros));
        let padded = Version::new(segments, a.suffix().map(String::from)).unwrap();
        prop_assert_eq!(&padded, &a);
        prop_assert_eq!(hash_of(&padded), hash_of(&a));
    }

    #[test]
    fn prerelease_sorts_below_release(a in version_strategy(), tag in "[a-z0-9]{1,5}") {
        let release = Version::new(a.segments().to_vec(), None).unwrap();
        let pre = Version::new(a.segments().to_vec(), Some(tag)).unwrap();
        prop_assert!(pre < release);
    }

    #[test]
    fn constraint_text_round_trips(c in constraint_strategy()) {
        let text = c.to_string();
        let back: Constraint = text.parse().unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert_eq!(back, c);
    }

    #[test]
    fn constraint_parsing_ignores_whitespace(c in constraint_strategy(), probe in version_strategy()) {
        let spaced = c.to_string().replace(',', " ,  ").replace('|', "  |  ");
        let back: Constraint = format!("  {spaced}  ").parse().unwrap();
        prop_assert_eq!(back.matches(&probe), c.matches(&probe));
    }

    #[test]
    fn lockfile_round_trips_and_is_idempotent(rel in release_strategy()) {
        let text = write_lockfile(&rel);
        let back = read_lockfile(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &rel);
        prop_assert_eq!(write_lockfile(&back), text);
    }

    #[test]
    fn diff_partitions_and_is_antisymmetric(a in pick_strategy(v("8.14")), b in pick_strategy(v("8.15"))) {
        let ab = diff_picks(&a, &b);
        let ba = diff_picks(&b, &a);
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        let parts = ab.added.iter()
            .chain(&ab.removed)
            .chain(ab.upgraded.keys())
            .chain(ab.downgraded.keys())
            .chain(&ab.unchanged);
        for name in parts {
            prop_assert!(seen.insert(name), "{} in two parts", name);
        }
        let all: BTreeSet<&String> = a.selected.keys().chain(b.selected.keys()).collect();
        prop_assert_eq!(seen, all);
        prop_assert_eq!(&ab.added, &ba.removed);
        prop_assert_eq!(&ab.removed, &ba.added);
        prop_assert_eq!(&ab.unchanged, &ba.unchanged);
        let up: BTreeSet<&String> = ab.upgraded.keys().collect();
        let down: BTreeSet<&String> = ba.downgraded.keys().collect();
        prop_assert_eq!(up, down);
    }

    #[test]
    fn search_matches_oracle_and_is_sound(seed in any::<u64>()) {
        let (r, req) = random_instance(seed, 6, 3);
        let fast = resolve_pick(&r, &req).unwrap();
        prop_assert_eq!(&fast, &enumerate_best(&r, &req, DEFAULT_ENUMERATION_LIMIT).unwrap());
        if let Resolution::Pick(p) = fast {
            prop_assert_eq!(verify_pick(&r, &p), vec![]);
            for name in &req.mandatory {
                prop_assert!(p.selected.contains_key(name));
            }
            for name in &req.optional {
                prop_assert!(p.selected.contains_key(name) != p.excluded.contains_key(name));
            }
        }
    }
}

/// Packages `p0..pn` where each may depend only on lower-numbered ones.
fn dag_strategy() -> impl Strategy<Value = (Repository, Pick)> {
    (1usize..10)
        .prop_flat_map(|n| prop::collection::vec(prop::collection::vec(any::<bool>(), n), n))
        .prop_map(|matrix| {
            let n = matrix.len();
            let mut r = Repository::new(vec![v("8.15")]);
            for (i, row) in matrix.iter().enumerate() {
                let mut m = PackageManifest::new(format!("p{i}"), v("1.0"), Constraint::Any);
                for (j, &edge) in row.iter().enumerate().take(i) {
                    if edge {
                        m.depends
                            .push(Requirement::new(format!("p{j}"), Constraint::Any));
                    }
                }
                r.insert(m);
            }
            let mut p = Pick::empty(v("8.15"));
            p.selected = (0..n).map(|i| (format!("p{i}"), v("1.0"))).collect();
            (r, p)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn plans_put_dependencies_first((r, p) in dag_strategy()) {
        let plan = install_plan(&r, &p).unwrap();
        prop_assert_eq!(plan.steps.len(), p.selected.len());
        let position: BTreeMap<&str, usize> =
            plan.steps.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
        for (i, step) in plan.steps.iter().enumerate() {
            for d in &r.manifest(&step.name, &step.version).unwrap().depends {
                prop_assert!(position[d.name.as_str()] < i);
            }
        }
        prop_assert_eq!(install_plan(&r, &p).unwrap(), plan);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn skipped_iff_downstream_of_a_failed_build(
        (mut r, p) in dag_strategy(),
        failing in prop::collection::vec(any::<bool>(), 10),
        smoke_failing in prop::collection::vec(any::<bool>(), 10),
    ) {
        for (name, versions) in r.packages.iter_mut() {
            let i: usize = name[1..].parse().unwrap();
            let m = versions.values_mut().next().unwrap();
            if failing[i] && i.is_multiple_of(2) {
                m.build_cmd = "exit 2".into();
            }
            if smoke_failing[i] && i.is_multiple_of(3) {
                m.smoke_cmd = "false".into();
            }
        }
        let plan = install_plan(&r, &p).unwrap();
        let mut reports = Vec::new();
        for jobs in [1, 3] {
            let dir = tempfile::tempdir().unwrap();
            reports.push(run_plan(&plan, dir.path(), jobs).unwrap());
        }
        prop_assert_eq!(&reports[0], &reports[1]);

        let status: BTreeMap<&str, StepStatus> =
            reports[0].steps.iter().map(|s| (s.name.as_str(), s.status)).collect();
        let mut blocked: BTreeSet<&str> = BTreeSet::new();
        for step in &plan.steps {
            let upstream_failed = step.depends.iter().any(|d| {
                blocked.contains(d.as_str()) || status[d.as_str()] == StepStatus::BuildFailed
            });
            if upstream_failed {
                blocked.insert(&step.name);
            }
            prop_assert_eq!(status[step.name.as_str()] == StepStatus::Skipped, upstream_failed);
        }
        prop_assert_eq!(reports[0].passed, reports[0].steps.iter().all(|s| s.status == StepStatus::Passed));
    }
}
