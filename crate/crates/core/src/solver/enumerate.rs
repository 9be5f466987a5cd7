//! Exhaustive reference implementation of the pick objective.
//!
//! Shares nothing with the backtracking search beyond request validation
//! and the final reason/narrative text: domains, validity, minimality and
//! the objective key are all computed here from the repository directly.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{build_pick, build_unsat, check_request, Resolution, SelectionRequest, SolveError};
use crate::index::{PackageManifest, Repository};
use crate::versioning::Version;

pub const DEFAULT_ENUMERATION_LIMIT: u128 = 1_000_000;

/// Per package, per choice: (target, which target choices the edge admits).
type EdgeTable = Vec<Vec<Vec<(usize, Vec<bool>)>>>;

struct Space<'r> {
    names: Vec<&'r str>,
    /// Candidate manifests per package; choice 0 is "absent", choice k
    /// selects `options[p][k - 1]`.
    options: Vec<Vec<&'r PackageManifest>>,
    depends: EdgeTable,
    conflicts: EdgeTable,
}

impl<'r> Space<'r> {
    fn new(r: &'r Repository, req: &SelectionRequest) -> Self {
        let mut universe: BTreeSet<&'r str> = BTreeSet::new();
        let mut stack: Vec<&'r str> = Vec::new();
        for name in req.mandatory.iter().chain(&req.optional) {
            if let Some((k, _)) = r.packages.get_key_value(name) {
                stack.push(k);
            }
        }
        while let Some(name) = stack.pop() {
            if !universe.insert(name) {
                continue;
            }
            for m in r.packages[name].values() {
                for d in &m.depends {
                    if let Some((k, _)) = r.packages.get_key_value(&d.name) {
                        stack.push(k);
                    }
                }
            }
        }
        let names: Vec<&str> = universe.into_iter().collect();
        let options: Vec<Vec<&PackageManifest>> = names
            .iter()
            .map(|name| {
                r.packages[*name]
                    .values()
                    .filter(|m| match req.overrides.get(*name) {
                        Some(pin) => &m.version == pin,
                        None => (req.include_dev || !m.dev) && m.toolchain.matches(&req.toolchain),
                    })
                    .collect()
            })
            .collect();

        let table = |edges: &[crate::index::Requirement]| -> Vec<(usize, Vec<bool>)> {
            edges
                .iter()
                .filter_map(|e| {
                    let target = names.iter().position(|n| *n == e.name)?;
                    let mut ok = vec![false];
                    ok.extend(
                        options[target]
                            .iter()
                            .map(|m| e.constraint.matches(&m.version)),
                    );
                    Some((target, ok))
                })
                .collect()
        };
        let depends = options
            .iter()
            .map(|opts| {
                let mut per_choice = vec![Vec::new()];
                per_choice.extend(opts.iter().map(|m| table(&m.depends)));
                per_choice
            })
            .collect();
        let conflicts = options
            .iter()
            .map(|opts| {
                let mut per_choice = vec![Vec::new()];
                per_choice.extend(opts.iter().map(|m| table(&m.conflicts)));
                per_choice
            })
            .collect();
        Self {
            names,
            options,
            depends,
            conflicts,
        }
    }

    fn size(&self) -> u128 {
        self.options
            .iter()
            .fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128 + 1))
    }

    fn position(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| *n == name)
            .expect("requested names are in the universe")
    }

    /// Dependencies and conflicts hold, and every `required` package is
    /// present.
    fn consistent(&self, choice: &[usize], required: &[usize]) -> bool {
        if required.iter().any(|&p| choice[p] == 0) {
            return false;
        }
        for p in 0..choice.len() {
            let k = choice[p];
            if k == 0 {
                continue;
            }
            if self.depends[p][k].iter().any(|(t, ok)| !ok[choice[*t]]) {
                return false;
            }
            if self.conflicts[p][k]
                .iter()
                .any(|(t, hit)| choice[*t] != 0 && hit[choice[*t]])
            {
                return false;
            }
        }
        true
    }

    /// Every present package is reachable from a present requested package.
    fn minimal(&self, choice: &[usize], requested: &[bool]) -> bool {
        let mut seen = vec![false; choice.len()];
        let mut queue: VecDeque<usize> = (0..choice.len())
            .filter(|&p| requested[p] && choice[p] != 0)
            .collect();
        for &p in &queue {
            seen[p] = true;
        }
        while let Some(p) = queue.pop_front() {
            for (t, _) in &self.depends[p][choice[p]] {
                if !seen[*t] {
                    seen[*t] = true;
                    queue.push_back(*t);
                }
            }
        }
        (0..choice.len()).all(|p| seen[p] == (choice[p] != 0))
    }

    fn for_each(&self, mut visit: impl FnMut(&[usize]) -> bool) {
        let n = self.names.len();
        let mut choice = vec![0usize; n];
        loop {
            if !visit(&choice) {
                return;
            }
            let mut i = 0;
            loop {
                if i == n {
                    return;
                }
                choice[i] += 1;
                if choice[i] <= self.options[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn satisfiable(&self, required: &[usize]) -> bool {
        let mut found = false;
        self.for_each(|choice| {
            found = self.consistent(choice, required);
            !found
        });
        found
    }
}

type Key = (usize, Vec<bool>, Vec<Option<Version>>);

/// Exhaustively computes the same result as [`super::resolve_pick`].
/// Refuses instances whose assignment space exceeds `limit`.
pub fn enumerate_best(
    r: &Repository,
    req: &SelectionRequest,
    limit: u128,
) -> Result<Resolution, SolveError> {
    check_request(r, req)?;
    let space = Space::new(r, req);
    let size = space.size();
    if size > limit {
        return Err(SolveError::SpaceExceeded { space: size, limit });
    }

    let n = space.names.len();
    let mandatory: Vec<usize> = req.mandatory.iter().map(|m| space.position(m)).collect();
    let optional: Vec<usize> = req.optional.iter().map(|o| space.position(o)).collect();
    let mut requested = vec![false; n];
    for &p in mandatory.iter().chain(&optional) {
        requested[p] = true;
    }

    let mut best: Option<(Key, Vec<usize>)> = None;
    space.for_each(|choice| {
        if space.consistent(choice, &mandatory) && space.minimal(choice, &requested) {
            let inclusion: Vec<bool> = optional.iter().map(|&o| choice[o] != 0).collect();
            let count = inclusion.iter().filter(|&&b| b).count();
            let versions: Vec<Option<Version>> = (0..n)
                .map(|p| match choice[p] {
                    0 => None,
                    k => Some(space.options[p][k - 1].version.clone()),
                })
                .collect();
            let key = (count, inclusion, versions);
            if best.as_ref().is_none_or(|(b, _)| key > *b) {
                best = Some((key, choice.to_vec()));
            }
        }
        true
    });

    Ok(match best {
        Some((_, choice)) => {
            let selected: BTreeMap<String, Version> = (0..n)
                .filter(|&p| choice[p] != 0)
                .map(|p| {
                    (
                        space.names[p].to_string(),
                        space.options[p][choice[p] - 1].version.clone(),
                    )
                })
                .collect();
            Resolution::Pick(build_pick(r, req, selected))
        }
        None => {
            let mut culprits = mandatory.clone();
            for &candidate in &mandatory {
                let trial: Vec<usize> = culprits
                    .iter()
                    .copied()
                    .filter(|&c| c != candidate)
                    .collect();
                if !space.satisfiable(&trial) {
                    culprits = trial;
                }
            }
            let culprits = culprits
                .into_iter()
                .map(|c| space.names[c].to_string())
                .collect();
            Resolution::Unsat(build_unsat(r, req, culprits))
        }
    })
}
