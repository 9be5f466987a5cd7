//! Backtracking search behind [`super::resolve_pick`].
//!
//! The objective is optimized in stages, each stage fixing more of the
//! answer and asking a feasibility search whether the fixes still admit a
//! valid pick:
//!
//! * inclusion: depth-first over optional packages in name order, include
//!   before exclude, with a count bound. The first leaf reaching the best
//!   count is the lexicographically preferred inclusion set.
//! * versions: for each package in name order, the newest version that
//!   keeps the fixes feasible, else absence.
//!
//! Every feasibility answer comes with a witness assignment. A fix the
//! current witness already satisfies needs no new search.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{viable_versions, SelectionRequest};
use crate::index::{PackageManifest, Repository};
use crate::versioning::Version;

/// One edge compiled against the target's domain: `mask[k]` is whether the
/// edge's constraint matches the target's k-th viable version.
struct Edge {
    target: usize,
    mask: Vec<bool>,
}

/// Packages reachable from the request, with their viable versions.
struct Problem<'r> {
    names: Vec<&'r str>,
    domains: Vec<Vec<&'r PackageManifest>>,
    offsets: Vec<usize>,
    total: usize,
    /// `deps[p][k]`: dependency edges of package p at its k-th version.
    deps: Vec<Vec<Vec<Edge>>>,
    conflicts: Vec<Vec<Vec<Edge>>>,
}

impl<'r> Problem<'r> {
    fn build(r: &'r Repository, req: &SelectionRequest) -> Self {
        // Every package some requested package could transitively depend
        // on, through any viable version.
        let mut reachable: BTreeMap<&'r str, Vec<&'r PackageManifest>> = BTreeMap::new();
        let mut queue: Vec<&'r str> = req
            .mandatory
            .iter()
            .chain(&req.optional)
            .filter_map(|n| r.packages.get_key_value(n).map(|(k, _)| k.as_str()))
            .collect();
        while let Some(name) = queue.pop() {
            if reachable.contains_key(name) {
                continue;
            }
            let domain = viable_versions(r, req, name);
            for m in &domain {
                for d in &m.depends {
                    if let Some((k, _)) = r.packages.get_key_value(&d.name) {
                        queue.push(k.as_str());
                    }
                }
            }
            reachable.insert(name, domain);
        }

        let names: Vec<&str> = reachable.keys().copied().collect();
        let position: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let domains: Vec<Vec<&PackageManifest>> = reachable.into_values().collect();
        let mut offsets = Vec::with_capacity(domains.len());
        let mut total = 0;
        for d in &domains {
            offsets.push(total);
            total += d.len();
        }

        let compile = |edges: &[crate::index::Requirement]| -> Vec<Edge> {
            edges
                .iter()
                .filter_map(|e| {
                    let target = *position.get(e.name.as_str())?;
                    let mask = domains[target]
                        .iter()
                        .map(|m| e.constraint.matches(&m.version))
                        .collect();
                    Some(Edge { target, mask })
                })
                .collect()
        };
        let deps = domains
            .iter()
            .map(|d| d.iter().map(|m| compile(&m.depends)).collect())
            .collect();
        let conflicts = domains
            .iter()
            .map(|d| d.iter().map(|m| compile(&m.conflicts)).collect())
            .collect();

        Self {
            names,
            domains,
            offsets,
            total,
            deps,
            conflicts,
        }
    }

    fn len(&self) -> usize {
        self.names.len()
    }

    fn id(&self, name: &str) -> usize {
        self.names
            .binary_search(&name)
            .expect("requested packages are always part of the problem")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Open,
    Absent,
    At(usize),
}

/// Fixed decisions a feasibility query must respect.
#[derive(Clone)]
struct Fixes {
    roots: Vec<bool>,
    forbidden: Vec<bool>,
    pinned: Vec<Option<usize>>,
    /// Non-root packages that must end up selected (through some dependent).
    must_select: Vec<bool>,
}

impl Fixes {
    fn new(n: usize) -> Self {
        Self {
            roots: vec![false; n],
            forbidden: vec![false; n],
            pinned: vec![None; n],
            must_select: vec![false; n],
        }
    }
}

type Assignment = Vec<Option<usize>>;

#[derive(Clone)]
struct State {
    slots: Vec<Slot>,
    allowed: Vec<bool>,
    demanded: Vec<bool>,
}

impl State {
    fn allowed_count(&self, p: &Problem, pkg: usize) -> usize {
        let start = p.offsets[pkg];
        self.allowed[start..start + p.domains[pkg].len()]
            .iter()
            .filter(|&&a| a)
            .count()
    }

    /// Narrows `target`'s allowed versions to `mask` (or its complement).
    /// Returns false if a demanded package is left without candidates.
    fn narrow(&mut self, p: &Problem, target: usize, mask: &[bool], keep_matching: bool) -> bool {
        let start = p.offsets[target];
        for (k, &m) in mask.iter().enumerate() {
            if m != keep_matching {
                self.allowed[start + k] = false;
            }
        }
        !self.demanded[target] || self.allowed_count(p, target) > 0
    }

    fn select(&mut self, p: &Problem, pkg: usize, k: usize) -> bool {
        self.slots[pkg] = Slot::At(k);
        for edge in &p.deps[pkg][k] {
            match self.slots[edge.target] {
                Slot::Absent => return false,
                Slot::At(j) => {
                    if !edge.mask[j] {
                        return false;
                    }
                }
                Slot::Open => {
                    self.demanded[edge.target] = true;
                    if !self.narrow(p, edge.target, &edge.mask, true) {
                        return false;
                    }
                }
            }
        }
        for edge in &p.conflicts[pkg][k] {
            match self.slots[edge.target] {
                Slot::Absent => {}
                Slot::At(j) => {
                    if edge.mask[j] {
                        return false;
                    }
                }
                Slot::Open => {
                    if !self.narrow(p, edge.target, &edge.mask, false) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Finds some valid assignment honoring `fixes`, or None. Every package
/// selected in the result is a root or a dependency of a selected package.
fn feasible(p: &Problem, fixes: &Fixes) -> Option<Assignment> {
    let n = p.len();
    let mut state = State {
        slots: fixes
            .forbidden
            .iter()
            .map(|&f| if f { Slot::Absent } else { Slot::Open })
            .collect(),
        allowed: vec![true; p.total],
        demanded: vec![false; n],
    };
    for pkg in 0..n {
        if let Some(k) = fixes.pinned[pkg] {
            let start = p.offsets[pkg];
            for j in 0..p.domains[pkg].len() {
                state.allowed[start + j] = j == k;
            }
        }
        if fixes.roots[pkg] {
            if fixes.forbidden[pkg] {
                return None;
            }
            state.demanded[pkg] = true;
            if state.allowed_count(p, pkg) == 0 {
                return None;
            }
        }
    }
    descend(p, fixes, state)
}

fn descend(p: &Problem, fixes: &Fixes, state: State) -> Option<Assignment> {
    // Most constrained open package first; ties go to the earlier name.
    let next = (0..p.len())
        .filter(|&i| state.demanded[i] && state.slots[i] == Slot::Open)
        .min_by_key(|&i| (state.allowed_count(p, i), i));
    let Some(pkg) = next else {
        let assignment: Assignment = state
            .slots
            .iter()
            .map(|s| match s {
                Slot::At(k) => Some(*k),
                _ => None,
            })
            .collect();
        let complete = (0..p.len()).all(|i| !fixes.must_select[i] || assignment[i].is_some());
        return complete.then_some(assignment);
    };
    let start = p.offsets[pkg];
    for k in 0..p.domains[pkg].len() {
        if !state.allowed[start + k] {
            continue;
        }
        let mut next_state = state.clone();
        if next_state.select(p, pkg, k) {
            if let Some(found) = descend(p, fixes, next_state) {
                return Some(found);
            }
        }
    }
    None
}

struct InclusionSearch<'a, 'r> {
    problem: &'a Problem<'r>,
    optional: Vec<usize>,
    /// `reachable_after[i]`: optional packages at positions >= i that can be
    /// selected at all.
    reachable_after: Vec<usize>,
    best: Option<(usize, Fixes, Assignment)>,
}

impl InclusionSearch<'_, '_> {
    fn run(&mut self, pos: usize, chosen: usize, fixes: Fixes, witness: Assignment) {
        if let Some((best, _, _)) = &self.best {
            if chosen + self.reachable_after[pos] <= *best {
                return;
            }
        }
        if pos == self.optional.len() {
            self.best = Some((chosen, fixes, witness));
            return;
        }
        let pkg = self.optional[pos];

        let mut include = fixes.clone();
        include.roots[pkg] = true;
        let found = if witness[pkg].is_some() {
            Some(witness.clone())
        } else {
            feasible(self.problem, &include)
        };
        if let Some(w) = found {
            self.run(pos + 1, chosen + 1, include, w);
        }

        let mut exclude = fixes;
        exclude.forbidden[pkg] = true;
        let found = if witness[pkg].is_none() {
            Some(witness)
        } else {
            feasible(self.problem, &exclude)
        };
        if let Some(w) = found {
            self.run(pos + 1, chosen, exclude, w);
        }
    }
}

/// The optimal selection, or a minimal set of conflicting mandatory
/// packages.
pub(super) fn optimize(
    r: &Repository,
    req: &SelectionRequest,
) -> Result<BTreeMap<String, Version>, BTreeSet<String>> {
    let problem = Problem::build(r, req);
    let n = problem.len();
    let mandatory: Vec<usize> = req.mandatory.iter().map(|m| problem.id(m)).collect();
    let optional: Vec<usize> = req.optional.iter().map(|o| problem.id(o)).collect();

    let mut base = Fixes::new(n);
    for &m in &mandatory {
        base.roots[m] = true;
    }
    let Some(witness) = feasible(&problem, &base) else {
        return Err(minimal_culprits(&problem, &mandatory));
    };

    let selectable: Vec<bool> = optional
        .iter()
        .map(|&o| {
            witness[o].is_some() || {
                let mut fx = base.clone();
                fx.roots[o] = true;
                feasible(&problem, &fx).is_some()
            }
        })
        .collect();
    let mut reachable_after = vec![0; optional.len() + 1];
    for i in (0..optional.len()).rev() {
        reachable_after[i] = reachable_after[i + 1] + usize::from(selectable[i]);
    }

    let mut inclusion = InclusionSearch {
        problem: &problem,
        optional,
        reachable_after,
        best: None,
    };
    inclusion.run(0, 0, base, witness);
    let (_, mut fixes, mut witness) = inclusion
        .best
        .expect("the mandatory set is feasible, so some inclusion set is too");

    for pkg in 0..n {
        if fixes.forbidden[pkg] {
            continue;
        }
        let mut settled = false;
        for k in 0..problem.domains[pkg].len() {
            let mut trial = fixes.clone();
            trial.pinned[pkg] = Some(k);
            if !trial.roots[pkg] {
                trial.must_select[pkg] = true;
            }
            let found = if witness[pkg] == Some(k) {
                Some(witness.clone())
            } else {
                feasible(&problem, &trial)
            };
            if let Some(w) = found {
                fixes = trial;
                witness = w;
                settled = true;
                break;
            }
        }
        if !settled {
            debug_assert!(witness[pkg].is_none());
            fixes.forbidden[pkg] = true;
        }
    }

    Ok(witness
        .iter()
        .enumerate()
        .filter_map(|(pkg, slot)| {
            slot.map(|k| {
                (
                    problem.names[pkg].to_string(),
                    problem.domains[pkg][k].version.clone(),
                )
            })
        })
        .collect())
}

/// Deletion filter over the mandatory set in name order: drop each package
/// whose removal keeps the rest unsatisfiable.
fn minimal_culprits(problem: &Problem, mandatory: &[usize]) -> BTreeSet<String> {
    let mut culprits: Vec<usize> = mandatory.to_vec();
    for &candidate in mandatory {
        let trial: Vec<usize> = culprits
            .iter()
            .copied()
            .filter(|&c| c != candidate)
            .collect();
        let mut fixes = Fixes::new(problem.len());
        for &c in &trial {
            fixes.roots[c] = true;
        }
        if feasible(problem, &fixes).is_none() {
            culprits = trial;
        }
    }
    culprits
        .into_iter()
        .map(|c| problem.names[c].to_string())
        .collect()
}
