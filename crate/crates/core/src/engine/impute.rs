//! Seeded multiple imputation of unknown ages.
//!
//! Ages are linked through parent/child edges: a parent is 15 to 50 years
//! older than each child, with a generation gap of 28 years most likely.
//! Bounds are propagated to a fixpoint before any sampling, so an empty range
//! is reported up front rather than discovered halfway through a draw.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EngineError;
use crate::pedigree::ModelInputTable;
use crate::types::IndividualId;

pub const MIN_GAP: i64 = 15;
pub const MODE_GAP: i64 = 28;
pub const MAX_GAP: i64 = 50;

/// Stand-in upper bound for a deceased individual's would-be current age.
const OPEN: i64 = 10_000;

fn triangular_cdf(x: f64) -> f64 {
    let (a, c, b) = (MIN_GAP as f64, MODE_GAP as f64, MAX_GAP as f64);
    if x <= a {
        0.0
    } else if x <= c {
        (x - a).powi(2) / ((b - a) * (c - a))
    } else if x < b {
        1.0 - (b - x).powi(2) / ((b - a) * (b - c))
    } else {
        1.0
    }
}

/// Integer generation gap in `[lo, hi]`, weighted by the triangular law.
fn sample_gap(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> i64 {
    let weights: Vec<f64> = (lo..=hi)
        .map(|k| triangular_cdf(k as f64 + 0.5) - triangular_cdf(k as f64 - 0.5))
        .collect();
    match WeightedIndex::new(&weights) {
        Ok(d) => lo + d.sample(rng) as i64,
        Err(_) => rng.gen_range(lo..=hi),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Bounds {
    lo: i64,
    hi: i64,
}

struct Problem {
    /// Representative of every row id (clones map to their source).
    rep: BTreeMap<IndividualId, IndividualId>,
    /// Unknown-age representatives and whether they are deceased.
    unknown: BTreeMap<IndividualId, bool>,
    bounds: BTreeMap<IndividualId, Bounds>,
    /// (parent, child) edges between propagating representatives.
    edges: Vec<(IndividualId, IndividualId)>,
    neighbours: BTreeMap<IndividualId, BTreeSet<IndividualId>>,
    max_age: i64,
}

impl Problem {
    fn new(table: &ModelInputTable, max_age: u32) -> Problem {
        let ids: BTreeSet<IndividualId> = table.rows.iter().map(|r| r.id).collect();
        let rep_of = |mut id: IndividualId| {
            let mut hops = 0;
            while let Some(src) = table.row(id).and_then(|r| r.clone_of).filter(|s| ids.contains(s)) {
                id = src;
                hops += 1;
                if hops > ids.len() {
                    break;
                }
            }
            id
        };
        let rep: BTreeMap<_, _> = table.rows.iter().map(|r| (r.id, rep_of(r.id))).collect();
        let mut unknown = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        let mut propagating = BTreeSet::new();
        for r in &table.rows {
            if rep[&r.id] != r.id {
                continue;
            }
            match r.age {
                Some(a) => {
                    if !r.deceased {
                        propagating.insert(r.id);
                    }
                    bounds.insert(r.id, Bounds { lo: a as i64, hi: a as i64 });
                }
                None => {
                    propagating.insert(r.id);
                    unknown.insert(r.id, r.deceased);
                    let floor = table
                        .rows
                        .iter()
                        .filter(|o| rep[&o.id] == r.id)
                        .flat_map(|o| o.diagnoses.values().chain(o.surgeries.values()))
                        .filter_map(|a| *a)
                        .max()
                        .unwrap_or(0);
                    let hi = if r.deceased { OPEN } else { max_age as i64 };
                    bounds.insert(r.id, Bounds { lo: floor as i64, hi });
                }
            }
        }
        let mut edges = BTreeSet::new();
        for r in &table.rows {
            for p in [r.mother, r.father].into_iter().flatten() {
                let (pp, cc) = (rep[&p], rep[&r.id]);
                if propagating.contains(&pp) && propagating.contains(&cc) {
                    edges.insert((pp, cc));
                }
            }
        }
        let mut neighbours: BTreeMap<IndividualId, BTreeSet<IndividualId>> = BTreeMap::new();
        for &(p, c) in &edges {
            neighbours.entry(p).or_default().insert(c);
            neighbours.entry(c).or_default().insert(p);
        }
        Problem {
            rep,
            unknown,
            bounds,
            edges: edges.into_iter().collect(),
            neighbours,
            max_age: max_age as i64,
        }
    }

    /// Narrows the bounds of unassigned unknowns until nothing changes.
    fn propagate(&self, bounds: &mut BTreeMap<IndividualId, Bounds>, fixed: &BTreeSet<IndividualId>) -> Result<(), EngineError> {
        let free = |id: &IndividualId| self.unknown.contains_key(id) && !fixed.contains(id);
        for _ in 0..10_000 {
            let mut changed = false;
            for &(p, c) in &self.edges {
                let (bp, bc) = (bounds[&p], bounds[&c]);
                if free(&p) {
                    let nb = Bounds {
                        lo: bp.lo.max(bc.lo + MIN_GAP),
                        hi: bp.hi.min(bc.hi + MAX_GAP),
                    };
                    if nb != bp {
                        bounds.insert(p, nb);
                        changed = true;
                    }
                }
                let bp = bounds[&p];
                if free(&c) {
                    let nb = Bounds {
                        lo: bc.lo.max(bp.lo - MAX_GAP),
                        hi: bc.hi.min(bp.hi - MIN_GAP),
                    };
                    if nb != bc {
                        bounds.insert(c, nb);
                        changed = true;
                    }
                }
            }
            for id in self.unknown.keys() {
                let b = bounds[id];
                if b.lo > b.hi {
                    return Err(EngineError::InfeasibleConstraints {
                        id: *id,
                        lo: b.lo,
                        hi: b.hi,
                    });
                }
            }
            if !changed {
                return Ok(());
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, base: &BTreeMap<IndividualId, Bounds>) -> Result<BTreeMap<IndividualId, i64>, EngineError> {
        let mut bounds = base.clone();
        let mut fixed: BTreeSet<IndividualId> = BTreeSet::new();
        let mut value: BTreeMap<IndividualId, i64> = BTreeMap::new();
        // anchors: representatives with a known age that take part in edges
        let mut queue: VecDeque<IndividualId> = VecDeque::new();
        for (id, b) in &bounds {
            if !self.unknown.contains_key(id) {
                value.insert(*id, b.lo);
                if self.neighbours.contains_key(id) {
                    queue.push_back(*id);
                }
            }
        }
        let parent_child: BTreeSet<(IndividualId, IndividualId)> = self.edges.iter().copied().collect();
        loop {
            while let Some(v) = queue.pop_front() {
                let av = value[&v];
                for &u in self.neighbours.get(&v).into_iter().flatten() {
                    if !self.unknown.contains_key(&u) || fixed.contains(&u) {
                        continue;
                    }
                    let b = bounds[&u];
                    let age = if parent_child.contains(&(u, v)) {
                        let (lo, hi) = ((b.lo - av).max(MIN_GAP), (b.hi - av).min(MAX_GAP));
                        if lo <= hi {
                            av + sample_gap(rng, lo, hi)
                        } else {
                            rng.gen_range(b.lo..=b.hi)
                        }
                    } else {
                        let (lo, hi) = ((av - b.hi).max(MIN_GAP), (av - b.lo).min(MAX_GAP));
                        if lo <= hi {
                            av - sample_gap(rng, lo, hi)
                        } else {
                            rng.gen_range(b.lo..=b.hi)
                        }
                    };
                    self.fix(u, age, &mut bounds, &mut fixed, &mut value)?;
                    queue.push_back(u);
                }
            }
            // an unknown with no path to any anchor: draw within its own range
            let Some((&u, &deceased)) = self.unknown.iter().find(|(id, _)| !fixed.contains(id)) else {
                break;
            };
            let b = bounds[&u];
            let hi = if deceased { b.hi.min(self.max_age) } else { b.hi };
            let age = rng.gen_range(b.lo..=hi.max(b.lo));
            self.fix(u, age, &mut bounds, &mut fixed, &mut value)?;
            queue.push_back(u);
        }
        Ok(value)
    }

    fn fix(
        &self,
        u: IndividualId,
        age: i64,
        bounds: &mut BTreeMap<IndividualId, Bounds>,
        fixed: &mut BTreeSet<IndividualId>,
        value: &mut BTreeMap<IndividualId, i64>,
    ) -> Result<(), EngineError> {
        bounds.insert(u, Bounds { lo: age, hi: age });
        fixed.insert(u);
        value.insert(u, age);
        self.propagate(bounds, fixed)
    }
}

/// `iterations` completed copies of `table`. Clones share their source's
/// draw; deceased individuals get `min(would-be age, max_age)`.
pub fn impute_ages(
    table: &ModelInputTable,
    max_age: u32,
    iterations: usize,
    seed: u64,
) -> Result<Vec<ModelInputTable>, EngineError> {
    let problem = Problem::new(table, max_age);
    if problem.unknown.is_empty() {
        return Ok(vec![table.clone(); iterations]);
    }
    let mut base = problem.bounds.clone();
    problem.propagate(&mut base, &BTreeSet::new())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let values = problem.draw(&mut rng, &base)?;
        let mut t = table.clone();
        for row in &mut t.rows {
            if row.age.is_none() {
                let r = problem.rep[&row.id];
                let v = values[&r].clamp(0, max_age as i64);
                row.age = Some(v as u32);
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// True when any row still lacks an age.
pub fn has_missing_ages(table: &ModelInputTable) -> bool {
    table.rows.iter().any(|r| r.age.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RunSettings;
    use crate::kb::synthetic::synthetic_bundle;
    use crate::pedigree::{CoreCounts, Pedigree};
    use crate::types::Sex;

    fn trio(child_age: i64) -> ModelInputTable {
        let kb = synthetic_bundle();
        let p = Pedigree::create("t", Sex::Female, child_age)
            .unwrap()
            .add_core_relatives(CoreCounts::default())
            .unwrap();
        ModelInputTable::from_pedigree(&p, &kb, &RunSettings::default()).unwrap()
    }

    #[test]
    fn parent_ages_respect_generation_gap() {
        let t = trio(40);
        for out in impute_ages(&t, 95, 50, 7).unwrap() {
            for r in out.rows.iter().filter(|r| !r.is_proband) {
                let a = r.age.unwrap();
                assert!((55..=90).contains(&a), "{a}");
            }
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let t = trio(30);
        assert_eq!(impute_ages(&t, 95, 5, 3).unwrap(), impute_ages(&t, 95, 5, 3).unwrap());
        assert_ne!(impute_ages(&t, 95, 5, 3).unwrap(), impute_ages(&t, 95, 5, 4).unwrap());
    }

    #[test]
    fn complete_table_is_copied() {
        let mut t = trio(30);
        for r in &mut t.rows {
            r.age.get_or_insert(60);
        }
        let out = impute_ages(&t, 95, 3, 1).unwrap();
        assert!(out.iter().all(|o| *o == t));
    }

    #[test]
    fn infeasible_bounds_are_reported() {
        // a living parent of an 85-year-old cannot be 100 or older
        let t = trio(85);
        assert!(matches!(
            impute_ages(&t, 95, 1, 1),
            Err(EngineError::InfeasibleConstraints { .. })
        ));
        // a deceased one can
        let mut t = trio(85);
        for r in t.rows.iter_mut().filter(|r| !r.is_proband) {
            r.deceased = true;
        }
        let out = impute_ages(&t, 95, 3, 1).unwrap();
        assert!(out.iter().flat_map(|o| &o.rows).all(|r| r.age.is_some()));
    }

    #[test]
    fn diagnosis_age_bounds_imputed_age() {
        let mut t = trio(20);
        let mother = t.proband().unwrap().mother.unwrap();
        let row = t.rows.iter_mut().find(|r| r.id == mother).unwrap();
        row.diagnoses.insert("breast".into(), Some(64));
        for out in impute_ages(&t, 95, 30, 11).unwrap() {
            let a = out.row(mother).unwrap().age.unwrap();
            assert!((64..=70).contains(&a), "{a}");
        }
    }
}
