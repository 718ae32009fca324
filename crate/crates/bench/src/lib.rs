//! Shared benchmark inputs.

use famrisk_core::engine::{impute_ages, StateSpace};
use famrisk_core::kb::synthetic::synthetic_bundle;
use famrisk_core::{fixtures, prepare, KnowledgeBase, ModelInputTable, RunSettings};

/// A fully prepared peeling input: one imputed table of the example
/// pedigree with its resolved settings and state space.
pub struct PeelCase {
    pub kb: KnowledgeBase,
    pub settings: RunSettings,
    pub table: ModelInputTable,
    pub space: StateSpace,
}

/// The example pedigree at paring level `max_carriers`, ages imputed once.
pub fn example_peel_case(max_carriers: usize) -> PeelCase {
    let kb = synthetic_bundle();
    let s = RunSettings { max_carriers, ..RunSettings::default() };
    let prepared = prepare(&fixtures::example_pedigree(), &kb, &s).expect("example pedigree prepares");
    let table = impute_ages(&prepared.table, kb.max_age, 1, s.seed)
        .expect("example ages impute")
        .remove(0);
    let space = StateSpace::for_settings(&prepared.settings);
    PeelCase { kb, settings: prepared.settings, table, space }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_case_is_complete() {
        let c = example_peel_case(2);
        assert!(c.table.rows.iter().all(|r| r.age.is_some()));
        assert_eq!(c.space.len(), 1 + 22 + 22 * 21 / 2);
    }
}
