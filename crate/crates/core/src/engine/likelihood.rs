//! Per-individual phenotype likelihood over the pared state space.
//!
//! Age convention: an individual aged `A` has lived through years
//! `0..A-1`. A diagnosis at age `a` happens during year `a`.

use std::collections::{BTreeMap, HashMap};

use super::{EngineError, RunSettings, StateSpace};
use crate::kb::KnowledgeBase;
use crate::pedigree::{GermlineCell, ModelRow};
use crate::types::{IndividualId, Sex};

/// Hazard curves for one cancer under one (race, sex): the baseline and the
/// genes that carry their own curve.
#[derive(Debug, Clone)]
pub(crate) struct CancerCurves {
    pub cancer: String,
    pub organ: String,
    pub baseline: Vec<f64>,
    pub genes: Vec<(usize, Vec<f64>)>,
    /// Mask of gene indices present in `genes`.
    pub mask: u64,
}

impl CancerCurves {
    /// Elementwise max of the baseline and every carried gene's curve.
    pub fn hazard(&self, carried: u64) -> Vec<f64> {
        let mut h = self.baseline.clone();
        for (g, curve) in &self.genes {
            if carried >> g & 1 == 1 {
                for (x, &y) in h.iter_mut().zip(curve) {
                    if y > *x {
                        *x = y;
                    }
                }
            }
        }
        h
    }
}

/// Curves for every model cancer applicable to a sex, race-adjusted.
pub(crate) fn cancer_curves(
    kb: &KnowledgeBase,
    settings: &RunSettings,
    race: &str,
    sex: Sex,
) -> Result<Vec<CancerCurves>, EngineError> {
    let mut out = Vec::new();
    for c in &settings.cancers {
        let spec = kb.cancer(c)?;
        if !spec.sex_restriction.allows(sex) {
            continue;
        }
        let baseline = kb.baseline_curve(c, sex)?.values().to_vec();
        let mut genes = Vec::new();
        let mut mask = 0u64;
        for (gi, g) in settings.genes.iter().enumerate() {
            if let Some(curve) = kb.gene(g)?.adjusted_penetrance(c, sex, race) {
                genes.push((gi, curve.values().to_vec()));
                mask |= 1 << gi;
            }
        }
        out.push(CancerCurves {
            cancer: c.clone(),
            organ: spec.organ.clone(),
            baseline,
            genes,
            mask,
        });
    }
    Ok(out)
}

/// Curve sets cached per (race, sex).
#[derive(Default)]
pub(crate) struct CurveCache(BTreeMap<(String, Sex), Vec<CancerCurves>>);

impl CurveCache {
    pub fn get(
        &mut self,
        kb: &KnowledgeBase,
        settings: &RunSettings,
        race: &str,
        sex: Sex,
    ) -> Result<&[CancerCurves], EngineError> {
        let key = (race.to_string(), sex);
        if !self.0.contains_key(&key) {
            let curves = cancer_curves(kb, settings, race, sex)?;
            self.0.insert(key.clone(), curves);
        }
        Ok(&self.0[&key])
    }
}

/// Earliest known age at which the organ was removed.
pub(crate) fn removal_age(kb: &KnowledgeBase, row: &ModelRow, organ: &str) -> Option<u32> {
    row.surgeries
        .iter()
        .filter(|(k, _)| kb.organ_for(**k) == Some(organ))
        .filter_map(|(_, a)| *a)
        .min()
}

pub(crate) fn organ_removed(kb: &KnowledgeBase, row: &ModelRow, organ: &str) -> bool {
    row.surgeries.keys().any(|k| kb.organ_for(*k) == Some(organ))
}

/// Likelihood of one cancer's observation under hazard `h`.
fn cancer_term(h: &[f64], diagnosis: Option<Option<u32>>, age: u32) -> f64 {
    let last = h.len() - 1;
    let surv = |upto: usize| h[..upto.min(h.len())].iter().map(|x| 1.0 - x).product::<f64>();
    match diagnosis {
        Some(Some(a)) => {
            let a = (a as usize).min(last);
            h[a] * surv(a)
        }
        Some(None) => 1.0 - surv(age as usize + 1),
        None => surv(age as usize),
    }
}

/// Likelihood of `row`'s phenotype for every state. `proband_like` marks the
/// proband and its clones, whose germline results are gated by settings.
pub(crate) fn row_likelihood(
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
    cache: &mut CurveCache,
    row: &ModelRow,
    proband_like: bool,
) -> Result<Vec<f64>, EngineError> {
    let age = row.age.ok_or(EngineError::MissingAge(row.id))?;
    let mut out = vec![1.0; space.len()];

    if !proband_like || settings.use_proband_germline {
        for (gi, g) in settings.genes.iter().enumerate() {
            let need = match row.germline(g) {
                GermlineCell::Positive => true,
                GermlineCell::Negative => false,
                GermlineCell::Untested | GermlineCell::Vus => continue,
            };
            for (s, l) in out.iter_mut().enumerate() {
                if space.carries(s, gi) != need {
                    *l = 0.0;
                }
            }
        }
    }

    let curves = cache.get(kb, settings, &row.race, row.sex)?;
    for cc in curves {
        let diagnosis = row.diagnoses.get(&cc.cancer).copied();
        let cut = if settings.apply_prophylactic {
            removal_age(kb, row, &cc.organ).filter(|&s| match diagnosis {
                Some(Some(a)) => a <= s,
                _ => true,
            })
        } else {
            None
        };
        let mut memo: HashMap<u64, f64> = HashMap::new();
        for (s, l) in out.iter_mut().enumerate() {
            if *l == 0.0 {
                continue;
            }
            let key = space.carried_mask(s) & cc.mask;
            let v = *memo.entry(key).or_insert_with(|| {
                let mut h = cc.hazard(key);
                if let Some(cut) = cut {
                    h.iter_mut().skip(cut as usize + 1).for_each(|x| *x = 0.0);
                }
                cancer_term(&h, diagnosis, age)
            });
            *l *= v;
        }
    }

    for (marker, status) in &row.markers {
        let Some(cancer) = kb.marker_cancer(marker) else { continue };
        if !row.diagnoses.contains_key(cancer) || !settings.cancers.iter().any(|c| c == cancer) {
            continue;
        }
        let lrs: Vec<(usize, f64)> = settings
            .genes
            .iter()
            .enumerate()
            .filter_map(|(gi, g)| {
                kb.marker_lr
                    .get(&crate::kb::MarkerKey {
                        cancer: cancer.to_string(),
                        marker: marker.clone(),
                        status: *status,
                        gene: g.clone(),
                    })
                    .map(|&lr| (gi, lr))
            })
            .collect();
        for (s, l) in out.iter_mut().enumerate() {
            for &(gi, lr) in &lrs {
                if space.carries(s, gi) {
                    *l *= lr;
                }
            }
        }
    }
    Ok(out)
}

/// True for the proband row and rows cloned from it.
pub(crate) fn is_proband_like(row: &ModelRow, proband: IndividualId) -> bool {
    row.is_proband || row.clone_of == Some(proband)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::synthetic::synthetic_bundle;
    use crate::pedigree::CbcModifiers;
    use crate::types::SurgeryKind;

    fn row(sex: Sex, age: u32) -> ModelRow {
        ModelRow {
            id: IndividualId(1),
            mother: None,
            father: None,
            sex,
            age: Some(age),
            deceased: false,
            race: "AllRaces".into(),
            ethnicity: String::new(),
            ancestry: "Other".into(),
            is_proband: true,
            clone_of: None,
            diagnoses: BTreeMap::new(),
            surgeries: BTreeMap::new(),
            markers: BTreeMap::new(),
            germline: BTreeMap::new(),
            cbc: CbcModifiers::default(),
        }
    }

    fn setup() -> (KnowledgeBase, RunSettings, StateSpace) {
        let kb = synthetic_bundle();
        let s = RunSettings::default().resolved(&kb).unwrap();
        let space = StateSpace::for_settings(&s);
        (kb, s, space)
    }

    #[test]
    fn newborn_is_uninformative() {
        let (kb, s, space) = setup();
        let l = row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &row(Sex::Female, 0), true).unwrap();
        assert!(l.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn breast_diagnosis_matches_year_product() {
        let (kb, s, space) = setup();
        let mut r = row(Sex::Female, 50);
        r.diagnoses.insert("breast".into(), Some(42));
        let l = row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &r, true).unwrap();
        let brca1 = s.genes.iter().position(|g| g == "BRCA1").unwrap();
        let state = space.index_of(&crate::engine::GenotypeState {
            levels: (0..s.genes.len()).map(|g| (g == brca1) as u8).collect(),
        });
        let state = state.unwrap();
        // hand-rolled product for BRCA1 carriers over all model cancers
        let mut want = 1.0;
        for c in &s.cancers {
            let spec = kb.cancer(c).unwrap();
            if !spec.sex_restriction.allows(Sex::Female) {
                continue;
            }
            let base = kb.baseline_curve(c, Sex::Female).unwrap().values().to_vec();
            let pen = kb.gene("BRCA1").unwrap().penetrance.get(&(c.clone(), Sex::Female)).cloned();
            let h: Vec<f64> = (0..=95)
                .map(|t| match &pen {
                    Some(p) => base[t].max(p.values()[t]),
                    None => base[t],
                })
                .collect();
            if c == "breast" {
                want *= h[42];
                for t in 0..42 {
                    want *= 1.0 - h[t];
                }
            } else {
                for t in 0..50 {
                    want *= 1.0 - h[t];
                }
            }
        }
        assert!((l[state] - want).abs() < 1e-15 * want.max(1.0), "{} vs {}", l[state], want);
        assert!(l[state] > l[0]);
    }

    #[test]
    fn germline_constraints() {
        let (kb, s, space) = setup();
        let mut r = row(Sex::Female, 30);
        r.germline.insert("BRCA1".into(), GermlineCell::Positive);
        r.germline.insert("BRCA2".into(), GermlineCell::Negative);
        r.germline.insert("G3".into(), GermlineCell::Vus);
        let l = row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &r, true).unwrap();
        for st in 0..space.len() {
            let ok = space.carries(st, 0) && !space.carries(st, 1);
            assert_eq!(l[st] > 0.0, ok, "{}", space.label(st));
        }
        let gated = RunSettings {
            use_proband_germline: false,
            ..s.clone()
        };
        let l = row_likelihood(&kb, &gated, &space, &mut CurveCache::default(), &r, true).unwrap();
        assert!(l.iter().all(|&x| x > 0.0));
        // relatives are never gated
        let l = row_likelihood(&kb, &gated, &space, &mut CurveCache::default(), &r, false).unwrap();
        assert_eq!(l[0], 0.0);
    }

    #[test]
    fn prophylactic_surgery_truncates_hazard() {
        let (kb, s, space) = setup();
        let mut r = row(Sex::Female, 70);
        r.surgeries.insert(SurgeryKind::BilateralOophorectomy, Some(40));
        let with = row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &r, true).unwrap();
        let off = RunSettings {
            apply_prophylactic: false,
            ..s.clone()
        };
        let without = row_likelihood(&kb, &off, &space, &mut CurveCache::default(), &r, true).unwrap();
        // removing ovaries makes staying ovarian-cancer-free more likely
        assert!(with[0] > without[0]);
    }

    #[test]
    fn unknown_diagnosis_age_uses_cumulative_risk() {
        let (kb, s, _) = setup();
        let one = RunSettings {
            model: super::super::ModelName::Custom,
            genes: vec!["BRCA1".into()],
            cancers: vec!["breast".into()],
            max_carriers: 1,
            ..s
        };
        let space = StateSpace::for_settings(&one);
        let mut r = row(Sex::Female, 60);
        r.diagnoses.insert("breast".into(), None);
        let l = row_likelihood(&kb, &one, &space, &mut CurveCache::default(), &r, true).unwrap();
        let f = kb.baseline_curve("breast", Sex::Female).unwrap().cumulative(60);
        assert!((l[0] - f).abs() < 1e-15);
    }

    #[test]
    fn marker_ratios_apply_to_carriers() {
        let (kb, s, space) = setup();
        let mut r = row(Sex::Female, 50);
        r.diagnoses.insert("breast".into(), Some(45));
        let base = row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &r, true).unwrap();
        r.markers.insert("ER".into(), crate::types::MarkerStatus::Negative);
        let with = row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &r, true).unwrap();
        assert_eq!(with[0], base[0]);
        assert!((with[1] / base[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_age_is_an_error() {
        let (kb, s, space) = setup();
        let mut r = row(Sex::Male, 1);
        r.age = None;
        assert!(matches!(
            row_likelihood(&kb, &s, &space, &mut CurveCache::default(), &r, false),
            Err(EngineError::MissingAge(_))
        ));
    }
}
