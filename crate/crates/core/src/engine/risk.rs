//! Future cancer risk and contralateral breast cancer risk for the proband.
//!
//! An individual aged `t0` is cancer-free at exact age `t0`; the risk by
//! exact age `t` covers years `t0..t-1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::likelihood::{cancer_curves, organ_removed};
use super::{EngineError, PenetranceMode, RunSettings, StateSpace};
use crate::kb::{KnowledgeBase, MAX_HAZARD, NONCARRIER};
use crate::pedigree::ModelRow;
use crate::types::SurgeryKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub cancer: String,
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Horizon ages.
    pub ages: Vec<u32>,
    /// Genotype-mixed cumulative risk at each horizon.
    pub risk: Vec<f64>,
    /// Average-risk curve at the same horizons.
    pub baseline: Vec<f64>,
}

impl RiskCurve {
    fn not_applicable(cancer: &str, reason: String) -> RiskCurve {
        RiskCurve {
            cancer: cancer.to_string(),
            applicable: false,
            reason: Some(reason),
            ages: Vec::new(),
            risk: Vec::new(),
            baseline: Vec::new(),
        }
    }
}

/// `t0 + interval` for every interval that stays within `max_age`, then `max_age`.
pub fn horizons(t0: u32, intervals: &[u32], max_age: u32) -> Vec<u32> {
    let mut v: Vec<u32> = intervals.iter().map(|i| t0 + i).filter(|&t| t <= max_age).collect();
    if t0 < max_age && v.last() != Some(&max_age) {
        v.push(max_age);
    }
    v
}

/// Cumulative incidence in `[t0, t)` for each horizon `t`, optionally
/// discounted by all-cause survival from `t0` to the start of each year.
pub fn conditional_risk(hazard: &[f64], t0: u32, horizons: &[u32], mortality: Option<&[f64]>) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizons.len());
    let mut cum = 0.0;
    let mut free = 1.0;
    let mut alive = 1.0;
    let mut u = t0;
    for &t in horizons {
        while u < t {
            let h = hazard[u as usize];
            cum += h * free * alive;
            free *= 1.0 - h;
            if let Some(m) = mortality {
                alive *= 1.0 - m[u as usize];
            }
            u += 1;
        }
        out.push(cum);
    }
    out
}

fn mortality<'a>(kb: &'a KnowledgeBase, settings: &RunSettings, row: &ModelRow) -> Option<&'a [f64]> {
    match settings.penetrance_mode {
        PenetranceMode::Crude => kb.life_table.get(&row.sex).map(|c| c.values()),
        PenetranceMode::Net => None,
    }
}

fn proband_age(row: &ModelRow) -> Result<u32, EngineError> {
    row.age.ok_or(EngineError::MissingAge(row.id))
}

/// Risk curve for one model cancer, mixed over the posterior.
pub fn cancer_future_risk(
    posterior: &[f64],
    proband: &ModelRow,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
    cancer: &str,
) -> Result<RiskCurve, EngineError> {
    let spec = kb.cancer(cancer)?;
    let na = |reason: String| EngineError::CancerNotApplicable {
        cancer: cancer.to_string(),
        reason,
    };
    if !settings.cancers.iter().any(|c| c == cancer) {
        return Err(na("not part of the selected model".into()));
    }
    if !spec.sex_restriction.allows(proband.sex) {
        return Err(na(format!("does not apply to a {} proband", proband.sex)));
    }
    if proband.diagnoses.contains_key(cancer) {
        return Err(na("already diagnosed".into()));
    }
    if settings.apply_prophylactic && organ_removed(kb, proband, &spec.organ) {
        return Err(na(format!("{} removed by prophylactic surgery", spec.organ)));
    }
    let t0 = proband_age(proband)?;
    let ages = horizons(t0, &settings.risk_intervals, kb.max_age);
    let curves = cancer_curves(kb, settings, &proband.race, proband.sex)?;
    let cc = curves.iter().find(|c| c.cancer == cancer).expect("applicable cancer has curves");
    let mort = mortality(kb, settings, proband);
    // states sharing the same associated genes share a hazard
    let mut weight: BTreeMap<u64, f64> = BTreeMap::new();
    for (s, &p) in posterior.iter().enumerate() {
        if p > 0.0 {
            *weight.entry(space.carried_mask(s) & cc.mask).or_default() += p;
        }
    }
    let mut risk = vec![0.0; ages.len()];
    for (mask, w) in weight {
        let r = conditional_risk(&cc.hazard(mask), t0, &ages, mort);
        for (x, y) in risk.iter_mut().zip(r) {
            *x += w * y;
        }
    }
    let baseline = conditional_risk(&cc.baseline, t0, &ages, mort);
    Ok(RiskCurve {
        cancer: cancer.to_string(),
        applicable: true,
        reason: None,
        ages,
        risk,
        baseline,
    })
}

/// One curve per model cancer; inapplicable cancers carry the reason.
pub fn future_risk(
    posterior: &[f64],
    proband: &ModelRow,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
) -> Result<Vec<RiskCurve>, EngineError> {
    settings
        .cancers
        .iter()
        .map(|c| match cancer_future_risk(posterior, proband, kb, settings, space, c) {
            Err(EngineError::CancerNotApplicable { cancer, reason }) => Ok(RiskCurve::not_applicable(&cancer, reason)),
            other => other,
        })
        .collect()
}

/// Product of the relative-risk factors for the recorded CBC modifiers.
pub fn cbc_factor(kb: &KnowledgeBase, proband: &ModelRow) -> f64 {
    proband
        .cbc
        .levels()
        .into_iter()
        .map(|(m, l)| kb.cbc_factors.get(&(m.to_string(), l.to_string())).copied().unwrap_or(1.0))
        .product()
}

/// Contralateral breast cancer risk curve.
pub fn cbc_risk(
    posterior: &[f64],
    proband: &ModelRow,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
) -> Result<RiskCurve, EngineError> {
    if !proband.diagnoses.contains_key("breast") {
        return Err(EngineError::NotApplicable("the proband has no breast cancer diagnosis".into()));
    }
    if proband.surgeries.contains_key(&SurgeryKind::BilateralMastectomy) {
        return Err(EngineError::NotApplicable("bilateral mastectomy recorded".into()));
    }
    let t0 = proband_age(proband)?;
    let ages = horizons(t0, &settings.risk_intervals, kb.max_age);
    let factor = cbc_factor(kb, proband);
    let base = kb
        .cbc_hazard
        .get(NONCARRIER)
        .ok_or_else(|| EngineError::InvalidInput("bundle has no non-carrier CBC curve".into()))?;
    let gene_curves: Vec<(usize, &[f64])> = settings
        .genes
        .iter()
        .enumerate()
        .filter_map(|(i, g)| kb.cbc_hazard.get(g).map(|c| (i, c.values())))
        .collect();
    let mask = gene_curves.iter().fold(0u64, |m, (i, _)| m | 1 << i);
    let hazard_for = |carried: u64| -> Vec<f64> {
        let mut h = base.values().to_vec();
        for (g, curve) in &gene_curves {
            if carried >> g & 1 == 1 {
                for (x, &y) in h.iter_mut().zip(curve.iter()) {
                    *x = x.max(y);
                }
            }
        }
        h.iter().map(|x| (x * factor).min(MAX_HAZARD)).collect()
    };
    let mort = mortality(kb, settings, proband);
    let mut weight: BTreeMap<u64, f64> = BTreeMap::new();
    for (s, &p) in posterior.iter().enumerate() {
        if p > 0.0 {
            *weight.entry(space.carried_mask(s) & mask).or_default() += p;
        }
    }
    let mut risk = vec![0.0; ages.len()];
    for (m, w) in weight {
        for (x, y) in risk.iter_mut().zip(conditional_risk(&hazard_for(m), t0, &ages, mort)) {
            *x += w * y;
        }
    }
    let baseline = conditional_risk(&hazard_for(0), t0, &ages, mort);
    Ok(RiskCurve {
        cancer: "contralateral_breast".into(),
        applicable: true,
        reason: None,
        ages,
        risk,
        baseline,
    })
}

pub(crate) fn cbc_or_reason(
    posterior: &[f64],
    proband: &ModelRow,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
) -> Result<RiskCurve, EngineError> {
    match cbc_risk(posterior, proband, kb, settings, space) {
        Err(EngineError::NotApplicable(reason)) => Ok(RiskCurve::not_applicable("contralateral_breast", reason)),
        other => other,
    }
}
