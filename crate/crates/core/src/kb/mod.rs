//! Versioned gene/cancer knowledge bundle.
//!
//! Penetrance is stored as annual hazards: `h(a)` is the probability of a
//! first diagnosis during year of age `a` given diagnosis-free entry into that
//! year. Cumulative risk is always derived as `F(a) = 1 - prod_{t<=a}(1 - h(t))`.

mod bundle;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{MarkerStatus, Sex, SurgeryKind};

pub use bundle::{load_bundle, save_bundle, Manifest, BUNDLE_FILES};

/// Upper bound applied to any adjusted annual hazard.
pub const MAX_HAZARD: f64 = 1.0 - 1e-6;

/// Key used for the non-carrier curve in the CBC hazard table.
pub const NONCARRIER: &str = "noncarrier";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },
    #[error("value out of range in {file}: {message}")]
    Range { file: String, message: String },
    #[error("dangling reference in {file}: {message}")]
    DanglingRef { file: String, message: String },
    #[error("checksum mismatch for {file}")]
    Checksum { file: String },
    #[error("unknown gene '{0}'")]
    UnknownGene(String),
    #[error("unknown cancer '{0}'")]
    UnknownCancer(String),
    #[error("unknown ancestry '{0}'")]
    UnknownAncestry(String),
    #[error("cancer '{cancer}' does not apply to sex {sex}")]
    SexMismatch { cancer: String, sex: Sex },
    #[error("invalid age interval {from}..{to}")]
    InvalidInterval { from: u32, to: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Per-year hazard of first event, indexed by age `0..=max_age`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve(Vec<f64>);

impl HazardCurve {
    pub fn new(values: Vec<f64>) -> Self {
        HazardCurve(values)
    }

    pub fn zeros(max_age: u32) -> Self {
        HazardCurve(vec![0.0; max_age as usize + 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hazard(&self, age: u32) -> f64 {
        self.0[age as usize]
    }

    /// Probability of no event through the end of year `age`.
    pub fn survival_through(&self, age: u32) -> f64 {
        self.0[..=age as usize].iter().map(|h| 1.0 - h).product()
    }

    /// `F(age)`, the cumulative probability of an event by the end of year `age`.
    pub fn cumulative(&self, age: u32) -> f64 {
        1.0 - self.survival_through(age)
    }

    /// Multiplies every hazard by `factor`, clamping below one.
    pub fn scaled(&self, factor: f64) -> HazardCurve {
        HazardCurve(self.0.iter().map(|h| (h * factor).min(MAX_HAZARD)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SexRestriction {
    Any,
    Female,
    Male,
}

impl SexRestriction {
    pub fn allows(self, sex: Sex) -> bool {
        match self {
            SexRestriction::Any => true,
            SexRestriction::Female => sex == Sex::Female,
            SexRestriction::Male => sex == Sex::Male,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SexRestriction::Any => "any",
            SexRestriction::Female => "female",
            SexRestriction::Male => "male",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CancerSpec {
    pub name: String,
    pub sex_restriction: SexRestriction,
    /// Organ whose removal zeroes this cancer's hazard.
    pub organ: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSpec {
    pub name: String,
    pub allele_frequency: f64,
    pub ancestry_frequencies: BTreeMap<String, f64>,
    pub penetrance: BTreeMap<(String, Sex), HazardCurve>,
    /// (race, cancer) -> hazard multiplier.
    pub race_adjustments: BTreeMap<(String, String), f64>,
}

impl GeneSpec {
    /// Carrier hazard for `cancer`/`sex` after the race multiplier, if the
    /// gene is associated with the cancer at all.
    pub fn adjusted_penetrance(&self, cancer: &str, sex: Sex, race: &str) -> Option<HazardCurve> {
        let curve = self.penetrance.get(&(cancer.to_string(), sex))?;
        match self.race_adjustments.get(&(race.to_string(), cancer.to_string())) {
            Some(&m) => Some(curve.scaled(m)),
            None => Some(curve.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MarkerKey {
    pub cancer: String,
    pub marker: String,
    pub status: MarkerStatus,
    pub gene: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDef {
    pub genes: Vec<String>,
    pub cancers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub version: String,
    pub max_age: u32,
    pub synthetic: bool,
    pub races: Vec<String>,
    pub ethnicities: Vec<String>,
    pub ancestries: Vec<String>,
    /// cancer -> tumor markers recorded for that cancer.
    pub marker_sets: BTreeMap<String, Vec<String>>,
    pub surgery_organs: BTreeMap<SurgeryKind, String>,
    pub models: BTreeMap<String, ModelDef>,
    pub genes: Vec<GeneSpec>,
    pub cancers: Vec<CancerSpec>,
    /// Average-risk (non-carrier) hazards per cancer and sex.
    pub baseline: BTreeMap<(String, Sex), HazardCurve>,
    /// All-cause annual mortality per sex.
    pub life_table: BTreeMap<Sex, HazardCurve>,
    pub marker_lr: BTreeMap<MarkerKey, f64>,
    /// Contralateral breast cancer hazards keyed by gene, plus [`NONCARRIER`].
    pub cbc_hazard: BTreeMap<String, HazardCurve>,
    /// (modifier, level) -> relative risk.
    pub cbc_factors: BTreeMap<(String, String), f64>,
}

impl KnowledgeBase {
    pub fn gene(&self, name: &str) -> Result<&GeneSpec, KbError> {
        self.genes
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| KbError::UnknownGene(name.to_string()))
    }

    pub fn cancer(&self, name: &str) -> Result<&CancerSpec, KbError> {
        self.cancers
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| KbError::UnknownCancer(name.to_string()))
    }

    pub fn has_cancer(&self, name: &str) -> bool {
        self.cancers.iter().any(|c| c.name == name)
    }

    pub fn gene_names(&self) -> Vec<String> {
        self.genes.iter().map(|g| g.name.clone()).collect()
    }

    pub fn cancer_names(&self) -> Vec<String> {
        self.cancers.iter().map(|c| c.name.clone()).collect()
    }

    /// Ancestry override when the bundle defines one, else the base frequency.
    pub fn effective_allele_frequency(&self, gene: &str, ancestry: &str) -> Result<f64, KbError> {
        let spec = self.gene(gene)?;
        if !self.ancestries.iter().any(|a| a == ancestry) {
            return Err(KbError::UnknownAncestry(ancestry.to_string()));
        }
        Ok(spec
            .ancestry_frequencies
            .get(ancestry)
            .copied()
            .unwrap_or(spec.allele_frequency))
    }

    /// Hardy-Weinberg probability of carrying at least one variant allele.
    pub fn carrier_prior(&self, gene: &str, ancestry: &str) -> Result<f64, KbError> {
        let f = self.effective_allele_frequency(gene, ancestry)?;
        Ok(carrier_probability(f))
    }

    pub fn baseline_curve(&self, cancer: &str, sex: Sex) -> Result<&HazardCurve, KbError> {
        let spec = self.cancer(cancer)?;
        if !spec.sex_restriction.allows(sex) {
            return Err(KbError::SexMismatch {
                cancer: cancer.to_string(),
                sex,
            });
        }
        self.baseline
            .get(&(cancer.to_string(), sex))
            .ok_or_else(|| KbError::UnknownCancer(cancer.to_string()))
    }

    /// Average-risk probability of a first diagnosis in `(from, to]` given
    /// diagnosis-free at `from`.
    pub fn baseline_cumulative_risk(
        &self,
        cancer: &str,
        sex: Sex,
        from: u32,
        to: u32,
    ) -> Result<f64, KbError> {
        if from > to || to > self.max_age {
            return Err(KbError::InvalidInterval { from, to });
        }
        let curve = self.baseline_curve(cancer, sex)?;
        if from == to {
            return Ok(0.0);
        }
        let f_from = curve.cumulative(from);
        let f_to = curve.cumulative(to);
        Ok((f_to - f_from) / (1.0 - f_from))
    }

    /// Organ removed by `kind`, if the bundle maps it to one.
    pub fn organ_for(&self, kind: SurgeryKind) -> Option<&str> {
        self.surgery_organs.get(&kind).map(String::as_str)
    }

    pub fn marker_cancer(&self, marker: &str) -> Option<&str> {
        self.marker_sets
            .iter()
            .find(|(_, ms)| ms.iter().any(|m| m == marker))
            .map(|(c, _)| c.as_str())
    }

    pub fn all_markers(&self) -> Vec<String> {
        self.marker_sets.values().flatten().cloned().collect()
    }
}

/// `2f(1-f) + f^2`.
pub fn carrier_probability(f: f64) -> f64 {
    2.0 * f * (1.0 - f) + f * f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carrier_probability_edges() {
        assert_eq!(carrier_probability(0.0), 0.0);
        assert_eq!(carrier_probability(0.5), 0.75);
    }

    #[test]
    fn carrier_probability_monotone_below_half() {
        let mut prev = 0.0;
        for i in 1..500 {
            let p = carrier_probability(i as f64 / 1000.0);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn hazard_curve_cumulative_matches_product() {
        let c = HazardCurve::new(vec![0.1, 0.2, 0.0, 0.5]);
        assert!((c.cumulative(0) - 0.1).abs() < 1e-15);
        assert!((c.cumulative(1) - (1.0 - 0.9 * 0.8)).abs() < 1e-15);
        assert!((c.cumulative(3) - (1.0 - 0.9 * 0.8 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn scaling_clamps_below_one() {
        let c = HazardCurve::new(vec![0.6, 0.1]).scaled(3.0);
        assert!(c.hazard(0) < 1.0);
        assert!((c.hazard(1) - 0.3).abs() < 1e-12);
    }
}
