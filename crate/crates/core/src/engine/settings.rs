use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::kb::{KbError, KnowledgeBase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelName {
    Fam3PRO22,
    Fam3PRO11,
    #[serde(rename = "custom")]
    Custom,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Fam3PRO22 => "Fam3PRO22",
            ModelName::Fam3PRO11 => "Fam3PRO11",
            ModelName::Custom => "custom",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fam3pro22" => Ok(ModelName::Fam3PRO22),
            "fam3pro11" => Ok(ModelName::Fam3PRO11),
            "custom" => Ok(ModelName::Custom),
            other => Err(format!("unknown model '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenetranceMode {
    Crude,
    #[default]
    Net,
}

impl FromStr for PenetranceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crude" => Ok(PenetranceMode::Crude),
            "net" => Ok(PenetranceMode::Net),
            other => Err(format!("unknown penetrance mode '{other}'")),
        }
    }
}

/// Model configuration. Empty `genes`/`cancers` mean "the model's own list";
/// call [`RunSettings::resolved`] to fill them from a knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub model: ModelName,
    pub genes: Vec<String>,
    pub cancers: Vec<String>,
    /// Paring parameter: most genes carried simultaneously.
    pub max_carriers: usize,
    pub risk_intervals: Vec<u32>,
    pub default_race: String,
    pub default_ancestry: String,
    pub imputation_iterations: usize,
    pub penetrance_mode: PenetranceMode,
    pub apply_prophylactic: bool,
    pub use_proband_germline: bool,
    pub brca_multi_variant: bool,
    pub auto_break_loops: bool,
    pub seed: u64,
    /// Upper bound on states x members handled by the peeler.
    pub max_state_cells: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            model: ModelName::Fam3PRO22,
            genes: Vec::new(),
            cancers: Vec::new(),
            max_carriers: 2,
            risk_intervals: vec![1, 5, 10],
            default_race: "AllRaces".into(),
            default_ancestry: "Other".into(),
            imputation_iterations: 10,
            penetrance_mode: PenetranceMode::Net,
            apply_prophylactic: true,
            use_proband_germline: true,
            brca_multi_variant: false,
            auto_break_loops: true,
            seed: 1,
            max_state_cells: 100_000,
        }
    }
}

impl RunSettings {
    /// Fills gene and cancer lists from the named model and checks every
    /// field against the knowledge base.
    pub fn resolved(&self, kb: &KnowledgeBase) -> Result<RunSettings, EngineError> {
        let mut s = self.clone();
        if s.model != ModelName::Custom {
            let def = kb
                .models
                .get(s.model.as_str())
                .ok_or_else(|| EngineError::InvalidSettings(format!("bundle has no model {}", s.model)))?;
            if s.genes.is_empty() {
                s.genes = def.genes.clone();
            }
            if s.cancers.is_empty() {
                s.cancers = def.cancers.clone();
            }
        }
        if s.genes.is_empty() || s.cancers.is_empty() {
            return Err(EngineError::InvalidSettings(
                "a custom model needs at least one gene and one cancer".into(),
            ));
        }
        for g in &s.genes {
            kb.gene(g)?;
        }
        for c in &s.cancers {
            kb.cancer(c)?;
        }
        let distinct = |v: &[String]| v.iter().collect::<std::collections::BTreeSet<_>>().len() == v.len();
        if !distinct(&s.genes) || !distinct(&s.cancers) {
            return Err(EngineError::InvalidSettings("duplicate gene or cancer".into()));
        }
        if s.genes.len() > 64 {
            return Err(EngineError::InvalidSettings("at most 64 genes per run".into()));
        }
        if s.max_carriers == 0 || s.max_carriers > s.genes.len() {
            return Err(EngineError::InvalidSettings(format!(
                "max carried genes must be in 1..={}, got {}",
                s.genes.len(),
                s.max_carriers
            )));
        }
        if s.risk_intervals.is_empty()
            || s.risk_intervals[0] == 0
            || s.risk_intervals.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(EngineError::InvalidSettings(
                "risk intervals must be positive and strictly increasing".into(),
            ));
        }
        if s.imputation_iterations == 0 {
            return Err(EngineError::InvalidSettings("imputation iterations must be at least 1".into()));
        }
        if !kb.races.contains(&s.default_race) {
            return Err(EngineError::InvalidSettings(format!("unknown race '{}'", s.default_race)));
        }
        if !kb.ancestries.contains(&s.default_ancestry) {
            return Err(KbError::UnknownAncestry(s.default_ancestry.clone()).into());
        }
        Ok(s)
    }
}
