//! Fully linked pedigree model and its builder operations.
//!
//! A [`Pedigree`] is an immutable value: every builder operation returns a new
//! pedigree with a higher revision, so the persistence layer can store each
//! acknowledged state as-is.

mod builder;
mod loops;
mod table;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::types::{IndividualId, MarkerStatus, Sex, SurgeryKind, TriState};

pub use builder::{ChangeEvent, CoreCounts, IndividualPatch, Mutation, Relation};
pub use loops::{count_loops, detect_and_break_loops, ClonePair};
pub use table::{GermlineCell, ModelInputTable, ModelRow, CBC_COLUMNS};
pub use validate::{validate_pedigree, Issue, IssueCode, Severity, ValidationReport};

/// Largest age accepted anywhere in a pedigree.
pub const MAX_AGE: u32 = 95;

#[derive(Debug, Error)]
pub enum PedigreeError {
    #[error("pedigree id must not be empty")]
    EmptyPedigreeId,
    #[error("invalid age {0}")]
    InvalidAge(i64),
    #[error("no individual with id {0}")]
    UnknownIndividual(IndividualId),
    #[error("individual {0} already has both parents")]
    SlotOccupied(IndividualId),
    #[error("sex conflict: {0}")]
    SexConflict(String),
    #[error("the proband cannot be removed")]
    CannotRemoveProband,
    #[error("removing {0} would orphan their children")]
    WouldOrphanChildren(IndividualId),
    #[error("removing {0} would disconnect relatives from the proband")]
    WouldDisconnect(IndividualId),
    #[error("individual {id}: diagnosis of {cancer} at {dx_age} is after age {age}")]
    DiagnosisAfterDeath {
        id: IndividualId,
        cancer: String,
        dx_age: u32,
        age: u32,
    },
    #[error("individual {id}: surgery at {surgery_age} is after age {age}")]
    SurgeryAfterAge {
        id: IndividualId,
        surgery_age: u32,
        age: u32,
    },
    #[error("individual {id}: {cancer} cannot be diagnosed in a {sex} individual")]
    SexRestrictedCancer {
        id: IndividualId,
        cancer: String,
        sex: Sex,
    },
    #[error("individual {id}: {kind:?} is not possible for a {sex} individual")]
    SurgerySexConflict {
        id: IndividualId,
        kind: SurgeryKind,
        sex: Sex,
    },
    #[error("individual {id}: {cancer} recorded more than once")]
    DuplicateDiagnosis { id: IndividualId, cancer: String },
    #[error("individual {id}: tumor marker {marker} recorded without a {cancer} diagnosis")]
    MarkerWithoutCancer {
        id: IndividualId,
        marker: String,
        cancer: String,
    },
    #[error("individual {id}: unknown tumor marker {marker}")]
    UnknownMarker { id: IndividualId, marker: String },
    #[error("individual {0}: CBC modifiers require a breast cancer diagnosis")]
    CbcWithoutBreastCancer(IndividualId),
    #[error("individual {id}: finding for {gene} but the gene was not tested")]
    FindingNotTested { id: IndividualId, gene: String },
    #[error("individual {id}: unknown {field} label '{label}'")]
    UnknownLabel {
        id: IndividualId,
        field: &'static str,
        label: String,
    },
    #[error("pedigree failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("model table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancerDiagnosis {
    pub cancer: String,
    pub age: Option<u32>,
    /// False for free-text extras; those never enter the likelihood.
    #[serde(default)]
    pub is_model_cancer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Surgery {
    pub kind: SurgeryKind,
    pub age: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "PLP")]
    Plp,
    #[serde(rename = "VUS")]
    Vus,
    #[serde(rename = "BLB")]
    Blb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nucleotide: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protein: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zygosity: Option<String>,
}

impl Finding {
    pub fn new(classification: Classification) -> Self {
        Finding {
            classification,
            nucleotide: None,
            protein: None,
            zygosity: None,
        }
    }
}

/// Germline panel result. Genes tested without a finding count as negative.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PanelResult {
    pub panel_name: String,
    pub genes_tested: BTreeSet<String>,
    #[serde(default)]
    pub findings: BTreeMap<String, Finding>,
}

impl PanelResult {
    pub fn cell(&self, gene: &str) -> GermlineCell {
        if !self.genes_tested.contains(gene) {
            return GermlineCell::Untested;
        }
        match self.findings.get(gene).map(|f| f.classification) {
            Some(Classification::Plp) => GermlineCell::Positive,
            Some(Classification::Vus) => GermlineCell::Vus,
            Some(Classification::Blb) | None => GermlineCell::Negative,
        }
    }
}

/// Tumor marker results keyed by marker name (e.g. `ER`, `MSI`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TumorMarkers(pub BTreeMap<String, MarkerStatus>);

impl TumorMarkers {
    pub fn get(&self, marker: &str) -> MarkerStatus {
        self.0.get(marker).copied().unwrap_or_default()
    }

    pub fn observed(&self) -> impl Iterator<Item = (&str, MarkerStatus)> {
        self.0
            .iter()
            .filter(|(_, s)| **s != MarkerStatus::Untested)
            .map(|(m, s)| (m.as_str(), *s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstBreastCancerType {
    PureInvasive,
    MixedInvasive,
    Dcis,
}

impl FirstBreastCancerType {
    pub fn as_str(self) -> &'static str {
        match self {
            FirstBreastCancerType::PureInvasive => "pure_invasive",
            FirstBreastCancerType::MixedInvasive => "mixed_invasive",
            FirstBreastCancerType::Dcis => "dcis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiRadsDensity {
    A,
    B,
    C,
    D,
}

impl BiRadsDensity {
    pub fn as_str(self) -> &'static str {
        match self {
            BiRadsDensity::A => "a",
            BiRadsDensity::B => "b",
            BiRadsDensity::C => "c",
            BiRadsDensity::D => "d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TumorSize {
    Tis,
    T1,
    T2,
    T3,
}

impl TumorSize {
    pub fn as_str(self) -> &'static str {
        match self {
            TumorSize::Tis => "tis",
            TumorSize::T1 => "t1",
            TumorSize::T2 => "t2",
            TumorSize::T3 => "t3",
        }
    }
}

/// Risk modifiers for contralateral breast cancer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CbcModifiers {
    #[serde(default)]
    pub first_breast_cancer_type: Option<FirstBreastCancerType>,
    #[serde(default)]
    pub anti_estrogen_therapy: TriState,
    #[serde(default)]
    pub high_risk_pre_neoplasia: TriState,
    #[serde(default)]
    pub birads_density: Option<BiRadsDensity>,
    #[serde(default)]
    pub tumor_size: Option<TumorSize>,
}

impl CbcModifiers {
    pub fn is_empty(&self) -> bool {
        *self == CbcModifiers::default()
    }

    /// (modifier, level) pairs for every recorded modifier.
    pub fn levels(&self) -> Vec<(&'static str, &'static str)> {
        let mut v = Vec::new();
        if let Some(t) = self.first_breast_cancer_type {
            v.push(("first_bc_type", t.as_str()));
        }
        if self.anti_estrogen_therapy != TriState::Unknown {
            v.push(("anti_estrogen", self.anti_estrogen_therapy.as_str()));
        }
        if self.high_risk_pre_neoplasia != TriState::Unknown {
            v.push(("high_risk_preneoplasia", self.high_risk_pre_neoplasia.as_str()));
        }
        if let Some(d) = self.birads_density {
            v.push(("birads", d.as_str()));
        }
        if let Some(s) = self.tumor_size {
            v.push(("tumor_size", s.as_str()));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: IndividualId,
    pub sex: Sex,
    /// Current age, or age at death when `deceased`.
    pub age: Option<u32>,
    #[serde(default)]
    pub deceased: bool,
    #[serde(default)]
    pub race: Option<String>,
    #[serde(default)]
    pub hispanic: TriState,
    #[serde(default)]
    pub ancestry: Option<String>,
    #[serde(default)]
    pub mother: Option<IndividualId>,
    #[serde(default)]
    pub father: Option<IndividualId>,
    #[serde(default)]
    pub cancers: Vec<CancerDiagnosis>,
    #[serde(default)]
    pub surgeries: Vec<Surgery>,
    #[serde(default)]
    pub panel: Option<PanelResult>,
    #[serde(default)]
    pub markers: Option<TumorMarkers>,
    #[serde(default)]
    pub cbc: Option<CbcModifiers>,
    #[serde(default)]
    pub clone_of: Option<IndividualId>,
    /// Created automatically as a linking relative.
    #[serde(default)]
    pub auto_created: bool,
    /// For auto-created individuals: the requested relative whose addition
    /// created them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_for: Option<IndividualId>,
}

impl Individual {
    pub fn new(id: IndividualId, sex: Sex) -> Self {
        Individual {
            id,
            sex,
            age: None,
            deceased: false,
            race: None,
            hispanic: TriState::Unknown,
            ancestry: None,
            mother: None,
            father: None,
            cancers: Vec::new(),
            surgeries: Vec::new(),
            panel: None,
            markers: None,
            cbc: None,
            clone_of: None,
            auto_created: false,
            linked_for: None,
        }
    }

    /// True when nothing beyond identity, sex and links has been recorded.
    pub fn is_blank(&self) -> bool {
        self.age.is_none()
            && !self.deceased
            && self.race.is_none()
            && self.hispanic == TriState::Unknown
            && self.ancestry.is_none()
            && self.cancers.is_empty()
            && self.surgeries.is_empty()
            && self.panel.is_none()
            && self.markers.is_none()
            && self.cbc.is_none()
    }

    pub fn is_founder(&self) -> bool {
        self.mother.is_none() && self.father.is_none()
    }

    pub fn diagnosis(&self, cancer: &str) -> Option<&CancerDiagnosis> {
        self.cancers.iter().find(|c| c.is_model_cancer && c.cancer == cancer)
    }

    pub fn has_cancer(&self, cancer: &str) -> bool {
        self.cancers.iter().any(|c| c.cancer == cancer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedigree {
    pub pedigree_id: String,
    pub proband: IndividualId,
    pub revision: u64,
    pub members: BTreeMap<IndividualId, Individual>,
    /// Childless couples; couples with children are linked through the children.
    #[serde(default)]
    pub partnerships: BTreeSet<(IndividualId, IndividualId)>,
    #[serde(default)]
    pub(crate) next_id: u32,
}

impl Pedigree {
    pub fn get(&self, id: IndividualId) -> Result<&Individual, PedigreeError> {
        self.members
            .get(&id)
            .ok_or(PedigreeError::UnknownIndividual(id))
    }

    pub fn proband(&self) -> Option<&Individual> {
        self.members.get(&self.proband)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn children_of(&self, id: IndividualId) -> impl Iterator<Item = &Individual> {
        self.members
            .values()
            .filter(move |m| m.mother == Some(id) || m.father == Some(id))
    }

    /// Partners of `id`: co-parents of their children plus recorded partnerships.
    pub fn partners_of(&self, id: IndividualId) -> BTreeSet<IndividualId> {
        let mut out = BTreeSet::new();
        for c in self.children_of(id) {
            for p in [c.mother, c.father].into_iter().flatten() {
                if p != id {
                    out.insert(p);
                }
            }
        }
        for &(a, b) in &self.partnerships {
            if a == id {
                out.insert(b);
            } else if b == id {
                out.insert(a);
            }
        }
        out
    }

    /// Members reachable from the proband through parent, child and partner links.
    pub fn connected_to_proband(&self) -> BTreeSet<IndividualId> {
        let mut adj: BTreeMap<IndividualId, Vec<IndividualId>> = BTreeMap::new();
        for m in self.members.values() {
            for p in [m.mother, m.father].into_iter().flatten() {
                adj.entry(m.id).or_default().push(p);
                adj.entry(p).or_default().push(m.id);
            }
        }
        for &(a, b) in &self.partnerships {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut seen = BTreeSet::new();
        if !self.members.contains_key(&self.proband) {
            return seen;
        }
        let mut stack = vec![self.proband];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(next) = adj.get(&id) {
                stack.extend(next.iter().copied().filter(|n| !seen.contains(n)));
            }
        }
        seen
    }

    pub(crate) fn fresh_id(&mut self) -> IndividualId {
        let floor = self.members.keys().next_back().map_or(1, |id| id.0 + 1);
        let id = self.next_id.max(floor);
        self.next_id = id + 1;
        IndividualId(id)
    }
}

/// Deserializes a present-but-null field as `Some(None)`.
pub(crate) fn double_option<'de, D, T>(de: D) -> Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(de).map(Some)
}
