//! Pedigree checks: blocking errors, warnings and modelling assumptions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{count_loops, Classification, Individual, Pedigree, PedigreeError};
use crate::kb::KnowledgeBase;
use crate::types::{IndividualId, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Assumption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    MissingProband,
    UnresolvedParent,
    SingleParent,
    FatherNotMale,
    MotherNotFemale,
    OwnAncestor,
    Disconnected,
    UnresolvedClone,
    IndividualRule,
    AgeImputed,
    DiagnosisAgeUnknown,
    SurgeryAgeUnknown,
    UnknownGene,
    FreeTextCancer,
    LoopPresent,
    HeterozygousAssumed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    pub individual: Option<IndividualId>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
            Severity::Assumption => "ASSUMPTION",
        };
        match self.individual {
            Some(id) => write!(f, "{tag} [ID {id}]: {}", self.message),
            None => write!(f, "{tag}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn has_blocking(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn with_code(&self, code: IssueCode) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(move |i| i.code == code)
    }

    /// Console lines, errors first.
    pub fn lines(&self) -> Vec<String> {
        let mut sorted: Vec<&Issue> = self.issues.iter().collect();
        sorted.sort_by_key(|i| match i.severity {
            Severity::Error => 0,
            Severity::Warning => 1,
            Severity::Assumption => 2,
        });
        sorted.into_iter().map(ToString::to_string).collect()
    }

    fn push(&mut self, severity: Severity, code: IssueCode, individual: Option<IndividualId>, message: String) {
        self.issues.push(Issue {
            severity,
            code,
            individual,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Invariant violations of a single individual, in a fixed order.
pub(crate) fn individual_errors(kb: &KnowledgeBase, ind: &Individual) -> Vec<PedigreeError> {
    let id = ind.id;
    let mut out = Vec::new();
    if let Some(age) = ind.age {
        if age > kb.max_age {
            out.push(PedigreeError::InvalidAge(age as i64));
        }
    }
    if let Some(race) = &ind.race {
        if !kb.races.contains(race) {
            out.push(PedigreeError::UnknownLabel {
                id,
                field: "race",
                label: race.clone(),
            });
        }
    }
    if let Some(anc) = &ind.ancestry {
        if !kb.ancestries.contains(anc) {
            out.push(PedigreeError::UnknownLabel {
                id,
                field: "ancestry",
                label: anc.clone(),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for dx in &ind.cancers {
        if let Ok(spec) = kb.cancer(&dx.cancer) {
            if !spec.sex_restriction.allows(ind.sex) {
                out.push(PedigreeError::SexRestrictedCancer {
                    id,
                    cancer: dx.cancer.clone(),
                    sex: ind.sex,
                });
            }
            if !seen.insert(dx.cancer.as_str()) {
                out.push(PedigreeError::DuplicateDiagnosis {
                    id,
                    cancer: dx.cancer.clone(),
                });
            }
        }
        if let (Some(dx_age), Some(age)) = (dx.age, ind.age) {
            if dx_age > age {
                out.push(PedigreeError::DiagnosisAfterDeath {
                    id,
                    cancer: dx.cancer.clone(),
                    dx_age,
                    age,
                });
            }
        }
    }
    for s in &ind.surgeries {
        if !s.kind.allowed_for(ind.sex) {
            out.push(PedigreeError::SurgerySexConflict {
                id,
                kind: s.kind,
                sex: ind.sex,
            });
        }
        if let (Some(sa), Some(age)) = (s.age, ind.age) {
            if sa > age {
                out.push(PedigreeError::SurgeryAfterAge {
                    id,
                    surgery_age: sa,
                    age,
                });
            }
        }
    }
    if let Some(markers) = &ind.markers {
        for (marker, _) in markers.observed() {
            match kb.marker_cancer(marker) {
                None => out.push(PedigreeError::UnknownMarker {
                    id,
                    marker: marker.to_string(),
                }),
                Some(cancer) if !ind.has_cancer(cancer) => out.push(PedigreeError::MarkerWithoutCancer {
                    id,
                    marker: marker.to_string(),
                    cancer: cancer.to_string(),
                }),
                Some(_) => {}
            }
        }
    }
    if ind.cbc.as_ref().is_some_and(|c| !c.is_empty()) && !ind.has_cancer("breast") {
        out.push(PedigreeError::CbcWithoutBreastCancer(id));
    }
    if let Some(panel) = &ind.panel {
        for gene in panel.findings.keys() {
            if !panel.genes_tested.contains(gene) {
                out.push(PedigreeError::FindingNotTested {
                    id,
                    gene: gene.clone(),
                });
            }
        }
    }
    out
}

/// Structural and per-individual checks, in the spirit of a checkFam pass.
pub fn validate_pedigree(p: &Pedigree, kb: &KnowledgeBase) -> ValidationReport {
    use IssueCode::*;
    use Severity::*;
    let mut r = ValidationReport::default();

    if !p.members.contains_key(&p.proband) {
        r.push(Error, MissingProband, None, format!("proband {} is not a member", p.proband));
    }
    let mut structural_ok = true;
    for m in p.members.values() {
        match (m.mother, m.father) {
            (Some(_), None) | (None, Some(_)) => {
                structural_ok = false;
                r.push(Error, SingleParent, Some(m.id), "exactly one parent is set; both or neither are required".into());
            }
            _ => {}
        }
        for (role, pid, want) in [("father", m.father, Sex::Male), ("mother", m.mother, Sex::Female)] {
            let Some(pid) = pid else { continue };
            match p.members.get(&pid) {
                None => {
                    structural_ok = false;
                    r.push(Error, UnresolvedParent, Some(m.id), format!("{role} {pid} is not a member"));
                }
                Some(parent) if parent.sex != want => {
                    let code = if want == Sex::Male { FatherNotMale } else { MotherNotFemale };
                    r.push(Error, code, Some(m.id), format!("{role} {pid} is recorded as {}", parent.sex));
                }
                Some(_) => {}
            }
        }
        if let Some(c) = m.clone_of {
            if !p.members.contains_key(&c) {
                r.push(Error, UnresolvedClone, Some(m.id), format!("clone source {c} is not a member"));
            }
        }
    }

    // Ancestry cycles via DFS colouring on parent links.
    let mut state: BTreeMap<IndividualId, u8> = BTreeMap::new();
    for &start in p.members.keys() {
        if state.contains_key(&start) {
            continue;
        }
        let mut stack = vec![(start, false)];
        while let Some((id, done)) = stack.pop() {
            if done {
                state.insert(id, 2);
                continue;
            }
            match state.get(&id) {
                Some(2) => continue,
                Some(1) => continue,
                _ => {}
            }
            state.insert(id, 1);
            stack.push((id, true));
            if let Some(m) = p.members.get(&id) {
                for parent in [m.mother, m.father].into_iter().flatten() {
                    match state.get(&parent) {
                        Some(1) => {
                            structural_ok = false;
                            r.push(Error, OwnAncestor, Some(parent), "individual is their own ancestor".into());
                        }
                        Some(2) => {}
                        _ => stack.push((parent, false)),
                    }
                }
            }
        }
    }

    if p.members.contains_key(&p.proband) {
        let connected = p.connected_to_proband();
        for id in p.members.keys().filter(|id| !connected.contains(id)) {
            r.push(Error, Disconnected, Some(*id), "not connected to the proband".into());
        }
    }

    for m in p.members.values() {
        for err in individual_errors(kb, m) {
            r.push(Error, IndividualRule, Some(m.id), err.to_string());
        }
        if m.age.is_none() {
            r.push(Warning, AgeImputed, Some(m.id), "age is unknown; age will be imputed".into());
        }
        for dx in &m.cancers {
            if !dx.is_model_cancer && !kb.has_cancer(&dx.cancer) {
                r.push(
                    Assumption,
                    FreeTextCancer,
                    Some(m.id),
                    format!("'{}' is not a model cancer; recorded but excluded from the calculation", dx.cancer),
                );
            } else if dx.age.is_none() {
                r.push(
                    Warning,
                    DiagnosisAgeUnknown,
                    Some(m.id),
                    format!("age at {} diagnosis unknown; treated as diagnosed by current age", dx.cancer),
                );
            }
        }
        for s in &m.surgeries {
            if s.age.is_none() {
                r.push(
                    Warning,
                    SurgeryAgeUnknown,
                    Some(m.id),
                    format!("{} age unknown; ignored in the likelihood", s.kind.as_str()),
                );
            }
        }
        if let Some(panel) = &m.panel {
            for g in &panel.genes_tested {
                if kb.gene(g).is_err() {
                    r.push(Warning, UnknownGene, Some(m.id), format!("gene {g} is not in the knowledge base; result ignored"));
                }
            }
            for (g, f) in &panel.findings {
                if f.classification == Classification::Plp {
                    r.push(
                        Assumption,
                        HeterozygousAssumed,
                        Some(m.id),
                        format!("P/LP result in {g} is assumed to be heterozygous for any PV"),
                    );
                }
            }
        }
    }

    if structural_ok {
        let loops = count_loops(p);
        if loops > 0 {
            r.push(
                Warning,
                LoopPresent,
                None,
                format!("pedigree contains {loops} loop(s); clone entries are needed to break them"),
            );
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::synthetic::synthetic_bundle;
    use crate::pedigree::{CoreCounts, Finding, PanelResult};

    #[test]
    fn unknown_age_is_flagged_for_imputation() {
        let kb = synthetic_bundle();
        let p = Pedigree::create("f", Sex::Female, 30)
            .unwrap()
            .add_core_relatives(CoreCounts::default())
            .unwrap();
        let r = validate_pedigree(&p, &kb);
        assert!(!r.has_blocking());
        assert_eq!(r.with_code(IssueCode::AgeImputed).count(), 2);
        assert!(r.lines().iter().any(|l| l.contains("age will be imputed")));
    }

    #[test]
    fn female_father_blocks() {
        let kb = synthetic_bundle();
        let mut p = Pedigree::create("f", Sex::Female, 30)
            .unwrap()
            .add_core_relatives(CoreCounts::default())
            .unwrap();
        let father = p.proband().unwrap().father.unwrap();
        p.members.get_mut(&father).unwrap().sex = Sex::Female;
        let r = validate_pedigree(&p, &kb);
        assert!(r.has_blocking());
        assert_eq!(r.with_code(IssueCode::FatherNotMale).count(), 1);
    }

    #[test]
    fn plp_gets_heterozygous_note() {
        let kb = synthetic_bundle();
        let mut p = Pedigree::create("f", Sex::Female, 30).unwrap();
        let proband = p.proband;
        p.members.get_mut(&proband).unwrap().panel = Some(PanelResult {
            panel_name: "panel".into(),
            genes_tested: ["BRCA1".to_string()].into_iter().collect(),
            findings: [("BRCA1".to_string(), Finding::new(Classification::Plp))]
                .into_iter()
                .collect(),
        });
        let r = validate_pedigree(&p, &kb);
        let notes: Vec<_> = r.with_code(IssueCode::HeterozygousAssumed).collect();
        assert_eq!(notes.len(), 1);
        assert!(notes[0].message.contains("assumed to be heterozygous"));
    }

    #[test]
    fn own_ancestor_detected() {
        let kb = synthetic_bundle();
        let mut p = Pedigree::create("f", Sex::Female, 30)
            .unwrap()
            .add_core_relatives(CoreCounts::default())
            .unwrap();
        let mother = p.proband().unwrap().mother.unwrap();
        let father = p.proband().unwrap().father.unwrap();
        let proband = p.proband;
        // the proband becomes her own grandmother
        let m = p.members.get_mut(&mother).unwrap();
        m.mother = Some(proband);
        m.father = Some(father);
        let r = validate_pedigree(&p, &kb);
        assert!(r.with_code(IssueCode::OwnAncestor).count() >= 1);
    }
}
