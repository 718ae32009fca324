use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::validate::individual_errors;
use super::{
    double_option, CancerDiagnosis, CbcModifiers, Individual, PanelResult, Pedigree,
    PedigreeError, Surgery, TumorMarkers, MAX_AGE,
};
use crate::kb::KnowledgeBase;
use crate::types::{IndividualId, Sex, TriState};

/// Relative counts entered right after the proband.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoreCounts {
    pub daughters: u32,
    pub sons: u32,
    pub sisters: u32,
    pub brothers: u32,
    pub maternal_aunts: u32,
    pub maternal_uncles: u32,
    pub paternal_aunts: u32,
    pub paternal_uncles: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Parent,
    Partner,
    Child,
    Sibling,
    HalfSiblingViaMother,
    HalfSiblingViaFather,
}

/// Partial update of an individual; absent fields are left unchanged and
/// explicit nulls clear optional fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndividualPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub age: Option<Option<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deceased: Option<bool>,
    #[serde(deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub race: Option<Option<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hispanic: Option<TriState>,
    #[serde(deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub ancestry: Option<Option<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cancers: Option<Vec<CancerDiagnosis>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surgeries: Option<Vec<Surgery>>,
    #[serde(deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub panel: Option<Option<PanelResult>>,
    #[serde(deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub markers: Option<Option<TumorMarkers>>,
    #[serde(deserialize_with = "double_option", skip_serializing_if = "Option::is_none")]
    pub cbc: Option<Option<CbcModifiers>>,
}

/// A single builder operation, as carried over the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    AddCoreRelatives {
        counts: CoreCounts,
    },
    AddRelative {
        anchor: IndividualId,
        relation: Relation,
        sex: Sex,
    },
    RemoveIndividual {
        id: IndividualId,
    },
    UpdateIndividual {
        id: IndividualId,
        patch: IndividualPatch,
    },
}

/// Emitted after every successful mutation so the caller can persist it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub pedigree_id: String,
    pub revision: u64,
    pub summary: String,
}

fn check_age(age: i64) -> Result<u32, PedigreeError> {
    if (0..=MAX_AGE as i64).contains(&age) {
        Ok(age as u32)
    } else {
        Err(PedigreeError::InvalidAge(age))
    }
}

impl Pedigree {
    /// A one-member pedigree holding the proband, at revision 1.
    pub fn create(pedigree_id: &str, proband_sex: Sex, proband_age: i64) -> Result<Pedigree, PedigreeError> {
        if pedigree_id.trim().is_empty() {
            return Err(PedigreeError::EmptyPedigreeId);
        }
        let age = check_age(proband_age)?;
        let proband = IndividualId(1);
        let mut ind = Individual::new(proband, proband_sex);
        ind.age = Some(age);
        Ok(Pedigree {
            pedigree_id: pedigree_id.to_string(),
            proband,
            revision: 1,
            members: [(proband, ind)].into_iter().collect(),
            partnerships: BTreeSet::new(),
            next_id: 2,
        })
    }

    fn bumped(&self) -> Pedigree {
        let mut p = self.clone();
        p.revision += 1;
        p
    }

    fn push(&mut self, sex: Sex, mother: Option<IndividualId>, father: Option<IndividualId>, auto: bool) -> IndividualId {
        let id = self.fresh_id();
        let mut ind = Individual::new(id, sex);
        ind.mother = mother;
        ind.father = father;
        ind.auto_created = auto;
        self.members.insert(id, ind);
        id
    }

    /// Returns (mother, father) of `id`, creating both when absent.
    fn ensure_parents(&mut self, id: IndividualId) -> (IndividualId, IndividualId) {
        let ind = &self.members[&id];
        if let (Some(m), Some(f)) = (ind.mother, ind.father) {
            return (m, f);
        }
        let m = self.push(Sex::Female, None, None, true);
        let f = self.push(Sex::Male, None, None, true);
        let ind = self.members.get_mut(&id).unwrap();
        ind.mother = Some(m);
        ind.father = Some(f);
        (m, f)
    }

    /// Lowest-id opposite-sex partner of `id`, or a new auto-created one.
    fn co_parent_for(&mut self, id: IndividualId) -> IndividualId {
        let sex = self.members[&id].sex;
        let existing = self
            .partners_of(id)
            .into_iter()
            .find(|p| self.members.get(p).is_some_and(|m| m.sex != sex));
        match existing {
            Some(p) => p,
            None => self.push(sex.opposite(), None, None, true),
        }
    }

    fn add_child(&mut self, parent: IndividualId, co_parent: IndividualId, sex: Sex) -> IndividualId {
        let (m, f) = if self.members[&parent].sex == Sex::Female {
            (parent, co_parent)
        } else {
            (co_parent, parent)
        };
        let child = self.push(sex, Some(m), Some(f), false);
        self.partnerships.remove(&ordered(m, f));
        child
    }

    /// Adds the proband's parents unconditionally, grandparents on a side
    /// iff aunts or uncles are requested on that side, and the requested
    /// children, siblings, aunts and uncles.
    pub fn add_core_relatives(&self, counts: CoreCounts) -> Result<Pedigree, PedigreeError> {
        let mut p = self.bumped();
        let proband = p.proband;
        let (mother, father) = p.ensure_parents(proband);
        for (n, sex) in [(counts.sisters, Sex::Female), (counts.brothers, Sex::Male)] {
            for _ in 0..n {
                p.push(sex, Some(mother), Some(father), false);
            }
        }
        for (side, aunts, uncles) in [
            (mother, counts.maternal_aunts, counts.maternal_uncles),
            (father, counts.paternal_aunts, counts.paternal_uncles),
        ] {
            if aunts + uncles == 0 {
                continue;
            }
            let (gm, gf) = p.ensure_parents(side);
            for _ in 0..aunts {
                p.push(Sex::Female, Some(gm), Some(gf), false);
            }
            for _ in 0..uncles {
                p.push(Sex::Male, Some(gm), Some(gf), false);
            }
        }
        if counts.daughters + counts.sons > 0 {
            let co = p.co_parent_for(proband);
            for _ in 0..counts.daughters {
                p.add_child(proband, co, Sex::Female);
            }
            for _ in 0..counts.sons {
                p.add_child(proband, co, Sex::Male);
            }
        }
        Ok(p)
    }

    /// Adds one relative of `anchor`, creating any missing co-parents.
    /// Returns the new pedigree and the id of the requested relative.
    pub fn add_relative(
        &self,
        anchor: IndividualId,
        relation: Relation,
        sex: Sex,
    ) -> Result<(Pedigree, IndividualId), PedigreeError> {
        let anchor_ind = self.get(anchor)?;
        let mut p = self.bumped();
        let new_id = match relation {
            Relation::Parent => {
                if !anchor_ind.is_founder() {
                    return Err(PedigreeError::SlotOccupied(anchor));
                }
                let requested = p.push(sex, None, None, false);
                let other = p.push(sex.opposite(), None, None, true);
                let (m, f) = match sex {
                    Sex::Female => (requested, other),
                    Sex::Male => (other, requested),
                };
                let ind = p.members.get_mut(&anchor).unwrap();
                ind.mother = Some(m);
                ind.father = Some(f);
                requested
            }
            Relation::Partner => {
                if anchor_ind.sex == sex {
                    return Err(PedigreeError::SexConflict(format!(
                        "partner of {anchor} must be of the opposite sex to have children"
                    )));
                }
                let partner = p.push(sex, None, None, false);
                p.partnerships.insert(ordered(anchor, partner));
                partner
            }
            Relation::Child => {
                let co = p.co_parent_for(anchor);
                p.add_child(anchor, co, sex)
            }
            Relation::Sibling => {
                let (m, f) = p.ensure_parents(anchor);
                p.push(sex, Some(m), Some(f), false)
            }
            Relation::HalfSiblingViaMother => {
                let (m, _) = p.ensure_parents(anchor);
                let f = p.push(Sex::Male, None, None, true);
                p.push(sex, Some(m), Some(f), false)
            }
            Relation::HalfSiblingViaFather => {
                let (_, f) = p.ensure_parents(anchor);
                let m = p.push(Sex::Female, None, None, true);
                p.push(sex, Some(m), Some(f), false)
            }
        };
        let created: Vec<IndividualId> = p.members.keys().filter(|id| !self.members.contains_key(id)).copied().collect();
        for id in created {
            let m = p.members.get_mut(&id).unwrap();
            if m.auto_created {
                m.linked_for = Some(new_id);
            }
        }
        Ok((p, new_id))
    }

    /// Removes a childless individual together with auto-created relatives
    /// that were linked only through them.
    pub fn remove_individual(&self, id: IndividualId) -> Result<Pedigree, PedigreeError> {
        if id == self.proband {
            return Err(PedigreeError::CannotRemoveProband);
        }
        self.get(id)?;
        if self.children_of(id).next().is_some() {
            return Err(PedigreeError::WouldOrphanChildren(id));
        }
        let mut p = self.bumped();
        p.members.remove(&id);
        p.partnerships.retain(|&(a, b)| a != id && b != id);
        let connected = p.connected_to_proband();
        let stranded: Vec<IndividualId> = p
            .members
            .keys()
            .copied()
            .filter(|m| !connected.contains(m))
            .collect();
        if stranded.iter().any(|m| !p.members[m].auto_created) {
            return Err(PedigreeError::WouldDisconnect(id));
        }
        for m in stranded {
            p.members.remove(&m);
            p.partnerships.retain(|&(a, b)| a != m && b != m);
        }
        p.prune_linking_parents(id);
        Ok(p)
    }

    /// Drops a blank auto-created parent pair that was added for `removed`
    /// and now only links a single child.
    fn prune_linking_parents(&mut self, removed: IndividualId) {
        let candidates: Vec<(IndividualId, IndividualId, IndividualId)> = self
            .members
            .values()
            .filter_map(|c| Some((c.id, c.mother?, c.father?)))
            .filter(|&(_, m, f)| {
                [m, f].iter().all(|x| {
                    self.members.get(x).is_some_and(|i| {
                        i.auto_created && i.linked_for == Some(removed) && i.is_founder() && i.is_blank()
                    })
                })
            })
            .collect();
        for (child, m, f) in candidates {
            let only_child = self.children_of(m).chain(self.children_of(f)).all(|c| c.id == child);
            let partnered = self
                .partnerships
                .iter()
                .any(|&(a, b)| [a, b].contains(&m) || [a, b].contains(&f));
            if !only_child || partnered {
                continue;
            }
            let c = self.members.get_mut(&child).unwrap();
            c.mother = None;
            c.father = None;
            self.members.remove(&m);
            self.members.remove(&f);
        }
    }

    /// Applies `patch` to one individual, enforcing every individual invariant.
    pub fn update_individual(
        &self,
        kb: &KnowledgeBase,
        id: IndividualId,
        patch: &IndividualPatch,
    ) -> Result<Pedigree, PedigreeError> {
        self.get(id)?;
        let mut p = self.bumped();
        let ind = p.members.get_mut(&id).unwrap();
        if let Some(sex) = patch.sex {
            ind.sex = sex;
        }
        if let Some(age) = patch.age {
            if let Some(a) = age {
                check_age(a as i64)?;
            }
            ind.age = age;
        }
        if let Some(d) = patch.deceased {
            ind.deceased = d;
        }
        if let Some(r) = &patch.race {
            ind.race = r.clone();
        }
        if let Some(h) = patch.hispanic {
            ind.hispanic = h;
        }
        if let Some(a) = &patch.ancestry {
            ind.ancestry = a.clone();
        }
        if let Some(c) = &patch.cancers {
            ind.cancers = c
                .iter()
                .map(|d| CancerDiagnosis {
                    cancer: d.cancer.clone(),
                    age: d.age,
                    is_model_cancer: kb.has_cancer(&d.cancer),
                })
                .collect();
        }
        if let Some(s) = &patch.surgeries {
            ind.surgeries = s.clone();
        }
        if let Some(panel) = &patch.panel {
            ind.panel = panel.clone();
        }
        if let Some(m) = &patch.markers {
            ind.markers = m.clone();
        }
        if let Some(c) = &patch.cbc {
            ind.cbc = c.clone();
        }
        let ind = &p.members[&id];
        if let Some(err) = individual_errors(kb, ind).into_iter().next() {
            return Err(err);
        }
        if patch.sex.is_some() {
            let sex = ind.sex;
            for c in p.children_of(id) {
                let ok = (c.mother == Some(id) && sex == Sex::Female) || (c.father == Some(id) && sex == Sex::Male);
                if !ok {
                    return Err(PedigreeError::SexConflict(format!(
                        "{id} is a parent of {} and cannot change sex",
                        c.id
                    )));
                }
            }
        }
        Ok(p)
    }

    /// Applies an API-level mutation.
    pub fn apply(&self, kb: &KnowledgeBase, mutation: &Mutation) -> Result<(Pedigree, ChangeEvent), PedigreeError> {
        let (next, summary) = match mutation {
            Mutation::AddCoreRelatives { counts } => {
                (self.add_core_relatives(*counts)?, "added core relatives".to_string())
            }
            Mutation::AddRelative {
                anchor,
                relation,
                sex,
            } => {
                let (p, id) = self.add_relative(*anchor, *relation, *sex)?;
                (p, format!("added {relation:?} {id} of {anchor}"))
            }
            Mutation::RemoveIndividual { id } => (self.remove_individual(*id)?, format!("removed {id}")),
            Mutation::UpdateIndividual { id, patch } => {
                (self.update_individual(kb, *id, patch)?, format!("updated {id}"))
            }
        };
        let event = ChangeEvent {
            pedigree_id: next.pedigree_id.clone(),
            revision: next.revision,
            summary,
        };
        Ok((next, event))
    }
}

fn ordered(a: IndividualId, b: IndividualId) -> (IndividualId, IndividualId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
