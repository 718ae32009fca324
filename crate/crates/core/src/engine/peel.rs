//! Exact peeling over the marriage-node tree rooted at the proband.
//!
//! Every message is a vector over the pared state space and is normalized
//! as soon as it is formed; only the proband's marginal is returned, so the
//! discarded scale factors never matter.

use std::collections::{BTreeMap, VecDeque};

use super::likelihood::{is_proband_like, row_likelihood, CurveCache};
use super::{EngineError, RunSettings, StateSpace};
use crate::kb::KnowledgeBase;
use crate::pedigree::{ModelInputTable, ModelRow};
use crate::types::IndividualId;

/// Marriage-node view of the proband's connected component.
pub(crate) struct FamilyGraph<'t> {
    pub rows: Vec<&'t ModelRow>,
    /// (mother index, father index, child indices)
    pub unions: Vec<(usize, usize, Vec<usize>)>,
    pub proband: usize,
}

impl<'t> FamilyGraph<'t> {
    pub fn build(table: &'t ModelInputTable) -> Result<FamilyGraph<'t>, EngineError> {
        let proband_id = table
            .proband()
            .ok_or_else(|| EngineError::InvalidInput("table has no proband row".into()))?
            .id;
        let by_id: BTreeMap<IndividualId, &ModelRow> = table.rows.iter().map(|r| (r.id, r)).collect();
        for r in &table.rows {
            for p in [r.mother, r.father].into_iter().flatten() {
                if !by_id.contains_key(&p) {
                    return Err(EngineError::InvalidInput(format!("parent {p} of {} is missing", r.id)));
                }
            }
            if r.mother.is_some() != r.father.is_some() {
                return Err(EngineError::InvalidInput(format!("{} has exactly one parent", r.id)));
            }
        }
        // connected component of the proband via parent links
        let mut adj: BTreeMap<IndividualId, Vec<IndividualId>> = BTreeMap::new();
        for r in &table.rows {
            for p in [r.mother, r.father].into_iter().flatten() {
                adj.entry(r.id).or_default().push(p);
                adj.entry(p).or_default().push(r.id);
            }
        }
        let mut keep = std::collections::BTreeSet::new();
        let mut stack = vec![proband_id];
        while let Some(id) = stack.pop() {
            if keep.insert(id) {
                stack.extend(adj.get(&id).into_iter().flatten().copied());
            }
        }
        // parents before children, otherwise table order
        let mut pending: Vec<&ModelRow> = table.rows.iter().filter(|r| keep.contains(&r.id)).collect();
        let mut placed = std::collections::BTreeSet::new();
        let mut rows: Vec<&ModelRow> = Vec::with_capacity(pending.len());
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|r| {
                let ready = [r.mother, r.father].into_iter().flatten().all(|p| placed.contains(&p));
                if ready {
                    placed.insert(r.id);
                    rows.push(*r);
                }
                !ready
            });
            if pending.len() == before {
                return Err(EngineError::InvalidInput("an individual is their own ancestor".into()));
            }
        }
        let index: BTreeMap<IndividualId, usize> = rows.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let mut union_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut unions: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if let (Some(m), Some(f)) = (r.mother, r.father) {
                let key = (index[&m], index[&f]);
                let u = *union_of.entry(key).or_insert_with(|| {
                    unions.push((key.0, key.1, Vec::new()));
                    unions.len() - 1
                });
                unions[u].2.push(i);
            }
        }
        Ok(FamilyGraph {
            proband: index[&proband_id],
            rows,
            unions,
        })
    }

    /// Cyclomatic number of the component's marriage graph.
    pub fn loops(&self) -> usize {
        let edges: usize = self.unions.iter().map(|u| 2 + u.2.len()).sum();
        let nodes = self.rows.len() + self.unions.len();
        edges + 1 - nodes
    }

    /// Prior-times-likelihood factor for every member.
    pub fn local_factors(
        &self,
        kb: &KnowledgeBase,
        settings: &RunSettings,
        space: &StateSpace,
    ) -> Result<Vec<Vec<f64>>, EngineError> {
        let proband_id = self.rows[self.proband].id;
        let mut cache = CurveCache::default();
        let mut priors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        self.rows
            .iter()
            .map(|r| {
                let mut phi = row_likelihood(kb, settings, space, &mut cache, r, is_proband_like(r, proband_id))?;
                if r.mother.is_none() {
                    if !priors.contains_key(r.ancestry.as_str()) {
                        let levels = space.level_priors(kb, &r.ancestry)?;
                        priors.insert(&r.ancestry, space.founder_prior(&levels));
                    }
                    for (x, p) in phi.iter_mut().zip(&priors[r.ancestry.as_str()]) {
                        *x *= p;
                    }
                }
                Ok(phi)
            })
            .collect()
    }
}

fn normalize(v: &mut [f64]) -> Result<(), EngineError> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(EngineError::ZeroLikelihood);
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Person(usize),
    Union(usize),
}

/// Posterior over the proband's states given every phenotype in the table.
pub fn peel(
    table: &ModelInputTable,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
) -> Result<Vec<f64>, EngineError> {
    let graph = FamilyGraph::build(table)?;
    let loops = graph.loops();
    if loops > 0 {
        return Err(EngineError::LoopDetected { loops });
    }
    let cells = space.len().saturating_mul(graph.rows.len());
    if cells > settings.max_state_cells {
        return Err(EngineError::StateSpaceOverflow {
            states: space.len(),
            members: graph.rows.len(),
            cap: settings.max_state_cells,
        });
    }
    let phi = graph.local_factors(kb, settings, space)?;
    peel_factors(&graph, &phi, space)
}

pub(crate) fn peel_factors(graph: &FamilyGraph, phi: &[Vec<f64>], space: &StateSpace) -> Result<Vec<f64>, EngineError> {
    let n = graph.rows.len();
    let mut person_unions: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, (m, f, kids)) in graph.unions.iter().enumerate() {
        person_unions[*m].push(u);
        person_unions[*f].push(u);
        for &k in kids {
            person_unions[k].push(u);
        }
    }

    // BFS from the proband; the parent of each node in the rooted tree.
    let mut person_parent: Vec<Option<usize>> = vec![None; n];
    let mut union_parent: Vec<usize> = vec![usize::MAX; graph.unions.len()];
    let mut seen_person = vec![false; n];
    let mut seen_union = vec![false; graph.unions.len()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([Node::Person(graph.proband)]);
    seen_person[graph.proband] = true;
    while let Some(node) = queue.pop_front() {
        order.push(node);
        match node {
            Node::Person(i) => {
                for &u in &person_unions[i] {
                    if !seen_union[u] {
                        seen_union[u] = true;
                        union_parent[u] = i;
                        queue.push_back(Node::Union(u));
                    }
                }
            }
            Node::Union(u) => {
                let (m, f, kids) = &graph.unions[u];
                for &i in [*m, *f].iter().chain(kids) {
                    if !seen_person[i] {
                        seen_person[i] = true;
                        person_parent[i] = Some(u);
                        queue.push_back(Node::Person(i));
                    }
                }
            }
        }
    }

    let s = space.len();
    // message from each person to its parent union, and from each union to its parent person
    let mut person_msg: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut union_msg: Vec<Vec<f64>> = vec![Vec::new(); graph.unions.len()];
    let mut buf = Vec::new();
    for &node in order.iter().rev() {
        match node {
            Node::Person(i) => {
                let mut v = phi[i].clone();
                for &u in &person_unions[i] {
                    if person_parent[i] != Some(u) {
                        for (x, y) in v.iter_mut().zip(&union_msg[u]) {
                            *x *= y;
                        }
                    }
                }
                normalize(&mut v)?;
                if i == graph.proband {
                    return Ok(v);
                }
                person_msg[i] = v;
            }
            Node::Union(u) => {
                let target = union_parent[u];
                let (m, f, kids) = &graph.unions[u];
                let (m, f) = (*m, *f);
                let others: Vec<&Vec<f64>> = kids.iter().filter(|&&k| k != target).map(|&k| &person_msg[k]).collect();
                let ones = vec![1.0; s];
                let am = if m == target { &ones } else { &person_msg[m] };
                let af = if f == target { &ones } else { &person_msg[f] };
                let mut out = vec![0.0; s];
                for sm in 0..s {
                    if am[sm] == 0.0 {
                        continue;
                    }
                    for sf in 0..s {
                        if af[sf] == 0.0 {
                            continue;
                        }
                        space.child_distribution(sm, sf, &mut buf);
                        let mut w = am[sm] * af[sf];
                        for msg in &others {
                            w *= buf.iter().map(|&(c, p)| p * msg[c]).sum::<f64>();
                            if w == 0.0 {
                                break;
                            }
                        }
                        if w == 0.0 {
                            continue;
                        }
                        if target == m {
                            out[sm] += w;
                        } else if target == f {
                            out[sf] += w;
                        } else {
                            for &(c, p) in &buf {
                                out[c] += w * p;
                            }
                        }
                    }
                }
                normalize(&mut out)?;
                union_msg[u] = out;
            }
        }
    }
    unreachable!("the proband is the BFS root")
}
