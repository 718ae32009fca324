//! Brute-force posterior by full joint enumeration, used to check the peeler.

use super::peel::FamilyGraph;
use super::{EngineError, RunSettings, StateSpace};
use crate::kb::KnowledgeBase;
use crate::pedigree::ModelInputTable;

/// Largest joint configuration count the enumerator accepts.
pub const MAX_JOINT_STATES: f64 = 1e7;

/// Exact proband posterior over all joint assignments of the proband's
/// connected component. Works on loopy pedigrees too.
pub fn enumerate_posterior(
    table: &ModelInputTable,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    space: &StateSpace,
) -> Result<Vec<f64>, EngineError> {
    let graph = FamilyGraph::build(table)?;
    let joint = (space.len() as f64).powi(graph.rows.len() as i32);
    if joint > MAX_JOINT_STATES {
        return Err(EngineError::TooLarge { joint_states: joint });
    }
    let phi = graph.local_factors(kb, settings, space)?;
    // parents of each member (indices precede the child: rows are topological)
    let mut parents: Vec<Option<(usize, usize)>> = vec![None; graph.rows.len()];
    for (m, f, kids) in &graph.unions {
        for &k in kids {
            parents[k] = Some((*m, *f));
        }
    }
    let mut post = vec![0.0; space.len()];
    let mut assign = vec![0usize; graph.rows.len()];
    let mut buf = Vec::new();
    walk(0, 1.0, &mut assign, &phi, &parents, space, graph.proband, &mut post, &mut buf);
    let total: f64 = post.iter().sum();
    if !(total > 0.0) {
        return Err(EngineError::ZeroLikelihood);
    }
    post.iter_mut().for_each(|x| *x /= total);
    Ok(post)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    i: usize,
    weight: f64,
    assign: &mut Vec<usize>,
    phi: &[Vec<f64>],
    parents: &[Option<(usize, usize)>],
    space: &StateSpace,
    proband: usize,
    post: &mut [f64],
    buf: &mut Vec<(usize, f64)>,
) {
    if i == assign.len() {
        post[assign[proband]] += weight;
        return;
    }
    let options: Vec<(usize, f64)> = match parents[i] {
        None => (0..space.len()).map(|s| (s, 1.0)).collect(),
        Some((m, f)) => {
            space.child_distribution(assign[m], assign[f], buf);
            buf.clone()
        }
    };
    for (s, t) in options {
        let w = weight * t * phi[i][s];
        if w == 0.0 {
            continue;
        }
        assign[i] = s;
        walk(i + 1, w, assign, phi, parents, space, proband, post, buf);
    }
}
