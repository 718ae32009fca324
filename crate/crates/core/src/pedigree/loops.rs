//! Loop detection and breaking on the marriage-node graph.
//!
//! Nodes are individuals and unions (mother, father); edges join each parent
//! to the union and the union to each child. A pedigree is loop-free iff this
//! graph is a forest.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::Pedigree;
use crate::types::IndividualId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Node {
    Person(IndividualId),
    Union(IndividualId, IndividualId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClonePair {
    pub original: IndividualId,
    pub clone: IndividualId,
}

fn edges(p: &Pedigree) -> Vec<(Node, Node)> {
    let mut out = Vec::new();
    let mut unions_seen = std::collections::BTreeSet::new();
    for m in p.members.values() {
        if let (Some(mo), Some(fa)) = (m.mother, m.father) {
            let u = Node::Union(mo, fa);
            if unions_seen.insert(u) {
                out.push((Node::Person(mo), u));
                out.push((Node::Person(fa), u));
            }
            out.push((u, Node::Person(m.id)));
        }
    }
    out
}

struct Dsu(BTreeMap<Node, Node>);

impl Dsu {
    fn find(&mut self, n: Node) -> Node {
        let parent = *self.0.entry(n).or_insert(n);
        if parent == n {
            return n;
        }
        let root = self.find(parent);
        self.0.insert(n, root);
        root
    }

    fn union(&mut self, a: Node, b: Node) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0.insert(ra, rb);
        true
    }
}

/// Number of independent loops (cyclomatic number of the marriage graph).
pub fn count_loops(p: &Pedigree) -> usize {
    let mut dsu = Dsu(BTreeMap::new());
    edges(p).into_iter().filter(|&(a, b)| !dsu.union(a, b)).count()
}

/// First cycle found, as a closed walk of nodes.
fn find_cycle(p: &Pedigree) -> Option<Vec<Node>> {
    let mut dsu = Dsu(BTreeMap::new());
    let mut adj: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    for (a, b) in edges(p) {
        if !dsu.union(a, b) {
            // path a -> b inside the forest, closed by the edge (b, a)
            let mut prev: BTreeMap<Node, Node> = BTreeMap::new();
            let mut queue = VecDeque::from([a]);
            prev.insert(a, a);
            while let Some(n) = queue.pop_front() {
                if n == b {
                    break;
                }
                for &next in adj.get(&n).into_iter().flatten() {
                    if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(next) {
                        e.insert(n);
                        queue.push_back(next);
                    }
                }
            }
            let mut path = vec![b];
            let mut cur = b;
            while cur != a {
                cur = prev[&cur];
                path.push(cur);
            }
            return Some(path);
        }
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    None
}

/// Breaks every loop by cloning the lowest-id individual on it. The clone is
/// a founder carrying identical phenotype data and takes the original's place
/// as a parent in one union on the loop.
pub fn detect_and_break_loops(p: &Pedigree) -> (Pedigree, Vec<ClonePair>) {
    let mut out = p.clone();
    let mut pairs = Vec::new();
    while let Some(cycle) = find_cycle(&out) {
        let n = cycle.len();
        let (pos, x) = cycle
            .iter()
            .enumerate()
            .filter_map(|(i, node)| match node {
                Node::Person(id) => Some((i, *id)),
                Node::Union(..) => None,
            })
            .min_by_key(|&(_, id)| id)
            .expect("a cycle always contains individuals");
        let neighbours = [cycle[(pos + n - 1) % n], cycle[(pos + 1) % n]];
        let target = neighbours
            .into_iter()
            .filter_map(|node| match node {
                Node::Union(m, f) if m == x || f == x => Some((m, f)),
                _ => None,
            })
            .max()
            .expect("an individual on a loop is a parent in one of its unions");
        let clone_id = out.fresh_id();
        let mut clone = out.members[&x].clone();
        clone.id = clone_id;
        clone.mother = None;
        clone.father = None;
        clone.clone_of = Some(x);
        clone.auto_created = false;
        out.members.insert(clone_id, clone);
        for m in out.members.values_mut() {
            if (m.mother, m.father) == (Some(target.0), Some(target.1)) {
                if m.mother == Some(x) {
                    m.mother = Some(clone_id);
                }
                if m.father == Some(x) {
                    m.father = Some(clone_id);
                }
            }
        }
        pairs.push(ClonePair {
            original: x,
            clone: clone_id,
        });
    }
    (out, pairs)
}
