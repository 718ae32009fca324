//! Pared genotype state space, founder priors and Mendelian transmission.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::RunSettings;
use crate::kb::{carrier_probability, KbError, KnowledgeBase};

/// Genes eligible for the two-level carrier state when multi-variant
/// handling is switched on.
pub const MULTI_VARIANT_GENES: [&str; 2] = ["BRCA1", "BRCA2"];

/// Per-gene carrier level: 0 non-carrier, 1 carrier, 2 carrier of more than
/// one variant (only for multi-variant genes).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenotypeState {
    pub levels: Vec<u8>,
}

impl GenotypeState {
    pub fn cardinality(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Packed {
    carried: u64,
    double: u64,
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    genes: Vec<String>,
    multi: Vec<bool>,
    max_carriers: usize,
    states: Vec<Packed>,
    index: HashMap<Packed, usize>,
}

/// `sum_{k<=m} C(n, k)`, the size of the pared space without extra levels.
pub fn pared_size(n: usize, m: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for k in 0..=m.min(n) {
        total += c;
        c = c * (n - k) as u128 / (k + 1) as u128;
    }
    total
}

/// Transmission probability of a variant from a parent at `level`.
fn transmits(level: u8) -> f64 {
    match level {
        0 => 0.0,
        1 => 0.5,
        _ => 1.0,
    }
}

impl StateSpace {
    /// States ordered by cardinality, then lexicographically by gene index,
    /// then by level.
    pub fn new(genes: &[String], max_carriers: usize, multi: &[bool]) -> StateSpace {
        assert!(genes.len() <= 64, "at most 64 genes");
        assert_eq!(genes.len(), multi.len());
        let n = genes.len();
        let mut states = Vec::new();
        for k in 0..=max_carriers.min(n) {
            let mut combo: Vec<usize> = (0..k).collect();
            loop {
                let multi_in: Vec<usize> = combo.iter().copied().filter(|&g| multi[g]).collect();
                let carried = combo.iter().fold(0u64, |m, &g| m | 1 << g);
                for bits in 0..(1u64 << multi_in.len()) {
                    let double = multi_in
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| bits >> (multi_in.len() - 1 - i) & 1 == 1)
                        .fold(0u64, |m, (_, &g)| m | 1 << g);
                    states.push(Packed { carried, double });
                }
                // next combination in lexicographic order
                let mut i = k;
                while i > 0 && combo[i - 1] == n - k + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                combo[i - 1] += 1;
                for j in i..k {
                    combo[j] = combo[j - 1] + 1;
                }
            }
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        StateSpace {
            genes: genes.to_vec(),
            multi: multi.to_vec(),
            max_carriers,
            states,
            index,
        }
    }

    pub fn for_settings(settings: &RunSettings) -> StateSpace {
        let multi: Vec<bool> = settings
            .genes
            .iter()
            .map(|g| settings.brca_multi_variant && MULTI_VARIANT_GENES.contains(&g.as_str()))
            .collect();
        StateSpace::new(&settings.genes, settings.max_carriers, &multi)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn max_carriers(&self) -> usize {
        self.max_carriers
    }

    pub fn level(&self, state: usize, gene: usize) -> u8 {
        let s = self.states[state];
        (s.carried >> gene & 1) as u8 + (s.double >> gene & 1) as u8
    }

    pub fn carries(&self, state: usize, gene: usize) -> bool {
        self.states[state].carried >> gene & 1 == 1
    }

    /// Bit mask of carried gene indices.
    pub fn carried_mask(&self, state: usize) -> u64 {
        self.states[state].carried
    }

    pub fn cardinality(&self, state: usize) -> usize {
        self.states[state].carried.count_ones() as usize
    }

    pub fn state(&self, state: usize) -> GenotypeState {
        GenotypeState {
            levels: (0..self.genes.len()).map(|g| self.level(state, g)).collect(),
        }
    }

    pub fn index_of(&self, state: &GenotypeState) -> Option<usize> {
        if state.levels.len() != self.genes.len() {
            return None;
        }
        let mut p = Packed { carried: 0, double: 0 };
        for (g, &l) in state.levels.iter().enumerate() {
            match l {
                0 => {}
                1 => p.carried |= 1 << g,
                2 => {
                    p.carried |= 1 << g;
                    p.double |= 1 << g;
                }
                _ => return None,
            }
        }
        self.index.get(&p).copied()
    }

    /// Carried gene names; multi-variant carriers get a `x2` suffix.
    pub fn carried_genes(&self, state: usize) -> Vec<String> {
        (0..self.genes.len())
            .filter_map(|g| match self.level(state, g) {
                0 => None,
                1 => Some(self.genes[g].clone()),
                _ => Some(format!("{}x2", self.genes[g])),
            })
            .collect()
    }

    pub fn label(&self, state: usize) -> String {
        let g = self.carried_genes(state);
        if g.is_empty() {
            "noncarrier".into()
        } else {
            g.join("+")
        }
    }

    /// Per-gene level probabilities `[P(0), P(1), P(2)]` for a founder of
    /// the given ancestry.
    pub fn level_priors(&self, kb: &KnowledgeBase, ancestry: &str) -> Result<Vec<[f64; 3]>, KbError> {
        self.genes
            .iter()
            .zip(&self.multi)
            .map(|(g, &multi)| {
                let f = kb.effective_allele_frequency(g, ancestry)?;
                Ok(if multi {
                    [(1.0 - f) * (1.0 - f), 2.0 * f * (1.0 - f), f * f]
                } else {
                    let c = carrier_probability(f);
                    [1.0 - c, c, 0.0]
                })
            })
            .collect()
    }

    /// Product of independent per-gene priors, renormalized over the pared space.
    pub fn founder_prior(&self, level_priors: &[[f64; 3]]) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.len())
            .map(|s| {
                (0..self.genes.len())
                    .map(|g| level_priors[g][self.level(s, g) as usize])
                    .product()
            })
            .collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
        }
        v
    }

    /// Child states reachable from (mother, father) with their probabilities.
    /// Mass that would leave the pared space is dropped.
    pub fn child_distribution(&self, mother: usize, father: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let (m, f) = (self.states[mother], self.states[father]);
        let union = m.carried | f.carried;
        // (gene, [P(level 0), P(level 1), P(level 2)])
        let mut genes: Vec<(usize, [f64; 3])> = Vec::with_capacity(union.count_ones() as usize);
        let mut bits = union;
        while bits != 0 {
            let g = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let tm = transmits(self.level(mother, g));
            let tf = transmits(self.level(father, g));
            let none = (1.0 - tm) * (1.0 - tf);
            let p = if self.multi[g] {
                [none, tm * (1.0 - tf) + tf * (1.0 - tm), tm * tf]
            } else {
                [none, 1.0 - none, 0.0]
            };
            genes.push((g, p));
        }
        self.expand(&genes, 0, Packed { carried: 0, double: 0 }, 1.0, 0, out);
    }

    fn expand(&self, genes: &[(usize, [f64; 3])], i: usize, acc: Packed, p: f64, card: usize, out: &mut Vec<(usize, f64)>) {
        if i == genes.len() {
            if let Some(&idx) = self.index.get(&acc) {
                out.push((idx, p));
            }
            return;
        }
        let (g, probs) = genes[i];
        for (level, &q) in probs.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let mut next = acc;
            let mut c = card;
            if level > 0 {
                c += 1;
                if c > self.max_carriers {
                    continue;
                }
                next.carried |= 1 << g;
                if level == 2 {
                    next.double |= 1 << g;
                }
            }
            self.expand(genes, i + 1, next, p * q, c, out);
        }
    }

    /// `P(child | mother, father)`.
    pub fn transmission(&self, child: usize, mother: usize, father: usize) -> f64 {
        let mut buf = Vec::new();
        self.child_distribution(mother, father, &mut buf);
        buf.iter().find(|(s, _)| *s == child).map_or(0.0, |(_, p)| *p)
    }
}
