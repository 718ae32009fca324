//! Test-side helpers: a random loop-free pedigree generator and a
//! brute-force posterior written independently of the engine.

#![allow(dead_code)]

use std::collections::BTreeMap;

use famrisk_core::engine::RunSettings;
use famrisk_core::kb::{carrier_probability, KnowledgeBase};
use famrisk_core::pedigree::{GermlineCell, ModelInputTable, ModelRow, Relation};
use famrisk_core::{IndividualId, MarkerStatus, ModelName, Pedigree, Sex, SurgeryKind};
use rand::seq::SliceRandom;
use rand::Rng;

pub const GENE_POOL: [&str; 6] = ["BRCA1", "BRCA2", "G3", "G4", "G9", "G13"];
pub const CANCER_POOL: [&str; 7] = ["breast", "ovarian", "colorectal", "endometrial", "prostate", "pancreas", "melanoma"];

fn sex<R: Rng>(rng: &mut R) -> Sex {
    if rng.gen_bool(0.5) {
        Sex::Female
    } else {
        Sex::Male
    }
}

/// Random builder-made pedigree with at most `max_members` people.
pub fn random_structure<R: Rng>(rng: &mut R, max_members: usize) -> Pedigree {
    let mut p = Pedigree::create("rand", sex(rng), rng.gen_range(20..70)).unwrap();
    let target = rng.gen_range(1..=max_members);
    for _ in 0..30 {
        if p.len() >= target {
            break;
        }
        let ids: Vec<IndividualId> = p.members.keys().copied().collect();
        let anchor = *ids.choose(rng).unwrap();
        let rel = *[
            Relation::Parent,
            Relation::Child,
            Relation::Sibling,
            Relation::HalfSiblingViaMother,
            Relation::HalfSiblingViaFather,
        ]
        .choose(rng)
        .unwrap();
        if let Ok((next, _)) = p.add_relative(anchor, rel, sex(rng)) {
            if next.len() <= max_members {
                p = next;
            }
        }
    }
    p
}

/// Random custom-model settings over at most `max_genes` genes, exact paring.
pub fn random_settings<R: Rng>(rng: &mut R, max_genes: usize) -> RunSettings {
    let n = rng.gen_range(1..=max_genes);
    let mut genes: Vec<String> = GENE_POOL.iter().map(|s| s.to_string()).collect();
    genes.shuffle(rng);
    genes.truncate(n);
    let k = rng.gen_range(1..=4);
    let mut cancers: Vec<String> = CANCER_POOL.iter().map(|s| s.to_string()).collect();
    cancers.shuffle(rng);
    cancers.truncate(k);
    RunSettings {
        model: ModelName::Custom,
        max_carriers: n,
        genes,
        cancers,
        apply_prophylactic: rng.gen_bool(0.5),
        use_proband_germline: rng.gen_bool(0.5),
        ..RunSettings::default()
    }
}

/// Overwrites every row's phenotype with random (but well-formed) data.
pub fn randomize_phenotypes<R: Rng>(rng: &mut R, table: &mut ModelInputTable, kb: &KnowledgeBase) {
    let cancers = table.cancers.clone();
    let genes = table.genes.clone();
    for r in &mut table.rows {
        let age = rng.gen_range(0..=kb.max_age);
        r.age = Some(age);
        r.deceased = rng.gen_bool(0.2);
        r.race = kb.races.choose(rng).unwrap().clone();
        r.ancestry = kb.ancestries.choose(rng).unwrap().clone();
        r.diagnoses.clear();
        r.surgeries.clear();
        r.markers.clear();
        r.germline.clear();
        for c in &cancers {
            if !kb.cancer(c).unwrap().sex_restriction.allows(r.sex) || !rng.gen_bool(0.25) {
                continue;
            }
            let dx_age = if rng.gen_bool(0.15) { None } else { Some(rng.gen_range(0..=age)) };
            r.diagnoses.insert(c.clone(), dx_age);
        }
        for k in SurgeryKind::ALL {
            let allowed = k == SurgeryKind::BilateralMastectomy || r.sex == Sex::Female;
            if allowed && rng.gen_bool(0.1) {
                let a = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..=age)) };
                r.surgeries.insert(k, a);
            }
        }
        for (cancer, markers) in &kb.marker_sets {
            if r.diagnoses.contains_key(cancer) {
                for m in markers {
                    if rng.gen_bool(0.4) {
                        let st = if rng.gen_bool(0.5) { MarkerStatus::Positive } else { MarkerStatus::Negative };
                        r.markers.insert(m.clone(), st);
                    }
                }
            }
        }
        for g in &genes {
            let cell = match rng.gen_range(0..10) {
                0 => GermlineCell::Positive,
                1 => GermlineCell::Negative,
                2 => GermlineCell::Vus,
                _ => continue,
            };
            r.germline.insert(g.clone(), cell);
        }
    }
}

fn survival(h: &[f64], upto: usize) -> f64 {
    let mut s = 1.0;
    for t in 0..upto.min(h.len()) {
        s *= 1.0 - h[t];
    }
    s
}

/// Phenotype likelihood of one row given the set of carried genes (bit
/// `i` = `settings.genes[i]`), from first principles.
pub fn row_likelihood(kb: &KnowledgeBase, s: &RunSettings, row: &ModelRow, proband_like: bool, carried: u32) -> f64 {
    let carries = |i: usize| carried >> i & 1 == 1;
    if !proband_like || s.use_proband_germline {
        for (i, g) in s.genes.iter().enumerate() {
            match row.germline(g) {
                GermlineCell::Positive if !carries(i) => return 0.0,
                GermlineCell::Negative if carries(i) => return 0.0,
                _ => {}
            }
        }
    }
    let age = row.age.expect("complete table") as usize;
    let mut l = 1.0;
    for c in &s.cancers {
        let spec = kb.cancer(c).unwrap();
        if !spec.sex_restriction.allows(row.sex) {
            continue;
        }
        let mut h: Vec<f64> = kb.baseline_curve(c, row.sex).unwrap().values().to_vec();
        for (i, g) in s.genes.iter().enumerate() {
            if !carries(i) {
                continue;
            }
            if let Some(curve) = kb.gene(g).unwrap().adjusted_penetrance(c, row.sex, &row.race) {
                for t in 0..h.len() {
                    h[t] = h[t].max(curve.values()[t]);
                }
            }
        }
        let dx = row.diagnoses.get(c).copied();
        if s.apply_prophylactic {
            let surgery = row
                .surgeries
                .iter()
                .filter(|(k, _)| kb.surgery_organs.get(k) == Some(&spec.organ))
                .filter_map(|(_, a)| *a)
                .min();
            if let Some(sa) = surgery {
                let dx_after = matches!(dx, Some(Some(a)) if a > sa);
                if !dx_after {
                    for t in (sa as usize + 1)..h.len() {
                        h[t] = 0.0;
                    }
                }
            }
        }
        l *= match dx {
            None => survival(&h, age),
            Some(None) => 1.0 - survival(&h, age + 1),
            Some(Some(a)) => {
                let a = (a as usize).min(h.len() - 1);
                h[a] * survival(&h, a)
            }
        };
    }
    for (m, st) in &row.markers {
        let Some((cancer, _)) = kb.marker_sets.iter().find(|(_, ms)| ms.contains(m)) else { continue };
        if !row.diagnoses.contains_key(cancer) || !s.cancers.contains(cancer) {
            continue;
        }
        for (i, g) in s.genes.iter().enumerate() {
            if carries(i) {
                let key = famrisk_core::kb::MarkerKey {
                    cancer: cancer.clone(),
                    marker: m.clone(),
                    status: *st,
                    gene: g.clone(),
                };
                if let Some(lr) = kb.marker_lr.get(&key) {
                    l *= lr;
                }
            }
        }
    }
    l
}

/// Founder probability of carrying exactly `carried` (no paring).
pub fn founder_prior(kb: &KnowledgeBase, s: &RunSettings, ancestry: &str, carried: u32) -> f64 {
    s.genes
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let f = kb.effective_allele_frequency(g, ancestry).unwrap();
            let p = carrier_probability(f);
            if carried >> i & 1 == 1 {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

/// Probability that a child of parents carrying `m` and `f` carries `c`.
pub fn transmission(n_genes: usize, c: u32, m: u32, f: u32) -> f64 {
    (0..n_genes)
        .map(|i| {
            let tm = if m >> i & 1 == 1 { 0.5 } else { 0.0 };
            let tf = if f >> i & 1 == 1 { 0.5 } else { 0.0 };
            let p = 1.0 - (1.0 - tm) * (1.0 - tf);
            if c >> i & 1 == 1 {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

/// Proband posterior over carried-gene masks by summing every joint
/// assignment. Returns `None` when the evidence has probability zero.
pub fn brute_force_posterior(kb: &KnowledgeBase, s: &RunSettings, table: &ModelInputTable) -> Option<Vec<f64>> {
    let n_genes = s.genes.len();
    let states = 1u32 << n_genes;
    let proband = table.rows.iter().find(|r| r.is_proband).unwrap().id;
    // parents before children
    let mut order: Vec<&ModelRow> = Vec::new();
    while order.len() < table.rows.len() {
        for r in &table.rows {
            if order.iter().any(|o| o.id == r.id) {
                continue;
            }
            let placed = |p: Option<IndividualId>| p.map_or(true, |p| order.iter().any(|o| o.id == p));
            if placed(r.mother) && placed(r.father) {
                order.push(r);
            }
        }
    }
    let index: BTreeMap<IndividualId, usize> = order.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    let lik: Vec<Vec<f64>> = order
        .iter()
        .map(|r| {
            let pl = r.is_proband || r.clone_of == Some(proband);
            (0..states).map(|c| row_likelihood(kb, s, r, pl, c)).collect()
        })
        .collect();
    let pi = index[&proband];
    let mut post = vec![0.0; states as usize];
    let mut assign = vec![0u32; order.len()];

    fn walk(
        k: usize,
        w: f64,
        order: &[&ModelRow],
        index: &BTreeMap<IndividualId, usize>,
        lik: &[Vec<f64>],
        kb: &KnowledgeBase,
        s: &RunSettings,
        states: u32,
        assign: &mut Vec<u32>,
        post: &mut [f64],
        pi: usize,
    ) {
        if k == order.len() {
            post[assign[pi] as usize] += w;
            return;
        }
        let r = order[k];
        for c in 0..states {
            let base = match (r.mother, r.father) {
                (Some(m), Some(f)) => transmission(s.genes.len(), c, assign[index[&m]], assign[index[&f]]),
                _ => founder_prior(kb, s, &r.ancestry, c),
            };
            let x = w * base * lik[k][c as usize];
            if x == 0.0 {
                continue;
            }
            assign[k] = c;
            walk(k + 1, x, order, index, lik, kb, s, states, assign, post, pi);
        }
    }
    walk(0, 1.0, &order, &index, &lik, kb, s, states, &mut assign, &mut post, pi);
    let z: f64 = post.iter().sum();
    if z == 0.0 {
        return None;
    }
    Some(post.iter().map(|x| x / z).collect())
}

/// A loop-free random instance with a complete table.
pub fn random_case(kb: &KnowledgeBase, seed: u64, max_members: usize, max_genes: usize) -> (RunSettings, ModelInputTable) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = random_structure(&mut rng, max_members);
    let s = random_settings(&mut rng, max_genes).resolved(kb).unwrap();
    let mut t = ModelInputTable::from_pedigree(&p, kb, &s).unwrap();
    randomize_phenotypes(&mut rng, &mut t, kb);
    (s, t)
}

/// Largest per-state gap between the engine's peeling posterior and the
/// brute-force posterior; `Ok(None)` when both agree the evidence is impossible.
pub fn peel_vs_brute_force(kb: &KnowledgeBase, s: &RunSettings, t: &ModelInputTable) -> Result<Option<f64>, String> {
    use famrisk_core::engine::{peel, EngineError, StateSpace};
    let space = StateSpace::for_settings(s);
    let oracle = brute_force_posterior(kb, s, t);
    match (peel(t, kb, s, &space), oracle) {
        (Err(EngineError::ZeroLikelihood), None) => Ok(None),
        (Ok(post), Some(o)) => {
            let mut worst: f64 = 0.0;
            for st in 0..space.len() {
                let mask = space.carried_mask(st) as usize;
                worst = worst.max((post[st] - o[mask]).abs());
            }
            Ok(Some(worst))
        }
        (a, b) => Err(format!("engine {:?} vs oracle {:?}", a.map(|_| "posterior"), b.map(|_| "posterior"))),
    }
}
