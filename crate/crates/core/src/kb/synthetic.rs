//! Generator for the shipped `kb-synth-1` bundle.
//!
//! Every number here is synthetic. Curves come from a Weibull cumulative
//! hazard `H(a) = -ln(1 - L) * ((a + 1) / (max_age + 1))^k`, so the lifetime
//! risk at `max_age` is exactly `L`. Gene names other than BRCA1/BRCA2 are
//! placeholders (`G3`..`G22`).

use std::collections::BTreeMap;

use super::{
    CancerSpec, GeneSpec, HazardCurve, KnowledgeBase, MarkerKey, ModelDef, SexRestriction,
    NONCARRIER,
};
use crate::types::{MarkerStatus, Sex, SurgeryKind};

pub const VERSION: &str = "kb-synth-1";
pub const MAX_AGE: u32 = 95;

/// (name, restriction, organ, female lifetime risk, male lifetime risk, shape)
const CANCERS: [(&str, SexRestriction, &str, f64, f64, f64); 18] = [
    ("brain", SexRestriction::Any, "brain", 0.005, 0.007, 2.0),
    ("breast", SexRestriction::Any, "breast", 0.13, 0.0013, 3.5),
    ("cervical", SexRestriction::Female, "cervix", 0.006, 0.0, 2.5),
    ("colorectal", SexRestriction::Any, "colon", 0.04, 0.045, 4.5),
    ("endometrial", SexRestriction::Female, "uterus", 0.03, 0.0, 4.5),
    ("gastric", SexRestriction::Any, "stomach", 0.007, 0.011, 4.5),
    ("hepatobiliary", SexRestriction::Any, "liver", 0.01, 0.02, 4.5),
    ("kidney", SexRestriction::Any, "kidney", 0.013, 0.023, 4.0),
    ("leukemia", SexRestriction::Any, "blood", 0.012, 0.017, 1.5),
    ("melanoma", SexRestriction::Any, "skin", 0.02, 0.03, 3.0),
    ("osteosarcoma", SexRestriction::Any, "bone", 0.0008, 0.001, 1.2),
    ("ovarian", SexRestriction::Female, "ovaries", 0.012, 0.0, 4.0),
    ("pancreas", SexRestriction::Any, "pancreas", 0.016, 0.017, 5.0),
    ("prostate", SexRestriction::Male, "prostate", 0.0, 0.12, 5.5),
    ("small_intestine", SexRestriction::Any, "small_intestine", 0.003, 0.003, 4.0),
    ("soft_tissue_sarcoma", SexRestriction::Any, "soft_tissue", 0.003, 0.004, 2.0),
    ("thyroid", SexRestriction::Any, "thyroid", 0.018, 0.007, 2.0),
    ("urinary_bladder", SexRestriction::Any, "bladder", 0.011, 0.035, 5.0),
];

const MODEL11_CANCERS: [&str; 12] = [
    "breast",
    "ovarian",
    "colorectal",
    "endometrial",
    "pancreas",
    "prostate",
    "melanoma",
    "gastric",
    "kidney",
    "small_intestine",
    "hepatobiliary",
    "urinary_bladder",
];

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Annual hazards whose cumulative risk reaches `lifetime` at `max_age`.
pub fn weibull_curve(lifetime: f64, shape: f64, max_age: u32) -> HazardCurve {
    let total = -(1.0 - lifetime).ln();
    let span = (max_age + 1) as f64;
    let cum = |a: f64| total * (a / span).powf(shape);
    HazardCurve::new(
        (0..=max_age)
            .map(|a| {
                let dh = cum(a as f64 + 1.0) - cum(a as f64);
                round9(1.0 - (-dh).exp())
            })
            .collect(),
    )
}

fn cancer_table() -> Vec<CancerSpec> {
    CANCERS
        .iter()
        .map(|&(name, r, organ, ..)| CancerSpec {
            name: name.into(),
            sex_restriction: r,
            organ: organ.into(),
        })
        .collect()
}

fn baseline_params(cancer: &str, sex: Sex) -> (f64, f64) {
    let row = CANCERS.iter().find(|c| c.0 == cancer).unwrap();
    let risk = match sex {
        Sex::Female => row.3,
        Sex::Male => row.4,
    };
    (risk, row.5)
}

/// (cancer, relative lifetime-risk multiplier) pairs for a placeholder gene.
fn placeholder_associations(i: usize) -> Vec<(&'static str, f64)> {
    match i {
        3..=6 => vec![
            ("colorectal", 10.0),
            ("endometrial", 12.0),
            ("ovarian", 3.0),
            ("gastric", 4.0),
        ],
        _ => {
            let rr = 3.0 + (i % 5) as f64 * 2.0;
            let mut v = vec![(CANCERS[(i * 5) % 18].0, rr), (CANCERS[(i * 7 + 3) % 18].0, rr / 2.0)];
            if i % 2 == 0 {
                v.push((CANCERS[(i * 11 + 1) % 18].0, rr / 3.0 + 1.0));
            }
            v.dedup_by(|a, b| a.0 == b.0);
            v
        }
    }
}

fn gene_curves(
    assoc: &[(&str, f64, f64)],
    cancers: &[CancerSpec],
) -> BTreeMap<(String, Sex), HazardCurve> {
    let mut out = BTreeMap::new();
    for &(cancer, female_risk, male_risk) in assoc {
        let spec = cancers.iter().find(|c| c.name == cancer).unwrap();
        for (sex, risk) in [(Sex::Female, female_risk), (Sex::Male, male_risk)] {
            if !spec.sex_restriction.allows(sex) || risk <= 0.0 {
                continue;
            }
            let (_, shape) = baseline_params(cancer, sex);
            out.insert(
                (cancer.to_string(), sex),
                weibull_curve(risk.min(0.9), (shape - 1.0).max(1.0), MAX_AGE),
            );
        }
    }
    out
}

fn genes(cancers: &[CancerSpec]) -> Vec<GeneSpec> {
    let mut genes = Vec::new();
    let brca1 = [
        ("breast", 0.70, 0.012),
        ("ovarian", 0.44, 0.0),
        ("pancreas", 0.03, 0.03),
        ("prostate", 0.0, 0.21),
    ];
    let brca2 = [
        ("breast", 0.60, 0.07),
        ("ovarian", 0.17, 0.0),
        ("pancreas", 0.05, 0.06),
        ("prostate", 0.0, 0.27),
        ("melanoma", 0.05, 0.06),
    ];
    let mut race = BTreeMap::new();
    race.insert(("Black".to_string(), "breast".to_string()), 1.1);
    race.insert(("Asian".to_string(), "breast".to_string()), 0.9);
    genes.push(GeneSpec {
        name: "BRCA1".into(),
        allele_frequency: 0.0006,
        ancestry_frequencies: [("AshkenaziJewish".into(), 0.01), ("Italian".into(), 0.0013)]
            .into_iter()
            .collect(),
        penetrance: gene_curves(&brca1, cancers),
        race_adjustments: race.clone(),
    });
    race.insert(("Black".to_string(), "breast".to_string()), 1.05);
    genes.push(GeneSpec {
        name: "BRCA2".into(),
        allele_frequency: 0.0009,
        ancestry_frequencies: [("AshkenaziJewish".into(), 0.008), ("Italian".into(), 0.0015)]
            .into_iter()
            .collect(),
        penetrance: gene_curves(&brca2, cancers),
        race_adjustments: race,
    });
    for i in 3..=22 {
        let assoc: Vec<(&str, f64, f64)> = placeholder_associations(i)
            .into_iter()
            .map(|(c, rr)| {
                let f = baseline_params(c, Sex::Female).0 * rr;
                let m = baseline_params(c, Sex::Male).0 * rr;
                (c, f, m)
            })
            .collect();
        genes.push(GeneSpec {
            name: format!("G{i}"),
            allele_frequency: round9(0.0001 + 0.0001 * (i % 7) as f64 + 0.00005),
            ancestry_frequencies: BTreeMap::new(),
            penetrance: gene_curves(&assoc, cancers),
            race_adjustments: BTreeMap::new(),
        });
    }
    genes
}

fn life_table() -> BTreeMap<Sex, HazardCurve> {
    let curve = |scale: f64, cap: f64| {
        HazardCurve::new(
            (0..=MAX_AGE)
                .map(|a| round9(((0.0002 + 0.00005 * (0.095 * a as f64).exp()) * scale).min(cap)))
                .collect(),
        )
    };
    [(Sex::Female, curve(1.0, 0.5)), (Sex::Male, curve(1.4, 0.6))]
        .into_iter()
        .collect()
}

fn marker_lr() -> BTreeMap<MarkerKey, f64> {
    use MarkerStatus::{Negative, Positive};
    let mut out = BTreeMap::new();
    let mut put = |cancer: &str, marker: &str, status, gene: &str, lr: f64| {
        out.insert(
            MarkerKey {
                cancer: cancer.into(),
                marker: marker.into(),
                status,
                gene: gene.into(),
            },
            lr,
        );
    };
    put("breast", "ER", Negative, "BRCA1", 3.0);
    put("breast", "ER", Positive, "BRCA1", 0.35);
    put("breast", "ER", Negative, "BRCA2", 0.9);
    put("breast", "ER", Positive, "BRCA2", 1.05);
    put("breast", "PR", Negative, "BRCA1", 2.0);
    put("breast", "PR", Positive, "BRCA1", 0.5);
    put("breast", "HER2", Negative, "BRCA1", 1.3);
    put("breast", "HER2", Positive, "BRCA1", 0.3);
    put("breast", "HER2", Positive, "BRCA2", 0.6);
    put("breast", "CK5.6", Positive, "BRCA1", 2.5);
    put("breast", "CK5.6", Negative, "BRCA1", 0.6);
    put("breast", "CK14", Positive, "BRCA1", 2.0);
    put("breast", "CK14", Negative, "BRCA1", 0.7);
    for g in ["G3", "G4", "G5", "G6"] {
        put("colorectal", "MSI", Positive, g, 8.0);
        put("colorectal", "MSI", Negative, g, 0.2);
    }
    for (marker, gene) in [("MLH1", "G3"), ("MSH2", "G4"), ("MSH6", "G5"), ("PMS2", "G6")] {
        put("colorectal", marker, Positive, gene, 10.0);
        put("colorectal", marker, Negative, gene, 0.15);
    }
    out
}

fn cbc() -> (BTreeMap<String, HazardCurve>, BTreeMap<(String, String), f64>) {
    let flat = |h: f64| HazardCurve::new(vec![h; MAX_AGE as usize + 1]);
    let hazards = [
        (NONCARRIER.to_string(), flat(0.004)),
        ("BRCA1".to_string(), flat(0.03)),
        ("BRCA2".to_string(), flat(0.02)),
    ]
    .into_iter()
    .collect();
    let factors = [
        ("first_bc_type", "pure_invasive", 1.0),
        ("first_bc_type", "mixed_invasive", 1.1),
        ("first_bc_type", "dcis", 0.75),
        ("anti_estrogen", "yes", 0.6),
        ("anti_estrogen", "no", 1.0),
        ("high_risk_preneoplasia", "yes", 1.5),
        ("high_risk_preneoplasia", "no", 1.0),
        ("birads", "a", 0.8),
        ("birads", "b", 1.0),
        ("birads", "c", 1.2),
        ("birads", "d", 1.5),
        ("tumor_size", "t1", 1.0),
        ("tumor_size", "t2", 1.15),
        ("tumor_size", "t3", 1.3),
        ("tumor_size", "tis", 0.85),
    ]
    .into_iter()
    .map(|(m, l, rr)| ((m.to_string(), l.to_string()), rr))
    .collect();
    (hazards, factors)
}

/// Builds the synthetic bundle in memory.
pub fn synthetic_bundle() -> KnowledgeBase {
    let cancers = cancer_table();
    let genes = genes(&cancers);
    let mut baseline = BTreeMap::new();
    for c in &cancers {
        for sex in [Sex::Female, Sex::Male] {
            if c.sex_restriction.allows(sex) {
                let (risk, shape) = baseline_params(&c.name, sex);
                baseline.insert((c.name.clone(), sex), weibull_curve(risk, shape, MAX_AGE));
            }
        }
    }
    let all_genes: Vec<String> = genes.iter().map(|g| g.name.clone()).collect();
    let all_cancers: Vec<String> = cancers.iter().map(|c| c.name.clone()).collect();
    let mut models = BTreeMap::new();
    models.insert(
        "Fam3PRO22".to_string(),
        ModelDef {
            genes: all_genes.clone(),
            cancers: all_cancers,
        },
    );
    models.insert(
        "Fam3PRO11".to_string(),
        ModelDef {
            genes: all_genes[..11].to_vec(),
            cancers: MODEL11_CANCERS.iter().map(|s| s.to_string()).collect(),
        },
    );
    let (cbc_hazard, cbc_factors) = cbc();
    KnowledgeBase {
        version: VERSION.into(),
        max_age: MAX_AGE,
        synthetic: true,
        races: ["AllRaces", "AIAN", "Asian", "Black", "White"]
            .map(String::from)
            .to_vec(),
        ethnicities: ["Hispanic", "NonHispanic"].map(String::from).to_vec(),
        ancestries: ["AshkenaziJewish", "Italian", "Other"].map(String::from).to_vec(),
        marker_sets: [
            ("breast", vec!["ER", "PR", "HER2", "CK5.6", "CK14"]),
            ("colorectal", vec!["MSI", "MLH1", "MSH2", "MSH6", "PMS2"]),
        ]
        .into_iter()
        .map(|(c, ms)| (c.to_string(), ms.into_iter().map(String::from).collect()))
        .collect(),
        surgery_organs: [
            (SurgeryKind::BilateralMastectomy, "breast"),
            (SurgeryKind::Hysterectomy, "uterus"),
            (SurgeryKind::BilateralOophorectomy, "ovaries"),
        ]
        .into_iter()
        .map(|(k, o)| (k, o.to_string()))
        .collect(),
        models,
        genes,
        cancers,
        baseline,
        life_table: life_table(),
        marker_lr: marker_lr(),
        cbc_hazard,
        cbc_factors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weibull_curve_hits_lifetime_risk() {
        let c = weibull_curve(0.13, 3.5, MAX_AGE);
        assert!((c.cumulative(MAX_AGE) - 0.13).abs() < 1e-6);
        assert_eq!(c.len(), 96);
    }

    #[test]
    fn counts() {
        let kb = synthetic_bundle();
        assert_eq!(kb.genes.len(), 22);
        assert_eq!(kb.cancers.len(), 18);
        assert_eq!(kb.models["Fam3PRO11"].genes.len(), 11);
        assert_eq!(kb.models["Fam3PRO11"].cancers.len(), 12);
    }
}
