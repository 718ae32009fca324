//! Mendelian risk engine: pared genotype states, exact peeling, age
//! imputation and future-risk projection.

mod impute;
mod likelihood;
pub mod oracle;
mod peel;
mod risk;
mod settings;
mod state;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KbError, KnowledgeBase};
use crate::pedigree::{
    count_loops, detect_and_break_loops, validate_pedigree, ClonePair, ModelInputTable, Pedigree,
    PedigreeError,
};
use crate::types::IndividualId;

pub use impute::{has_missing_ages, impute_ages, MAX_GAP, MIN_GAP, MODE_GAP};
pub use oracle::enumerate_posterior;
pub use peel::peel;
pub use risk::{
    cancer_future_risk, cbc_factor, cbc_risk, conditional_risk, future_risk, horizons, RiskCurve,
};
pub use settings::{ModelName, PenetranceMode, RunSettings};
pub use state::{pared_size, GenotypeState, StateSpace, MULTI_VARIANT_GENES};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Pedigree(#[from] PedigreeError),
    #[error("pedigree contains {loops} loop(s) and automatic loop breaking is off")]
    LoopDetected { loops: usize },
    #[error("{states} states x {members} members exceeds the cap of {cap}")]
    StateSpaceOverflow { states: usize, members: usize, cap: usize },
    #[error("individual {0} has no age")]
    MissingAge(IndividualId),
    #[error("no feasible age for individual {id}: bounds {lo}..{hi}")]
    InfeasibleConstraints { id: IndividualId, lo: i64, hi: i64 },
    #[error("the observed data have zero probability under every genotype configuration")]
    ZeroLikelihood,
    #[error("{joint_states:.3e} joint states exceed the enumeration limit")]
    TooLarge { joint_states: f64 },
    #[error("{cancer}: {reason}")]
    CancerNotApplicable { cancer: String, reason: String },
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneProbability {
    pub gene: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProbability {
    pub state: String,
    pub genes: Vec<String>,
    pub probability: f64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTrace {
    pub settings: RunSettings,
    pub kb_version: String,
    pub kb_synthetic: bool,
    pub seed: u64,
    pub state_space_size: usize,
    pub members: usize,
    pub proband_age: u32,
    /// False when paring drops genotype combinations.
    pub exact_paring: bool,
    pub clone_pairs: Vec<ClonePair>,
    /// True when loop breaking duplicated phenotype data.
    pub approximate: bool,
    pub imputed_individuals: Vec<IndividualId>,
    pub imputation_draws: usize,
}

/// Wall-clock seconds per pipeline stage. Not part of the serialized result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub prepare: f64,
    pub impute: f64,
    pub peel: f64,
    pub risk: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub pedigree_id: String,
    pub carrier_posterior: Vec<GeneProbability>,
    pub noncarrier_probability: f64,
    pub joint_posterior: Vec<StateProbability>,
    pub future_risk: Vec<RiskCurve>,
    pub cbc_risk: RiskCurve,
    pub console_log: Vec<String>,
    pub trace: ParameterTrace,
    #[serde(skip)]
    pub timing: Timing,
}

impl RunResult {
    pub fn carrier_probability(&self, gene: &str) -> Option<f64> {
        self.carrier_posterior.iter().find(|g| g.gene == gene).map(|g| g.probability)
    }

    pub fn joint_total(&self) -> f64 {
        self.joint_posterior.iter().map(|s| s.probability).sum()
    }

    pub fn risk_for(&self, cancer: &str) -> Option<&RiskCurve> {
        self.future_risk.iter().find(|r| r.cancer == cancer)
    }

    /// Deterministic JSON encoding (timing excluded).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run results always serialize")
    }
}

/// A pedigree flattened for the engine, with what was done to get there.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub settings: RunSettings,
    pub table: ModelInputTable,
    pub clone_pairs: Vec<ClonePair>,
    pub console: Vec<String>,
}

/// Resolve settings, validate, break loops and flatten to the model table.
pub fn prepare(pedigree: &Pedigree, kb: &KnowledgeBase, settings: &RunSettings) -> Result<PreparedInput, EngineError> {
    let s = settings.resolved(kb)?;
    let report = validate_pedigree(pedigree, kb);
    if report.has_blocking() {
        return Err(PedigreeError::ValidationFailed(report).into());
    }
    let loops = count_loops(pedigree);
    if loops > 0 && !s.auto_break_loops {
        return Err(EngineError::LoopDetected { loops });
    }
    let (broken, clone_pairs) = detect_and_break_loops(pedigree);
    let table = ModelInputTable::from_pedigree(&broken, kb, &s)?;
    Ok(PreparedInput {
        settings: s,
        table,
        clone_pairs,
        console: report.lines(),
    })
}

/// Full pipeline on a builder pedigree: validate, break loops, flatten,
/// impute, peel every imputed table, average, project risks.
pub fn run_model(pedigree: &Pedigree, kb: &KnowledgeBase, settings: &RunSettings) -> Result<RunResult, EngineError> {
    run_model_with(pedigree, kb, settings, PosteriorMethod::Peeling)
}

/// How the per-table proband posterior is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMethod {
    Peeling,
    /// Full joint enumeration; guarded by [`oracle::MAX_JOINT_STATES`].
    Enumeration,
}

pub fn run_model_with(
    pedigree: &Pedigree,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    method: PosteriorMethod,
) -> Result<RunResult, EngineError> {
    let start = Instant::now();
    let p = prepare(pedigree, kb, settings)?;
    run_prepared(p.table, kb, p.settings, p.console, p.clone_pairs, start, method)
}

/// Pipeline on a flat model table (e.g. read from CSV). Empty race or
/// ancestry cells take the settings defaults.
pub fn run_table(table: &ModelInputTable, kb: &KnowledgeBase, settings: &RunSettings) -> Result<RunResult, EngineError> {
    run_table_with(table, kb, settings, PosteriorMethod::Peeling)
}

pub fn run_table_with(
    table: &ModelInputTable,
    kb: &KnowledgeBase,
    settings: &RunSettings,
    method: PosteriorMethod,
) -> Result<RunResult, EngineError> {
    let start = Instant::now();
    let s = settings.resolved(kb)?;
    let mut table = table.clone();
    for r in &mut table.rows {
        if r.race.is_empty() {
            r.race = s.default_race.clone();
        }
        if r.ancestry.is_empty() {
            r.ancestry = s.default_ancestry.clone();
        }
        if !kb.races.contains(&r.race) {
            return Err(EngineError::InvalidInput(format!("individual {}: unknown race '{}'", r.id, r.race)));
        }
        if !kb.ancestries.contains(&r.ancestry) {
            return Err(EngineError::InvalidInput(format!("individual {}: unknown ancestry '{}'", r.id, r.ancestry)));
        }
    }
    let mut pairs = Vec::new();
    let pedigree = table.to_pedigree()?;
    let loops = count_loops(&pedigree);
    if loops > 0 {
        if !s.auto_break_loops {
            return Err(EngineError::LoopDetected { loops });
        }
        let (broken, p) = detect_and_break_loops(&pedigree);
        pairs = p;
        table = ModelInputTable::build(&broken, kb, &s);
    }
    let console = validate_pedigree(&pedigree, kb).lines();
    run_prepared(table, kb, s, console, pairs, start, method)
}

fn run_prepared(
    table: ModelInputTable,
    kb: &KnowledgeBase,
    s: RunSettings,
    mut console: Vec<String>,
    pairs: Vec<ClonePair>,
    start: Instant,
    method: PosteriorMethod,
) -> Result<RunResult, EngineError> {
    let space = StateSpace::for_settings(&s);
    let proband = table
        .proband()
        .ok_or_else(|| EngineError::InvalidInput("table has no proband row".into()))?
        .clone();
    let proband_age = proband.age.ok_or(EngineError::MissingAge(proband.id))?;
    let members = table.rows.len();
    if space.len().saturating_mul(members) > s.max_state_cells {
        return Err(EngineError::StateSpaceOverflow {
            states: space.len(),
            members,
            cap: s.max_state_cells,
        });
    }
    let prepare = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let imputed_individuals: Vec<IndividualId> = table.rows.iter().filter(|r| r.age.is_none()).map(|r| r.id).collect();
    let tables = if imputed_individuals.is_empty() {
        vec![table.clone()]
    } else {
        impute_ages(&table, kb.max_age, s.imputation_iterations, s.seed)?
    };
    let impute = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let posteriors: Vec<Vec<f64>> = tables
        .par_iter()
        .map(|t| match method {
            PosteriorMethod::Peeling => peel(t, kb, &s, &space),
            PosteriorMethod::Enumeration => enumerate_posterior(t, kb, &s, &space),
        })
        .collect::<Result<_, _>>()?;
    let mut joint = vec![0.0; space.len()];
    for p in &posteriors {
        for (x, y) in joint.iter_mut().zip(p) {
            *x += y;
        }
    }
    let n = posteriors.len() as f64;
    joint.iter_mut().for_each(|x| *x /= n);
    let peel_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let future = risk::future_risk(&joint, &proband, kb, &s, &space)?;
    let cbc = risk::cbc_or_reason(&joint, &proband, kb, &s, &space)?;
    let risk_time = t.elapsed().as_secs_f64();

    let carrier_posterior = s
        .genes
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let (with, without): (Vec<usize>, Vec<usize>) = (0..space.len()).partition(|&st| space.carries(st, g));
            let carried: f64 = with.iter().map(|&st| joint[st]).sum();
            // above one half the complement is the more accurate sum, and is
            // exact when no mass sits on non-carrying states
            let probability = if carried > 0.5 {
                1.0 - without.iter().map(|&st| joint[st]).sum::<f64>()
            } else {
                carried
            };
            GeneProbability {
                gene: name.clone(),
                probability,
            }
        })
        .collect();
    let joint_posterior = (0..space.len())
        .map(|st| StateProbability {
            state: space.label(st),
            genes: space.carried_genes(st),
            probability: joint[st],
        })
        .collect();

    let exact_paring = s.max_carriers >= s.genes.len();
    console.push(format!(
        "NOTE: {} genotype states ({} genes, at most {} carried at once)",
        space.len(),
        s.genes.len(),
        s.max_carriers
    ));
    if !exact_paring {
        console.push(format!(
            "NOTE: paring is an approximation; set max carriers to {} for exact calculations",
            s.genes.len()
        ));
    }
    for p in &pairs {
        console.push(format!(
            "NOTE: loop broken by cloning individual {} as {}; results are approximate",
            p.original, p.clone
        ));
    }
    if !imputed_individuals.is_empty() {
        console.push(format!(
            "NOTE: {} unknown age(s) imputed over {} iteration(s), seed {}",
            imputed_individuals.len(),
            tables.len(),
            s.seed
        ));
    }

    Ok(RunResult {
        pedigree_id: table.pedigree_id.clone(),
        carrier_posterior,
        noncarrier_probability: joint[0],
        joint_posterior,
        future_risk: future,
        cbc_risk: cbc,
        console_log: console,
        trace: ParameterTrace {
            seed: s.seed,
            kb_version: kb.version.clone(),
            kb_synthetic: kb.synthetic,
            state_space_size: space.len(),
            members,
            proband_age,
            exact_paring,
            approximate: !pairs.is_empty(),
            clone_pairs: pairs,
            imputation_draws: tables.len(),
            imputed_individuals,
            settings: s,
        },
        timing: Timing {
            prepare,
            impute,
            peel: peel_time,
            risk: risk_time,
            total: start.elapsed().as_secs_f64(),
        },
    })
}
