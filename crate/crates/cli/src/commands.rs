//! Subcommand implementations.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use famrisk_core::kb::save_bundle;
use famrisk_core::pedigree::validate_pedigree;
use famrisk_core::report::{bundle_entries, posterior_csv, printable_html, risk_csv};
use famrisk_core::{
    fixtures, prepare, run_model_with, run_table_with, EngineError, KnowledgeBase, ModelInputTable, PedigreeError,
    PosteriorMethod, RunResult, RunSettings,
};
use famrisk_service::bench::queue_linearity;
use famrisk_service::bundle::zip_entries;
use famrisk_service::{FileStore, MemoryStore, Role, Service, ServiceConfig, Store};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::input::{load_input, load_kb, Input};
use crate::{Cli, Command, InputArgs, KbCommand};

#[derive(Debug)]
pub enum Failure {
    /// The input failed validation (exit 2).
    Validation(String),
    /// Anything else (exit 1).
    Error(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Error(_) => 1,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Validation(m) => format!("validation failed:\n{m}"),
            Failure::Error(m) => format!("error: {m}"),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Pedigree(PedigreeError::ValidationFailed(report)) => {
                Failure::Validation(report.lines().join("\n"))
            }
            other => Failure::Error(other.to_string()),
        }
    }
}

/// Prints to stdout, ignoring a closed pipe.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Error(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    let kb = load_kb(cli.kb.as_deref())?;
    match cli.command {
        Command::Validate(input) => validate(&kb, &load_input(&input)?),
        Command::Run { input, settings, out } => run(&kb, &load_input(&input)?, &settings.to_settings()?, out.as_deref()),
        Command::Oracle { input, settings, tolerance, out } => {
            oracle(&kb, &load_input(&input)?, &settings.to_settings()?, tolerance, out.as_deref())
        }
        Command::Bench { input, settings, repeats, queue, trials } => {
            let input = bench_input(&input)?;
            let s = settings.to_settings()?;
            match queue {
                Some(lengths) => bench_queue(kb, &input, &s, &lengths, trials),
                None => bench_runs(&kb, &input, &s, repeats),
            }
        }
        Command::Serve { addr, data_dir, workers, max_active_jobs_per_user, bootstrap_admin } => {
            let config = ServiceConfig { workers, max_active_jobs_per_user, ..ServiceConfig::default() };
            serve(kb, addr, data_dir.as_deref(), config, bootstrap_admin.as_deref())
        }
        Command::Kb { command: KbCommand::Export { dir } } => {
            save_bundle(&kb, &dir).map_err(|e| Failure::Error(e.to_string()))?;
            emit!("wrote bundle {} to {}", kb.version, dir.display());
            Ok(())
        }
    }
}

fn validate(kb: &KnowledgeBase, input: &Input) -> Result<(), Failure> {
    let report = validate_pedigree(&input.pedigree()?, kb);
    let lines = report.lines();
    if report.has_blocking() {
        return Err(Failure::Validation(lines.join("\n")));
    }
    for l in &lines {
        emit!("{l}");
    }
    emit!("{}: valid", input.id());
    Ok(())
}

/// Runs the pipeline with the given posterior method. Table inputs are
/// validated like pedigrees before running.
fn compute(kb: &KnowledgeBase, input: &Input, s: &RunSettings, method: PosteriorMethod) -> Result<RunResult, Failure> {
    match input {
        Input::Pedigree(p) => Ok(run_model_with(p, kb, s, method)?),
        Input::Table(t) => {
            let report = validate_pedigree(&input.pedigree()?, kb);
            if report.has_blocking() {
                return Err(Failure::Validation(report.lines().join("\n")));
            }
            Ok(run_table_with(t, kb, s, method)?)
        }
    }
}

/// The table the run was computed on, for the report artifacts.
fn model_table(kb: &KnowledgeBase, input: &Input, s: &RunSettings) -> Result<ModelInputTable, Failure> {
    match input {
        Input::Pedigree(p) => Ok(prepare(p, kb, s)?.table),
        Input::Table(t) => Ok(t.clone()),
    }
}

fn run(kb: &KnowledgeBase, input: &Input, s: &RunSettings, out: Option<&Path>) -> Result<(), Failure> {
    let result = compute(kb, input, s, PosteriorMethod::Peeling)?;
    let json = result.to_json();
    let Some(dir) = out else {
        emit!("{json}");
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let table = model_table(kb, input, s)?;
    write(&dir.join("result.json"), &json)?;
    write(&dir.join("posterior.csv"), posterior_csv(&result))?;
    write(&dir.join("risk.csv"), risk_csv(&result))?;
    write(&dir.join("bundle.zip"), zip_entries(&bundle_entries(&result, &table)))?;
    write(&dir.join("report.html"), printable_html(&result, &table))?;
    for line in &result.console_log {
        eprintln!("{line}");
    }
    emit!("{}", dir.display());
    Ok(())
}

fn oracle(kb: &KnowledgeBase, input: &Input, s: &RunSettings, tolerance: f64, out: Option<&Path>) -> Result<(), Failure> {
    let exact = compute(kb, input, s, PosteriorMethod::Enumeration)?;
    let peeled = compute(kb, input, s, PosteriorMethod::Peeling)?;
    let gap = exact
        .joint_posterior
        .iter()
        .zip(&peeled.joint_posterior)
        .map(|(a, b)| (a.probability - b.probability).abs())
        .fold(0.0f64, f64::max);
    if let Some(path) = out {
        write(path, exact.to_json())?;
    }
    let summary = json!({
        "pedigree_id": exact.pedigree_id,
        "states": exact.joint_posterior.len(),
        "members": exact.trace.members,
        "max_abs_difference": gap,
        "tolerance": tolerance,
        "match": gap <= tolerance,
    });
    emit!("{}", serde_json::to_string_pretty(&summary).expect("json value"));
    if gap <= tolerance {
        Ok(())
    } else {
        Err(Failure::Error(format!("peeling differs from enumeration by {gap:e} (tolerance {tolerance:e})")))
    }
}

fn bench_input(args: &InputArgs) -> Result<Input, Failure> {
    if args.pedigree.is_none() && args.fixture.is_none() {
        Ok(Input::Pedigree(fixtures::example_pedigree()))
    } else {
        load_input(args)
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn bench_runs(kb: &KnowledgeBase, input: &Input, s: &RunSettings, repeats: usize) -> Result<(), Failure> {
    let mut runs = Vec::new();
    let mut hashes = Vec::new();
    for _ in 0..repeats.max(1) {
        let r = compute(kb, input, s, PosteriorMethod::Peeling)?;
        let hash = sha256_hex(&r.to_json());
        runs.push(json!({
            "seconds": {
                "prepare": r.timing.prepare,
                "impute": r.timing.impute,
                "peel": r.timing.peel,
                "risk": r.timing.risk,
                "total": r.timing.total,
            },
            "result_sha256": hash,
        }));
        hashes.push(hash);
    }
    let first = runs.first().and_then(|r| r["seconds"]["total"].as_f64()).unwrap_or(0.0);
    let totals: Vec<f64> = runs.iter().filter_map(|r| r["seconds"]["total"].as_f64()).collect();
    let report = json!({
        "pedigree_id": input.id(),
        "settings": s.resolved(kb)?,
        "repeats": runs.len(),
        "runs": runs,
        "total_seconds": {
            "first": first,
            "min": totals.iter().copied().fold(f64::INFINITY, f64::min),
            "max": totals.iter().copied().fold(0.0, f64::max),
        },
        "result_sha256": hashes[0],
        "identical_results": hashes.windows(2).all(|w| w[0] == w[1]),
    });
    emit!("{}", serde_json::to_string_pretty(&report).expect("json value"));
    Ok(())
}

fn bench_queue(kb: Arc<KnowledgeBase>, input: &Input, s: &RunSettings, lengths: &[usize], trials: usize) -> Result<(), Failure> {
    if lengths.len() < 2 || lengths.contains(&0) {
        return Err(Failure::Error("--queue needs at least two positive lengths".into()));
    }
    let report = queue_linearity(kb, &input.pedigree()?, s, lengths, trials).map_err(|e| Failure::Error(e.to_string()))?;
    emit!("{}", serde_json::to_string_pretty(&report).expect("json value"));
    Ok(())
}

fn serve(
    kb: Arc<KnowledgeBase>,
    addr: std::net::SocketAddr,
    data_dir: Option<&Path>,
    config: ServiceConfig,
    admin: Option<&str>,
) -> Result<(), Failure> {
    let store: Arc<dyn Store> = match data_dir {
        Some(d) => Arc::new(FileStore::open(d).map_err(|e| Failure::Error(e.to_string()))?),
        None => Arc::new(MemoryStore::new()),
    };
    let svc = Service::start(store, kb, config).map_err(|e| Failure::Error(e.to_string()))?;
    if let Some(name) = admin {
        let password = std::env::var("FAMRISK_ADMIN_PASSWORD")
            .map_err(|_| Failure::Error("FAMRISK_ADMIN_PASSWORD is not set".into()))?;
        match svc.create_account(name, &password, Role::Admin) {
            Ok(_) => eprintln!("created admin account '{name}'"),
            Err(famrisk_service::ServiceError::DuplicateUser) => {}
            Err(e) => return Err(Failure::Error(e.to_string())),
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Error(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(famrisk_service::api::serve(Arc::new(svc), addr))
        .map_err(|e| Failure::Error(e.to_string()))
}
