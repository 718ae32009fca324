//! `famrisk`: batch runs, validation, brute-force checks, timing and the
//! HTTP service.
//!
//! Exit codes: 0 success, 1 error, 2 validation failure.

mod commands;
mod input;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use famrisk_core::{ModelName, PenetranceMode, RunSettings};

#[derive(Debug, Parser)]
#[command(name = "famrisk", version, about = "Hereditary cancer risk from family history")]
struct Cli {
    /// Knowledge bundle directory (defaults to the built-in synthetic bundle).
    #[arg(long, global = true, value_name = "DIR")]
    kb: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a pedigree and print the report.
    Validate(InputArgs),
    /// Run the model and write the result files.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        settings: SettingsArgs,
        /// Directory for result.json, CSVs, bundle.zip and report.html;
        /// without it the result JSON goes to stdout.
        #[arg(long, short, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Compute the result by full joint enumeration and compare with peeling.
    Oracle {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        settings: SettingsArgs,
        /// Largest tolerated difference between the two posteriors.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Write the enumeration result JSON here.
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Time repeated runs, or measure queue completion times through the service.
    Bench {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Queue lengths to measure through the service, e.g. 1,2,3,4,5,6.
        #[arg(long, value_delimiter = ',', value_name = "N,...")]
        queue: Option<Vec<usize>>,
        /// Timed trials per queue length; the fit uses the median.
        #[arg(long, default_value_t = 3)]
        trials: usize,
    },
    /// Serve the HTTP API. Put a TLS-terminating proxy in front of it.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Storage directory; omitted means in-memory storage.
        #[arg(long, value_name = "DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[arg(long, default_value_t = 4)]
        max_active_jobs_per_user: usize,
        /// Create this admin account at startup if missing; the password is
        /// read from FAMRISK_ADMIN_PASSWORD.
        #[arg(long, value_name = "USERNAME")]
        bootstrap_admin: Option<String>,
    },
    /// Knowledge bundle utilities.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Write the active bundle to a directory.
    Export {
        #[arg(value_name = "DIR")]
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Pedigree JSON, or a model-table CSV (by `.csv` extension).
    #[arg(value_name = "FILE")]
    pedigree: Option<PathBuf>,
    /// Use a built-in pedigree instead of a file.
    #[arg(long, value_parser = ["example", "example-complete", "five-member", "consanguineous", "double-loop"], conflicts_with = "pedigree")]
    fixture: Option<String>,
}

/// One flag per run setting; unset flags keep the defaults.
#[derive(Debug, Args)]
struct SettingsArgs {
    /// Start from a settings JSON file instead of the defaults.
    #[arg(long, value_name = "FILE")]
    settings: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelName>,
    #[arg(long, value_delimiter = ',')]
    genes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    cancers: Option<Vec<String>>,
    /// Most genes carried at once (paring).
    #[arg(long, visible_alias = "paring")]
    max_carriers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    risk_intervals: Option<Vec<u32>>,
    #[arg(long)]
    default_race: Option<String>,
    #[arg(long)]
    default_ancestry: Option<String>,
    #[arg(long)]
    imputation_iterations: Option<usize>,
    #[arg(long)]
    penetrance_mode: Option<PenetranceMode>,
    #[arg(long)]
    apply_prophylactic: Option<bool>,
    #[arg(long)]
    use_proband_germline: Option<bool>,
    #[arg(long)]
    brca_multi_variant: Option<bool>,
    #[arg(long)]
    auto_break_loops: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_state_cells: Option<usize>,
}

impl SettingsArgs {
    fn to_settings(&self) -> Result<RunSettings, commands::Failure> {
        let mut s = match &self.settings {
            Some(path) => serde_json::from_str(&input::read_text(path)?)
                .map_err(|e| commands::Failure::Error(format!("{}: {e}", path.display())))?,
            None => RunSettings::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { s.$f = v.clone(); })*};
        }
        set!(
            model, genes, cancers, max_carriers, risk_intervals, default_race, default_ancestry,
            imputation_iterations, penetrance_mode, apply_prophylactic, use_proband_germline,
            brca_multi_variant, auto_break_loops, seed, max_state_cells
        );
        Ok(s)
    }
}

fn main() -> ExitCode {
    // usage errors exit 1 so that 2 always means a validation failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
