use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::Duration;

use famrisk_core::kb::synthetic::synthetic_bundle;
use famrisk_core::pedigree::CoreCounts;
use famrisk_core::{fixtures, run_model, run_table, ModelInputTable, Pedigree, RunSettings, Sex};
use famrisk_service::bundle::entry_names;
use famrisk_service::{MemoryStore, Service, ServiceConfig};
use tempfile::TempDir;

fn famrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_famrisk")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_pedigree(dir: &TempDir, name: &str, p: &Pedigree) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string(p).unwrap()).unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn father_marked_female_fails_validation_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let mut p = fixtures::five_member_pedigree();
    let father = p.members[&p.proband].father.unwrap();
    p.members.get_mut(&father).unwrap().sex = Sex::Female;
    let path = write_pedigree(&dir, "bad.json", &p);
    for cmd in ["validate", "run"] {
        let out = famrisk(&[cmd, arg(&path)]);
        assert_eq!(out.status.code(), Some(2), "{cmd}: {}", stderr(&out));
        assert!(stderr(&out).contains("validation failed"), "{}", stderr(&out));
        assert!(stderr(&out).to_lowercase().contains("father"), "{}", stderr(&out));
    }
}

#[test]
fn valid_pedigree_validates_with_exit_0() {
    let out = famrisk(&["validate", "--fixture", "example"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("example: valid"));
}

#[test]
fn unknown_gene_is_an_error_with_exit_1() {
    let out = famrisk(&["run", "--fixture", "five-member", "--genes", "BRCA1,NOTAGENE"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown gene 'NOTAGENE'"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_1_not_2() {
    let out = famrisk(&["run", "--fixture", "five-member", "--max-carriers", "lots"]);
    assert_eq!(out.status.code(), Some(1));
    let out = famrisk(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn run_writes_result_files() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = famrisk(&[
        "run", "--fixture", "five-member", "--model", "fam3pro22", "--max-carriers", "2", "--seed", "4", "-o",
        arg(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["result.json", "posterior.csv", "risk.csv", "bundle.zip", "report.html"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let result = json(&std::fs::read_to_string(out_dir.join("result.json")).unwrap());
    assert_eq!(result["trace"]["settings"]["max_carriers"], 2);
    assert_eq!(result["trace"]["settings"]["genes"].as_array().unwrap().len(), 22);
    assert_eq!(entry_names(&std::fs::read(out_dir.join("bundle.zip")).unwrap()).unwrap().len(), 8);
}

#[test]
fn flags_map_onto_run_settings() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = famrisk(&[
        "run", "--fixture", "five-member", "-o", arg(&out_dir), "--model", "custom", "--genes", "BRCA1,BRCA2",
        "--cancers", "breast,ovarian", "--paring", "1", "--risk-intervals", "2,4", "--default-race", "AllRaces",
        "--default-ancestry", "Other", "--imputation-iterations", "3", "--penetrance-mode", "crude",
        "--apply-prophylactic", "false", "--use-proband-germline", "false", "--brca-multi-variant", "false",
        "--auto-break-loops", "false", "--seed", "99", "--max-state-cells", "5000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let result = json(&std::fs::read_to_string(out_dir.join("result.json")).unwrap());
    let s: RunSettings = serde_json::from_value(result["trace"]["settings"].clone()).unwrap();
    let expected = RunSettings {
        model: famrisk_core::ModelName::Custom,
        genes: vec!["BRCA1".into(), "BRCA2".into()],
        cancers: vec!["breast".into(), "ovarian".into()],
        max_carriers: 1,
        risk_intervals: vec![2, 4],
        default_race: "AllRaces".into(),
        default_ancestry: "Other".into(),
        imputation_iterations: 3,
        penetrance_mode: famrisk_core::PenetranceMode::Crude,
        apply_prophylactic: false,
        use_proband_germline: false,
        brca_multi_variant: false,
        auto_break_loops: false,
        seed: 99,
        max_state_cells: 5000,
    };
    assert_eq!(s, expected);
}

#[test]
fn oracle_matches_peeling_on_five_member_fixture() {
    let dir = TempDir::new().unwrap();
    let exact = dir.path().join("exact.json");
    let out = famrisk(&["oracle", "--fixture", "five-member", "--genes", "BRCA1,BRCA2", "-o", arg(&exact)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary = json(&stdout(&out));
    assert_eq!(summary["match"], true);
    assert!(summary["max_abs_difference"].as_f64().unwrap() <= 1e-9);
    assert_eq!(summary["states"], 4);

    // same schema as a run result, and the same numbers to 1e-9
    let kb = synthetic_bundle();
    let s = RunSettings { genes: vec!["BRCA1".into(), "BRCA2".into()], ..RunSettings::default() };
    let peeled = run_model(&fixtures::five_member_pedigree(), &kb, &s).unwrap();
    let enumerated: famrisk_core::RunResult = serde_json::from_str(&std::fs::read_to_string(exact).unwrap()).unwrap();
    for (a, b) in enumerated.joint_posterior.iter().zip(&peeled.joint_posterior) {
        assert_eq!(a.state, b.state);
        assert!((a.probability - b.probability).abs() <= 1e-9);
    }
}

#[test]
fn oracle_on_lone_proband_gives_founder_prior() {
    let dir = TempDir::new().unwrap();
    let path = write_pedigree(&dir, "lone.json", &fixtures::lone_proband(Sex::Female, 0));
    let exact = dir.path().join("exact.json");
    let out = famrisk(&["oracle", arg(&path), "--genes", "BRCA1,BRCA2,G3", "--max-carriers", "3", "-o", arg(&exact)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r: famrisk_core::RunResult = serde_json::from_str(&std::fs::read_to_string(exact).unwrap()).unwrap();
    let kb = synthetic_bundle();
    let carrier = |g: &str| {
        let f = kb.effective_allele_frequency(g, "Other").unwrap();
        1.0 - (1.0 - f) * (1.0 - f)
    };
    for g in ["BRCA1", "BRCA2", "G3"] {
        let got = r.carrier_probability(g).unwrap();
        assert!((got - carrier(g)).abs() <= 1e-15, "{g}: {got} vs {}", carrier(g));
    }
}

#[test]
fn oracle_refuses_inputs_beyond_the_enumeration_limit() {
    let dir = TempDir::new().unwrap();
    let p = Pedigree::create("big", Sex::Female, 50)
        .unwrap()
        .add_core_relatives(CoreCounts {
            sisters: 3,
            brothers: 2,
            maternal_aunts: 3,
            maternal_uncles: 2,
            paternal_aunts: 2,
            paternal_uncles: 1,
            ..Default::default()
        })
        .unwrap();
    assert_eq!(p.members.len(), 20);
    let path = write_pedigree(&dir, "big.json", &p);
    let out = famrisk(&["oracle", arg(&path), "--imputation-iterations", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("exceed the enumeration limit"), "{}", stderr(&out));
}

#[test]
fn cli_and_service_results_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let p = fixtures::example_pedigree();
    let path = write_pedigree(&dir, "example.json", &p);
    let out_dir = dir.path().join("out");
    let out = famrisk(&["run", arg(&path), "--seed", "21", "--imputation-iterations", "3", "-o", arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cli_json = std::fs::read_to_string(out_dir.join("result.json")).unwrap();

    let svc = Service::start(
        Arc::new(MemoryStore::new()),
        Arc::new(synthetic_bundle()),
        ServiceConfig { workers: 1, ..ServiceConfig::default() },
    )
    .unwrap();
    svc.register("cli-user", "cli-user-pw").unwrap();
    let caller = svc.authenticate(&svc.login("cli-user", "cli-user-pw").unwrap().token).unwrap();
    svc.import_pedigree(&caller, p).unwrap();
    let settings = RunSettings { seed: 21, imputation_iterations: 3, ..RunSettings::default() };
    let job = svc.enqueue_run(&caller, "example", &settings).unwrap();
    assert!(svc.wait_idle(Duration::from_secs(120)));
    assert_eq!(svc.result_json(&caller, &job.job_id).unwrap(), cli_json);

    let stdout_json = stdout(&famrisk(&["run", arg(&path), "--seed", "21", "--imputation-iterations", "3"]));
    assert_eq!(stdout_json.trim_end(), cli_json);
}

#[test]
fn csv_table_input_runs_like_run_table() {
    let dir = TempDir::new().unwrap();
    let kb = synthetic_bundle();
    let s = RunSettings::default().resolved(&kb).unwrap();
    let table = ModelInputTable::from_pedigree(&fixtures::five_member_pedigree(), &kb, &s).unwrap();
    let path = dir.path().join("five.csv");
    std::fs::write(&path, table.to_csv()).unwrap();
    let out = famrisk(&["run", arg(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let parsed = ModelInputTable::from_csv("five", &table.to_csv()).unwrap();
    let expected = run_table(&parsed, &kb, &RunSettings::default()).unwrap().to_json();
    assert_eq!(stdout(&out).trim_end(), expected);
    let out = famrisk(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn bench_reports_stage_timings_and_stable_hashes() {
    let out = famrisk(&["bench", "--fixture", "five-member", "--repeats", "3", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = json(&stdout(&out));
    assert_eq!(report["repeats"], 3);
    assert_eq!(report["identical_results"], true);
    let runs = report["runs"].as_array().unwrap();
    let hash = report["result_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for r in runs {
        assert_eq!(r["result_sha256"], hash);
        for stage in ["prepare", "impute", "peel", "risk", "total"] {
            assert!(r["seconds"][stage].as_f64().unwrap() >= 0.0);
        }
    }
}

#[test]
fn bench_queue_mode_reports_a_linear_fit() {
    let out = famrisk(&["bench", "--fixture", "five-member", "--queue", "1,2,3", "--trials", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = json(&stdout(&out));
    assert_eq!(report["trials"], 2);
    for s in report["samples_seconds"].as_array().unwrap() {
        assert_eq!(s.as_array().unwrap().len(), 2);
    }
    assert_eq!(report["queue_lengths"], serde_json::json!([1, 2, 3]));
    assert_eq!(report["last_completion_seconds"].as_array().unwrap().len(), 3);
    assert!(report["fit"]["slope"].as_f64().unwrap() > 0.0);
    assert!(report["fit"]["r_squared"].as_f64().is_some());
    let out = famrisk(&["bench", "--fixture", "five-member", "--queue", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exported_bundle_loads_back() {
    let dir = TempDir::new().unwrap();
    let kb_dir = dir.path().join("kb");
    let out = famrisk(&["kb", "export", arg(&kb_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let from_file = stdout(&famrisk(&["--kb", arg(&kb_dir), "run", "--fixture", "five-member"]));
    let built_in = stdout(&famrisk(&["run", "--fixture", "five-member"]));
    assert_eq!(from_file, built_in);
    let out = famrisk(&["--kb", arg(&dir.path().join("missing")), "validate", "--fixture", "example"]);
    assert_eq!(out.status.code(), Some(1));
}
