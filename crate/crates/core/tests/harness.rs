use std::fs;
use std::path::Path;

use nestt::harness::io::{read_run, CSV_HEADER};
use nestt::harness::{run_algorithm, run_experiment, summarize_dir, AlgoConfig, Algorithm, ExperimentConfig};
use nestt::problem::{generate_regression_instance, RegressionConfig};
use nestt::sampling::Sampling;

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "problem.m_total = 200
problem.p_dim = 12
problem.n_components = 5
problem.k_sparse = 3
problem.seed = 4
algo[0].name = nestt_g
algo[0].sampling = sqrt_lipschitz
algo[0].passes = 5
algo[0].seeds = 1, 2
algo[1].name = saga
algo[1].sampling = uniform
algo[1].passes = 5
algo[1].seeds = 1, 2
output.dir = {}
",
        out.display()
    ))
    .unwrap()
}

/// CSV text with the wallclock column dropped.
fn strip_wallclock(path: &Path) -> String {
    let col = CSV_HEADER.iter().position(|h| *h == "wallclock_ns").unwrap();
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(col);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn run_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
}

#[test]
fn experiment_writes_one_file_per_run_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records.len(), 4);
    let files = run_files(dir.path());
    assert_eq!(files.len(), 4);
    assert!(dir.path().join("combined.csv").exists());

    for path in &files {
        let back = read_run(path).unwrap();
        let original = records.iter().find(|r| r.run_id == back.run_id).unwrap();
        assert_eq!(back.samples, original.samples);
        assert_eq!(back.fingerprint, cfg.fingerprint());
        assert_eq!(back.final_z, original.final_z);
        // passes = grad_evals / N exactly.
        for s in &back.samples {
            assert_eq!(s.passes, s.grad_evals as f64 / 5.0);
        }
    }

    let first: Vec<String> = files.iter().map(|f| strip_wallclock(f)).collect();
    let combined = strip_wallclock(&dir.path().join("combined.csv"));
    run_experiment(&cfg).unwrap();
    let second: Vec<String> = run_files(dir.path()).iter().map(|f| strip_wallclock(f)).collect();
    assert_eq!(first, second);
    assert_eq!(combined, strip_wallclock(&dir.path().join("combined.csv")));
}

#[test]
fn summarize_dir_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config(dir.path())).unwrap();
    let text = summarize_dir(dir.path()).unwrap();
    assert!(text.contains("nestt_g") && text.contains("saga"));
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn desk_scale_run_makes_progress() {
    let (p, _) = generate_regression_instance(&RegressionConfig::default()).unwrap();
    let algo = AlgoConfig::new(Algorithm::NesttG, Sampling::SqrtLipschitz, 100, vec![0]);
    let rec = run_algorithm(&p, &algo, 0, 1.0).unwrap();
    let after_one_pass = rec.samples.iter().find(|s| s.passes >= 1.0).unwrap().gap;
    assert!(rec.final_gap() * 10.0 <= after_one_pass, "{} vs {}", rec.final_gap(), after_one_pass);
}
