use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nestt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestt")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.cfg");
    fs::write(
        &path,
        format!(
            "problem.m_total = 120
problem.p_dim = 8
problem.n_components = 4
problem.k_sparse = 2
algo[0].name = nestt_e
algo[0].sampling = lipschitz
algo[0].alpha_scale = 10
algo[0].passes = 4
algo[0].seeds = 3
algo[1].name = prox_gd
algo[1].passes = 4
algo[1].seeds = 0
output.dir = {}
",
            dir.join("out").display()
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = nestt(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(dir.path().join("out/runs")).unwrap().count(), 4);

    let out_dir = dir.path().join("out");
    let out = nestt(&["summarize", "--input", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("nestt_e") && text.contains("prox_gd"));
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn gen_instance_writes_text_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let target = dir.path().join("inst/problem.txt");
    let out = nestt(&["gen-instance", "--config", &cfg, "--out", target.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(&target).unwrap();
    assert!(first.starts_with("8 4"));
    let problem = nestt::problem::read_problem(first.as_bytes()).unwrap();
    assert_eq!((problem.dim(), problem.n()), (8, 4));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "algo[0].name = nestt_g\nalgo[0].colour = blue\n").unwrap();
    let out = nestt(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    fs::write(&path, "just some words\n").unwrap();
    assert_eq!(nestt(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nestt(&["summarize", "--input", dir.path().join("nothing").to_str().unwrap()]);
    assert!(!out.status.success());
}
