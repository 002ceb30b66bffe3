use std::path::Path;
use std::process::{Command, Output};

use indzsl::formats::{read_features, write_semantics};
use indzsl_core::nnkernel::Matrix;

const FAST: &[&str] = &["--profile", "toy", "--epochs", "3", "--n-syn", "40"];

fn indzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_indzsl"))
        .args(args)
        .env("INDZSL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = indzsl(args);
    assert!(
        out.status.success(),
        "indzsl {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fast_with(extra: &[&str]) -> Vec<String> {
    FAST.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run_args<'a>(cmd: &'a str, args: &'a [String]) -> Vec<&'a str> {
    std::iter::once(cmd).chain(args.iter().map(String::as_str)).collect()
}

fn tsv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_every_artifact_and_prints_percentages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let args = fast_with(&["--outdir", out.to_str().unwrap()]);
    let stdout = ok(&run_args("run", &args));
    assert!(stdout.contains("czsl acc="), "{stdout}");
    let h = stdout.lines().find(|l| l.starts_with("gzsl")).unwrap();
    let h = h.rsplit("H=").next().unwrap().trim_end_matches('%');
    assert_eq!(h.split('.').nth(1).map(str::len), Some(1), "one decimal: {h}");
    for name in indzsl::pipeline::ARTIFACTS {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let rows = tsv_rows(&out.join("report.tsv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.len() == 7 && r[6] == "ok"));
    let synth = read_features(&out.join("synthesized.bin")).unwrap();
    assert_eq!(synth.len(), 4 * 40);
}

#[test]
fn generated_files_load_back_into_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["generate", "--profile", "toy", "--seed", "2", "--outdir", data.to_str().unwrap()]);
    let config = dir.path().join("files.toml");
    std::fs::write(
        &config,
        format!(
            "features = {:?}\nsemantics = {:?}\nsplits = {:?}\n",
            data.join("features.bin"),
            data.join("semantics.bin"),
            data.join("splits.tsv")
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let args = fast_with(&["--config", config.to_str().unwrap(), "--outdir", out.to_str().unwrap()]);
    ok(&run_args("run", &args));
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn sweep_of_one_matches_a_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let single = dir.path().join("single");
    let sweep = dir.path().join("sweep");
    let args = fast_with(&["--lambda", "0.5", "--outdir", single.to_str().unwrap()]);
    ok(&run_args("run", &args));
    let args = fast_with(&["--outdir", sweep.to_str().unwrap(), "--param", "lambda", "--values", "0.5"]);
    ok(&run_args("sweep", &args));
    let a = std::fs::read(single.join("report.json")).unwrap();
    let b = std::fs::read(sweep.join("lambda_0.5").join("report.json")).unwrap();
    assert_eq!(a, b);
    let single_rows = std::fs::read_to_string(single.join("report.tsv")).unwrap();
    let sweep_rows = std::fs::read_to_string(sweep.join("sweep.tsv")).unwrap();
    assert_eq!(single_rows, sweep_rows);
}

#[test]
fn lambda_grid_gives_distinct_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let args = fast_with(&["--mode", "czsl", "--outdir", out.to_str().unwrap(), "--param", "lambda", "--values", "0,0.1,1"]);
    ok(&run_args("sweep", &args));
    let rows = tsv_rows(&out.join("sweep.tsv"));
    assert_eq!(rows.len(), 3);
    let mut hashes: Vec<&str> = rows.iter().map(|r| r[5].as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    assert_eq!(hashes.len(), 3);
}

#[test]
fn top_k_grid_rows_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let args = fast_with(&["--outdir", out.to_str().unwrap(), "--param", "top-k", "--values", "1,2,4"]);
    ok(&run_args("sweep", &args));
    let rows = tsv_rows(&out.join("sweep.tsv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[6], "ok");
        assert!(r[1].parse::<f64>().is_ok());
        if r[0] == "gzsl" {
            assert!(r[2].parse::<f64>().is_ok() && r[3].parse::<f64>().is_ok());
        }
    }
}

#[test]
fn failing_sweep_point_becomes_an_error_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let args = fast_with(&["--mode", "czsl", "--outdir", out.to_str().unwrap(), "--param", "top-k", "--values", "0,1"]);
    ok(&run_args("sweep", &args));
    let rows = tsv_rows(&out.join("sweep.tsv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0][6].starts_with("error"), "{:?}", rows[0]);
    assert_eq!(rows[1][6], "ok");
}

#[test]
fn refine_semantics_reports_and_rejects_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.bin");
    let z = Matrix::from_rows(&[[1.0, 0.2, 0.0], [1.0, 0.0, 0.3], [1.0, -0.2, -0.1], [0.9, 0.1, 0.2]]).unwrap();
    write_semantics(&good, &[0, 1, 2, 3], &z).unwrap();
    let out = dir.path().join("refined");
    let stdout = ok(&["refine-semantics", "--semantics", good.to_str().unwrap(), "--outdir", out.to_str().unwrap()]);
    assert!(stdout.contains("->"));
    for name in ["similarity_before.csv", "similarity_after.csv", "similarity_summary.json", "refined_semantics.bin"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("similarity_summary.json")).unwrap()).unwrap();
    assert!(summary["mean_offdiag_after"].as_f64() < summary["mean_offdiag_before"].as_f64());

    let rank_one = dir.path().join("rank1.bin");
    let z = Matrix::from_rows(&[[1.0, 2.0, 0.5], [2.0, 4.0, 1.0], [-1.0, -2.0, -0.5]]).unwrap();
    write_semantics(&rank_one, &[0, 1, 2], &z).unwrap();
    let failed = indzsl(&["refine-semantics", "--semantics", rank_one.to_str().unwrap(), "--outdir", out.to_str().unwrap()]);
    assert!(!failed.status.success());
    let stderr = String::from_utf8_lossy(&failed.stderr);
    assert!(stderr.contains("degenerate span"), "{stderr}");
}

#[test]
fn import_csv_converts_and_reports_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    std::fs::write(&csv, "label,split,f0,f1\n3,train,0.5,1.0\n7,test,-1.0,2.0\n").unwrap();
    let bin = dir.path().join("x.bin");
    ok(&["import-csv", "--input", csv.to_str().unwrap(), "--output", bin.to_str().unwrap()]);
    let file = read_features(&bin).unwrap();
    assert_eq!((file.dim, file.len()), (2, 2));
    assert_eq!(file.class_ids, vec![3, 7]);
    assert_eq!(file.test_flags, vec![false, true]);

    std::fs::write(&csv, "label,split,f0,f1\n3,train,0.5,1.0\n7,validate,-1.0,2.0\n").unwrap();
    let failed = indzsl(&["import-csv", "--input", csv.to_str().unwrap(), "--output", bin.to_str().unwrap()]);
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("line 3"));
}

#[test]
fn unknown_config_keys_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "lamda = 0.1\n").unwrap();
    let failed = indzsl(&["run", "--config", config.to_str().unwrap()]);
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("lamda"));
}
