use std::path::Path;
use std::process::{Command, Output};

use pcbias::io::{load_dataset, Format};

fn pcbias(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcbias"))
        .args(args)
        .current_dir(cwd)
        .env("PCBIAS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_kind_in_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[experiment]\nkind = \"no-such-kind\"\n").unwrap();
    let o = pcbias(&["run", "--config", "c.toml"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unknown_kind_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pcbias(&["run", "--kind", "no-such-kind"], dir.path())), 2);
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pcbias(&["run", "--bogus"], dir.path())), 2);
    assert_eq!(code(&pcbias(&["frobnicate"], dir.path())), 2);
    assert_eq!(code(&pcbias(&["run"], dir.path())), 2);
}

#[test]
fn missing_config_file_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcbias(&["run", "--config", "absent.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn run_writes_summary_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[experiment]\nkind = \"pc-convergence\"\n[data]\nq = 6\nper_class = 30\n\
         [network]\ndepth = 2\nwidth = 8\n[training]\nepochs = 20\n[ensemble]\nmembers = 3\n",
    )
    .unwrap();
    let o = pcbias(&["run", "--config", "c.toml", "--seed", "4", "--out", "res", "--plots"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    assert!(summary.starts_with("key,value\nkind,pc-convergence\nseed,4\n"), "{summary}");
    for f in ["spread.csv", "distance.csv", "half_times.csv", "checks.csv", "spread.svg"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
}

#[test]
fn divergence_exits_1_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[experiment]\nkind = \"pc-convergence\"\n[data]\nq = 6\nper_class = 30\n\
         [network]\ndepth = 2\nwidth = 8\n[training]\nlr = 10.0\nepochs = 200\n[ensemble]\nmembers = 2\n",
    )
    .unwrap();
    let o = pcbias(&["run", "--config", "c.toml", "--out", "res"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    assert!(summary.contains("status,diverged"));
    let losses = std::fs::read_to_string(dir.path().join("res/diverged_loss.csv")).unwrap();
    assert!(losses.lines().count() >= 2);
}

#[test]
fn gen_data_gaussian_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    for (file, format) in [("g.csv", Format::Csv), ("g.bin", Format::RawF64)] {
        let o = pcbias(
            &["gen-data", "gaussian", "--q", "32", "--classes", "2", "--profile", "powerlaw:1.0", "--per-class", "20", "--out", file],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let d = load_dataset(&dir.path().join(file), format).unwrap();
        assert_eq!((d.dim(), d.len(), d.classes()), (32, 40, 2));
    }
}

#[test]
fn gen_data_frequency_with_paper_phases() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcbias(&["gen-data", "frequency", "--paper-phases", "-n", "10000", "--out", "f.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = load_dataset(&dir.path().join("f.csv"), Format::Csv).unwrap();
    assert_eq!((d.dim(), d.len()), (2, 10000));
    assert!(d.x().row(0).iter().all(|z| (-1.0..=1.0).contains(z)));
}

#[test]
fn gen_data_conflicts_and_missing_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcbias(&["gen-data", "frequency", "--paper-phases", "--kappa", "1,2", "--phases", "0,0", "--out", "f.csv"], dir.path());
    assert_eq!(code(&o), 2);
    let o = pcbias(&["gen-data", "gaussian", "--q", "4"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("output path"), "{}", stderr(&o));
    let o = pcbias(&["gen-data", "gaussian", "--q", "4", "--profile", "cubic", "--out", "g.csv"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_data_label_tools() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcbias(&["gen-data", "symmetric", "--q", "8", "--per-class", "30", "--out", "s.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = pcbias(&["gen-data", "shuffle-labels", "--input", "s.csv", "--seed", "2", "--out", "r.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = pcbias(&["gen-data", "separable", "--input", "s.csv", "--components", "2", "--out", "p.bin"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let orig = load_dataset(&dir.path().join("s.csv"), Format::Csv).unwrap();
    let shuffled = load_dataset(&dir.path().join("r.csv"), Format::Csv).unwrap();
    let mut a = orig.labels().to_vec();
    let mut b = shuffled.labels().to_vec();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    assert_eq!(shuffled.x(), orig.x());
    assert_eq!(load_dataset(&dir.path().join("p.bin"), Format::RawF64).unwrap().len(), 60);
}

#[test]
fn report_merges_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = "epoch,output,pc1,pc2\n0,0,1.0,2.0\n0,1,0.5,0.0\n4,0,1.5,2.5\n4,1,0.25,0.0\n";
    std::fs::write(dir.path().join("a.csv"), trace).unwrap();
    std::fs::write(dir.path().join("b.csv"), trace).unwrap();
    let o = pcbias(&["report", "a.csv", "b.csv", "--optimum", "a.csv", "--out", "rep"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let spread = std::fs::read_to_string(dir.path().join("rep/spread.csv")).unwrap();
    assert_eq!(spread, "epoch,pc1,pc2\n0,0.0,0.0\n4,0.0,0.0\n");
    let distance = std::fs::read_to_string(dir.path().join("rep/distance.csv")).unwrap();
    let expected = format!("epoch,pc1,pc2\n0,0.0,0.0\n4,{:?},0.5\n", 0.3125_f64.sqrt());
    assert_eq!(distance, expected);

    std::fs::write(dir.path().join("c.csv"), "epoch,output,pc1\n0,0,1.0\n0,1,0.5\n").unwrap();
    let o = pcbias(&["report", "a.csv", "c.csv", "--out", "rep2"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_runs_both_suites() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("r.toml"),
        "[experiment]\nkind = \"randmat-verify\"\n[data]\nq = 6\n[network]\ndepth = 3\n[analysis]\nwidths = [16, 32]\ntrials = 40\n",
    )
    .unwrap();
    let o = pcbias(&["verify", "--config", "r.toml", "--out", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("analytic vs finite-difference gradients"), "{stdout}");
    assert!(dir.path().join("v/randmat-verify/randmat.csv").exists());
    assert!(dir.path().join("v/gradient-check/first_order.csv").exists());
    assert_eq!(code(&o) == 0, !stdout.contains("FAIL"));
}
