use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linerecon::bundled;
use linerecon::io::{read_json, read_sampled_csv, to_json};
use linerecon_core::metrics::MetricsReport;
use linerecon_core::pipeline::{self, PipelineConfig};
use linerecon_core::refine::ReconstructionResult;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linerecon"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn bundled_configs_round_trip_bit_exactly() {
    for (text, cfg) in [
        (bundled::SEVEN_LINES_JSON, bundled::seven_lines()),
        (bundled::WAVELENGTH_JSON, bundled::wavelength_fixture()),
    ] {
        assert_eq!(to_json(&cfg), text);
        cfg.validate().unwrap();
    }
    assert_eq!(
        bundled::seven_lines(),
        pipeline::seven_line_config(bundled::SEED)
    );
    assert_eq!(
        bundled::wavelength_fixture(),
        pipeline::wavelength_fixture_config(bundled::SEED)
    );
}

#[test]
fn simulation_reproduces_the_golden_noise() {
    let golden = read_sampled_csv(&data("seven_lines_noisy.csv")).unwrap();
    let sim = pipeline::simulate(&bundled::seven_lines()).unwrap();
    assert_eq!(sim.noisy, golden);
    let diff: Vec<f64> = sim
        .noisy
        .values()
        .iter()
        .zip(sim.clean.values())
        .map(|(a, b)| a - b)
        .collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    let sd =
        (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diff.len() - 1) as f64).sqrt();
    assert!((0.035..=0.065).contains(&sd), "sample SD {sd}");
}

#[test]
fn stage_commands_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = data("seven_lines.json");
    let c = config.to_str().unwrap();
    ok(cli(&["pipeline", "--config", c, "--out", "full"], d));
    ok(cli(&["simulate", "--config", c, "--out", "noisy.csv"], d));
    ok(cli(
        &[
            "smooth",
            "--config",
            c,
            "--input",
            "noisy.csv",
            "--out",
            "working.csv",
        ],
        d,
    ));
    ok(cli(
        &[
            "deconvolve",
            "--config",
            c,
            "--input",
            "noisy.csv",
            "--working",
            "working.csv",
            "--out",
            "z.csv",
            "--diagnostics",
            "deconvolve.json",
        ],
        d,
    ));
    ok(cli(
        &[
            "refine",
            "--config",
            c,
            "--working",
            "working.csv",
            "--regularized",
            "z.csv",
            "--diagnostics",
            "deconvolve.json",
            "--out",
            "result.json",
            "--peaks",
            "peaks.csv",
        ],
        d,
    ));
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read("full/noisy.csv"), read("noisy.csv"));
    assert_eq!(read("full/fig_regularized.csv"), read("z.csv"));
    assert_eq!(read("full/peaks.csv"), read("peaks.csv"));
    assert_eq!(read("full/result.json"), read("result.json"));
}

#[test]
fn pipeline_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = data("seven_lines.json");
    let stdout = ok(cli(
        &["pipeline", "--config", c.to_str().unwrap(), "--out", "o"],
        dir.path(),
    ));
    for key in [
        "k ",
        "background F",
        "alpha",
        "epsilon",
        "sigma_nu",
        "eps_rel",
    ] {
        assert!(stdout.contains(key), "missing `{key}` in\n{stdout}");
    }
    let o = dir.path().join("o");
    for f in [
        "result.json",
        "metrics.json",
        "peaks.csv",
        "noisy.csv",
        "fig_forward.csv",
        "fig_discrepancy.csv",
        "fig_regularized.csv",
        "fig_reconstruction.csv",
    ] {
        assert!(o.join(f).is_file(), "{f} missing");
    }
    let r: ReconstructionResult = read_json(&o.join("result.json")).unwrap();
    let m: MetricsReport = read_json(&o.join("metrics.json")).unwrap();
    assert_eq!(
        m.matching.iter().filter(|p| p.recon.is_some()).count(),
        r.k()
    );
    let forward = linerecon::figures::read_series(&o.join("fig_forward.csv")).unwrap();
    use linerecon::figures::Series;
    assert_eq!(forward.iter().filter(|r| r.0 == Series::Truth).count(), 7);
    assert_eq!(forward.iter().filter(|r| r.0 == Series::Noisy).count(), 101);
    assert_eq!(
        forward.iter().filter(|r| r.0 == Series::Spline).count(),
        401
    );
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = data("seven_lines.json");
    ok(cli(
        &[
            "pipeline",
            "--config",
            c.to_str().unwrap(),
            "--out",
            "o",
            "--L",
            "3",
            "--threshold-mode",
            "background-frac",
        ],
        dir.path(),
    ));
    let r: ReconstructionResult = read_json(&dir.path().join("o/result.json")).unwrap();
    assert!(r.k() + r.rejected.len() <= 3);
    assert_eq!(r.threshold, 0.2 * r.background);
}

#[test]
fn deconvolve_with_fixed_alpha_writes_only_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = data("seven_lines.json");
    let n = data("seven_lines_noisy.csv");
    ok(cli(
        &[
            "deconvolve",
            "--config",
            c.to_str().unwrap(),
            "--input",
            n.to_str().unwrap(),
            "--alpha",
            "0.01",
            "--out",
            "z.csv",
        ],
        d,
    ));
    let files: Vec<_> = std::fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files, vec![std::ffi::OsString::from("z.csv")]);
    assert_eq!(read_sampled_csv(&d.join("z.csv")).unwrap().len(), 401);
}

#[test]
fn deconvolve_by_discrepancy_emits_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = data("seven_lines.json");
    let n = data("seven_lines_noisy.csv");
    let stdout = ok(cli(
        &[
            "deconvolve",
            "--config",
            c.to_str().unwrap(),
            "--input",
            n.to_str().unwrap(),
            "--discrepancy",
            "--out",
            "z.csv",
            "--diagnostics",
            "d.json",
            "--figures",
            "figs",
        ],
        d,
    ));
    assert!(stdout.contains("discrepancy"));
    let trace = linerecon::figures::read_trace(&d.join("figs/fig_discrepancy.csv")).unwrap();
    assert!(trace.windows(2).all(|w| w[1].1 >= w[0].1));
    let report: linerecon::cli::DeconvolveReport = read_json(&d.join("d.json")).unwrap();
    let r = report.discrepancy_residual.unwrap();
    assert!((r - report.delta).abs() <= 1e-3 * report.delta);
    assert_eq!(std::fs::read_dir(d.join("figs")).unwrap().count(), 2);
}

#[test]
fn evaluate_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = data("seven_lines.json");
    ok(cli(
        &["pipeline", "--config", c.to_str().unwrap(), "--out", "o"],
        d,
    ));
    let cfg: PipelineConfig = read_json(&c).unwrap();
    linerecon::io::write_json(cfg.truth.as_ref().unwrap(), &d.join("truth.json")).unwrap();
    let stdout = ok(cli(
        &[
            "evaluate",
            "--result",
            "o/result.json",
            "--truth",
            "truth.json",
            "--config",
            c.to_str().unwrap(),
            "--out",
            "m.json",
        ],
        d,
    ));
    assert!(stdout.contains("eps_rel"));
    assert_eq!(
        std::fs::read(d.join("m.json")).unwrap(),
        std::fs::read(d.join("o/metrics.json")).unwrap()
    );
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = data("seven_lines.json");
    let c = c.to_str().unwrap();
    let n = data("seven_lines_noisy.csv");
    let code = |args: &[&str]| cli(args, d).status.code().unwrap();
    assert_eq!(code(&["pipeline", "--bogus"]), 1);
    assert_eq!(
        code(&["evaluate", "--result", "r.json", "--truth", "t.json"]),
        1
    );
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(
        code(&["pipeline", "--config", c, "--input", "missing.csv"]),
        2
    );
    std::fs::write(d.join("bad.csv"), "x,value\n0,1\n1,1\n3,1\n").unwrap();
    assert_eq!(
        code(&["smooth", "--config", c, "--input", "bad.csv", "--out", "w.csv"]),
        2
    );
    let out = cli(
        &[
            "deconvolve",
            "--config",
            c,
            "--input",
            n.to_str().unwrap(),
            "--discrepancy",
            "--delta",
            "1e-9",
            "--out",
            "z.csv",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("deconvolve failed") && err.contains("hint:"),
        "{err}"
    );
}
