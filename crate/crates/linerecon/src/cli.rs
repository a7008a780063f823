//! Command-line front end: each stage on its own, or all of them at once.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linerecon_core::metrics::{evaluate, MetricsReport};
use linerecon_core::peaks::Peak;
use linerecon_core::pipeline::{self, PipelineConfig};
use linerecon_core::refine::{Diagnostics, ReconstructionResult, ThresholdMode};
use linerecon_core::spectrum::{LineSpectrum, SampledSpectrum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::figures::{emit_figure_data, FigureData};
use crate::io::{read_json, read_sampled_csv, write_columns, write_json, write_sampled_csv};

#[derive(Debug, Parser)]
#[command(
    name = "linerecon",
    version,
    about = "Reconstruct line spectra from smoothed measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward-model the configured truth spectrum and add seeded noise.
    Simulate(SimulateArgs),
    /// Estimate the noise and resample the measurement through a spline.
    Smooth(SmoothArgs),
    /// Regularized solution on the solution grid.
    Deconvolve(DeconvolveArgs),
    /// Peak selection, least-squares intensities and thresholding.
    Refine(RefineArgs),
    /// All stages end to end.
    Pipeline(PipelineArgs),
    /// Compare a reconstruction with a known line spectrum.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    BackgroundFrac,
    FalseAlarm,
}

/// Flags that override fields of the configuration file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Noise seed for simulation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise SD for simulation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Per-sample noise SD of the measurement (estimated when absent).
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Discrepancy level (default sqrt(m) times the noise SD).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Fixed regularization parameter.
    #[arg(long, conflicts_with = "discrepancy")]
    pub alpha: Option<f64>,
    /// Choose alpha by the discrepancy principle even if the config fixes it.
    #[arg(long)]
    pub discrepancy: bool,
    /// Number of candidate peaks.
    #[arg(long = "L")]
    pub lines: Option<usize>,
    /// Number of solution nodes.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Spline resampling length.
    #[arg(long, conflicts_with = "no_resample")]
    pub resample: Option<usize>,
    /// Use the raw samples without spline resampling.
    #[arg(long)]
    pub no_resample: bool,
    /// Spline residual target in units of sqrt(m) times the noise SD.
    #[arg(long)]
    pub spline_residual: Option<f64>,
    #[arg(long, value_enum)]
    pub threshold_mode: Option<ModeArg>,
    /// Fraction of the background used as threshold.
    #[arg(long)]
    pub threshold_frac: Option<f64>,
    /// False-alarm probability.
    #[arg(long)]
    pub p_fa: Option<f64>,
    /// Matching window for metrics.
    #[arg(long)]
    pub match_window: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.seed {
            cfg.noise.seed = v;
        }
        if let Some(v) = self.noise {
            cfg.noise.sd = v;
        }
        if self.noise_sd.is_some() {
            cfg.noise_sd = self.noise_sd;
        }
        if self.delta.is_some() {
            cfg.delta = self.delta;
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        if self.discrepancy {
            cfg.alpha = None;
        }
        if let Some(v) = self.lines {
            cfg.lines = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if self.resample.is_some() {
            cfg.resample = self.resample;
        }
        if self.no_resample {
            cfg.resample = None;
        }
        if let Some(v) = self.spline_residual {
            cfg.spline_residual = v;
        }
        if let Some(m) = self.threshold_mode {
            cfg.threshold.mode = match m {
                ModeArg::BackgroundFrac => ThresholdMode::BackgroundFraction,
                ModeArg::FalseAlarm => ThresholdMode::FalseAlarm,
            };
        }
        if let Some(v) = self.threshold_frac {
            cfg.threshold.fraction = v;
        }
        if let Some(v) = self.p_fa {
            cfg.threshold.p_fa = v;
        }
        if self.match_window.is_some() {
            cfg.match_window = self.match_window;
        }
    }
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Pipeline configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Noisy spectrum CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Noise-free spectrum CSV.
    #[arg(long)]
    pub clean: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Measured spectrum CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Working spectrum CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeconvolveArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Measured spectrum CSV; alpha is chosen on it and the noise level
    /// estimated from it.
    #[arg(long)]
    pub input: PathBuf,
    /// Working spectrum CSV from `smooth`; defaults to the input.
    #[arg(long)]
    pub working: Option<PathBuf>,
    /// Regularized solution CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics JSON, needed by `refine`.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Directory for the regularized and discrepancy figure tables.
    #[arg(long)]
    pub figures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Working spectrum CSV.
    #[arg(long)]
    pub working: PathBuf,
    /// Regularized solution CSV.
    #[arg(long)]
    pub regularized: PathBuf,
    /// Diagnostics JSON from `deconvolve`.
    #[arg(long)]
    pub diagnostics: PathBuf,
    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Candidate peaks CSV.
    #[arg(long)]
    pub peaks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Measured spectrum CSV; simulated from the truth when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Truth spectrum JSON; overrides the configured one.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "linerecon-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Result JSON.
    #[arg(long)]
    pub result: PathBuf,
    /// Truth spectrum JSON.
    #[arg(long)]
    pub truth: PathBuf,
    /// Matching window.
    #[arg(long, required_unless_present = "config")]
    pub window: Option<f64>,
    /// Configuration supplying the default window.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metrics JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything `refine` needs from `deconvolve` besides the arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvolveReport {
    pub alpha: f64,
    pub residual: f64,
    pub epsilon_alpha: f64,
    pub delta: f64,
    pub noise_sd: f64,
    /// Residual on the measured samples at the discrepancy root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancy_residual: Option<f64>,
}

impl DeconvolveReport {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            alpha: self.alpha,
            residual: self.residual,
            epsilon_alpha: self.epsilon_alpha,
        }
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)?;
        if let Some(h) = self.error.hint() {
            write!(f, "\n  hint: {h}")?;
        }
        Ok(())
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<Error>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure {
            stage,
            error: e.into(),
        })
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = read_json(&args.config)?;
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed command, writing the human-readable report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Outcome {
    match cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Smooth(a) => smooth(a, out),
        Command::Deconvolve(a) => deconvolve(a, out),
        Command::Refine(a) => refine(a, out),
        Command::Pipeline(a) => run_pipeline(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Outcome {
    out.write_fmt(text).map_err(|source| Failure {
        stage: "report",
        error: Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        },
    })
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Outcome {
    let cfg = load_config(&a.cfg).stage("config")?;
    let sim = pipeline::simulate(&cfg).stage("simulate")?;
    write_sampled_csv(&sim.noisy, &a.out).stage("simulate")?;
    if let Some(p) = &a.clean {
        write_sampled_csv(&sim.clean, p).stage("simulate")?;
    }
    say(
        out,
        format_args!(
            "simulated {} samples on [{}, {}], noise SD {} seed {}\n",
            sim.noisy.len(),
            cfg.band[0],
            cfg.band[1],
            cfg.noise.sd,
            cfg.noise.seed
        ),
    )
}

fn smooth(a: SmoothArgs, out: &mut dyn Write) -> Outcome {
    let cfg = load_config(&a.cfg).stage("config")?;
    let noisy = read_sampled_csv(&a.input).stage("input")?;
    let s = pipeline::smooth(&cfg, &noisy).stage("smooth")?;
    write_sampled_csv(&s.working, &a.out).stage("smooth")?;
    say(
        out,
        format_args!(
            "noise SD      {:.6}\ndelta         {:.6}\n",
            s.noise_sd, s.delta
        ),
    )?;
    match &s.spline {
        Some(sp) => say(
            out,
            format_args!(
                "spline        lambda {:.4e}, residual {:.6}, {} -> {} samples\n",
                sp.lambda(),
                sp.smoothing_residual(),
                noisy.len(),
                s.working.len()
            ),
        ),
        None => say(out, format_args!("no resampling; working data = input\n")),
    }
}

fn deconvolve(a: DeconvolveArgs, out: &mut dyn Write) -> Outcome {
    let cfg = load_config(&a.cfg).stage("config")?;
    let measured = read_sampled_csv(&a.input).stage("input")?;
    let working = match &a.working {
        Some(p) => read_sampled_csv(p).stage("input")?,
        None => measured.clone(),
    };
    let (noise_sd, delta) = pipeline::noise_level(&cfg, &measured).stage("deconvolve")?;
    let d = pipeline::deconvolve(&cfg, &measured, &working, delta).stage("deconvolve")?;
    write_sampled_csv(&d.solution.z_alpha, &a.out).stage("deconvolve")?;
    let report = DeconvolveReport {
        alpha: d.solution.alpha,
        residual: d.solution.residual,
        epsilon_alpha: d.solution.epsilon_alpha,
        delta,
        noise_sd,
        discrepancy_residual: d.discrepancy,
    };
    if let Some(p) = &a.diagnostics {
        write_json(&report, p).stage("deconvolve")?;
    }
    if let Some(dir) = &a.figures {
        let data = FigureData {
            trace: Some(&d.trace),
            regularized: Some(&d.solution.z_alpha),
            ..FigureData::default()
        };
        emit_figure_data(&data, dir).stage("figures")?;
    }
    print_alpha(out, &report)
}

fn print_alpha(out: &mut dyn Write, r: &DeconvolveReport) -> Outcome {
    let how = if r.discrepancy_residual.is_some() {
        "discrepancy"
    } else {
        "fixed"
    };
    say(
        out,
        format_args!(
            "alpha         {:.4e} ({how}, log10 {:.3})\nresidual      {:.6}\ndelta         {:.6}\nepsilon       {:.6}\n",
            r.alpha,
            r.alpha.log10(),
            r.residual,
            r.delta,
            r.epsilon_alpha
        ),
    )
}

fn write_peaks(peaks: &[Peak], path: &Path) -> Result<()> {
    let rows: Vec<[f64; 3]> = peaks
        .iter()
        .map(|p| [p.frequency, p.height, p.freq_error])
        .collect();
    write_columns(path, ["frequency", "height", "freq_error"], &rows)
}

fn refine(a: RefineArgs, out: &mut dyn Write) -> Outcome {
    let cfg = load_config(&a.cfg).stage("config")?;
    let working = read_sampled_csv(&a.working).stage("input")?;
    let z = read_sampled_csv(&a.regularized).stage("input")?;
    let report: DeconvolveReport = read_json(&a.diagnostics).stage("input")?;
    let r = pipeline::refine(&cfg, &working, &z, report.diagnostics(), report.noise_sd)
        .stage("refine")?;
    write_json(&r.result, &a.out).stage("refine")?;
    if let Some(p) = &a.peaks {
        write_peaks(&r.peaks, p).stage("refine")?;
    }
    print_result(out, &r.result, None)
}

fn print_result(
    out: &mut dyn Write,
    r: &ReconstructionResult,
    metrics: Option<&MetricsReport>,
) -> Outcome {
    let mut s = format!(
        "k             {}\nbackground F  {:.6}{}\nthreshold Z   {:.6}\nalpha         {:.4e}\nepsilon       {:.6}\n\n",
        r.k(),
        r.background,
        if r.background_nonpositive { "  (not positive)" } else { "" },
        r.threshold,
        r.diagnostics.alpha,
        r.diagnostics.epsilon_alpha
    );
    s.push_str("   #   frequency    intensity    sigma_nu\n");
    for (i, l) in r.lines.iter().enumerate() {
        s.push_str(&format!(
            "{:>4}  {:>10.5}  {:>11.5}  {:>10.5}\n",
            i + 1,
            l.frequency,
            l.intensity,
            l.freq_error
        ));
    }
    if !r.rejected.is_empty() {
        s.push_str(&format!("\nrejected {} candidate(s):", r.rejected.len()));
        for l in &r.rejected {
            s.push_str(&format!(" {:.5} ({:.4})", l.frequency, l.intensity));
        }
        s.push('\n');
    }
    if let Some(m) = metrics {
        s.push('\n');
        s.push_str(&metrics_text(m));
    }
    say(out, format_args!("{s}"))
}

fn metrics_text(m: &MetricsReport) -> String {
    let rel = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    format!(
        "eps_rel {}   xi_rel {}   zeta_rel {}   (eps {:.4}, xi {:.4e})\n",
        rel(m.eps_rel),
        rel(m.xi_rel),
        rel(m.zeta_rel),
        m.eps,
        m.xi
    )
}

/// Artifacts of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub noisy: SampledSpectrum,
    pub clean: Option<SampledSpectrum>,
    pub truth: Option<LineSpectrum>,
    pub output: pipeline::PipelineOutput,
    pub metrics: Option<MetricsReport>,
}

/// The pipeline on a configuration, reading the input or simulating it.
pub fn execute(
    cfg: &PipelineConfig,
    input: Option<&Path>,
    truth: Option<LineSpectrum>,
) -> std::result::Result<PipelineRun, Failure> {
    cfg.validate().stage("config")?;
    let truth = truth.or_else(|| cfg.truth.clone());
    let (noisy, clean) = match input {
        Some(p) => (read_sampled_csv(p).stage("input")?, None),
        None => {
            if truth.is_none() {
                return Err(Failure {
                    stage: "input",
                    error: Error::Usage(
                        "give --input, or a truth spectrum to simulate from".into(),
                    ),
                });
            }
            let mut c = cfg.clone();
            c.truth = truth.clone();
            let sim = pipeline::simulate(&c).stage("simulate")?;
            (sim.noisy, Some(sim.clean))
        }
    };
    let smoothed = pipeline::smooth(cfg, &noisy).stage("smooth")?;
    let deconvolved =
        pipeline::deconvolve(cfg, &noisy, &smoothed.working, smoothed.delta).stage("deconvolve")?;
    let refined = pipeline::refine(
        cfg,
        &smoothed.working,
        &deconvolved.solution.z_alpha,
        deconvolved.diagnostics(),
        smoothed.noise_sd,
    )
    .stage("refine")?;
    let output = pipeline::PipelineOutput {
        smoothed,
        deconvolved,
        refined,
    };
    let metrics = match &truth {
        Some(t) => {
            let recon = output.result().to_line_spectrum().stage("evaluate")?;
            let window = cfg.match_window().stage("evaluate")?;
            Some(evaluate(&recon, t, window).stage("evaluate")?)
        }
        None => None,
    };
    Ok(PipelineRun {
        noisy,
        clean,
        truth,
        output,
        metrics,
    })
}

fn run_pipeline(a: PipelineArgs, out: &mut dyn Write) -> Outcome {
    let started = Instant::now();
    let cfg = load_config(&a.cfg).stage("config")?;
    let truth: Option<LineSpectrum> = match &a.truth {
        Some(p) => Some(read_json(p).stage("input")?),
        None => None,
    };
    let run = execute(&cfg, a.input.as_deref(), truth)?;
    let elapsed = started.elapsed();
    let dir = &a.out;
    std::fs::create_dir_all(dir)
        .map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })
        .stage("output")?;
    let o = &run.output;
    write_json(o.result(), &dir.join("result.json")).stage("output")?;
    write_peaks(&o.refined.peaks, &dir.join("peaks.csv")).stage("output")?;
    if a.input.is_none() {
        write_sampled_csv(&run.noisy, &dir.join("noisy.csv")).stage("output")?;
    }
    if let Some(m) = &run.metrics {
        write_json(m, &dir.join("metrics.json")).stage("output")?;
    }
    let data = FigureData {
        truth: run.truth.as_ref(),
        clean: run.clean.as_ref(),
        noisy: Some(&run.noisy),
        spline: o.smoothed.spline.as_ref().map(|_| &o.smoothed.working),
        trace: Some(&o.deconvolved.trace),
        regularized: Some(&o.deconvolved.solution.z_alpha),
        result: Some(o.result()),
    };
    emit_figure_data(&data, dir).stage("figures")?;
    print_result(out, o.result(), run.metrics.as_ref())?;
    let how = if o.deconvolved.discrepancy.is_some() {
        "discrepancy"
    } else {
        "fixed"
    };
    say(
        out,
        format_args!(
            "\nalpha chosen by {how}; noise SD {:.5}, delta {:.5}; {:.3} s\n",
            o.smoothed.noise_sd,
            o.smoothed.delta,
            elapsed.as_secs_f64()
        ),
    )
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Outcome {
    let result: ReconstructionResult = read_json(&a.result).stage("input")?;
    let truth: LineSpectrum = read_json(&a.truth).stage("input")?;
    let window = match (a.window, &a.config) {
        (Some(w), _) => w,
        (None, Some(p)) => {
            let cfg: PipelineConfig = read_json(p).stage("config")?;
            cfg.match_window().stage("config")?
        }
        (None, None) => unreachable!("clap requires --window or --config"),
    };
    let recon = result.to_line_spectrum().stage("evaluate")?;
    let m = evaluate(&recon, &truth, window).stage("evaluate")?;
    if let Some(p) = &a.out {
        write_json(&m, p).stage("evaluate")?;
    }
    say(out, format_args!("{}", metrics_text(&m)))
}
