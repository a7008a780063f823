//! End-to-end reconstruction: smooth, regularize, pick peaks, refine.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{Family, HalfWidthLaw, InstrumentFunction, KernelMatrix};
use crate::peaks::{annotate, find_local_maxima, top_l, Peak};
use crate::refine::{
    apply_threshold, build_refined_system, merge_close_peaks, solve_lsm, Diagnostics,
    ReconstructedLine, ReconstructionResult, ThresholdMode, ThresholdRule,
};
use crate::regularize::{
    solve_tikhonov, AlphaSearch, DiscrepancyCurve, ErrorBudget, RegularizedSolution,
};
use crate::smoothing::{estimate_noise_sd, fit_smoothing_spline, resample, SmoothingSpline};
use crate::spectrum::{
    add_noise, forward_discrete, Grid, LineSpectrum, NoiseModel, SampledSpectrum,
};

/// Everything needed to simulate and reconstruct one spectrum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub instrument: InstrumentFunction,
    /// Measurement band `[c, d]`.
    pub band: [f64; 2],
    /// Solution interval `[a, b]`.
    pub solution: [f64; 2],
    /// Number of measured samples.
    pub m: usize,
    /// Number of solution nodes.
    pub n: usize,
    /// Spline resampling length over the band; `None` uses the raw samples.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub resample: Option<usize>,
    /// Residual target of the resampling spline in units of `sqrt(m) sd`;
    /// zero interpolates.
    pub spline_residual: f64,
    pub noise: NoiseModel,
    /// Per-sample noise SD of the input; estimated from the data when absent.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub noise_sd: Option<f64>,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub truth: Option<LineSpectrum>,
    /// Discrepancy level; estimated from the data when absent.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub delta: Option<f64>,
    /// Fixed regularization parameter; the discrepancy principle is skipped.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub alpha: Option<f64>,
    pub alpha_search: AlphaSearch,
    /// Number of candidate peaks `L`.
    pub lines: usize,
    pub threshold: ThresholdRule,
    pub p: f64,
    pub xi: f64,
    /// Metrics matching window; five solution steps when absent.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub match_window: Option<f64>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.band_grid()?;
        self.solution_grid()?;
        if let Some(r) = self.resample {
            Grid::new(self.band[0], self.band[1], r)?;
        }
        if !(self.spline_residual >= 0.0) || !self.spline_residual.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spline residual factor must be finite and nonnegative, got {}",
                self.spline_residual
            )));
        }
        if self.lines == 0 {
            return Err(Error::InvalidArgument("L must be at least 1".into()));
        }
        ErrorBudget::new(self.delta.unwrap_or(0.0), self.xi, self.p)?;
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "alpha must be positive, got {alpha}"
                )));
            }
        }
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0) || !sd.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "noise SD must be finite and nonnegative, got {sd}"
                )));
            }
        }
        if let Some(w) = self.match_window {
            if !(w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "matching window must be positive, got {w}"
                )));
            }
        }
        NoiseModel::new(self.noise.sd, self.noise.seed)?;
        Ok(())
    }

    pub fn band_grid(&self) -> Result<Grid> {
        Grid::new(self.band[0], self.band[1], self.m)
    }

    pub fn solution_grid(&self) -> Result<Grid> {
        Grid::new(self.solution[0], self.solution[1], self.n)
    }

    /// Grid of the data handed to the regularizer.
    pub fn working_grid(&self) -> Result<Grid> {
        match self.resample {
            Some(r) => Grid::new(self.band[0], self.band[1], r),
            None => self.band_grid(),
        }
    }

    pub fn match_window(&self) -> Result<f64> {
        match self.match_window {
            Some(w) => Ok(w),
            None => Ok(5.0 * self.solution_grid()?.step()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub clean: SampledSpectrum,
    pub noisy: SampledSpectrum,
}

/// Forward model of `cfg.truth` on the measurement band, plus seeded noise.
pub fn simulate(cfg: &PipelineConfig) -> Result<Simulated> {
    let truth = cfg
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("simulation needs a truth spectrum".into()))?;
    let clean = forward_discrete(truth, &cfg.instrument, &cfg.band_grid()?)?;
    let noisy = add_noise(&clean, &cfg.noise);
    Ok(Simulated { clean, noisy })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    /// Present only when resampling was requested.
    pub spline: Option<SmoothingSpline>,
    pub working: SampledSpectrum,
    pub noise_sd: f64,
    /// Discrepancy level for the working data.
    pub delta: f64,
}

/// Per-sample noise SD and discrepancy level `delta` of the measured data,
/// from the configuration when given and estimated otherwise. The default
/// `delta` is `sqrt(m) sd`.
pub fn noise_level(cfg: &PipelineConfig, noisy: &SampledSpectrum) -> Result<(f64, f64)> {
    let sd = match cfg.noise_sd {
        Some(sd) => sd,
        None => estimate_noise_sd(noisy)?,
    };
    let delta = cfg
        .delta
        .unwrap_or_else(|| libm::sqrt(noisy.len() as f64) * sd);
    Ok((sd, delta))
}

/// Estimates the noise, and when `cfg.resample` is set fits a smoothing
/// spline with residual `spline_residual * sqrt(m) sd` and resamples it over
/// the band.
pub fn smooth(cfg: &PipelineConfig, noisy: &SampledSpectrum) -> Result<Smoothed> {
    if noisy.grid() != &cfg.band_grid()? {
        return Err(Error::InvalidGrid(format!(
            "input covers [{}, {}] with {} samples, configuration expects [{}, {}] with {}",
            noisy.grid().start(),
            noisy.grid().end(),
            noisy.len(),
            cfg.band[0],
            cfg.band[1],
            cfg.m
        )));
    }
    let (noise_sd, delta) = noise_level(cfg, noisy)?;
    let (spline, working) = match cfg.resample {
        Some(_) => {
            let target = cfg.spline_residual * libm::sqrt(noisy.len() as f64) * noise_sd;
            let spline = fit_smoothing_spline(noisy, target)?;
            let working = resample(&spline, &cfg.working_grid()?)?;
            (Some(spline), working)
        }
        None => (None, noisy.clone()),
    };
    Ok(Smoothed {
        spline,
        working,
        noise_sd,
        delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deconvolved {
    pub solution: RegularizedSolution,
    /// Discrepancy scan; empty when `alpha` was given.
    pub trace: Vec<(f64, f64)>,
    /// Residual on the measured samples at the discrepancy root; `None`
    /// when `alpha` was given.
    pub discrepancy: Option<f64>,
    pub delta: f64,
}

impl Deconvolved {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            alpha: self.solution.alpha,
            residual: self.solution.residual,
            epsilon_alpha: self.solution.epsilon_alpha,
        }
    }
}

/// Regularized solution of the working data on the solution grid.
///
/// Unless `cfg.alpha` is set, `alpha` is the discrepancy root on the
/// measured samples and is then reused for the working data.
pub fn deconvolve(
    cfg: &PipelineConfig,
    measured: &SampledSpectrum,
    working: &SampledSpectrum,
    delta: f64,
) -> Result<Deconvolved> {
    let cols = cfg.solution_grid()?;
    let (alpha, trace, discrepancy) = match cfg.alpha {
        Some(alpha) => (alpha, Vec::new(), None),
        None => {
            let a = KernelMatrix::build(&cfg.instrument, measured.grid(), &cols)?;
            let choice = DiscrepancyCurve::new(&a, measured)?.solve(delta, &cfg.alpha_search)?;
            (choice.alpha, choice.trace, Some(choice.residual))
        }
    };
    let a = KernelMatrix::build(&cfg.instrument, working.grid(), &cols)?;
    // The error bound needs delta relative to ||working||; white noise grows
    // with the square root of the sample count.
    let scale = libm::sqrt(working.len() as f64 / measured.len() as f64);
    let budget = ErrorBudget::new(delta * scale, cfg.xi, cfg.p)?;
    let solution = solve_tikhonov(&a, working, alpha)?.with_error_estimate(&budget);
    Ok(Deconvolved {
        solution,
        trace,
        discrepancy,
        delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    /// Candidates after merging, in ascending frequency.
    pub peaks: Vec<Peak>,
    pub result: ReconstructionResult,
}

/// Top-`L` peaks of `z_alpha`, least-squares intensities on the working
/// data, and thresholding. The false-alarm rule scales with the per-sample
/// `noise_sd`.
pub fn refine(
    cfg: &PipelineConfig,
    working: &SampledSpectrum,
    z_alpha: &SampledSpectrum,
    diagnostics: Diagnostics,
    noise_sd: f64,
) -> Result<Refined> {
    let mut peaks = top_l(&find_local_maxima(z_alpha), cfg.lines);
    annotate(&mut peaks, z_alpha, diagnostics.epsilon_alpha)?;
    let peaks = merge_close_peaks(&peaks, z_alpha.grid().step());
    if peaks.is_empty() {
        let threshold = cfg.threshold.resolve(0.0, noise_sd)?;
        return Ok(Refined {
            peaks,
            result: apply_threshold(&[], 0.0, threshold, diagnostics),
        });
    }
    let freqs: Vec<f64> = peaks.iter().map(|p| p.frequency).collect();
    let sys = build_refined_system(&cfg.instrument, &freqs, working)?;
    let lsm = solve_lsm(&sys)?;
    let candidates: Vec<ReconstructedLine> = peaks
        .iter()
        .zip(&lsm.intensities)
        .map(|(p, &intensity)| ReconstructedLine {
            frequency: p.frequency,
            intensity,
            freq_error: p.freq_error,
        })
        .collect();
    let threshold = cfg.threshold.resolve(lsm.background, noise_sd)?;
    Ok(Refined {
        peaks,
        result: apply_threshold(&candidates, lsm.background, threshold, diagnostics),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub smoothed: Smoothed,
    pub deconvolved: Deconvolved,
    pub refined: Refined,
}

impl PipelineOutput {
    pub fn result(&self) -> &ReconstructionResult {
        &self.refined.result
    }
}

/// All stages on a measured spectrum.
pub fn run(cfg: &PipelineConfig, noisy: &SampledSpectrum) -> Result<PipelineOutput> {
    cfg.validate()?;
    let smoothed = smooth(cfg, noisy)?;
    let deconvolved = deconvolve(cfg, noisy, &smoothed.working, smoothed.delta)?;
    let refined = refine(
        cfg,
        &smoothed.working,
        &deconvolved.solution.z_alpha,
        deconvolved.diagnostics(),
        smoothed.noise_sd,
    )?;
    Ok(PipelineOutput {
        smoothed,
        deconvolved,
        refined,
    })
}

/// The seven-line synthetic experiment on `[2, 4]`: measured at 101 points,
/// upsampled through the interpolating spline to 401, `alpha = 10^-1.4`,
/// and false-alarm thresholding at the known noise SD.
pub fn seven_line_config(seed: u64) -> PipelineConfig {
    let truth = LineSpectrum::from_pairs(
        &[
            (2.28, 4.4),
            (2.36, 4.6),
            (2.95, 1.1),
            (3.02, 3.2),
            (3.56, 3.2),
            (3.64, 2.8),
            (3.69, 3.6),
        ],
        0.2,
    )
    .expect("valid truth spectrum");
    PipelineConfig {
        instrument: InstrumentFunction::model_gaussian(0.05, 0.075)
            .expect("valid instrument function"),
        band: [2.0, 4.0],
        solution: [2.0, 4.0],
        m: 101,
        n: 401,
        resample: Some(401),
        spline_residual: 0.0,
        noise: NoiseModel { sd: 0.05, seed },
        noise_sd: Some(0.05),
        truth: Some(truth),
        delta: None,
        alpha: Some(libm::pow(10.0, -1.4)),
        alpha_search: AlphaSearch::default(),
        lines: 12,
        threshold: ThresholdRule {
            mode: ThresholdMode::FalseAlarm,
            ..ThresholdRule::default()
        },
        p: 1.0,
        xi: 0.0,
        match_window: None,
    }
}

/// Twelve Lorentz lines on `[4750, 4810]` with a half-width proportional to
/// wavelength, measured at 321 points over `[4748, 4812]` and solved on 301
/// nodes with `alpha = 10^-2`.
pub fn wavelength_fixture_config(seed: u64) -> PipelineConfig {
    let truth = LineSpectrum::from_pairs(
        &[
            (4753.0, 1.6),
            (4757.4, 3.0),
            (4761.2, 0.9),
            (4766.0, 2.4),
            (4770.6, 1.2),
            (4775.0, 4.0),
            (4779.4, 2.0),
            (4784.6, 0.7),
            (4789.0, 3.4),
            (4794.2, 1.4),
            (4799.0, 2.6),
            (4804.4, 1.0),
        ],
        0.1,
    )
    .expect("valid truth spectrum");
    let law = HalfWidthLaw::wavelength_proportional(0.00025).expect("valid half-width law");
    PipelineConfig {
        instrument: InstrumentFunction::new(Family::Lorentz, law)
            .expect("valid instrument function"),
        band: [4748.0, 4812.0],
        solution: [4750.0, 4810.0],
        m: 321,
        n: 301,
        resample: None,
        spline_residual: 0.0,
        noise: NoiseModel { sd: 0.01, seed },
        noise_sd: Some(0.01),
        truth: Some(truth),
        delta: None,
        alpha: Some(1e-2),
        alpha_search: AlphaSearch::default(),
        lines: 15,
        threshold: ThresholdRule {
            mode: ThresholdMode::FalseAlarm,
            p_fa: 0.001,
            ..ThresholdRule::default()
        },
        p: 1.0,
        xi: 0.0,
        match_window: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_line_config_is_valid() {
        let cfg = seven_line_config(1);
        cfg.validate().unwrap();
        assert_eq!(cfg.working_grid().unwrap().len(), 401);
        assert!((cfg.match_window().unwrap() - 0.025).abs() < 1e-15);
        let w = wavelength_fixture_config(1);
        w.validate().unwrap();
        assert!((w.solution_grid().unwrap().step() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn smooth_rejects_mismatched_grid() {
        let cfg = seven_line_config(1);
        let other = SampledSpectrum::from_fn(Grid::new(2.0, 4.0, 51).unwrap(), |_| 0.0).unwrap();
        assert!(matches!(smooth(&cfg, &other), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn noiseless_lines_are_recovered() {
        let mut cfg = seven_line_config(1);
        cfg.noise.sd = 0.0;
        cfg.noise_sd = Some(0.0);
        cfg.m = 401;
        cfg.resample = None;
        cfg.alpha = Some(1e-6);
        let sim = simulate(&cfg).unwrap();
        let out = run(&cfg, &sim.noisy).unwrap();
        let r = out.result();
        assert_eq!(r.k(), 7);
        for (line, truth) in r.lines.iter().zip(cfg.truth.as_ref().unwrap().lines()) {
            assert!((line.frequency - truth.frequency).abs() <= 2.0 * 0.005 + 1e-12);
            assert!((line.intensity - truth.intensity).abs() < 0.3);
        }
    }
}
