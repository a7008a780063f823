//! Least-squares refinement of line intensities at fixed frequencies, and
//! false-line rejection.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::InstrumentFunction;
use crate::peaks::Peak;
use crate::spectrum::{LineSpectrum, SampledSpectrum, SpectralLine};

/// Columns whose QR pivot falls below this fraction of the largest pivot
/// are treated as linearly dependent.
const RANK_RTOL: f64 = 1e-10;

/// Overdetermined system `sum_j K(nu_i, f_j) z_j + F = u(nu_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSystem {
    /// `m x (L + 1)`; the last column is all ones (background).
    pub design: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub freqs: Vec<f64>,
}

impl RefinedSystem {
    pub fn lines(&self) -> usize {
        self.freqs.len()
    }

    /// `||design x - rhs||_2`.
    pub fn residual(&self, intensities: &[f64], background: f64) -> f64 {
        let mut x = DVector::zeros(self.design.ncols());
        x.rows_mut(0, intensities.len())
            .copy_from_slice(intensities);
        x[intensities.len()] = background;
        (&self.design * x - &self.rhs).norm()
    }
}

/// Builds the refined system on the sample grid of `u`.
pub fn build_refined_system(
    ifn: &InstrumentFunction,
    freqs: &[f64],
    u: &SampledSpectrum,
) -> Result<RefinedSystem> {
    if freqs.is_empty() {
        return Err(Error::InvalidArgument(
            "no line frequencies to refine".into(),
        ));
    }
    let grid = u.grid();
    if let Some(&f) = freqs.iter().find(|&&f| !grid.contains(f)) {
        return Err(Error::domain(
            "refined frequency",
            format!(
                "{f} lies outside the band [{}, {}]",
                grid.start(),
                grid.end()
            ),
        ));
    }
    let m = grid.len();
    let cols = freqs.len() + 1;
    if m <= cols {
        return Err(Error::Underdetermined {
            rows: m,
            unknowns: cols,
        });
    }
    let mut design = DMatrix::from_element(m, cols, 1.0);
    for (i, nu) in grid.nodes().enumerate() {
        for (j, &f) in freqs.iter().enumerate() {
            design[(i, j)] = ifn.eval(nu, f)?;
        }
    }
    Ok(RefinedSystem {
        design,
        rhs: DVector::from_column_slice(u.values()),
        freqs: freqs.to_vec(),
    })
}

/// Least-squares intensities and background.
#[derive(Debug, Clone, PartialEq)]
pub struct LsmSolution {
    pub intensities: Vec<f64>,
    pub background: f64,
}

/// Minimizes `||design x - rhs||_2` by Householder QR. Negative intensities
/// are returned unchanged.
pub fn solve_lsm(sys: &RefinedSystem) -> Result<LsmSolution> {
    let n = sys.design.ncols();
    let qr = sys.design.clone().qr();
    let r = qr.r();
    let max_pivot = (0..n).map(|k| libm::fabs(r[(k, k)])).fold(0.0, f64::max);
    if let Some(k) = (0..n).find(|&k| !(libm::fabs(r[(k, k)]) > RANK_RTOL * max_pivot)) {
        return Err(collinearity_error(sys, k));
    }
    let mut qtb = sys.rhs.clone();
    qr.q_tr_mul(&mut qtb);
    let x = r
        .solve_upper_triangular(&qtb.rows(0, n).into_owned())
        .ok_or(Error::Factorization(
            "triangular solve of the refined system",
        ))?;
    Ok(LsmSolution {
        intensities: x.as_slice()[..n - 1].to_vec(),
        background: x[n - 1],
    })
}

/// Names the earlier column most aligned with dependent column `k`.
fn collinearity_error(sys: &RefinedSystem, k: usize) -> Error {
    let col = sys.design.column(k);
    let partner = (0..k)
        .map(|j| {
            let other = sys.design.column(j);
            let cos =
                libm::fabs(col.dot(&other)) / (col.norm() * other.norm()).max(f64::MIN_POSITIVE);
            (j, cos)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let l = sys.freqs.len();
    if k == l {
        Error::BackgroundCollinear {
            frequency: sys.freqs[partner],
        }
    } else {
        Error::RankDeficient {
            first: sys.freqs[partner],
            second: sys.freqs[k],
        }
    }
}

/// Keeps the taller of any two candidates closer than `min_spacing`.
pub fn merge_close_peaks(peaks: &[Peak], min_spacing: f64) -> Vec<Peak> {
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let mut kept: Vec<Peak> = Vec::with_capacity(sorted.len());
    for p in sorted {
        match kept.last_mut() {
            Some(last) if p.frequency - last.frequency < min_spacing => {
                if p.height > last.height {
                    *last = p;
                }
            }
            _ => kept.push(p),
        }
    }
    kept
}

/// `Z = delta sqrt(-2 ln p_fa)`.
pub fn false_alarm_threshold(delta: f64, p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::domain(
            "false-alarm probability",
            format!("must lie in (0, 1), got {p_fa}"),
        ));
    }
    Ok(delta * libm::sqrt(-2.0 * libm::log(p_fa)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ThresholdMode {
    /// `Z = fraction * F~` when the fitted background is positive,
    /// otherwise the false-alarm rule.
    BackgroundFraction,
    FalseAlarm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdRule {
    pub mode: ThresholdMode,
    pub fraction: f64,
    pub p_fa: f64,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule {
            mode: ThresholdMode::BackgroundFraction,
            fraction: 0.2,
            p_fa: 0.01,
        }
    }
}

impl ThresholdRule {
    pub fn resolve(&self, background: f64, delta: f64) -> Result<f64> {
        match self.mode {
            ThresholdMode::BackgroundFraction if background > 0.0 => Ok(self.fraction * background),
            _ => false_alarm_threshold(delta, self.p_fa),
        }
    }
}

/// Refined line with its frequency uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReconstructedLine {
    pub frequency: f64,
    pub intensity: f64,
    pub freq_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    pub alpha: f64,
    pub residual: f64,
    pub epsilon_alpha: f64,
}

/// Accepted lines, background and the rejected candidates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReconstructionResult {
    pub lines: Vec<ReconstructedLine>,
    pub background: f64,
    pub threshold: f64,
    pub rejected: Vec<SpectralLine>,
    pub diagnostics: Diagnostics,
    /// Set when the fitted background is not positive.
    pub background_nonpositive: bool,
}

impl ReconstructionResult {
    /// Number of accepted lines.
    pub fn k(&self) -> usize {
        self.lines.len()
    }

    pub fn to_line_spectrum(&self) -> Result<LineSpectrum> {
        LineSpectrum::new(
            self.lines
                .iter()
                .map(|l| SpectralLine::new(l.frequency, l.intensity))
                .collect(),
            self.background,
        )
    }
}

/// Keeps candidates with `intensity >= threshold`.
pub fn apply_threshold(
    candidates: &[ReconstructedLine],
    background: f64,
    threshold: f64,
    diagnostics: Diagnostics,
) -> ReconstructionResult {
    let (lines, rejected): (Vec<_>, Vec<_>) =
        candidates.iter().partition(|c| c.intensity >= threshold);
    ReconstructionResult {
        lines,
        background,
        threshold,
        rejected: rejected
            .into_iter()
            .map(|c| SpectralLine::new(c.frequency, c.intensity))
            .collect(),
        diagnostics,
        background_nonpositive: !(background > 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Family, HalfWidthLaw};
    use crate::spectrum::{forward_discrete, Grid};
    use alloc::vec;

    fn lorentz() -> InstrumentFunction {
        InstrumentFunction::new(Family::Lorentz, HalfWidthLaw::constant(0.05).unwrap()).unwrap()
    }

    fn candidates(pairs: &[(f64, f64)]) -> Vec<ReconstructedLine> {
        pairs
            .iter()
            .map(|&(frequency, intensity)| ReconstructedLine {
                frequency,
                intensity,
                freq_error: 0.0,
            })
            .collect()
    }

    #[test]
    fn design_shape_and_background_column() {
        let grid = Grid::new(2.0, 4.0, 21).unwrap();
        let u = SampledSpectrum::from_fn(grid, |_| 1.0).unwrap();
        let sys = build_refined_system(&lorentz(), &[3.0], &u).unwrap();
        assert_eq!(sys.design.shape(), (21, 2));
        assert!(sys.design.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn out_of_band_frequency_is_rejected() {
        let grid = Grid::new(2.0, 4.0, 21).unwrap();
        let u = SampledSpectrum::from_fn(grid, |_| 1.0).unwrap();
        assert!(matches!(
            build_refined_system(&lorentz(), &[2.5, 4.2], &u),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn too_few_rows_is_underdetermined() {
        let grid = Grid::new(2.0, 4.0, 3).unwrap();
        let u = SampledSpectrum::from_fn(grid, |_| 1.0).unwrap();
        assert!(matches!(
            build_refined_system(&lorentz(), &[2.5, 3.5], &u),
            Err(Error::Underdetermined {
                rows: 3,
                unknowns: 3
            })
        ));
    }

    #[test]
    fn consistent_system_is_recovered() {
        let grid = Grid::new(2.0, 4.0, 81).unwrap();
        let truth =
            LineSpectrum::from_pairs(&[(2.31, 4.4), (2.52, 1.1), (3.33, 2.0)], 0.2).unwrap();
        let u = forward_discrete(&truth, &lorentz(), &grid).unwrap();
        let sys = build_refined_system(&lorentz(), &truth.frequencies(), &u).unwrap();
        let sol = solve_lsm(&sys).unwrap();
        for (a, b) in sol.intensities.iter().zip(truth.intensities()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((sol.background - 0.2).abs() < 1e-8);
    }

    #[test]
    fn duplicate_columns_are_rank_deficient() {
        let grid = Grid::new(2.0, 4.0, 41).unwrap();
        let u = SampledSpectrum::from_fn(grid, |x| x).unwrap();
        let sys = build_refined_system(&lorentz(), &[2.5, 3.0, 3.0], &u).unwrap();
        match solve_lsm(&sys) {
            Err(Error::RankDeficient { first, second }) => {
                assert_eq!((first, second), (3.0, 3.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn merging_keeps_the_taller_peak() {
        let p = |frequency: f64, height: f64| Peak {
            index: 0,
            frequency,
            height,
            second_derivative: 0.0,
            freq_error: 0.0,
        };
        let merged = merge_close_peaks(&[p(1.0, 1.0), p(1.004, 2.0), p(1.2, 0.5)], 0.005);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].frequency, 1.004);
        assert_eq!(merged[1].frequency, 1.2);
    }

    #[test]
    fn false_alarm_examples() {
        assert!((false_alarm_threshold(0.05, 0.01).unwrap() - 0.151_743).abs() < 1e-6);
        assert_eq!(false_alarm_threshold(0.0, 0.3).unwrap(), 0.0);
        assert!(false_alarm_threshold(1.0, 1.0 - 1e-12).unwrap() < 1e-5);
        assert!(false_alarm_threshold(1.0, 0.0).is_err());
        assert!(false_alarm_threshold(1.0, 1.0).is_err());
    }

    #[test]
    fn threshold_rule_falls_back_without_background() {
        let rule = ThresholdRule::default();
        assert!((rule.resolve(0.2, 0.05).unwrap() - 0.04).abs() < 1e-15);
        let fallback = rule.resolve(-0.1, 0.05).unwrap();
        assert!((fallback - false_alarm_threshold(0.05, 0.01).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn thresholding() {
        let all = apply_threshold(
            &candidates(&[(1.0, 0.5), (2.0, 3.0)]),
            0.1,
            0.0,
            Diagnostics::default(),
        );
        assert_eq!(all.k(), 2);
        let r = apply_threshold(
            &candidates(&[(1.0, 4.5), (2.0, -0.1), (3.0, 0.01)]),
            0.2,
            0.2 * 0.2,
            Diagnostics::default(),
        );
        assert_eq!(r.k(), 1);
        assert_eq!(r.rejected.len(), 2);
        assert!(!r.background_nonpositive);
        let neg = apply_threshold(
            &candidates(&[(1.0, 1.0)]),
            -0.3,
            0.1,
            Diagnostics::default(),
        );
        assert!(neg.background_nonpositive);
        assert_eq!(neg.background, -0.3);
    }

    #[test]
    fn permuting_frequencies_permutes_intensities() {
        let grid = Grid::new(2.0, 4.0, 61).unwrap();
        let u = SampledSpectrum::from_fn(grid, |x| 1.0 + libm::sin(4.0 * x)).unwrap();
        let f = vec![2.2, 2.9, 3.5];
        let g = vec![3.5, 2.2, 2.9];
        let a = solve_lsm(&build_refined_system(&lorentz(), &f, &u).unwrap()).unwrap();
        let b = solve_lsm(&build_refined_system(&lorentz(), &g, &u).unwrap()).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1.0);
        assert!(close(a.intensities[0], b.intensities[1]));
        assert!(close(a.intensities[1], b.intensities[2]));
        assert!(close(a.intensities[2], b.intensities[0]));
        assert!(close(a.background, b.background));
    }
}
