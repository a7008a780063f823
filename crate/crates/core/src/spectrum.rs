//! Line spectra, sampled spectra and the forward measurement model.
//!
//! A measured spectrum is modelled as
//!
//! ```text
//! u~(nu_i) = sum_j K(nu_i, nu'_j) z_j + F + du(nu_i)
//! ```
//!
//! where `z_j` and `nu'_j` are line intensities and frequencies, `F` a
//! constant background and `du` zero-mean Gaussian measurement noise.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{InstrumentFunction, KernelMatrix};

/// Uniform closed grid `a = x_0 < x_1 < ... < x_{N-1} = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "GridRepr", into = "GridRepr"))]
pub struct Grid {
    start: f64,
    end: f64,
    count: usize,
}

impl Grid {
    pub fn new(start: f64, end: f64, count: usize) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite, got [{start}, {end}]"
            )));
        }
        if start >= end {
            return Err(Error::InvalidGrid(format!(
                "start {start} must be below end {end}"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!(
                "at least two nodes required, got {count}"
            )));
        }
        Ok(Grid { start, end, count })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.count
    }

    /// Always false; a grid has at least two nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / (self.count - 1) as f64
    }

    /// Node `k`; the last node is `end` exactly.
    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.count {
            self.end
        } else {
            self.start + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.node(k))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let t = (x - self.start) / self.step();
        if t <= 0.0 {
            0
        } else {
            let k = libm::round(t) as usize;
            k.min(self.count - 1)
        }
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct GridRepr {
    start: f64,
    end: f64,
    count: usize,
}

#[cfg(feature = "serde")]
impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::new(r.start, r.end, r.count)
    }
}

#[cfg(feature = "serde")]
impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr {
            start: g.start,
            end: g.end,
            count: g.count,
        }
    }
}

/// A single monochromatic line.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralLine {
    pub frequency: f64,
    pub intensity: f64,
}

impl SpectralLine {
    pub fn new(frequency: f64, intensity: f64) -> Self {
        SpectralLine {
            frequency,
            intensity,
        }
    }
}

/// Discrete spectrum: lines in strictly increasing frequency order plus a
/// constant background.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(try_from = "LineSpectrumRepr", into = "LineSpectrumRepr")
)]
pub struct LineSpectrum {
    lines: Vec<SpectralLine>,
    background: f64,
}

impl LineSpectrum {
    pub fn new(lines: Vec<SpectralLine>, background: f64) -> Result<Self> {
        if !background.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "background must be finite, got {background}"
            )));
        }
        for (k, line) in lines.iter().enumerate() {
            if !line.frequency.is_finite() || !line.intensity.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "line {k} is not finite: ({}, {})",
                    line.frequency, line.intensity
                )));
            }
        }
        if let Some(k) = lines
            .windows(2)
            .position(|w| w[1].frequency <= w[0].frequency)
        {
            return Err(Error::InvalidArgument(format!(
                "line frequencies must be strictly increasing: {} then {}",
                lines[k].frequency,
                lines[k + 1].frequency
            )));
        }
        Ok(LineSpectrum { lines, background })
    }

    /// Builds from `(frequency, intensity)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)], background: f64) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(f, z)| SpectralLine::new(f, z))
                .collect(),
            background,
        )
    }

    pub fn lines(&self) -> &[SpectralLine] {
        &self.lines
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.frequency).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.intensity).collect()
    }

    /// Same lines and background multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        LineSpectrum {
            lines: self
                .lines
                .iter()
                .map(|l| SpectralLine::new(l.frequency, c * l.intensity))
                .collect(),
            background: c * self.background,
        }
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct LineSpectrumRepr {
    lines: Vec<SpectralLine>,
    background: f64,
}

#[cfg(feature = "serde")]
impl TryFrom<LineSpectrumRepr> for LineSpectrum {
    type Error = Error;

    fn try_from(r: LineSpectrumRepr) -> Result<Self> {
        LineSpectrum::new(r.lines, r.background)
    }
}

#[cfg(feature = "serde")]
impl From<LineSpectrum> for LineSpectrumRepr {
    fn from(s: LineSpectrum) -> Self {
        LineSpectrumRepr {
            lines: s.lines,
            background: s.background,
        }
    }
}

/// Values sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSpectrum {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledSpectrum {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                context: "sampled spectrum",
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample {k} is not finite ({})",
                values[k]
            )));
        }
        Ok(SampledSpectrum { grid, values })
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// Additive white Gaussian noise with a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub sd: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sd: f64, seed: u64) -> Result<Self> {
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise SD must be finite and nonnegative, got {sd}"
            )));
        }
        Ok(NoiseModel { sd, seed })
    }
}

/// Exact discrete forward model: `u(nu_i) = sum_j K(nu_i, nu'_j) z_j + F`.
///
/// Line frequencies do not need to fall on grid nodes.
pub fn forward_discrete(
    truth: &LineSpectrum,
    ifn: &InstrumentFunction,
    grid: &Grid,
) -> Result<SampledSpectrum> {
    let mut values = Vec::with_capacity(grid.len());
    for nu in grid.nodes() {
        let mut acc = 0.0;
        for line in truth.lines() {
            acc += ifn.eval(nu, line.frequency)? * line.intensity;
        }
        values.push(acc + truth.background());
    }
    SampledSpectrum::new(*grid, values)
}

/// Quadrature form with unit weights, `u = A z`, for a continuous solution
/// `z` sampled on the column grid.
pub fn forward_continuous(
    z: &SampledSpectrum,
    ifn: &InstrumentFunction,
    out_grid: &Grid,
) -> Result<SampledSpectrum> {
    let a = KernelMatrix::build(ifn, out_grid, z.grid())?;
    a.apply(z)
}

/// Adds `sd * g_i` with `g_i` i.i.d. standard normal drawn from a ChaCha8
/// stream seeded by `noise.seed`.
pub fn add_noise(clean: &SampledSpectrum, noise: &NoiseModel) -> SampledSpectrum {
    if noise.sd == 0.0 {
        return clean.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let values = clean
        .values()
        .iter()
        .map(|&v| {
            let g: f64 = StandardNormal.sample(&mut rng);
            v + noise.sd * g
        })
        .collect();
    SampledSpectrum {
        grid: clean.grid,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Family, HalfWidthLaw};
    use alloc::vec;

    fn model_if() -> InstrumentFunction {
        InstrumentFunction::model_gaussian(0.05, 0.075).unwrap()
    }

    #[test]
    fn grid_last_node_is_exact() {
        let g = Grid::new(2.0, 4.0, 401).unwrap();
        assert_eq!(g.node(400), 4.0);
        assert_eq!(g.node(0), 2.0);
        assert!((g.step() - 0.005).abs() < 1e-15);
        assert_eq!(g.nearest_index(2.28), 56);
    }

    #[test]
    fn grid_rejects_bad_bounds() {
        assert!(Grid::new(1.0, 1.0, 5).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(Grid::new(f64::NAN, 1.0, 3).is_err());
    }

    #[test]
    fn line_spectrum_requires_increasing_frequencies() {
        assert!(LineSpectrum::from_pairs(&[(2.0, 1.0), (2.0, 1.0)], 0.0).is_err());
        assert!(LineSpectrum::from_pairs(&[(3.0, 1.0), (2.0, 1.0)], 0.0).is_err());
        assert!(LineSpectrum::from_pairs(&[(2.0, 1.0), (3.0, 1.0)], 0.0).is_ok());
    }

    #[test]
    fn single_unit_line_reproduces_the_kernel_trace() {
        let ifn = model_if();
        let grid = Grid::new(2.0, 4.0, 101).unwrap();
        let truth = LineSpectrum::from_pairs(&[(2.9, 1.0)], 0.0).unwrap();
        let u = forward_discrete(&truth, &ifn, &grid).unwrap();
        for (nu, v) in grid.nodes().zip(u.values()) {
            assert_eq!(*v, ifn.eval(nu, 2.9).unwrap());
        }
    }

    #[test]
    fn empty_line_list_gives_flat_background() {
        let grid = Grid::new(2.0, 4.0, 11).unwrap();
        let truth = LineSpectrum::new(vec![], 0.2).unwrap();
        let u = forward_discrete(&truth, &model_if(), &grid).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn forward_discrete_is_linear() {
        let grid = Grid::new(2.0, 4.0, 101).unwrap();
        let truth = LineSpectrum::from_pairs(&[(2.28, 4.4), (2.36, 4.6), (3.6, 1.3)], 0.2).unwrap();
        let u1 = forward_discrete(&truth, &model_if(), &grid).unwrap();
        let u2 = forward_discrete(&truth.scaled(2.0), &model_if(), &grid).unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn forward_continuous_of_zero_is_zero() {
        let cols = Grid::new(2.0, 4.0, 41).unwrap();
        let rows = Grid::new(2.0, 4.0, 21).unwrap();
        let z = SampledSpectrum::new(cols, vec![0.0; 41]).unwrap();
        let u = forward_continuous(&z, &model_if(), &rows).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_on_node_matches_discrete_line_exactly() {
        let ifn = InstrumentFunction::new(
            Family::Lorentz,
            HalfWidthLaw::frequency_inverse(0.1).unwrap(),
        )
        .unwrap();
        let cols = Grid::new(2.0, 4.0, 201).unwrap();
        let rows = Grid::new(2.0, 4.0, 101).unwrap();
        let mut z = vec![0.0; 201];
        z[50] = 4.4;
        z[120] = 1.5;
        let spike = SampledSpectrum::new(cols, z).unwrap();
        let truth =
            LineSpectrum::from_pairs(&[(cols.node(50), 4.4), (cols.node(120), 1.5)], 0.0).unwrap();
        let uc = forward_continuous(&spike, &ifn, &rows).unwrap();
        let ud = forward_discrete(&truth, &ifn, &rows).unwrap();
        for (a, b) in uc.values().iter().zip(ud.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn spike_near_line_is_within_node_offset_bound() {
        // Line at 2.28 with the spike moved to the nearest node of a 401 grid.
        let ifn = model_if();
        let cols = Grid::new(2.0, 4.0, 401).unwrap();
        let rows = Grid::new(2.0, 4.0, 101).unwrap();
        let k = cols.nearest_index(2.28);
        let mut z = vec![0.0; 401];
        z[k] = 4.4;
        let u = forward_continuous(&SampledSpectrum::new(cols, z).unwrap(), &ifn, &rows).unwrap();
        let offset = (cols.node(k) - 2.28).abs();
        // max |dK/dnu'| of a Gaussian is g / (sqrt(2 pi e) sigma^2); sigma is smallest at nu = 4.
        let sigma_min = 0.05 * libm::sqrt(1.0 - 0.16 * 4.0);
        let slope = 0.075
            / (libm::sqrt(2.0 * core::f64::consts::PI * core::f64::consts::E)
                * sigma_min
                * sigma_min);
        for (nu, v) in rows.nodes().zip(u.values()) {
            let exact = 4.4 * ifn.eval(nu, 2.28).unwrap();
            assert!((v - exact).abs() <= offset * slope * 4.4 + 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let grid = Grid::new(0.0, 1.0, 17).unwrap();
        let s = SampledSpectrum::from_fn(grid, |x| x * x).unwrap();
        assert_eq!(add_noise(&s, &NoiseModel::new(0.0, 9).unwrap()), s);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let grid = Grid::new(0.0, 1.0, 101).unwrap();
        let s = SampledSpectrum::from_fn(grid, |_| 1.0).unwrap();
        let n = NoiseModel::new(0.05, 20_240_517).unwrap();
        assert_eq!(add_noise(&s, &n), add_noise(&s, &n));
        let other = add_noise(&s, &NoiseModel::new(0.05, 1).unwrap());
        assert_ne!(add_noise(&s, &n), other);
    }

    #[test]
    fn noise_sample_sd_is_plausible() {
        let grid = Grid::new(2.0, 4.0, 101).unwrap();
        let s = SampledSpectrum::from_fn(grid, |_| 0.0).unwrap();
        let noisy = add_noise(&s, &NoiseModel::new(0.05, 20_240_517).unwrap());
        let v = noisy.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
        let sd = libm::sqrt(var);
        assert!((0.035..=0.065).contains(&sd), "sample sd {sd}");
    }
}
