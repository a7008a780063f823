//! Instrument (line-spread) functions and the discretized kernel operator.
//!
//! Every family is parameterized by its half-width on half-power `tau`,
//! which may depend on the tuning coordinate through a [`HalfWidthLaw`].
//! The same code serves frequency and wavelength coordinates; only the law
//! changes.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectrum::{Grid, SampledSpectrum};

/// Root of `sin(x)/x = 1/sqrt(2)`: the half-power point of `sinc^2`.
const SINC2_HALF_POWER: f64 = 1.391_557_378_251_510_3;

/// Coefficient of the frequency-dependent width of the model Gaussian,
/// `sigma(nu) = sigma0 * sqrt(1 - 0.16 nu)`.
const MODEL_WIDTH_SLOPE: f64 = 0.16;

/// Voigt convolution window in units of the total half-width.
const VOIGT_WINDOW: f64 = 40.0;
const VOIGT_ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HalfWidthMode {
    /// `tau(nu) = q / nu`
    #[cfg_attr(feature = "serde", serde(rename = "freq_inverse"))]
    FrequencyInverse,
    /// `tau(lambda) = q * lambda`
    #[cfg_attr(feature = "serde", serde(rename = "wavelength_prop"))]
    WavelengthProportional,
    /// `tau = q`
    #[cfg_attr(feature = "serde", serde(rename = "constant"))]
    Constant,
}

/// How the half-width depends on the tuning coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HalfWidthLaw {
    pub mode: HalfWidthMode,
    pub q: f64,
}

impl HalfWidthLaw {
    pub fn new(mode: HalfWidthMode, q: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::domain(
                "half-width coefficient",
                format!("q must be positive and finite, got {q}"),
            ));
        }
        Ok(HalfWidthLaw { mode, q })
    }

    pub fn constant(tau: f64) -> Result<Self> {
        Self::new(HalfWidthMode::Constant, tau)
    }

    pub fn frequency_inverse(q: f64) -> Result<Self> {
        Self::new(HalfWidthMode::FrequencyInverse, q)
    }

    pub fn wavelength_proportional(q: f64) -> Result<Self> {
        Self::new(HalfWidthMode::WavelengthProportional, q)
    }

    /// Half-width at coordinate `x`.
    pub fn halfwidth(&self, x: f64) -> Result<f64> {
        match self.mode {
            HalfWidthMode::Constant => Ok(self.q),
            HalfWidthMode::FrequencyInverse if x > 0.0 => Ok(self.q / x),
            HalfWidthMode::WavelengthProportional if x > 0.0 => Ok(self.q * x),
            _ => Err(Error::domain(
                "half-width law",
                format!("{:?} requires a positive coordinate, got {x}", self.mode),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Family {
    Slot,
    Triangular,
    Rayleigh,
    Gaussian,
    Lorentz,
    Exponential,
    Voigt,
    /// Gaussian whose width shrinks with frequency,
    /// `sigma(nu) = sigma0 * sqrt(1 - 0.16 nu)`, scaled by `g`.
    ModelGaussian,
}

/// Spectrometer response `K(nu, nu')` to a unit line at `nu'` when tuned
/// to `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(try_from = "InstrumentFunctionRepr", into = "InstrumentFunctionRepr")
)]
pub struct InstrumentFunction {
    family: Family,
    halfwidth: Option<HalfWidthLaw>,
    g: f64,
    sigma0: Option<f64>,
    voigt_mix: Option<f64>,
}

impl InstrumentFunction {
    /// Unit-gain instrument function of one of the half-width families.
    pub fn new(family: Family, halfwidth: HalfWidthLaw) -> Result<Self> {
        if family == Family::ModelGaussian {
            return Err(Error::InvalidArgument(
                "the model Gaussian is built with InstrumentFunction::model_gaussian".into(),
            ));
        }
        Ok(InstrumentFunction {
            family,
            halfwidth: Some(halfwidth),
            g: 1.0,
            sigma0: None,
            voigt_mix: (family == Family::Voigt).then_some(0.5),
        })
    }

    pub fn model_gaussian(sigma0: f64, g: f64) -> Result<Self> {
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(Error::domain(
                "sigma0",
                format!("must be positive, got {sigma0}"),
            ));
        }
        InstrumentFunction {
            family: Family::ModelGaussian,
            halfwidth: None,
            g: 1.0,
            sigma0: Some(sigma0),
            voigt_mix: None,
        }
        .with_gain(g)
    }

    pub fn with_gain(mut self, g: f64) -> Result<Self> {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::domain(
                "normalizing factor",
                format!("g must be positive, got {g}"),
            ));
        }
        self.g = g;
        Ok(self)
    }

    /// Fraction of the half-width given to the Gaussian component of a Voigt
    /// profile; the Lorentz component gets the rest.
    pub fn with_voigt_mix(mut self, mix: f64) -> Result<Self> {
        if self.family != Family::Voigt {
            return Err(Error::InvalidArgument(
                "voigt_mix only applies to the Voigt family".into(),
            ));
        }
        if !(0.0..=1.0).contains(&mix) {
            return Err(Error::domain(
                "voigt_mix",
                format!("must lie in [0, 1], got {mix}"),
            ));
        }
        self.voigt_mix = Some(mix);
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn halfwidth_law(&self) -> Option<HalfWidthLaw> {
        self.halfwidth
    }

    pub fn gain(&self) -> f64 {
        self.g
    }

    /// Half-width on half-power at tuning coordinate `nu`.
    pub fn halfwidth(&self, nu: f64) -> Result<f64> {
        match (self.family, self.halfwidth) {
            (Family::ModelGaussian, _) => Ok(self.model_sigma(nu)? * libm::sqrt(2.0 * LN_2)),
            (_, Some(law)) => law.halfwidth(nu),
            (_, None) => Err(Error::InvalidArgument("missing half-width law".into())),
        }
    }

    fn model_sigma(&self, nu: f64) -> Result<f64> {
        let s = 1.0 - MODEL_WIDTH_SLOPE * nu;
        if !(s > 0.0) {
            return Err(Error::domain(
                "model Gaussian width",
                format!("1 - 0.16 nu must be positive, nu = {nu}"),
            ));
        }
        Ok(self.sigma0.unwrap_or(f64::NAN) * libm::sqrt(s))
    }

    /// `g * K(nu, nu')`.
    pub fn eval(&self, nu: f64, nu_prime: f64) -> Result<f64> {
        let d = nu - nu_prime;
        let k = match self.family {
            Family::ModelGaussian => gaussian_sigma(self.model_sigma(nu)?, d),
            Family::Voigt => voigt(self.halfwidth(nu)?, self.voigt_mix.unwrap_or(0.5), d),
            family => profile(family, self.halfwidth(nu)?, d),
        };
        Ok(self.g * k)
    }

    #[cfg(feature = "serde")]
    fn validate(&self) -> Result<()> {
        match self.family {
            Family::ModelGaussian => {
                let s0 = self.sigma0.ok_or_else(|| {
                    Error::InvalidArgument("model_gaussian requires sigma0".into())
                })?;
                Self::model_gaussian(s0, self.g).map(|_| ())
            }
            family => {
                let law = self.halfwidth.ok_or_else(|| {
                    Error::InvalidArgument("instrument function requires a halfwidth law".into())
                })?;
                let base =
                    Self::new(family, HalfWidthLaw::new(law.mode, law.q)?)?.with_gain(self.g)?;
                match self.voigt_mix {
                    Some(mix) => base.with_voigt_mix(mix).map(|_| ()),
                    None => Ok(()),
                }
            }
        }
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct InstrumentFunctionRepr {
    family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    halfwidth: Option<HalfWidthLaw>,
    #[serde(default = "unit_gain")]
    g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    voigt_mix: Option<f64>,
}

#[cfg(feature = "serde")]
fn unit_gain() -> f64 {
    1.0
}

#[cfg(feature = "serde")]
impl TryFrom<InstrumentFunctionRepr> for InstrumentFunction {
    type Error = Error;

    fn try_from(r: InstrumentFunctionRepr) -> Result<Self> {
        let ifn = InstrumentFunction {
            family: r.family,
            halfwidth: r.halfwidth,
            g: r.g,
            sigma0: r.sigma0,
            voigt_mix: r.voigt_mix,
        };
        ifn.validate()?;
        Ok(ifn)
    }
}

#[cfg(feature = "serde")]
impl From<InstrumentFunction> for InstrumentFunctionRepr {
    fn from(f: InstrumentFunction) -> Self {
        InstrumentFunctionRepr {
            family: f.family,
            halfwidth: f.halfwidth,
            g: f.g,
            sigma0: f.sigma0,
            voigt_mix: f.voigt_mix,
        }
    }
}

/// Unit-mass profile of a half-width family at offset `d = nu - nu'`.
fn profile(family: Family, tau: f64, d: f64) -> f64 {
    let ad = libm::fabs(d);
    match family {
        Family::Slot => {
            if ad <= tau {
                0.5 / tau
            } else {
                0.0
            }
        }
        Family::Triangular => {
            if ad <= 2.0 * tau {
                0.5 / tau * (1.0 - ad / (2.0 * tau))
            } else {
                0.0
            }
        }
        Family::Rayleigh => {
            let gamma = PI * tau / SINC2_HALF_POWER;
            let x = PI * d / gamma;
            if x == 0.0 {
                1.0 / gamma
            } else {
                let s = libm::sin(x) / x;
                s * s / gamma
            }
        }
        Family::Gaussian => gaussian_sigma(tau / libm::sqrt(2.0 * LN_2), d),
        Family::Lorentz => lorentz(tau, d),
        Family::Exponential => LN_2 / (2.0 * tau) * libm::exp(-LN_2 * ad / tau),
        Family::Voigt => voigt(tau, 0.5, d),
        Family::ModelGaussian => unreachable!("model Gaussian has no half-width profile"),
    }
}

fn gaussian_sigma(sigma: f64, d: f64) -> f64 {
    libm::exp(-d * d / (2.0 * sigma * sigma)) / (libm::sqrt(2.0 * PI) * sigma)
}

fn lorentz(tau: f64, d: f64) -> f64 {
    tau / PI / (d * d + tau * tau)
}

/// Gaussian (half-width `mix * tau`) convolved with a Lorentzian
/// (half-width `(1 - mix) * tau`).
fn voigt(tau: f64, mix: f64, d: f64) -> f64 {
    if mix >= 1.0 {
        return gaussian_sigma(tau / libm::sqrt(2.0 * LN_2), d);
    }
    if mix <= 0.0 {
        return lorentz(tau, d);
    }
    let sigma = mix * tau / libm::sqrt(2.0 * LN_2);
    let gamma = (1.0 - mix) * tau;
    let f = |t: f64| gaussian_sigma(sigma, t) * lorentz(gamma, d - t);

    let w = VOIGT_WINDOW * tau;
    let mut breaks: Vec<f64> = Vec::with_capacity(4);
    breaks.push(-w);
    let (lo, hi) = if d < 0.0 { (d, 0.0) } else { (0.0, d) };
    for b in [lo, hi] {
        if b > -w && b < w && breaks.last().is_none_or(|&l| b > l) {
            breaks.push(b);
        }
    }
    breaks.push(w);

    let mut total = 0.0;
    for seg in breaks.windows(2) {
        total += adaptive_trapezoid(&f, seg[0], seg[1], VOIGT_ABS_TOL / 2.0);
    }
    total
}

/// Adaptive trapezoid rule with a Richardson-corrected acceptance test.
pub(crate) fn adaptive_trapezoid(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const PIECES: usize = 16;
    let h = (b - a) / PIECES as f64;
    let mut sum = 0.0;
    for k in 0..PIECES {
        let x0 = a + k as f64 * h;
        let x1 = if k + 1 == PIECES { b } else { x0 + h };
        let (f0, f1) = (f(x0), f(x1));
        sum += trapezoid_step(
            f,
            x0,
            x1,
            f0,
            f1,
            0.5 * (f0 + f1) * (x1 - x0),
            tol / PIECES as f64,
            0,
        );
    }
    sum
}

#[allow(clippy::too_many_arguments)]
fn trapezoid_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let left = 0.5 * (fa + fm) * (m - a);
    let right = 0.5 * (fm + fb) * (b - m);
    let refined = left + right;
    let diff = refined - whole;
    if depth >= 48 || libm::fabs(diff) <= 3.0 * tol {
        return refined + diff / 3.0;
    }
    trapezoid_step(f, a, m, fa, fm, left, tol / 2.0, depth + 1)
        + trapezoid_step(f, m, b, fm, fb, right, tol / 2.0, depth + 1)
}

/// Discretized operator `A[i][j] = K(nu_i, nu'_j)` with unit quadrature
/// weights (no step-size factor).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    matrix: DMatrix<f64>,
    row_grid: Grid,
    col_grid: Grid,
}

impl KernelMatrix {
    pub fn build(ifn: &InstrumentFunction, row_grid: &Grid, col_grid: &Grid) -> Result<Self> {
        let (m, n) = (row_grid.len(), col_grid.len());
        let cols: Vec<f64> = col_grid.nodes().collect();
        let mut matrix = DMatrix::zeros(m, n);
        for (i, nu) in row_grid.nodes().enumerate() {
            for (j, &nu_p) in cols.iter().enumerate() {
                matrix[(i, j)] = ifn.eval(nu, nu_p).map_err(|e| Error::KernelEntry {
                    row: i,
                    col: j,
                    source: Box::new(e),
                })?;
            }
        }
        Ok(KernelMatrix {
            matrix,
            row_grid: *row_grid,
            col_grid: *col_grid,
        })
    }

    /// Wraps an explicit matrix; its shape must match the grids.
    pub fn from_matrix(matrix: DMatrix<f64>, row_grid: Grid, col_grid: Grid) -> Result<Self> {
        if matrix.nrows() != row_grid.len() {
            return Err(Error::Dimension {
                context: "kernel matrix rows",
                expected: row_grid.len(),
                found: matrix.nrows(),
            });
        }
        if matrix.ncols() != col_grid.len() {
            return Err(Error::Dimension {
                context: "kernel matrix columns",
                expected: col_grid.len(),
                found: matrix.ncols(),
            });
        }
        Ok(KernelMatrix {
            matrix,
            row_grid,
            col_grid,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row_grid(&self) -> &Grid {
        &self.row_grid
    }

    pub fn col_grid(&self) -> &Grid {
        &self.col_grid
    }

    /// `A z`, sampled on the row grid.
    pub fn apply(&self, z: &SampledSpectrum) -> Result<SampledSpectrum> {
        if z.len() != self.cols() {
            return Err(Error::Dimension {
                context: "kernel matrix times vector",
                expected: self.cols(),
                found: z.len(),
            });
        }
        let values = (0..self.rows())
            .map(|i| {
                self.matrix
                    .row(i)
                    .iter()
                    .zip(z.values())
                    .map(|(a, z)| a * z)
                    .sum()
            })
            .collect();
        SampledSpectrum::new(self.row_grid, values)
    }
}
