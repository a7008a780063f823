//! Noise estimation and natural cubic smoothing splines.
//!
//! The spline minimizes `int s''(x)^2 dx` subject to
//! `||s(x_i) - y_i||_2 <= target`. It is computed in the Reinsch form: with
//! `g` the values at the knots and `gamma` the interior second derivatives,
//! the penalized problem `||y - g||^2 + lambda * gamma' R gamma` is solved
//! through the banded system `(R + lambda Q'Q) gamma = Q'y`,
//! `g = y - lambda Q gamma`. The achieved residual `lambda ||Q gamma||` grows
//! monotonically with `lambda`, so the weight meeting a residual target is
//! found by bisection on `log lambda`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::spectrum::{norm2, Grid, SampledSpectrum};

/// Relative tolerance of the residual bisection.
const RESIDUAL_RTOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 400;

/// Robust per-sample noise SD: `median(|second differences|) / (sqrt(6) * 0.6745)`.
///
/// Second differences of white noise have variance `6 sd^2` and vanish for
/// affine signals, so slowly varying content barely biases the estimate.
pub fn estimate_noise_sd(noisy: &SampledSpectrum) -> Result<f64> {
    let y = noisy.values();
    if y.len() < 3 {
        return Err(Error::InsufficientData {
            what: "noise estimation",
            needed: 3,
            got: y.len(),
        });
    }
    let mut d: Vec<f64> = y
        .windows(3)
        .map(|w| libm::fabs(w[0] - 2.0 * w[1] + w[2]))
        .collect();
    d.sort_by(f64::total_cmp);
    let k = d.len();
    let median = if k % 2 == 1 {
        d[k / 2]
    } else {
        0.5 * (d[k / 2 - 1] + d[k / 2])
    };
    Ok(median / (libm::sqrt(6.0) * 0.6745))
}

/// Natural cubic spline on a uniform knot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    knots: Grid,
    /// `[a, b, c, d]` per interval: `s = a + b t + c t^2 + d t^3`, `t = x - x_i`.
    coeffs: Vec<[f64; 4]>,
    smoothing_residual: f64,
    lambda: f64,
    straight_line: bool,
}

impl SmoothingSpline {
    pub fn knots(&self) -> &Grid {
        &self.knots
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    /// Achieved `||s(x_i) - y_i||_2`.
    pub fn smoothing_residual(&self) -> f64 {
        self.smoothing_residual
    }

    /// Penalty weight; zero for the interpolant, infinite for the line.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Set when the residual target could not be met by any curved spline and
    /// the least-squares straight line was returned instead.
    pub fn is_straight_line(&self) -> bool {
        self.straight_line
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let h = self.knots.step();
        let slack = 1e-9 * h;
        if x < self.knots.start() - slack || x > self.knots.end() + slack {
            return Err(Error::domain(
                "spline evaluation",
                format!(
                    "{x} lies outside the knot span [{}, {}]",
                    self.knots.start(),
                    self.knots.end()
                ),
            ));
        }
        let t = ((x - self.knots.start()) / h).max(0.0);
        let i = (libm::floor(t) as usize).min(self.coeffs.len() - 1);
        Ok((i, x - self.knots.node(i)))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (i, t) = self.locate(x)?;
        let [a, b, c, d] = self.coeffs[i];
        Ok(a + t * (b + t * (c + t * d)))
    }

    /// Derivative of the given order; zero beyond the third.
    pub fn derivative(&self, x: f64, order: u8) -> Result<f64> {
        let (i, t) = self.locate(x)?;
        let [a, b, c, d] = self.coeffs[i];
        Ok(match order {
            0 => a + t * (b + t * (c + t * d)),
            1 => b + t * (2.0 * c + 3.0 * d * t),
            2 => 2.0 * c + 6.0 * d * t,
            3 => 6.0 * d,
            _ => 0.0,
        })
    }
}

/// Reinsch system for one data vector on a uniform grid.
struct Reinsch<'a> {
    y: &'a [f64],
    h: f64,
    qty: Vec<f64>,
}

impl<'a> Reinsch<'a> {
    fn new(y: &'a [f64], h: f64) -> Self {
        let qty = y
            .windows(3)
            .map(|w| (w[0] - 2.0 * w[1] + w[2]) / h)
            .collect();
        Reinsch { y, h, qty }
    }

    /// Knot values and full second-derivative vector (zero at both ends).
    fn solve(&self, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.y.len();
        let k = n - 2;
        let h = self.h;
        let ih2 = 1.0 / (h * h);
        // Bands of R + lambda Q'Q: main, first and second off-diagonal.
        let b0 = vec![2.0 * h / 3.0 + lambda * 6.0 * ih2; k];
        let b1 = vec![h / 6.0 - lambda * 4.0 * ih2; k.saturating_sub(1)];
        let b2 = vec![lambda * ih2; k.saturating_sub(2)];
        let inner = solve_pentadiagonal_spd(&b0, &b1, &b2, &self.qty)?;

        let mut gamma = vec![0.0; n];
        gamma[1..n - 1].copy_from_slice(&inner);
        let g = (0..n)
            .map(|i| {
                let prev = if i > 0 { gamma[i - 1] } else { 0.0 };
                let next = if i + 1 < n { gamma[i + 1] } else { 0.0 };
                let q_gamma = (prev - 2.0 * gamma[i] + next) / h;
                self.y[i] - lambda * q_gamma
            })
            .collect();
        Ok((g, gamma))
    }

    fn residual(&self, lambda: f64) -> Result<f64> {
        let (g, _) = self.solve(lambda)?;
        Ok(distance(&g, self.y))
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// Banded Cholesky for a symmetric positive-definite pentadiagonal matrix.
fn solve_pentadiagonal_spd(d0: &[f64], d1: &[f64], d2: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = d0.len();
    // L has diagonal l0 and subdiagonals l1 (i, i-1) and l2 (i, i-2).
    let mut l0 = vec![0.0; n];
    let mut l1 = vec![0.0; n];
    let mut l2 = vec![0.0; n];
    for i in 0..n {
        if i >= 2 {
            l2[i] = d2[i - 2] / l0[i - 2];
        }
        if i >= 1 {
            let mut v = d1[i - 1];
            if i >= 2 {
                v -= l2[i] * l1[i - 1];
            }
            l1[i] = v / l0[i - 1];
        }
        let p = d0[i] - l1[i] * l1[i] - l2[i] * l2[i];
        if !(p > 0.0) {
            return Err(Error::Factorization(
                "smoothing system is not positive definite",
            ));
        }
        l0[i] = libm::sqrt(p);
    }
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut v = rhs[i];
        if i >= 1 {
            v -= l1[i] * w[i - 1];
        }
        if i >= 2 {
            v -= l2[i] * w[i - 2];
        }
        w[i] = v / l0[i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = w[i];
        if i + 1 < n {
            v -= l1[i + 1] * x[i + 1];
        }
        if i + 2 < n {
            v -= l2[i + 2] * x[i + 2];
        }
        x[i] = v / l0[i];
    }
    Ok(x)
}

fn spline_from_knots(
    knots: Grid,
    g: &[f64],
    gamma: &[f64],
    smoothing_residual: f64,
    lambda: f64,
    straight_line: bool,
) -> SmoothingSpline {
    let h = knots.step();
    let coeffs = (0..g.len() - 1)
        .map(|i| {
            let (g0, g1, c0, c1) = (g[i], g[i + 1], gamma[i], gamma[i + 1]);
            [
                g0,
                (g1 - g0) / h - h * (2.0 * c0 + c1) / 6.0,
                0.5 * c0,
                (c1 - c0) / (6.0 * h),
            ]
        })
        .collect();
    SmoothingSpline {
        knots,
        coeffs,
        smoothing_residual,
        lambda,
        straight_line,
    }
}

fn least_squares_line(grid: &Grid, y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let xs: Vec<f64> = grid.nodes().collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    xs.iter().map(|x| my + slope * (x - mx)).collect()
}

/// Fits the smoothest natural cubic spline whose residual against `noisy`
/// does not exceed `target_residual`.
///
/// A zero target gives the natural interpolating spline. A target at or
/// above the residual of the least-squares line gives that line, flagged by
/// [`SmoothingSpline::is_straight_line`].
pub fn fit_smoothing_spline(
    noisy: &SampledSpectrum,
    target_residual: f64,
) -> Result<SmoothingSpline> {
    let y = noisy.values();
    let grid = *noisy.grid();
    if y.len() < 4 {
        return Err(Error::InsufficientData {
            what: "smoothing spline",
            needed: 4,
            got: y.len(),
        });
    }
    if !(target_residual >= 0.0) || !target_residual.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target residual must be finite and nonnegative, got {target_residual}"
        )));
    }
    let h = grid.step();
    let system = Reinsch::new(y, h);

    if target_residual == 0.0 {
        let (g, gamma) = system.solve(0.0)?;
        let r = distance(&g, y);
        return Ok(spline_from_knots(grid, &g, &gamma, r, 0.0, false));
    }

    let line = least_squares_line(&grid, y);
    let line_residual = distance(&line, y);
    if target_residual >= line_residual {
        let zeros = vec![0.0; y.len()];
        return Ok(spline_from_knots(
            grid,
            &line,
            &zeros,
            line_residual,
            f64::INFINITY,
            true,
        ));
    }

    // lambda ~ h^3 balances the two bands; bracket around that scale.
    let scale = h * h * h;
    let mut lo = scale * 1e-12;
    let mut hi = scale;
    while system.residual(lo)? > target_residual {
        lo *= 1e-3;
        if lo < f64::MIN_POSITIVE * 1e10 {
            let (g, gamma) = system.solve(0.0)?;
            let r = distance(&g, y);
            return Ok(spline_from_knots(grid, &g, &gamma, r, 0.0, false));
        }
    }
    while system.residual(hi)? < target_residual {
        hi *= 1e3;
        if !hi.is_finite() || hi > scale * 1e40 {
            return Err(Error::Factorization("smoothing weight bracket diverged"));
        }
    }

    let mut best = hi;
    for _ in 0..MAX_BISECTIONS {
        let mid = libm::sqrt(lo * hi);
        let r = system.residual(mid)?;
        if libm::fabs(r - target_residual) <= RESIDUAL_RTOL * target_residual {
            best = mid;
            break;
        }
        if r < target_residual {
            lo = mid;
        } else {
            hi = mid;
        }
        best = lo;
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    let (g, gamma) = system.solve(best)?;
    let r = distance(&g, y);
    Ok(spline_from_knots(grid, &g, &gamma, r, best, false))
}

/// Fits a spline with a fixed penalty weight `lambda` (no residual search).
pub fn fit_with_weight(noisy: &SampledSpectrum, lambda: f64) -> Result<SmoothingSpline> {
    let y = noisy.values();
    if y.len() < 4 {
        return Err(Error::InsufficientData {
            what: "smoothing spline",
            needed: 4,
            got: y.len(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "penalty weight must be finite and nonnegative, got {lambda}"
        )));
    }
    let system = Reinsch::new(y, noisy.grid().step());
    let (g, gamma) = system.solve(lambda)?;
    let r = distance(&g, y);
    Ok(spline_from_knots(
        *noisy.grid(),
        &g,
        &gamma,
        r,
        lambda,
        false,
    ))
}

/// Evaluates the spline on every node of `fine`.
pub fn resample(spline: &SmoothingSpline, fine: &Grid) -> Result<SampledSpectrum> {
    let values = fine
        .nodes()
        .map(|x| spline.eval(x))
        .collect::<Result<Vec<f64>>>()?;
    SampledSpectrum::new(*fine, values)
}

/// Residual of `values` against the spline at its own knots.
pub fn residual_against(spline: &SmoothingSpline, data: &SampledSpectrum) -> Result<f64> {
    let fitted = resample(spline, data.grid())?;
    let diff: Vec<f64> = fitted
        .values()
        .iter()
        .zip(data.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(norm2(&diff))
}
