//! Zero-order Tikhonov regularization of the discretized first-kind
//! equation `A z = u`, with the regularization parameter chosen by the
//! discrepancy principle.
//!
//! For a fixed `alpha > 0` the stabilized normal equations
//! `(alpha E + A'A) z = A'u` are solved by Cholesky factorization. The
//! parameter search evaluates the residual through a thin SVD of `A`
//! computed once, which keeps each trial `alpha` at `O(r)` cost and makes the
//! residual curve monotone in floating point.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::spectrum::{norm2, SampledSpectrum};

const POWER_ITERATION_CAP: usize = 30;
const POWER_ITERATION_RTOL: f64 = 1e-6;

/// Regularized solution on the column grid and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub z_alpha: SampledSpectrum,
    pub alpha: f64,
    /// `||A z_alpha - u||_2`.
    pub residual: f64,
    /// Error bound on `z_alpha`; zero until [`error_estimate`] has been
    /// applied through [`RegularizedSolution::with_error_estimate`].
    pub epsilon_alpha: f64,
    /// Power-iteration estimate of `||A||_2`.
    pub op_norm: f64,
    /// `||u||_2` of the data the solution was fitted to.
    pub data_norm: f64,
}

impl RegularizedSolution {
    pub fn with_error_estimate(mut self, budget: &ErrorBudget) -> Self {
        self.epsilon_alpha = error_estimate(&self, budget);
        self
    }
}

/// Error levels entering the regularized-solution error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorBudget {
    /// Norm of the data error, `||u~ - u||_2`.
    pub delta: f64,
    /// Norm of the kernel error.
    pub xi: f64,
    pub p: f64,
}

impl ErrorBudget {
    pub fn new(delta: f64, xi: f64, p: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() || !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "error levels must be finite and nonnegative (delta {delta}, xi {xi})"
            )));
        }
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "p must be positive, got {p}"
            )));
        }
        Ok(ErrorBudget { delta, xi, p })
    }
}

fn check_rows(a: &KernelMatrix, u: &SampledSpectrum) -> Result<()> {
    if u.len() != a.rows() {
        return Err(Error::Dimension {
            context: "data length against kernel rows",
            expected: a.rows(),
            found: u.len(),
        });
    }
    Ok(())
}

/// Solves `(alpha E + A'A) z = A'u`.
pub fn solve_tikhonov(
    a: &KernelMatrix,
    u: &SampledSpectrum,
    alpha: f64,
) -> Result<RegularizedSolution> {
    check_rows(a, u)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularization parameter must be positive, got {alpha}"
        )));
    }
    let m = a.matrix();
    let rhs = DVector::from_column_slice(u.values());
    let mut normal = m.tr_mul(m);
    for k in 0..normal.nrows() {
        normal[(k, k)] += alpha;
    }
    let chol = normal.cholesky().ok_or(Error::Factorization(
        "alpha E + A'A is not positive definite",
    ))?;
    let z = chol.solve(&m.tr_mul(&rhs));
    let z_alpha = SampledSpectrum::new(*a.col_grid(), z.as_slice().to_vec())?;
    let residual = residual_norm(a, &z_alpha, u)?;
    Ok(RegularizedSolution {
        z_alpha,
        alpha,
        residual,
        epsilon_alpha: 0.0,
        op_norm: spectral_norm(m),
        data_norm: u.norm(),
    })
}

/// `||A z - u||_2`, unnormalized.
pub fn residual_norm(a: &KernelMatrix, z: &SampledSpectrum, u: &SampledSpectrum) -> Result<f64> {
    check_rows(a, u)?;
    let az = a.apply(z)?;
    let diff: Vec<f64> = az
        .values()
        .iter()
        .zip(u.values())
        .map(|(p, q)| p - q)
        .collect();
    Ok(norm2(&diff))
}

/// Largest singular value of `a` by power iteration on `A'A`, started from
/// the constant vector and stopped when the Rayleigh quotient settles.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / libm::sqrt(n as f64));
    let mut rho = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let av = a * &v;
        let w = a.tr_mul(&av);
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let settled = libm::fabs(next - rho) <= POWER_ITERATION_RTOL * POWER_ITERATION_RTOL * next;
        rho = next;
        if settled {
            break;
        }
    }
    libm::sqrt(rho.max(0.0))
}

/// Regularized-solution error bound
/// `(||A|| eta / (2 sqrt(alpha)) + p alpha / (p alpha + 1)) ||z_alpha||`.
pub fn tikhonov_error_bound(op_norm: f64, alpha: f64, eta: f64, p: f64, z_norm: f64) -> f64 {
    if z_norm == 0.0 {
        return 0.0;
    }
    let pa = p * alpha;
    (op_norm / (2.0 * libm::sqrt(alpha)) * eta + pa / (pa + 1.0)) * z_norm
}

/// Error bound for `sol` with `eta = delta / ||u|| + xi / ||A||`.
pub fn error_estimate(sol: &RegularizedSolution, budget: &ErrorBudget) -> f64 {
    let z_norm = sol.z_alpha.norm();
    let delta_rel = if budget.delta == 0.0 {
        0.0
    } else {
        budget.delta / sol.data_norm
    };
    let xi_rel = if budget.xi == 0.0 {
        0.0
    } else {
        budget.xi / sol.op_norm
    };
    tikhonov_error_bound(sol.op_norm, sol.alpha, delta_rel + xi_rel, budget.p, z_norm)
}

/// Search range and resolution for the discrepancy principle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlphaSearch {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub points_per_decade: usize,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch {
            alpha_lo: 1e-8,
            alpha_hi: 1e2,
            points_per_decade: 25,
        }
    }
}

/// Regularization parameter chosen so that the residual matches `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub residual: f64,
    /// `(alpha, residual)` over the log-spaced scan, in increasing `alpha`.
    pub trace: Vec<(f64, f64)>,
}

/// Residual and solution of the Tikhonov problem as functions of `alpha`,
/// via `A = U S V'`: `z_alpha = V diag(s / (s^2 + alpha)) U'u` and
/// `||A z_alpha - u||^2 = sum_k (alpha / (alpha + s_k^2))^2 (U'u)_k^2 + ||u_perp||^2`.
pub struct DiscrepancyCurve {
    singular_values: DVector<f64>,
    v_t: DMatrix<f64>,
    coeffs: DVector<f64>,
    perp_sq: f64,
}

impl DiscrepancyCurve {
    pub fn new(a: &KernelMatrix, u: &SampledSpectrum) -> Result<Self> {
        check_rows(a, u)?;
        let svd = SVD::new(a.matrix().clone(), true, true);
        let (Some(uu), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::Factorization("singular value decomposition"));
        };
        let data = DVector::from_column_slice(u.values());
        let coeffs = uu.tr_mul(&data);
        let perp = &data - &uu * &coeffs;
        Ok(DiscrepancyCurve {
            singular_values: svd.singular_values,
            v_t,
            coeffs,
            perp_sq: perp.norm_squared(),
        })
    }

    pub fn residual(&self, alpha: f64) -> f64 {
        let mut acc = 0.0;
        for (s, c) in self.singular_values.iter().zip(self.coeffs.iter()) {
            // 1 / (1 + s^2/alpha) is monotone in alpha under rounding.
            let f = 1.0 / (1.0 + s * s / alpha);
            acc += f * f * (c * c);
        }
        libm::sqrt(acc + self.perp_sq)
    }

    pub fn solution(&self, alpha: f64) -> DVector<f64> {
        let filtered = DVector::from_iterator(
            self.coeffs.len(),
            self.singular_values
                .iter()
                .zip(self.coeffs.iter())
                .map(|(s, c)| s / (s * s + alpha) * c),
        );
        self.v_t.tr_mul(&filtered)
    }

    /// Residual at each node of a log grid from `lo` to `hi`.
    pub fn scan(&self, search: &AlphaSearch) -> Vec<(f64, f64)> {
        log_grid(search)
            .into_iter()
            .map(|alpha| (alpha, self.residual(alpha)))
            .collect()
    }

    /// Discrepancy root in `alpha`: scan, then bisection on `log alpha`.
    pub fn solve(&self, delta: f64, search: &AlphaSearch) -> Result<AlphaChoice> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "discrepancy target must be positive, got {delta}"
            )));
        }
        validate_search(search)?;
        let trace = self.scan(search);
        let (lo_alpha, lo_res) = trace[0];
        let (hi_alpha, hi_res) = trace[trace.len() - 1];
        if !(lo_res < delta && delta < hi_res) {
            return Err(Error::NotBracketed {
                alpha_lo: lo_alpha,
                alpha_hi: hi_alpha,
                residual_lo: lo_res,
                residual_hi: hi_res,
                delta,
            });
        }
        let k = trace
            .iter()
            .position(|&(_, r)| r >= delta)
            .unwrap_or(trace.len() - 1);
        let (mut lo, mut hi) = (trace[k - 1].0, trace[k].0);
        let mut best = (trace[k].0, trace[k].1);
        for _ in 0..200 {
            let mid = libm::sqrt(lo * hi);
            let r = self.residual(mid);
            best = (mid, r);
            if libm::fabs(r - delta) <= 1e-9 * delta || hi / lo - 1.0 < 1e-15 {
                break;
            }
            if r < delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(AlphaChoice {
            alpha: best.0,
            residual: best.1,
            trace,
        })
    }
}

fn validate_search(search: &AlphaSearch) -> Result<()> {
    if !(search.alpha_lo > 0.0)
        || !(search.alpha_hi > search.alpha_lo)
        || !search.alpha_hi.is_finite()
    {
        return Err(Error::InvalidArgument(format!(
            "alpha range must satisfy 0 < lo < hi, got [{}, {}]",
            search.alpha_lo, search.alpha_hi
        )));
    }
    if search.points_per_decade == 0 {
        return Err(Error::InvalidArgument(
            "points_per_decade must be positive".into(),
        ));
    }
    Ok(())
}

fn log_grid(search: &AlphaSearch) -> Vec<f64> {
    let l0 = libm::log10(search.alpha_lo);
    let l1 = libm::log10(search.alpha_hi);
    let steps = libm::ceil((l1 - l0) * search.points_per_decade as f64).max(1.0) as usize;
    (0..=steps)
        .map(|k| {
            if k == 0 {
                search.alpha_lo
            } else if k == steps {
                search.alpha_hi
            } else {
                libm::pow(10.0, l0 + (l1 - l0) * k as f64 / steps as f64)
            }
        })
        .collect()
}

/// Chooses `alpha` with `||A z_alpha - u|| = delta` inside `search`.
pub fn choose_alpha_discrepancy(
    a: &KernelMatrix,
    u: &SampledSpectrum,
    delta: f64,
    search: &AlphaSearch,
) -> Result<AlphaChoice> {
    DiscrepancyCurve::new(a, u)?.solve(delta, search)
}
