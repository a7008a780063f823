//! Line candidates from the regularized solution.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::spectrum::SampledSpectrum;

/// Local maximum of a sampled solution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Peak {
    pub index: usize,
    pub frequency: f64,
    pub height: f64,
    /// Central second difference at the peak; 0 until annotated.
    pub second_derivative: f64,
    /// Frequency uncertainty; 0 until annotated, infinite for a flat peak.
    pub freq_error: f64,
}

/// Every interior index with `z[i] > z[i-1]` and `z[i] >= z[i+1]`.
///
/// On a plateau only the leftmost point qualifies. Boundary nodes are never
/// reported.
pub fn find_local_maxima(z: &SampledSpectrum) -> Vec<Peak> {
    let v = z.values();
    let grid = z.grid();
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
        .map(|i| Peak {
            index: i,
            frequency: grid.node(i),
            height: v[i],
            second_derivative: 0.0,
            freq_error: 0.0,
        })
        .collect()
}

/// The `l` tallest peaks (ties to the lower frequency), returned in
/// ascending frequency order.
pub fn top_l(peaks: &[Peak], l: usize) -> Vec<Peak> {
    let mut ranked: Vec<Peak> = peaks.to_vec();
    ranked.sort_by(|a, b| {
        b.height
            .total_cmp(&a.height)
            .then(a.frequency.total_cmp(&b.frequency))
    });
    ranked.truncate(l);
    ranked.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    ranked
}

/// `(z[i-1] - 2 z[i] + z[i+1]) / h^2`.
pub fn second_derivative(z: &SampledSpectrum, index: usize) -> Result<f64> {
    let v = z.values();
    if index == 0 || index + 1 >= v.len() {
        return Err(Error::domain(
            "second difference",
            format!(
                "index {index} is not interior to a grid of {} nodes",
                v.len()
            ),
        ));
    }
    let h = z.grid().step();
    Ok((v[index - 1] - 2.0 * v[index] + v[index + 1]) / (h * h))
}

/// Frequency uncertainty `sqrt(2 eps / |z''| + (h/2)^2)`.
///
/// A zero curvature yields `f64::INFINITY`.
pub fn frequency_error(epsilon_alpha: f64, z2: f64, h: f64) -> f64 {
    let half = 0.5 * h;
    if epsilon_alpha == 0.0 {
        return half;
    }
    if z2 == 0.0 {
        return f64::INFINITY;
    }
    libm::sqrt(2.0 * epsilon_alpha / libm::fabs(z2) + half * half)
}

/// Fills `second_derivative` and `freq_error` of each peak.
pub fn annotate(peaks: &mut [Peak], z: &SampledSpectrum, epsilon_alpha: f64) -> Result<()> {
    let h = z.grid().step();
    for p in peaks.iter_mut() {
        p.second_derivative = second_derivative(z, p.index)?;
        p.freq_error = frequency_error(epsilon_alpha, p.second_derivative, h);
    }
    Ok(())
}
