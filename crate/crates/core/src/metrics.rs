//! Accuracy of a reconstructed line spectrum against a known one.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::spectrum::LineSpectrum;

/// One row of a line matching. `None` on either side is a zero-intensity
/// placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchPair {
    pub truth: Option<usize>,
    pub recon: Option<usize>,
}

/// Greedy nearest-frequency matching.
///
/// Truth lines, tallest first, each claim the closest unclaimed
/// reconstructed line within `window`. The result lists every truth line in
/// its original order, then the unclaimed reconstructed lines.
pub fn match_lines(
    recon: &LineSpectrum,
    truth: &LineSpectrum,
    window: f64,
) -> Result<Vec<MatchPair>> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "matching window must be positive, got {window}"
        )));
    }
    let t = truth.lines();
    let r = recon.lines();
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[b].intensity.total_cmp(&t[a].intensity).then(a.cmp(&b)));
    let mut claimed = alloc::vec![false; r.len()];
    let mut assigned: Vec<Option<usize>> = alloc::vec![None; t.len()];
    for ti in order {
        let f = t[ti].frequency;
        let best = (0..r.len())
            .filter(|&ri| !claimed[ri])
            .map(|ri| (ri, libm::fabs(r[ri].frequency - f)))
            .filter(|&(_, d)| d <= window)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((ri, _)) = best {
            claimed[ri] = true;
            assigned[ti] = Some(ri);
        }
    }
    let mut pairs: Vec<MatchPair> = assigned
        .into_iter()
        .enumerate()
        .map(|(ti, recon)| MatchPair {
            truth: Some(ti),
            recon,
        })
        .collect();
    pairs.extend((0..r.len()).filter(|&ri| !claimed[ri]).map(|ri| MatchPair {
        truth: None,
        recon: Some(ri),
    }));
    Ok(pairs)
}

/// Absolute and relative errors. A relative error is `None` when its
/// reference norm is zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub eps: f64,
    pub xi: f64,
    pub eps_rel: Option<f64>,
    pub xi_rel: Option<f64>,
    pub zeta_rel: Option<f64>,
    pub matching: Vec<MatchPair>,
}

/// RMSEs use `1/n` over all matching rows. Padded rows take intensity 0 on
/// the missing side and contribute no frequency error.
pub fn compute_metrics(
    matching: &[MatchPair],
    recon: &LineSpectrum,
    truth: &LineSpectrum,
) -> Result<MetricsReport> {
    if matching.is_empty() {
        return Err(Error::EmptyComparison);
    }
    let (mut dz2, mut z2, mut dn2, mut n2) = (0.0, 0.0, 0.0, 0.0);
    for pair in matching {
        let t = pair.truth.map(|k| truth.lines()[k]);
        let r = pair.recon.map(|k| recon.lines()[k]);
        let (zr, zt, fr, ft) = match (r, t) {
            (Some(r), Some(t)) => (r.intensity, t.intensity, r.frequency, t.frequency),
            (None, Some(t)) => (0.0, t.intensity, t.frequency, t.frequency),
            (Some(r), None) => (r.intensity, 0.0, r.frequency, r.frequency),
            (None, None) => continue,
        };
        dz2 += (zr - zt) * (zr - zt);
        z2 += zt * zt;
        dn2 += (fr - ft) * (fr - ft);
        n2 += ft * ft;
    }
    let n = matching.len() as f64;
    let ratio = |num: f64, den: f64| (den > 0.0).then(|| libm::sqrt(num / den));
    let eps_rel = ratio(dz2, z2);
    let xi_rel = ratio(dn2, n2);
    Ok(MetricsReport {
        eps: libm::sqrt(dz2 / n),
        xi: libm::sqrt(dn2 / n),
        eps_rel,
        xi_rel,
        zeta_rel: eps_rel.zip(xi_rel).map(|(e, x)| libm::sqrt(e * e + x * x)),
        matching: matching.to_vec(),
    })
}

/// [`match_lines`] followed by [`compute_metrics`].
pub fn evaluate(recon: &LineSpectrum, truth: &LineSpectrum, window: f64) -> Result<MetricsReport> {
    let matching = match_lines(recon, truth, window)?;
    compute_metrics(&matching, recon, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn spectrum(f: &[f64], z: &[f64]) -> LineSpectrum {
        let pairs: Vec<(f64, f64)> = f.iter().copied().zip(z.iter().copied()).collect();
        LineSpectrum::from_pairs(&pairs, 0.0).unwrap()
    }

    const TRUE_F: [f64; 7] = [2.28, 2.36, 2.95, 3.02, 3.56, 3.64, 3.69];
    const TRUE_Z: [f64; 7] = [4.4, 4.6, 1.1, 3.2, 3.2, 2.8, 3.6];

    #[test]
    fn identical_spectra() {
        let t = spectrum(&TRUE_F, &TRUE_Z);
        let m = evaluate(&t, &t, 0.025).unwrap();
        assert!(m.matching.iter().all(|p| p.truth == p.recon));
        assert_eq!((m.eps, m.xi), (0.0, 0.0));
        assert_eq!(
            (m.eps_rel, m.xi_rel, m.zeta_rel),
            (Some(0.0), Some(0.0), Some(0.0))
        );
    }

    #[test]
    fn reference_reconstruction_values() {
        let recon = spectrum(
            &[2.280, 2.363, 2.943, 3.020, 3.554, 3.638, 3.696],
            &[4.848, 4.783, 1.361, 3.546, 3.271, 3.607, 3.498],
        );
        let m = evaluate(&recon, &spectrum(&TRUE_F, &TRUE_Z), 0.025).unwrap();
        assert!((m.eps_rel.unwrap() - 0.1146).abs() <= 5e-4);
        assert!((m.xi_rel.unwrap() - 0.0014).abs() <= 5e-4);
    }

    #[test]
    fn spurious_lines_pad_against_zero() {
        let mut f = TRUE_F.to_vec();
        let mut z = TRUE_Z.to_vec();
        f.extend([2.6, 3.3]);
        z.extend([0.3, 0.2]);
        let mut pairs: Vec<(f64, f64)> = f.into_iter().zip(z).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let recon = LineSpectrum::from_pairs(&pairs, 0.0).unwrap();
        let m = evaluate(&recon, &spectrum(&TRUE_F, &TRUE_Z), 0.025).unwrap();
        assert_eq!(m.matching.len(), 9);
        assert_eq!(m.matching.iter().filter(|p| p.truth.is_none()).count(), 2);
        let expect = libm::sqrt((0.09 + 0.04) / TRUE_Z.iter().map(|z| z * z).sum::<f64>());
        assert!((m.eps_rel.unwrap() - expect).abs() < 1e-15);
        assert_eq!(m.xi_rel, Some(0.0));
    }

    #[test]
    fn empty_reconstruction_gives_unit_relative_error() {
        let recon = LineSpectrum::new(vec![], 0.0).unwrap();
        let m = evaluate(&recon, &spectrum(&TRUE_F, &TRUE_Z), 0.025).unwrap();
        assert!((m.eps_rel.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_reference_has_no_relative_error() {
        let recon = spectrum(&[1.0], &[1.0]);
        let truth = LineSpectrum::new(vec![], 0.0).unwrap();
        let m = evaluate(&recon, &truth, 0.1).unwrap();
        assert_eq!(m.eps, 1.0);
        assert_eq!(m.eps_rel, None);
        assert_eq!(m.zeta_rel, None);
    }

    #[test]
    fn both_empty_is_an_error() {
        let e = LineSpectrum::new(vec![], 0.0).unwrap();
        assert_eq!(evaluate(&e, &e, 0.1), Err(Error::EmptyComparison));
    }

    #[test]
    fn taller_truth_line_claims_first() {
        let truth = spectrum(&[1.0, 1.02], &[1.0, 5.0]);
        let recon = spectrum(&[1.011], &[4.0]);
        let m = match_lines(&recon, &truth, 0.05).unwrap();
        assert_eq!(
            m[1],
            MatchPair {
                truth: Some(1),
                recon: Some(0)
            }
        );
        assert_eq!(m[0].recon, None);
    }

    proptest! {
        #[test]
        fn scale_and_identity(
            dz in proptest::collection::vec(-0.5f64..0.5, 7),
            df in proptest::collection::vec(-0.004f64..0.004, 7),
            c in 0.1f64..10.0,
        ) {
            let truth = spectrum(&TRUE_F, &TRUE_Z);
            let f: Vec<f64> = TRUE_F.iter().zip(&df).map(|(a, b)| a + b).collect();
            let z: Vec<f64> = TRUE_Z.iter().zip(&dz).map(|(a, b)| a + b).collect();
            let recon = spectrum(&f, &z);
            let m = evaluate(&recon, &truth, 0.025).unwrap();
            let (e, x, zeta) = (m.eps_rel.unwrap(), m.xi_rel.unwrap(), m.zeta_rel.unwrap());
            prop_assert!((zeta * zeta - (e * e + x * x)).abs() <= 1e-12);
            let ms = evaluate(&recon.scaled(c), &truth.scaled(c), 0.025).unwrap();
            prop_assert!((ms.eps_rel.unwrap() - e).abs() <= 1e-12);
            prop_assert!((ms.eps - c * m.eps).abs() <= 1e-12 * c.max(1.0));
        }

        #[test]
        fn reordering_matched_pairs(shift in 0usize..7) {
            let truth = spectrum(&TRUE_F, &TRUE_Z);
            let recon = spectrum(
                &[2.280, 2.363, 2.943, 3.020, 3.554, 3.638, 3.696],
                &[4.848, 4.783, 1.361, 3.546, 3.271, 3.607, 3.498],
            );
            let mut pairs = match_lines(&recon, &truth, 0.025).unwrap();
            let a = compute_metrics(&pairs, &recon, &truth).unwrap();
            pairs.rotate_left(shift);
            let b = compute_metrics(&pairs, &recon, &truth).unwrap();
            prop_assert!((a.eps_rel.unwrap() - b.eps_rel.unwrap()).abs() <= 1e-14);
            prop_assert!((a.xi_rel.unwrap() - b.xi_rel.unwrap()).abs() <= 1e-14);
        }
    }
}
