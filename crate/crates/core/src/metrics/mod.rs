//! NMSE, positioning error statistics and serialized evaluation reports.

mod report;

pub use report::{comparison_table, read_report, write_report, CdfPoint, MetricsReport, PositioningStats, ReportKey};

use crate::channelgen::CsiMatrix;
use crate::error::{Error, Result};

/// Floor applied when converting NMSE to decibels.
pub const NMSE_DB_FLOOR: f64 = -120.0;
/// Linear values below this report as [`NMSE_DB_FLOOR`].
pub const NMSE_LINEAR_FLOOR: f64 = 1e-12;

/// Quantiles reported in positioning CDF tables.
pub const DEFAULT_QUANTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub fn to_db(linear: f64) -> f64 {
    if linear < NMSE_LINEAR_FLOOR {
        NMSE_DB_FLOOR
    } else {
        10.0 * linear.log10()
    }
}

/// `Σ(h − ĥ)² / Σh²` over paired slices (real and imaginary parts
/// flattened together).
pub fn nmse_slices(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::shape(format!(
            "nmse over {} and {} values",
            truth.len(),
            estimate.len()
        )));
    }
    let (mut err, mut energy) = (0.0, 0.0);
    for (t, e) in truth.iter().zip(estimate) {
        err += (t - e) * (t - e);
        energy += t * t;
    }
    if energy <= 0.0 {
        return Err(Error::contract("nmse of a zero-energy reference"));
    }
    Ok(err / energy)
}

/// Returns `(linear, dB)`.
pub fn nmse(h: &CsiMatrix, estimate: &CsiMatrix) -> Result<(f64, f64)> {
    if (h.antennas, h.subcarriers) != (estimate.antennas, estimate.subcarriers) {
        return Err(Error::shape(format!(
            "nmse of a {}×{} matrix against {}×{}",
            h.antennas, h.subcarriers, estimate.antennas, estimate.subcarriers
        )));
    }
    let err: f64 = h.re.iter().zip(&estimate.re).chain(h.im.iter().zip(&estimate.im))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let energy = h.energy();
    if energy <= 0.0 {
        return Err(Error::contract("nmse of a zero-energy channel"));
    }
    let linear = err / energy;
    Ok((linear, to_db(linear)))
}

/// Mean of per-sample linear NMSE, and its dB value.
pub fn dataset_nmse(per_sample: &[f64]) -> Result<(f64, f64)> {
    if per_sample.is_empty() {
        return Err(Error::contract("dataset NMSE over zero samples"));
    }
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok((mean, to_db(mean)))
}

pub fn position_errors(preds: &[[f64; 2]], truths: &[[f64; 2]]) -> Result<Vec<f64>> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::contract(format!(
            "position errors need equal non-empty lists, got {} and {}",
            preds.len(),
            truths.len()
        )));
    }
    Ok(preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
        .collect())
}

/// Empirical quantile by linear interpolation between sorted values at rank
/// `q·(n−1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn cdf_table(errors: &[f64], quantiles: &[f64]) -> Result<PositioningStats> {
    if errors.is_empty() {
        return Err(Error::contract("cdf table of zero errors"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric("non-finite positioning error".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = errors.len() as f64;
    Ok(PositioningStats {
        mean_error_m: errors.iter().sum::<f64>() / n,
        rmse_m: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        cdf: quantiles
            .iter()
            .map(|&q| CdfPoint {
                quantile: q,
                error_m: quantile(&sorted, q),
            })
            .collect(),
    })
}

/// Relative improvement of `point` over `reference`, in percent, on
/// linear NMSE values. Positive means `point` has the lower error.
pub fn delta_percent(reference_linear: f64, point_linear: f64) -> f64 {
    (reference_linear - point_linear) / reference_linear * 100.0
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn random_matrix(seed: u64) -> CsiMatrix {
        let mut h = CsiMatrix::zeros(4, 8);
        let mut s = seed;
        for v in h.re.iter_mut().chain(h.im.iter_mut()) {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        h
    }

    #[test]
    fn perfect_reconstruction_clamps() {
        let h = random_matrix(1);
        assert_eq!(nmse(&h, &h).unwrap(), (0.0, NMSE_DB_FLOOR));
    }

    #[test]
    fn zero_predictor_is_zero_db() {
        let h = random_matrix(2);
        let (lin, db) = nmse(&h, &CsiMatrix::zeros(4, 8)).unwrap();
        assert_eq!((lin, db), (1.0, 0.0));
    }

    #[test]
    fn half_scale_estimate() {
        let h = random_matrix(3);
        let (lin, db) = nmse(&h, &h.scaled(0.5)).unwrap();
        assert!((lin - 0.25).abs() < 1e-15);
        assert!((db + 6.0206).abs() < 1e-3);
    }

    #[test]
    fn matches_double_loop() {
        let (h, e) = (random_matrix(4), random_matrix(5));
        let (mut num, mut den) = (0.0, 0.0);
        for a in 0..h.antennas {
            for k in 0..h.subcarriers {
                num += (h.get(a, k) - e.get(a, k)).norm_sqr();
                den += h.get(a, k).norm_sqr();
            }
        }
        assert!((nmse(&h, &e).unwrap().0 - num / den).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_reference_is_an_error() {
        let z = CsiMatrix::zeros(2, 2);
        assert!(matches!(nmse(&z, &z), Err(Error::Contract(_))));
        assert!(nmse(&z, &CsiMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn dataset_mean_is_linear() {
        let (lin, db) = dataset_nmse(&[0.1, 0.001]).unwrap();
        assert!((lin - 0.0505).abs() < 1e-15);
        assert!((db - 10.0 * 0.0505f64.log10()).abs() < 1e-12);
        assert!(dataset_nmse(&[]).is_err());
    }

    #[test]
    fn position_error_examples() {
        let truth = [[1.0, 2.0], [-3.0, 0.5]];
        assert_eq!(position_errors(&truth, &truth).unwrap(), vec![0.0, 0.0]);
        let shifted: Vec<_> = truth.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
        assert_eq!(position_errors(&shifted, &truth).unwrap(), vec![5.0, 5.0]);
        assert!(position_errors(&truth[..1], &truth).is_err());
    }

    #[test]
    fn position_errors_match_scalar_oracle() {
        let preds: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 * 0.7 - 3.0, (i * i) as f64 * 0.01]).collect();
        let truths: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 * -0.2, 1.5]).collect();
        let errs = position_errors(&preds, &truths).unwrap();
        for ((p, t), e) in preds.iter().zip(&truths).zip(errs) {
            let dx = p[0] - t[0];
            let dy = p[1] - t[1];
            assert!((e - (dx * dx + dy * dy).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_examples() {
        let single = cdf_table(&[2.5], &DEFAULT_QUANTILES).unwrap();
        assert!(single.cdf.iter().all(|c| c.error_m == 2.5));
        assert_eq!(single.rmse_m, 2.5);

        let errs: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = cdf_table(&errs, &[0.9]).unwrap();
        assert!((t.cdf[0].error_m - 90.1).abs() < 1e-12);
        assert!(cdf_table(&[], &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn nmse_is_scale_invariant(seed in any::<u64>(), c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
            let (h, e) = (random_matrix(seed), random_matrix(seed ^ 0xABCD));
            let a = nmse(&h, &e).unwrap().0;
            let b = nmse(&h.scaled(c), &e.scaled(c)).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn cdf_is_monotone_and_rmse_dominates(errs in prop::collection::vec(0.0f64..1e3, 1..200)) {
            let t = cdf_table(&errs, &DEFAULT_QUANTILES).unwrap();
            prop_assert!(t.cdf.windows(2).all(|w| w[0].error_m <= w[1].error_m));
            prop_assert!(t.rmse_m >= t.mean_error_m * (1.0 - 1e-12));
        }
    }

    fn db_to_linear(db: f64) -> f64 {
        10f64.powf(db / 10.0)
    }

    #[test]
    fn delta_matches_published_model_scaling_rows() {
        // ViT-Base vs ViT-Large columns with their published Δ.
        for (base, large, published) in [(-21.83, -18.60, -109.1), (-24.31, -23.04, -34.0), (-23.28, -26.75, 54.8)] {
            let d = delta_percent(db_to_linear(base), db_to_linear(large));
            assert!((d - published).abs() < 1.5, "{base} -> {large}: {d} vs {published}");
        }
    }

    #[test]
    fn delta_sign_and_identity() {
        assert_eq!(delta_percent(0.5, 0.5), 0.0);
        assert_eq!(delta_percent(0.5, 0.25), 50.0);
        assert_eq!(delta_percent(0.25, 0.5), -100.0);
    }
}
