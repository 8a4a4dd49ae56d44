//! UE drops and the simplified clustered-multipath description.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::scenario::{ScenarioParams, GUARD_RADIUS};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Power fraction carried by the LOS path when one exists.
pub const LOS_POWER_FRACTION: f64 = 0.6;

/// Elevation interval (radians) for NLOS arrivals.
pub const NLOS_ELEVATION_RANGE: (f64, f64) = (-PI / 6.0, PI / 3.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    /// Radians from the array broadside (+x axis), positive toward +y.
    pub azimuth: f64,
    /// Radians below the horizon as seen from the BS.
    pub elevation: f64,
}

/// Path 0 is the LOS path when `los` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    pub los: bool,
}

impl PathSet {
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// 3-D BS–UE distance for a UE at `ue` (metres, BS-centred frame).
pub fn distance_3d(params: &ScenarioParams, ue: [f64; 2]) -> f64 {
    let dh = params.bs_height - params.ue_height;
    (ue[0] * ue[0] + ue[1] * ue[1] + dh * dh).sqrt()
}

/// Drops a UE uniformly (by area) over the annular sector between the guard
/// radius and the cell radius, and draws its LOS condition.
pub fn sample_geometry<R: Rng + ?Sized>(params: &ScenarioParams, rng: &mut R) -> ([f64; 2], bool) {
    let (r0, r1) = (GUARD_RADIUS, params.cell_radius);
    let u: f64 = rng.random();
    let radius = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
    let az = (rng.random::<f64>() - 0.5) * params.sector_width;
    let los = rng.random::<f64>() < params.los_probability;
    ([radius * az.cos(), radius * az.sin()], los)
}

/// Mean radius of the area-uniform annulus `[r0, r1]`: ⅔·(r1³ − r0³)/(r1² − r0²).
pub fn annulus_mean_radius(r0: f64, r1: f64) -> f64 {
    2.0 / 3.0 * (r1.powi(3) - r0.powi(3)) / (r1 * r1 - r0 * r0)
}

/// One geometric LOS path (when `los`) plus `num_nlos_paths` NLOS paths with
/// exponential excess delays, an exponential power-delay profile, uniform
/// phases and uniform angles. Total power is normalized to one.
pub fn draw_paths<R: Rng + ?Sized>(
    params: &ScenarioParams,
    ue: [f64; 2],
    los: bool,
    rng: &mut R,
) -> PathSet {
    let d3 = distance_3d(params, ue);
    let tau0 = d3 / SPEED_OF_LIGHT;
    let mut paths = Vec::with_capacity(params.num_nlos_paths + 1);

    if los {
        let horizontal = (ue[0] * ue[0] + ue[1] * ue[1]).sqrt();
        // Carrier phase makes the LOS term a deterministic function of position.
        let phase = -2.0 * PI * params.carrier_ghz * 1e9 * tau0;
        paths.push(Path {
            gain: Complex64::from_polar(1.0, phase),
            delay: tau0,
            azimuth: ue[1].atan2(ue[0]),
            elevation: (params.bs_height - params.ue_height).atan2(horizontal),
        });
    }

    let mut nlos_power = 0.0;
    for _ in 0..params.num_nlos_paths {
        let excess = exponential(params.delay_spread, rng);
        let power = (-excess / params.delay_spread).exp();
        let phase = rng.random::<f64>() * 2.0 * PI;
        let azimuth = (rng.random::<f64>() * 2.0 - 1.0) * PI;
        let (lo, hi) = NLOS_ELEVATION_RANGE;
        let elevation = lo + rng.random::<f64>() * (hi - lo);
        nlos_power += power;
        paths.push(Path {
            gain: Complex64::from_polar(power.sqrt(), phase),
            delay: tau0 + excess,
            azimuth,
            elevation,
        });
    }

    let start = usize::from(los);
    let nlos_share = if los {
        if params.num_nlos_paths == 0 {
            0.0
        } else {
            1.0 - LOS_POWER_FRACTION
        }
    } else {
        1.0
    };
    if los {
        paths[0].gain *= (1.0 - nlos_share).sqrt();
    }
    if nlos_power > 0.0 {
        let s = (nlos_share / nlos_power).sqrt();
        for p in &mut paths[start..] {
            p.gain *= s;
        }
    }
    PathSet { paths, los }
}

fn exponential<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -mean * (1.0 - u).ln()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::channelgen::ScenarioKind;

    fn umi() -> ScenarioParams {
        ScenarioParams::desk(ScenarioKind::UMi, 3.5)
    }

    #[test]
    fn drops_stay_inside_the_annulus() {
        let p = umi();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let (ue, _) = sample_geometry(&p, &mut rng);
            let r = (ue[0] * ue[0] + ue[1] * ue[1]).sqrt();
            assert!((GUARD_RADIUS..=100.0).contains(&r), "{r}");
            assert!(ue[0] >= 0.0, "drop behind the array plane: {ue:?}");
        }
    }

    #[test]
    fn full_los_probability_always_draws_los() {
        let mut p = umi();
        p.los_probability = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..500).all(|_| sample_geometry(&p, &mut rng).1));
    }

    #[test]
    fn mean_radius_matches_annulus_formula() {
        let p = umi();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let (ue, _) = sample_geometry(&p, &mut rng);
                (ue[0] * ue[0] + ue[1] * ue[1]).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        let expected = annulus_mean_radius(GUARD_RADIUS, 100.0);
        assert!((mean - expected).abs() / expected < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn los_delay_is_geometric() {
        let p = umi();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ps = draw_paths(&p, [50.0, 0.0], true, &mut rng);
        let dh: f64 = 10.0 - 1.5;
        let expected = (50.0f64 * 50.0 + dh * dh).sqrt() / SPEED_OF_LIGHT;
        assert!((ps.paths[0].delay - expected).abs() <= 1e-12 * expected);
        assert_eq!(ps.paths[0].azimuth, 0.0);
        assert!((ps.paths[0].gain.norm_sqr() - LOS_POWER_FRACTION).abs() < 1e-12);
    }

    #[test]
    fn nlos_excess_delay_mean_matches_delay_spread() {
        let mut p = umi();
        p.num_nlos_paths = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let ue = [30.0, 40.0];
        let tau0 = distance_3d(&p, ue) / SPEED_OF_LIGHT;
        let mean: f64 = (0..n)
            .map(|_| draw_paths(&p, ue, false, &mut rng).paths[0].delay - tau0)
            .sum::<f64>()
            / n as f64;
        assert!((mean - p.delay_spread).abs() / p.delay_spread < 0.05, "{mean}");
    }

    #[test]
    fn los_only_channel_has_unit_los_gain() {
        let mut p = umi();
        p.num_nlos_paths = 0;
        p.los_probability = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ps = draw_paths(&p, [20.0, -30.0], true, &mut rng);
        assert_eq!(ps.paths.len(), 1);
        assert!((ps.total_power() - 1.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn power_is_normalized(seed in 0u64..10_000, los in proptest::bool::ANY, n in 1usize..20) {
            let mut p = umi();
            p.num_nlos_paths = n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ue, _) = sample_geometry(&p, &mut rng);
            let ps = draw_paths(&p, ue, los, &mut rng);
            proptest::prop_assert!((ps.total_power() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(ps.paths.iter().all(|q| q.delay >= 0.0));
        }
    }
}
