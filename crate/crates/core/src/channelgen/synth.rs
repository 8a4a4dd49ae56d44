use std::f64::consts::PI;

use num_complex::Complex64;

use super::paths::PathSet;
use super::scenario::ScenarioParams;

/// Complex channel matrix over (antenna, subcarrier), stored as two row-major
/// real planes.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiMatrix {
    pub antennas: usize,
    pub subcarriers: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CsiMatrix {
    pub fn zeros(antennas: usize, subcarriers: usize) -> Self {
        CsiMatrix {
            antennas,
            subcarriers,
            re: vec![0.0; antennas * subcarriers],
            im: vec![0.0; antennas * subcarriers],
        }
    }

    pub fn get(&self, a: usize, k: usize) -> Complex64 {
        let i = a * self.subcarriers + k;
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn set(&mut self, a: usize, k: usize, v: Complex64) {
        let i = a * self.subcarriers + k;
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        CsiMatrix {
            antennas: self.antennas,
            subcarriers: self.subcarriers,
            re: self.re.iter().map(|v| v * c).collect(),
            im: self.im.iter().map(|v| v * c).collect(),
        }
    }

    /// Rounds every entry to 32-bit precision, matching what a dataset file
    /// stores.
    pub fn quantized(&self) -> Self {
        let q = |v: &Vec<f64>| v.iter().map(|&x| f64::from(x as f32)).collect();
        CsiMatrix {
            antennas: self.antennas,
            subcarriers: self.subcarriers,
            re: q(&self.re),
            im: q(&self.im),
        }
    }
}

/// Half-wavelength uniform planar array response. Element `(m, n)`, stored at
/// index `m·cols + n`, has phase `π·(m·sin(el) + n·cos(el)·sin(az))`.
pub fn steering_vector(array: (usize, usize), azimuth: f64, elevation: f64) -> Vec<Complex64> {
    let (rows, cols) = array;
    let row_step = PI * elevation.sin();
    let col_step = PI * elevation.cos() * azimuth.sin();
    let mut out = Vec::with_capacity(rows * cols);
    for m in 0..rows {
        for n in 0..cols {
            out.push(Complex64::cis(m as f64 * row_step + n as f64 * col_step));
        }
    }
    out
}

/// `H[a,k] = Σ_p g_p · s(az_p, el_p)[a] · exp(−j·2π·k·Δf·τ_p)` over baseband
/// subcarrier indices `k = 0..K`.
pub fn synthesize_csi(paths: &PathSet, params: &ScenarioParams) -> CsiMatrix {
    let a_count = params.num_antennas();
    let k_count = params.num_subcarriers;
    let df = params.subcarrier_spacing_hz();
    let mut h = CsiMatrix::zeros(a_count, k_count);
    let mut freq = vec![Complex64::new(0.0, 0.0); k_count];
    for path in &paths.paths {
        let steer = steering_vector(params.bs_array, path.azimuth, path.elevation);
        for (k, f) in freq.iter_mut().enumerate() {
            *f = Complex64::cis(-2.0 * PI * k as f64 * df * path.delay);
        }
        for (a, s) in steer.iter().enumerate() {
            let gs = path.gain * s;
            let row = a * k_count;
            for (k, f) in freq.iter().enumerate() {
                let v = gs * f;
                h.re[row + k] += v.re;
                h.im[row + k] += v.im;
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::channelgen::paths::{draw_paths, sample_geometry, Path};
    use crate::channelgen::ScenarioKind;

    /// Element-by-element evaluation straight from the channel definition.
    fn brute_force(paths: &PathSet, params: &ScenarioParams) -> CsiMatrix {
        let (rows, cols) = params.bs_array;
        let df = params.subcarrier_spacing_hz();
        let mut h = CsiMatrix::zeros(rows * cols, params.num_subcarriers);
        for m in 0..rows {
            for n in 0..cols {
                for k in 0..params.num_subcarriers {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for p in &paths.paths {
                        let spatial = PI
                            * (m as f64 * p.elevation.sin()
                                + n as f64 * p.elevation.cos() * p.azimuth.sin());
                        let spectral = -2.0 * PI * k as f64 * df * p.delay;
                        acc += p.gain * Complex64::new(0.0, spatial).exp() * Complex64::new(0.0, spectral).exp();
                    }
                    h.set(m * cols + n, k, acc);
                }
            }
        }
        h
    }

    #[test]
    fn broadside_is_all_ones() {
        let s = steering_vector((4, 4), 0.0, 0.0);
        assert!(s.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_entries_have_unit_modulus() {
        for (az, el) in [(0.3, -0.2), (2.0, 1.1), (-1.4, 0.7)] {
            let s = steering_vector((8, 8), az, el);
            assert!(s.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn vertical_pair_at_zenith_alternates_sign() {
        let s = steering_vector((2, 1), 0.0, PI / 2.0);
        assert!((s[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((s[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn broadside_los_path_gives_all_ones() {
        let params = ScenarioParams::desk(ScenarioKind::UMi, 3.5);
        let paths = PathSet {
            paths: vec![Path {
                gain: Complex64::new(1.0, 0.0),
                delay: 0.0,
                azimuth: 0.0,
                elevation: 0.0,
            }],
            los: true,
        };
        let h = synthesize_csi(&paths, &params);
        assert!(h.re.iter().all(|&v| v == 1.0) && h.im.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_symbol_delay_sweeps_one_turn() {
        let params = ScenarioParams::desk(ScenarioKind::UMi, 3.5);
        let k = params.num_subcarriers;
        let tau = 1.0 / (k as f64 * params.subcarrier_spacing_hz());
        let paths = PathSet {
            paths: vec![Path {
                gain: Complex64::new(1.0, 0.0),
                delay: tau,
                azimuth: 0.0,
                elevation: 0.0,
            }],
            los: true,
        };
        let h = synthesize_csi(&paths, &params);
        // Phase at subcarrier k is −2πk/K: a quarter turn at K/4, half at K/2.
        assert!((h.get(0, k / 4) - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((h.get(0, k / 2) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        for kk in 0..k {
            let expected = -2.0 * PI * kk as f64 / k as f64;
            assert!((h.get(3, kk) - Complex64::cis(expected)).norm() < 1e-12);
        }
    }

    #[test]
    fn synthesis_matches_brute_force() {
        for (seed, kind) in [(1, ScenarioKind::UMi), (2, ScenarioKind::UMa), (3, ScenarioKind::RMa)] {
            let params = ScenarioParams::desk(kind, 2.4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ue, los) = sample_geometry(&params, &mut rng);
            let paths = draw_paths(&params, ue, los, &mut rng);
            let fast = synthesize_csi(&paths, &params);
            let slow = brute_force(&paths, &params);
            for (x, y) in fast.re.iter().chain(&fast.im).zip(slow.re.iter().chain(&slow.im)) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(fast.is_finite() && fast.energy() > 0.0);
        }
    }
}
