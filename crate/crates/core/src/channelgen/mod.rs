//! Synthetic CSI over a simplified geometric multipath model.
//!
//! Every sample is drawn from its own generator seeded by
//! [`sample_seed`]`(global_seed, index)`, so a dataset is identical no matter
//! how many workers produce it or in which order.

mod format;
mod paths;
mod scenario;
mod synth;

use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use format::{decode_dataset, encode_dataset, load_dataset, write_dataset, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};
pub use paths::{
    annulus_mean_radius, distance_3d, draw_paths, sample_geometry, Path as PropagationPath, PathSet,
    LOS_POWER_FRACTION, NLOS_ELEVATION_RANGE, SPEED_OF_LIGHT,
};
pub use scenario::{
    ScenarioKind, ScenarioParams, CARRIERS_GHZ, GUARD_RADIUS, SUBCARRIER_SPACINGS_KHZ, UE_VELOCITY_RANGE,
};
pub use synth::{steering_vector, synthesize_csi, CsiMatrix};

use crate::error::Result;

/// One channel snapshot with its metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiSample {
    pub h: CsiMatrix,
    pub scenario: String,
    pub carrier_ghz: f64,
    pub subcarrier_spacing_khz: f64,
    /// Metres, BS-centred frame.
    pub ue_position: [f64; 2],
    pub los: bool,
    pub seed: u64,
}

impl CsiSample {
    /// The sample as it reads back from a dataset file.
    pub fn quantized(&self) -> Self {
        let q = |v: f64| f64::from(v as f32);
        CsiSample {
            h: self.h.quantized(),
            scenario: self.scenario.clone(),
            carrier_ghz: q(self.carrier_ghz),
            subcarrier_spacing_khz: q(self.subcarrier_spacing_khz),
            ue_position: [q(self.ue_position[0]), q(self.ue_position[1])],
            los: self.los,
            seed: self.seed,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample seed derived from the dataset seed and the sample index.
pub fn sample_seed(global_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(global_seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn generate_sample(params: &ScenarioParams, global_seed: u64, index: u64) -> CsiSample {
    let seed = sample_seed(global_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ue_position, los) = sample_geometry(params, &mut rng);
    let paths = draw_paths(params, ue_position, los, &mut rng);
    CsiSample {
        h: synthesize_csi(&paths, params),
        scenario: params.label(),
        carrier_ghz: params.carrier_ghz,
        subcarrier_spacing_khz: params.subcarrier_spacing_khz,
        ue_position,
        los,
        seed,
    }
}

/// Generates the samples with indices in `range`, splitting the work over
/// `workers` threads. Output order is index order regardless of `workers`.
pub fn generate_samples(params: &ScenarioParams, global_seed: u64, range: Range<u64>, workers: usize) -> Vec<CsiSample> {
    let n = (range.end.saturating_sub(range.start)) as usize;
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return range.map(|i| generate_sample(params, global_seed, i)).collect();
    }
    let chunk = n.div_ceil(workers) as u64;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers as u64)
            .map(|w| {
                let lo = (range.start + w * chunk).min(range.end);
                let hi = (lo + chunk).min(range.end);
                scope.spawn(move || (lo..hi).map(|i| generate_sample(params, global_seed, i)).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generation worker panicked"))
            .collect()
    })
}

/// Generates `count` samples and writes them to `output`.
pub fn generate_dataset(
    params: &ScenarioParams,
    global_seed: u64,
    count: u64,
    output: &Path,
    workers: usize,
) -> Result<DatasetHeader> {
    params.validate()?;
    let samples = generate_samples(params, global_seed, 0..count, workers);
    let header = DatasetHeader {
        version: DATASET_VERSION,
        count,
        antennas: params.num_antennas() as u32,
        subcarriers: params.num_subcarriers as u32,
        scenario: params.label(),
        global_seed,
    };
    write_dataset(output, &header, &samples)?;
    Ok(header)
}
