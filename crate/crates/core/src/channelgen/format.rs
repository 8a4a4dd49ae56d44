//! Binary dataset files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "CSID" | version u32 | count u64 | A u32 | K u32 | name_len u32 | name utf-8 | global_seed u64
//! per sample:
//!   seed u64 | ue_x f32 | ue_y f32 | los u8 | carrier_ghz f32 | scs_khz f32
//!   real plane A·K f32 (row-major over antenna, subcarrier)
//!   imag plane A·K f32
//! ```

use std::fs;
use std::path::Path;

use super::synth::CsiMatrix;
use super::CsiSample;
use crate::binio::{put_string, write_file, Reader};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CSID";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub count: u64,
    pub antennas: u32,
    pub subcarriers: u32,
    pub scenario: String,
    pub global_seed: u64,
}

impl DatasetHeader {
    fn sample_bytes(&self) -> usize {
        8 + 4 + 4 + 1 + 4 + 4 + 2 * 4 * self.antennas as usize * self.subcarriers as usize
    }
}

pub fn encode_dataset(header: &DatasetHeader, samples: &[CsiSample]) -> Result<Vec<u8>> {
    if header.count != samples.len() as u64 {
        return Err(Error::contract(format!(
            "header declares {} samples but {} were supplied",
            header.count,
            samples.len()
        )));
    }
    let mut out = Vec::with_capacity(64 + samples.len() * header.sample_bytes());
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&header.count.to_le_bytes());
    out.extend_from_slice(&header.antennas.to_le_bytes());
    out.extend_from_slice(&header.subcarriers.to_le_bytes());
    put_string(&mut out, &header.scenario);
    out.extend_from_slice(&header.global_seed.to_le_bytes());
    for s in samples {
        if s.h.antennas != header.antennas as usize || s.h.subcarriers != header.subcarriers as usize {
            return Err(Error::shape(format!(
                "sample is {}×{}, header says {}×{}",
                s.h.antennas, s.h.subcarriers, header.antennas, header.subcarriers
            )));
        }
        out.extend_from_slice(&s.seed.to_le_bytes());
        out.extend_from_slice(&(s.ue_position[0] as f32).to_le_bytes());
        out.extend_from_slice(&(s.ue_position[1] as f32).to_le_bytes());
        out.push(u8::from(s.los));
        out.extend_from_slice(&(s.carrier_ghz as f32).to_le_bytes());
        out.extend_from_slice(&(s.subcarrier_spacing_khz as f32).to_le_bytes());
        for v in s.h.re.iter().chain(&s.h.im) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[CsiSample]) -> Result<()> {
    write_file(path, &encode_dataset(header, samples)?)
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<CsiSample>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(path, &bytes)
}

pub fn decode_dataset(path: &Path, bytes: &[u8]) -> Result<(DatasetHeader, Vec<CsiSample>)> {
    let mut r = Reader::new(path, bytes);
    r.header(DATASET_MAGIC, DATASET_VERSION)?;
    let version = DATASET_VERSION;
    let count = r.u64("count")?;
    let antennas = r.u32("antenna count")?;
    let subcarriers = r.u32("subcarrier count")?;
    let scenario = r.string("scenario name")?;
    let global_seed = r.u64("global seed")?;
    let header = DatasetHeader {
        version,
        count,
        antennas,
        subcarriers,
        scenario,
        global_seed,
    };

    let per = header.sample_bytes();
    let payload = r.remaining();
    if !payload.is_multiple_of(per) {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("payload of {payload} bytes is not a whole number of {per}-byte samples"),
        });
    }
    if (payload / per) as u64 != count {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("header declares {count} samples, payload holds {}", payload / per),
        });
    }

    let plane = antennas as usize * subcarriers as usize;
    let mut samples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let seed = r.u64("sample seed")?;
        let ue_position = [r.f32("ue_x")?, r.f32("ue_y")?];
        let los = r.take(1, "los flag")?[0] != 0;
        let carrier_ghz = r.f32("carrier")?;
        let subcarrier_spacing_khz = r.f32("subcarrier spacing")?;
        let mut h = CsiMatrix::zeros(antennas as usize, subcarriers as usize);
        for i in 0..plane {
            h.re[i] = r.f32("real plane")?;
        }
        for i in 0..plane {
            h.im[i] = r.f32("imaginary plane")?;
        }
        samples.push(CsiSample {
            h,
            scenario: header.scenario.clone(),
            carrier_ghz,
            subcarrier_spacing_khz,
            ue_position,
            los,
            seed,
        });
    }
    Ok((header, samples))
}
