use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Carrier frequencies (GHz) of the reference simulation campaign.
pub const CARRIERS_GHZ: [f64; 5] = [0.7, 2.4, 3.5, 4.9, 5.0];
/// Subcarrier spacings (kHz) of the reference simulation campaign.
pub const SUBCARRIER_SPACINGS_KHZ: [f64; 3] = [15.0, 30.0, 60.0];
/// UE velocity interval in m/s. Stored as metadata only.
pub const UE_VELOCITY_RANGE: (f64, f64) = (0.0, 27.78);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    UMi,
    UMa,
    RMa,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::UMi => "UMi",
            ScenarioKind::UMa => "UMa",
            ScenarioKind::RMa => "RMa",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "UMi" => Ok(ScenarioKind::UMi),
            "UMa" => Ok(ScenarioKind::UMa),
            "RMa" => Ok(ScenarioKind::RMa),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?} (expected UMi, UMa or RMa)"
            ))),
        }
    }
}

/// Propagation environment and array geometry for one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub kind: ScenarioKind,
    pub carrier_ghz: f64,
    pub subcarrier_spacing_khz: f64,
    pub num_subcarriers: usize,
    /// Uniform planar array as `(rows, cols)`; antenna `a = row·cols + col`.
    pub bs_array: (usize, usize),
    pub bs_height: f64,
    pub ue_height: f64,
    pub cell_radius: f64,
    /// Zero is allowed only together with `los_probability = 1`.
    pub num_nlos_paths: usize,
    /// Mean NLOS excess delay, seconds.
    pub delay_spread: f64,
    pub los_probability: f64,
    pub ue_velocity_range: (f64, f64),
    /// Angular width (radians) of the UE drop region, centred on the array
    /// broadside. Must not exceed π: the planar array cannot tell a UE from
    /// its mirror image behind the array plane.
    pub sector_width: f64,
}

/// UE drops never fall inside this radius around the BS.
pub const GUARD_RADIUS: f64 = 10.0;

impl ScenarioParams {
    /// Desk-scale defaults: 4×4 array, 64 subcarriers at 30 kHz.
    pub fn desk(kind: ScenarioKind, carrier_ghz: f64) -> Self {
        let (bs_height, cell_radius, num_nlos_paths, delay_spread, los_probability) = match kind {
            ScenarioKind::UMi => (10.0, 100.0, 10, 100e-9, 0.5),
            ScenarioKind::UMa => (25.0, 200.0, 12, 300e-9, 0.3),
            ScenarioKind::RMa => (35.0, 400.0, 6, 50e-9, 0.7),
        };
        ScenarioParams {
            kind,
            carrier_ghz,
            subcarrier_spacing_khz: 30.0,
            num_subcarriers: 64,
            bs_array: (4, 4),
            bs_height,
            ue_height: 1.5,
            cell_radius,
            num_nlos_paths,
            delay_spread,
            los_probability,
            ue_velocity_range: UE_VELOCITY_RANGE,
            sector_width: std::f64::consts::PI,
        }
    }

    /// Reference-campaign dimensions: 8×8 array, 256 subcarriers.
    pub fn campaign_scale(kind: ScenarioKind, carrier_ghz: f64) -> Self {
        ScenarioParams {
            num_subcarriers: 256,
            bs_array: (8, 8),
            ..Self::desk(kind, carrier_ghz)
        }
    }

    /// Parses labels such as `RMa-2.4` into desk-scale parameters.
    pub fn from_label(label: &str) -> Result<Self> {
        let (kind, fc) = label
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("scenario label {label:?} is not of the form <UMi|UMa|RMa>-<GHz>")))?;
        let fc: f64 = fc
            .parse()
            .map_err(|_| Error::Config(format!("bad carrier frequency in scenario label {label:?}")))?;
        Ok(Self::desk(kind.parse()?, fc))
    }

    /// `RMa-2.4` style label.
    pub fn label(&self) -> String {
        format!("{}-{}", self.kind, self.carrier_ghz)
    }

    pub fn num_antennas(&self) -> usize {
        self.bs_array.0 * self.bs_array.1
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.subcarrier_spacing_khz * 1e3
    }

    /// Checks every field, reporting all offending keys at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !CARRIERS_GHZ.contains(&self.carrier_ghz) {
            bad.push(format!("carrier_ghz={} (allowed {CARRIERS_GHZ:?})", self.carrier_ghz));
        }
        if !SUBCARRIER_SPACINGS_KHZ.contains(&self.subcarrier_spacing_khz) {
            bad.push(format!(
                "subcarrier_spacing_khz={} (allowed {SUBCARRIER_SPACINGS_KHZ:?})",
                self.subcarrier_spacing_khz
            ));
        }
        if self.num_subcarriers == 0 {
            bad.push("num_subcarriers=0".into());
        }
        if self.bs_array.0 == 0 || self.bs_array.1 == 0 {
            bad.push(format!("bs_array={}x{}", self.bs_array.0, self.bs_array.1));
        }
        for (key, v) in [
            ("bs_height", self.bs_height),
            ("ue_height", self.ue_height),
            ("delay_spread", self.delay_spread),
            ("sector_width", self.sector_width),
        ] {
            if !positive(v) {
                bad.push(format!("{key}={v}"));
            }
        }
        if !self.cell_radius.is_finite() || self.cell_radius <= GUARD_RADIUS {
            bad.push(format!("cell_radius={} (must exceed the {GUARD_RADIUS} m guard)", self.cell_radius));
        }
        if self.bs_height <= self.ue_height {
            bad.push(format!("bs_height={} (must exceed ue_height)", self.bs_height));
        }
        if !(0.0..=1.0).contains(&self.los_probability) {
            bad.push(format!("los_probability={}", self.los_probability));
        }
        if self.num_nlos_paths == 0 && self.los_probability < 1.0 {
            bad.push("num_nlos_paths=0 (requires los_probability=1)".into());
        }
        if self.sector_width > std::f64::consts::PI {
            bad.push(format!("sector_width={} (at most π)", self.sector_width));
        }
        let (lo, hi) = self.ue_velocity_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            bad.push(format!("ue_velocity_range=[{lo}, {hi}]"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scenario keys: {}", bad.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for label in ["RMa-0.7", "RMa-2.4", "RMa-3.5", "UMa-4.9", "UMi-5"] {
            let p = ScenarioParams::from_label(label).unwrap();
            assert_eq!(p.label(), label);
            p.validate().unwrap();
        }
        assert!(ScenarioParams::from_label("XMa-2.4").is_err());
        assert!(ScenarioParams::from_label("RMa").is_err());
    }

    #[test]
    fn table_defaults() {
        let heights: Vec<f64> = [ScenarioKind::UMi, ScenarioKind::UMa, ScenarioKind::RMa]
            .iter()
            .map(|&k| ScenarioParams::campaign_scale(k, 3.5).bs_height)
            .collect();
        assert_eq!(heights, vec![10.0, 25.0, 35.0]);
        let p = ScenarioParams::campaign_scale(ScenarioKind::UMa, 3.5);
        assert_eq!((p.num_antennas(), p.num_subcarriers), (64, 256));
        assert_eq!(p.ue_height, 1.5);
    }

    #[test]
    fn validation_lists_every_offending_key() {
        let mut p = ScenarioParams::desk(ScenarioKind::UMi, 1.0);
        p.subcarrier_spacing_khz = 45.0;
        p.los_probability = 1.5;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("carrier_ghz"), "{msg}");
        assert!(msg.contains("subcarrier_spacing_khz"), "{msg}");
        assert!(msg.contains("los_probability"), "{msg}");
    }
}
