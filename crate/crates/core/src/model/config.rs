use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub antennas: usize,
    pub subcarriers: usize,
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub embed_dim: usize,
    pub encoder_depth: usize,
    pub encoder_heads: usize,
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub mlp_ratio: usize,
    pub mask_ratio: f64,
}

impl Default for ModelConfig {
    /// Desk-scale default: 16×64 input in 4×8 patches (32 patches), a
    /// 4-block 64-wide encoder and a 2-block 32-wide decoder.
    fn default() -> Self {
        ModelConfig {
            antennas: 16,
            subcarriers: 64,
            patch_rows: 4,
            patch_cols: 8,
            embed_dim: 64,
            encoder_depth: 4,
            encoder_heads: 4,
            decoder_dim: 32,
            decoder_depth: 2,
            decoder_heads: 4,
            mlp_ratio: 4,
            mask_ratio: 0.75,
        }
    }
}

/// Layout of the patch grid derived from a [`ModelConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch_rows: usize,
    pub patch_cols: usize,
}

impl PatchGrid {
    pub fn num_patches(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Real block followed by imaginary block.
    pub fn patch_dim(&self) -> usize {
        2 * self.patch_rows * self.patch_cols
    }
}

const KEYS: [&str; 12] = [
    "antennas",
    "subcarriers",
    "patch_rows",
    "patch_cols",
    "embed_dim",
    "encoder_depth",
    "encoder_heads",
    "decoder_dim",
    "decoder_depth",
    "decoder_heads",
    "mlp_ratio",
    "mask_ratio",
];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.patch_rows == 0 || !self.antennas.is_multiple_of(self.patch_rows) {
            bad.push(format!("patch_rows={} must divide antennas={}", self.patch_rows, self.antennas));
        }
        if self.patch_cols == 0 || !self.subcarriers.is_multiple_of(self.patch_cols) {
            bad.push(format!("patch_cols={} must divide subcarriers={}", self.patch_cols, self.subcarriers));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(4) {
            bad.push(format!("embed_dim={} must be a positive multiple of 4", self.embed_dim));
        }
        if self.encoder_heads == 0 || !self.embed_dim.is_multiple_of(self.encoder_heads) {
            bad.push(format!("encoder_heads={} must divide embed_dim={}", self.encoder_heads, self.embed_dim));
        }
        if self.decoder_dim == 0 || !self.decoder_dim.is_multiple_of(4) {
            bad.push(format!("decoder_dim={} must be a positive multiple of 4", self.decoder_dim));
        }
        if self.decoder_heads == 0 || !self.decoder_dim.is_multiple_of(self.decoder_heads) {
            bad.push(format!("decoder_heads={} must divide decoder_dim={}", self.decoder_heads, self.decoder_dim));
        }
        if self.mlp_ratio == 0 {
            bad.push("mlp_ratio=0".into());
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            bad.push(format!("mask_ratio={} must lie in [0, 1)", self.mask_ratio));
        }
        if bad.is_empty() && self.grid().num_patches() < 2 {
            bad.push("patch grid must hold at least 2 patches".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid model keys: {}", bad.join("; "))))
        }
    }

    pub fn grid(&self) -> PatchGrid {
        PatchGrid {
            grid_rows: self.antennas / self.patch_rows.max(1),
            grid_cols: self.subcarriers / self.patch_cols.max(1),
            patch_rows: self.patch_rows,
            patch_cols: self.patch_cols,
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let values = [
            self.antennas.to_string(),
            self.subcarriers.to_string(),
            self.patch_rows.to_string(),
            self.patch_cols.to_string(),
            self.embed_dim.to_string(),
            self.encoder_depth.to_string(),
            self.encoder_heads.to_string(),
            self.decoder_dim.to_string(),
            self.decoder_depth.to_string(),
            self.decoder_heads.to_string(),
            self.mlp_ratio.to_string(),
            self.mask_ratio.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// `key=value` lines in a fixed key order.
    pub fn to_text(&self) -> String {
        let map = self.to_map();
        KEYS.iter().map(|k| format!("{k}={}\n", map[*k])).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("model config line {line:?} has no '='")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let unknown: Vec<_> = map.keys().filter(|k| !KEYS.contains(&k.as_str())).cloned().collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown model keys: {}", unknown.join(", "))));
        }
        let get = |k: &str| -> Result<&String> {
            map.get(k).ok_or_else(|| Error::Config(format!("missing model key {k}")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("model key {k} is not a non-negative integer")))
        };
        let cfg = ModelConfig {
            antennas: int("antennas")?,
            subcarriers: int("subcarriers")?,
            patch_rows: int("patch_rows")?,
            patch_cols: int("patch_cols")?,
            embed_dim: int("embed_dim")?,
            encoder_depth: int("encoder_depth")?,
            encoder_heads: int("encoder_heads")?,
            decoder_dim: int("decoder_dim")?,
            decoder_depth: int("decoder_depth")?,
            decoder_heads: int("decoder_heads")?,
            mlp_ratio: int("mlp_ratio")?,
            mask_ratio: get("mask_ratio")?
                .parse()
                .map_err(|_| Error::Config("model key mask_ratio is not a number".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        let g = cfg.grid();
        assert_eq!((g.grid_rows, g.grid_cols, g.num_patches(), g.patch_dim()), (4, 8, 32, 64));
    }

    #[test]
    fn text_round_trip() {
        let cfg = ModelConfig {
            mask_ratio: 0.6,
            ..ModelConfig::default()
        };
        assert_eq!(ModelConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ModelConfig { patch_rows: 3, ..Default::default() },
            ModelConfig { embed_dim: 66, ..Default::default() },
            ModelConfig { encoder_heads: 5, ..Default::default() },
            ModelConfig { mask_ratio: 1.0, ..Default::default() },
            ModelConfig { antennas: 4, subcarriers: 8, patch_rows: 4, patch_cols: 8, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
