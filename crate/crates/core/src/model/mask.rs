use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::PatchGrid;
use crate::error::{Error, Result};

/// Split of the patch indices into visible and masked sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPlan {
    pub permutation: Vec<usize>,
    pub num_masked: usize,
    /// Ascending.
    pub visible: Vec<usize>,
    /// Ascending.
    pub masked: Vec<usize>,
}

impl MaskPlan {
    /// The first `P − num_masked` entries of `permutation` are visible.
    pub fn from_permutation(permutation: Vec<usize>, num_masked: usize) -> Result<Self> {
        let p = permutation.len();
        if num_masked > p {
            return Err(Error::contract(format!("cannot mask {num_masked} of {p} patches")));
        }
        let mut seen = vec![false; p];
        for &i in &permutation {
            if i >= p || std::mem::replace(&mut seen[i], true) {
                return Err(Error::contract(format!("{permutation:?} is not a permutation of 0..{p}")));
            }
        }
        let mut visible = permutation[..p - num_masked].to_vec();
        let mut masked = permutation[p - num_masked..].to_vec();
        visible.sort_unstable();
        masked.sort_unstable();
        Ok(MaskPlan {
            permutation,
            num_masked,
            visible,
            masked,
        })
    }

    /// Every patch visible.
    pub fn none(num_patches: usize) -> Self {
        MaskPlan {
            permutation: (0..num_patches).collect(),
            num_masked: 0,
            visible: (0..num_patches).collect(),
            masked: Vec::new(),
        }
    }

    fn from_mask_flags(flags: &[bool]) -> Self {
        let visible: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
        let masked: Vec<usize> = (0..flags.len()).filter(|&i| flags[i]).collect();
        MaskPlan {
            permutation: visible.iter().chain(&masked).copied().collect(),
            num_masked: masked.len(),
            visible,
            masked,
        }
    }

    pub fn num_patches(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.masked.binary_search(&index).is_ok()
    }
}

/// `round(ratio · P)` with halves rounded up.
pub fn masked_count(num_patches: usize, ratio: f64) -> usize {
    ((ratio * num_patches as f64 + 0.5).floor() as usize).min(num_patches)
}

pub fn random_mask<R: Rng + ?Sized>(num_patches: usize, ratio: f64, rng: &mut R) -> Result<MaskPlan> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::contract(format!("mask ratio {ratio} outside [0, 1)")));
    }
    let mut permutation: Vec<usize> = (0..num_patches).collect();
    permutation.shuffle(rng);
    MaskPlan::from_permutation(permutation, masked_count(num_patches, ratio))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskDomain {
    Antenna,
    Subcarrier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPattern {
    Interleaved,
    Contiguous,
}

impl MaskDomain {
    /// Interleaved for antennas, contiguous for subcarriers.
    pub fn default_pattern(self) -> MaskPattern {
        match self {
            MaskDomain::Antenna => MaskPattern::Interleaved,
            MaskDomain::Subcarrier => MaskPattern::Contiguous,
        }
    }
}

impl fmt::Display for MaskDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskDomain::Antenna => "antenna",
            MaskDomain::Subcarrier => "subcarrier",
        })
    }
}

impl FromStr for MaskDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "antenna" => Ok(MaskDomain::Antenna),
            "subcarrier" => Ok(MaskDomain::Subcarrier),
            _ => Err(Error::Config(format!("unknown mask domain {s:?} (antenna|subcarrier)"))),
        }
    }
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskPattern::Interleaved => "interleaved",
            MaskPattern::Contiguous => "contiguous",
        })
    }
}

impl FromStr for MaskPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interleaved" => Ok(MaskPattern::Interleaved),
            "contiguous" => Ok(MaskPattern::Contiguous),
            _ => Err(Error::Config(format!("unknown mask pattern {s:?} (interleaved|contiguous)"))),
        }
    }
}

/// Masks half of the grid rows (antenna domain) or columns (subcarrier
/// domain): the odd indices when interleaved, the upper half when contiguous.
pub fn structured_mask(grid: &PatchGrid, domain: MaskDomain, pattern: MaskPattern) -> Result<MaskPlan> {
    let len = match domain {
        MaskDomain::Antenna => grid.grid_rows,
        MaskDomain::Subcarrier => grid.grid_cols,
    };
    if len % 2 != 0 {
        return Err(Error::contract(format!(
            "{domain} axis has {len} patch positions; structured masking needs an even count"
        )));
    }
    let hidden = |i: usize| match pattern {
        MaskPattern::Interleaved => i % 2 == 1,
        MaskPattern::Contiguous => i >= len / 2,
    };
    let flags: Vec<bool> = (0..grid.num_patches())
        .map(|p| match domain {
            MaskDomain::Antenna => hidden(p / grid.grid_cols),
            MaskDomain::Subcarrier => hidden(p % grid.grid_cols),
        })
        .collect();
    Ok(MaskPlan::from_mask_flags(&flags))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn grid48() -> PatchGrid {
        PatchGrid {
            grid_rows: 4,
            grid_cols: 8,
            patch_rows: 4,
            patch_cols: 8,
        }
    }

    fn assert_partition(plan: &MaskPlan) {
        let mut all: Vec<_> = plan.visible.iter().chain(&plan.masked).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..plan.num_patches()).collect::<Vec<_>>());
        assert_eq!(plan.masked.len(), plan.num_masked);
    }

    #[test]
    fn default_ratio_on_32_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = random_mask(32, 0.75, &mut rng).unwrap();
        assert_eq!((plan.masked.len(), plan.visible.len()), (24, 8));
        assert_partition(&plan);
    }

    #[test]
    fn zero_ratio_masks_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = random_mask(10, 0.0, &mut rng).unwrap();
        assert!(plan.masked.is_empty());
        assert_eq!(plan.visible, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(masked_count(10, 0.25), 3);
        assert_eq!(masked_count(10, 0.35), 4);
        assert_eq!(masked_count(32, 0.75), 24);
        assert_eq!(masked_count(3, 0.5), 2);
    }

    #[test]
    fn masking_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = [0usize; 8];
        let draws = 100_000;
        for _ in 0..draws {
            for &i in &random_mask(8, 0.75, &mut rng).unwrap().masked {
                hits[i] += 1;
            }
        }
        for h in hits {
            let freq = h as f64 / draws as f64;
            assert!((freq - 0.75).abs() < 0.01, "{freq}");
        }
    }

    #[test]
    fn antenna_interleaved_masks_odd_rows() {
        let plan = structured_mask(&grid48(), MaskDomain::Antenna, MaskPattern::Interleaved).unwrap();
        let expected: Vec<usize> = (8..16).chain(24..32).collect();
        assert_eq!(plan.masked, expected);
        assert_eq!(plan.num_masked, 16);
        assert_partition(&plan);
    }

    #[test]
    fn subcarrier_contiguous_masks_upper_columns() {
        let plan = structured_mask(&grid48(), MaskDomain::Subcarrier, MaskPattern::Contiguous).unwrap();
        assert!(plan.masked.iter().all(|p| p % 8 >= 4));
        assert_eq!(plan.masked.len(), 16);
        assert_partition(&plan);
    }

    #[test]
    fn odd_axis_is_rejected() {
        let g = PatchGrid {
            grid_rows: 3,
            ..grid48()
        };
        assert!(matches!(
            structured_mask(&g, MaskDomain::Antenna, MaskPattern::Contiguous),
            Err(Error::Contract(_))
        ));
        assert!(structured_mask(&g, MaskDomain::Subcarrier, MaskPattern::Contiguous).is_ok());
    }

    #[test]
    fn bad_permutation_is_rejected() {
        assert!(MaskPlan::from_permutation(vec![0, 0, 1], 1).is_err());
        assert!(MaskPlan::from_permutation(vec![0, 1, 2], 4).is_err());
    }

    proptest! {
        #[test]
        fn random_plans_partition(p in 2usize..64, ratio in 0.0f64..0.99, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = random_mask(p, ratio, &mut rng).unwrap();
            assert_partition(&plan);
            prop_assert_eq!(plan.num_masked, masked_count(p, ratio));
        }

        #[test]
        fn structured_plans_partition(rows in 1usize..5, cols in 1usize..5, antenna in any::<bool>(), inter in any::<bool>()) {
            let g = PatchGrid { grid_rows: 2 * rows, grid_cols: 2 * cols, patch_rows: 1, patch_cols: 1 };
            let domain = if antenna { MaskDomain::Antenna } else { MaskDomain::Subcarrier };
            let pattern = if inter { MaskPattern::Interleaved } else { MaskPattern::Contiguous };
            let plan = structured_mask(&g, domain, pattern).unwrap();
            assert_partition(&plan);
            prop_assert_eq!(plan.num_masked * 2, g.num_patches());
        }
    }
}
