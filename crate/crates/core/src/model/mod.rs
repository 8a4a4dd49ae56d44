//! The masked-autoencoder: patching, positional tables, masking, the
//! encoder–decoder transformer, its objective and checkpoints.

mod checkpoint;
mod config;
mod mask;
mod net;
mod patch;
mod posemb;
mod pretrain;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, PatchGrid};
pub use mask::{masked_count, random_mask, structured_mask, MaskDomain, MaskPattern, MaskPlan};
pub use net::{masked_mse, trunc_normal, CsiMae, INIT_STD, LAYER_NORM_EPS};
pub use patch::{patchify, unpatchify};
pub use posemb::build_posemb;
pub use pretrain::{
    eval_mask, masked_region_nmse, pretrain, pretrain_step, EvalPoint, PretrainConfig, PretrainHistory,
};

use crate::channelgen::CsiSample;
use crate::error::Result;
use crate::numerics::Tensor;

pub fn patchify_all(samples: &[CsiSample], grid: &PatchGrid) -> Result<Vec<Tensor>> {
    samples.iter().map(|s| patchify(&s.h, grid)).collect()
}
