use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mask::{random_mask, MaskPlan};
use super::net::{masked_mse, CsiMae};
use crate::channelgen::sample_seed;
use crate::error::{Error, Result};
use crate::metrics::{dataset_nmse, nmse_slices};
use crate::numerics::{adam_step, AdamConfig, Graph, OptimizerState, Tensor};

/// One optimizer step on a batch of patchified samples, each with a fresh
/// random mask. Returns the batch-mean loss.
pub fn pretrain_step<R: Rng + ?Sized>(
    model: &mut CsiMae,
    batch: &[&Tensor],
    rng: &mut R,
    state: &mut OptimizerState,
    adam: &AdamConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("pretraining batch is empty"));
    }
    let p = model.grid().num_patches();
    let ratio = model.config().mask_ratio;
    let scale = 1.0 / batch.len() as f64;
    model.store_mut().zero_grad();
    let mut total = 0.0;
    for patches in batch {
        let plan = random_mask(p, ratio, rng)?;
        let (loss, grads) = {
            let mut g = Graph::new(model.store());
            let latent = model.encode(&mut g, patches, &plan)?;
            let pred = model.decode(&mut g, latent, &plan)?;
            let loss = masked_mse(&mut g, pred, patches, &plan)?;
            (g.value(loss).data()[0], g.backward(loss)?)
        };
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite pretraining loss {loss}")));
        }
        total += loss;
        model.store_mut().accumulate(&grads, scale);
    }
    adam_step(model.store_mut(), state, adam)?;
    Ok(total * scale)
}

/// Fixed mask for held-out sample `index` under `seed`.
pub fn eval_mask(num_patches: usize, ratio: f64, seed: u64, index: usize) -> Result<MaskPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, index as u64));
    random_mask(num_patches, ratio, &mut rng)
}

/// Per-sample NMSE restricted to the masked patches, averaged linearly.
/// Returns `(linear, dB)`.
pub fn masked_region_nmse(model: &CsiMae, samples: &[Tensor], mask_seed: u64) -> Result<(f64, f64)> {
    let p = model.grid().num_patches();
    let mut per_sample = Vec::with_capacity(samples.len());
    for (i, patches) in samples.iter().enumerate() {
        let plan = eval_mask(p, model.config().mask_ratio, mask_seed, i)?;
        let pred = model.reconstruct(patches, &plan)?;
        let (mut truth, mut est) = (Vec::new(), Vec::new());
        for &m in &plan.masked {
            truth.extend_from_slice(patches.row(m));
            est.extend_from_slice(pred.row(m));
        }
        per_sample.push(nmse_slices(&truth, &est)?);
    }
    dataset_nmse(&per_sample)
}

#[derive(Clone, Debug)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Held-out evaluation every this many steps; 0 evaluates only at the
    /// start and the end.
    pub eval_every: usize,
    pub eval_mask_seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 300,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 0,
            eval_mask_seed: 0x5EED,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub nmse_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainHistory {
    pub losses: Vec<f64>,
    /// Held-out masked-region NMSE; the first entry is the initialized
    /// model (step 0), the last the trained one.
    pub evals: Vec<EvalPoint>,
    pub wall_clock_s: f64,
}

impl PretrainHistory {
    pub fn initial_db(&self) -> Option<f64> {
        self.evals.first().map(|e| e.nmse_db)
    }

    pub fn final_db(&self) -> Option<f64> {
        self.evals.last().map(|e| e.nmse_db)
    }
}

/// Runs `cfg.steps` pretraining steps with batches drawn uniformly (with
/// replacement) from `train`.
pub fn pretrain(model: &mut CsiMae, train: &[Tensor], heldout: &[Tensor], cfg: &PretrainConfig) -> Result<PretrainHistory> {
    if cfg.steps > 0 && (train.is_empty() || cfg.batch_size == 0) {
        return Err(Error::Config("pretraining needs training samples and a positive batch size".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(model.store());
    let mut history = PretrainHistory {
        losses: Vec::with_capacity(cfg.steps),
        evals: Vec::new(),
        wall_clock_s: 0.0,
    };
    let evaluate = |model: &CsiMae, step: usize, history: &mut PretrainHistory| -> Result<()> {
        if !heldout.is_empty() {
            let (_, db) = masked_region_nmse(model, heldout, cfg.eval_mask_seed)?;
            log::info!("pretrain step {step}: held-out masked NMSE {db:.3} dB");
            history.evals.push(EvalPoint { step, nmse_db: db });
        }
        Ok(())
    };
    evaluate(model, 0, &mut history)?;
    for step in 1..=cfg.steps {
        let batch: Vec<&Tensor> = (0..cfg.batch_size).map(|_| &train[rng.random_range(0..train.len())]).collect();
        let loss = pretrain_step(model, &batch, &mut rng, &mut state, &cfg.adam)?;
        history.losses.push(loss);
        if step % 25 == 0 {
            log::debug!("pretrain step {step}: loss {loss:.6}");
        }
        if (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps {
            evaluate(model, step, &mut history)?;
        }
    }
    history.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(history)
}
