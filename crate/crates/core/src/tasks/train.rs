use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::heads::{extrapolate_with_plan, TaskHead, TaskModel, DEFAULT_CODE_LEN};
use super::{Regime, TaskKind};
use crate::channelgen::{sample_seed, CsiSample};
use crate::error::{Error, Result};
use crate::metrics::{cdf_table, dataset_nmse, nmse, position_errors, MetricsReport, PositioningStats, DEFAULT_QUANTILES};
use crate::model::{masked_mse, patchify_all, unpatchify, Checkpoint, CsiMae, MaskPattern, ModelConfig};
use crate::numerics::{adam_step, AdamConfig, Graph, OptimizerState, Tensor, Var};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Validation every this many steps; 0 validates only before and after.
    pub eval_every: usize,
    pub code_len: usize,
    /// `None` picks the task's default pattern.
    pub mask_pattern: Option<MaskPattern>,
    /// Learning-rate multiplier for the position head. `None` uses the
    /// standard deviation of the training coordinates in metres.
    pub head_lr_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 300,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 0,
            code_len: DEFAULT_CODE_LEN,
            mask_pattern: None,
            head_lr_scale: None,
        }
    }
}

/// Validation score at one step: NMSE in dB for reconstruction tasks,
/// RMSE in metres for positioning.
#[derive(Clone, Debug, PartialEq)]
pub struct ValPoint {
    pub step: usize,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub task: TaskKind,
    pub regime: Regime,
    pub losses: Vec<f64>,
    pub val: Vec<ValPoint>,
    pub seeds: BTreeMap<String, u64>,
    pub wall_clock_s: f64,
    pub encoder_checksum_before: String,
    pub encoder_checksum_after: String,
}

impl TrainHistory {
    pub fn final_val(&self) -> Option<f64> {
        self.val.last().map(|v| v.metric)
    }
}

/// Scores of a task model on a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub sample_count: usize,
    /// `(linear, dB)`, reconstruction tasks only.
    pub nmse: Option<(f64, f64)>,
    pub positioning: Option<PositioningStats>,
}

impl Evaluation {
    /// The number tracked during training (see [`ValPoint`]).
    pub fn headline(&self) -> f64 {
        match (&self.nmse, &self.positioning) {
            (Some((_, db)), _) => *db,
            (None, Some(p)) => p.rmse_m,
            (None, None) => f64::NAN,
        }
    }
}

fn check_dims(model: &CsiMae, samples: &[CsiSample]) -> Result<()> {
    let c = model.config();
    if let Some(s) = samples
        .iter()
        .find(|s| s.h.antennas != c.antennas || s.h.subcarriers != c.subcarriers)
    {
        return Err(Error::shape(format!(
            "sample of scenario {} is {}×{}, the model expects {}×{}",
            s.scenario, s.h.antennas, s.h.subcarriers, c.antennas, c.subcarriers
        )));
    }
    Ok(())
}

fn label_stats(samples: &[CsiSample]) -> ([f64; 2], f64) {
    let n = samples.len().max(1) as f64;
    let mut mean = [0.0; 2];
    for s in samples {
        mean[0] += s.ue_position[0] / n;
        mean[1] += s.ue_position[1] / n;
    }
    let var = samples
        .iter()
        .map(|s| ((s.ue_position[0] - mean[0]).powi(2) + (s.ue_position[1] - mean[1]).powi(2)) / 2.0)
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Training loss for one sample; `output` is what [`TaskModel::forward`]
/// returned.
fn task_loss(g: &mut Graph, tm: &TaskModel, output: Var, patches: &Tensor, sample: &CsiSample) -> Result<Var> {
    match &tm.head {
        TaskHead::Reconstruction { plan, .. } => masked_mse(g, output, patches, plan),
        TaskHead::Feedback(_) => {
            let target = g.constant(patches.clone());
            let diff = g.sub(output, target)?;
            let ss = g.sum_squares(diff);
            Ok(g.scale(ss, 1.0 / patches.numel() as f64))
        }
        TaskHead::Position(_) => {
            let target = g.constant(Tensor::new(vec![1, 2], sample.ue_position.to_vec())?);
            let diff = g.sub(output, target)?;
            let ss = g.sum_squares(diff);
            Ok(g.scale(ss, 0.5))
        }
    }
}

fn evaluate_patched(tm: &TaskModel, samples: &[CsiSample], patches: &[Tensor]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::contract("evaluation dataset is empty"));
    }
    let grid = tm.model.grid();
    match &tm.head {
        TaskHead::Reconstruction { plan, .. } => {
            let per_sample = samples
                .iter()
                .map(|s| Ok(nmse(&s.h, &extrapolate_with_plan(&tm.model, &s.h, plan)?)?.0))
                .collect::<Result<Vec<_>>>()?;
            Ok(Evaluation {
                sample_count: samples.len(),
                nmse: Some(dataset_nmse(&per_sample)?),
                positioning: None,
            })
        }
        TaskHead::Feedback(_) => {
            let mut per_sample = Vec::with_capacity(samples.len());
            for (s, p) in samples.iter().zip(patches) {
                let mut g = Graph::new(tm.model.store());
                let (out, _) = tm.forward(&mut g, p)?;
                per_sample.push(nmse(&s.h, &unpatchify(g.value(out), &grid)?)?.0);
            }
            Ok(Evaluation {
                sample_count: samples.len(),
                nmse: Some(dataset_nmse(&per_sample)?),
                positioning: None,
            })
        }
        TaskHead::Position(_) => {
            let mut preds = Vec::with_capacity(samples.len());
            for p in patches {
                let mut g = Graph::new(tm.model.store());
                let (out, _) = tm.forward(&mut g, p)?;
                let v = g.value(out).data();
                preds.push([v[0], v[1]]);
            }
            let truths: Vec<[f64; 2]> = samples.iter().map(|s| s.ue_position).collect();
            let errors = position_errors(&preds, &truths)?;
            Ok(Evaluation {
                sample_count: samples.len(),
                nmse: None,
                positioning: Some(cdf_table(&errors, &DEFAULT_QUANTILES)?),
            })
        }
    }
}

/// Extrapolation NMSE is over the full matrix with visible patches copied
/// from the input; feedback NMSE is over the full reconstruction.
pub fn evaluate(tm: &TaskModel, samples: &[CsiSample]) -> Result<Evaluation> {
    check_dims(&tm.model, samples)?;
    let patches = patchify_all(samples, &tm.model.grid())?;
    evaluate_patched(tm, samples, &patches)
}

/// Trains `task` under `regime`. Frozen and Finetune start from
/// `pretrained`, whose model configuration must equal `model_cfg`.
/// Under Frozen the reconstruction decoder is drawn afresh and the encoder
/// is verified bit-identical after training.
pub fn train_task(
    task: TaskKind,
    regime: Regime,
    pretrained: Option<&Checkpoint>,
    train: &[CsiSample],
    val: &[CsiSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(TaskModel, TrainHistory)> {
    let start = Instant::now();
    if cfg.steps > 0 && (train.is_empty() || cfg.batch_size == 0) {
        return Err(Error::Config("training needs samples and a positive batch size".into()));
    }
    // Separate streams so that the backbone source is the only difference
    // between a Supervised run and a Finetune run from an identically seeded
    // initialization.
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head_rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, 2));
    let model = match (regime.needs_checkpoint(), pretrained) {
        (false, None) => CsiMae::new(model_cfg.clone(), &mut init_rng)?,
        (false, Some(_)) => {
            return Err(Error::Config("the supervised regime trains from scratch; drop the checkpoint".into()))
        }
        (true, None) => return Err(Error::Config(format!("the {regime} regime needs a pretrained checkpoint"))),
        (true, Some(ck)) => {
            if &ck.config != model_cfg {
                return Err(Error::Config(
                    "the checkpoint's model configuration differs from the configured one".into(),
                ));
            }
            let mut m = ck.to_model()?;
            if regime == Regime::Frozen && task != TaskKind::Positioning {
                m.reinit_decoder(&mut init_rng)?;
            }
            m
        }
    };
    check_dims(&model, train)?;
    check_dims(&model, val)?;

    let (label_mean, label_std) = label_stats(train);
    let mut tm = TaskModel::attach(task, regime, model, cfg.mask_pattern, cfg.code_len, label_mean, &mut head_rng)?;
    tm.apply_regime();
    if let TaskHead::Position(head) = &tm.head {
        let scale = cfg.head_lr_scale.unwrap_or(label_std.max(1.0));
        for id in [head.weight, head.bias] {
            tm.model.store_mut().get_mut(id).lr_scale = scale;
        }
    }

    let encoder_ids = tm.model.encoder_param_ids();
    let checksum_before = tm.model.store().checksum(&encoder_ids);
    let grid = tm.model.grid();
    let train_patches = patchify_all(train, &grid)?;
    let val_patches = patchify_all(val, &grid)?;

    let mut history = TrainHistory {
        task,
        regime,
        losses: Vec::with_capacity(cfg.steps),
        val: Vec::new(),
        seeds: BTreeMap::from([("train".to_string(), cfg.seed)]),
        wall_clock_s: 0.0,
        encoder_checksum_before: checksum_before.clone(),
        encoder_checksum_after: String::new(),
    };
    let validate = |tm: &TaskModel, step: usize, history: &mut TrainHistory| -> Result<()> {
        if !val.is_empty() {
            let metric = evaluate_patched(tm, val, &val_patches)?.headline();
            log::info!("{task}/{regime} step {step}: validation {metric:.4}");
            history.val.push(ValPoint { step, metric });
        }
        Ok(())
    };
    validate(&tm, 0, &mut history)?;

    let mut state = OptimizerState::new(tm.model.store());
    let scale = 1.0 / cfg.batch_size.max(1) as f64;
    for step in 1..=cfg.steps {
        tm.model.store_mut().zero_grad();
        let mut total = 0.0;
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..train.len());
            let (loss, grads) = {
                let mut g = Graph::new(tm.model.store());
                let (out, _) = tm.forward(&mut g, &train_patches[i])?;
                let loss = task_loss(&mut g, &tm, out, &train_patches[i], &train[i])?;
                (g.value(loss).data()[0], g.backward(loss)?)
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite {task} loss {loss} at step {step}")));
            }
            total += loss;
            tm.model.store_mut().accumulate(&grads, scale);
        }
        adam_step(tm.model.store_mut(), &mut state, &cfg.adam)?;
        history.losses.push(total * scale);
        if step % 25 == 0 {
            log::debug!("{task}/{regime} step {step}: loss {:.6}", total * scale);
        }
        if (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps {
            validate(&tm, step, &mut history)?;
        }
    }

    history.encoder_checksum_after = tm.model.store().checksum(&encoder_ids);
    if regime == Regime::Frozen && history.encoder_checksum_after != checksum_before {
        return Err(Error::contract("frozen encoder parameters changed during training"));
    }
    history.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((tm, history))
}

/// Scores `tm` on a dataset from another scenario without touching its
/// parameters. `source` and `target` label the report.
pub fn zero_shot_eval(
    tm: &TaskModel,
    source: &str,
    target: &str,
    samples: &[CsiSample],
    seeds: BTreeMap<String, u64>,
    config_hash: &str,
) -> Result<MetricsReport> {
    let eval = evaluate(tm, samples)?;
    let mut notes = BTreeMap::new();
    if let TaskHead::Feedback(fb) = &tm.head {
        notes.insert("code_len".to_string(), fb.code_len.to_string());
        notes.insert("compression_ratio".to_string(), format!("{}", fb.compression_ratio(&tm.model)));
    }
    let ids: Vec<_> = tm.model.store().iter().map(|(id, _)| id).collect();
    notes.insert("param_checksum".to_string(), tm.model.store().checksum(&ids));
    Ok(MetricsReport {
        task: tm.task.to_string(),
        regime: tm.regime.to_string(),
        source_scenario: source.to_string(),
        target_scenario: target.to_string(),
        sample_count: eval.sample_count,
        nmse_linear: eval.nmse.map(|(lin, _)| lin),
        nmse_db: eval.nmse.map(|(_, db)| db),
        positioning: eval.positioning,
        seeds,
        config_hash: config_hash.to_string(),
        notes,
    })
}
