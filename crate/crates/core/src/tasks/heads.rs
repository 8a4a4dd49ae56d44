use std::collections::BTreeMap;

use rand::Rng;

use super::{Regime, TaskKind};
use crate::channelgen::CsiMatrix;
use crate::error::{Error, Result};
use crate::model::{
    patchify, structured_mask, trunc_normal, unpatchify, Checkpoint, CsiMae, MaskDomain, MaskPattern, MaskPlan,
    INIT_STD,
};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub const DEFAULT_CODE_LEN: usize = 128;

/// Affine map from the CLS representation to planar coordinates in metres.
#[derive(Clone, Debug)]
pub struct PositionHead {
    /// `D × 2`.
    pub weight: ParamId,
    /// `2`.
    pub bias: ParamId,
}

impl PositionHead {
    pub const WEIGHT: &'static str = "position_head.weight";
    pub const BIAS: &'static str = "position_head.bias";

    pub fn register(store: &mut ParamStore, weight: Tensor, bias: Tensor) -> Result<Self> {
        Ok(PositionHead {
            weight: store.add(Self::WEIGHT, weight)?,
            bias: store.add(Self::BIAS, bias)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, cls: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(cls, w)?;
        g.add_bias(y, b)
    }
}

/// Mean-pooled encoder tokens → `code_len` reals → a full decoder token
/// sequence.
#[derive(Clone, Debug)]
pub struct FeedbackBottleneck {
    /// `D × code_len`.
    pub down: ParamId,
    /// `code_len × (P+1)·decoder_dim`.
    pub up: ParamId,
    pub code_len: usize,
}

impl FeedbackBottleneck {
    pub const DOWN: &'static str = "feedback.down";
    pub const UP: &'static str = "feedback.up";

    /// Real values in H divided by code length.
    pub fn compression_ratio(&self, model: &CsiMae) -> f64 {
        let c = model.config();
        (2 * c.antennas * c.subcarriers) as f64 / self.code_len as f64
    }
}

#[derive(Clone, Debug)]
pub enum TaskHead {
    /// Extrapolation: the MAE decoder under a fixed structured mask.
    Reconstruction { plan: MaskPlan, pattern: MaskPattern },
    Feedback(FeedbackBottleneck),
    Position(PositionHead),
}

/// A backbone with the head for one task, trained under one regime.
#[derive(Clone, Debug)]
pub struct TaskModel {
    pub task: TaskKind,
    pub regime: Regime,
    pub model: CsiMae,
    pub head: TaskHead,
}

impl TaskModel {
    /// Registers fresh head parameters on `model`. For positioning the bias
    /// starts at `label_mean`.
    pub fn attach<R: Rng + ?Sized>(
        task: TaskKind,
        regime: Regime,
        mut model: CsiMae,
        pattern: Option<MaskPattern>,
        code_len: usize,
        label_mean: [f64; 2],
        rng: &mut R,
    ) -> Result<Self> {
        let d = model.config().embed_dim;
        let head = match task {
            TaskKind::ExtrapolationAntenna | TaskKind::ExtrapolationSubcarrier => {
                let domain = task.mask_domain().expect("extrapolation task");
                let pattern = pattern.unwrap_or(domain.default_pattern());
                TaskHead::Reconstruction {
                    plan: structured_mask(&model.grid(), domain, pattern)?,
                    pattern,
                }
            }
            TaskKind::Feedback => {
                if code_len == 0 {
                    return Err(Error::Config("feedback code length must be positive".into()));
                }
                let tokens = (model.grid().num_patches() + 1) * model.config().decoder_dim;
                let down = trunc_normal(rng, &[d, code_len], INIT_STD);
                let up = trunc_normal(rng, &[code_len, tokens], INIT_STD);
                let store = model.store_mut();
                let fb = FeedbackBottleneck {
                    down: store.add(FeedbackBottleneck::DOWN, down)?,
                    up: store.add(FeedbackBottleneck::UP, up)?,
                    code_len,
                };
                let c = model.config();
                if fb.compression_ratio(&model) <= 1.0 {
                    return Err(Error::Config(format!(
                        "feedback code length {code_len} does not compress {} real values",
                        2 * c.antennas * c.subcarriers
                    )));
                }
                TaskHead::Feedback(fb)
            }
            TaskKind::Positioning => {
                let w = trunc_normal(rng, &[d, 2], INIT_STD);
                let b = Tensor::new(vec![2], label_mean.to_vec())?;
                TaskHead::Position(PositionHead::register(model.store_mut(), w, b)?)
            }
        };
        Ok(TaskModel {
            task,
            regime,
            model,
            head,
        })
    }

    /// Parameters the regime allows to train.
    pub fn apply_regime(&mut self) {
        let frozen = self.regime == Regime::Frozen;
        for id in self.model.encoder_param_ids() {
            self.model.store_mut().set_trainable(id, !frozen);
        }
    }

    pub fn head_param_ids(&self) -> Vec<ParamId> {
        match &self.head {
            TaskHead::Reconstruction { .. } => Vec::new(),
            TaskHead::Feedback(fb) => vec![fb.down, fb.up],
            TaskHead::Position(ph) => vec![ph.weight, ph.bias],
        }
    }

    /// Checkpoint with the head parameters and the task description in the
    /// provenance block.
    pub fn to_checkpoint(&self, mut meta: BTreeMap<String, String>) -> Checkpoint {
        meta.insert("task".into(), self.task.to_string());
        meta.insert("regime".into(), self.regime.to_string());
        match &self.head {
            TaskHead::Reconstruction { pattern, .. } => {
                meta.insert("mask_pattern".into(), pattern.to_string());
            }
            TaskHead::Feedback(fb) => {
                meta.insert("code_len".into(), fb.code_len.to_string());
            }
            TaskHead::Position(_) => {}
        }
        Checkpoint::from_model(&self.model, meta)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ck.meta
                .get(k)
                .ok_or_else(|| Error::Config(format!("checkpoint has no {k:?} entry; is it a task checkpoint?")))
        };
        let task: TaskKind = meta("task")?.parse()?;
        let regime: Regime = meta("regime")?.parse()?;
        let mut model = ck.to_model()?;
        let tensor = |name: &str| {
            ck.tensor(name)
                .cloned()
                .ok_or_else(|| Error::contract(format!("checkpoint lacks parameter {name:?}")))
        };
        let head = match task {
            TaskKind::ExtrapolationAntenna | TaskKind::ExtrapolationSubcarrier => {
                let domain = task.mask_domain().expect("extrapolation task");
                let pattern: MaskPattern = meta("mask_pattern")?.parse()?;
                TaskHead::Reconstruction {
                    plan: structured_mask(&model.grid(), domain, pattern)?,
                    pattern,
                }
            }
            TaskKind::Feedback => {
                let code_len: usize = meta("code_len")?
                    .parse()
                    .map_err(|_| Error::Config("checkpoint code_len is not an integer".into()))?;
                let store = model.store_mut();
                let fb = FeedbackBottleneck {
                    down: store.add(FeedbackBottleneck::DOWN, tensor(FeedbackBottleneck::DOWN)?)?,
                    up: store.add(FeedbackBottleneck::UP, tensor(FeedbackBottleneck::UP)?)?,
                    code_len,
                };
                if model.store().get(fb.down).value.shape() != [model.config().embed_dim, code_len] {
                    return Err(Error::shape("feedback.down does not match the recorded code length"));
                }
                TaskHead::Feedback(fb)
            }
            TaskKind::Positioning => TaskHead::Position(PositionHead::register(
                model.store_mut(),
                tensor(PositionHead::WEIGHT)?,
                tensor(PositionHead::BIAS)?,
            )?),
        };
        let mut tm = TaskModel {
            task,
            regime,
            model,
            head,
        };
        tm.apply_regime();
        Ok(tm)
    }

    /// Builds the forward pass for one sample and returns `(output, code)`:
    /// patch predictions for reconstruction tasks (`P × patch_dim`), a
    /// `1 × 2` coordinate row for positioning. `code` is the feedback code.
    pub fn forward(&self, g: &mut Graph, patches: &Tensor) -> Result<(Var, Option<Var>)> {
        let p = self.model.grid().num_patches();
        match &self.head {
            TaskHead::Reconstruction { plan, .. } => {
                let latent = self.model.encode(g, patches, plan)?;
                Ok((self.model.decode(g, latent, plan)?, None))
            }
            TaskHead::Feedback(fb) => {
                let latent = self.model.encode(g, patches, &MaskPlan::none(p))?;
                let rows: Vec<_> = (1..=p).map(|r| (0, r)).collect();
                let tokens = g.gather_rows(&[latent], &rows)?;
                let pooled = g.mean_rows(tokens)?;
                let down = g.param(fb.down);
                let code = g.matmul(pooled, down)?;
                let up = g.param(fb.up);
                let expanded = g.matmul(code, up)?;
                let seq = g.reshape(expanded, &[p + 1, self.model.config().decoder_dim])?;
                Ok((self.model.decode_tokens(g, seq)?, Some(code)))
            }
            TaskHead::Position(head) => {
                let latent = self.model.encode(g, patches, &MaskPlan::none(p))?;
                let cls = g.gather_rows(&[latent], &[(0, 0)])?;
                Ok((head.forward(g, cls)?, None))
            }
        }
    }
}

/// Copies the rows of `input` at visible indices of `plan` over `pred`.
fn copy_visible(pred: &Tensor, input: &Tensor, plan: &MaskPlan) -> Tensor {
    let mut out = pred.clone();
    let pd = input.last_dim();
    for &v in &plan.visible {
        out.data_mut()[v * pd..(v + 1) * pd].copy_from_slice(input.row(v));
    }
    out
}

/// Reconstruction under an arbitrary plan; visible patches of the output
/// are the input patches verbatim.
pub fn extrapolate_with_plan(model: &CsiMae, h: &CsiMatrix, plan: &MaskPlan) -> Result<CsiMatrix> {
    let grid = model.grid();
    let patches = patchify(h, &grid)?;
    if plan.masked.is_empty() {
        return unpatchify(&patches, &grid);
    }
    let pred = model.reconstruct(&patches, plan)?;
    unpatchify(&copy_visible(&pred, &patches, plan), &grid)
}

pub fn extrapolate(model: &CsiMae, h: &CsiMatrix, domain: MaskDomain, pattern: MaskPattern) -> Result<CsiMatrix> {
    let plan = structured_mask(&model.grid(), domain, pattern)?;
    extrapolate_with_plan(model, h, &plan)
}

/// Returns the transmitted code and the reconstruction.
pub fn feedback_roundtrip(tm: &TaskModel, h: &CsiMatrix) -> Result<(Vec<f64>, CsiMatrix)> {
    if !matches!(tm.head, TaskHead::Feedback(_)) {
        return Err(Error::contract(format!("{} model has no feedback bottleneck", tm.task)));
    }
    let grid = tm.model.grid();
    let patches = patchify(h, &grid)?;
    let mut g = Graph::new(tm.model.store());
    let (out, code) = tm.forward(&mut g, &patches)?;
    let code = g.value(code.expect("feedback code")).data().to_vec();
    Ok((code, unpatchify(g.value(out), &grid)?))
}

pub fn position_predict(tm: &TaskModel, h: &CsiMatrix) -> Result<[f64; 2]> {
    if !matches!(tm.head, TaskHead::Position(_)) {
        return Err(Error::contract(format!("{} model has no position head", tm.task)));
    }
    let patches = patchify(h, &tm.model.grid())?;
    let mut g = Graph::new(tm.model.store());
    let (out, _) = tm.forward(&mut g, &patches)?;
    let v = g.value(out).data();
    Ok([v[0], v[1]])
}
