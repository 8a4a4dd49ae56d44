use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ModelConfig, PatchGrid};
use super::mask::MaskPlan;
use super::posemb::build_posemb;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-6;
pub const INIT_STD: f64 = 0.02;

/// Normal(0, std²) samples, redrawing anything beyond two standard deviations.
pub fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and length agree")
}

#[derive(Clone, Debug)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct Block {
    norm1: Norm,
    qkv: Linear,
    proj: Linear,
    norm2: Norm,
    fc1: Linear,
    fc2: Linear,
}

#[derive(Clone, Debug)]
struct Layout {
    patch_embed: Linear,
    cls_token: ParamId,
    encoder: Vec<Block>,
    encoder_norm: Norm,
    decoder_embed: Linear,
    mask_token: ParamId,
    decoder: Vec<Block>,
    decoder_norm: Norm,
    head: Linear,
}

/// Registers parameters in a fixed order, either freshly initialized or
/// (with `rng = None`) zero-filled for a subsequent load.
struct Builder<'a, R: Rng + ?Sized> {
    store: ParamStore,
    rng: Option<&'a mut R>,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn normal(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let t = match self.rng.as_deref_mut() {
            Some(rng) => trunc_normal(rng, shape, INIT_STD),
            None => Tensor::zeros(shape),
        };
        self.store.add(name, t)
    }

    fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.store.add(name, Tensor::full(shape, value))
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        Ok(Linear {
            weight: self.normal(&format!("{prefix}.weight"), &[fan_in, fan_out])?,
            bias: self.constant(&format!("{prefix}.bias"), &[fan_out], 0.0)?,
        })
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.constant(&format!("{prefix}.gamma"), &[dim], 1.0)?,
            beta: self.constant(&format!("{prefix}.beta"), &[dim], 0.0)?,
        })
    }

    fn block(&mut self, prefix: &str, dim: usize, mlp_ratio: usize) -> Result<Block> {
        Ok(Block {
            norm1: self.norm(&format!("{prefix}.norm1"), dim)?,
            qkv: self.linear(&format!("{prefix}.attn.qkv"), dim, 3 * dim)?,
            proj: self.linear(&format!("{prefix}.attn.proj"), dim, dim)?,
            norm2: self.norm(&format!("{prefix}.norm2"), dim)?,
            fc1: self.linear(&format!("{prefix}.mlp.fc1"), dim, mlp_ratio * dim)?,
            fc2: self.linear(&format!("{prefix}.mlp.fc2"), mlp_ratio * dim, dim)?,
        })
    }

    fn layout(&mut self, cfg: &ModelConfig) -> Result<Layout> {
        let grid = cfg.grid();
        let (d, dd) = (cfg.embed_dim, cfg.decoder_dim);
        let patch_embed = self.linear("patch_embed", grid.patch_dim(), d)?;
        let cls_token = self.normal("cls_token", &[1, d])?;
        let encoder = (0..cfg.encoder_depth)
            .map(|i| self.block(&format!("encoder.{i}"), d, cfg.mlp_ratio))
            .collect::<Result<_>>()?;
        let encoder_norm = self.norm("encoder.norm", d)?;
        let decoder_embed = self.linear("decoder.embed", d, dd)?;
        let mask_token = self.normal("mask_token", &[1, dd])?;
        let decoder = (0..cfg.decoder_depth)
            .map(|i| self.block(&format!("decoder.{i}"), dd, cfg.mlp_ratio))
            .collect::<Result<_>>()?;
        let decoder_norm = self.norm("decoder.norm", dd)?;
        let head = self.linear("decoder.head", dd, grid.patch_dim())?;
        Ok(Layout {
            patch_embed,
            cls_token,
            encoder,
            encoder_norm,
            decoder_embed,
            mask_token,
            decoder,
            decoder_norm,
            head,
        })
    }
}

/// The masked-autoencoder: parameters plus the fixed positional tables.
///
/// The parameter store may hold extra task-head parameters registered after
/// construction; the model itself only touches its own.
#[derive(Clone, Debug)]
pub struct CsiMae {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
    encoder_pos: Tensor,
    /// `(P+1) × decoder_dim`, zero CLS row.
    decoder_pos: Tensor,
    num_model_params: usize,
}

impl CsiMae {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        Self::build(config, Some(rng))
    }

    /// Same parameter layout with every tensor zero; used before loading
    /// saved values.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        Self::build::<rand_chacha::ChaCha8Rng>(config, None)
    }

    fn build<R: Rng + ?Sized>(config: ModelConfig, rng: Option<&mut R>) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            rng,
        };
        let layout = b.layout(&config)?;
        let grid = config.grid();
        let encoder_pos = build_posemb(grid.grid_rows, grid.grid_cols, config.embed_dim)?;
        let table = build_posemb(grid.grid_rows, grid.grid_cols, config.decoder_dim)?;
        let mut dec = vec![0.0; config.decoder_dim];
        dec.extend_from_slice(table.data());
        let decoder_pos = Tensor::new(vec![grid.num_patches() + 1, config.decoder_dim], dec)?;
        let num_model_params = b.store.len();
        Ok(CsiMae {
            config,
            store: b.store,
            layout,
            encoder_pos,
            decoder_pos,
            num_model_params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> PatchGrid {
        self.config.grid()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder_pos(&self) -> &Tensor {
        &self.encoder_pos
    }

    pub fn decoder_pos(&self) -> &Tensor {
        &self.decoder_pos
    }

    /// Ids of the backbone parameters (encoder and decoder), excluding any
    /// task heads added later.
    pub fn model_param_ids(&self) -> Vec<ParamId> {
        self.store.iter().take(self.num_model_params).map(|(id, _)| id).collect()
    }

    /// Patch projection, CLS token, encoder blocks and the encoder norm.
    pub fn encoder_param_ids(&self) -> Vec<ParamId> {
        let first_decoder = self.layout.decoder_embed.weight.index();
        self.model_param_ids()
            .into_iter()
            .filter(|id| id.index() < first_decoder)
            .collect()
    }

    pub fn decoder_param_ids(&self) -> Vec<ParamId> {
        let first_decoder = self.layout.decoder_embed.weight.index();
        self.model_param_ids()
            .into_iter()
            .filter(|id| id.index() >= first_decoder)
            .collect()
    }

    /// Draws fresh initial values for every decoder parameter.
    pub fn reinit_decoder<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut fresh = Builder {
            store: ParamStore::new(),
            rng: Some(rng),
        };
        fresh.layout(&self.config)?;
        for id in self.decoder_param_ids() {
            let name = self.store.get(id).name.clone();
            let src = fresh.store.id(&name).expect("same layout");
            let value = fresh.store.get(src).value.clone();
            self.store.assign(id, &value)?;
        }
        Ok(())
    }

    fn check_patches(&self, patches: &Tensor) -> Result<()> {
        let grid = self.grid();
        let expected = [grid.num_patches(), grid.patch_dim()];
        if patches.shape() != expected {
            return Err(Error::shape(format!(
                "expected patches of shape {expected:?}, got {:?}",
                patches.shape()
            )));
        }
        Ok(())
    }

    fn check_plan(&self, plan: &MaskPlan) -> Result<()> {
        let p = self.grid().num_patches();
        if plan.num_patches() != p || plan.visible.len() + plan.masked.len() != p {
            return Err(Error::contract(format!(
                "mask plan covers {} patches, model has {p}",
                plan.num_patches()
            )));
        }
        if plan.visible.is_empty() {
            return Err(Error::contract("mask plan leaves no visible patch"));
        }
        Ok(())
    }

    /// Encodes the visible patches of `patches` (all `P` rows supplied) under
    /// `plan`. Output is `(1 + visible) × D`, row 0 the CLS token.
    pub fn encode(&self, g: &mut Graph, patches: &Tensor, plan: &MaskPlan) -> Result<Var> {
        self.check_patches(patches)?;
        self.check_plan(plan)?;
        let d = self.config.embed_dim;
        let pd = self.grid().patch_dim();
        let mut vis = Vec::with_capacity(plan.visible.len() * pd);
        let mut pos = Vec::with_capacity(plan.visible.len() * d);
        for &i in &plan.visible {
            vis.extend_from_slice(patches.row(i));
            pos.extend_from_slice(self.encoder_pos.row(i));
        }
        let vis = Tensor::new(vec![plan.visible.len(), pd], vis)?;
        let pos = Tensor::new(vec![plan.visible.len(), d], pos)?;
        let vis = g.constant(vis);
        self.encode_tokens(g, vis, &pos)
    }

    /// Encoder on an explicit token list: `patches` (`V × patch_dim`) with
    /// their positional rows `pos` (`V × D`) attached, in any order.
    pub fn encode_tokens(&self, g: &mut Graph, patches: Var, pos: &Tensor) -> Result<Var> {
        let l = &self.layout;
        let x = linear(g, &l.patch_embed, patches)?;
        let pos = g.constant(pos.clone());
        let x = g.add(x, pos)?;
        let cls = g.param(l.cls_token);
        let n = g.value(x).outer_len();
        let picks: Vec<_> = std::iter::once((0, 0)).chain((0..n).map(|r| (1, r))).collect();
        let mut x = g.gather_rows(&[cls, x], &picks)?;
        for block in &l.encoder {
            x = transformer_block(g, block, x, self.config.encoder_heads)?;
        }
        layer_norm(g, &l.encoder_norm, x)
    }

    /// Projects the encoder output to decoder width and lays out the full
    /// `(P+1)`-token sequence: CLS, then every patch position holding either
    /// its encoded token or the shared mask token.
    pub fn assemble_decoder_tokens(&self, g: &mut Graph, latent: Var, plan: &MaskPlan) -> Result<Var> {
        self.check_plan(plan)?;
        let rows = g.value(latent).outer_len();
        if rows != plan.visible.len() + 1 || g.value(latent).last_dim() != self.config.embed_dim {
            return Err(Error::contract(format!(
                "latent of shape {:?} does not match a plan with {} visible patches",
                g.value(latent).shape(),
                plan.visible.len()
            )));
        }
        let x = linear(g, &self.layout.decoder_embed, latent)?;
        let mask = g.param(self.layout.mask_token);
        let mut picks = Vec::with_capacity(plan.num_patches() + 1);
        picks.push((0, 0));
        let mut next_visible = 0;
        for p in 0..plan.num_patches() {
            if plan.visible.get(next_visible) == Some(&p) {
                next_visible += 1;
                picks.push((0, next_visible));
            } else {
                picks.push((1, 0));
            }
        }
        g.gather_rows(&[x, mask], &picks)
    }

    /// Decoder on a full `(P+1) × decoder_dim` token sequence: adds the
    /// decoder positional table, runs the blocks, norm and head, and drops
    /// the CLS row. Output is `P × patch_dim`.
    pub fn decode_tokens(&self, g: &mut Graph, tokens: Var) -> Result<Var> {
        let l = &self.layout;
        if g.value(tokens).shape() != self.decoder_pos.shape() {
            return Err(Error::shape(format!(
                "decoder expects tokens of shape {:?}, got {:?}",
                self.decoder_pos.shape(),
                g.value(tokens).shape()
            )));
        }
        let pos = g.constant(self.decoder_pos.clone());
        let mut x = g.add(tokens, pos)?;
        for block in &l.decoder {
            x = transformer_block(g, block, x, self.config.decoder_heads)?;
        }
        let x = layer_norm(g, &l.decoder_norm, x)?;
        let x = linear(g, &l.head, x)?;
        let p = self.grid().num_patches();
        let picks: Vec<_> = (1..=p).map(|r| (0, r)).collect();
        g.gather_rows(&[x], &picks)
    }

    pub fn decode(&self, g: &mut Graph, latent: Var, plan: &MaskPlan) -> Result<Var> {
        let tokens = self.assemble_decoder_tokens(g, latent, plan)?;
        self.decode_tokens(g, tokens)
    }

    /// Full encode→decode forward pass without gradient bookkeeping.
    pub fn reconstruct(&self, patches: &Tensor, plan: &MaskPlan) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let latent = self.encode(&mut g, patches, plan)?;
        let out = self.decode(&mut g, latent, plan)?;
        Ok(g.value(out).clone())
    }
}

fn linear(g: &mut Graph, l: &Linear, x: Var) -> Result<Var> {
    let w = g.param(l.weight);
    let b = g.param(l.bias);
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

fn layer_norm(g: &mut Graph, n: &Norm, x: Var) -> Result<Var> {
    let gamma = g.param(n.gamma);
    let beta = g.param(n.beta);
    g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
}

fn transformer_block(g: &mut Graph, b: &Block, x: Var, heads: usize) -> Result<Var> {
    let d = g.value(x).last_dim();
    let dh = d / heads;
    let h = layer_norm(g, &b.norm1, x)?;
    let qkv = linear(g, &b.qkv, h)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for head in 0..heads {
        let q = g.slice_cols(qkv, head * dh, dh)?;
        let k = g.slice_cols(qkv, d + head * dh, dh)?;
        let v = g.slice_cols(qkv, 2 * d + head * dh, dh)?;
        let s = g.matmul_nt(q, k)?;
        let s = g.scale(s, scale);
        let a = g.softmax(s);
        outs.push(g.matmul(a, v)?);
    }
    let o = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    let o = linear(g, &b.proj, o)?;
    let x = g.add(x, o)?;
    let h = layer_norm(g, &b.norm2, x)?;
    let h = linear(g, &b.fc1, h)?;
    let h = g.gelu(h);
    let h = linear(g, &b.fc2, h)?;
    g.add(x, h)
}

/// `Σ_{i masked} ‖pred_i − target_i‖² / (N · patch_dim)`. Rows of `pred` at
/// visible indices do not enter the loss.
pub fn masked_mse(g: &mut Graph, pred: Var, target: &Tensor, plan: &MaskPlan) -> Result<Var> {
    if g.value(pred).shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ in shape",
            g.value(pred).shape(),
            target.shape()
        )));
    }
    if plan.masked.is_empty() {
        return Err(Error::contract("masked_mse needs at least one masked patch"));
    }
    if plan.num_patches() != target.outer_len() {
        return Err(Error::contract(format!(
            "mask plan covers {} patches, target has {}",
            plan.num_patches(),
            target.outer_len()
        )));
    }
    let pd = target.last_dim();
    let picks: Vec<_> = plan.masked.iter().map(|&i| (0, i)).collect();
    let p = g.gather_rows(&[pred], &picks)?;
    let mut t = Vec::with_capacity(plan.masked.len() * pd);
    for &i in &plan.masked {
        t.extend_from_slice(target.row(i));
    }
    let t = g.constant(Tensor::new(vec![plan.masked.len(), pd], t)?);
    let diff = g.sub(p, t)?;
    let ss = g.sum_squares(diff);
    Ok(g.scale(ss, 1.0 / (plan.masked.len() * pd) as f64))
}
