//! Decoder-only transformer: token embedding, positional encoding, a stack
//! of Pre-LN masked multi-head attention blocks with skip connections, and a
//! two-layer decoding head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{NUM_SPECIALS, PAD, SOS};
use crate::neural::{
    causal_attention, causal_attention_backward, cross_entropy_masked, dropout, dropout_backward,
    embedding_backward, embedding_lookup, layer_norm, layer_norm_backward, linear, linear_backward,
    relu, relu_backward, softmax_rows, AttentionCache, DropoutCache, LayerNormCache, Parameter,
};
use crate::pos_encoding::{sinusoidal_pe, structural_pe, structural_pe_backward, PeConfig, PeMode};
use crate::rng::{self, SeededRng};
use crate::tensor::{Scalar, Tensor};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub pe: PeConfig,
    /// Literal reading of the architecture keeps the two FC layers as a
    /// single head after the block stack; this flag adds the conventional
    /// per-block feed-forward sublayer instead of relying on the head alone.
    #[serde(default)]
    pub ffn_in_blocks: bool,
}

impl ModelConfig {
    /// Best-known hyperparameters for a given vocabulary.
    pub fn new(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 64,
            hidden: 128,
            heads: 4,
            layers: 4,
            dropout: 0.216375,
            vocab_size,
            pe: PeConfig::default(),
            ffn_in_blocks: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Param(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Param("layers must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Param(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.vocab_size <= NUM_SPECIALS {
            return Err(Error::Param("vocabulary has no activities".into()));
        }
        if self.pe.mode == PeMode::Sinusoidal && !self.d_model.is_multiple_of(2) {
            return Err(Error::Param("sinusoidal PE needs an even d_model".into()));
        }
        if self.pe.mode == PeMode::Structural && self.pe.spe_k == 0 {
            return Err(Error::Param("structural PE needs spe_k ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FfnParams<T> {
    pub ln_gain: Parameter<T>,
    pub ln_bias: Parameter<T>,
    pub w1: Parameter<T>,
    pub b1: Parameter<T>,
    pub w2: Parameter<T>,
    pub b2: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct LayerParams<T> {
    pub ln_gain: Parameter<T>,
    pub ln_bias: Parameter<T>,
    pub wq: Parameter<T>,
    pub bq: Parameter<T>,
    pub wk: Parameter<T>,
    pub bk: Parameter<T>,
    pub wv: Parameter<T>,
    pub bv: Parameter<T>,
    pub wo: Parameter<T>,
    pub bo: Parameter<T>,
    pub ffn: Option<FfnParams<T>>,
}

#[derive(Debug, Clone)]
pub struct SpeParams<T> {
    /// Frozen spectral inputs, one row per vocabulary token [V×k].
    pub inputs: Tensor<T>,
    pub theta_w: Parameter<T>,
    pub theta_b: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub token_embedding: Parameter<T>,
    pub spe: Option<SpeParams<T>>,
    pub layers: Vec<LayerParams<T>>,
    pub final_ln_gain: Parameter<T>,
    pub final_ln_bias: Parameter<T>,
    pub head_w1: Parameter<T>,
    pub head_b1: Parameter<T>,
    pub head_w2: Parameter<T>,
    pub head_b2: Parameter<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All trainable parameters in a fixed, name-stable order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter<T>)> {
        let mut out: Vec<(String, &mut Parameter<T>)> = Vec::new();
        out.push(("token_embedding".into(), &mut self.token_embedding));
        if let Some(spe) = &mut self.spe {
            out.push(("spe.theta_w".into(), &mut spe.theta_w));
            out.push(("spe.theta_b".into(), &mut spe.theta_b));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.ln.gain"), &mut layer.ln_gain));
            out.push((format!("layer{i}.ln.bias"), &mut layer.ln_bias));
            out.push((format!("layer{i}.attn.wq"), &mut layer.wq));
            out.push((format!("layer{i}.attn.bq"), &mut layer.bq));
            out.push((format!("layer{i}.attn.wk"), &mut layer.wk));
            out.push((format!("layer{i}.attn.bk"), &mut layer.bk));
            out.push((format!("layer{i}.attn.wv"), &mut layer.wv));
            out.push((format!("layer{i}.attn.bv"), &mut layer.bv));
            out.push((format!("layer{i}.attn.wo"), &mut layer.wo));
            out.push((format!("layer{i}.attn.bo"), &mut layer.bo));
            if let Some(ffn) = &mut layer.ffn {
                out.push((format!("layer{i}.ffn.ln.gain"), &mut ffn.ln_gain));
                out.push((format!("layer{i}.ffn.ln.bias"), &mut ffn.ln_bias));
                out.push((format!("layer{i}.ffn.w1"), &mut ffn.w1));
                out.push((format!("layer{i}.ffn.b1"), &mut ffn.b1));
                out.push((format!("layer{i}.ffn.w2"), &mut ffn.w2));
                out.push((format!("layer{i}.ffn.b2"), &mut ffn.b2));
            }
        }
        out.push(("final_ln.gain".into(), &mut self.final_ln_gain));
        out.push(("final_ln.bias".into(), &mut self.final_ln_bias));
        out.push(("head.w1".into(), &mut self.head_w1));
        out.push(("head.b1".into(), &mut self.head_b1));
        out.push(("head.w2".into(), &mut self.head_w2));
        out.push(("head.b2".into(), &mut self.head_b2));
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Parameter<T>)> {
        let mut out: Vec<(String, &Parameter<T>)> = Vec::new();
        out.push(("token_embedding".into(), &self.token_embedding));
        if let Some(spe) = &self.spe {
            out.push(("spe.theta_w".into(), &spe.theta_w));
            out.push(("spe.theta_b".into(), &spe.theta_b));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.ln.gain"), &layer.ln_gain));
            out.push((format!("layer{i}.ln.bias"), &layer.ln_bias));
            out.push((format!("layer{i}.attn.wq"), &layer.wq));
            out.push((format!("layer{i}.attn.bq"), &layer.bq));
            out.push((format!("layer{i}.attn.wk"), &layer.wk));
            out.push((format!("layer{i}.attn.bk"), &layer.bk));
            out.push((format!("layer{i}.attn.wv"), &layer.wv));
            out.push((format!("layer{i}.attn.bv"), &layer.bv));
            out.push((format!("layer{i}.attn.wo"), &layer.wo));
            out.push((format!("layer{i}.attn.bo"), &layer.bo));
            if let Some(ffn) = &layer.ffn {
                out.push((format!("layer{i}.ffn.ln.gain"), &ffn.ln_gain));
                out.push((format!("layer{i}.ffn.ln.bias"), &ffn.ln_bias));
                out.push((format!("layer{i}.ffn.w1"), &ffn.w1));
                out.push((format!("layer{i}.ffn.b1"), &ffn.b1));
                out.push((format!("layer{i}.ffn.w2"), &ffn.w2));
                out.push((format!("layer{i}.ffn.b2"), &ffn.b2));
            }
        }
        out.push(("final_ln.gain".into(), &self.final_ln_gain));
        out.push(("final_ln.bias".into(), &self.final_ln_bias));
        out.push(("head.w1".into(), &self.head_w1));
        out.push(("head.b1".into(), &self.head_b1));
        out.push(("head.w2".into(), &self.head_w2));
        out.push(("head.b2".into(), &self.head_b2));
        out
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_params()
            .iter()
            .all(|(_, p)| p.value.all_finite())
    }
}

/// Glorot-uniform weights (±√(6/(fan_in+fan_out))), zero biases, unit
/// layer-norm gains. Deterministic under the seed.
pub fn init_params<T: Scalar>(
    config: &ModelConfig,
    seed: u64,
    spe_inputs: Option<Tensor<T>>,
) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let d = config.d_model;
    let v = config.vocab_size;

    let weight = |rows: usize, cols: usize, rng: &mut SeededRng| -> Parameter<T> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| T::from_f64(rng.random::<f64>() * 2.0 * a - a))
            .collect();
        Parameter::new(Tensor::from_vec(&[rows, cols], values))
    };
    let zeros = |len: usize| Parameter::new(Tensor::zeros(&[len]));
    let ones = |len: usize| {
        let mut t = Tensor::zeros(&[len]);
        t.fill(T::ONE);
        Parameter::new(t)
    };

    let token_embedding = weight(v, d, &mut rng);

    let spe = match config.pe.mode {
        PeMode::Structural => {
            let inputs = spe_inputs.ok_or_else(|| {
                Error::Param("structural PE requires resolved spectral inputs".into())
            })?;
            if inputs.rows() != v || inputs.cols() != config.pe.spe_k {
                return Err(Error::Shape(format!(
                    "SPE inputs {:?}, expected [{v}, {}]",
                    inputs.shape(),
                    config.pe.spe_k
                )));
            }
            Some(SpeParams {
                inputs,
                theta_w: weight(config.pe.spe_k, d, &mut rng),
                theta_b: zeros(d),
            })
        }
        _ => None,
    };

    let mut layers = Vec::with_capacity(config.layers);
    for _ in 0..config.layers {
        let ffn = if config.ffn_in_blocks {
            Some(FfnParams {
                ln_gain: ones(d),
                ln_bias: zeros(d),
                w1: weight(d, config.hidden, &mut rng),
                b1: zeros(config.hidden),
                w2: weight(config.hidden, d, &mut rng),
                b2: zeros(d),
            })
        } else {
            None
        };
        layers.push(LayerParams {
            ln_gain: ones(d),
            ln_bias: zeros(d),
            wq: weight(d, d, &mut rng),
            bq: zeros(d),
            wk: weight(d, d, &mut rng),
            bk: zeros(d),
            wv: weight(d, d, &mut rng),
            bv: zeros(d),
            wo: weight(d, d, &mut rng),
            bo: zeros(d),
            ffn,
        });
    }

    Ok(ModelParams {
        config: config.clone(),
        token_embedding,
        spe,
        layers,
        final_ln_gain: ones(d),
        final_ln_bias: zeros(d),
        head_w1: weight(d, config.hidden, &mut rng),
        head_b1: zeros(config.hidden),
        head_w2: weight(config.hidden, v, &mut rng),
        head_b2: zeros(v),
    })
}

fn slice_cols<T: Scalar>(t: &Tensor<T>, start: usize, width: usize) -> Tensor<T> {
    let n = t.rows();
    let mut out = Tensor::zeros(&[n, width]);
    for i in 0..n {
        out.row_mut(i)
            .copy_from_slice(&t.row(i)[start..start + width]);
    }
    out
}

fn write_cols<T: Scalar>(dst: &mut Tensor<T>, start: usize, src: &Tensor<T>) {
    let width = src.cols();
    for i in 0..src.rows() {
        dst.row_mut(i)[start..start + width].copy_from_slice(src.row(i));
    }
}

struct FfnCache<T> {
    ln: LayerNormCache<T>,
    ln_out: Tensor<T>,
    h_pre: Tensor<T>,
    h: Tensor<T>,
}

struct LayerCache<T> {
    ln: LayerNormCache<T>,
    ln_out: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    heads: Vec<AttentionCache<T>>,
    concat: Tensor<T>,
    attn_dropout: DropoutCache,
    ffn: Option<FfnCache<T>>,
}

/// Everything the backward pass needs from one forward run.
pub struct ForwardCache<T> {
    ids: Vec<usize>,
    spe_gathered: Option<Tensor<T>>,
    pe_dropout: DropoutCache,
    layers: Vec<LayerCache<T>>,
    final_ln: LayerNormCache<T>,
    final_ln_out: Tensor<T>,
    head_h_pre: Tensor<T>,
    head_h: Tensor<T>,
}

/// Forward pass over one id sequence; row i of the logits parameterizes the
/// distribution of the token at position i+1.
pub fn forward_cached<T: Scalar>(
    params: &ModelParams<T>,
    ids: &[usize],
    training: bool,
    rng: &mut SeededRng,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    if ids.is_empty() {
        return Err(Error::Param("forward needs at least one token".into()));
    }
    let cfg = &params.config;
    let n = ids.len();
    let d = cfg.d_model;
    let rate = cfg.dropout;

    let mut x = embedding_lookup(&params.token_embedding.value, ids)?;

    let mut spe_gathered = None;
    match cfg.pe.mode {
        PeMode::None => {}
        PeMode::Sinusoidal => {
            let pe = sinusoidal_pe::<T>(n, d)?;
            x.add_assign(&pe);
        }
        PeMode::Structural => {
            let spe = params
                .spe
                .as_ref()
                .ok_or_else(|| Error::Param("structural PE without SPE parameters".into()))?;
            let (pe, gathered) =
                structural_pe(ids, &spe.inputs, &spe.theta_w.value, &spe.theta_b.value)?;
            x.add_assign(&pe);
            spe_gathered = Some(gathered);
        }
    }

    let (mut x, pe_dropout) = dropout(&x, rate, training, rng)?;

    let d_h = cfg.head_dim();
    let mut layer_caches = Vec::with_capacity(cfg.layers);
    for layer in &params.layers {
        let (ln_out, ln) = layer_norm(&x, &layer.ln_gain.value, &layer.ln_bias.value, LN_EPS);
        let q = linear(&ln_out, &layer.wq.value, &layer.bq.value)?;
        let k = linear(&ln_out, &layer.wk.value, &layer.bk.value)?;
        let v = linear(&ln_out, &layer.wv.value, &layer.bv.value)?;

        let mut concat = Tensor::zeros(&[n, d]);
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let start = h * d_h;
            let (out_h, cache_h) = causal_attention(
                &slice_cols(&q, start, d_h),
                &slice_cols(&k, start, d_h),
                &slice_cols(&v, start, d_h),
            )?;
            write_cols(&mut concat, start, &out_h);
            heads.push(cache_h);
        }

        let projected = linear(&concat, &layer.wo.value, &layer.bo.value)?;
        let (projected, attn_dropout) = dropout(&projected, rate, training, rng)?;
        x.add_assign(&projected);

        let ffn_cache = if let Some(ffn) = &layer.ffn {
            let (ln_out2, ln2) = layer_norm(&x, &ffn.ln_gain.value, &ffn.ln_bias.value, LN_EPS);
            let h_pre = linear(&ln_out2, &ffn.w1.value, &ffn.b1.value)?;
            let h = relu(&h_pre);
            let f = linear(&h, &ffn.w2.value, &ffn.b2.value)?;
            x.add_assign(&f);
            Some(FfnCache {
                ln: ln2,
                ln_out: ln_out2,
                h_pre,
                h,
            })
        } else {
            None
        };

        layer_caches.push(LayerCache {
            ln,
            ln_out,
            q,
            k,
            v,
            heads,
            concat,
            attn_dropout,
            ffn: ffn_cache,
        });
    }

    let (final_ln_out, final_ln) = layer_norm(
        &x,
        &params.final_ln_gain.value,
        &params.final_ln_bias.value,
        LN_EPS,
    );
    let head_h_pre = linear(&final_ln_out, &params.head_w1.value, &params.head_b1.value)?;
    let head_h = relu(&head_h_pre);
    let logits = linear(&head_h, &params.head_w2.value, &params.head_b2.value)?;

    Ok((
        logits,
        ForwardCache {
            ids: ids.to_vec(),
            spe_gathered,
            pe_dropout,
            layers: layer_caches,
            final_ln,
            final_ln_out,
            head_h_pre,
            head_h,
        },
    ))
}

/// Inference-mode forward (dropout off, no cache kept).
pub fn forward<T: Scalar>(params: &ModelParams<T>, ids: &[usize]) -> Result<Tensor<T>> {
    let mut rng = rng::seeded(0);
    Ok(forward_cached(params, ids, false, &mut rng)?.0)
}

/// Accumulate gradients for one sequence into the parameters.
pub fn backward<T: Scalar>(
    params: &mut ModelParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &Tensor<T>,
) -> Result<()> {
    let cfg = params.config.clone();
    let d_h = cfg.head_dim();

    // head
    let (dh, dw2, db2) = linear_backward(&cache.head_h, &params.head_w2.value, dlogits);
    params.head_w2.grad.add_assign(&dw2);
    params.head_b2.grad.add_assign(&db2);
    let dh_pre = relu_backward(&cache.head_h_pre, &dh);
    let (d_final_out, dw1, db1) =
        linear_backward(&cache.final_ln_out, &params.head_w1.value, &dh_pre);
    params.head_w1.grad.add_assign(&dw1);
    params.head_b1.grad.add_assign(&db1);

    // final layer norm
    let mut dx = layer_norm_backward(
        &cache.final_ln,
        &params.final_ln_gain.value,
        &d_final_out,
        &mut params.final_ln_gain.grad,
        &mut params.final_ln_bias.grad,
    );

    // block stack, reversed
    for (layer, lc) in params.layers.iter_mut().zip(cache.layers.iter()).rev() {
        if let (Some(ffn), Some(fc)) = (&mut layer.ffn, &lc.ffn) {
            let (dh, dw2f, db2f) = linear_backward(&fc.h, &ffn.w2.value, &dx);
            ffn.w2.grad.add_assign(&dw2f);
            ffn.b2.grad.add_assign(&db2f);
            let dh_pre = relu_backward(&fc.h_pre, &dh);
            let (dz, dw1f, db1f) = linear_backward(&fc.ln_out, &ffn.w1.value, &dh_pre);
            ffn.w1.grad.add_assign(&dw1f);
            ffn.b1.grad.add_assign(&db1f);
            let d_res = layer_norm_backward(
                &fc.ln,
                &ffn.ln_gain.value,
                &dz,
                &mut ffn.ln_gain.grad,
                &mut ffn.ln_bias.grad,
            );
            dx.add_assign(&d_res);
        }

        let d_proj = dropout_backward(&lc.attn_dropout, &dx);
        let (dconcat, dwo, dbo) = linear_backward(&lc.concat, &layer.wo.value, &d_proj);
        layer.wo.grad.add_assign(&dwo);
        layer.bo.grad.add_assign(&dbo);

        let n = dconcat.rows();
        let mut dq = Tensor::zeros(&[n, cfg.d_model]);
        let mut dk = Tensor::zeros(&[n, cfg.d_model]);
        let mut dv = Tensor::zeros(&[n, cfg.d_model]);
        for (h, head_cache) in lc.heads.iter().enumerate() {
            let start = h * d_h;
            let (dq_h, dk_h, dv_h) = causal_attention_backward(
                &slice_cols(&lc.q, start, d_h),
                &slice_cols(&lc.k, start, d_h),
                &slice_cols(&lc.v, start, d_h),
                head_cache,
                &slice_cols(&dconcat, start, d_h),
            );
            write_cols(&mut dq, start, &dq_h);
            write_cols(&mut dk, start, &dk_h);
            write_cols(&mut dv, start, &dv_h);
        }

        let (dy_q, dwq, dbq) = linear_backward(&lc.ln_out, &layer.wq.value, &dq);
        layer.wq.grad.add_assign(&dwq);
        layer.bq.grad.add_assign(&dbq);
        let (dy_k, dwk, dbk) = linear_backward(&lc.ln_out, &layer.wk.value, &dk);
        layer.wk.grad.add_assign(&dwk);
        layer.bk.grad.add_assign(&dbk);
        let (dy_v, dwv, dbv) = linear_backward(&lc.ln_out, &layer.wv.value, &dv);
        layer.wv.grad.add_assign(&dwv);
        layer.bv.grad.add_assign(&dbv);

        let mut dy = dy_q;
        dy.add_assign(&dy_k);
        dy.add_assign(&dy_v);

        let d_res = layer_norm_backward(
            &lc.ln,
            &layer.ln_gain.value,
            &dy,
            &mut layer.ln_gain.grad,
            &mut layer.ln_bias.grad,
        );
        dx.add_assign(&d_res);
    }

    let dx = dropout_backward(&cache.pe_dropout, &dx);

    if let (Some(spe), Some(gathered)) = (&mut params.spe, &cache.spe_gathered) {
        let (dtw, dtb) = structural_pe_backward(gathered, &spe.theta_w.value, &dx);
        spe.theta_w.grad.add_assign(&dtw);
        spe.theta_b.grad.add_assign(&dtb);
    }

    embedding_backward(&cache.ids, &dx, &mut params.token_embedding.grad);
    Ok(())
}

/// Forward + masked cross-entropy for one sequence, with gradient
/// accumulation. Returns (summed loss, valid-target count).
pub fn loss_and_backward<T: Scalar>(
    params: &mut ModelParams<T>,
    inputs: &[usize],
    targets: &[usize],
    loss_scale: f64,
    training: bool,
    rng: &mut SeededRng,
) -> Result<(f64, usize)> {
    let (logits, cache) = forward_cached(params, inputs, training, rng)?;
    let (sum, count, mut dlogits) =
        crate::neural::masked_cross_entropy_sum(&logits, targets, &[PAD])?;
    if count > 0 {
        dlogits.scale(T::from_f64(loss_scale));
        backward(params, &cache, &dlogits)?;
    }
    Ok((sum, count))
}

/// Top-k next-token candidates after a prefix: softmax of the last logits
/// row, PAD and SOS excluded from the ranking, ties broken by lower id.
pub fn predict_topk<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &[usize],
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::Param("top-k needs k ≥ 1".into()));
    }
    if prefix.first() != Some(&SOS) {
        return Err(Error::Param("prefix must start with the SOS token".into()));
    }
    let logits = forward(params, prefix)?;
    let last = logits.rows() - 1;
    let probs = softmax_rows(&logits);
    let mut ranked: Vec<(usize, f64)> = probs
        .row(last)
        .iter()
        .enumerate()
        .filter(|(id, _)| *id != PAD && *id != SOS)
        .map(|(id, &p)| (id, p.to_f64()))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite probabilities")
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Quick training-sanity loss (mean masked cross-entropy of one sequence).
pub fn sequence_loss<T: Scalar>(
    params: &ModelParams<T>,
    inputs: &[usize],
    targets: &[usize],
) -> Result<f64> {
    let logits = forward(params, inputs)?;
    Ok(cross_entropy_masked(&logits, targets, &[PAD])?.0)
}
