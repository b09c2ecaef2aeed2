//! Differentiable primitives.
//!
//! Each operation is a plain forward function plus an explicit backward
//! counterpart; the model composes them by hand. No general autodiff — the
//! fixed set below is all the architecture needs, and every gradient is
//! validated against central finite differences (`grad_check`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

/// Additive pre-softmax mask for future positions. Large enough that masked
/// attention weights underflow to exact zeros after the softmax, which makes
/// causality bit-exact rather than approximate.
pub const CAUSAL_MASK: f64 = -1e9;

/// A learnable tensor paired with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }
}

// ---------------------------------------------------------------------------
// embedding lookup

/// Gather rows of `table` [V×d] for each id; output is [n×d].
pub fn embedding_lookup<T: Scalar>(table: &Tensor<T>, ids: &[usize]) -> Result<Tensor<T>> {
    let (v, d) = (table.rows(), table.cols());
    let mut out = Tensor::zeros(&[ids.len(), d]);
    for (i, &id) in ids.iter().enumerate() {
        if id >= v {
            return Err(Error::Index(format!("token id {id} ≥ table rows {v}")));
        }
        out.row_mut(i).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Accumulate output gradients back into the looked-up table rows.
pub fn embedding_backward<T: Scalar>(
    ids: &[usize],
    upstream: &Tensor<T>,
    table_grad: &mut Tensor<T>,
) {
    for (i, &id) in ids.iter().enumerate() {
        let src = upstream.row(i);
        let dst = table_grad.row_mut(id);
        for (d, s) in dst.iter_mut().zip(src) {
            *d += *s;
        }
    }
}

// ---------------------------------------------------------------------------
// linear

/// `x [n×p] · w [p×q] + b [q]` broadcast over rows.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if x.cols() != w.rows() || w.cols() != b.len() {
        return Err(Error::Shape(format!(
            "linear: x {:?} · w {:?} + b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = x.matmul(w);
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for (o, &bias) in row.iter_mut().zip(b.values()) {
            *o += bias;
        }
    }
    Ok(out)
}

/// Gradients of `linear` w.r.t. input, weight and bias.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    upstream: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let dx = upstream.matmul_bt(w);
    let dw = x.matmul_at(upstream);
    let mut db = Tensor::zeros(&[w.cols()]);
    for i in 0..upstream.rows() {
        for (acc, &u) in db.values_mut().iter_mut().zip(upstream.row(i)) {
            *acc += u;
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// layer norm

pub struct LayerNormCache<T> {
    /// Normalized activations, kept for the backward pass.
    pub xhat: Tensor<T>,
    pub rstd: Vec<T>,
}

/// Per-row normalization to zero mean and unit (population) variance, then
/// an elementwise affine with `gain` and `bias`.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> (Tensor<T>, LayerNormCache<T>) {
    let (n, d) = (x.rows(), x.cols());
    assert_eq!(gain.len(), d, "layer_norm gain size");
    assert_eq!(bias.len(), d, "layer_norm bias size");
    let inv_d = T::from_f64(1.0 / d as f64);
    let eps = T::from_f64(eps);

    let mut out = Tensor::zeros(&[n, d]);
    let mut xhat = Tensor::zeros(&[n, d]);
    let mut rstd = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mut mean = T::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::ZERO;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let r = T::ONE / (var + eps).sqrt();
        rstd.push(r);
        let xhat_row = xhat.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            xhat_row[j] = (v - mean) * r;
        }
        let out_row = out.row_mut(i);
        for j in 0..d {
            out_row[j] = xhat_row[j] * gain.values()[j] + bias.values()[j];
        }
    }
    (out, LayerNormCache { xhat, rstd })
}

/// Gradients for `layer_norm`; `dgain`/`dbias` are accumulated into.
pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Tensor<T>,
    upstream: &Tensor<T>,
    dgain: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) -> Tensor<T> {
    let (n, d) = (upstream.rows(), upstream.cols());
    let inv_d = T::from_f64(1.0 / d as f64);
    let mut dx = Tensor::zeros(&[n, d]);
    for i in 0..n {
        let up = upstream.row(i);
        let xhat = cache.xhat.row(i);
        for j in 0..d {
            dgain.values_mut()[j] += up[j] * xhat[j];
            dbias.values_mut()[j] += up[j];
        }
        // dL/dxhat = upstream ∘ gain
        let mut mean_g = T::ZERO;
        let mut mean_gx = T::ZERO;
        for j in 0..d {
            let gh = up[j] * gain.values()[j];
            mean_g += gh;
            mean_gx += gh * xhat[j];
        }
        mean_g *= inv_d;
        mean_gx *= inv_d;
        let r = cache.rstd[i];
        let dx_row = dx.row_mut(i);
        for j in 0..d {
            let gh = up[j] * gain.values()[j];
            dx_row[j] = r * (gh - mean_g - xhat[j] * mean_gx);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// softmax

/// Row-wise stabilized softmax (subtracts the row max).
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, m) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let row = x.row(i);
        let mut max = row[0];
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let out_row = out.row_mut(i);
        let mut sum = T::ZERO;
        for (o, &v) in out_row.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        let inv = T::ONE / sum;
        for o in out_row.iter_mut() {
            *o *= inv;
        }
    }
    out
}

/// Jacobian-vector product of a row softmax: `dx = y ∘ (dy − ⟨dy, y⟩)`.
pub fn softmax_rows_backward<T: Scalar>(
    softmax_out: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Tensor<T> {
    let (n, m) = (softmax_out.rows(), softmax_out.cols());
    let mut dx = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let y = softmax_out.row(i);
        let dy = upstream.row(i);
        let mut dot = T::ZERO;
        for j in 0..m {
            dot += dy[j] * y[j];
        }
        let dx_row = dx.row_mut(i);
        for j in 0..m {
            dx_row[j] = y[j] * (dy[j] - dot);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// causal scaled dot-product attention

pub struct AttentionCache<T> {
    /// Post-softmax attention weights [n×n]; future positions hold exact 0.
    pub weights: Tensor<T>,
}

/// `softmax(q·kᵀ/√d_h + mask) · v` with the additive causal mask.
pub fn causal_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<(Tensor<T>, AttentionCache<T>)> {
    let (n, d_h) = (q.rows(), q.cols());
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::Shape(format!(
            "attention: q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scale = T::from_f64(1.0 / (d_h as f64).sqrt());
    let mask = T::from_f64(CAUSAL_MASK);

    let mut scores = q.matmul_bt(k);
    for i in 0..n {
        let row = scores.row_mut(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s *= scale;
            if j > i {
                *s += mask;
            }
        }
    }
    let weights = softmax_rows(&scores);
    let out = weights.matmul(v);
    Ok((out, AttentionCache { weights }))
}

pub fn causal_attention_backward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    cache: &AttentionCache<T>,
    upstream: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d_h = q.cols();
    let scale = T::from_f64(1.0 / (d_h as f64).sqrt());

    let dv = cache.weights.matmul_at(upstream);
    let dweights = upstream.matmul_bt(v);
    let mut dscores = softmax_rows_backward(&cache.weights, &dweights);
    dscores.scale(scale);
    let dq = dscores.matmul(k);
    let dk = dscores.matmul_at(q);
    (dq, dk, dv)
}

// ---------------------------------------------------------------------------
// dropout

pub struct DropoutCache {
    kept: Option<Vec<bool>>,
    inv_keep: f64,
}

/// Inverted dropout: zero each element with probability `rate` and scale
/// survivors by 1/(1−rate). Identity at inference or rate 0.
pub fn dropout<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut SeededRng,
) -> Result<(Tensor<T>, DropoutCache)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Param(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((
            x.clone(),
            DropoutCache {
                kept: None,
                inv_keep: 1.0,
            },
        ));
    }
    let inv_keep = 1.0 / (1.0 - rate);
    let scale = T::from_f64(inv_keep);
    let mut out = x.clone();
    let mut kept = Vec::with_capacity(x.len());
    for o in out.values_mut() {
        let keep = rng.random::<f64>() >= rate;
        kept.push(keep);
        *o = if keep { *o * scale } else { T::ZERO };
    }
    Ok((
        out,
        DropoutCache {
            kept: Some(kept),
            inv_keep,
        },
    ))
}

pub fn dropout_backward<T: Scalar>(cache: &DropoutCache, upstream: &Tensor<T>) -> Tensor<T> {
    match &cache.kept {
        None => upstream.clone(),
        Some(kept) => {
            let scale = T::from_f64(cache.inv_keep);
            let mut dx = upstream.clone();
            for (d, &keep) in dx.values_mut().iter_mut().zip(kept) {
                *d = if keep { *d * scale } else { T::ZERO };
            }
            dx
        }
    }
}

// ---------------------------------------------------------------------------
// relu

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    let mut dx = upstream.clone();
    for (d, &v) in dx.values_mut().iter_mut().zip(x.values()) {
        if v <= T::ZERO {
            *d = T::ZERO;
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// masked cross-entropy

/// Unnormalized masked cross-entropy: summed loss, valid-position count, and
/// the per-position gradient `softmax(logits) − onehot(target)` (zero rows
/// at ignored positions). Callers divide by their own position count, which
/// lets a batch average over all of its sequences at once.
pub fn masked_cross_entropy_sum<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    ignore: &[usize],
) -> Result<(f64, usize, Tensor<T>)> {
    let (n, v) = (logits.rows(), logits.cols());
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "{} targets for {n} logit rows",
            targets.len()
        )));
    }
    let mut dlogits = Tensor::zeros(&[n, v]);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (i, &target) in targets.iter().enumerate() {
        if target >= v {
            return Err(Error::Index(format!("target {target} ≥ vocab {v}")));
        }
        if ignore.contains(&target) {
            continue;
        }
        count += 1;
        let row = logits.row(i);
        let mut max = row[0];
        for &x in row {
            if x > max {
                max = x;
            }
        }
        let mut denom = T::ZERO;
        for &x in row {
            denom += (x - max).exp();
        }
        let log_denom = denom.ln();
        sum += (log_denom - (row[target] - max)).to_f64();

        let inv = T::ONE / denom;
        let drow = dlogits.row_mut(i);
        for j in 0..v {
            drow[j] = (row[j] - max).exp() * inv;
        }
        drow[target] -= T::ONE;
    }
    Ok((sum, count, dlogits))
}

/// Mean masked cross-entropy over one sequence plus its logits gradient.
/// All positions ignored → loss 0 and an all-zero gradient.
pub fn cross_entropy_masked<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    ignore: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let (sum, count, mut dlogits) = masked_cross_entropy_sum(logits, targets, ignore)?;
    if count == 0 {
        return Ok((0.0, dlogits));
    }
    dlogits.scale(T::from_f64(1.0 / count as f64));
    Ok((sum / count as f64, dlogits))
}

// ---------------------------------------------------------------------------
// gradient checking

/// Central finite differences of a scalar-valued closure at `point`.
pub fn central_diff_grad<F>(mut f: F, point: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        grad.push((plus - minus) / (2.0 * eps));
    }
    grad
}

/// Max relative error between an analytic gradient and central differences,
/// with denominator `max(|a|, |b|, 1e-8)`.
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len());
    let numeric = central_diff_grad(f, point, eps);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8))
        .fold(0.0, f64::max)
}
