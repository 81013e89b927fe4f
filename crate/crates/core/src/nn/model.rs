//! Embedding → GRU → dot-product attention → dense → softmax, with exact
//! reverse-mode gradients written out by hand.
//!
//! Per step, with `x_t` the embedding row of id `t`:
//!
//! ```text
//! z_t = σ(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = σ(W_r x_t + U_r h_{t-1} + b_r)
//! c_t = tanh(W_h x_t + U_h (r_t ⊙ h_{t-1}) + b_h)
//! h_t = z_t ⊙ h_{t-1} + (1 - z_t) ⊙ c_t
//! ```
//!
//! Outputs `o_t = h_t ⊙ mask_t` (inverted dropout, training only) feed the
//! attention: `q = o_T`, `score_t = Σ_j a_j q_j o_tj / √H`,
//! `ctx = Σ_t softmax(score)_t o_t`, and the classifier reads `[q; ctx]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{axpy, dot, sigmoid, Matrix};
use super::NnError;

/// Loss floor for `-ln p` when the gold probability underflows.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: Matrix,
    pub gru: GruParams,
    /// Per-dimension weights of the attention score.
    pub attn: Vec<f64>,
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
}

impl ModelParams {
    pub const BLOCK_NAMES: [&'static str; 13] = [
        "embedding", "gru.w_z", "gru.w_r", "gru.w_h", "gru.u_z", "gru.u_r", "gru.u_h", "gru.b_z",
        "gru.b_r", "gru.b_h", "attn", "dense_w", "dense_b",
    ];

    pub fn zeros(d: ModelDims) -> Self {
        let (e, h) = (d.embed_dim, d.hidden_dim);
        Self {
            embedding: Matrix::zeros(d.vocab_size, e),
            gru: GruParams {
                w_z: Matrix::zeros(h, e),
                w_r: Matrix::zeros(h, e),
                w_h: Matrix::zeros(h, e),
                u_z: Matrix::zeros(h, h),
                u_r: Matrix::zeros(h, h),
                u_h: Matrix::zeros(h, h),
                b_z: vec![0.0; h],
                b_r: vec![0.0; h],
                b_h: vec![0.0; h],
            },
            attn: vec![0.0; h],
            dense_w: Matrix::zeros(d.classes, 2 * h),
            dense_b: vec![0.0; d.classes],
        }
    }

    /// Embeddings uniform in ±0.05, recurrent and dense weights uniform in
    /// ±1/√fan-in, attention weights 1, dense bias 0.
    pub fn init(d: ModelDims, rng: &mut impl Rng) -> Self {
        let (e, h) = (d.embed_dim, d.hidden_dim);
        let k = 1.0 / (h as f64).sqrt();
        let vec_u = |n: usize, rng: &mut dyn rand::RngCore| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-k..=k)).collect()
        };
        let embedding = Matrix::uniform(d.vocab_size, e, 0.05, rng);
        let w_z = Matrix::uniform(h, e, k, rng);
        let w_r = Matrix::uniform(h, e, k, rng);
        let w_h = Matrix::uniform(h, e, k, rng);
        let u_z = Matrix::uniform(h, h, k, rng);
        let u_r = Matrix::uniform(h, h, k, rng);
        let u_h = Matrix::uniform(h, h, k, rng);
        let b_z = vec_u(h, rng);
        let b_r = vec_u(h, rng);
        let b_h = vec_u(h, rng);
        let dense_w = Matrix::uniform(d.classes, 2 * h, 1.0 / ((2 * h) as f64).sqrt(), rng);
        Self {
            embedding,
            gru: GruParams { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h },
            attn: vec![1.0; h],
            dense_w,
            dense_b: vec![0.0; d.classes],
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.embedding.rows,
            embed_dim: self.embedding.cols,
            hidden_dim: self.gru.b_z.len(),
            classes: self.dense_b.len(),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 13] {
        let g = &self.gru;
        [
            &self.embedding.data,
            &g.w_z.data,
            &g.w_r.data,
            &g.w_h.data,
            &g.u_z.data,
            &g.u_r.data,
            &g.u_h.data,
            &g.b_z,
            &g.b_r,
            &g.b_h,
            &self.attn,
            &self.dense_w.data,
            &self.dense_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 13] {
        let g = &mut self.gru;
        [
            &mut self.embedding.data,
            &mut g.w_z.data,
            &mut g.w_r.data,
            &mut g.w_h.data,
            &mut g.u_z.data,
            &mut g.u_r.data,
            &mut g.u_h.data,
            &mut g.b_z,
            &mut g.b_r,
            &mut g.b_h,
            &mut self.attn,
            &mut self.dense_w.data,
            &mut self.dense_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.fill(value);
        }
    }

    pub fn check_finite(&self) -> Result<(), NnError> {
        for (name, b) in Self::BLOCK_NAMES.iter().zip(self.blocks()) {
            if b.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("parameter block {name}")));
            }
        }
        Ok(())
    }
}

/// Inverted dropout on GRU outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GruStep {
    pub id: u32,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GruOutput {
    pub steps: Vec<GruStep>,
    pub masks: Option<Vec<Vec<f64>>>,
    /// Per-step outputs after dropout.
    pub states: Vec<Vec<f64>>,
}

impl GruOutput {
    pub fn h_final(&self) -> &[f64] {
        self.states.last().expect("GRU output is never empty")
    }
}

/// Run the recurrence from `h_0 = 0` over `ids`.
pub fn gru_forward(
    ids: &[u32],
    params: &ModelParams,
    dropout: Option<Dropout>,
) -> Result<GruOutput, NnError> {
    if ids.is_empty() {
        return Err(NnError::Shape("empty input sequence".into()));
    }
    let vocab = params.embedding.rows;
    if let Some(&bad) = ids.iter().find(|&&i| i as usize >= vocab) {
        return Err(NnError::Shape(format!("id {bad} outside vocabulary of {vocab}")));
    }
    let g = &params.gru;
    let hd = g.b_z.len();
    let mut h = vec![0.0; hd];
    let mut steps = Vec::with_capacity(ids.len());
    let mut states = Vec::with_capacity(ids.len());
    let mut masks = dropout.filter(|d| d.rate > 0.0).map(|d| (d, ChaCha8Rng::seed_from_u64(d.seed), Vec::new()));
    for &id in ids {
        let x = params.embedding.row(id as usize);
        let mut z = g.b_z.clone();
        g.w_z.matvec_add(x, &mut z);
        g.u_z.matvec_add(&h, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = g.b_r.clone();
        g.w_r.matvec_add(x, &mut r);
        g.u_r.matvec_add(&h, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let mut c = g.b_h.clone();
        g.w_h.matvec_add(x, &mut c);
        g.u_h.matvec_add(&rh, &mut c);
        c.iter_mut().for_each(|v| *v = v.tanh());
        let h_new: Vec<f64> = (0..hd).map(|j| z[j] * h[j] + (1.0 - z[j]) * c[j]).collect();
        if h_new.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(format!("GRU state at step {}", steps.len())));
        }
        let out = match &mut masks {
            Some((d, rng, ms)) => {
                let keep = 1.0 / (1.0 - d.rate);
                let m: Vec<f64> = (0..hd)
                    .map(|_| if rng.gen::<f64>() < d.rate { 0.0 } else { keep })
                    .collect();
                let o = h_new.iter().zip(&m).map(|(a, b)| a * b).collect();
                ms.push(m);
                o
            }
            None => h_new.clone(),
        };
        steps.push(GruStep { id, h_prev: std::mem::replace(&mut h, h_new), z, r, c });
        states.push(out);
    }
    Ok(GruOutput {
        steps,
        masks: masks.map(|(_, _, m)| m),
        states,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
}

/// Scaled dot-product attention with the final state as the query.
pub fn attention_pool(states: &[Vec<f64>], h_final: &[f64], attn: &[f64]) -> Attention {
    let scale = 1.0 / (h_final.len() as f64).sqrt();
    let query: Vec<f64> = attn.iter().zip(h_final).map(|(a, q)| a * q).collect();
    let scores: Vec<f64> = states.iter().map(|s| dot(&query, s) * scale).collect();
    let (alpha, _) = softmax_probs(&scores);
    let mut context = vec![0.0; h_final.len()];
    for (a, s) in alpha.iter().zip(states) {
        axpy(*a, s, &mut context);
    }
    Attention { alpha, context }
}

/// `dense_w · [h_final; context] + dense_b`
pub fn classify(h_final: &[f64], context: &[f64], params: &ModelParams) -> Result<Vec<f64>, NnError> {
    let features: Vec<f64> = h_final.iter().chain(context).copied().collect();
    if features.len() != params.dense_w.cols {
        return Err(NnError::Shape(format!(
            "dense layer expects {} features, got {}",
            params.dense_w.cols,
            features.len()
        )));
    }
    let mut logits = params.dense_b.clone();
    params.dense_w.matvec_add(&features, &mut logits);
    Ok(logits)
}

/// Max-shifted softmax and the index of the largest probability.
pub fn softmax_probs(logits: &[f64]) -> (Vec<f64>, usize) {
    let (argmax, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / total).collect(), argmax)
}

/// `-ln p[label]`, with the probability floored at [`PROB_FLOOR`].
pub fn nll_loss(probs: &[f64], label: usize) -> f64 {
    let p = probs[label];
    if p < PROB_FLOOR {
        log::warn!("gold probability {p:e} below floor; loss clamped");
    }
    -p.max(PROB_FLOOR).ln()
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub gru: GruOutput,
    pub attn: Attention,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub argmax: usize,
}

pub fn forward(params: &ModelParams, ids: &[u32], dropout: Option<Dropout>) -> Result<Forward, NnError> {
    let gru = gru_forward(ids, params, dropout)?;
    let attn = attention_pool(&gru.states, gru.h_final(), &params.attn);
    let logits = classify(gru.h_final(), &attn.context, params)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("logits".into()));
    }
    let (probs, argmax) = softmax_probs(&logits);
    Ok(Forward { gru, attn, logits, probs, argmax })
}

/// Accumulate `∂(-ln p[label]) / ∂θ` into `grads`.
pub fn backward(params: &ModelParams, fwd: &Forward, label: usize, grads: &mut ModelParams) {
    let hd = params.gru.b_z.len();
    let states = &fwd.gru.states;
    let t_len = states.len();
    let q = fwd.gru.h_final();

    // Dense layer.
    let mut dlogits = fwd.probs.clone();
    dlogits[label] -= 1.0;
    let features: Vec<f64> = q.iter().chain(&fwd.attn.context).copied().collect();
    grads.dense_w.add_outer(&dlogits, &features);
    axpy(1.0, &dlogits, &mut grads.dense_b);
    let mut dfeat = vec![0.0; 2 * hd];
    params.dense_w.matvec_t_add(&dlogits, &mut dfeat);
    let (dq_direct, dctx) = dfeat.split_at(hd);
    let mut dq = dq_direct.to_vec();

    // Attention.
    let alpha = &fwd.attn.alpha;
    let mut dstates = vec![vec![0.0; hd]; t_len];
    let dalpha: Vec<f64> = states.iter().map(|s| dot(dctx, s)).collect();
    let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
    let scale = 1.0 / (hd as f64).sqrt();
    for t in 0..t_len {
        axpy(alpha[t], dctx, &mut dstates[t]);
        let ds = alpha[t] * (dalpha[t] - mean) * scale;
        if ds == 0.0 {
            continue;
        }
        let s = &states[t];
        for j in 0..hd {
            grads.attn[j] += ds * q[j] * s[j];
            dq[j] += ds * params.attn[j] * s[j];
            dstates[t][j] += ds * params.attn[j] * q[j];
        }
    }
    axpy(1.0, &dq, &mut dstates[t_len - 1]);

    if let Some(masks) = &fwd.gru.masks {
        for (d, m) in dstates.iter_mut().zip(masks) {
            d.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
    }

    // Backpropagation through time.
    let g = &params.gru;
    let mut carry = vec![0.0; hd];
    let mut dz = vec![0.0; hd];
    let mut dac = vec![0.0; hd];
    let mut dar = vec![0.0; hd];
    for (t, step) in fwd.gru.steps.iter().enumerate().rev() {
        let x = params.embedding.row(step.id as usize);
        let hp = &step.h_prev;
        let mut dhp = vec![0.0; hd];
        for j in 0..hd {
            let dh = dstates[t][j] + carry[j];
            dz[j] = dh * (hp[j] - step.c[j]) * step.z[j] * (1.0 - step.z[j]);
            dac[j] = dh * (1.0 - step.z[j]) * (1.0 - step.c[j] * step.c[j]);
            dhp[j] = dh * step.z[j];
        }
        let mut dx = vec![0.0; x.len()];
        let rh: Vec<f64> = step.r.iter().zip(hp).map(|(a, b)| a * b).collect();
        grads.gru.w_h.add_outer(&dac, x);
        grads.gru.u_h.add_outer(&dac, &rh);
        axpy(1.0, &dac, &mut grads.gru.b_h);
        g.w_h.matvec_t_add(&dac, &mut dx);
        let mut drh = vec![0.0; hd];
        g.u_h.matvec_t_add(&dac, &mut drh);
        for j in 0..hd {
            dar[j] = drh[j] * hp[j] * step.r[j] * (1.0 - step.r[j]);
            dhp[j] += drh[j] * step.r[j];
        }

        grads.gru.w_z.add_outer(&dz, x);
        grads.gru.u_z.add_outer(&dz, hp);
        axpy(1.0, &dz, &mut grads.gru.b_z);
        g.w_z.matvec_t_add(&dz, &mut dx);
        g.u_z.matvec_t_add(&dz, &mut dhp);

        grads.gru.w_r.add_outer(&dar, x);
        grads.gru.u_r.add_outer(&dar, hp);
        axpy(1.0, &dar, &mut grads.gru.b_r);
        g.w_r.matvec_t_add(&dar, &mut dx);
        g.u_r.matvec_t_add(&dar, &mut dhp);

        axpy(1.0, &dx, grads.embedding.row_mut(step.id as usize));
        carry = dhp;
    }
}

/// One training example: ids, gold class, optional dropout.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub ids: &'a [u32],
    pub label: usize,
    pub dropout: Option<Dropout>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchResult {
    /// Summed negative log-likelihood.
    pub loss: f64,
    pub correct: usize,
}

/// Summed loss over `batch` and its exact gradient, accumulated into `grads`.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[Example<'_>],
    grads: &mut ModelParams,
) -> Result<BatchResult, NnError> {
    let mut loss = 0.0;
    let mut correct = 0;
    for ex in batch {
        let fwd = forward(params, ex.ids, ex.dropout)?;
        loss += nll_loss(&fwd.probs, ex.label);
        correct += usize::from(fwd.argmax == ex.label);
        backward(params, &fwd, ex.label, grads);
    }
    if !loss.is_finite() {
        return Err(NnError::NonFinite("loss".into()));
    }
    grads.check_finite().map_err(|e| match e {
        NnError::NonFinite(what) => NnError::NonFinite(format!("gradient of {}", what.trim_start_matches("parameter block "))),
        other => other,
    })?;
    Ok(BatchResult { loss, correct })
}

/// Summed loss only, no gradients.
pub fn batch_loss(params: &ModelParams, batch: &[Example<'_>]) -> Result<f64, NnError> {
    batch.iter().try_fold(0.0, |acc, ex| {
        let fwd = forward(params, ex.ids, ex.dropout)?;
        Ok(acc + nll_loss(&fwd.probs, ex.label))
    })
}
