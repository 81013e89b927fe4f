use super::model::ModelParams;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: ModelParams::zeros(params.dims()),
            v: ModelParams::zeros(params.dims()),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: AdamConfig,
) -> Result<(), NnError> {
    if params.dims() != grads.dims() || params.dims() != state.m.dims() {
        return Err(NnError::Shape("optimizer state does not match parameters".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(state.m.blocks_mut())
        .zip(state.v.blocks_mut());
    for (((p, g), m), v) in blocks {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelDims;

    fn scalar_model(w: f64) -> ModelParams {
        let mut p = ModelParams::zeros(ModelDims { vocab_size: 1, embed_dim: 1, hidden_dim: 1, classes: 1 });
        p.dense_b[0] = w;
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_model(0.3);
        let g = ModelParams::zeros(p.dims());
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(p, scalar_model(0.3));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t = 1: m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε) ≈ lr.
        let mut p = scalar_model(1.0);
        let mut g = ModelParams::zeros(p.dims());
        g.dense_b[0] = 1.0;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, AdamConfig::with_lr(0.1)).unwrap();
        assert!((p.dense_b[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn trajectory_is_reproducible() {
        let run = || {
            let mut p = scalar_model(1.0);
            let mut g = ModelParams::zeros(p.dims());
            g.dense_b[0] = 0.5;
            let mut s = AdamState::new(&p);
            for _ in 0..2 {
                adam_step(&mut p, &g, &mut s, AdamConfig::with_lr(0.01)).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = scalar_model(1.0);
        let g = ModelParams::zeros(ModelDims { vocab_size: 2, embed_dim: 1, hidden_dim: 1, classes: 1 });
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, AdamConfig::with_lr(0.1)).is_err());
    }
}
