//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{batch_gradients, batch_loss, Dropout, Example, ModelDims, ModelParams};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub dims: ModelDims,
    pub seq_len: usize,
    pub batch: usize,
    /// Half-width of the central difference.
    pub eps: f64,
    /// Dropout rate applied with a fixed mask per example.
    pub dropout: f64,
    /// Parameters are drawn uniformly from ±`init_scale`.
    pub init_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            dims: ModelDims { vocab_size: 20, embed_dim: 8, hidden_dim: 8, classes: 3 },
            seq_len: 12,
            batch: 2,
            eps: 1e-5,
            dropout: 0.1,
            init_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_block: &'static str,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare backprop against central differences on every parameter of a
/// random model.
pub fn grad_check(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(cfg.dims);
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            *v = rng.gen_range(-cfg.init_scale..=cfg.init_scale);
        }
    }
    let inputs: Vec<(Vec<u32>, usize)> = (0..cfg.batch)
        .map(|_| {
            let ids = (0..cfg.seq_len).map(|_| rng.gen_range(0..cfg.dims.vocab_size as u32)).collect();
            (ids, rng.gen_range(0..cfg.dims.classes))
        })
        .collect();
    let dropout_seeds: Vec<u64> = (0..cfg.batch).map(|_| rng.gen()).collect();
    let batch: Vec<Example<'_>> = inputs
        .iter()
        .zip(&dropout_seeds)
        .map(|((ids, label), &seed)| Example {
            ids,
            label: *label,
            dropout: (cfg.dropout > 0.0).then_some(Dropout { rate: cfg.dropout, seed }),
        })
        .collect();

    let mut grads = ModelParams::zeros(cfg.dims);
    batch_gradients(&params, &batch, &mut grads)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst_block: "", checked: 0 };
    for (b, name) in ModelParams::BLOCK_NAMES.iter().enumerate() {
        let n = params.blocks()[b].len();
        for i in 0..n {
            let orig = params.blocks()[b][i];
            params.blocks_mut()[b][i] = orig + cfg.eps;
            let plus = batch_loss(&params, &batch)?;
            params.blocks_mut()[b][i] = orig - cfg.eps;
            let minus = batch_loss(&params, &batch)?;
            params.blocks_mut()[b][i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let err = relative_error(grads.blocks()[b][i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_block = name;
            }
        }
    }
    Ok(report)
}
