//! Finite-difference gradient checking.
//!
//! Compares analytic gradients against central differences
//! `(f(x + eps) - f(x - eps)) / (2 eps)` computed in double precision, one
//! parameter at a time. The relative error uses a floored denominator,
//! `|a - n| / max(|a| + |n|, 1e-3)`, so that finite-difference roundoff on
//! near-zero gradients does not dominate the report.

use crate::error::Result;
use crate::mask::LayerMaskSet;
use crate::objectives::{ObjectiveSpec, ScopeAux};

use super::config::ModelConfig;
use super::net::loss_and_grads;
use super::params::Parameters;

const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index (in `Parameters::slices` order) of the worst parameter.
    pub worst_index: usize,
    pub checked: usize,
}

/// Check every parameter of the model against central finite differences of
/// the batch loss. Exhaustive and O(num_params) forward passes — intended
/// for miniature configurations.
pub fn gradient_check<S: AsRef<[u32]> + Sync>(
    config: &ModelConfig,
    params: &Parameters,
    batch: &[S],
    objective: &ObjectiveSpec,
    masks: Option<&[LayerMaskSet]>,
    aux: Option<&ScopeAux>,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grads(config, params, batch, objective, masks, aux)?;
    let analytic_flat: Vec<f64> =
        analytic.slices().iter().flat_map(|s| s.iter().copied()).collect();

    let mut work = params.clone();
    let n_tensors = work.slices().len();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst_index: 0, checked: 0 };
    let mut flat_index = 0usize;

    for tensor in 0..n_tensors {
        let len = work.slices()[tensor].len();
        for i in 0..len {
            let orig = work.slices()[tensor][i];
            work.slices_mut()[tensor][i] = orig + eps;
            let (f_plus, _) = loss_and_grads(config, &work, batch, objective, masks, aux)?;
            work.slices_mut()[tensor][i] = orig - eps;
            let (f_minus, _) = loss_and_grads(config, &work, batch, objective, masks, aux)?;
            work.slices_mut()[tensor][i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic_flat[flat_index];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_index = flat_index;
            }
            report.checked += 1;
            flat_index += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::PenalizationScope;

    fn check_cfg() -> ModelConfig {
        ModelConfig { layers: 1, heads: 2, d_model: 8, d_ff: 16, vocab: 6, max_len: 8 }
    }

    fn batch() -> Vec<Vec<u32>> {
        vec![vec![1, 2, 1, 2, 3], vec![0, 4, 5, 0, 4, 5]]
    }

    #[test]
    fn mle_gradients_match_finite_differences() {
        let cfg = check_cfg();
        let params = Parameters::init(&cfg, 0);
        let r = gradient_check(&cfg, &params, &batch(), &ObjectiveSpec::Mle, None, None, 1e-4)
            .unwrap();
        assert!(r.max_rel_err < 1e-4, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn masked_gradients_match_finite_differences() {
        let cfg = check_cfg();
        let params = Parameters::init(&cfg, 1);
        let b = batch();
        let masks: Vec<LayerMaskSet> = b
            .iter()
            .enumerate()
            .map(|(i, ids)| LayerMaskSet::generate(ids, 1.0, 2, 3, i as u64, cfg.layers))
            .collect();
        let spec = ObjectiveSpec::RepDropout { p: 1.0, n: 2 };
        let r =
            gradient_check(&cfg, &params, &b, &spec, Some(&masks), None, 1e-4).unwrap();
        assert!(r.max_rel_err < 1e-4, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn unlikelihood_gradients_match_finite_differences() {
        let cfg = check_cfg();
        let params = Parameters::init(&cfg, 2);
        let spec = ObjectiveSpec::Unlikelihood { alpha: 1.0, scope: PenalizationScope::PrefixAll };
        let r = gradient_check(&cfg, &params, &batch(), &spec, None, None, 1e-4).unwrap();
        assert!(r.max_rel_err < 1e-4, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn scalegrad_gradients_match_finite_differences() {
        let cfg = check_cfg();
        let params = Parameters::init(&cfg, 3);
        let spec = ObjectiveSpec::ScaleGrad {
            gamma: 0.2,
            scope: PenalizationScope::PrefixRepetitive { n: 2 },
        };
        let r = gradient_check(&cfg, &params, &batch(), &spec, None, None, 1e-4).unwrap();
        assert!(r.max_rel_err < 1e-4, "max rel err {}", r.max_rel_err);
    }
}
