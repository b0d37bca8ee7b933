use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LmError;
use crate::seqcore::TokenId;

/// Below this temperature sampling degenerates to argmax.
pub const ARGMAX_TEMPERATURE: f64 = 1e-6;

/// Slack on the cumulative-mass comparison so that a nucleus boundary that
/// is exact in real arithmetic is not missed through rounding.
const NUCLEUS_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub top_k: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { top_k: 100, top_p: 0.95, temperature: 1.0, seed: 0 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.top_k == 0 {
            return Err(LmError::Sampling("top_k must be at least 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LmError::Sampling(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(LmError::Sampling(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

/// The candidate set a draw is taken from, with renormalised probabilities,
/// in descending probability order (ties by ascending id).
///
/// The set is the intersection of the `top_k` most likely tokens with the
/// smallest prefix of the sorted distribution whose mass reaches `top_p`,
/// both computed on the temperature-scaled softmax of `logits`.
pub fn nucleus(logits: &[f32], params: &SamplingParams) -> Result<Vec<(TokenId, f64)>, LmError> {
    params.validate()?;
    let finite: Vec<(TokenId, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(_, x)| !x.is_nan() && **x != f32::NEG_INFINITY)
        .map(|(i, &x)| (i as TokenId, x as f64))
        .collect();
    if finite.is_empty() {
        return Err(LmError::Sampling("degenerate logit row (no finite entries)".into()));
    }
    if finite.iter().any(|(_, x)| x.is_infinite()) {
        return Err(LmError::Sampling("logit row contains +inf".into()));
    }

    let mut sorted = finite;
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if params.temperature < ARGMAX_TEMPERATURE {
        return Ok(vec![(sorted[0].0, 1.0)]);
    }

    let max = sorted[0].1;
    let weights: Vec<f64> = sorted.iter().map(|(_, x)| ((x - max) / params.temperature).exp()).collect();
    let z: f64 = weights.iter().sum();

    let mut keep = 0;
    let mut cum = 0.0;
    for w in &weights {
        keep += 1;
        cum += w / z;
        if cum >= params.top_p - NUCLEUS_SLACK {
            break;
        }
    }
    let keep = keep.min(params.top_k);
    let kept_mass: f64 = weights[..keep].iter().sum();
    Ok(sorted[..keep].iter().zip(&weights).map(|(&(id, _), w)| (id, w / kept_mass)).collect())
}

/// Draw the next token from the nucleus of `logits`.
pub fn sample_next<R: Rng + ?Sized>(logits: &[f32], params: &SamplingParams, rng: &mut R) -> Result<TokenId, LmError> {
    let set = nucleus(logits, params)?;
    if set.len() == 1 {
        return Ok(set[0].0);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(id, p) in &set {
        acc += p;
        if u < acc {
            return Ok(id);
        }
    }
    Ok(set.last().expect("non-empty").0)
}
