use rand::Rng;

use super::{LanguageModel, LmError, SamplingParams};
use crate::lm::sample_next;
use crate::seqcore::TokenId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Newly generated tokens, excluding the prompt and the stop token.
    pub tokens: Vec<TokenId>,
    /// Whether generation ended on the stop condition (as opposed to
    /// reaching `max_new`).
    pub stopped: bool,
}

/// Sample up to `max_new` tokens after `prompt`, stopping early when the
/// model emits `stop_token`.
pub fn generate<R: Rng + ?Sized>(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    params: &SamplingParams,
    max_new: usize,
    stop_token: Option<TokenId>,
    rng: &mut R,
) -> Result<Generation, LmError> {
    generate_until(model, prompt, params, max_new, |t| Some(t) == stop_token, rng)
}

/// Like [`generate`] with an arbitrary stop predicate. The token that
/// triggers the predicate is not included in the output.
///
/// If the context fills before `max_new` tokens or a stop, the tokens
/// produced so far are returned inside [`LmError::Truncated`].
pub fn generate_until<R: Rng + ?Sized>(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    params: &SamplingParams,
    max_new: usize,
    mut stop: impl FnMut(TokenId) -> bool,
    rng: &mut R,
) -> Result<Generation, LmError> {
    params.validate()?;
    if prompt.is_empty() {
        return Err(LmError::Sampling("empty prompt".into()));
    }
    let max = model.max_positions();
    if prompt.len() > max {
        return Err(LmError::ContextLength { len: prompt.len(), max });
    }
    let vocab = model.vocab_size();
    if let Some(&t) = prompt.iter().find(|&&t| t as usize >= vocab) {
        return Err(LmError::TokenOutOfRange(t));
    }

    let mut dec = model.decoder();
    let mut logits = Vec::new();
    for &t in prompt {
        logits = dec.push(t)?;
    }
    let mut out = Vec::new();
    while out.len() < max_new {
        let next = sample_next(&logits, params, rng)?;
        if stop(next) {
            return Ok(Generation { tokens: out, stopped: true });
        }
        out.push(next);
        if out.len() == max_new {
            break;
        }
        if dec.position() >= max {
            return Err(LmError::Truncated { partial: out });
        }
        logits = dec.push(next)?;
    }
    Ok(Generation { tokens: out, stopped: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::toy::BigramModel;
    use crate::rng::seeded;

    /// 0 -> 1 -> 2 -> 3(stop), deterministic under argmax.
    fn chain() -> BigramModel {
        let mut table = vec![vec![-10.0f32; 4]; 4];
        table[0][1] = 10.0;
        table[1][2] = 10.0;
        table[2][3] = 10.0;
        table[3][0] = 10.0;
        BigramModel { table, max_positions: 8 }
    }

    fn argmax() -> SamplingParams {
        SamplingParams { top_k: 1, ..Default::default() }
    }

    #[test]
    fn stops_on_stop_token() {
        let g = generate(&chain(), &[0], &argmax(), 10, Some(3), &mut seeded(0)).unwrap();
        assert_eq!(g, Generation { tokens: vec![1, 2], stopped: true });
    }

    #[test]
    fn respects_max_new() {
        let g = generate(&chain(), &[0], &argmax(), 2, Some(3), &mut seeded(0)).unwrap();
        assert_eq!(g, Generation { tokens: vec![1, 2], stopped: false });
        let g = generate(&chain(), &[0], &argmax(), 0, None, &mut seeded(0)).unwrap();
        assert!(g.tokens.is_empty());
    }

    #[test]
    fn context_exhaustion_returns_partial() {
        let err = generate(&chain(), &[0, 1, 2, 3, 0, 1], &argmax(), 10, None, &mut seeded(0)).unwrap_err();
        match err {
            LmError::Truncated { partial } => assert_eq!(partial, vec![2, 3, 0]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_prompts() {
        assert!(generate(&chain(), &[], &argmax(), 1, None, &mut seeded(0)).is_err());
        assert!(matches!(generate(&chain(), &[7], &argmax(), 1, None, &mut seeded(0)), Err(LmError::TokenOutOfRange(7))));
        assert!(matches!(generate(&chain(), &[0; 9], &argmax(), 1, None, &mut seeded(0)), Err(LmError::ContextLength { .. })));
    }

    #[test]
    fn handcrafted_weights_force_residue_then_eos() {
        use crate::lm::{ModelConfig, Transformer, WeightBundle};
        // MID (23) -> A (0) -> EOS (24).
        let cfg = ModelConfig { n_layers: 2, d_model: 32, n_heads: 4, vocab_size: 26, max_positions: 64 };
        let t = Transformer::from_bundle(&WeightBundle::scripted(cfg, &[(23, 0), (0, 24)]).unwrap()).unwrap();
        let prompt = [21, 0, 0, 0, 0, 22, 1, 1, 1, 1, 23];
        for seed in 0..20 {
            let g = generate(&t, &prompt, &SamplingParams::default(), 10, Some(24), &mut seeded(seed)).unwrap();
            assert_eq!(g, Generation { tokens: vec![0], stopped: true });
        }
    }

    #[test]
    fn same_seed_same_output() {
        let m = crate::lm::toy::uniform(20);
        let p = SamplingParams { top_p: 1.0, ..Default::default() };
        let a = generate(&m, &[0], &p, 50, None, &mut seeded(9)).unwrap();
        let b = generate(&m, &[0], &p, 50, None, &mut seeded(9)).unwrap();
        let c = generate(&m, &[0], &p, 50, None, &mut seeded(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
