use super::{forward_logits, LanguageModel, LmError, Transformer};
use crate::seqcore::TokenId;

fn log_softmax_at(row: &[f32], target: usize) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x as f64));
    let lse = max + row.iter().map(|&x| (x as f64 - max).exp()).sum::<f64>().ln();
    row[target] as f64 - lse
}

/// Total negative log-likelihood (nats) of `tokens` given a leading `bos`,
/// and the number of predicted tokens.
pub fn sequence_nll(model: &dyn LanguageModel, tokens: &[TokenId], bos: TokenId) -> Result<(f64, usize), LmError> {
    if tokens.is_empty() {
        return Ok((0.0, 0));
    }
    let vocab = model.vocab_size();
    if let Some(&t) = tokens.iter().chain(std::iter::once(&bos)).find(|&&t| t as usize >= vocab) {
        return Err(LmError::TokenOutOfRange(t));
    }
    let mut input = Vec::with_capacity(tokens.len());
    input.push(bos);
    input.extend_from_slice(&tokens[..tokens.len() - 1]);
    let logits = forward_logits(model, &input)?;
    let nll = tokens.iter().enumerate().map(|(i, &t)| -log_softmax_at(logits.row(i), t as usize)).sum();
    Ok((nll, tokens.len()))
}

/// Mean per-token log-probability (nats): higher means more likely.
pub fn log_likelihood_score(model: &dyn LanguageModel, tokens: &[TokenId], bos: TokenId) -> Result<f64, LmError> {
    let (nll, n) = sequence_nll(model, tokens, bos)?;
    if n == 0 {
        return Err(LmError::EmptyCorpus);
    }
    Ok(-nll / n as f64)
}

/// Corpus perplexity: `exp` of the mean per-token NLL over all sequences.
pub fn perplexity<S: AsRef<[TokenId]>>(model: &dyn LanguageModel, seqs: &[S], bos: TokenId) -> Result<f64, LmError> {
    let mut total = 0.0;
    let mut count = 0;
    for s in seqs {
        let (nll, n) = sequence_nll(model, s.as_ref(), bos)?;
        total += nll;
        count += n;
    }
    if count == 0 {
        return Err(LmError::EmptyCorpus);
    }
    Ok((total / count as f64).exp())
}

/// Mean final hidden state over the residue positions (the `bos` position
/// is excluded).
pub fn mean_embedding(model: &Transformer, tokens: &[TokenId], bos: TokenId) -> Result<Vec<f64>, LmError> {
    if tokens.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let mut input = Vec::with_capacity(tokens.len() + 1);
    input.push(bos);
    input.extend_from_slice(tokens);
    let h = model.hidden_states(&input)?;
    let mut mean = vec![0.0f64; h.cols];
    for r in 1..h.rows {
        for (m, &x) in mean.iter_mut().zip(h.row(r)) {
            *m += x as f64;
        }
    }
    let n = tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::toy::{uniform, BigramModel};
    use crate::lm::{ModelConfig, WeightBundle};
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn uniform_model_has_perplexity_vocab() {
        let m = uniform(25);
        let mut rng = seeded(4);
        let seqs: Vec<Vec<TokenId>> = (0..20).map(|_| (0..rng.random_range(1..60)).map(|_| rng.random_range(0..25)).collect()).collect();
        let ppl = perplexity(&m, &seqs, 0).unwrap();
        assert!((ppl - 25.0).abs() < 1e-6, "{ppl}");
    }

    #[test]
    fn bigram_beats_unigram_on_alternating_corpus() {
        // Corpus ABABAB...; bigram predicts perfectly, unigram is a coin flip.
        let seqs: Vec<Vec<TokenId>> = vec![(0..40).map(|i| (i % 2) as TokenId).collect()];
        let mut table = vec![vec![f32::NEG_INFINITY; 3]; 3];
        table[0][1] = 0.0;
        table[1][0] = 0.0;
        table[2][0] = 0.0; // bos
        let bigram = BigramModel { table, max_positions: 64 };
        let unigram = BigramModel { table: vec![vec![0.0, 0.0, f32::NEG_INFINITY]; 3], max_positions: 64 };
        assert!((perplexity(&bigram, &seqs, 2).unwrap() - 1.0).abs() < 1e-9);
        assert!((perplexity(&unigram, &seqs, 2).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn perplexity_is_exp_of_mean_nll() {
        let mut rng = seeded(5);
        let table: Vec<Vec<f32>> = (0..6).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let m = BigramModel { table, max_positions: 64 };
        let s: Vec<TokenId> = vec![1, 4, 2, 2, 0, 5];
        let ll = log_likelihood_score(&m, &s, 3).unwrap();
        let ppl = perplexity(&m, &[&s[..]], 3).unwrap();
        assert!((ppl - (-ll).exp()).abs() < 1e-9);
        assert!(ll < 0.0);
        let u = log_likelihood_score(&uniform(25), &s, 3).unwrap();
        assert!((u + 25f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_model_scores_one() {
        let mut table = vec![vec![f32::NEG_INFINITY; 3]; 3];
        table[2][0] = 0.0;
        table[0][1] = 0.0;
        table[1][0] = 0.0;
        let m = BigramModel { table, max_positions: 16 };
        assert_eq!(perplexity(&m, &[vec![0, 1, 0, 1]], 2).unwrap(), 1.0);
        assert_eq!(log_likelihood_score(&m, &[0, 1, 0], 2).unwrap(), 0.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: Vec<Vec<TokenId>> = vec![vec![]];
        assert!(matches!(perplexity(&uniform(4), &empty, 0), Err(LmError::EmptyCorpus)));
    }

    #[test]
    fn embedding_of_single_residue_is_its_hidden_state() {
        let cfg = ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, vocab_size: 26, max_positions: 32 };
        let t = Transformer::from_bundle(&WeightBundle::random(cfg, &mut seeded(8)).unwrap()).unwrap();
        let e = mean_embedding(&t, &[5], 24).unwrap();
        let h = t.hidden_states(&[24, 5]).unwrap();
        assert_eq!(e.len(), 8);
        assert!(e.iter().zip(h.row(1)).all(|(a, &b)| (a - b as f64).abs() < 1e-12));
    }

    #[test]
    fn repeated_sequence_has_same_mean_without_positions() {
        // Zero blocks and zero position embeddings: hidden state depends on
        // the current token only, so "s s" averages to the same as "s".
        let cfg = ModelConfig { n_layers: 2, d_model: 8, n_heads: 2, vocab_size: 26, max_positions: 32 };
        let mut b = WeightBundle::zeros(cfg).unwrap();
        let mut rng = seeded(12);
        for x in b.tensor_mut("tok_emb").unwrap().data.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let t = Transformer::from_bundle(&b).unwrap();
        let s: Vec<TokenId> = vec![0, 7, 3, 19, 3];
        let ss: Vec<TokenId> = s.iter().chain(&s).copied().collect();
        let a = mean_embedding(&t, &s, 24).unwrap();
        let bb = mean_embedding(&t, &ss, 24).unwrap();
        assert!(a.iter().zip(&bb).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    #[test]
    fn embedding_excludes_bos_and_averages() {
        let cfg = ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, vocab_size: 26, max_positions: 32 };
        let t = Transformer::from_bundle(&WeightBundle::random(cfg, &mut seeded(3)).unwrap()).unwrap();
        let e = mean_embedding(&t, &[1, 2, 3], 24).unwrap();
        let h = t.hidden_states(&[24, 1, 2, 3]).unwrap();
        for c in 0..8 {
            let want = (1..4).map(|r| h.row(r)[c] as f64).sum::<f64>() / 3.0;
            assert!((e[c] - want).abs() < 1e-9);
        }
    }
}
