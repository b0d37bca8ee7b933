//! Candidate middle-segment generators behind one query/result interface.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{generate_until, LanguageModel, LmError, SamplingParams};
use crate::rng::stream_rng;
use crate::seqcore::{build_fim_prompt, ResidueAlphabet, SeqError, Special, TokenId, CANONICAL_RESIDUES};

pub const DEFAULT_RETRY_CAP: usize = 50;
pub const TOP_K_STEP: usize = 10;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("transition table has no counts")]
    Untrained,
    #[error("retry cap hit after {attempts} rounds with {} of {requested} candidates", candidates.len())]
    PartialResult { candidates: Vec<String>, attempts: usize, requested: usize, top_k_schedule: Vec<usize> },
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// Infill request: produce `k` middles of exactly `target_len` residues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillQuery {
    pub prefix: String,
    pub suffix: String,
    pub target_len: usize,
    pub k: usize,
    pub seed: u64,
}

impl FillQuery {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.target_len == 0 {
            return Err(GenError::InvalidQuery("target_len must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(GenError::InvalidQuery("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillResult {
    pub candidates: Vec<String>,
    pub provenance: Provenance,
    /// Sampling rounds used (1 when no retry was needed).
    pub attempts: usize,
}

/// One JSON-lines output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub site_id: String,
    pub candidates: Vec<String>,
    pub provenance: Provenance,
    pub attempts: usize,
}

impl FillRecord {
    pub fn new(site_id: impl Into<String>, r: FillResult) -> Self {
        Self { site_id: site_id.into(), candidates: r.candidates, provenance: r.provenance, attempts: r.attempts }
    }
}

/// Anything that answers fill queries.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn fill(&self, q: &FillQuery) -> Result<FillResult, GenError>;
}

fn canonical() -> Vec<char> {
    CANONICAL_RESIDUES.chars().collect()
}

/// Each position i.i.d. uniform over the 20 canonical residues.
pub fn random_fill(q: &FillQuery) -> Result<FillResult, GenError> {
    q.validate()?;
    let aa = canonical();
    let mut rng = stream_rng(q.seed, 0);
    let candidates = (0..q.k).map(|_| (0..q.target_len).map(|_| aa[rng.random_range(0..aa.len())]).collect()).collect();
    Ok(FillResult {
        candidates,
        provenance: Provenance { generator: "random".into(), params: serde_json::json!({ "seed": q.seed }) },
        attempts: 1,
    })
}

/// Order-`m` residue transition counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovTable {
    pub order: usize,
    pub counts: HashMap<String, [u64; 20]>,
}

impl MarkovTable {
    /// Count transitions in `corpus`. Windows touching non-canonical
    /// residues are skipped.
    pub fn train<S: AsRef<str>>(order: usize, corpus: &[S]) -> Result<Self, GenError> {
        if order == 0 {
            return Err(GenError::InvalidQuery("markov order must be at least 1".into()));
        }
        let mut counts: HashMap<String, [u64; 20]> = HashMap::new();
        for s in corpus {
            let chars: Vec<char> = s.as_ref().chars().collect();
            for w in chars.windows(order + 1) {
                let Some(next) = CANONICAL_RESIDUES.find(w[order]) else { continue };
                if w[..order].iter().any(|c| !CANONICAL_RESIDUES.contains(*c)) {
                    continue;
                }
                counts.entry(w[..order].iter().collect()).or_insert([0; 20])[next] += 1;
            }
        }
        Ok(Self { order, counts })
    }

    /// Next-residue distribution for `context` (its last `order` residues),
    /// uniform when the context was never seen.
    pub fn distribution(&self, context: &str) -> [f64; 20] {
        let chars: Vec<char> = context.chars().collect();
        let tail: String = chars[chars.len().saturating_sub(self.order)..].iter().collect();
        match self.counts.get(&tail) {
            Some(c) if tail.chars().count() == self.order => {
                let total: u64 = c.iter().sum();
                let mut p = [0.0; 20];
                for (pi, &ci) in p.iter_mut().zip(c) {
                    *pi = ci as f64 / total as f64;
                }
                p
            }
            _ => [0.05; 20],
        }
    }
}

pub fn markov_fill(q: &FillQuery, table: &MarkovTable) -> Result<FillResult, GenError> {
    q.validate()?;
    if table.counts.is_empty() {
        return Err(GenError::Untrained);
    }
    let aa = canonical();
    let mut rng = stream_rng(q.seed, 0);
    let mut candidates = Vec::with_capacity(q.k);
    for _ in 0..q.k {
        let mut context = q.prefix.clone();
        let mut out = String::with_capacity(q.target_len);
        for _ in 0..q.target_len {
            let p = table.distribution(&context);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = 19;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            out.push(aa[pick]);
            context.push(aa[pick]);
        }
        candidates.push(out);
    }
    Ok(FillResult {
        candidates,
        provenance: Provenance { generator: "markov".into(), params: serde_json::json!({ "order": table.order, "seed": q.seed }) },
        attempts: 1,
    })
}

/// Knobs shared by the transformer-backed generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryOptions {
    pub cap: usize,
    pub dedup: bool,
    /// Accept flanks shorter than four residues (including empty).
    pub relax: bool,
}

impl Default for RetryOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_RETRY_CAP, dedup: false, relax: false }
    }
}

fn sample_until_full(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    q: &FillQuery,
    params: &SamplingParams,
    opts: &RetryOptions,
    name: &str,
) -> Result<FillResult, GenError> {
    let alphabet = ResidueAlphabet::default();
    if model.vocab_size() < alphabet.len() {
        return Err(LmError::Config(format!("model vocabulary {} smaller than alphabet {}", model.vocab_size(), alphabet.len())).into());
    }
    let mut rng = stream_rng(q.seed, 0);
    let mut candidates: Vec<String> = Vec::with_capacity(q.k);
    let mut schedule = Vec::new();
    for round in 0..opts.cap {
        let p = SamplingParams { top_k: params.top_k + TOP_K_STEP * round, ..*params };
        schedule.push(p.top_k);
        let need = q.k - candidates.len();
        for _ in 0..need {
            let g = generate_until(model, prompt, &p, q.target_len, |t| !alphabet.is_canonical(t), &mut rng)?;
            if g.tokens.len() != q.target_len {
                continue;
            }
            let s = alphabet.detokenize(&g.tokens)?;
            if opts.dedup && candidates.contains(&s) {
                continue;
            }
            candidates.push(s);
        }
        if candidates.len() == q.k {
            return Ok(FillResult {
                candidates,
                provenance: Provenance {
                    generator: name.into(),
                    params: serde_json::json!({
                        "top_k": params.top_k,
                        "top_p": params.top_p,
                        "temperature": params.temperature,
                        "seed": q.seed,
                        "top_k_schedule": schedule,
                        "dedup": opts.dedup,
                    }),
                },
                attempts: round + 1,
            });
        }
    }
    Err(GenError::PartialResult { candidates, attempts: opts.cap, requested: q.k, top_k_schedule: schedule })
}

/// Infill conditioned on prefix and suffix via a FIM prompt. Samples that
/// end early (EOS or any non-canonical token) are discarded; each shortfall
/// round raises `top_k` by ten and samples only the missing count. Samples
/// stop at `target_len` residues, so over-length output is cut there.
pub fn transformer_fim_fill(
    q: &FillQuery,
    model: &dyn LanguageModel,
    params: &SamplingParams,
    opts: &RetryOptions,
) -> Result<FillResult, GenError> {
    q.validate()?;
    let alphabet = ResidueAlphabet::default();
    let prefix = alphabet.tokenize_lenient(&q.prefix)?;
    let suffix = alphabet.tokenize_lenient(&q.suffix)?;
    let prompt = build_fim_prompt(&alphabet, &prefix, &suffix, q.target_len, opts.relax)?;
    sample_until_full(model, &prompt.flattened, q, params, opts, "fim")
}

/// Left-to-right baseline: the prompt is `[EOS]` followed by the prefix;
/// the suffix is never shown to the model.
pub fn ar_prefix_fill(
    q: &FillQuery,
    model: &dyn LanguageModel,
    params: &SamplingParams,
    opts: &RetryOptions,
) -> Result<FillResult, GenError> {
    q.validate()?;
    let alphabet = ResidueAlphabet::default();
    let prefix = alphabet.tokenize_lenient(&q.prefix)?;
    if prefix.is_empty() && !opts.relax {
        return Err(GenError::InvalidQuery("empty prefix (set relax for unconditional generation)".into()));
    }
    let mut prompt = vec![alphabet.special(Special::Eos)];
    prompt.extend_from_slice(&prefix);
    sample_until_full(model, &prompt, q, params, opts, "ar_prefix")
}

pub struct RandomGenerator;

impl Generator for RandomGenerator {
    fn name(&self) -> &str {
        "random"
    }
    fn fill(&self, q: &FillQuery) -> Result<FillResult, GenError> {
        random_fill(q)
    }
}

pub struct MarkovGenerator(pub MarkovTable);

impl Generator for MarkovGenerator {
    fn name(&self) -> &str {
        "markov"
    }
    fn fill(&self, q: &FillQuery) -> Result<FillResult, GenError> {
        markov_fill(q, &self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Fim,
    ArPrefix,
}

pub struct ModelGenerator<M: LanguageModel> {
    pub model: M,
    pub mode: PromptMode,
    pub params: SamplingParams,
    pub opts: RetryOptions,
}

impl<M: LanguageModel> Generator for ModelGenerator<M> {
    fn name(&self) -> &str {
        match self.mode {
            PromptMode::Fim => "fim",
            PromptMode::ArPrefix => "ar_prefix",
        }
    }
    fn fill(&self, q: &FillQuery) -> Result<FillResult, GenError> {
        match self.mode {
            PromptMode::Fim => transformer_fim_fill(q, &self.model, &self.params, &self.opts),
            PromptMode::ArPrefix => ar_prefix_fill(q, &self.model, &self.params, &self.opts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{ModelConfig, Transformer, WeightBundle};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn query(target_len: usize, k: usize, seed: u64) -> FillQuery {
        FillQuery { prefix: "MKTAYIAK".into(), suffix: "QRQISFVK".into(), target_len, k, seed }
    }

    fn scripted(rules: &[(u32, u32)]) -> Transformer {
        let cfg = ModelConfig { n_layers: 1, d_model: 32, n_heads: 2, vocab_size: 26, max_positions: 128 };
        Transformer::from_bundle(&WeightBundle::scripted(cfg, rules).unwrap()).unwrap()
    }

    #[test]
    fn random_fill_shapes_and_determinism() {
        let r = random_fill(&query(3, 5, 1)).unwrap();
        assert_eq!(r.candidates.len(), 5);
        assert!(r.candidates.iter().all(|c| c.len() == 3 && c.chars().all(|ch| CANONICAL_RESIDUES.contains(ch))));
        assert_eq!(r, random_fill(&query(3, 5, 1)).unwrap());
        assert_ne!(r, random_fill(&query(3, 5, 2)).unwrap());
        assert!(random_fill(&query(0, 5, 1)).is_err());
        assert!(random_fill(&query(3, 0, 1)).is_err());
    }

    #[test]
    fn random_fill_is_uniform() {
        let r = random_fill(&query(1, 100_000, 7)).unwrap();
        let mut counts = [0usize; 20];
        for c in &r.candidates {
            counts[CANONICAL_RESIDUES.find(c.chars().next().unwrap()).unwrap()] += 1;
        }
        let n = r.candidates.len() as f64;
        for &c in &counts {
            assert!((c as f64 / n - 0.05).abs() < 0.005);
        }
        let expected = n / 20.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn markov_degenerate_chain() {
        let t = MarkovTable::train(1, &["ACACACACACAC"]).unwrap();
        let q = FillQuery { prefix: "GGGA".into(), ..query(6, 10, 3) };
        for c in markov_fill(&q, &t).unwrap().candidates {
            assert_eq!(c, "CACACA");
        }
    }

    #[test]
    fn markov_unseen_context_is_uniform() {
        let t = MarkovTable::train(2, &["ACDEF"]).unwrap();
        assert_eq!(t.distribution("WW"), [0.05; 20]);
        assert_eq!(t.distribution("A"), [0.05; 20]);
        assert!(matches!(markov_fill(&query(2, 1, 0), &MarkovTable { order: 1, counts: HashMap::new() }), Err(GenError::Untrained)));
    }

    #[test]
    fn markov_frequencies_match_table() {
        let t = MarkovTable::train(1, &["AAACAAGAACAGAAAC", "AGGA"]).unwrap();
        let q = FillQuery { prefix: "A".into(), ..query(1, 10_000, 11) };
        let want = t.distribution("A");
        let mut counts = [0usize; 20];
        for c in markov_fill(&q, &t).unwrap().candidates {
            counts[CANONICAL_RESIDUES.find(c.chars().next().unwrap()).unwrap()] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!((c as f64 / 10_000.0 - want[i]).abs() < 0.02, "residue {i}");
        }
    }

    #[test]
    fn fim_fill_with_forced_model() {
        // MID -> A -> EOS.
        let m = scripted(&[(23, 0), (0, 24)]);
        let r = transformer_fim_fill(&query(1, 4, 0), &m, &SamplingParams::default(), &RetryOptions::default()).unwrap();
        assert_eq!(r.candidates, vec!["A"; 4]);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn immediate_eos_exhausts_retry_cap() {
        let m = scripted(&[(23, 24)]);
        let opts = RetryOptions { cap: 3, ..Default::default() };
        match transformer_fim_fill(&query(5, 2, 0), &m, &SamplingParams::default(), &opts) {
            Err(GenError::PartialResult { candidates, attempts, top_k_schedule, .. }) => {
                assert!(candidates.is_empty());
                assert_eq!(attempts, 3);
                assert_eq!(top_k_schedule, vec![100, 110, 120]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_canonical_tokens_count_as_shortfall() {
        // MID -> X (20): never a valid candidate.
        let m = scripted(&[(23, 20)]);
        let opts = RetryOptions { cap: 2, ..Default::default() };
        assert!(matches!(
            transformer_fim_fill(&query(2, 1, 0), &m, &SamplingParams::default(), &opts),
            Err(GenError::PartialResult { .. })
        ));
    }

    #[test]
    fn over_length_is_cut_at_target() {
        // MID -> A -> A -> ... never emits EOS.
        let m = scripted(&[(23, 0), (0, 0)]);
        let r = transformer_fim_fill(&query(7, 2, 0), &m, &SamplingParams::default(), &RetryOptions::default()).unwrap();
        assert_eq!(r.candidates, vec!["AAAAAAA"; 2]);
    }

    #[test]
    fn ar_prefix_ignores_suffix() {
        let cfg = ModelConfig { n_layers: 2, d_model: 16, n_heads: 2, vocab_size: 26, max_positions: 64 };
        let m = Transformer::from_bundle(&WeightBundle::random(cfg, &mut crate::rng::seeded(5)).unwrap()).unwrap();
        let p = SamplingParams { top_k: 20, top_p: 1.0, ..Default::default() };
        let a = ar_prefix_fill(&query(4, 3, 9), &m, &p, &RetryOptions::default()).unwrap();
        let q2 = FillQuery { suffix: "WWWWWWWWWW".into(), ..query(4, 3, 9) };
        assert_eq!(a, ar_prefix_fill(&q2, &m, &p, &RetryOptions::default()).unwrap());

        let f1 = transformer_fim_fill(&query(4, 3, 9), &m, &p, &RetryOptions::default()).unwrap();
        let f2 = transformer_fim_fill(&q2, &m, &p, &RetryOptions::default()).unwrap();
        assert_ne!(f1.candidates, f2.candidates);
    }

    #[test]
    fn ar_prefix_empty_prefix_needs_relax() {
        let m = scripted(&[(24, 3), (3, 3)]);
        let q = FillQuery { prefix: String::new(), ..query(3, 1, 0) };
        assert!(ar_prefix_fill(&q, &m, &SamplingParams::default(), &RetryOptions::default()).is_err());
        let opts = RetryOptions { relax: true, ..Default::default() };
        assert_eq!(ar_prefix_fill(&q, &m, &SamplingParams::default(), &opts).unwrap().candidates, vec!["EEE"]);
    }

    #[test]
    fn dedup_flag_rejects_repeats() {
        let m = scripted(&[(23, 0), (0, 24)]);
        let opts = RetryOptions { cap: 4, dedup: true, ..Default::default() };
        match transformer_fim_fill(&query(1, 3, 0), &m, &SamplingParams::default(), &opts) {
            Err(GenError::PartialResult { candidates, .. }) => assert_eq!(candidates, vec!["A"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn record_serializes_as_jsonl() {
        let rec = FillRecord::new("site-1", random_fill(&query(3, 2, 0)).unwrap());
        let line = serde_json::to_string(&rec).unwrap();
        assert!(!line.contains('\n'));
        let back: FillRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}
