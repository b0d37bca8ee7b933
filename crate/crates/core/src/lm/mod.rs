//! Decoder-only transformer inference: weight bundles, causal forward pass,
//! nucleus sampling, generation, perplexity and sequence embeddings.

mod bundle;
mod generate;
mod sampling;
mod scoring;
mod transformer;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqcore::TokenId;

pub use bundle::{expected_shapes, Tensor, WeightBundle, FORMAT_VERSION, MAGIC};
pub use generate::{generate, generate_until, Generation};
pub use sampling::{nucleus, sample_next, SamplingParams, ARGMAX_TEMPERATURE};
pub use scoring::{log_likelihood_score, mean_embedding, perplexity, sequence_nll};
pub use transformer::Transformer;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("not a weight bundle (bad magic)")]
    BadMagic,
    #[error("unsupported bundle version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("checksum failure (stored {stored:?}, computed {computed:#010x})")]
    Checksum { stored: Option<u32>, computed: u32 },
    #[error("bad bundle header: {0}")]
    Header(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input of {len} tokens exceeds context of {max}")]
    ContextLength { len: usize, max: usize },
    #[error("token id {0} outside vocabulary")]
    TokenOutOfRange(TokenId),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("context exhausted after {} generated tokens", partial.len())]
    Truncated { partial: Vec<TokenId> },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Model dimensions. The MLP width is fixed at `4 * d_model`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    #[serde(default = "default_max_positions")]
    pub max_positions: usize,
}

fn default_max_positions() -> usize {
    1024
}

impl ModelConfig {
    /// Desk-scale default: 2 layers, width 64, 4 heads, the 26-token alphabet.
    pub fn desk(vocab_size: usize) -> Self {
        Self { n_layers: 2, d_model: 64, n_heads: 4, vocab_size, max_positions: 1024 }
    }

    /// The 12-layer, width-768 reference configuration.
    pub fn reference(vocab_size: usize) -> Self {
        Self { n_layers: 12, d_model: 768, n_heads: 12, vocab_size, max_positions: 1024 }
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(LmError::Config(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads)));
        }
        if self.vocab_size == 0 || self.max_positions == 0 {
            return Err(LmError::Config("vocab_size and max_positions must be positive".into()));
        }
        Ok(())
    }

    /// Additionally require the vocabulary to cover an alphabet of `n` tokens.
    pub fn validate_for_alphabet(&self, n: usize) -> Result<(), LmError> {
        self.validate()?;
        if self.vocab_size < n {
            return Err(LmError::Config(format!("vocab_size {} smaller than alphabet ({n})", self.vocab_size)));
        }
        Ok(())
    }
}

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f32>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let data: Vec<f32> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n * cols, "ragged rows");
        Self { rows: n, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// CSV dump with a `position,<id>...` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "position")?;
        for c in 0..self.cols {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for r in 0..self.rows {
            write!(w, "{r}")?;
            for x in self.row(r) {
                write!(w, ",{x:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Incremental decoding state: feed one token, get the next-token logits.
pub trait Decoder {
    fn push(&mut self, token: TokenId) -> Result<Vec<f32>, LmError>;
    fn position(&self) -> usize;
}

/// Anything that maps a token prefix to next-token logits causally.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn max_positions(&self) -> usize;
    /// One row of logits per input position; row `i` depends on
    /// `tokens[..=i]` only.
    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix, LmError>;
    fn decoder(&self) -> Box<dyn Decoder + '_>;
}

/// Decoder that recomputes the full forward pass each step. Adequate for
/// small analytic models used in tests and baselines.
pub struct RecomputeDecoder<'a, M: LanguageModel + ?Sized> {
    model: &'a M,
    context: Vec<TokenId>,
}

impl<'a, M: LanguageModel + ?Sized> RecomputeDecoder<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self { model, context: Vec::new() }
    }
}

impl<M: LanguageModel + ?Sized> Decoder for RecomputeDecoder<'_, M> {
    fn push(&mut self, token: TokenId) -> Result<Vec<f32>, LmError> {
        if self.context.len() >= self.model.max_positions() {
            return Err(LmError::ContextLength { len: self.context.len() + 1, max: self.model.max_positions() });
        }
        self.context.push(token);
        let m = self.model.logits(&self.context)?;
        Ok(m.row(m.rows - 1).to_vec())
    }

    fn position(&self) -> usize {
        self.context.len()
    }
}

/// Forward pass returning the `[T x vocab]` logit matrix.
pub fn forward_logits(model: &dyn LanguageModel, tokens: &[TokenId]) -> Result<Matrix, LmError> {
    if tokens.len() > model.max_positions() {
        return Err(LmError::ContextLength { len: tokens.len(), max: model.max_positions() });
    }
    model.logits(tokens)
}

#[cfg(test)]
pub(crate) mod toy {
    //! Small analytic models for tests.
    use super::*;

    /// Logits are a fixed function of the last token only.
    pub struct BigramModel {
        pub table: Vec<Vec<f32>>,
        pub max_positions: usize,
    }

    impl LanguageModel for BigramModel {
        fn vocab_size(&self) -> usize {
            self.table[0].len()
        }
        fn max_positions(&self) -> usize {
            self.max_positions
        }
        fn logits(&self, tokens: &[TokenId]) -> Result<Matrix, LmError> {
            Ok(Matrix::from_rows(tokens.iter().map(|&t| self.table[t as usize].clone()).collect()))
        }
        fn decoder(&self) -> Box<dyn Decoder + '_> {
            Box::new(RecomputeDecoder::new(self))
        }
    }

    pub fn uniform(vocab: usize) -> BigramModel {
        BigramModel { table: vec![vec![0.0; vocab]; vocab], max_positions: 4096 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::desk(26).validate().is_ok());
        assert!(ModelConfig::reference(26).validate().is_ok());
        let bad = ModelConfig { n_heads: 3, ..ModelConfig::desk(26) };
        assert!(bad.validate().is_err());
        assert!(ModelConfig::desk(20).validate_for_alphabet(26).is_err());
    }

    #[test]
    fn csv_dump_shape() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("position,0,1\n"));
    }
}
