//! Residue alphabet, tokenization, the fill-in-middle transformation and
//! span sampling.

mod alphabet;
mod fasta;
mod fim;
mod span;

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alphabet::{normalize_residues, ResidueAlphabet, Special, CANONICAL_RESIDUES, UNKNOWN_RESIDUE};
pub use fasta::{read_fasta, read_fasta_path, write_fasta};
pub use fim::{build_fim_prompt, fim_transform, invert_fim, maybe_fim, parse_fim, FimExample, FimPrompt};
pub use span::{sample_span, LengthPolicy, SpanSpec, MIN_FLANK};

pub type TokenId = u32;

/// Longest sequence the training pipeline accepts.
pub const MAX_TRAIN_LEN: usize = 1024;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("empty sequence")]
    Empty,
    #[error("invalid residue {residue:?} at position {pos}")]
    InvalidResidue { residue: char, pos: usize },
    #[error("unexpected token id {id} at position {pos}")]
    UnexpectedToken { id: TokenId, pos: usize },
    #[error("sequence of length {n} is too short (need at least {min})")]
    TooShort { n: usize, min: usize },
    #[error("span (start {start}, len {len}) is out of range for length {n}")]
    SpanOutOfRange { start: usize, len: usize, n: usize },
    #[error("malformed FIM layout: {0}")]
    Structure(String),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("alphabet: {0}")]
    Alphabet(String),
    #[error("FASTA line {line}: {msg}")]
    Fasta { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered token ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<TokenId>);

impl Deref for TokenSequence {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(v: Vec<TokenId>) -> Self {
        Self(v)
    }
}

/// A named residue string over the canonical alphabet plus `X`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProteinSequence {
    pub id: String,
    residues: String,
}

impl ProteinSequence {
    /// Strict constructor: every character must already be canonical or `X`.
    pub fn new(id: impl Into<String>, residues: impl Into<String>) -> Result<Self, SeqError> {
        let residues = residues.into();
        if residues.is_empty() {
            return Err(SeqError::Empty);
        }
        if let Some((pos, residue)) = residues
            .chars()
            .enumerate()
            .find(|(_, c)| !(CANONICAL_RESIDUES.contains(*c) || *c == UNKNOWN_RESIDUE))
        {
            return Err(SeqError::InvalidResidue { residue, pos });
        }
        Ok(Self { id: id.into(), residues })
    }

    /// Lenient constructor for ingestion: normalises case and folds
    /// non-canonical codes onto `X`.
    pub fn from_raw(id: impl Into<String>, raw: &str) -> Result<Self, SeqError> {
        let (residues, _) = normalize_residues(raw)?;
        Self::new(id, residues)
    }

    pub fn residues(&self) -> &str {
        &self.residues
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

/// Tokenize a validated protein sequence with the given alphabet.
pub fn tokenize(alphabet: &ResidueAlphabet, seq: &ProteinSequence) -> Result<TokenSequence, SeqError> {
    alphabet.tokenize(seq.residues())
}

pub fn detokenize(alphabet: &ResidueAlphabet, tokens: &TokenSequence) -> Result<String, SeqError> {
    alphabet.detokenize(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn protein_sequence_validation() {
        assert!(ProteinSequence::new("a", "ACDX").is_ok());
        assert!(matches!(ProteinSequence::new("a", ""), Err(SeqError::Empty)));
        assert!(ProteinSequence::new("a", "acd").is_err());
        assert_eq!(ProteinSequence::from_raw("a", "acdu").unwrap().residues(), "ACDX");
    }

    proptest! {
        #[test]
        fn tokenize_round_trips(s in "[ACDEFGHIKLMNPQRSTVWYX]{1,1000}") {
            let a = ResidueAlphabet::default();
            let seq = ProteinSequence::new("p", s.clone()).unwrap();
            let t = tokenize(&a, &seq).unwrap();
            prop_assert_eq!(t.len(), s.len());
            prop_assert_eq!(detokenize(&a, &t).unwrap(), s);
        }
    }
}
