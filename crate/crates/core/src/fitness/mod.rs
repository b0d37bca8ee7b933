//! Zero-shot fitness evaluation: landscape ingestion, model-derived scores
//! and Spearman rank correlation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{log_likelihood_score, mean_embedding, LanguageModel, LmError, Transformer};
use crate::seqcore::{ResidueAlphabet, SeqError, Special, CANONICAL_RESIDUES, UNKNOWN_RESIDUE};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("dataset has no rows")]
    Empty,
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("correlation undefined: {0}")]
    Undefined(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Seq(#[from] SeqError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// CSV header names for the three required columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub sequence: String,
    pub target: String,
    pub split: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self { sequence: "sequence".into(), target: "target".into(), split: "set".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub sequence: String,
    pub fitness: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessDataset {
    pub landscape: String,
    pub records: Vec<FitnessRecord>,
    /// Residues outside the canonical alphabet that were replaced by `X`.
    pub replaced_residues: usize,
}

impl FitnessDataset {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &FitnessRecord> {
        self.records.iter().filter(move |r| r.split == s)
    }

    pub fn count(&self, s: Split) -> usize {
        self.split(s).count()
    }
}

fn clean_sequence(raw: &str) -> (String, usize) {
    let mut replaced = 0;
    let seq = raw
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| {
            let up = c.to_ascii_uppercase();
            if CANONICAL_RESIDUES.contains(up) {
                up
            } else {
                replaced += 1;
                UNKNOWN_RESIDUE
            }
        })
        .collect();
    (seq, replaced)
}

pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap, landscape: &str) -> Result<FitnessDataset, FitnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| FitnessError::MissingColumn(name.into()));
    let (si, ti, pi) = (find(&columns.sequence)?, find(&columns.target)?, find(&columns.split)?);
    let mut records = Vec::new();
    let mut replaced_residues = 0;
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |j: usize| row.get(j).unwrap_or("").trim();
        let (sequence, replaced) = clean_sequence(field(si));
        if sequence.is_empty() {
            return Err(FitnessError::Row { row: line, msg: "empty sequence".into() });
        }
        let fitness: f64 =
            field(ti).parse().map_err(|_| FitnessError::Row { row: line, msg: format!("bad target {:?}", field(ti)) })?;
        if !fitness.is_finite() {
            return Err(FitnessError::Row { row: line, msg: "non-finite target".into() });
        }
        let split = Split::parse(field(pi)).ok_or_else(|| FitnessError::Row { row: line, msg: format!("unknown split {:?}", field(pi)) })?;
        replaced_residues += replaced;
        records.push(FitnessRecord { sequence, fitness, split });
    }
    if records.is_empty() {
        return Err(FitnessError::Empty);
    }
    Ok(FitnessDataset { landscape: landscape.to_string(), records, replaced_residues })
}

/// Read a landscape CSV; the landscape name is the file stem.
pub fn ingest_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<FitnessDataset, FitnessError> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ingest_reader(std::fs::File::open(path)?, columns, &name)
}

pub fn write_csv<W: Write>(w: W, data: &FitnessDataset, columns: &ColumnMap) -> Result<(), FitnessError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([&columns.sequence, &columns.target, &columns.split])?;
    for r in &data.records {
        wr.write_record([r.sequence.as_str(), &r.fitness.to_string(), r.split.as_str()])?;
    }
    wr.flush()?;
    Ok(())
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, FitnessError> {
    if xs.len() != ys.len() {
        return Err(FitnessError::Length(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(FitnessError::Undefined("fewer than two points"));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FitnessError::Undefined("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, FitnessError> {
    if xs.len() != ys.len() {
        return Err(FitnessError::Length(xs.len(), ys.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitnessError::Undefined("non-finite input"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Ridge regression with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<Self, FitnessError> {
        if xs.len() != ys.len() {
            return Err(FitnessError::Length(xs.len(), ys.len()));
        }
        if xs.is_empty() {
            return Err(FitnessError::EmptySplit("train"));
        }
        let (n, d) = (xs.len(), xs[0].len());
        let x = DMatrix::from_fn(n, d, |i, j| xs[i][j]);
        let y = DVector::from_column_slice(ys);
        let x_mean = x.row_mean();
        let y_mean = y.mean();
        let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_mean[j]);
        let yc = y.add_scalar(-y_mean);
        let a = xc.transpose() * &xc + DMatrix::identity(d, d) * lambda;
        let b = xc.transpose() * yc;
        let w = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.lu().solve(&b).ok_or(FitnessError::Undefined("singular ridge system"))?,
        };
        let intercept = y_mean - (0..d).map(|j| x_mean[j] * w[j]).sum::<f64>();
        Ok(Self { weights: w.iter().copied().collect(), intercept, lambda })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    /// Mean per-token log-probability; no training.
    Loglik,
    /// Ridge map from mean hidden states, fit on the train split.
    EmbeddingHead { lambda: f64 },
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Loglik => "loglik",
            Scorer::EmbeddingHead { .. } => "embedding_head",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub landscape: String,
    pub scorer: String,
    pub spearman: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: Option<f64>,
}

fn tokens(alphabet: &ResidueAlphabet, seq: &str) -> Result<Vec<u32>, FitnessError> {
    Ok(alphabet.tokenize(seq)?.0)
}

/// Mean log-probability of each sequence under the model.
pub fn loglik_scores<'a>(
    model: &dyn LanguageModel,
    alphabet: &ResidueAlphabet,
    seqs: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<f64>, FitnessError> {
    let bos = alphabet.special(Special::Eos);
    seqs.into_iter().map(|s| Ok(log_likelihood_score(model, &tokens(alphabet, s)?, bos)?)).collect()
}

pub fn embeddings<'a>(
    model: &Transformer,
    alphabet: &ResidueAlphabet,
    seqs: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<Vec<f64>>, FitnessError> {
    let bos = alphabet.special(Special::Eos);
    seqs.into_iter().map(|s| Ok(mean_embedding(model, &tokens(alphabet, s)?, bos)?)).collect()
}

/// Score the test split and correlate with measured fitness.
pub fn zero_shot_eval(
    model: &Transformer,
    alphabet: &ResidueAlphabet,
    data: &FitnessDataset,
    scorer: Scorer,
) -> Result<FitnessReport, FitnessError> {
    let test: Vec<&FitnessRecord> = data.split(Split::Test).collect();
    if test.is_empty() {
        return Err(FitnessError::EmptySplit("test"));
    }
    let truth: Vec<f64> = test.iter().map(|r| r.fitness).collect();
    let (preds, lambda) = match scorer {
        Scorer::Loglik => (loglik_scores(model, alphabet, test.iter().map(|r| r.sequence.as_str()))?, None),
        Scorer::EmbeddingHead { lambda } => {
            let train: Vec<&FitnessRecord> = data.split(Split::Train).collect();
            if train.is_empty() {
                return Err(FitnessError::EmptySplit("train"));
            }
            let xs = embeddings(model, alphabet, train.iter().map(|r| r.sequence.as_str()))?;
            let ys: Vec<f64> = train.iter().map(|r| r.fitness).collect();
            let head = RidgeModel::fit(&xs, &ys, lambda)?;
            let xt = embeddings(model, alphabet, test.iter().map(|r| r.sequence.as_str()))?;
            (xt.iter().map(|x| head.predict(x)).collect(), Some(lambda))
        }
    };
    Ok(FitnessReport {
        landscape: data.landscape.clone(),
        scorer: scorer.name().into(),
        spearman: spearman(&preds, &truth)?,
        n_train: data.count(Split::Train),
        n_test: test.len(),
        lambda,
    })
}

#[cfg(test)]
mod tests;
