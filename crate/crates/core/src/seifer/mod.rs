//! Secondary-structure infilling recovery benchmark: middle sites, oracle
//! mediation, judging, metrics and ablations.

pub mod metrics;
pub mod oracle;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dssp::{assign_structure, map_ss3, polymer_residues};
use crate::generators::{FillQuery, GenError, Generator};
use crate::rng::mix_seed;
use crate::seqcore::{SpanSpec, MIN_FLANK};
use crate::structio::StructureModel;

pub use metrics::{
    ablate_by_length, ablate_by_position, build_report, empirical_cdf, length_quartile_edges, plddt_delta,
    precision_at_k, retrieval_at_k, sequence_recovery_rate, write_bins_csv, BinMetrics, ClassMetrics, PlddtDelta,
    PlddtSummary, SeiferReport,
};
pub use oracle::{
    sequence_key, CommandOracle, DirectoryOracle, MockOracle, OracleConfig, OracleError, Prediction, StructureOracle,
    CACHE_ENV,
};

#[derive(Debug, Error)]
pub enum SeiferError {
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("invalid SS3 symbol {0:?}")]
    Ss3Symbol(char),
    #[error("no sites to evaluate")]
    NoSites,
    #[error("invalid minimum-length spec {0:?}")]
    MinLens(String),
    #[error("unknown protein {0}")]
    UnknownProtein(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Generator(#[from] GenError),
}

/// Per-class minimum site lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinLens {
    pub h: usize,
    pub e: usize,
    pub c: usize,
}

impl Default for MinLens {
    fn default() -> Self {
        Self { h: 10, e: 6, c: 6 }
    }
}

impl MinLens {
    pub fn for_class(&self, class: char) -> usize {
        match class {
            'H' => self.h,
            'E' => self.e,
            _ => self.c,
        }
    }
}

impl FromStr for MinLens {
    type Err = SeiferError;

    /// `H=10,E=6,C=6`; omitted classes keep their defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| SeiferError::MinLens(s.into()))?;
            let v: usize = v.trim().parse().map_err(|_| SeiferError::MinLens(s.into()))?;
            match k.trim() {
                "H" | "h" => out.h = v,
                "E" | "e" => out.e = v,
                "C" | "c" => out.c = v,
                _ => return Err(SeiferError::MinLens(s.into())),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for MinLens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H={},E={},C={}", self.h, self.e, self.c)
    }
}

/// A protein under evaluation: its sequence and reference SS3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protein {
    pub id: String,
    pub sequence: String,
    pub ss3: String,
}

impl Protein {
    pub fn new(id: impl Into<String>, sequence: impl Into<String>, ss3: impl Into<String>) -> Result<Self, SeiferError> {
        let p = Self { id: id.into(), sequence: sequence.into(), ss3: ss3.into() };
        check_ss3(&p.sequence, &p.ss3)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiddleSite {
    pub protein_id: String,
    pub span: SpanSpec,
    pub ss_class: char,
    pub original_middle: String,
    pub original_ss3_span: String,
    pub protein_len: usize,
}

fn check_ss3(sequence: &str, ss3: &str) -> Result<(), SeiferError> {
    let (n, m) = (sequence.chars().count(), ss3.chars().count());
    if n != m {
        return Err(SeiferError::LengthMismatch { what: "ss3", got: m, expected: n });
    }
    match ss3.chars().find(|c| !matches!(c, 'H' | 'E' | 'C')) {
        Some(c) => Err(SeiferError::Ss3Symbol(c)),
        None => Ok(()),
    }
}

/// Maximal single-class SS3 runs that meet the class minimum length and
/// leave at least four residues on each side.
pub fn extract_middle_sites(
    protein_id: &str,
    sequence: &str,
    ss3: &str,
    min_lens: MinLens,
) -> Result<Vec<MiddleSite>, SeiferError> {
    check_ss3(sequence, ss3)?;
    let labels: Vec<char> = ss3.chars().collect();
    let n = labels.len();
    let mut sites = Vec::new();
    let mut start = 0;
    while start < n {
        let class = labels[start];
        let mut end = start + 1;
        while end < n && labels[end] == class {
            end += 1;
        }
        let len = end - start;
        if len >= min_lens.for_class(class) && start >= MIN_FLANK && end + MIN_FLANK <= n {
            sites.push(MiddleSite {
                protein_id: protein_id.to_string(),
                span: SpanSpec::new(start, len),
                ss_class: class,
                original_middle: sequence[start..end].to_string(),
                original_ss3_span: ss3[start..end].to_string(),
                protein_len: n,
            });
        }
        start = end;
    }
    Ok(sites)
}

/// True positive: the candidate changes at least one residue (unless
/// `allow_identical`) and the predicted span SS3 equals the original exactly.
pub fn judge_candidate(
    site: &MiddleSite,
    candidate: &str,
    predicted_ss3_span: &str,
    allow_identical: bool,
) -> Result<bool, SeiferError> {
    if candidate.len() != site.span.len {
        return Err(SeiferError::LengthMismatch { what: "candidate", got: candidate.len(), expected: site.span.len });
    }
    if predicted_ss3_span.len() != site.span.len {
        return Err(SeiferError::LengthMismatch {
            what: "predicted span",
            got: predicted_ss3_span.len(),
            expected: site.span.len,
        });
    }
    let differs = candidate != site.original_middle;
    Ok((differs || allow_identical) && predicted_ss3_span == site.original_ss3_span)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeiferOutcome {
    pub site_index: usize,
    pub protein_id: String,
    pub span: SpanSpec,
    pub ss_class: char,
    pub protein_len: usize,
    pub candidate_index: usize,
    pub candidate: String,
    pub original_middle: String,
    pub differs_from_original: bool,
    pub predicted_ss3_span: Option<String>,
    pub tp: bool,
    pub plddt_mean_structure: Option<f64>,
    pub plddt_mean_span: Option<f64>,
    /// Predicted SS3 outside the span differs from the original (diagnostic only).
    pub ss3_drift_outside: bool,
    pub error: Option<String>,
}

impl SeiferOutcome {
    pub fn errored(&self) -> bool {
        self.error.is_some()
    }

    pub fn site_len(&self) -> usize {
        self.span.len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub k: usize,
    pub seed: u64,
    pub allow_identical: bool,
    /// Predict each original sequence to obtain pLDDT baselines.
    pub baselines: bool,
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { k: 5, seed: 0, allow_identical: false, baselines: true, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub outcomes: Vec<SeiferOutcome>,
    /// Mean structure pLDDT of each protein's predicted original sequence.
    pub baselines: BTreeMap<String, f64>,
    pub errored: usize,
    /// Candidates a generator failed to produce.
    pub shortfall: usize,
}

/// Predicted SS3 for the whole designed sequence plus per-residue pLDDT.
pub fn evaluate_prediction(pred: Prediction, expected_len: usize) -> Result<(String, Vec<f64>), String> {
    let (ss3, plddt) = match pred {
        Prediction::Labels { ss3, plddt } => (ss3, plddt),
        Prediction::Structure(model) => structure_labels(&model),
    };
    if ss3.chars().count() != expected_len || plddt.len() != expected_len {
        return Err(format!(
            "predicted structure has {} residues ({} confidences), designed sequence has {expected_len}",
            ss3.chars().count(),
            plddt.len()
        ));
    }
    Ok((ss3, plddt))
}

/// DSSP-derived SS3 and per-residue mean B-factor over all chains in order.
pub fn structure_labels(model: &StructureModel) -> (String, Vec<f64>) {
    let ss3 = assign_structure(model).into_iter().map(|c| c.ss3).collect();
    let plddt = model
        .chains
        .iter()
        .flat_map(|c| polymer_residues(c).into_iter().map(|r| r.plddt().unwrap_or(0.0)))
        .collect();
    (ss3, plddt)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn splice(protein: &Protein, span: SpanSpec, middle: &str) -> String {
    format!("{}{}{}", &protein.sequence[..span.start], middle, &protein.sequence[span.end()..])
}

fn score_candidate(
    site_index: usize,
    site: &MiddleSite,
    protein: &Protein,
    candidate_index: usize,
    candidate: String,
    oracle: &dyn StructureOracle,
    allow_identical: bool,
) -> SeiferOutcome {
    let mut out = SeiferOutcome {
        site_index,
        protein_id: site.protein_id.clone(),
        span: site.span,
        ss_class: site.ss_class,
        protein_len: site.protein_len,
        candidate_index,
        differs_from_original: candidate != site.original_middle,
        candidate,
        original_middle: site.original_middle.clone(),
        predicted_ss3_span: None,
        tp: false,
        plddt_mean_structure: None,
        plddt_mean_span: None,
        ss3_drift_outside: false,
        error: None,
    };
    if out.candidate.len() != site.span.len {
        out.error = Some(format!("candidate length {} != span length {}", out.candidate.len(), site.span.len));
        return out;
    }
    let designed = splice(protein, site.span, &out.candidate);
    let evaluated = oracle
        .predict(&site.protein_id, &designed)
        .map_err(|e| e.to_string())
        .and_then(|p| evaluate_prediction(p, designed.len()));
    let (ss3, plddt) = match evaluated {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    let (s, e) = (site.span.start, site.span.end());
    let span_ss3 = ss3[s..e].to_string();
    out.ss3_drift_outside = ss3[..s] != protein.ss3[..s] || ss3[e..] != protein.ss3[e..];
    out.plddt_mean_structure = mean(&plddt);
    out.plddt_mean_span = mean(&plddt[s..e]);
    match judge_candidate(site, &out.candidate, &span_ss3, allow_identical) {
        Ok(tp) => out.tp = tp,
        Err(e) => out.error = Some(e.to_string()),
    }
    out.predicted_ss3_span = Some(span_ss3);
    out
}

struct SiteResult {
    outcomes: Vec<SeiferOutcome>,
    shortfall: usize,
}

fn run_site(
    index: usize,
    site: &MiddleSite,
    protein: &Protein,
    generator: &dyn Generator,
    oracle: &dyn StructureOracle,
    opts: &RunOptions,
) -> SiteResult {
    let query = FillQuery {
        prefix: protein.sequence[..site.span.start].to_string(),
        suffix: protein.sequence[site.span.end()..].to_string(),
        target_len: site.span.len,
        k: opts.k,
        seed: mix_seed(opts.seed, index as u64),
    };
    let candidates = match generator.fill(&query) {
        Ok(r) => r.candidates,
        Err(GenError::PartialResult { candidates, .. }) => candidates,
        Err(e) => {
            let failed = SeiferOutcome {
                site_index: index,
                protein_id: site.protein_id.clone(),
                span: site.span,
                ss_class: site.ss_class,
                protein_len: site.protein_len,
                candidate_index: 0,
                candidate: String::new(),
                original_middle: site.original_middle.clone(),
                differs_from_original: false,
                predicted_ss3_span: None,
                tp: false,
                plddt_mean_structure: None,
                plddt_mean_span: None,
                ss3_drift_outside: false,
                error: Some(format!("generator: {e}")),
            };
            return SiteResult { outcomes: vec![failed], shortfall: opts.k };
        }
    };
    let shortfall = opts.k.saturating_sub(candidates.len());
    let outcomes = candidates
        .into_iter()
        .enumerate()
        .map(|(ci, c)| score_candidate(index, site, protein, ci, c, oracle, opts.allow_identical))
        .collect();
    SiteResult { outcomes, shortfall }
}

/// Generate `k` candidates per site, splice, predict, assign and judge.
/// Results are ordered by site then candidate and do not depend on the
/// worker count.
pub fn run_seifer(
    proteins: &[Protein],
    sites: &[MiddleSite],
    generator: &dyn Generator,
    oracle: &dyn StructureOracle,
    opts: &RunOptions,
) -> Result<RunOutput, SeiferError> {
    if sites.is_empty() {
        return Err(SeiferError::NoSites);
    }
    let by_id: HashMap<&str, &Protein> = proteins.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut jobs = Vec::with_capacity(sites.len());
    for (i, s) in sites.iter().enumerate() {
        let p = *by_id.get(s.protein_id.as_str()).ok_or_else(|| SeiferError::UnknownProtein(s.protein_id.clone()))?;
        jobs.push((i, s, p));
    }
    let run = |&(i, s, p): &(usize, &MiddleSite, &Protein)| run_site(i, s, p, generator, oracle, opts);
    let results: Vec<SiteResult> = parallel_map(&jobs, opts.workers, oracle.concurrent(), run);

    let mut baselines = BTreeMap::new();
    if opts.baselines {
        for p in proteins {
            let got = oracle.predict(&p.id, &p.sequence).map_err(|e| e.to_string());
            if let Ok((_, plddt)) = got.and_then(|pr| evaluate_prediction(pr, p.sequence.len())) {
                if let Some(m) = mean(&plddt) {
                    baselines.insert(p.id.clone(), m);
                }
            }
        }
    }

    let shortfall = results.iter().map(|r| r.shortfall).sum();
    let outcomes: Vec<SeiferOutcome> = results.into_iter().flat_map(|r| r.outcomes).collect();
    let errored = outcomes.iter().filter(|o| o.errored()).count();
    for o in &outcomes {
        debug_assert!(!o.tp || ((o.differs_from_original || opts.allow_identical) && !o.errored()));
    }
    Ok(RunOutput { outcomes, baselines, errored, shortfall })
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, concurrent: bool, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use rayon::prelude::*;
    if workers <= 1 || !concurrent {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Sync, R: Send>(items: &[T], _workers: usize, _concurrent: bool, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Reference SS3 for a structure's first chain, with its sequence.
pub fn protein_from_structure(model: &StructureModel) -> Option<Protein> {
    let chain = model.chains.iter().find(|c| !polymer_residues(c).is_empty())?;
    let sequence: String = polymer_residues(chain).iter().map(|r| r.one_letter()).collect();
    let ss3 = map_ss3(&crate::dssp::assign_chain(chain)).ok()?;
    let id = if model.entry_id.is_empty() { chain.id.clone() } else { format!("{}_{}", model.entry_id, chain.id) };
    Some(Protein { id, sequence, ss3 })
}
