use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{RunOutput, SeiferError, SeiferOutcome};

/// Judged candidates per site, restricted to the first `k` and excluding
/// errored ones. Sites with nothing judged are left out.
fn judged_by_site(outcomes: &[SeiferOutcome], k: usize) -> BTreeMap<usize, (usize, usize)> {
    let mut sites: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.candidate_index < k && !o.errored()) {
        let e = sites.entry(o.site_index).or_default();
        e.0 += usize::from(o.tp);
        e.1 += 1;
    }
    sites
}

/// Mean over sites of TP / judged candidates among the first `k`.
pub fn precision_at_k(outcomes: &[SeiferOutcome], k: usize) -> Result<f64, SeiferError> {
    let sites = judged_by_site(outcomes, k);
    if sites.is_empty() {
        return Err(SeiferError::NoSites);
    }
    Ok(sites.values().map(|&(tp, n)| tp as f64 / n as f64).sum::<f64>() / sites.len() as f64)
}

/// Fraction of sites with at least one TP among the first `k` candidates.
pub fn retrieval_at_k(outcomes: &[SeiferOutcome], k: usize) -> Result<f64, SeiferError> {
    let sites = judged_by_site(outcomes, k);
    if sites.is_empty() {
        return Err(SeiferError::NoSites);
    }
    Ok(sites.values().filter(|&&(tp, _)| tp > 0).count() as f64 / sites.len() as f64)
}

/// `P@k` and `R@k` for each k with at least one judged site, or `None`
/// when no site was judged at any k.
pub fn metric_table(outcomes: &[SeiferOutcome], ks: &[usize]) -> Option<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    for &k in ks {
        if let (Ok(p), Ok(r)) = (precision_at_k(outcomes, k), retrieval_at_k(outcomes, k)) {
            m.insert(format!("P@{k}"), p);
            m.insert(format!("R@{k}"), r);
        }
    }
    (!m.is_empty()).then_some(m)
}

fn site_count(outcomes: &[SeiferOutcome], ks: &[usize]) -> usize {
    judged_by_site(outcomes, ks.iter().copied().max().unwrap_or(0)).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMetrics {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub sites: usize,
    pub metrics: Option<BTreeMap<String, f64>>,
}

fn binned(outcomes: &[SeiferOutcome], ks: &[usize], bounds: &[(f64, f64)], bin_of: impl Fn(&SeiferOutcome) -> usize) -> Vec<BinMetrics> {
    let mut groups: Vec<Vec<SeiferOutcome>> = vec![Vec::new(); bounds.len()];
    for o in outcomes {
        groups[bin_of(o)].push(o.clone());
    }
    groups
        .iter()
        .zip(bounds)
        .enumerate()
        .map(|(bin, (g, &(lo, hi)))| BinMetrics { bin, lo, hi, sites: site_count(g, ks), metrics: metric_table(g, ks) })
        .collect()
}

/// Bin of a site by the relative position of its midpoint.
pub fn position_bin(start: usize, len: usize, protein_len: usize, n_bins: usize) -> usize {
    let mid = (start as f64 + len as f64 / 2.0) / protein_len.max(1) as f64;
    ((mid * n_bins as f64).floor().max(0.0) as usize).min(n_bins.saturating_sub(1))
}

pub fn ablate_by_position(outcomes: &[SeiferOutcome], n_bins: usize, ks: &[usize]) -> Vec<BinMetrics> {
    let n_bins = n_bins.max(1);
    let bounds: Vec<(f64, f64)> = (0..n_bins).map(|i| (i as f64 / n_bins as f64, (i + 1) as f64 / n_bins as f64)).collect();
    binned(outcomes, ks, &bounds, |o| position_bin(o.span.start, o.span.len, o.protein_len, n_bins))
}

/// Bin of a length under sorted edges `e0 < e1 < … < em`: bins are
/// `[e_i, e_{i+1})`, values outside the range clamp to the end bins.
pub fn length_bin(len: f64, edges: &[f64]) -> usize {
    if edges.len() < 2 {
        return 0;
    }
    edges[1..edges.len() - 1].iter().filter(|&&e| len >= e).count()
}

pub fn ablate_by_length(outcomes: &[SeiferOutcome], edges: &[f64], ks: &[usize]) -> Vec<BinMetrics> {
    let bounds: Vec<(f64, f64)> = if edges.len() < 2 {
        vec![(f64::NEG_INFINITY, f64::INFINITY)]
    } else {
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    };
    binned(outcomes, ks, &bounds, |o| length_bin(o.span.len as f64, edges))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Min, quartiles and max of the site lengths, with repeated edges merged.
pub fn length_quartile_edges(outcomes: &[SeiferOutcome]) -> Vec<f64> {
    let mut per_site: BTreeMap<usize, f64> = BTreeMap::new();
    for o in outcomes {
        per_site.insert(o.site_index, o.span.len as f64);
    }
    let mut lens: Vec<f64> = per_site.into_values().collect();
    if lens.is_empty() {
        return Vec::new();
    }
    lens.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&q| quantile(&lens, q)).collect();
    edges.dedup();
    edges
}

/// Points `(x, P(X ≤ x))` at each distinct sample value.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => out.push((x, p)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlddtDelta {
    pub deltas: Vec<f64>,
    /// Judged candidates whose protein has no baseline.
    pub skipped: usize,
    pub fraction_positive: Option<f64>,
    pub cdf: Vec<(f64, f64)>,
}

impl PlddtDelta {
    /// `delta,cdf`.
    pub fn write_cdf_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "delta,cdf")?;
        for (x, p) in &self.cdf {
            writeln!(w, "{x},{p}")?;
        }
        Ok(())
    }
}

/// Candidate structure mean pLDDT minus the original structure's.
pub fn plddt_delta(outcomes: &[SeiferOutcome], baselines: &BTreeMap<String, f64>) -> PlddtDelta {
    let mut deltas = Vec::new();
    let mut skipped = 0;
    for o in outcomes.iter().filter(|o| !o.errored()) {
        let Some(p) = o.plddt_mean_structure else { continue };
        match baselines.get(&o.protein_id) {
            Some(b) => deltas.push(p - b),
            None => skipped += 1,
        }
    }
    PlddtDelta { skipped, fraction_positive: fraction_positive(&deltas), cdf: empirical_cdf(&deltas), deltas }
}

fn fraction_positive(deltas: &[f64]) -> Option<f64> {
    (!deltas.is_empty()).then(|| deltas.iter().filter(|&&d| d > 0.0).count() as f64 / deltas.len() as f64)
}

/// Mean per-position identity of candidate and original middles, in percent.
pub fn sequence_recovery_rate(outcomes: &[SeiferOutcome]) -> Option<f64> {
    let (mut same, mut total) = (0usize, 0usize);
    for o in outcomes.iter().filter(|o| !o.candidate.is_empty() && o.candidate.len() == o.original_middle.len()) {
        same += o.candidate.bytes().zip(o.original_middle.bytes()).filter(|(a, b)| a == b).count();
        total += o.candidate.len();
    }
    (total > 0).then(|| 100.0 * same as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub sites: usize,
    pub metrics: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlddtSummary {
    pub samples: usize,
    pub skipped: usize,
    pub mean_delta: Option<f64>,
    pub fraction_positive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeiferReport {
    pub meta: serde_json::Value,
    pub ks: Vec<usize>,
    pub per_class: Vec<ClassMetrics>,
    /// Pooled over all sites.
    pub overall: ClassMetrics,
    /// Unweighted mean of the per-class values over classes with sites.
    pub class_average: Option<BTreeMap<String, f64>>,
    pub by_position: Vec<BinMetrics>,
    pub length_edges: Vec<f64>,
    pub by_length: Vec<BinMetrics>,
    pub plddt: PlddtSummary,
    pub recovery_rate: Option<f64>,
    pub outcomes: usize,
    pub errored: usize,
    pub shortfall: usize,
}

pub fn build_report(run: &RunOutput, ks: &[usize], position_bins: usize, meta: serde_json::Value) -> SeiferReport {
    let out = &run.outcomes;
    let per_class: Vec<ClassMetrics> = ['H', 'E', 'C']
        .into_iter()
        .map(|c| {
            let sub: Vec<SeiferOutcome> = out.iter().filter(|o| o.ss_class == c).cloned().collect();
            ClassMetrics { class: c.to_string(), sites: site_count(&sub, ks), metrics: metric_table(&sub, ks) }
        })
        .collect();
    let present: Vec<&BTreeMap<String, f64>> = per_class.iter().filter_map(|c| c.metrics.as_ref()).collect();
    let class_average = (!present.is_empty()).then(|| {
        let keys: std::collections::BTreeSet<&String> = present.iter().flat_map(|m| m.keys()).collect();
        keys.into_iter()
            .map(|key| {
                let vals: Vec<f64> = present.iter().filter_map(|m| m.get(key).copied()).collect();
                (key.clone(), vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    });
    let edges = length_quartile_edges(out);
    let delta = plddt_delta(out, &run.baselines);
    SeiferReport {
        meta,
        ks: ks.to_vec(),
        overall: ClassMetrics { class: "all".into(), sites: site_count(out, ks), metrics: metric_table(out, ks) },
        per_class,
        class_average,
        by_position: ablate_by_position(out, position_bins, ks),
        by_length: ablate_by_length(out, &edges, ks),
        length_edges: edges,
        plddt: PlddtSummary {
            samples: delta.deltas.len(),
            skipped: delta.skipped,
            mean_delta: (!delta.deltas.is_empty()).then(|| delta.deltas.iter().sum::<f64>() / delta.deltas.len() as f64),
            fraction_positive: delta.fraction_positive,
        },
        recovery_rate: sequence_recovery_rate(out),
        outcomes: out.len(),
        errored: run.errored,
        shortfall: run.shortfall,
    }
}

/// `bin,lo,hi,sites,<metric columns>` with empty cells for empty bins.
pub fn write_bins_csv<W: Write>(mut w: W, bins: &[BinMetrics], ks: &[usize]) -> std::io::Result<()> {
    let cols: Vec<String> = ks.iter().flat_map(|k| [format!("P@{k}"), format!("R@{k}")]).collect();
    writeln!(w, "bin,lo,hi,sites,{}", cols.join(","))?;
    for b in bins {
        let vals: Vec<String> = cols
            .iter()
            .map(|c| b.metrics.as_ref().and_then(|m| m.get(c)).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        writeln!(w, "{},{},{},{},{}", b.bin, b.lo, b.hi, b.sites, vals.join(","))?;
    }
    Ok(())
}
