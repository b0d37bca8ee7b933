use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use infill_core::dssp::{assign_structure, write_ss_dump};
use infill_core::fitness::{ingest_csv, zero_shot_eval, ColumnMap, Scorer};
use infill_core::generators::{
    FillQuery, FillRecord, GenError, Generator, MarkovGenerator, MarkovTable, ModelGenerator, PromptMode,
    Provenance, RandomGenerator, RetryOptions,
};
use infill_core::lm::{SamplingParams, Transformer};
use infill_core::plot::{cdf_svg, histogram_svg};
use infill_core::rng::{mix_seed, stream_rng};
use infill_core::seifer::{
    build_report, extract_middle_sites, plddt_delta as delta_of, protein_from_structure, run_seifer, write_bins_csv,
    MiddleSite, MinLens, OracleConfig, Protein, RunOptions, SeiferOutcome,
};
use infill_core::seqcore::{self, read_fasta_path, sample_span, LengthPolicy, ResidueAlphabet, SpanSpec, Special, MIN_FLANK};
use infill_core::structio::{extract_interaction_sites, read_structure, relative_positions};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{data, CliError, Result};
use crate::meta::{with_meta, Meta, Outputs};
use crate::{
    DsspArgs, FimTransformArgs, FitnessArgs, Format, GenerateArgs, GeneratorArgs, GeneratorKind, InteractionsArgs,
    PlddtDeltaArgs, ProteinInputs, ScorerKind, SeiferArgs, SitesArgs,
};

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimRow {
    pub id: String,
    pub fim: bool,
    pub span: Option<SpanSpec>,
    pub tokens: String,
    pub ids: Vec<u32>,
}

pub fn fim_transform(a: &FimTransformArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.p_fim) {
        return Err(CliError::Usage(format!("--p-fim must be in [0, 1], got {}", a.p_fim)));
    }
    let alphabet = ResidueAlphabet::default();
    let records = read_fasta_path(&a.fasta).map_err(data(a.fasta.display()))?;
    let mut rows = Vec::with_capacity(records.len());
    let mut too_short = 0;
    for (i, rec) in records.iter().enumerate() {
        let tokens = alphabet.tokenize(rec.residues()).map_err(data(&rec.id))?.0;
        let mut rng = stream_rng(a.seed, i as u64);
        let wants_fim = rng.random_bool(a.p_fim);
        let fits = tokens.len() > 2 * MIN_FLANK;
        if wants_fim && !fits {
            too_short += 1;
        }
        let (span, ids) = if wants_fim && fits {
            let span = sample_span(tokens.len(), &mut rng, LengthPolicy::Uniform).map_err(data(&rec.id))?;
            (Some(span), seqcore::fim_transform(&alphabet, &tokens, span).map_err(data(&rec.id))?.flattened.0)
        } else {
            let mut ids = tokens;
            ids.push(alphabet.special(Special::Eos));
            (None, ids)
        };
        let tokens = alphabet.render(&ids);
        rows.push(FimRow { id: rec.id.clone(), fim: span.is_some(), span, tokens, ids });
    }
    if too_short > 0 {
        warn(format!("{too_short} records shorter than {} residues kept in plain form", 2 * MIN_FLANK + 1));
    }
    let mut out = Outputs::new(&a.out, Meta::new("fim-transform", a.seed, a))?;
    out.write_jsonl("fim.jsonl", &rows)?;
    let fim = rows.iter().filter(|r| r.fim).count();
    out.write_json("summary.json", &json!({ "records": rows.len(), "fim": fim, "plain": rows.len() - fim, "too_short": too_short }))?;
    out.finish()?;
    Ok(())
}

fn load_proteins(inputs: &ProteinInputs) -> Result<Vec<Protein>> {
    let mut proteins = Vec::new();
    for path in &inputs.structures {
        let model = read_structure(path).map_err(data(path.display()))?;
        match protein_from_structure(&model) {
            Some(p) => proteins.push(p),
            None => return Err(CliError::Data(format!("{}: no polymer chain", path.display()))),
        }
    }
    if let (Some(fasta), Some(ss3)) = (&inputs.fasta, &inputs.ss3) {
        let seqs = read_fasta_path(fasta).map_err(data(fasta.display()))?;
        let labels: HashMap<String, String> = read_fasta_path(ss3)
            .map_err(data(ss3.display()))?
            .into_iter()
            .map(|r| (r.id.clone(), r.residues().to_string()))
            .collect();
        for s in seqs {
            let l = labels.get(&s.id).ok_or_else(|| CliError::Data(format!("no SS3 record for {}", s.id)))?;
            proteins.push(Protein::new(s.id.clone(), s.residues(), l.as_str()).map_err(data(&s.id))?);
        }
    }
    if proteins.is_empty() {
        return Err(CliError::Usage("give --structures or --fasta with --ss3".into()));
    }
    Ok(proteins)
}

fn min_lens(spec: &str) -> Result<MinLens> {
    spec.parse().map_err(|e| CliError::Usage(format!("--min-lens: {e}")))
}

fn middle_sites(proteins: &[Protein], lens: MinLens) -> Result<Vec<MiddleSite>> {
    let mut sites = Vec::new();
    for p in proteins {
        sites.extend(extract_middle_sites(&p.id, &p.sequence, &p.ss3, lens).map_err(data(&p.id))?);
    }
    Ok(sites)
}

/// One fill query, as written by `sites` and read by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteQuery {
    pub site_id: String,
    pub prefix: String,
    pub suffix: String,
    pub target_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ss_class: Option<char>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_middle: Option<String>,
}

fn site_query(p: &Protein, s: &MiddleSite) -> SiteQuery {
    SiteQuery {
        site_id: format!("{}:{}-{}:{}", s.protein_id, s.span.start, s.span.end(), s.ss_class),
        prefix: p.sequence[..s.span.start].to_string(),
        suffix: p.sequence[s.span.end()..].to_string(),
        target_len: s.span.len,
        ss_class: Some(s.ss_class),
        original_middle: Some(s.original_middle.clone()),
    }
}

pub fn sites(a: &SitesArgs) -> Result<()> {
    let lens = min_lens(&a.inputs.min_lens)?;
    let proteins = load_proteins(&a.inputs)?;
    let by_id: HashMap<&str, &Protein> = proteins.iter().map(|p| (p.id.as_str(), p)).collect();
    let sites = middle_sites(&proteins, lens)?;
    let rows: Vec<SiteQuery> = sites.iter().map(|s| site_query(by_id[s.protein_id.as_str()], s)).collect();
    let mut out = Outputs::new(&a.out, Meta::new("sites", 0, a))?;
    out.write_jsonl("sites.jsonl", &rows)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in &sites {
        *counts.entry(s.ss_class.to_string()).or_default() += 1;
    }
    out.write_json("summary.json", &json!({ "proteins": proteins.len(), "sites": sites.len(), "per_class": counts }))?;
    out.finish()?;
    Ok(())
}

fn build_generator(g: &GeneratorArgs, seed: u64, corpus: impl FnOnce() -> Vec<String>) -> Result<Box<dyn Generator>> {
    let params = SamplingParams { top_k: g.top_k, top_p: g.top_p, temperature: g.temperature, seed };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let model = |kind: &str| -> Result<Transformer> {
        let w = g.weights.as_ref().ok_or_else(|| CliError::Usage(format!("--generator {kind} needs --weights")))?;
        Transformer::load(w).map_err(data(w.display()))
    };
    let opts = RetryOptions { dedup: g.dedup, relax: g.relax, ..RetryOptions::default() };
    Ok(match g.generator {
        GeneratorKind::Random => Box::new(RandomGenerator),
        GeneratorKind::Markov => {
            let seqs = match &g.train_fasta {
                Some(p) => read_fasta_path(p).map_err(data(p.display()))?.iter().map(|r| r.residues().to_string()).collect(),
                None => corpus(),
            };
            Box::new(MarkovGenerator(MarkovTable::train(g.markov_order, &seqs).map_err(data("markov training"))?))
        }
        GeneratorKind::Fim => Box::new(ModelGenerator { model: model("fim")?, mode: PromptMode::Fim, params, opts }),
        GeneratorKind::Ar => Box::new(ModelGenerator { model: model("ar")?, mode: PromptMode::ArPrefix, params, opts }),
    })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(data(path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(data(format!("{}:{}", path.display(), i + 1))))
        .collect()
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let queries: Vec<SiteQuery> = read_jsonl(&a.sites)?;
    let corpus = || queries.iter().flat_map(|q| [q.prefix.clone(), q.suffix.clone()]).collect();
    let generator = build_generator(&a.gen, a.seed, corpus)?;
    let mut records = Vec::with_capacity(queries.len());
    let mut shortfall = 0;
    for (i, q) in queries.iter().enumerate() {
        let fq = FillQuery {
            prefix: q.prefix.clone(),
            suffix: q.suffix.clone(),
            target_len: q.target_len,
            k: a.k,
            seed: mix_seed(a.seed, i as u64),
        };
        match generator.fill(&fq) {
            Ok(r) => records.push(FillRecord::new(&q.site_id, r)),
            Err(GenError::PartialResult { candidates, attempts, .. }) => {
                shortfall += a.k - candidates.len();
                let provenance = Provenance { generator: generator.name().to_string(), params: json!({ "seed": fq.seed, "partial": true }) };
                records.push(FillRecord { site_id: q.site_id.clone(), candidates, provenance, attempts });
            }
            Err(GenError::InvalidQuery(m)) => return Err(CliError::Data(format!("{}: {m}", q.site_id))),
            Err(e) => return Err(CliError::Data(format!("{}: {e}", q.site_id))),
        }
    }
    if shortfall > 0 {
        warn(format!("{shortfall} candidates could not be generated"));
    }
    let mut out = Outputs::new(&a.out, Meta::new("generate", a.seed, a))?;
    out.write_jsonl("candidates.jsonl", &records)?;
    out.write_json("summary.json", &json!({ "sites": records.len(), "k": a.k, "generator": generator.name(), "shortfall": shortfall }))?;
    out.finish()?;
    Ok(())
}

pub fn dssp(a: &DsspArgs) -> Result<()> {
    let model = read_structure(&a.structure).map_err(data(a.structure.display()))?;
    let chains = assign_structure(&model);
    let meta = Meta::new("dssp", 0, a);
    let body = match a.format {
        Format::Text => {
            let mut buf = Vec::new();
            write_ss_dump(&mut buf, &model.entry_id, &chains)?;
            buf
        }
        Format::Json => {
            let v = with_meta(&meta, &json!({ "entry": model.entry_id, "chains": chains }));
            (serde_json::to_string_pretty(&v).map_err(data("dssp"))? + "\n").into_bytes()
        }
        Format::Csv => {
            let mut s = String::from("chain,index,ss8,ss3\n");
            for c in &chains {
                for (i, (s8, s3)) in c.ss8.chars().zip(c.ss3.chars()).enumerate() {
                    let _ = writeln!(s, "{},{i},{s8},{s3}", c.chain_id);
                }
            }
            s.into_bytes()
        }
    };
    match &a.out {
        None => {
            print!("{}", String::from_utf8_lossy(&body));
            Ok(())
        }
        Some(dir) => {
            let mut out = Outputs::new(dir, meta)?;
            match a.format {
                Format::Text => {
                    let mut stamped = out.meta().csv_comment().into_bytes();
                    stamped.extend_from_slice(&body);
                    out.write("ss.txt", &stamped)?;
                }
                Format::Json => out.write("ss.json", &body)?,
                Format::Csv => out.write_csv("ss.csv", &body)?,
            }
            out.finish()?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRow {
    pub chain: String,
    pub index: usize,
    pub residue: String,
    pub seq_num: i32,
    pub relative_position: f64,
}

pub fn interactions(a: &InteractionsArgs) -> Result<()> {
    if a.cutoff < 0.0 || !a.cutoff.is_finite() {
        return Err(CliError::Usage(format!("--cutoff must be a non-negative number, got {}", a.cutoff)));
    }
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let model = read_structure(&a.structure).map_err(data(a.structure.display()))?;
    let sites: Vec<_> = extract_interaction_sites(&model, a.cutoff).into_iter().collect();
    let lengths: HashMap<String, usize> = model.chains.iter().map(|c| (c.id.clone(), c.residues.len())).collect();
    let rel = relative_positions(&sites, &lengths, a.bins).map_err(data("relative positions"))?;
    let rows: Vec<SiteRow> = sites
        .iter()
        .zip(&rel.positions)
        .map(|((chain, idx), &p)| {
            let r = &model.chain(chain).expect("site chain exists").residues[*idx];
            SiteRow { chain: chain.clone(), index: *idx, residue: r.name3.clone(), seq_num: r.seq_num, relative_position: p }
        })
        .collect();
    let mut out = Outputs::new(&a.out, Meta::new("interactions", 0, a))?;
    match a.format {
        Format::Json => out.write_json("sites.json", &json!({ "entry": model.entry_id, "cutoff": a.cutoff, "sites": rows }))?,
        _ => {
            let mut s = String::from("chain,index,residue,seq_num,relative_position\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{},{},{}", r.chain, r.index, r.residue, r.seq_num, r.relative_position);
            }
            out.write_csv("sites.csv", s.as_bytes())?;
        }
    }
    let mut hist = Vec::new();
    rel.histogram.write_csv(&mut hist)?;
    out.write_csv("histogram.csv", &hist)?;
    let title = format!("Interaction sites ({} residues, {} Å)", rows.len(), a.cutoff);
    out.write_svg("histogram.svg", &histogram_svg(&rel.histogram.counts, 0.0, 1.0, &title, "relative position in chain"))?;
    out.finish()?;
    Ok(())
}

fn load_oracle_config(path: &Path) -> Result<OracleConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Oracle(format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Oracle(format!("{}: {e}", path.display())))
}

fn metric_ks(k: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [3, 5, k].into_iter().filter(|&x| x >= 1 && x <= k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

pub fn seifer(a: &SeiferArgs) -> Result<()> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let lens = min_lens(&a.inputs.min_lens)?;
    let config = load_oracle_config(&a.oracle)?;
    let proteins = load_proteins(&a.inputs)?;
    let sites = middle_sites(&proteins, lens)?;
    if sites.is_empty() {
        return Err(CliError::Data("no sites meet the minimum lengths".into()));
    }
    let corpus = || proteins.iter().map(|p| p.sequence.clone()).collect();
    let generator = build_generator(&a.gen, a.seed, corpus)?;
    let ss3: HashMap<String, String> = proteins.iter().map(|p| (p.id.clone(), p.ss3.clone())).collect();
    let oracle = config.build(&ss3);
    let opts = RunOptions { k: a.k, seed: a.seed, allow_identical: a.allow_identical, baselines: true, workers: a.workers.max(1) };
    let run = run_seifer(&proteins, &sites, generator.as_ref(), oracle.as_ref(), &opts).map_err(data("seifer"))?;
    if !run.outcomes.is_empty() && run.errored == run.outcomes.len() {
        let first = run.outcomes.iter().find_map(|o| o.error.clone()).unwrap_or_default();
        return Err(CliError::Oracle(format!("every prediction failed; first error: {first}")));
    }
    if run.errored > 0 {
        warn(format!("{} of {} candidates errored and were excluded", run.errored, run.outcomes.len()));
    }
    if run.shortfall > 0 {
        warn(format!("{} candidates could not be generated", run.shortfall));
    }

    let meta = Meta::new("seifer", a.seed, a);
    let ks = metric_ks(a.k);
    let report = build_report(&run, &ks, a.position_bins.max(1), meta.to_value());
    let by_id: HashMap<&str, &Protein> = proteins.iter().map(|p| (p.id.as_str(), p)).collect();
    let queries: Vec<SiteQuery> = sites.iter().map(|s| site_query(by_id[s.protein_id.as_str()], s)).collect();

    let mut out = Outputs::new(&a.out, meta)?;
    out.write_jsonl("sites.jsonl", &queries)?;
    out.write_jsonl("outcomes.jsonl", &run.outcomes)?;
    out.write_json("baselines.json", &json!({ "baselines": run.baselines }))?;
    out.write_json("report.json", &report)?;
    let mut buf = Vec::new();
    write_bins_csv(&mut buf, &report.by_position, &ks)?;
    out.write_csv("by_position.csv", &buf)?;
    let mut buf = Vec::new();
    write_bins_csv(&mut buf, &report.by_length, &ks)?;
    out.write_csv("by_length.csv", &buf)?;
    let delta = delta_of(&run.outcomes, &run.baselines);
    let mut buf = Vec::new();
    delta.write_cdf_csv(&mut buf)?;
    out.write_csv("plddt_cdf.csv", &buf)?;
    out.write_svg("plddt_cdf.svg", &cdf_svg(&delta.cdf, "pLDDT change of designed sequences", "Δ mean pLDDT"))?;
    out.finish()?;
    Ok(())
}

fn load_baselines(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(data(path.display()))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(data(path.display()))?;
        if let Some(inner) = v.get_mut("baselines") {
            v = inner.take();
        }
        return serde_json::from_value(v).map_err(data(path.display()));
    }
    let mut map = BTreeMap::new();
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    lines.next();
    for (i, line) in lines.enumerate() {
        let (id, val) = line.split_once(',').ok_or_else(|| CliError::Data(format!("{}: row {} needs two columns", path.display(), i + 2)))?;
        let v: f64 = val.trim().parse().map_err(data(format!("{}: row {}", path.display(), i + 2)))?;
        map.insert(id.trim().to_string(), v);
    }
    Ok(map)
}

pub fn plddt_delta(a: &PlddtDeltaArgs) -> Result<()> {
    let outcomes: Vec<SeiferOutcome> = read_jsonl(&a.outcomes)?;
    let baselines = load_baselines(&a.baselines)?;
    let delta = delta_of(&outcomes, &baselines);
    if delta.skipped > 0 {
        warn(format!("{} candidates have no baseline and were skipped", delta.skipped));
    }
    let mut out = Outputs::new(&a.out, Meta::new("plddt-delta", a.seed, a))?;
    let mut buf = Vec::new();
    delta.write_cdf_csv(&mut buf)?;
    out.write_csv("plddt_cdf.csv", &buf)?;
    out.write_svg("plddt_cdf.svg", &cdf_svg(&delta.cdf, "pLDDT change of designed sequences", "Δ mean pLDDT"))?;
    let mean = (!delta.deltas.is_empty()).then(|| delta.deltas.iter().sum::<f64>() / delta.deltas.len() as f64);
    out.write_json(
        "summary.json",
        &json!({
            "samples": delta.deltas.len(),
            "skipped": delta.skipped,
            "positive": delta.deltas.iter().filter(|&&d| d > 0.0).count(),
            "fraction_positive": delta.fraction_positive,
            "mean_delta": mean,
            "cdf": delta.cdf,
        }),
    )?;
    out.finish()?;
    Ok(())
}

pub fn fitness(a: &FitnessArgs) -> Result<()> {
    if !(a.lambda >= 0.0) {
        return Err(CliError::Usage(format!("--lambda must be non-negative, got {}", a.lambda)));
    }
    let cols = ColumnMap { sequence: a.seq_col.clone(), target: a.target_col.clone(), split: a.split_col.clone() };
    let dataset = ingest_csv(&a.csv, &cols).map_err(data(a.csv.display()))?;
    if dataset.replaced_residues > 0 {
        warn(format!("{} non-canonical residues replaced by X", dataset.replaced_residues));
    }
    let model = Transformer::load(&a.weights).map_err(data(a.weights.display()))?;
    let scorer = match a.scorer {
        ScorerKind::Loglik => Scorer::Loglik,
        ScorerKind::Embedding => Scorer::EmbeddingHead { lambda: a.lambda },
    };
    let report = zero_shot_eval(&model, &ResidueAlphabet::default(), &dataset, scorer).map_err(data("fitness"))?;
    let mut out = Outputs::new(&a.out, Meta::new("fitness", a.seed, a))?;
    out.write_json("fitness.json", &report)?;
    out.finish()?;
    Ok(())
}
