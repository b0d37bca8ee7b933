//! WebAssembly bindings for the browser demo. Each export takes plain
//! values and returns a JSON string; errors surface as JS exceptions.

use infill_core::dssp::assign_structure;
use infill_core::generators::{FillQuery, Generator, MarkovGenerator, MarkovTable, RandomGenerator};
use infill_core::rng::stream_rng;
use infill_core::seqcore::{fim_transform, sample_span, LengthPolicy, ProteinSequence, ResidueAlphabet};
use infill_core::structio::{parse_structure, Format};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MARKOV_ORDER: usize = 2;

/// Sample a valid span for `sequence` and apply the FIM transformation.
pub fn fim_json(sequence: &str, seed: u64) -> Result<String, String> {
    let alphabet = ResidueAlphabet::default();
    let seq = ProteinSequence::from_raw("input", sequence).map_err(|e| e.to_string())?;
    let tokens = alphabet.tokenize(seq.residues()).map_err(|e| e.to_string())?.0;
    let mut rng = stream_rng(seed, 0);
    let span = sample_span(tokens.len(), &mut rng, LengthPolicy::Uniform).map_err(|e| e.to_string())?;
    let ex = fim_transform(&alphabet, &tokens, span).map_err(|e| e.to_string())?;
    let text = |t: &[u32]| alphabet.detokenize(t).unwrap_or_default();
    Ok(json!({
        "span": span,
        "prefix": text(&ex.prefix.0),
        "middle": text(&ex.middle.0),
        "suffix": text(&ex.suffix.0),
        "rendered": alphabet.render(&ex.flattened.0),
        "ids": ex.flattened.0,
    })
    .to_string())
}

/// Secondary structure of every chain in PDB or mmCIF text.
pub fn dssp_json(text: &str) -> Result<String, String> {
    let model = parse_structure(text.as_bytes(), Format::sniff(text)).map_err(|e| e.to_string())?;
    if model.chains.is_empty() {
        return Err("no atoms found".into());
    }
    let chains: Vec<_> = assign_structure(&model)
        .into_iter()
        .zip(&model.chains)
        .map(|(a, c)| {
            let count = |x: char| a.ss3.chars().filter(|&s| s == x).count();
            json!({
                "chain_id": a.chain_id,
                "sequence": c.sequence(),
                "ss8": a.ss8,
                "ss3": a.ss3,
                "counts": { "H": count('H'), "E": count('E'), "C": count('C') },
            })
        })
        .collect();
    Ok(json!({ "entry": model.entry_id, "chains": chains }).to_string())
}

/// `k` middles of `target_len` residues between `prefix` and `suffix`.
/// `generator` is `random` or `markov` (order 2, trained on the flanks).
pub fn infill_json(prefix: &str, suffix: &str, target_len: usize, k: usize, seed: u64, generator: &str) -> Result<String, String> {
    let clean = |s: &str| -> Result<String, String> {
        if s.trim().is_empty() {
            return Ok(String::new());
        }
        ProteinSequence::from_raw("flank", s).map(|p| p.residues().to_string()).map_err(|e| e.to_string())
    };
    let (prefix, suffix) = (clean(prefix)?, clean(suffix)?);
    let gen: Box<dyn Generator> = match generator {
        "random" => Box::new(RandomGenerator),
        "markov" => {
            let corpus = [prefix.clone(), suffix.clone()];
            Box::new(MarkovGenerator(MarkovTable::train(MARKOV_ORDER, &corpus).map_err(|e| e.to_string())?))
        }
        other => return Err(format!("unknown generator {other:?}")),
    };
    let q = FillQuery { prefix: prefix.clone(), suffix: suffix.clone(), target_len, k, seed };
    let r = gen.fill(&q).map_err(|e| e.to_string())?;
    let designs: Vec<String> = r.candidates.iter().map(|c| format!("{prefix}{c}{suffix}")).collect();
    Ok(json!({ "generator": gen.name(), "candidates": r.candidates, "designs": designs }).to_string())
}

#[wasm_bindgen(js_name = fimTransform)]
pub fn fim_transform_js(sequence: &str, seed: u32) -> Result<String, JsError> {
    fim_json(sequence, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = assignSecondaryStructure)]
pub fn assign_secondary_structure_js(text: &str) -> Result<String, JsError> {
    dssp_json(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = infill)]
pub fn infill_js(prefix: &str, suffix: &str, target_len: u32, k: u32, seed: u32, generator: &str) -> Result<String, JsError> {
    infill_json(prefix, suffix, target_len as usize, k as usize, seed as u64, generator).map_err(|e| JsError::new(&e))
}
