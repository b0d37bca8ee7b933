use infill_wasm::{dssp_json, fim_json, infill_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn fim_pieces_reassemble() {
    let seq = "MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQ";
    for seed in 0..20 {
        let r = parse(&fim_json(seq, seed).unwrap());
        let joined = format!("{}{}{}", r["prefix"].as_str().unwrap(), r["middle"].as_str().unwrap(), r["suffix"].as_str().unwrap());
        assert_eq!(joined, seq);
        assert!(r["prefix"].as_str().unwrap().len() >= 4 && r["suffix"].as_str().unwrap().len() >= 4);
    }
    assert_eq!(fim_json(seq, 3).unwrap(), fim_json(seq, 3).unwrap());
    assert!(fim_json("MKTA", 0).is_err());
    assert!(fim_json("MK1TAYIAKQR", 0).is_err());
}

#[test]
fn dssp_on_example_helix() {
    let text = include_str!("../www/example.pdb");
    let r = parse(&dssp_json(text).unwrap());
    let chain = &r["chains"][0];
    assert_eq!(chain["ss8"], "-HHHHHHHHHHHHH-");
    assert_eq!(chain["counts"]["H"], 13);
    assert!(dssp_json("").is_err());
}

#[test]
fn infill_lengths_and_generators() {
    for gen in ["random", "markov"] {
        let r = parse(&infill_json("MKTAYIAKQRQ", "LEERLGLIEVQ", 8, 5, 2, gen).unwrap());
        let cands = r["candidates"].as_array().unwrap();
        assert_eq!(cands.len(), 5);
        for (c, d) in cands.iter().zip(r["designs"].as_array().unwrap()) {
            assert_eq!(c.as_str().unwrap().len(), 8);
            assert_eq!(d.as_str().unwrap(), format!("MKTAYIAKQRQ{}LEERLGLIEVQ", c.as_str().unwrap()));
        }
    }
    assert!(infill_json("MKT", "LEE", 0, 5, 0, "random").is_err());
    assert!(infill_json("MKT", "LEE", 3, 5, 0, "lstm").is_err());
}
