use rand::Rng;

use super::*;
use crate::lm::{ModelConfig, WeightBundle};
use crate::rng::seeded;

fn model() -> Transformer {
    let cfg = ModelConfig { n_layers: 1, d_model: 16, n_heads: 2, vocab_size: 26, max_positions: 64 };
    Transformer::from_bundle(&WeightBundle::random(cfg, &mut seeded(3)).unwrap()).unwrap()
}

fn random_seq(rng: &mut crate::rng::Rng, lens: std::ops::Range<usize>) -> String {
    let n = rng.random_range(lens);
    (0..n).map(|_| CANONICAL_RESIDUES.as_bytes()[rng.random_range(0..20)] as char).collect()
}

/// Ranks by counting, then Pearson by the textbook formula.
fn brute_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn spearman_basics() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(spearman(&xs, &[10.0, 20.0, 30.0, 40.0]).unwrap(), 1.0);
    assert_eq!(spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
    assert!(matches!(spearman(&xs, &[1.0; 4]), Err(FitnessError::Undefined(_))));
    assert!(spearman(&[1.0], &[1.0]).is_err());
    assert!(spearman(&xs, &[1.0]).is_err());
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
}

#[test]
fn spearman_matches_brute_force_with_ties() {
    let mut rng = seeded(17);
    for _ in 0..100 {
        let n = rng.random_range(3..60);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        if let Ok(s) = spearman(&xs, &ys) {
            assert!((s - brute_spearman(&xs, &ys)).abs() < 1e-9);
            let tx: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0 - 7.0).collect();
            assert!((spearman(&tx, &ys).unwrap() - s).abs() < 1e-12);
        }
    }
}

#[test]
fn ingest_fixture_and_errors() {
    let text = "sequence,target,set\nACDE,1.5,train\nWYBZ,-0.5,test\nKLM,2,TEST\n";
    let d = ingest_reader(text.as_bytes(), &ColumnMap::default(), "toy").unwrap();
    assert_eq!(d.records.len(), 3);
    assert_eq!(d.count(Split::Train), 1);
    assert_eq!(d.count(Split::Test), 2);
    assert_eq!(d.records[1].sequence, "WYXX");
    assert_eq!(d.replaced_residues, 2);
    let missing = "sequence,set\nACDE,train\n";
    assert!(matches!(ingest_reader(missing.as_bytes(), &ColumnMap::default(), "x"), Err(FitnessError::MissingColumn(c)) if c == "target"));
    assert!(matches!(ingest_reader("sequence,target,set\n".as_bytes(), &ColumnMap::default(), "x"), Err(FitnessError::Empty)));
    assert!(ingest_reader("sequence,target,set\nAC,nan,test\n".as_bytes(), &ColumnMap::default(), "x").is_err());
}

#[test]
fn csv_round_trip_large() {
    let mut rng = seeded(2);
    let records: Vec<FitnessRecord> = (0..10_000)
        .map(|_| FitnessRecord {
            sequence: random_seq(&mut rng, 1..30),
            fitness: rng.random_range(-5.0..5.0),
            split: if rng.random_bool(0.7) { Split::Train } else { Split::Test },
        })
        .collect();
    let data = FitnessDataset { landscape: "synthetic".into(), records, replaced_residues: 0 };
    let cols = ColumnMap { sequence: "seq".into(), target: "y".into(), split: "fold".into() };
    let mut buf = Vec::new();
    write_csv(&mut buf, &data, &cols).unwrap();
    assert_eq!(ingest_reader(buf.as_slice(), &cols, "synthetic").unwrap(), data);
}

#[test]
fn ridge_recovers_linear_map() {
    let mut rng = seeded(4);
    let xs: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - x[1] + 0.5 * x[2] + 3.0).collect();
    let m = RidgeModel::fit(&xs, &ys, 1e-9).unwrap();
    for (w, t) in m.weights.iter().zip([2.0, -1.0, 0.5]) {
        assert!((w - t).abs() < 1e-6);
    }
    assert!((m.intercept - 3.0).abs() < 1e-6);
    let shrunk = RidgeModel::fit(&xs, &ys, 100.0).unwrap();
    assert!(shrunk.weights[0].abs() < m.weights[0].abs());
    assert_eq!(RidgeModel::fit(&xs, &ys, 1.0).unwrap(), RidgeModel::fit(&xs, &ys, 1.0).unwrap());
}

#[test]
fn loglik_landscape_correlates_perfectly() {
    let m = model();
    let a = ResidueAlphabet::default();
    let mut rng = seeded(9);
    let seqs: Vec<String> = (0..30).map(|_| random_seq(&mut rng, 5..25)).collect();
    let scores = loglik_scores(&m, &a, seqs.iter().map(String::as_str)).unwrap();
    let records = seqs.iter().zip(&scores).map(|(s, &f)| FitnessRecord { sequence: s.clone(), fitness: f, split: Split::Test }).collect();
    let data = FitnessDataset { landscape: "ll".into(), records, replaced_residues: 0 };
    let rep = zero_shot_eval(&m, &a, &data, Scorer::Loglik).unwrap();
    assert_eq!(rep.spearman, 1.0);
    assert_eq!(rep.scorer, "loglik");
    assert!(matches!(
        zero_shot_eval(&m, &a, &data, Scorer::EmbeddingHead { lambda: 1.0 }),
        Err(FitnessError::EmptySplit("train"))
    ));
}

#[test]
fn embedding_head_fits_embedding_landscape() {
    let m = model();
    let a = ResidueAlphabet::default();
    let mut rng = seeded(10);
    let seqs: Vec<String> = (0..120).map(|_| random_seq(&mut rng, 5..25)).collect();
    let emb = embeddings(&m, &a, seqs.iter().map(String::as_str)).unwrap();
    let records = seqs
        .iter()
        .zip(&emb)
        .enumerate()
        .map(|(i, (s, e))| FitnessRecord {
            sequence: s.clone(),
            fitness: e[0] - 2.0 * e[3] + e[7],
            split: if i < 80 { Split::Train } else { Split::Test },
        })
        .collect();
    let data = FitnessDataset { landscape: "emb".into(), records, replaced_residues: 0 };
    let rep = zero_shot_eval(&m, &a, &data, Scorer::EmbeddingHead { lambda: 1e-6 }).unwrap();
    assert!(rep.spearman > 0.95, "{}", rep.spearman);
    assert_eq!((rep.n_train, rep.n_test, rep.lambda), (80, 40, Some(1e-6)));
}
