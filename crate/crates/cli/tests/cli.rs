use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use infill_core::lm::{log_likelihood_score, ModelConfig, Transformer, WeightBundle};
use infill_core::rng::seeded;
use infill_core::seifer::SeiferOutcome;
use infill_core::seqcore::{parse_fim, ResidueAlphabet, SpanSpec, Special, CANONICAL_RESIDUES};
use infill_core::structio::{read_structure, write_pdb};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infill-bench"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/structures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn seq(rng_seed: u64, n: usize) -> String {
    use rand::Rng;
    let mut rng = seeded(rng_seed);
    (0..n).map(|_| CANONICAL_RESIDUES.as_bytes()[rng.random_range(0..20)] as char).collect()
}

fn write_weights(dir: &Path) -> PathBuf {
    let cfg = ModelConfig { n_layers: 1, d_model: 16, n_heads: 2, vocab_size: 26, max_positions: 96 };
    let path = dir.join("w.pfim");
    WeightBundle::random(cfg, &mut seeded(1)).unwrap().save(&path).unwrap();
    path
}

/// Two synthetic proteins with long helix/strand/coil runs and matching SS3.
fn write_fasta_ss3(dir: &Path) -> (PathBuf, PathBuf) {
    let ss_a = format!("{}{}{}{}{}", "C".repeat(5), "H".repeat(14), "C".repeat(8), "E".repeat(7), "C".repeat(6));
    let ss_b = format!("{}{}{}{}", "C".repeat(4), "H".repeat(12), "E".repeat(6), "C".repeat(10));
    let (fa, ss) = (dir.join("p.fasta"), dir.join("p.ss3"));
    fs::write(&fa, format!(">protA\n{}\n>protB\n{}\n", seq(1, ss_a.len()), seq(2, ss_b.len()))).unwrap();
    fs::write(&ss, format!(">protA\n{ss_a}\n>protB\n{ss_b}\n")).unwrap();
    (fa, ss)
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["seifer", "--k", "x"]).status.code(), Some(1));
    let t = TempDir::new().unwrap();
    let fa = t.path().join("a.fasta");
    fs::write(&fa, ">a\nACDEFGHIKL\n").unwrap();
    assert_eq!(run(&["fim-transform", p(&fa), "--p-fim", "1.5", "--out", p(t.path())]).status.code(), Some(1));
    assert_eq!(run(&["dssp", p(&t.path().join("missing.pdb"))]).status.code(), Some(2));
}

#[test]
fn fim_transform_rows_round_trip() {
    let t = TempDir::new().unwrap();
    let fa = t.path().join("in.fasta");
    let seqs = [seq(3, 30), seq(4, 12), seq(5, 57)];
    fs::write(&fa, format!(">a\n{}\n>b\n{}\n>c\n{}\n", seqs[0], seqs[1], seqs[2])).unwrap();
    let alphabet = ResidueAlphabet::default();
    for p_fim in ["0", "0.5", "1"] {
        let out = t.path().join(format!("o{p_fim}"));
        ok(&["fim-transform", p(&fa), "--p-fim", p_fim, "--seed", "7", "--out", p(&out)]);
        let rows = jsonl(&out.join("fim.jsonl"));
        assert_eq!(rows.len(), 3);
        for (row, original) in rows.iter().zip(&seqs) {
            let ids: Vec<u32> = serde_json::from_value(row["ids"].clone()).unwrap();
            let mid = alphabet.special(Special::Mid);
            assert_eq!(ids.contains(&mid), p_fim == "1" || row["fim"] == true);
            let restored = if ids.contains(&mid) {
                let span: SpanSpec = serde_json::from_value(row["span"].clone()).unwrap();
                assert!(span.is_valid_for(original.len()));
                let (pre, suf, midl) = parse_fim(&alphabet, &ids).unwrap();
                assert_eq!(midl.0.len(), span.len);
                [pre.0, midl.0, suf.0].concat()
            } else {
                assert_eq!(ids.last(), Some(&alphabet.special(Special::Eos)));
                ids[..ids.len() - 1].to_vec()
            };
            assert_eq!(&alphabet.detokenize(&restored).unwrap(), original);
            assert_eq!(alphabet.parse_rendered(row["tokens"].as_str().unwrap()).unwrap().0, ids);
        }
    }
    let again = t.path().join("again");
    ok(&["fim-transform", p(&fa), "--p-fim", "0.5", "--seed", "7", "--out", p(&again)]);
    for f in ["fim.jsonl", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(t.path().join("o0.5").join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let summary = json(&again.join("summary.json"));
    assert_eq!(summary["meta"]["seed"], 7);
    assert_eq!(summary["meta"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn sites_then_generate_random_and_fim() {
    let t = TempDir::new().unwrap();
    let (fa, ss) = write_fasta_ss3(t.path());
    let sites_dir = t.path().join("sites");
    ok(&["sites", "--fasta", p(&fa), "--ss3", p(&ss), "--out", p(&sites_dir)]);
    let sites_file = sites_dir.join("sites.jsonl");
    let sites = jsonl(&sites_file);
    assert!(sites.len() >= 4);
    let weights = write_weights(t.path());
    for generator in ["random", "markov", "fim", "ar"] {
        let mut outs = Vec::new();
        for run_no in 0..2 {
            let out = t.path().join(format!("{generator}{run_no}"));
            ok(&["generate", p(&sites_file), "--generator", generator, "--weights", p(&weights), "--k", "5", "--seed", "11", "--out", p(&out)]);
            outs.push(fs::read(out.join("candidates.jsonl")).unwrap());
            let records = jsonl(&out.join("candidates.jsonl"));
            assert_eq!(records.len(), sites.len());
            for (r, s) in records.iter().zip(&sites) {
                assert_eq!(r["site_id"], s["site_id"]);
                let cands = r["candidates"].as_array().unwrap();
                if matches!(generator, "random" | "markov") {
                    assert_eq!(cands.len(), 5, "{generator}");
                } else {
                    assert!(cands.len() <= 5);
                }
                let want = s["target_len"].as_u64().unwrap() as usize;
                for c in cands {
                    let c = c.as_str().unwrap();
                    assert_eq!(c.len(), want);
                    assert!(c.chars().all(|ch| CANONICAL_RESIDUES.contains(ch)));
                }
            }
        }
        assert_eq!(outs[0], outs[1], "{generator} not reproducible");
    }
    let out = t.path().join("noweights");
    assert_eq!(run(&["generate", p(&sites_file), "--generator", "fim", "--out", p(&out)]).status.code(), Some(1));
}

#[test]
fn dssp_outputs_and_cross_format() {
    let t = TempDir::new().unwrap();
    let helix = fixtures().join("ideal_helix.pdb");
    let text = String::from_utf8(ok(&["dssp", p(&helix)]).stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[2], "-HHHHHHHHHHHHH-");

    let water = t.path().join("water.pdb");
    fs::write(&water, "HETATM    1  O   HOH W   1      20.000  20.000  20.000  1.00 30.00           O\nEND\n").unwrap();
    let text = String::from_utf8(ok(&["dssp", p(&water)]).stdout).unwrap();
    assert_eq!(text.split_whitespace().skip(2).collect::<Vec<_>>(), ["-", "-"]);

    let cif = fixtures().join("1ahsA.cif");
    let pdb = t.path().join("1ahsA.pdb");
    fs::write(&pdb, write_pdb(&read_structure(&cif).unwrap()).unwrap()).unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&["dssp", p(&cif), "--format", "json", "--out", p(&a)]);
    ok(&["dssp", p(&pdb), "--format", "json", "--out", p(&b)]);
    let (ja, jb) = (json(&a.join("ss.json")), json(&b.join("ss.json")));
    assert_eq!(ja["chains"][0]["ss3"], jb["chains"][0]["ss3"]);
    assert!(ja["chains"][0]["ss3"].as_str().unwrap().contains('H'));
    ok(&["dssp", p(&cif), "--format", "csv", "--out", p(&a)]);
    let rows = csv_rows(&a.join("ss.csv"));
    assert_eq!(rows.len(), ja["chains"][0]["ss8"].as_str().unwrap().len());
}

fn atom_line(serial: usize, name: &str, res: &str, chain: char, seq: i32, xyz: [f64; 3], element: &str) -> String {
    format!(
        "ATOM  {serial:>5} {name:<4} {res:>3} {chain}{seq:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00 50.00          {element:>2}\n",
        xyz[0], xyz[1], xyz[2]
    )
}

#[test]
fn interactions_sites_and_histogram() {
    let t = TempDir::new().unwrap();
    let pdb = t.path().join("pair.pdb");
    let mut text = String::new();
    text += &atom_line(1, " CA", "ALA", 'A', 1, [0.0, 0.0, 0.0], "C");
    text += &atom_line(2, " CA", "GLY", 'A', 2, [-3.8, 0.0, 0.0], "C");
    text += &atom_line(3, " CA", "SER", 'A', 3, [-7.6, 0.0, 0.0], "C");
    text += &atom_line(4, " CA", "LEU", 'B', 1, [4.9, 0.0, 0.0], "C");
    text += &atom_line(5, " CA", "LYS", 'B', 2, [8.7, 0.0, 0.0], "C");
    text += "END\n";
    fs::write(&pdb, text).unwrap();

    let out = t.path().join("i5");
    ok(&["interactions", p(&pdb), "--cutoff", "5", "--bins", "4", "--out", p(&out)]);
    let rows = csv_rows(&out.join("sites.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0].as_str(), rows[0][2].as_str()), ("A", "ALA"));
    assert_eq!((rows[1][0].as_str(), rows[1][2].as_str()), ("B", "LEU"));
    let mass: usize = csv_rows(&out.join("histogram.csv")).iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(mass, 2);
    roxmltree::Document::parse(&fs::read_to_string(out.join("histogram.svg")).unwrap()).unwrap();

    let zero = t.path().join("i0");
    ok(&["interactions", p(&pdb), "--cutoff", "0", "--format", "json", "--out", p(&zero)]);
    assert_eq!(json(&zero.join("sites.json"))["sites"].as_array().unwrap().len(), 0);
}

#[test]
fn seifer_mock_smoke_and_reproducibility() {
    let t = TempDir::new().unwrap();
    let oracle = t.path().join("oracle.toml");
    fs::write(&oracle, "type = \"mock_identity\"\nplddt = 80.0\n").unwrap();
    let f = fixtures();
    let structures = [f.join("1ahsA.cif"), f.join("1i8nA.cif"), f.join("2cayA.cif")];
    let base = |out: &Path, workers: &str| -> Vec<String> {
        let mut v: Vec<String> = vec!["seifer".into(), "--structures".into()];
        v.extend(structures.iter().map(|s| p(s).to_string()));
        v.extend(["--oracle", p(&oracle), "--k", "5", "--seed", "3", "--workers", workers, "--out", p(out)].map(String::from));
        v
    };
    let a = t.path().join("a");
    let args = base(&a, "1");
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let report = json(&a.join("report.json"));
    for class in report["per_class"].as_array().unwrap() {
        if class["sites"].as_u64().unwrap() > 0 {
            for key in ["P@3", "P@5", "R@3", "R@5"] {
                assert!(class["metrics"][key].is_f64(), "{key}");
            }
        }
    }
    let h = report["per_class"].as_array().unwrap().iter().find(|c| c["class"] == "H").unwrap();
    assert!(h["sites"].as_u64().unwrap() > 0);
    assert_eq!(h["metrics"]["R@5"], 1.0);
    assert_eq!(report["errored"], 0);
    assert_eq!(report["meta"]["seed"], 3);
    for f in ["outcomes.jsonl", "sites.jsonl", "by_position.csv", "by_length.csv", "plddt_cdf.csv", "baselines.json"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    roxmltree::Document::parse(&fs::read_to_string(a.join("plddt_cdf.svg")).unwrap()).unwrap();

    let b = t.path().join("b");
    let args = base(&b, "4");
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[cfg(unix)]
#[test]
fn seifer_missing_oracle_entries_warn_but_succeed() {
    let t = TempDir::new().unwrap();
    let structure = fixtures().join("1i8nA.cif");
    let original = t.path().join("orig.pdb");
    fs::write(&original, write_pdb(&read_structure(&structure).unwrap()).unwrap()).unwrap();
    let script = t.path().join("predict.sh");
    fs::write(&script, format!("case \"$1\" in [0-7]*) exit 1;; esac\ncp {} \"$2\"\n", p(&original))).unwrap();
    let oracle = t.path().join("oracle.json");
    let work = t.path().join("work");
    let cfg = serde_json::json!({ "type": "command", "template": format!("sh {} {{key}} {{out}}", p(&script)), "work_dir": work });
    fs::write(&oracle, cfg.to_string()).unwrap();
    let out = t.path().join("out");
    let res = ok(&["seifer", "--structures", p(&structure), "--oracle", p(&oracle), "--k", "5", "--out", p(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    let report = json(&out.join("report.json"));
    assert!(report["errored"].as_u64().unwrap() > 0);
    assert!(report["errored"].as_u64().unwrap() < report["outcomes"].as_u64().unwrap());

    let empty = t.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let dir_cfg = t.path().join("dir.json");
    fs::write(&dir_cfg, serde_json::json!({ "type": "directory", "dir": empty }).to_string()).unwrap();
    let res = run(&["seifer", "--structures", p(&structure), "--oracle", p(&dir_cfg), "--out", p(&t.path().join("o2"))]);
    assert_eq!(res.status.code(), Some(3));
    let bad = t.path().join("bad.json");
    fs::write(&bad, "{\"type\": \"nope\"}").unwrap();
    let res = run(&["seifer", "--structures", p(&structure), "--oracle", p(&bad), "--out", p(&t.path().join("o3"))]);
    assert_eq!(res.status.code(), Some(3));
}

fn outcome(protein: &str, plddt: f64) -> SeiferOutcome {
    SeiferOutcome {
        site_index: 0,
        protein_id: protein.into(),
        span: SpanSpec::new(4, 3),
        ss_class: 'H',
        protein_len: 12,
        candidate_index: 0,
        candidate: "AAA".into(),
        original_middle: "GGG".into(),
        differs_from_original: true,
        predicted_ss3_span: Some("HHH".into()),
        tp: true,
        plddt_mean_structure: Some(plddt),
        plddt_mean_span: Some(plddt),
        ss3_drift_outside: false,
        error: None,
    }
}

#[test]
fn plddt_delta_cdf_points() {
    let t = TempDir::new().unwrap();
    let outcomes = t.path().join("outcomes.jsonl");
    let rows: Vec<String> = [49.0, 50.0, 51.0].iter().map(|&x| serde_json::to_string(&outcome("p", x)).unwrap()).collect();
    fs::write(&outcomes, rows.join("\n") + "\n" + &serde_json::to_string(&outcome("nobase", 1.0)).unwrap() + "\n").unwrap();
    let base_csv = t.path().join("base.csv");
    fs::write(&base_csv, "protein_id,plddt\np,50\n").unwrap();
    let base_json = t.path().join("base.json");
    fs::write(&base_json, serde_json::to_string(&HashMap::from([("p", 50.0)])).unwrap()).unwrap();
    for base in [&base_csv, &base_json] {
        let out = t.path().join(base.extension().unwrap());
        ok(&["plddt-delta", p(&outcomes), "--baselines", p(base), "--out", p(&out)]);
        let pts: Vec<(f64, f64)> = csv_rows(&out.join("plddt_cdf.csv"))
            .iter()
            .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
            .collect();
        assert_eq!(pts, vec![(-1.0, 1.0 / 3.0), (0.0, 2.0 / 3.0), (1.0, 1.0)]);
        let summary = json(&out.join("summary.json"));
        assert_eq!(summary["positive"], 1);
        assert_eq!(summary["fraction_positive"], 1.0 / 3.0);
        assert_eq!(summary["skipped"], 1);
        roxmltree::Document::parse(&fs::read_to_string(out.join("plddt_cdf.svg")).unwrap()).unwrap();
    }
}

#[test]
fn fitness_loglik_report() {
    let t = TempDir::new().unwrap();
    let weights = write_weights(t.path());
    let model = Transformer::load(&weights).unwrap();
    let alphabet = ResidueAlphabet::default();
    let mut csv = String::from("seq,y,fold\n");
    for i in 0..24 {
        let s = seq(100 + i, 8 + (i as usize % 9));
        let toks = alphabet.tokenize(&s).unwrap().0;
        let score = log_likelihood_score(&model, &toks, alphabet.special(Special::Eos)).unwrap();
        csv += &format!("{s},{score},{}\n", if i % 3 == 0 { "train" } else { "test" });
    }
    let data = t.path().join("land.csv");
    fs::write(&data, csv).unwrap();
    let out = t.path().join("out");
    let cols = ["--seq-col", "seq", "--target-col", "y", "--split-col", "fold"];
    let mut args = vec!["fitness", "--weights", p(&weights), "--csv", p(&data), "--out", p(&out)];
    args.extend(cols);
    ok(&args);
    let rep = json(&out.join("fitness.json"));
    assert_eq!(rep["spearman"], 1.0);
    assert_eq!(rep["landscape"], "land");
    assert_eq!(rep["n_test"], 16);
    args.extend(["--scorer", "embedding", "--lambda", "0.5"]);
    ok(&args);
    let rep = json(&out.join("fitness.json"));
    assert_eq!(rep["lambda"], 0.5);
    assert_eq!(rep["n_train"], 8);
    assert_eq!(run(&["fitness", "--weights", p(&weights), "--csv", p(&data), "--out", p(&out)]).status.code(), Some(2));
}
