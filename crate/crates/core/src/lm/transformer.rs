use super::{Decoder, LanguageModel, LmError, Matrix, ModelConfig, WeightBundle};
use crate::seqcore::TokenId;

const LN_EPS: f32 = 1e-5;

struct Linear {
    /// `[in, out]` row-major.
    weight: Vec<f32>,
    bias: Option<Vec<f32>>,
    n_in: usize,
    n_out: usize,
}

impl Linear {
    fn apply(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.n_in);
        match &self.bias {
            Some(b) => out.copy_from_slice(b),
            None => out.fill(0.0),
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weight[i * self.n_out..(i + 1) * self.n_out];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

struct LayerNorm {
    gain: Vec<f32>,
    bias: Vec<f32>,
}

impl LayerNorm {
    fn apply(&self, x: &[f32], out: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for ((o, &v), (g, b)) in out.iter_mut().zip(x).zip(self.gain.iter().zip(&self.bias)) {
            *o = (v - mean) * inv * g + b;
        }
    }
}

struct Block {
    ln1: LayerNorm,
    qkv: Linear,
    attn_out: Linear,
    ln2: LayerNorm,
    fc: Linear,
    proj: Linear,
}

/// GPT-2 style pre-norm decoder loaded from a [`WeightBundle`].
///
/// The model is immutable after construction; all per-call state lives in
/// the decoder returned by [`LanguageModel::decoder`].
pub struct Transformer {
    config: ModelConfig,
    tok_emb: Vec<f32>,
    pos_emb: Vec<f32>,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    lm_head: Linear,
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

impl Transformer {
    pub fn from_bundle(bundle: &WeightBundle) -> Result<Self, LmError> {
        bundle.validate()?;
        let cfg = bundle.config.clone();
        let d = cfg.d_model;
        let take = |name: &str| -> Result<Vec<f32>, LmError> { Ok(bundle.tensor(name)?.data.clone()) };
        let linear = |w: &str, b: Option<&str>, n_in: usize, n_out: usize| -> Result<Linear, LmError> {
            Ok(Linear { weight: take(w)?, bias: b.map(take).transpose()?, n_in, n_out })
        };
        let ln = |p: &str| -> Result<LayerNorm, LmError> {
            Ok(LayerNorm { gain: take(&format!("{p}.weight"))?, bias: take(&format!("{p}.bias"))? })
        };
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let p = |s: &str| format!("layers.{i}.{s}");
            blocks.push(Block {
                ln1: ln(&p("ln1"))?,
                qkv: linear(&p("attn.qkv.weight"), Some(&p("attn.qkv.bias")), d, 3 * d)?,
                attn_out: linear(&p("attn.out.weight"), Some(&p("attn.out.bias")), d, d)?,
                ln2: ln(&p("ln2"))?,
                fc: linear(&p("mlp.fc.weight"), Some(&p("mlp.fc.bias")), d, cfg.d_ff())?,
                proj: linear(&p("mlp.proj.weight"), Some(&p("mlp.proj.bias")), cfg.d_ff(), d)?,
            });
        }
        Ok(Self {
            tok_emb: take("tok_emb")?,
            pos_emb: take("pos_emb")?,
            blocks,
            ln_f: ln("ln_f")?,
            lm_head: linear("lm_head.weight", None, d, cfg.vocab_size)?,
            config: cfg,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, LmError> {
        Self::from_bundle(&WeightBundle::load(path)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn session(&self) -> Session<'_> {
        Session { model: self, keys: vec![Vec::new(); self.blocks.len()], values: vec![Vec::new(); self.blocks.len()], pos: 0 }
    }

    /// Final hidden states (after the output layer norm), one row per
    /// input position.
    pub fn hidden_states(&self, tokens: &[TokenId]) -> Result<Matrix, LmError> {
        self.check_len(tokens.len())?;
        let mut s = self.session();
        let rows = tokens.iter().map(|&t| s.step(t).map(|(h, _)| h)).collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix { rows: tokens.len(), cols: self.config.d_model, data: rows.into_iter().flatten().collect() })
    }

    fn check_len(&self, len: usize) -> Result<(), LmError> {
        if len > self.config.max_positions {
            return Err(LmError::ContextLength { len, max: self.config.max_positions });
        }
        Ok(())
    }
}

/// KV cache for one decoding run.
struct Session<'a> {
    model: &'a Transformer,
    /// Per layer, flattened `[pos, d_model]`.
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    pos: usize,
}

impl Session<'_> {
    /// Advance by one token, returning `(final hidden, logits)`.
    fn step(&mut self, token: TokenId) -> Result<(Vec<f32>, Vec<f32>), LmError> {
        let m = self.model;
        let cfg = &m.config;
        if self.pos >= cfg.max_positions {
            return Err(LmError::ContextLength { len: self.pos + 1, max: cfg.max_positions });
        }
        if token as usize >= cfg.vocab_size {
            return Err(LmError::TokenOutOfRange(token));
        }
        let d = cfg.d_model;
        let nh = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f32).sqrt();
        let t = token as usize;

        let mut x: Vec<f32> = m.tok_emb[t * d..(t + 1) * d]
            .iter()
            .zip(&m.pos_emb[self.pos * d..(self.pos + 1) * d])
            .map(|(a, b)| a + b)
            .collect();
        let mut h = vec![0.0; d];
        let mut qkv = vec![0.0; 3 * d];
        let mut attn = vec![0.0; d];
        let mut proj = vec![0.0; d];
        let mut ff = vec![0.0; cfg.d_ff()];
        let n_ctx = self.pos + 1;
        let mut scores = vec![0.0f32; n_ctx];

        for (li, block) in m.blocks.iter().enumerate() {
            block.ln1.apply(&x, &mut h);
            block.qkv.apply(&h, &mut qkv);
            let (q, kv) = qkv.split_at(d);
            let (k, v) = kv.split_at(d);
            self.keys[li].extend_from_slice(k);
            self.values[li].extend_from_slice(v);
            let keys = &self.keys[li];
            let values = &self.values[li];

            for head in 0..nh {
                let qh = &q[head * hd..(head + 1) * hd];
                let mut max = f32::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &keys[j * d + head * hd..j * d + (head + 1) * hd];
                    *s = qh.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                    max = max.max(*s);
                }
                let mut z = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    z += *s;
                }
                let out = &mut attn[head * hd..(head + 1) * hd];
                out.fill(0.0);
                for (j, &s) in scores.iter().enumerate() {
                    let w = s / z;
                    let vj = &values[j * d + head * hd..j * d + (head + 1) * hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += w * vv;
                    }
                }
            }
            block.attn_out.apply(&attn, &mut proj);
            x.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);

            block.ln2.apply(&x, &mut h);
            block.fc.apply(&h, &mut ff);
            ff.iter_mut().for_each(|v| *v = gelu(*v));
            block.proj.apply(&ff, &mut proj);
            x.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);
        }

        let mut hidden = vec![0.0; d];
        m.ln_f.apply(&x, &mut hidden);
        let mut logits = vec![0.0; cfg.vocab_size];
        m.lm_head.apply(&hidden, &mut logits);
        self.pos += 1;
        Ok((hidden, logits))
    }
}

impl Decoder for Session<'_> {
    fn push(&mut self, token: TokenId) -> Result<Vec<f32>, LmError> {
        self.step(token).map(|(_, logits)| logits)
    }

    fn position(&self) -> usize {
        self.pos
    }
}

impl LanguageModel for Transformer {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix, LmError> {
        self.check_len(tokens.len())?;
        let mut s = self.session();
        let mut data = Vec::with_capacity(tokens.len() * self.config.vocab_size);
        for &t in tokens {
            data.extend(s.step(t)?.1);
        }
        Ok(Matrix { rows: tokens.len(), cols: self.config.vocab_size, data })
    }

    fn decoder(&self) -> Box<dyn Decoder + '_> {
        Box::new(self.session())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::forward_logits;
    use crate::rng::seeded;
    use rand::Rng;

    fn cfg() -> ModelConfig {
        ModelConfig { n_layers: 2, d_model: 16, n_heads: 4, vocab_size: 26, max_positions: 64 }
    }

    fn model(seed: u64) -> Transformer {
        let mut b = WeightBundle::random(cfg(), &mut seeded(seed)).unwrap();
        // Non-trivial biases and gains so every parameter participates.
        let mut rng = seeded(seed + 1);
        for (name, t) in b.tensors.iter_mut() {
            if name.ends_with("bias") || name.contains("ln") {
                t.data.iter_mut().for_each(|x| *x += rng.random_range(-0.1..0.1));
            }
        }
        Transformer::from_bundle(&b).unwrap()
    }

    #[test]
    fn single_token_is_finite() {
        let m = model(1);
        let l = forward_logits(&m, &[3]).unwrap();
        assert_eq!((l.rows, l.cols), (1, 26));
        assert!(l.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn all_pad_input_is_finite() {
        let m = model(2);
        let l = forward_logits(&m, &[25; 64]).unwrap();
        assert!(l.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn overlong_input_rejected() {
        let m = model(3);
        assert!(matches!(forward_logits(&m, &[0; 65]), Err(LmError::ContextLength { len: 65, max: 64 })));
        assert!(matches!(forward_logits(&m, &[26]), Err(LmError::TokenOutOfRange(26))));
    }

    #[test]
    fn incremental_decoder_matches_full_pass() {
        let m = model(4);
        let toks = [21, 0, 4, 7, 22, 9, 9, 23];
        let full = m.logits(&toks).unwrap();
        let mut dec = m.decoder();
        for (i, &t) in toks.iter().enumerate() {
            assert_eq!(dec.push(t).unwrap(), full.row(i));
        }
    }

    #[test]
    fn suffix_perturbation_leaves_prefix_rows_bitwise_equal() {
        let m = model(5);
        let mut rng = seeded(6);
        for _ in 0..20 {
            let len = rng.random_range(2..40);
            let a: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..26)).collect();
            let j = rng.random_range(1..len);
            let mut b = a.clone();
            b[j] = (b[j] + 1 + rng.random_range(0..25)) % 26;
            let (la, lb) = (m.logits(&a).unwrap(), m.logits(&b).unwrap());
            for i in 0..j {
                assert_eq!(la.row(i), lb.row(i));
            }
            assert_ne!(la.row(j), lb.row(j));
        }
    }
}
