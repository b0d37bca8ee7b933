//! Portable weight file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes   "PFIM"
//! version    u32       1
//! header_len u32       byte length of the JSON header
//! header     JSON      {"config": ModelConfig, "tensors": [{"name", "shape", "offset"}]}
//! payload    f32 LE    tensors back to back; offset is relative to payload start
//! crc32      u32       CRC-32 (IEEE) of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LmError, ModelConfig};

pub const MAGIC: &[u8; 4] = b"PFIM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus the config they were shaped for.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Tensor names and shapes a config requires.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d_model;
    let ff = cfg.d_ff();
    let mut out = vec![
        ("tok_emb".to_string(), vec![cfg.vocab_size, d]),
        ("pos_emb".to_string(), vec![cfg.max_positions, d]),
    ];
    for i in 0..cfg.n_layers {
        let p = |s: &str| format!("layers.{i}.{s}");
        out.extend([
            (p("ln1.weight"), vec![d]),
            (p("ln1.bias"), vec![d]),
            (p("attn.qkv.weight"), vec![d, 3 * d]),
            (p("attn.qkv.bias"), vec![3 * d]),
            (p("attn.out.weight"), vec![d, d]),
            (p("attn.out.bias"), vec![d]),
            (p("ln2.weight"), vec![d]),
            (p("ln2.bias"), vec![d]),
            (p("mlp.fc.weight"), vec![d, ff]),
            (p("mlp.fc.bias"), vec![ff]),
            (p("mlp.proj.weight"), vec![ff, d]),
            (p("mlp.proj.bias"), vec![d]),
        ]);
    }
    out.extend([
        ("ln_f.weight".to_string(), vec![d]),
        ("ln_f.bias".to_string(), vec![d]),
        ("lm_head.weight".to_string(), vec![d, cfg.vocab_size]),
    ]);
    out
}

impl WeightBundle {
    /// All-zero weights with unit layer-norm gains.
    pub fn zeros(config: ModelConfig) -> Result<Self, LmError> {
        config.validate()?;
        let tensors = expected_shapes(&config)
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with("ln1.weight") || name.ends_with("ln2.weight") || name == "ln_f.weight" {
                    Tensor::filled(shape, 1.0)
                } else {
                    Tensor::zeros(shape)
                };
                (name, t)
            })
            .collect();
        Ok(Self { config, tensors })
    }

    /// GPT-2 style initialisation: N(0, 0.02) matrices, zero biases.
    pub fn random<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, LmError> {
        let mut bundle = Self::zeros(config)?;
        let normal = Normal::new(0.0f32, 0.02).expect("valid normal");
        for (name, t) in bundle.tensors.iter_mut() {
            if name.ends_with("weight") && !name.contains("ln") || name.ends_with("emb") {
                t.data.iter_mut().for_each(|x| *x = normal.sample(rng));
            }
        }
        Ok(bundle)
    }

    /// A model whose next-token choice depends only on the last token:
    /// after `from` it puts almost all mass on `to`, for each `(from, to)`
    /// pair. Tokens without a rule get flat logits. Blocks are zeroed, so the
    /// residual stream carries the one-hot token embedding straight to the
    /// output layer norm. Requires `d_model >= vocab_size`.
    pub fn scripted(config: ModelConfig, rules: &[(u32, u32)]) -> Result<Self, LmError> {
        if config.d_model < config.vocab_size {
            return Err(LmError::Config("scripted bundle needs d_model >= vocab_size".into()));
        }
        let (v, d) = (config.vocab_size, config.d_model);
        let mut bundle = Self::zeros(config)?;
        let emb = bundle.tensor_mut("tok_emb")?;
        for t in 0..v {
            emb.data[t * d + t] = 1.0;
        }
        let head = bundle.tensor_mut("lm_head.weight")?;
        for &(from, to) in rules {
            let (from, to) = (from as usize, to as usize);
            if from >= v || to >= v {
                return Err(LmError::TokenOutOfRange(from.max(to) as u32));
            }
            head.data[from * v + to] = 10.0;
        }
        Ok(bundle)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, LmError> {
        self.tensors.get(name).ok_or_else(|| LmError::MissingTensor(name.to_string()))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor, LmError> {
        self.tensors.get_mut(name).ok_or_else(|| LmError::MissingTensor(name.to_string()))
    }

    /// Check every expected tensor is present with the expected shape.
    pub fn validate(&self) -> Result<(), LmError> {
        self.config.validate()?;
        let expected = expected_shapes(&self.config);
        for (name, shape) in &expected {
            let t = self.tensor(name)?;
            if &t.shape != shape || t.numel() != shape.iter().product::<usize>() {
                return Err(LmError::ShapeMismatch { name: name.clone(), expected: shape.clone(), found: t.shape.clone() });
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.iter().any(|(n, _)| n == *k)) {
            return Err(LmError::Header(format!("unexpected tensor {extra}")));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LmError> {
        self.validate()?;
        let mut offset = 0u64;
        let entries: Vec<TensorEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry { name: name.clone(), shape: t.shape.clone(), offset };
                offset += 4 * t.numel() as u64;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header { config: self.config.clone(), tensors: entries })
            .map_err(|e| LmError::Header(e.to_string()))?;

        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LmError> {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(LmError::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(LmError::Checksum { stored: None, computed: crc32fast::hash(bytes) });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(LmError::Checksum { stored: Some(stored), computed });
        }
        let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(LmError::Version { found: version, supported: FORMAT_VERSION });
        }
        let header_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| LmError::Header("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&body[12..header_end]).map_err(|e| LmError::Header(e.to_string()))?;
        let payload = &body[header_end..];

        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 4 * n;
            if end > payload.len() {
                return Err(LmError::Header(format!("tensor {} extends past payload", e.name)));
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(e.name, Tensor { shape: e.shape, data });
        }
        let bundle = Self { config: header.config, tensors };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
