use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{SeqError, TokenId, TokenSequence};

/// The twenty canonical amino acids in one-letter code.
pub const CANONICAL_RESIDUES: &str = "ACDEFGHIKLMNPQRSTVWY";
pub const UNKNOWN_RESIDUE: char = 'X';

/// Non-canonical codes that are folded onto `X` on ingestion.
const FOLDED_TO_UNKNOWN: &str = "BZUOJ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Special {
    Pre,
    Suf,
    Mid,
    Eos,
    Pad,
}

impl Special {
    pub const ALL: [Special; 5] = [Special::Pre, Special::Suf, Special::Mid, Special::Eos, Special::Pad];

    pub fn symbol(self) -> &'static str {
        match self {
            Special::Pre => "[PRE]",
            Special::Suf => "[SUF]",
            Special::Mid => "[MID]",
            Special::Eos => "[EOS]",
            Special::Pad => "[PAD]",
        }
    }

    fn from_symbol(s: &str) -> Option<Special> {
        Special::ALL.into_iter().find(|sp| sp.symbol() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TokenEntry {
    symbol: String,
    id: TokenId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AlphabetFile {
    tokens: Vec<TokenEntry>,
}

/// Character-level vocabulary: 20 canonical residues, `X`, and five special
/// tokens, each with a dense unique id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueAlphabet {
    by_char: [Option<TokenId>; 128],
    symbols: Vec<String>,
    specials: [TokenId; 5],
}

impl Default for ResidueAlphabet {
    fn default() -> Self {
        let mut entries: Vec<TokenEntry> = CANONICAL_RESIDUES
            .chars()
            .chain(std::iter::once(UNKNOWN_RESIDUE))
            .map(|c| c.to_string())
            .chain(Special::ALL.iter().map(|s| s.symbol().to_string()))
            .enumerate()
            .map(|(id, symbol)| TokenEntry { symbol, id: id as TokenId })
            .collect();
        entries.sort_by_key(|e| e.id);
        Self::from_entries(entries).expect("built-in alphabet is valid")
    }
}

impl ResidueAlphabet {
    fn from_entries(entries: Vec<TokenEntry>) -> Result<Self, SeqError> {
        let n = entries.len();
        let mut symbols = vec![String::new(); n];
        let mut seen = vec![false; n];
        let mut by_char = [None; 128];
        let mut specials: [Option<TokenId>; 5] = [None; 5];
        for e in entries {
            let idx = e.id as usize;
            if idx >= n || seen[idx] {
                return Err(SeqError::Alphabet(format!("token ids must be dense and unique (id {})", e.id)));
            }
            seen[idx] = true;
            if let Some(sp) = Special::from_symbol(&e.symbol) {
                specials[sp as usize] = Some(e.id);
            } else {
                let mut chars = e.symbol.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii_uppercase() => {
                        if by_char[c as usize].is_some() {
                            return Err(SeqError::Alphabet(format!("duplicate symbol {c}")));
                        }
                        by_char[c as usize] = Some(e.id);
                    }
                    _ => return Err(SeqError::Alphabet(format!("bad symbol {:?}", e.symbol))),
                }
            }
            symbols[idx] = e.symbol;
        }
        for c in CANONICAL_RESIDUES.chars().chain(std::iter::once(UNKNOWN_RESIDUE)) {
            if by_char[c as usize].is_none() {
                return Err(SeqError::Alphabet(format!("missing residue {c}")));
            }
        }
        let mut out = [0; 5];
        for (slot, sp) in out.iter_mut().zip(Special::ALL) {
            *slot = specials[sp as usize]
                .ok_or_else(|| SeqError::Alphabet(format!("missing special token {}", sp.symbol())))?;
        }
        Ok(Self { by_char, symbols, specials: out })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn special(&self, sp: Special) -> TokenId {
        self.specials[sp as usize]
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.specials.contains(&id)
    }

    pub fn residue_id(&self, c: char) -> Option<TokenId> {
        if c.is_ascii() {
            self.by_char[c as usize]
        } else {
            None
        }
    }

    /// Residue character for `id`, or `None` for special or unknown ids.
    pub fn residue_char(&self, id: TokenId) -> Option<char> {
        if self.is_special(id) {
            return None;
        }
        self.symbols.get(id as usize).and_then(|s| s.chars().next())
    }

    pub fn is_canonical(&self, id: TokenId) -> bool {
        self.residue_char(id).is_some_and(|c| CANONICAL_RESIDUES.contains(c))
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, residues: &str) -> Result<TokenSequence, SeqError> {
        if residues.is_empty() {
            return Err(SeqError::Empty);
        }
        residues
            .chars()
            .enumerate()
            .map(|(pos, c)| self.residue_id(c).ok_or(SeqError::InvalidResidue { residue: c, pos }))
            .collect::<Result<Vec<_>, _>>()
            .map(TokenSequence)
    }

    /// Tokenize a possibly empty residue string (flanks of prompts).
    pub fn tokenize_lenient(&self, residues: &str) -> Result<TokenSequence, SeqError> {
        if residues.is_empty() {
            return Ok(TokenSequence::default());
        }
        self.tokenize(residues)
    }

    /// Residue string for a token stream that contains no special tokens.
    pub fn detokenize(&self, tokens: &[TokenId]) -> Result<String, SeqError> {
        tokens
            .iter()
            .enumerate()
            .map(|(pos, &id)| self.residue_char(id).ok_or(SeqError::UnexpectedToken { id, pos }))
            .collect()
    }

    /// Human-readable rendering including special tokens, e.g. `[PRE]AAAA[SUF]`.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&id| self.symbol(id).unwrap_or("?"))
            .collect()
    }

    /// Parse a rendering produced by [`render`](Self::render).
    pub fn parse_rendered(&self, text: &str) -> Result<TokenSequence, SeqError> {
        let mut out = Vec::new();
        let mut rest = text;
        while let Some(c) = rest.chars().next() {
            if c == '[' {
                let end = rest.find(']').ok_or_else(|| SeqError::Structure(format!("unterminated special token in {text:?}")))?;
                let sp = Special::from_symbol(&rest[..=end])
                    .ok_or_else(|| SeqError::Structure(format!("unknown special token {}", &rest[..=end])))?;
                out.push(self.special(sp));
                rest = &rest[end + 1..];
            } else {
                let pos = text.len() - rest.len();
                out.push(self.residue_id(c).ok_or(SeqError::InvalidResidue { residue: c, pos })?);
                rest = &rest[c.len_utf8()..];
            }
        }
        Ok(TokenSequence(out))
    }

    pub fn to_json(&self) -> String {
        let file = AlphabetFile {
            tokens: self
                .symbols
                .iter()
                .enumerate()
                .map(|(id, s)| TokenEntry { symbol: s.clone(), id: id as TokenId })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("alphabet serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SeqError> {
        let file: AlphabetFile = serde_json::from_str(text).map_err(|e| SeqError::Alphabet(e.to_string()))?;
        Self::from_entries(file.tokens)
    }

    /// Maps the residue-id table to a lookup of `char -> id` for callers
    /// that need to enumerate the vocabulary.
    pub fn residue_table(&self) -> HashMap<char, TokenId> {
        (0u8..128)
            .filter_map(|b| self.by_char[b as usize].map(|id| (b as char, id)))
            .collect()
    }
}

/// Normalise raw residue text: uppercase, fold B/Z/U/O/J onto `X`, drop
/// whitespace. Returns the cleaned string and how many residues were folded.
pub fn normalize_residues(raw: &str) -> Result<(String, usize), SeqError> {
    let mut folded = 0;
    let mut out = String::with_capacity(raw.len());
    for (pos, c) in raw.chars().filter(|c| !c.is_whitespace()).enumerate() {
        let up = c.to_ascii_uppercase();
        if CANONICAL_RESIDUES.contains(up) || up == UNKNOWN_RESIDUE {
            out.push(up);
        } else if FOLDED_TO_UNKNOWN.contains(up) {
            folded += 1;
            out.push(UNKNOWN_RESIDUE);
        } else {
            return Err(SeqError::InvalidResidue { residue: c, pos });
        }
    }
    Ok((out, folded))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ids_are_dense() {
        let a = ResidueAlphabet::default();
        assert_eq!(a.len(), 26);
        let mut ids: Vec<_> = a.residue_table().into_values().collect();
        ids.extend(Special::ALL.iter().map(|&s| a.special(s)));
        ids.sort();
        assert_eq!(ids, (0..26).collect::<Vec<_>>());
    }

    #[test]
    fn tokenize_direct_lookup() {
        let a = ResidueAlphabet::default();
        let t = a.tokenize("ACD").unwrap();
        assert_eq!(t.0, vec![a.residue_id('A').unwrap(), a.residue_id('C').unwrap(), a.residue_id('D').unwrap()]);
        assert_eq!(a.detokenize(&t).unwrap(), "ACD");
    }

    #[test]
    fn empty_and_invalid_inputs() {
        let a = ResidueAlphabet::default();
        assert!(matches!(a.tokenize(""), Err(SeqError::Empty)));
        assert!(matches!(a.tokenize("AC1"), Err(SeqError::InvalidResidue { residue: '1', pos: 2 })));
        assert!(matches!(a.tokenize("ACB"), Err(SeqError::InvalidResidue { residue: 'B', .. })));
    }

    #[test]
    fn json_round_trip_keeps_ids() {
        let a = ResidueAlphabet::default();
        let b = ResidueAlphabet::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_rejects_gaps_and_duplicates() {
        let bad = r#"{"tokens":[{"symbol":"A","id":0},{"symbol":"C","id":2}]}"#;
        assert!(ResidueAlphabet::from_json(bad).is_err());
        let a = ResidueAlphabet::default();
        let mut file: AlphabetFile = serde_json::from_str(&a.to_json()).unwrap();
        file.tokens[1].id = 0;
        assert!(ResidueAlphabet::from_json(&serde_json::to_string(&file).unwrap()).is_err());
    }

    #[test]
    fn folding_non_canonical() {
        let (s, n) = normalize_residues("mkbz u\nJO").unwrap();
        assert_eq!(s, "MKXXXXX");
        assert_eq!(n, 5);
        assert!(normalize_residues("AC*").is_err());
    }

    #[test]
    fn render_and_parse() {
        let a = ResidueAlphabet::default();
        let t = a.parse_rendered("[PRE]AAAA[SUF]CC[MID]").unwrap();
        assert_eq!(t.len(), 9);
        assert_eq!(a.render(&t), "[PRE]AAAA[SUF]CC[MID]");
    }
}
