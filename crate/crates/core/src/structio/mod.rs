//! Structure files (mmCIF, PDB) into a chain/residue/atom model, plus
//! interaction-site extraction and corpus statistics.

mod cif;
mod pdb;
mod sites;
mod stats;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cif::{parse_mmcif, write_mmcif, CifBlock, CifLoop};
pub use pdb::{parse_pdb, write_pdb};
pub use sites::{extract_interaction_sites, extract_interaction_sites_brute, SiteId, DEFAULT_CUTOFF};
pub use stats::{relative_positions, ss_distribution, Histogram, RelativePositions, SsDistribution};

#[derive(Debug, Error)]
pub enum StructError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unrecognised structure format: {0}")]
    Format(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown secondary-structure label {0:?}")]
    Label(char),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Mmcif,
    Pdb,
}

impl Format {
    /// Guess from the file name (`.cif`, `.mmcif`, `.pdb`, `.ent`, any of
    /// them optionally followed by `.gz`).
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, StructError> {
        let name = path.as_ref().to_string_lossy().to_lowercase();
        let name = name.strip_suffix(".gz").unwrap_or(&name);
        if name.ends_with(".cif") || name.ends_with(".mmcif") {
            Ok(Format::Mmcif)
        } else if name.ends_with(".pdb") || name.ends_with(".ent") {
            Ok(Format::Pdb)
        } else {
            Err(StructError::Format(name.to_string()))
        }
    }

    /// Guess from content: mmCIF files start with a `data_` block.
    pub fn sniff(text: &str) -> Self {
        let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
        match first {
            Some(l) if l.starts_with("data_") => Format::Mmcif,
            _ => Format::Pdb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub name: String,
    pub element: String,
    pub coords: [f64; 3],
    /// Per-residue confidence (pLDDT) in predicted models.
    pub b_factor: f64,
    pub occupancy: f64,
    pub alt_loc: Option<char>,
}

impl AtomRecord {
    pub fn is_hydrogen(&self) -> bool {
        self.element.eq_ignore_ascii_case("H") || self.element.eq_ignore_ascii_case("D")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueRecord {
    pub name3: String,
    pub chain_id: String,
    pub seq_num: i32,
    pub insertion_code: Option<char>,
    /// From HETATM records (ligands, waters, modified residues).
    pub hetero: bool,
    pub atoms: Vec<AtomRecord>,
}

impl ResidueRecord {
    pub fn atom(&self, name: &str) -> Option<&AtomRecord> {
        self.atoms.iter().find(|a| a.name == name)
    }

    /// Mean B-factor over the residue's atoms.
    pub fn plddt(&self) -> Option<f64> {
        if self.atoms.is_empty() {
            return None;
        }
        Some(self.atoms.iter().map(|a| a.b_factor).sum::<f64>() / self.atoms.len() as f64)
    }

    pub fn one_letter(&self) -> char {
        three_to_one(&self.name3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub id: String,
    pub residues: Vec<ResidueRecord>,
}

impl Chain {
    /// One-letter sequence of the non-hetero residues.
    pub fn sequence(&self) -> String {
        self.residues.iter().filter(|r| !r.hetero).map(ResidueRecord::one_letter).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub uniprot_id: Option<String>,
    /// Length of the full deposited sequence, when the file records it.
    pub sequence_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureModel {
    pub entry_id: String,
    /// In order of first appearance.
    pub chains: Vec<Chain>,
    pub metadata: Metadata,
}

impl StructureModel {
    pub fn chain(&self, id: &str) -> Option<&Chain> {
        self.chains.iter().find(|c| c.id == id)
    }

    pub fn residue_count(&self) -> usize {
        self.chains.iter().map(|c| c.residues.len()).sum()
    }

    pub fn atom_count(&self) -> usize {
        self.chains.iter().flat_map(|c| &c.residues).map(|r| r.atoms.len()).sum()
    }

    /// Mean B-factor over all atoms.
    pub fn mean_b_factor(&self) -> Option<f64> {
        let (sum, n) = self
            .chains
            .iter()
            .flat_map(|c| &c.residues)
            .flat_map(|r| &r.atoms)
            .fold((0.0, 0usize), |(s, n), a| (s + a.b_factor, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn to_json(&self) -> Result<String, StructError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, StructError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Parse either format from raw bytes (invalid UTF-8 is replaced).
pub fn parse_structure(bytes: &[u8], format: Format) -> Result<StructureModel, StructError> {
    let text = String::from_utf8_lossy(bytes);
    match format {
        Format::Mmcif => parse_mmcif(&text),
        Format::Pdb => parse_pdb(&text),
    }
}

/// Read a structure file, choosing the format by extension (falling back
/// to content). Entry ids missing from the file default to the file stem.
pub fn read_structure(path: impl AsRef<Path>) -> Result<StructureModel, StructError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let format = Format::from_path(path).unwrap_or_else(|_| Format::sniff(&String::from_utf8_lossy(&bytes)));
    let mut model = parse_structure(&bytes, format)?;
    if model.entry_id.is_empty() {
        let stem = path.file_name().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
        model.entry_id = stem.split('.').next().unwrap_or("").to_string();
    }
    Ok(model)
}

const THREE_LETTER: [(&str, char); 25] = [
    ("ALA", 'A'),
    ("ARG", 'R'),
    ("ASN", 'N'),
    ("ASP", 'D'),
    ("CYS", 'C'),
    ("GLN", 'Q'),
    ("GLU", 'E'),
    ("GLY", 'G'),
    ("HIS", 'H'),
    ("ILE", 'I'),
    ("LEU", 'L'),
    ("LYS", 'K'),
    ("MET", 'M'),
    ("PHE", 'F'),
    ("PRO", 'P'),
    ("SER", 'S'),
    ("THR", 'T'),
    ("TRP", 'W'),
    ("TYR", 'Y'),
    ("VAL", 'V'),
    ("MSE", 'M'),
    ("HSD", 'H'),
    ("HSE", 'H'),
    ("HIE", 'H'),
    ("CYX", 'C'),
];

/// One-letter code, `X` for anything unrecognised.
pub fn three_to_one(name3: &str) -> char {
    THREE_LETTER.iter().find(|(n, _)| n.eq_ignore_ascii_case(name3)).map_or('X', |&(_, c)| c)
}

pub fn one_to_three(c: char) -> &'static str {
    THREE_LETTER[..20].iter().find(|&&(_, o)| o == c).map_or("UNK", |&(n, _)| n)
}

/// Element guess for files without an element column. `field` is the raw
/// four-character PDB atom-name field (or a bare atom name).
pub(crate) fn infer_element(field: &str, residue: &str) -> String {
    let padded = format!("{field:<4}");
    let chars: Vec<char> = padded.chars().collect();
    let letters: String = padded.chars().filter(|c| c.is_ascii_alphabetic()).collect();
    if letters.is_empty() {
        return "X".into();
    }
    // Standard residues only contain one-letter elements; that also covers
    // hydrogens aligned to column 13 (HG12, HD21, ...).
    let standard = three_to_one(residue) != 'X';
    if chars[0] == ' ' || chars[0].is_ascii_digit() || standard {
        return letters[..1].to_string();
    }
    let two = &letters[..letters.len().min(2)];
    if matches!(two.to_ascii_uppercase().as_str(), "FE" | "ZN" | "MG" | "CA" | "CL" | "NA" | "MN" | "CU" | "CO" | "NI" | "BR" | "SE" | "CD" | "HG" | "K") {
        two.to_ascii_uppercase()
    } else {
        letters[..1].to_string()
    }
}

/// Group atom rows into residues and chains, applying the first-model and
/// alt-loc policies. Rows must already belong to one model.
pub(crate) struct ModelBuilder {
    chains: Vec<Chain>,
}

pub(crate) struct AtomRow {
    pub chain_id: String,
    pub seq_num: i32,
    pub insertion_code: Option<char>,
    pub name3: String,
    pub hetero: bool,
    pub atom: AtomRecord,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self { chains: Vec::new() }
    }

    pub fn push(&mut self, row: AtomRow) {
        let chain = match self.chains.iter().position(|c| c.id == row.chain_id) {
            Some(i) => &mut self.chains[i],
            None => {
                self.chains.push(Chain { id: row.chain_id.clone(), residues: Vec::new() });
                self.chains.last_mut().expect("just pushed")
            }
        };
        let key = (row.seq_num, row.insertion_code);
        let found = chain.residues.iter().rposition(|r| (r.seq_num, r.insertion_code) == key);
        let residue = match found {
            Some(i) => &mut chain.residues[i],
            None => {
                chain.residues.push(ResidueRecord {
                    name3: row.name3.clone(),
                    chain_id: row.chain_id.clone(),
                    seq_num: row.seq_num,
                    insertion_code: row.insertion_code,
                    hetero: row.hetero,
                    atoms: Vec::new(),
                });
                chain.residues.last_mut().expect("just pushed")
            }
        };
        if residue.name3 != row.name3 {
            // A point mutation modelled as alternate residues: keep the first.
            return;
        }
        let alternate = |a: &AtomRecord| a.name == row.atom.name && (a.alt_loc.is_some() || row.atom.alt_loc.is_some());
        match residue.atoms.iter().position(alternate) {
            // Alternate locations: keep the highest occupancy, first on ties.
            // Repeated records without an alt-loc id are kept as written.
            Some(i) => {
                if row.atom.occupancy > residue.atoms[i].occupancy {
                    residue.atoms[i] = row.atom;
                }
            }
            None => residue.atoms.push(row.atom),
        }
    }

    pub fn finish(mut self, entry_id: String, metadata: Metadata) -> StructureModel {
        for c in &mut self.chains {
            c.residues.sort_by_key(|r| (r.seq_num, r.insertion_code.unwrap_or(' ')));
        }
        StructureModel { entry_id, chains: self.chains, metadata }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_detection() {
        assert_eq!(Format::from_path("a/1abc.cif.gz").unwrap(), Format::Mmcif);
        assert_eq!(Format::from_path("1ABC.PDB").unwrap(), Format::Pdb);
        assert!(Format::from_path("x.txt").is_err());
        assert_eq!(Format::sniff("# c\ndata_X\n"), Format::Mmcif);
        assert_eq!(Format::sniff("ATOM ..."), Format::Pdb);
    }

    #[test]
    fn element_inference() {
        assert_eq!(infer_element(" CA ", "ALA"), "C");
        assert_eq!(infer_element("HG12", "VAL"), "H");
        assert_eq!(infer_element("1HB ", "ALA"), "H");
        assert_eq!(infer_element(" OG1", "THR"), "O");
        assert_eq!(infer_element("FE  ", "HEM"), "FE");
        assert_eq!(infer_element("CA  ", "CA"), "CA");
        assert_eq!(infer_element("CA", "ALA"), "C");
    }

    #[test]
    fn three_letter_codes() {
        assert_eq!(three_to_one("ALA"), 'A');
        assert_eq!(three_to_one("mse"), 'M');
        assert_eq!(three_to_one("HOH"), 'X');
        assert_eq!(one_to_three('W'), "TRP");
        assert_eq!(one_to_three('X'), "UNK");
    }
}
