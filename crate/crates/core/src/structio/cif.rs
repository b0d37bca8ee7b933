use std::collections::HashMap;
use std::fmt::Write as _;

use super::{infer_element, AtomRecord, AtomRow, Metadata, ModelBuilder, StructError, StructureModel};

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    /// Quoted and text-field values are never `.`/`?` placeholders.
    quoted: bool,
    line: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, StructError> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let lineno = idx + 1;
        if let Some(first) = line.strip_prefix(';') {
            let mut value = first.to_string();
            let mut closed = false;
            for (_, l) in lines.by_ref() {
                if l.starts_with(';') {
                    closed = true;
                    break;
                }
                value.push('\n');
                value.push_str(l);
            }
            if !closed {
                return Err(StructError::Parse { line: lineno, msg: "unterminated text field".into() });
            }
            out.push(Token { text: value, quoted: true, line: lineno });
            continue;
        }
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c == b'#' {
                break;
            } else if c == b'\'' || c == b'"' {
                // A quote closes only when followed by whitespace or end of line.
                let mut j = i + 1;
                loop {
                    if j >= bytes.len() {
                        return Err(StructError::Parse { line: lineno, msg: "unterminated quoted string".into() });
                    }
                    if bytes[j] == c && (j + 1 == bytes.len() || bytes[j + 1].is_ascii_whitespace()) {
                        break;
                    }
                    j += 1;
                }
                out.push(Token { text: line[i + 1..j].to_string(), quoted: true, line: lineno });
                i = j + 1;
            } else {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push(Token { text: line[start..i].to_string(), quoted: false, line: lineno });
            }
        }
    }
    Ok(out)
}

/// A `loop_` table: tags plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct CifLoop {
    pub tags: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
    /// Source line of each row, for error messages.
    pub lines: Vec<usize>,
}

impl CifLoop {
    pub fn column(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t.eq_ignore_ascii_case(tag))
    }
}

/// One `data_` block. Single-valued items are stored as one-row loops so
/// categories can be read uniformly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CifBlock {
    pub name: String,
    pub loops: Vec<CifLoop>,
    items: HashMap<String, Option<String>>,
}

impl CifBlock {
    pub fn parse_first(text: &str) -> Result<Self, StructError> {
        let tokens = tokenize(text)?;
        let mut block = CifBlock::default();
        let mut seen_block = false;
        let mut i = 0;
        let value = |t: &Token| if !t.quoted && (t.text == "." || t.text == "?") { None } else { Some(t.text.clone()) };
        let is_reserved = |t: &Token| {
            !t.quoted && (t.text.starts_with('_') || t.text.eq_ignore_ascii_case("loop_") || t.text.starts_with("data_"))
        };
        while i < tokens.len() {
            let t = &tokens[i];
            if !t.quoted && t.text.starts_with("data_") {
                if seen_block {
                    break;
                }
                seen_block = true;
                block.name = t.text[5..].to_string();
                i += 1;
            } else if !t.quoted && t.text.eq_ignore_ascii_case("loop_") {
                i += 1;
                let mut tags = Vec::new();
                while i < tokens.len() && !tokens[i].quoted && tokens[i].text.starts_with('_') {
                    tags.push(tokens[i].text.to_ascii_lowercase());
                    i += 1;
                }
                if tags.is_empty() {
                    return Err(StructError::Parse { line: t.line, msg: "loop_ without tags".into() });
                }
                let mut rows = Vec::new();
                let mut lines = Vec::new();
                let mut row = Vec::with_capacity(tags.len());
                while i < tokens.len() && !is_reserved(&tokens[i]) {
                    if row.is_empty() {
                        lines.push(tokens[i].line);
                    }
                    row.push(value(&tokens[i]));
                    if row.len() == tags.len() {
                        rows.push(std::mem::replace(&mut row, Vec::with_capacity(tags.len())));
                    }
                    i += 1;
                }
                if !row.is_empty() {
                    let line = tokens[i - 1].line;
                    return Err(StructError::Parse {
                        line,
                        msg: format!("loop over {} has {} trailing values (expected multiples of {})", tags[0], row.len(), tags.len()),
                    });
                }
                block.loops.push(CifLoop { tags, rows, lines });
            } else if !t.quoted && t.text.starts_with('_') {
                let v = tokens
                    .get(i + 1)
                    .filter(|v| !is_reserved(v))
                    .ok_or_else(|| StructError::Parse { line: t.line, msg: format!("item {} has no value", t.text) })?;
                block.items.insert(t.text.to_ascii_lowercase(), value(v));
                i += 2;
            } else {
                return Err(StructError::Parse { line: t.line, msg: format!("unexpected value {:?} outside a loop", t.text) });
            }
        }
        if !seen_block {
            return Err(StructError::Parse { line: 1, msg: "no data_ block".into() });
        }
        Ok(block)
    }

    pub fn item(&self, tag: &str) -> Option<&str> {
        self.items.get(&tag.to_ascii_lowercase()).and_then(|v| v.as_deref())
    }

    /// All rows of `category` as loops (either a real loop or the block's
    /// single-valued items gathered into one row).
    pub fn category(&self, category: &str) -> Option<CifLoop> {
        let prefix = format!("{}.", category.to_ascii_lowercase());
        if let Some(l) = self.loops.iter().find(|l| l.tags[0].starts_with(&prefix)) {
            return Some(l.clone());
        }
        let mut tags: Vec<&String> = self.items.keys().filter(|k| k.starts_with(&prefix)).collect();
        if tags.is_empty() {
            return None;
        }
        tags.sort();
        Some(CifLoop {
            rows: vec![tags.iter().map(|t| self.items[*t].clone()).collect()],
            tags: tags.into_iter().cloned().collect(),
            lines: vec![0],
        })
    }
}

fn pick<'a>(row: &'a [Option<String>], cols: &[Option<usize>]) -> Option<&'a str> {
    cols.iter().flatten().find_map(|&c| row[c].as_deref())
}

fn metadata(block: &CifBlock) -> Metadata {
    let mut meta = Metadata::default();
    if let Some(l) = block.category("_struct_ref") {
        let (db, acc) = (l.column("_struct_ref.db_name"), l.column("_struct_ref.pdbx_db_accession"));
        if let (Some(db), Some(acc)) = (db, acc) {
            meta.uniprot_id = l
                .rows
                .iter()
                .find(|r| r[db].as_deref().is_some_and(|d| d.eq_ignore_ascii_case("UNP")))
                .and_then(|r| r[acc].clone());
        }
    }
    if let Some(l) = block.category("_entity_poly") {
        let can = l.column("_entity_poly.pdbx_seq_one_letter_code_can");
        let raw = l.column("_entity_poly.pdbx_seq_one_letter_code");
        meta.sequence_length = l.rows.iter().find_map(|r| {
            if let Some(s) = can.and_then(|c| r[c].as_deref()) {
                return Some(s.chars().filter(|c| !c.is_whitespace()).count());
            }
            // Non-canonical form writes modified residues as "(MSE)".
            let s = raw.and_then(|c| r[c].as_deref())?;
            let mut n = 0;
            let mut in_paren = false;
            for c in s.chars().filter(|c| !c.is_whitespace()) {
                match c {
                    '(' => in_paren = true,
                    ')' => {
                        in_paren = false;
                        n += 1;
                    }
                    _ if !in_paren => n += 1,
                    _ => {}
                }
            }
            Some(n)
        });
    }
    meta
}

fn parse_f64(s: Option<&str>, what: &str, line: usize) -> Result<f64, StructError> {
    let s = s.ok_or_else(|| StructError::Parse { line, msg: format!("missing {what}") })?;
    let v: f64 = s.parse().map_err(|_| StructError::Parse { line, msg: format!("bad {what} {s:?}") })?;
    if !v.is_finite() {
        return Err(StructError::Parse { line, msg: format!("non-finite {what}") });
    }
    Ok(v)
}

/// Parse the first data block's `_atom_site` loop (first model only) and the
/// UniProt / sequence-length metadata.
pub fn parse_mmcif(text: &str) -> Result<StructureModel, StructError> {
    let block = CifBlock::parse_first(text)?;
    let sites = block.category("_atom_site").ok_or_else(|| StructError::Parse { line: 1, msg: "no _atom_site category".into() })?;
    let col = |name: &str| sites.column(&format!("_atom_site.{name}"));
    let group = col("group_pdb");
    let element = col("type_symbol");
    let atom_name = [col("auth_atom_id"), col("label_atom_id")];
    let alt = col("label_alt_id");
    let comp = [col("auth_comp_id"), col("label_comp_id")];
    let chain = [col("auth_asym_id"), col("label_asym_id")];
    let seq = [col("auth_seq_id"), col("label_seq_id")];
    let ins = col("pdbx_pdb_ins_code");
    let (x, y, z) = (col("cartn_x"), col("cartn_y"), col("cartn_z"));
    let occ = col("occupancy");
    let b = col("b_iso_or_equiv");
    let model_col = col("pdbx_pdb_model_num");
    for (what, c) in [("Cartn_x", x), ("Cartn_y", y), ("Cartn_z", z)] {
        if c.is_none() {
            return Err(StructError::Parse { line: 1, msg: format!("_atom_site has no {what} column") });
        }
    }

    let mut builder = ModelBuilder::new();
    let mut first_model: Option<String> = None;
    for (row, &line) in sites.rows.iter().zip(&sites.lines) {
        if let Some(m) = model_col.and_then(|c| row[c].as_deref()) {
            match &first_model {
                None => first_model = Some(m.to_string()),
                Some(f) if f != m => continue,
                _ => {}
            }
        }
        let name = pick(row, &atom_name).ok_or_else(|| StructError::Parse { line, msg: "missing atom name".into() })?.to_string();
        let name3 = pick(row, &comp).unwrap_or("UNK").to_string();
        let seq_text = pick(row, &seq).ok_or_else(|| StructError::Parse { line, msg: "missing residue number".into() })?;
        let seq_num: i32 = seq_text.parse().map_err(|_| StructError::Parse { line, msg: format!("bad residue number {seq_text:?}") })?;
        let element = match element.and_then(|c| row[c].as_deref()) {
            Some(e) => e.to_string(),
            None => infer_element(&name, &name3),
        };
        let coords = [
            parse_f64(x.and_then(|c| row[c].as_deref()), "Cartn_x", line)?,
            parse_f64(y.and_then(|c| row[c].as_deref()), "Cartn_y", line)?,
            parse_f64(z.and_then(|c| row[c].as_deref()), "Cartn_z", line)?,
        ];
        let occupancy = match occ.and_then(|c| row[c].as_deref()) {
            Some(s) => parse_f64(Some(s), "occupancy", line)?,
            None => 1.0,
        };
        let b_factor = match b.and_then(|c| row[c].as_deref()) {
            Some(s) => parse_f64(Some(s), "B_iso_or_equiv", line)?,
            None => 0.0,
        };
        builder.push(AtomRow {
            chain_id: pick(row, &chain).unwrap_or("").to_string(),
            seq_num,
            insertion_code: ins.and_then(|c| row[c].as_deref()).and_then(|s| s.chars().next()),
            name3,
            hetero: group.and_then(|c| row[c].as_deref()).is_some_and(|g| g.eq_ignore_ascii_case("HETATM")),
            atom: AtomRecord {
                name,
                element,
                coords,
                b_factor,
                occupancy,
                alt_loc: alt.and_then(|c| row[c].as_deref()).and_then(|s| s.chars().next()),
            },
        });
    }
    let entry = block.item("_entry.id").map(str::to_string).unwrap_or_else(|| block.name.clone());
    Ok(builder.finish(entry, metadata(&block)))
}

fn cif_value(s: &str) -> String {
    if s.is_empty() {
        "?".into()
    } else if s.chars().any(char::is_whitespace) || s.starts_with(['_', '#', '$', '\'', '"', ';', '[', ']']) || s == "." || s == "?" {
        format!("'{s}'")
    } else {
        s.to_string()
    }
}

/// Minimal mmCIF: entry id, metadata items and the `_atom_site` loop.
pub fn write_mmcif(model: &StructureModel) -> String {
    let id = if model.entry_id.is_empty() { "model" } else { &model.entry_id };
    let mut out = String::new();
    let _ = writeln!(out, "data_{}", id.replace(char::is_whitespace, "_"));
    let _ = writeln!(out, "_entry.id {}", cif_value(id));
    if let Some(u) = &model.metadata.uniprot_id {
        let _ = writeln!(out, "#\n_struct_ref.id 1\n_struct_ref.db_name UNP\n_struct_ref.pdbx_db_accession {}", cif_value(u));
    }
    if let Some(n) = model.metadata.sequence_length {
        // Only the length is retained, so the sequence is written as unknowns.
        let _ = writeln!(out, "#\n_entity_poly.entity_id 1\n_entity_poly.pdbx_seq_one_letter_code_can\n;{}\n;", "X".repeat(n));
    }
    out.push_str("#\nloop_\n");
    for tag in [
        "group_PDB", "id", "type_symbol", "label_atom_id", "label_alt_id", "label_comp_id", "auth_asym_id", "auth_seq_id",
        "pdbx_PDB_ins_code", "Cartn_x", "Cartn_y", "Cartn_z", "occupancy", "B_iso_or_equiv", "pdbx_PDB_model_num",
    ] {
        let _ = writeln!(out, "_atom_site.{tag}");
    }
    let mut serial = 1;
    for chain in &model.chains {
        for r in &chain.residues {
            for a in &r.atoms {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {} {} {} {} {:.3} {:.3} {:.3} {:.2} {:.2} 1",
                    if r.hetero { "HETATM" } else { "ATOM" },
                    serial,
                    cif_value(&a.element),
                    cif_value(&a.name),
                    a.alt_loc.map_or(".".to_string(), |c| c.to_string()),
                    cif_value(&r.name3),
                    cif_value(&chain.id),
                    r.seq_num,
                    r.insertion_code.map_or("?".to_string(), |c| c.to_string()),
                    a.coords[0],
                    a.coords[1],
                    a.coords[2],
                    a.occupancy,
                    a.b_factor,
                );
                serial += 1;
            }
        }
    }
    out.push_str("#\n");
    out
}
