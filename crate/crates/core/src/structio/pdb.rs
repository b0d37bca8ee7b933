use std::fmt::Write as _;

use super::{infer_element, AtomRecord, AtomRow, Metadata, ModelBuilder, StructError, StructureModel};

fn field(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        return "";
    }
    line.get(start..end).unwrap_or("")
}

fn number<T: std::str::FromStr>(line: &str, start: usize, end: usize, what: &str, lineno: usize) -> Result<T, StructError> {
    let s = field(line, start, end).trim();
    s.parse().map_err(|_| StructError::Parse { line: lineno, msg: format!("bad {what} {s:?}") })
}

/// Fixed-column PDB: ATOM/HETATM records of the first model. Entry id comes
/// from the HEADER id code; UniProt accessions from DBREF records.
pub fn parse_pdb(text: &str) -> Result<StructureModel, StructError> {
    let mut builder = ModelBuilder::new();
    let mut entry = String::new();
    let mut meta = Metadata::default();
    let mut models_seen = 0;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let record = field(line, 0, 6);
        match record.trim_end() {
            "HEADER" => entry = field(line, 62, 66).trim().to_string(),
            "DBREF" if field(line, 26, 32).trim() == "UNP" && meta.uniprot_id.is_none() => {
                meta.uniprot_id = Some(field(line, 33, 41).trim().to_string()).filter(|s| !s.is_empty());
            }
            "MODEL" => {
                models_seen += 1;
                if models_seen > 1 {
                    break;
                }
            }
            "ENDMDL" => break,
            "ATOM" | "HETATM" => {
                if line.len() < 54 {
                    return Err(StructError::Parse { line: lineno, msg: "coordinate record shorter than 54 columns".into() });
                }
                let name_field = field(line, 12, 16);
                let name3 = field(line, 17, 20).trim().to_string();
                let coords = [
                    number::<f64>(line, 30, 38, "x coordinate", lineno)?,
                    number::<f64>(line, 38, 46, "y coordinate", lineno)?,
                    number::<f64>(line, 46, 54, "z coordinate", lineno)?,
                ];
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(StructError::Parse { line: lineno, msg: "non-finite coordinate".into() });
                }
                let occupancy = if field(line, 54, 60).trim().is_empty() { 1.0 } else { number(line, 54, 60, "occupancy", lineno)? };
                let b_factor = if field(line, 60, 66).trim().is_empty() { 0.0 } else { number(line, 60, 66, "B-factor", lineno)? };
                let element = match field(line, 76, 78).trim() {
                    "" => infer_element(name_field, &name3),
                    e => e.to_string(),
                };
                let seq_num = number::<i32>(line, 22, 26, "residue number", lineno)?;
                let nonblank = |c: char| (c != ' ').then_some(c);
                builder.push(AtomRow {
                    chain_id: field(line, 21, 22).trim().to_string(),
                    seq_num,
                    insertion_code: field(line, 26, 27).chars().next().and_then(nonblank),
                    name3,
                    hetero: record == "HETATM",
                    atom: AtomRecord {
                        name: name_field.trim().to_string(),
                        element,
                        coords,
                        b_factor,
                        occupancy,
                        alt_loc: field(line, 16, 17).chars().next().and_then(nonblank),
                    },
                });
            }
            _ => {}
        }
    }
    Ok(builder.finish(entry, meta))
}

/// Atom names shorter than four characters start in column 14 unless the
/// element has two letters.
fn name_field(name: &str, element: &str) -> String {
    if name.len() >= 4 || element.len() == 2 {
        format!("{name:<4}")
    } else {
        format!(" {name:<3}")
    }
}

/// Fixed-column PDB output with TER after each chain. Chain ids must be a
/// single character.
pub fn write_pdb(model: &StructureModel) -> Result<String, StructError> {
    let mut out = String::new();
    if !model.entry_id.is_empty() {
        let _ = writeln!(out, "HEADER    {:<40}{:>12}{:>4}", "", "", &model.entry_id[..model.entry_id.len().min(4)]);
    }
    let mut serial = 1;
    for chain in &model.chains {
        if chain.id.chars().count() > 1 {
            return Err(StructError::Invalid(format!("chain id {:?} does not fit the PDB format", chain.id)));
        }
        let cid = chain.id.chars().next().unwrap_or(' ');
        for r in &chain.residues {
            for a in &r.atoms {
                let _ = writeln!(
                    out,
                    "{:<6}{:>5} {}{}{:>3} {}{:>4}{}   {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {:>2}",
                    if r.hetero { "HETATM" } else { "ATOM" },
                    serial % 100_000,
                    name_field(&a.name, &a.element),
                    a.alt_loc.unwrap_or(' '),
                    r.name3,
                    cid,
                    r.seq_num,
                    r.insertion_code.unwrap_or(' '),
                    a.coords[0],
                    a.coords[1],
                    a.coords[2],
                    a.occupancy,
                    a.b_factor,
                    a.element,
                );
                serial += 1;
            }
        }
        let _ = writeln!(out, "TER");
    }
    out.push_str("END\n");
    Ok(out)
}
