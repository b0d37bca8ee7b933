use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{ProteinSequence, SeqError};

/// Read multi-record, line-wrapped FASTA. The record id is the first
/// whitespace-separated word of the header. Non-canonical residue codes
/// are folded onto `X`.
pub fn read_fasta<R: BufRead>(reader: R) -> Result<Vec<ProteinSequence>, SeqError> {
    let mut records = Vec::new();
    let mut current: Option<(String, String, usize)> = None;

    let finish = |rec: Option<(String, String, usize)>, out: &mut Vec<ProteinSequence>| -> Result<(), SeqError> {
        if let Some((id, seq, line)) = rec {
            let p = ProteinSequence::from_raw(id, &seq).map_err(|e| SeqError::Fasta { line, msg: e.to_string() })?;
            out.push(p);
        }
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.trim_end();
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut records)?;
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(SeqError::Fasta { line: lineno, msg: "empty record id".into() });
            }
            current = Some((id, String::new(), lineno));
        } else if line.is_empty() || line.starts_with(';') {
            continue;
        } else {
            match current.as_mut() {
                Some((_, seq, _)) => seq.push_str(line.trim()),
                None => return Err(SeqError::Fasta { line: lineno, msg: "sequence data before first header".into() }),
            }
        }
    }
    finish(current, &mut records)?;
    Ok(records)
}

pub fn read_fasta_path(path: impl AsRef<Path>) -> Result<Vec<ProteinSequence>, SeqError> {
    read_fasta(BufReader::new(File::open(path)?))
}

/// Write records wrapped at `width` residues per line.
pub fn write_fasta<W: Write>(mut w: W, records: &[ProteinSequence], width: usize) -> std::io::Result<()> {
    for rec in records {
        writeln!(w, ">{}", rec.id)?;
        for chunk in rec.residues().as_bytes().chunks(width.max(1)) {
            w.write_all(chunk)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_record_wrapped() {
        let text = ">sp|P1|ONE first protein\nACDE\nFGHI\n\n>two\nkkbz\n";
        let recs = read_fasta(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "sp|P1|ONE");
        assert_eq!(recs[0].residues(), "ACDEFGHI");
        assert_eq!(recs[1].residues(), "KKXX");
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(read_fasta("ACDE\n".as_bytes()), Err(SeqError::Fasta { line: 1, .. })));
        assert!(matches!(read_fasta(">a\nAC*\n".as_bytes()), Err(SeqError::Fasta { line: 1, .. })));
        assert!(matches!(read_fasta(">a\n>b\nAC\n".as_bytes()), Err(SeqError::Fasta { .. })));
    }

    #[test]
    fn write_then_read() {
        let recs = vec![ProteinSequence::new("x", "ACDEFGHIKLMNPQRSTVWY").unwrap()];
        let mut buf = Vec::new();
        write_fasta(&mut buf, &recs, 7).unwrap();
        assert_eq!(read_fasta(buf.as_slice()).unwrap(), recs);
    }
}
