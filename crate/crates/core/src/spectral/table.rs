//! Code-table CSV: one row per labelled epoch with 0/1 code columns.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{CodeVector, SpectralError};
use crate::codes::{Code, Condition, UnitId, CODE_COUNT};

pub const CODE_TABLE_HEADER: &str =
    "participant,condition,epoch_index,delta,theta,alpha,beta,gamma,correct,incorrect";

pub fn write_code_table_to<W: Write>(w: &mut W, vectors: &[CodeVector]) -> std::io::Result<()> {
    writeln!(w, "{CODE_TABLE_HEADER}")?;
    for v in vectors {
        write!(w, "{},{},{}", v.unit.participant, v.unit.condition, v.epoch_index)?;
        for b in v.codes {
            write!(w, ",{}", u8::from(b))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_code_table(path: impl AsRef<Path>, vectors: &[CodeVector]) -> Result<(), SpectralError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| SpectralError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_code_table_to(&mut w, vectors).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_code_table(path: impl AsRef<Path>) -> Result<Vec<CodeVector>, SpectralError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SpectralError::Io(format!("{}: {e}", path.display())))?;
    read_code_table_from(file)
}

pub fn read_code_table_from<R: Read>(reader: R) -> Result<Vec<CodeVector>, SpectralError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SpectralError::Io(e.to_string()))?
        .clone();
    let found: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if found.join(",") != CODE_TABLE_HEADER {
        return Err(SpectralError::SchemaMismatch {
            expected: CODE_TABLE_HEADER.to_string(),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let bad = |message: String| SpectralError::BadRow { row, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let condition: Condition = rec[1].parse().map_err(|e: crate::codes::UnknownLabel| bad(e.to_string()))?;
        let unit = UnitId::new(&rec[0], condition).ok_or_else(|| bad("empty participant".into()))?;
        let epoch_index = rec[2]
            .parse::<usize>()
            .map_err(|_| bad(format!("epoch_index `{}`", &rec[2])))?;
        let mut codes = [false; CODE_COUNT];
        for (k, slot) in codes.iter_mut().enumerate() {
            *slot = match &rec[3 + k] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("{} must be 0 or 1, got `{other}`", Code::ALL[k]))),
            };
        }
        if codes[Code::Correct.index()] == codes[Code::Incorrect.index()] {
            return Err(bad("exactly one of correct/incorrect must be 1".into()));
        }
        out.push(CodeVector {
            epoch_index,
            codes,
            unit,
        });
    }
    Ok(out)
}
