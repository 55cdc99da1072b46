//! CSV datasets: a header row, comma separated, `#` comment lines ignored on input.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Parse a numeric CSV table.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(io_err)?.iter().map(String::from).collect();
    if header.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(io_err)?;
        if record.len() != header.len() {
            return Err(Error::ShapeMismatch(format!(
                "row {} has {} fields, header has {}",
                line + 1,
                record.len(),
                header.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::BadSpec(format!("row {}: '{field}' is not a number", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("row {}: {field}", line + 1)));
            }
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Table { header, columns })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_table(file)
}

/// Loss vector: the first column of the file.
pub fn read_losses(path: &Path) -> Result<Vec<f64>> {
    Ok(read_table_file(path)?.columns.swap_remove(0))
}

/// Write `rows` under `header`, preceded by a `#` provenance line. Line endings are LF.
pub fn write_table<W: Write>(
    writer: W,
    provenance: &str,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut writer = writer;
    let comment = provenance.replace(['\n', '\r'], " ");
    writeln!(writer, "# {comment}").map_err(io_err)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
