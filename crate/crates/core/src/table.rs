//! Numeric CSV tables with a fixed header.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub fn write_table<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:?}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table whose header must equal `header`; returns the rows.
pub fn read_table<R: Read>(input: R, header: &[&str], what: &'static str) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let found: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    if found != header {
        return Err(Error::Format {
            what,
            detail: format!("expected header {}, found {}", header.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format { what, detail: format!("row {}: {e}", i + 1) })?;
        rows.push(row);
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format { what: "csv", detail: e.to_string() }
}
