//! CSV interchange for distributions, nulls, calibrator tables and p-value
//! lists.
//!
//! Readers accept an optional header row: a first row whose fields do not
//! parse as numbers is skipped. `inf` and `infinity` are accepted.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::order::StepQuantile;

fn parse_field(s: &str, row: usize) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .map_err(|_| Error::Parse(format!("row {row}: `{t}` is not a number")))
}

/// Reads numeric rows with at least `cols` fields.
pub fn read_rows<R: Read>(reader: R, cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() < cols {
            return Err(Error::Parse(format!(
                "row {}: expected {cols} columns, found {}",
                i + 1,
                rec.len()
            )));
        }
        let parsed: Result<Vec<f64>> = rec.iter().take(cols).map(|f| parse_field(f, i + 1)).collect();
        match parsed {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Two-column numeric rows.
pub fn read_pairs<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    Ok(read_rows(reader, 2)?.into_iter().map(|r| (r[0], r[1])).collect())
}

/// First column of every row.
pub fn read_column<R: Read>(reader: R) -> Result<Vec<f64>> {
    Ok(read_rows(reader, 1)?.into_iter().map(|r| r[0]).collect())
}

/// Step quantile from `(atom, probability)` rows.
pub fn read_step_csv<R: Read>(reader: R) -> Result<StepQuantile> {
    let (atoms, probs) = read_pairs(reader)?.into_iter().unzip();
    StepQuantile::new(atoms, probs)
}

pub fn write_step_csv<W: Write>(q: &StepQuantile, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["atom", "probability"])?;
    for (a, p) in q.atoms().iter().zip(q.probs()) {
        w.write_record([a.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
