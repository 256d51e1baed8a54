//! Matrix files and experiment outputs.
//!
//! Matrices are read and written either as headerless CSV (one matrix row
//! per line) or in the `BFB1` binary container: the 4-byte magic `BFB1`,
//! row and column counts as little-endian `u64`, then `rows * cols`
//! little-endian `f64` entries in row-major order. The format is chosen by
//! file extension: `.csv` means CSV, anything else means `BFB1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BFB1";

pub fn write_bfb1<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_bfb1<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing BFB1 magic".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("BFB1 dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "BFB1 body has {} bytes, expected {} for a {rows}x{cols} matrix",
            bytes.len(),
            count * 8
        )));
    }
    let entries: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn read_csv_matrix<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut entries = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec?;
        if cols.is_some_and(|c| c != rec.len()) {
            return Err(Error::Format(format!("CSV row {rows} has {} fields", rec.len())));
        }
        cols = Some(rec.len());
        for field in rec.iter() {
            entries.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("CSV row {rows}: '{field}' is not a number")))?,
            );
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("CSV matrix is empty".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

pub fn write_csv_matrix<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for r in 0..m.nrows() {
        writer.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let f = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_csv_matrix(f)
    } else {
        read_bfb1(f)
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv_matrix(f, m)
    } else {
        write_bfb1(f, m)
    }
}

/// A vector stored as a single row or single column.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(DVector::from_iterator(m.len(), m.iter().copied()))
    } else {
        Err(Error::Format(format!(
            "{} holds a {}x{} matrix, expected a vector",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
