//! Matrix CSV format: one matrix row per line, comma separated, no header.
//! Missing entries of a masked matrix are written as the literal `NaN`.
//! Values are written with Rust's shortest round-trip float formatting.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, MaskedMatrix};

fn parse_rows(reader: impl Read, origin: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Format(format!(
                    "{origin}: row {} has {} fields, expected {c}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{origin}: cannot parse '{field}' at row {}, column {}",
                    line + 1,
                    k + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format(format!("{origin}: empty matrix file")))?;
    Ok((rows, cols, data))
}

pub fn read_matrix(reader: impl Read, origin: &str) -> Result<DenseMatrix> {
    let (r, c, data) = parse_rows(reader, origin)?;
    if data.iter().any(|x| x.is_nan()) {
        return Err(Error::Format(format!(
            "{origin}: missing entries are not allowed in a dense matrix"
        )));
    }
    DenseMatrix::new(r, c, data).map_err(|e| Error::Format(format!("{origin}: {e}")))
}

pub fn read_masked(reader: impl Read, origin: &str) -> Result<MaskedMatrix> {
    let (r, c, data) = parse_rows(reader, origin)?;
    MaskedMatrix::new(r, c, data).map_err(|e| Error::Format(format!("{origin}: {e}")))
}

fn write_rows(mut w: impl Write, rows: usize, cols: usize, value: impl Fn(usize, usize) -> f64) -> Result<()> {
    for i in 0..rows {
        let mut line = String::new();
        for j in 0..cols {
            if j > 0 {
                line.push(',');
            }
            let v = value(i, j);
            if v.is_nan() {
                line.push_str("NaN");
            } else {
                line.push_str(&format!("{v}"));
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix(w: impl Write, m: &DenseMatrix) -> Result<()> {
    write_rows(w, m.rows(), m.cols(), |i, j| m.get(i, j))
}

pub fn write_masked(w: impl Write, m: &MaskedMatrix) -> Result<()> {
    write_rows(w, m.rows(), m.cols(), |i, j| m.get(i, j).unwrap_or(f64::NAN))
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    read_matrix(File::open(path)?, &path.display().to_string())
}

pub fn load_masked(path: &Path) -> Result<MaskedMatrix> {
    read_masked(File::open(path)?, &path.display().to_string())
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), m)
}

pub fn save_masked(path: &Path, m: &MaskedMatrix) -> Result<()> {
    write_masked(BufWriter::new(File::create(path)?), m)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_round_trip_keeps_nan_positions() {
        let m = MaskedMatrix::new(2, 3, vec![0.1, f64::NAN, -3.0, f64::NAN, 1e-17, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_masked(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "0.1,NaN,-3\nNaN,0.00000000000000001,2\n");
        let back = read_masked(&buf[..], "buf").unwrap();
        assert_eq!(back.shape(), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(back.get(i, j), m.get(i, j));
            }
        }
    }

    #[test]
    fn dense_reader_rejects_nan_and_ragged_rows() {
        assert!(matches!(
            read_matrix("1,NaN\n2,3\n".as_bytes(), "x"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_matrix("1,2\n3\n".as_bytes(), "x"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_matrix("1,abc\n".as_bytes(), "x"),
            Err(Error::Format(_))
        ));
        assert!(read_matrix("".as_bytes(), "x").is_err());
    }
}
