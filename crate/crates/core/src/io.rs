//! JSON matrix encoding and CSV export helpers.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numlin::Matrix;

/// Matrices are encoded as an array of rows. `serde_json` writes the shortest
/// decimal that parses back to the identical `f64`, so values round-trip
/// bit-exactly.
pub mod matrix_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    let m = Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    crate::numlin::ensure_finite("document matrix", &m)?;
    Ok(m)
}

/// Reshapes a decoded matrix that lost its column count (no rows) or row
/// count (empty rows) to the declared shape.
pub(crate) fn conform(m: Matrix, rows: usize, cols: usize, name: &str) -> Result<Matrix> {
    if m.nrows() == rows && m.ncols() == cols {
        return Ok(m);
    }
    if m.is_empty() && rows * cols == 0 {
        return Ok(Matrix::zeros(rows, cols));
    }
    Err(Error::dim(format!("{name} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())))
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Serialize, Deserialize)]
    struct Wrap {
        #[serde(with = "matrix_rows")]
        m: Matrix,
    }

    proptest! {
        #[test]
        fn matrices_round_trip_bit_exactly(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(rows, cols, |_, _| {
                let mant: f64 = rng.random_range(-1.0..1.0);
                mant * 10f64.powi(rng.random_range(-30..30))
            });
            let text = serde_json::to_string(&Wrap { m: m.clone() }).unwrap();
            let back: Wrap = serde_json::from_str(&text).unwrap();
            for (x, y) in m.iter().zip(back.m.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn seventeen_digits() {
        let s = fmt_f64(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
