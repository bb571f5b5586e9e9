use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Soft alignment of one utterance: row `t` is the attention distribution
/// over WRL positions used when emitting UL symbol `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix {
    pub id: String,
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    /// Whether the last row belongs to the end-of-sequence token.
    pub eos_row: bool,
}

const ROW_SUM_TOLERANCE: f64 = 1e-6;

impl AttentionMatrix {
    pub fn new(id: impl Into<String>, rows: usize, cols: usize, weights: Vec<f64>, eos_row: bool) -> Result<Self> {
        let id = id.into();
        if rows == 0 || cols == 0 {
            return Err(Error::Data(format!("{id}: attention matrix must be nonempty")));
        }
        if weights.len() != rows * cols {
            return Err(Error::shape("attention weights", rows * cols, weights.len()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Numerical(format!("{id}: attention weight outside [0, 1]")));
        }
        for (t, row) in weights.chunks(cols).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Numerical(format!("{id}: attention row {t} sums to {s}")));
            }
        }
        Ok(Self {
            id,
            rows,
            cols,
            weights,
            eos_row,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.weights[t * self.cols..(t + 1) * self.cols]
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.weights[t * self.cols + i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rows that correspond to UL symbols (the EOS row removed).
    pub fn symbol_rows(&self) -> usize {
        self.rows - usize::from(self.eos_row)
    }

    /// Copy without the EOS row, if any.
    pub fn without_eos(&self) -> AttentionMatrix {
        if !self.eos_row || self.rows == 1 {
            return Self {
                eos_row: false,
                ..self.clone()
            };
        }
        Self {
            id: self.id.clone(),
            rows: self.rows - 1,
            cols: self.cols,
            weights: self.weights[..(self.rows - 1) * self.cols].to_vec(),
            eos_row: false,
        }
    }
}

/// Text rendering: per matrix a header `<id> <rows> <cols>` (with a trailing
/// `eos` flag when the last row is the EOS row), then one line per row.
pub fn format_attention(matrices: &[AttentionMatrix]) -> String {
    let mut out = String::new();
    for m in matrices {
        let _ = write!(out, "{} {} {}", m.id, m.rows, m.cols);
        if m.eos_row {
            out.push_str(" eos");
        }
        out.push('\n');
        for t in 0..m.rows {
            let row: Vec<String> = m.row(t).iter().map(|w| w.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_attention(text: &str) -> Result<Vec<AttentionMatrix>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((n, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let bad = |n: usize| Error::Data(format!("attention file line {}: malformed", n + 1));
        let f: Vec<&str> = header.split_ascii_whitespace().collect();
        if f.len() != 3 && !(f.len() == 4 && f[3] == "eos") {
            return Err(bad(n));
        }
        let rows: usize = f[1].parse().map_err(|_| bad(n))?;
        let cols: usize = f[2].parse().map_err(|_| bad(n))?;
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (m, line) = lines.next().ok_or_else(|| bad(n))?;
            let row = line
                .split_ascii_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad(m)))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != cols {
                return Err(bad(m));
            }
            weights.extend(row);
        }
        out.push(AttentionMatrix::new(f[0], rows, cols, weights, f.len() == 4)?);
    }
    Ok(out)
}

pub fn write_attention(path: impl AsRef<Path>, matrices: &[AttentionMatrix]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_attention(matrices)).map_err(|e| Error::io(path, e))
}

pub fn read_attention(path: impl AsRef<Path>) -> Result<Vec<AttentionMatrix>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_attention(&text)
}
