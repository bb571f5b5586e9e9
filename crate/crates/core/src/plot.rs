//! Attention heatmaps: plain-text graymap (PGM P2), 8-bit grayscale PNG and
//! an exact text table. Rows are UL symbols, columns WRL words; darker cells
//! carry more weight.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::aligner::AttentionMatrix;
use crate::corpus::ParallelUtterance;
use crate::error::{Error, Result};

pub const MAX_GRAY: u8 = 255;

/// Gray level of a weight: `round(255 * (1 - w))`.
pub fn gray_level(w: f64) -> u8 {
    (f64::from(MAX_GRAY) * (1.0 - w.clamp(0.0, 1.0))).round() as u8
}

fn labels(m: &AttentionMatrix, utt: &ParallelUtterance) -> Result<(Vec<String>, Vec<String>)> {
    let symbols = m.symbol_rows();
    if symbols != utt.ul_symbols.len() || m.cols() != utt.wrl_words.len() || m.id != utt.id {
        return Err(Error::Data(format!(
            "matrix {} ({}x{}) does not fit utterance {} ({} symbols, {} words)",
            m.id,
            m.rows(),
            m.cols(),
            utt.id,
            utt.ul_symbols.len(),
            utt.wrl_words.len()
        )));
    }
    let mut rows = utt.ul_symbols.clone();
    if m.eos_row {
        rows.push("</s>".into());
    }
    Ok((rows, utt.wrl_words.clone()))
}

/// Pixel rows of the heatmap, each cell `cell` x `cell` pixels.
fn pixels(m: &AttentionMatrix, cell: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(m.rows() * cell);
    for t in 0..m.rows() {
        let line: Vec<u8> = m
            .row(t)
            .iter()
            .flat_map(|&w| std::iter::repeat_n(gray_level(w), cell))
            .collect();
        out.extend(std::iter::repeat_n(line, cell));
    }
    out
}

/// PGM P2 text with the axis labels in comment lines.
pub fn render_pgm(m: &AttentionMatrix, utt: &ParallelUtterance, cell: usize) -> Result<String> {
    let (rows, cols) = labels(m, utt)?;
    let cell = cell.max(1);
    let mut out = String::from("P2\n");
    let _ = writeln!(out, "# utterance: {}", m.id);
    let _ = writeln!(out, "# rows: {}", rows.join(" "));
    let _ = writeln!(out, "# cols: {}", cols.join(" "));
    let _ = writeln!(out, "{} {}\n{}", m.cols() * cell, m.rows() * cell, MAX_GRAY);
    for line in pixels(m, cell) {
        let v: Vec<String> = line.iter().map(u8::to_string).collect();
        out.push_str(&v.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Parses a P2 graymap into (width, height, row-major pixels).
pub fn parse_pgm(text: &str) -> Result<(usize, usize, Vec<u8>)> {
    let bad = || Error::Data("malformed PGM".into());
    let mut nums = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(str::split_ascii_whitespace);
    if nums.next() != Some("P2") {
        return Err(bad());
    }
    let mut next = || -> Result<usize> { nums.next().ok_or_else(bad)?.parse().map_err(|_| bad()) };
    let (w, h, max) = (next()?, next()?, next()?);
    if max != usize::from(MAX_GRAY) {
        return Err(bad());
    }
    let px = (0..w * h)
        .map(|_| next().and_then(|v| u8::try_from(v).map_err(|_| bad())))
        .collect::<Result<Vec<u8>>>()?;
    Ok((w, h, px))
}

/// Fixed-width table of the exact weights, column headers from WRL words.
pub fn render_text(m: &AttentionMatrix, utt: &ParallelUtterance) -> Result<String> {
    let (rows, cols) = labels(m, utt)?;
    let lw = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
    let cw = cols.iter().map(|c| c.chars().count()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:lw$}", "");
    for c in &cols {
        let _ = write!(out, " {c:>cw$}");
    }
    out.push('\n');
    for (t, r) in rows.iter().enumerate() {
        let _ = write!(out, "{r:lw$}");
        for w in m.row(t) {
            let _ = write!(out, " {w:>cw$.4}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, m: &AttentionMatrix, utt: &ParallelUtterance, cell: usize) -> Result<()> {
    labels(m, utt)?;
    let path = path.as_ref();
    let cell = cell.max(1);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), (m.cols() * cell) as u32, (m.rows() * cell) as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(png_err)?;
    let data: Vec<u8> = pixels(m, cell).concat();
    writer.write_image_data(&data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Writes `<stem>.pgm`, `<stem>.txt`, and with `png` set also `<stem>.png`.
pub fn plot_attention(m: &AttentionMatrix, utt: &ParallelUtterance, stem: impl AsRef<Path>, cell: usize, png: bool) -> Result<()> {
    let stem = stem.as_ref();
    for (ext, body) in [("pgm", render_pgm(m, utt, cell)?), ("txt", render_text(m, utt)?)] {
        let p = stem.with_extension(ext);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    if png {
        write_png(stem.with_extension("png"), m, utt, cell)?;
    }
    Ok(())
}
