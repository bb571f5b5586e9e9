//! Plain-text parameter container:
//!
//! ```text
//! attseg-checkpoint 1
//! <name> <d1>x<d2>...      (or `scalar`)
//! <value> <value> ...
//! ```
//!
//! Values use shortest round-trip decimal formatting, so reading back is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::graph::ParamStore;
use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "attseg-checkpoint 1";

pub fn checkpoint_to_string<F: Real>(params: &ParamStore<F>) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    for (name, t) in params.iter() {
        let shape = if t.shape().is_empty() {
            "scalar".to_owned()
        } else {
            t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x")
        };
        let _ = writeln!(out, "{name} {shape}");
        let mut first = true;
        for v in t.data() {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn checkpoint_from_str<F: Real>(text: &str) -> Result<ParamStore<F>> {
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Data(format!("missing checkpoint header `{CHECKPOINT_MAGIC}`")));
    }
    let mut store = ParamStore::new();
    while let Some(header) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let (name, shape) = header
            .split_once(' ')
            .ok_or_else(|| Error::Data(format!("bad checkpoint entry header `{header}`")))?;
        let shape: Vec<usize> = if shape == "scalar" {
            Vec::new()
        } else {
            shape
                .split('x')
                .map(|d| d.parse().map_err(|_| Error::Data(format!("bad shape `{shape}` for {name}"))))
                .collect::<Result<_>>()?
        };
        let values = lines
            .next()
            .ok_or_else(|| Error::Data(format!("missing values for {name}")))?
            .split_ascii_whitespace()
            .map(|v| v.parse::<F>().map_err(|_| Error::Data(format!("bad value `{v}` in {name}"))))
            .collect::<Result<Vec<F>>>()?;
        store.add(name, Tensor::new(shape, values)?);
    }
    Ok(store)
}

pub fn write_checkpoint<F: Real>(path: impl AsRef<Path>, params: &ParamStore<F>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<F: Real>(path: impl AsRef<Path>) -> Result<ParamStore<F>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
