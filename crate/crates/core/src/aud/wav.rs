use std::path::Path;

use crate::error::{Error, Result};

/// Reads 16-bit mono PCM, returning samples scaled to [-1, 1) and the sample rate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Data(format!(
            "{}: expected 16-bit mono PCM, got {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok((samples, spec.sample_rate))
}
