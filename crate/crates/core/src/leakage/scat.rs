//! SCAT1 trace-file format (binary, little-endian).
//!
//! ```text
//! header:  "SCAT" | u8 version=1 | u8 resolution_bits | u16 reserved=0
//!          | u32 n_traces | u32 n_samples | f64 sample_period_ns
//! trace:   u32 start_idx | u32 end_idx | [u8;16] plaintext | [u8;16] key
//!          | n_samples x u16 samples
//! ```
//!
//! Every trace occupies the same `n_samples` (the capture depth); traces
//! whose capture was shorter are padded by holding their last sample value.
//! `start_idx..end_idx` is the trigger window and never reaches padding.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::synth::{PowerTrace, TraceMeta};

pub const SCAT_MAGIC: [u8; 4] = *b"SCAT";
pub const SCAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum ScatError {
    #[error("bad magic, not a SCAT file")]
    BadMagic,
    #[error("unsupported SCAT version {0}")]
    BadVersion(u8),
    #[error("file truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes traces as one SCAT1 file. All traces must share a sample period.
pub fn write_scat(
    traces: &[PowerTrace],
    resolution_bits: u8,
    out: &mut impl Write,
) -> io::Result<()> {
    let n_samples = traces.iter().map(|t| t.samples.len()).max().unwrap_or(0) as u32;
    let period = traces.first().map_or(0.0, |t| t.sample_period_ns);
    debug_assert!(traces.iter().all(|t| t.sample_period_ns == period));

    out.write_all(&SCAT_MAGIC)?;
    out.write_all(&[SCAT_VERSION, resolution_bits])?;
    out.write_all(&0u16.to_le_bytes())?;
    out.write_all(&(traces.len() as u32).to_le_bytes())?;
    out.write_all(&n_samples.to_le_bytes())?;
    out.write_all(&period.to_le_bytes())?;

    for t in traces {
        let (start, end) = t.trigger_edges.unwrap_or((0, t.samples.len() as u32));
        out.write_all(&start.to_le_bytes())?;
        out.write_all(&end.to_le_bytes())?;
        out.write_all(&t.meta.plaintext)?;
        out.write_all(&t.meta.key)?;
        let pad = t.samples.last().copied().unwrap_or(0);
        for i in 0..n_samples as usize {
            let s = t.samples.get(i).copied().unwrap_or(pad);
            out.write_all(&s.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parsed SCAT1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatFile {
    pub resolution_bits: u8,
    pub sample_period_ns: f64,
    pub traces: Vec<PowerTrace>,
}

fn read_exact_or_truncated(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ScatError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ScatError::Truncated
        } else {
            ScatError::Io(e)
        }
    })
}

pub fn read_scat(r: &mut impl Read) -> Result<ScatFile, ScatError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(r, &mut magic)?;
    if magic != SCAT_MAGIC {
        return Err(ScatError::BadMagic);
    }
    let mut head = [0u8; 4];
    read_exact_or_truncated(r, &mut head)?;
    if head[0] != SCAT_VERSION {
        return Err(ScatError::BadVersion(head[0]));
    }
    let resolution_bits = head[1];
    let mut u32buf = [0u8; 4];
    read_exact_or_truncated(r, &mut u32buf)?;
    let n_traces = u32::from_le_bytes(u32buf);
    read_exact_or_truncated(r, &mut u32buf)?;
    let n_samples = u32::from_le_bytes(u32buf) as usize;
    let mut f64buf = [0u8; 8];
    read_exact_or_truncated(r, &mut f64buf)?;
    let sample_period_ns = f64::from_le_bytes(f64buf);

    let mut traces = Vec::with_capacity(n_traces as usize);
    let mut sample_buf = vec![0u8; n_samples * 2];
    for _ in 0..n_traces {
        read_exact_or_truncated(r, &mut u32buf)?;
        let start = u32::from_le_bytes(u32buf);
        read_exact_or_truncated(r, &mut u32buf)?;
        let end = u32::from_le_bytes(u32buf);
        let mut plaintext = [0u8; 16];
        read_exact_or_truncated(r, &mut plaintext)?;
        let mut key = [0u8; 16];
        read_exact_or_truncated(r, &mut key)?;
        read_exact_or_truncated(r, &mut sample_buf)?;
        let samples = sample_buf
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        traces.push(PowerTrace {
            samples,
            sample_period_ns,
            trigger_edges: Some((start, end)),
            meta: TraceMeta {
                plaintext,
                key,
                ..Default::default()
            },
        });
    }
    Ok(ScatFile {
        resolution_bits,
        sample_period_ns,
        traces,
    })
}
