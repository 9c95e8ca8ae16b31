use std::io::{Read, Write};
use std::path::Path;

use super::model::{Architecture, DenoiserParams, INPUT_CHANNELS, OUTPUT_CHANNELS};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NCDN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout: magic, version, input/output channels, kernel, embedding size, steps,
/// hidden count, hidden widths (all u32 LE), parameter count (u64 LE), f32 LE values.
pub fn checkpoint_bytes<T: Real>(params: &DenoiserParams<T>) -> Vec<u8> {
    let a = &params.arch;
    let mut out = Vec::with_capacity(64 + params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let header = [
        CHECKPOINT_VERSION,
        INPUT_CHANNELS as u32,
        OUTPUT_CHANNELS as u32,
        a.kernel as u32,
        a.embed_dim as u32,
        a.steps as u32,
        a.hidden.len() as u32,
    ];
    for v in header.into_iter().chain(a.hidden.iter().map(|&h| h as u32)) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params.data {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    origin: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::corrupt(
                self.origin,
                format!("truncated at byte {} while reading {what} ({n} bytes needed, {} left)", self.at, self.bytes.len() - self.at),
            ));
        }
        self.at += n;
        Ok(&self.bytes[self.at - n..self.at])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses a checkpoint; `expected` pins the architecture the caller was built for.
pub fn parse_checkpoint<T: Real>(bytes: &[u8], origin: &Path, expected: Option<&Architecture>) -> Result<DenoiserParams<T>> {
    let mut c = Cursor { bytes, at: 0, origin };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::corrupt(origin, "not a denoiser checkpoint (bad magic)"));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let (cin, cout) = (c.u32("input channels")? as usize, c.u32("output channels")? as usize);
    let kernel = c.u32("kernel")? as usize;
    let embed_dim = c.u32("embedding size")? as usize;
    let steps = c.u32("steps")? as usize;
    let n_hidden = c.u32("layer count")? as usize;
    if n_hidden > 64 {
        return Err(Error::corrupt(origin, format!("implausible layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden).map(|_| c.u32("hidden width").map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let arch = Architecture { hidden, kernel, embed_dim, steps };
    let found = format!("{} ({cin} in, {cout} out)", arch.describe());
    if cin != INPUT_CHANNELS || cout != OUTPUT_CHANNELS {
        let want = expected.cloned().unwrap_or_else(|| arch.clone());
        return Err(Error::Architecture { found, expected: format!("{} ({INPUT_CHANNELS} in, {OUTPUT_CHANNELS} out)", want.describe()) });
    }
    if let Some(want) = expected {
        if *want != arch {
            return Err(Error::Architecture { found, expected: want.describe() });
        }
    }
    arch.check().map_err(|e| Error::corrupt(origin, format!("invalid architecture: {e}")))?;
    let count = u64::from_le_bytes(c.take(8, "parameter count")?.try_into().expect("8 bytes")) as usize;
    if count != arch.num_params() {
        return Err(Error::corrupt(
            origin,
            format!("{} declares {count} parameters, architecture needs {}", arch.describe(), arch.num_params()),
        ));
    }
    let blob = c.take(count.saturating_mul(4), "parameters")?;
    let data = blob.chunks_exact(4).map(|b| T::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)).collect();
    if c.at != bytes.len() {
        return Err(Error::corrupt(origin, format!("{} trailing bytes", bytes.len() - c.at)));
    }
    DenoiserParams::from_data(&arch, data)
}

pub fn save_checkpoint<T: Real>(params: &DenoiserParams<T>, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&checkpoint_bytes(params))?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path, expected: Option<&Architecture>) -> Result<DenoiserParams<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_checkpoint(&bytes, path, expected)
}
