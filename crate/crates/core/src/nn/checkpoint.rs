//! Layout (all integers little-endian):
//! `b"SBVAEPRM"`, u32 version, u32 layer count, then `(u64 fan_in, u64
//! fan_out)` per layer, then per layer the `fan_in·fan_out` weights
//! (row-major) followed by `fan_out` biases, each as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::mlp::LayerParams;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

const MAGIC: &[u8; 8] = b"SBVAEPRM";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_LAYER_ELEMENTS: u64 = 1 << 32;

pub fn write_layers<W: Write>(out: &mut W, layers: &[LayerParams]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(layers.len() as u32).to_le_bytes())?;
    for l in layers {
        out.write_all(&(l.w.rows() as u64).to_le_bytes())?;
        out.write_all(&(l.w.cols() as u64).to_le_bytes())?;
    }
    for l in layers {
        for v in l.w.as_slice().iter().chain(&l.bias) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a, R> {
    inner: &'a mut R,
    offset: u64,
    path: &'a Path,
}

impl<R: Read> Cursor<'_, R> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            offset: self.offset,
            message: message.into(),
        })
    }

    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        match self.inner.read_exact(&mut buf) {
            Ok(()) => {
                self.offset += N as u64;
                Ok(buf)
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                self.fail(format!("truncated while reading {what}"))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.bytes::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.bytes::<8>(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.bytes::<8>(what).map(f64::from_le_bytes)
    }
}

/// Reads one layer block; `path` only labels errors.
pub fn read_layers<R: Read>(input: &mut R, path: &Path) -> Result<Vec<LayerParams>> {
    let mut c = Cursor { inner: input, offset: 0, path };
    if &c.bytes::<8>("magic")? != MAGIC {
        c.offset = 0;
        return c.fail("not a parameter checkpoint (bad magic)");
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return c.fail(format!("unsupported checkpoint version {version}"));
    }
    let count = c.u32("layer count")? as usize;
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = c.u64("layer shape")?;
        let cols = c.u64("layer shape")?;
        if rows.saturating_mul(cols) > MAX_LAYER_ELEMENTS {
            return c.fail(format!("implausible layer shape {rows}x{cols}"));
        }
        shapes.push((rows as usize, cols as usize));
    }
    let mut layers = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let mut w = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            w.push(c.f64("weights")?);
        }
        let mut bias = Vec::with_capacity(cols);
        for _ in 0..cols {
            bias.push(c.f64("biases")?);
        }
        layers.push(LayerParams {
            w: DenseMatrix::from_vec(rows, cols, w)?,
            bias,
        });
    }
    Ok(layers)
}

pub fn save_layers(path: &Path, layers: &[LayerParams]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_layers(&mut out, layers)?;
    out.flush()?;
    Ok(())
}

pub fn load_layers(path: &Path) -> Result<Vec<LayerParams>> {
    let mut input = BufReader::new(File::open(path)?);
    let layers = read_layers(&mut input, path)?;
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(Error::Format {
            path: PathBuf::from(path),
            offset: layers
                .iter()
                .map(|l| 8 * l.num_params() as u64 + 16)
                .sum::<u64>()
                + 16,
            message: "trailing bytes after the last layer".into(),
        });
    }
    Ok(layers)
}
