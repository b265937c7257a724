use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::nn::{init_params_with_variance, read_layers, write_layers, LayerParams, INIT_VARIANCE};
use crate::numerics::RngState;

/// Encoder (inference network, including the shared classifier head) and
/// decoder (generative network) weights. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
}

impl ModelParams {
    pub fn init(spec: &ModelSpec, rng: &mut RngState) -> Self {
        Self::init_with_variance(spec, rng, INIT_VARIANCE)
    }

    pub fn init_with_variance(spec: &ModelSpec, rng: &mut RngState, variance: f64) -> Self {
        let encoder = init_params_with_variance(&spec.encoder_config(), rng, variance);
        let decoder = init_params_with_variance(&spec.decoder_config(), rng, variance);
        Self { encoder, decoder }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.iter().map(LayerParams::zeros_like).collect(),
            decoder: self.decoder.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &LayerParams> {
        self.encoder.iter().chain(&self.decoder)
    }

    /// Every parameter buffer in a fixed order (encoder then decoder; per
    /// layer weights then bias).
    pub fn buffers(&self) -> Vec<&[f64]> {
        self.layers().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(&mut self.decoder)
            .flat_map(|l| l.buffers_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(LayerParams::num_params).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    pub fn set_flat(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                theta.len(),
                self.num_params()
            )));
        }
        let mut pos = 0;
        for buf in self.buffers_mut() {
            buf.copy_from_slice(&theta[pos..pos + buf.len()]);
            pos += buf.len();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers().all(LayerParams::all_finite)
    }

    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<()> {
        for (name, layers, cfg) in [
            ("encoder", &self.encoder, spec.encoder_config()),
            ("decoder", &self.decoder, spec.decoder_config()),
        ] {
            let ok = layers.len() == cfg.num_layers()
                && layers
                    .iter()
                    .zip(cfg.widths().windows(2))
                    .all(|(l, w)| l.w.shape() == (w[0], w[1]) && l.bias.len() == w[1]);
            if !ok {
                return Err(Error::Dimension(format!(
                    "{name} parameters do not match widths {:?}",
                    cfg.widths()
                )));
            }
        }
        Ok(())
    }
}

const MODEL_MAGIC: &str = "sbvae-model v1";
const HEADER_END: &str = "end";

/// Writes the text header (magic line, spec, `end`) followed by the encoder
/// and decoder parameter blocks.
pub fn save_model(path: &Path, spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MODEL_MAGIC}")?;
    out.write_all(spec.to_header().as_bytes())?;
    writeln!(out, "{HEADER_END}")?;
    write_layers(&mut out, &params.encoder)?;
    write_layers(&mut out, &params.decoder)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ModelSpec, ModelParams)> {
    let mut input = BufReader::new(File::open(path)?);
    let format_err = |offset: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };
    let mut offset = 0u64;
    let mut header = String::new();
    let mut first = true;
    loop {
        let mut line = String::new();
        let n = input
            .read_line(&mut line)
            .map_err(|e| format_err(offset, format!("unreadable header: {e}")))?;
        if n == 0 {
            return Err(format_err(offset, "checkpoint header is not terminated".into()));
        }
        let trimmed = line.trim_end();
        if first {
            if trimmed != MODEL_MAGIC {
                return Err(format_err(0, "not a model checkpoint".into()));
            }
            first = false;
        } else if trimmed == HEADER_END {
            offset += n as u64;
            break;
        } else {
            header.push_str(trimmed);
            header.push('\n');
        }
        offset += n as u64;
    }
    let spec = ModelSpec::from_header(&header)?;
    let encoder = read_layers(&mut input, path).map_err(|e| shift(e, offset))?;
    let enc_bytes: u64 = 16 + encoder.iter().map(|l| 16 + 8 * l.num_params() as u64).sum::<u64>();
    let decoder = read_layers(&mut input, path).map_err(|e| shift(e, offset + enc_bytes))?;
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(format_err(offset, "trailing bytes after the decoder block".into()));
    }
    let params = ModelParams { encoder, decoder };
    params.check_shapes(&spec)?;
    Ok((spec, params))
}

fn shift(e: Error, by: u64) -> Error {
    match e {
        Error::Format { path, offset, message } => Error::Format {
            path,
            offset: offset + by,
            message,
        },
        other => other,
    }
}
