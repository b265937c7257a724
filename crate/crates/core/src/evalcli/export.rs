use std::fs;
use std::path::Path;

use super::knn::{LatentSource, LatentTable};
use crate::error::{Error, Result};
use crate::models::{encode, posterior_mean_latents, ModelParams, ModelSpec};
use crate::numerics::{DenseMatrix, RngState};

/// Latent codes for `x`. `Sampled` draws one posterior sample per row from
/// a generator seeded with `seed`; `PosteriorMean` ignores the seed.
pub fn export_latents(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    labels: &[usize],
    source: LatentSource,
    seed: u64,
) -> Result<LatentTable> {
    let codes = match source {
        LatentSource::Sampled => encode(spec, params, x, &mut RngState::new(seed))?.latent,
        LatentSource::PosteriorMean => posterior_mean_latents(spec, params, x)?,
    };
    LatentTable::new(codes, labels.to_vec(), source)
}

/// `label,z_1,…,z_K` with shortest round-trip float formatting.
pub fn latents_to_csv(table: &LatentTable) -> String {
    let k = table.codes.cols();
    let mut s = String::from("label");
    for j in 1..=k {
        s.push_str(&format!(",z_{j}"));
    }
    s.push('\n');
    for (row, y) in table.codes.row_iter().zip(&table.labels) {
        s.push_str(&y.to_string());
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn write_latents_csv(table: &LatentTable, path: &Path) -> Result<()> {
    fs::write(path, latents_to_csv(table))?;
    Ok(())
}

pub fn parse_latents_csv(text: &str, source: LatentSource) -> Result<LatentTable> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty latents CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(Error::Config(format!("unexpected latents header '{header}'")));
    }
    let k = cols.len() - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = |what: &str| Error::Config(format!("latents CSV line {}: {what}", n + 2));
        let mut fields = line.split(',');
        let y = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad("bad label"))?;
        let before = data.len();
        for f in fields {
            data.push(f.parse::<f64>().map_err(|_| bad("bad value"))?);
        }
        if data.len() - before != k {
            return Err(bad("wrong field count"));
        }
        labels.push(y);
    }
    LatentTable::new(DenseMatrix::from_vec(labels.len(), k, data)?, labels, source)
}

pub fn read_latents_csv(path: &Path, source: LatentSource) -> Result<LatentTable> {
    parse_latents_csv(&fs::read_to_string(path)?, source)
}
