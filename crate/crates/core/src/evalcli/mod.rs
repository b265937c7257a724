//! Evaluation procedures on trained models: kNN on latent codes, stick
//! sparsity diagnostics, latent export and image grids. The command-line
//! binary is a thin layer over these.

mod export;
mod knn;
mod pgm;
mod sparsity;


pub use export::{export_latents, latents_to_csv, parse_latents_csv, read_latents_csv, write_latents_csv};
pub use knn::{knn_error, LatentSource, LatentTable};
pub use pgm::{pgm_grid, square_side, write_pgm_grid, SEPARATOR_LEVEL, TILE_SEPARATOR};
pub use sparsity::{
    decoder_weight_norms, effective_dimensions, sparsity_diagnostics, DimensionStatistic, SparsityDiagnostics,
};

/// Neighbourhood sizes reported by `eval`.
pub const KNN_KS: [usize; 3] = [3, 5, 10];

/// Error fraction as a percentage with two decimals.
pub fn percent(error: f64) -> String {
    format!("{:.2}", 100.0 * error)
}
