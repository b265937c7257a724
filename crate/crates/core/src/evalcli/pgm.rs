use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Width of the gaps between tiles.
pub const TILE_SEPARATOR: usize = 2;
/// Gray level of the gaps, distinct from both ink and background.
pub const SEPARATOR_LEVEL: u8 = 128;

/// Binary 8-bit PGM (P5) of the rows of `images`, each reshaped to
/// `height × width` and tiled row-major, `grid_cols` tiles per row.
/// Intensities in [0, 1] map to 0–255; values outside are clamped.
pub fn pgm_grid(images: &DenseMatrix, height: usize, width: usize, grid_cols: usize) -> Result<Vec<u8>> {
    if height * width != images.cols() || height == 0 {
        return Err(Error::Dimension(format!(
            "{} pixels per image cannot tile as {height}x{width}",
            images.cols()
        )));
    }
    if grid_cols == 0 || images.rows() == 0 {
        return Err(Error::Config("an image grid needs at least one image and one column".into()));
    }
    let n = images.rows();
    let cols = grid_cols.min(n);
    let rows = n.div_ceil(cols);
    let total_w = cols * width + (cols - 1) * TILE_SEPARATOR;
    let total_h = rows * height + (rows - 1) * TILE_SEPARATOR;
    let mut pixels = vec![SEPARATOR_LEVEL; total_w * total_h];
    for (t, img) in images.row_iter().enumerate() {
        let (ty, tx) = (t / cols, t % cols);
        let (oy, ox) = (ty * (height + TILE_SEPARATOR), tx * (width + TILE_SEPARATOR));
        for y in 0..height {
            for x in 0..width {
                let v = img[y * width + x].clamp(0.0, 1.0);
                pixels[(oy + y) * total_w + ox + x] = (v * 255.0).round() as u8;
            }
        }
    }
    // unused tiles in the last row stay at the separator level
    let mut out = format!("P5\n{total_w} {total_h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

pub fn write_pgm_grid(path: &Path, images: &DenseMatrix, height: usize, width: usize, grid_cols: usize) -> Result<()> {
    fs::write(path, pgm_grid(images, height, width, grid_cols)?)?;
    Ok(())
}

/// Square tile side for `pixels`, if it is a perfect square.
pub fn square_side(pixels: usize) -> Option<usize> {
    let s = (pixels as f64).sqrt().round() as usize;
    (s * s == pixels).then_some(s)
}
