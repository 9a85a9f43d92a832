//! Binary PGM (P5) image grids: one tile per input row, arranged in a
//! near-square layout with 1-pixel gray separators.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const SEPARATOR_GRAY: u8 = 128;

/// Renders the grid and returns `(pixel payload, canvas width, canvas
/// height)`.
///
/// Tiles fill `ceil(sqrt(n))` columns. Each tile is min-max scaled to
/// [0, 1] independently (constant tiles map to all zeros) and quantized as
/// `round(x * 255)`. Cells beyond the last tile stay black.
pub fn render_image_grid(
    rows: &Array2<f64>,
    width: usize,
    height: usize,
) -> Result<(Vec<u8>, usize, usize)> {
    let n = rows.nrows();
    if n == 0 {
        return Err(Error::invalid("no tiles to render"));
    }
    if width * height != rows.ncols() {
        return Err(Error::shape(format!(
            "tile is {width}x{height} but rows have {} values",
            rows.ncols()
        )));
    }
    let grid_cols = (n as f64).sqrt().ceil() as usize;
    let grid_rows = n.div_ceil(grid_cols);
    let canvas_w = grid_cols * width + (grid_cols - 1);
    let canvas_h = grid_rows * height + (grid_rows - 1);
    let mut canvas = vec![0u8; canvas_w * canvas_h];

    // Separator lines between tile rows and columns.
    for gc in 1..grid_cols {
        let x = gc * (width + 1) - 1;
        for y in 0..canvas_h {
            canvas[y * canvas_w + x] = SEPARATOR_GRAY;
        }
    }
    for gr in 1..grid_rows {
        let y = gr * (height + 1) - 1;
        for x in 0..canvas_w {
            canvas[y * canvas_w + x] = SEPARATOR_GRAY;
        }
    }

    for (t, tile) in rows.rows().into_iter().enumerate() {
        let min = tile.fold(f64::INFINITY, |a, &b| a.min(b));
        let max = tile.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let range = max - min;
        let x0 = (t % grid_cols) * (width + 1);
        let y0 = (t / grid_cols) * (height + 1);
        for (p, &value) in tile.iter().enumerate() {
            let scaled = if range > 0.0 {
                (value - min) / range
            } else {
                0.0
            };
            let byte = (scaled * 255.0).round() as u8;
            canvas[(y0 + p / width) * canvas_w + x0 + p % width] = byte;
        }
    }
    Ok((canvas, canvas_w, canvas_h))
}

/// Writes the grid as a binary PGM (P5, maxval 255) file. Identical inputs
/// produce byte-identical files.
pub fn save_image_grid(path: &Path, rows: &Array2<f64>, width: usize, height: usize) -> Result<()> {
    let (payload, w, h) = render_image_grid(rows, width, height)?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&payload);
    Ok(std::fs::write(path, out)?)
}
