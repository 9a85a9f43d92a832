//! Deterministic synthetic datasets for tests, demos and offline runs.
//!
//! `two_mode_binary` gives a small bimodal binary distribution that an RBM
//! can learn and an oracle can score exactly. `write_digits_idx` renders a
//! ten-class 28x28 digit dataset (seven-segment glyphs with random shift,
//! thickness, intensity and pixel noise) straight into IDX files, so the
//! whole MNIST-shaped pipeline can run where the real dataset is not
//! available.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::data::{write_idx_images, write_idx_labels};
use crate::error::Result;
use crate::numerics::RngStream;

/// Samples from a two-mode distribution over `num_visible` bits: one mode
/// is ones in the first half, the other is its complement, and every bit
/// flips with probability `flip_prob`.
pub fn two_mode_binary(n: usize, num_visible: usize, flip_prob: f64, seed: u64) -> Array2<f64> {
    weighted_two_mode_binary(n, num_visible, flip_prob, 0.5, seed)
}

/// [`two_mode_binary`] with an unequal mode mixture: the first mode is
/// drawn with probability `first_mode_prob`.
pub fn weighted_two_mode_binary(
    n: usize,
    num_visible: usize,
    flip_prob: f64,
    first_mode_prob: f64,
    seed: u64,
) -> Array2<f64> {
    let mut rng = RngStream::derive(seed, 0);
    let half = num_visible / 2;
    let mut out = Array2::zeros((n, num_visible));
    for mut row in out.rows_mut() {
        let first_mode = rng.next_f64() < first_mode_prob;
        for (i, x) in row.iter_mut().enumerate() {
            let base = (i < half) == first_mode;
            let flipped = rng.next_f64() < flip_prob;
            *x = f64::from(base != flipped);
        }
    }
    out
}

/// Two saturated modes, all-ones and all-zeros, `num_visible` bit flips
/// apart: a slow-mixing distribution whose mass split the negative phase
/// has to discover by exploration. The all-ones mode is drawn with
/// probability `ones_prob`; every bit then flips with `flip_prob`.
pub fn saturated_two_mode_binary(
    n: usize,
    num_visible: usize,
    flip_prob: f64,
    ones_prob: f64,
    seed: u64,
) -> Array2<f64> {
    let mut rng = RngStream::derive(seed, 0);
    let mut out = Array2::zeros((n, num_visible));
    for mut row in out.rows_mut() {
        let ones = rng.next_f64() < ones_prob;
        for x in row.iter_mut() {
            let flipped = rng.next_f64() < flip_prob;
            *x = f64::from(ones != flipped);
        }
    }
    out
}

const IMAGE_SIDE: usize = 28;

/// Seven-segment layout on the 28x28 canvas. Segments are axis-aligned
/// bars indexed A..G in the usual display order.
const SEGMENTS: [(usize, usize, usize, usize); 7] = [
    // (x0, y0, x1, y1) exclusive bounds, before thickness/jitter.
    (6, 4, 22, 4),    // A: top
    (21, 5, 21, 13),  // B: top right
    (21, 15, 21, 23), // C: bottom right
    (6, 23, 22, 23),  // D: bottom
    (4, 15, 4, 23),   // E: bottom left
    (4, 5, 4, 13),    // F: top left
    (6, 14, 22, 14),  // G: middle
];

const DIGIT_SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],     // 0
    [false, true, true, false, false, false, false], // 1
    [true, true, false, true, true, false, true],    // 2
    [true, true, true, true, false, false, true],    // 3
    [false, true, true, false, false, true, true],   // 4
    [true, false, true, true, false, true, true],    // 5
    [true, false, true, true, true, true, true],     // 6
    [true, true, true, false, false, false, false],  // 7
    [true, true, true, true, true, true, true],      // 8
    [true, true, true, true, false, true, true],     // 9
];

fn render_digit(digit: usize, rng: &mut RngStream) -> [u8; IMAGE_SIDE * IMAGE_SIDE] {
    let mut canvas = [0.0f64; IMAGE_SIDE * IMAGE_SIDE];
    let dx = rng.next_below(7) as isize - 3;
    let dy = rng.next_below(7) as isize - 3;
    let thickness = 2 + rng.next_below(3) as isize;
    let intensity = 0.6 + 0.4 * rng.next_f64();

    for (s, &(x0, y0, x1, y1)) in SEGMENTS.iter().enumerate() {
        if !DIGIT_SEGMENTS[digit][s] {
            continue;
        }
        let (x0, y0, x1, y1) = (x0 as isize, y0 as isize, x1 as isize, y1 as isize);
        let half = thickness / 2;
        for y in (y0 - half)..=(y1 + half) {
            for x in (x0 - half)..=(x1 + half) {
                let (px, py) = (x + dx, y + dy);
                if (0..IMAGE_SIDE as isize).contains(&px) && (0..IMAGE_SIDE as isize).contains(&py)
                {
                    canvas[py as usize * IMAGE_SIDE + px as usize] = intensity;
                }
            }
        }
    }

    let mut bytes = [0u8; IMAGE_SIDE * IMAGE_SIDE];
    for (b, &v) in bytes.iter_mut().zip(canvas.iter()) {
        let noisy = (v + 0.08 * rng.next_gaussian()).clamp(0.0, 1.0);
        *b = (noisy * 255.0).round() as u8;
    }
    bytes
}

/// Renders `n` digit images with uniformly random classes. Returns the
/// row-major pixel bytes and the labels.
pub fn digit_images(n: usize, seed: u64) -> (Vec<u8>, Vec<usize>) {
    let mut rng = RngStream::derive(seed, 0);
    let mut pixels = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let digit = rng.next_below(10);
        pixels.extend_from_slice(&render_digit(digit, &mut rng));
        labels.push(digit);
    }
    (pixels, labels)
}

/// Paths of one generated IDX dataset.
#[derive(Debug, Clone)]
pub struct DigitFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

/// Writes a train/test digit dataset in IDX format under `dir`, using the
/// standard MNIST file names.
pub fn write_digits_idx(
    dir: &Path,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<DigitFiles> {
    std::fs::create_dir_all(dir)?;
    let files = DigitFiles {
        train_images: dir.join("train-images-idx3-ubyte"),
        train_labels: dir.join("train-labels-idx1-ubyte"),
        test_images: dir.join("t10k-images-idx3-ubyte"),
        test_labels: dir.join("t10k-labels-idx1-ubyte"),
    };
    let (pixels, labels) = digit_images(n_train, seed);
    write_idx_images(
        &files.train_images,
        n_train,
        IMAGE_SIDE,
        IMAGE_SIDE,
        &pixels,
    )?;
    write_idx_labels(&files.train_labels, &labels)?;
    let (pixels, labels) = digit_images(n_test, seed.wrapping_add(1));
    write_idx_images(&files.test_images, n_test, IMAGE_SIDE, IMAGE_SIDE, &pixels)?;
    write_idx_labels(&files.test_labels, &labels)?;
    Ok(files)
}
