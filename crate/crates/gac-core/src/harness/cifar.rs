//! CIFAR-10 binary batch loading.
//!
//! Records are 1 label byte followed by 3072 pixel bytes (R, G, B planes of
//! 32x32). Kept classes map to caller-chosen scalar responses (the default
//! experiments use cat = +1, dog = -1); pixels become grayscale (R+G+B)/3,
//! block-averaged 4x4 into 8x8, scaled to [0, 1].

use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::numerics::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

const RECORD_LEN: usize = 3073;
const PLANE: usize = 1024;

/// CIFAR-10 class byte for "cat".
pub const CIFAR_CAT: u8 = 3;
/// CIFAR-10 class byte for "dog".
pub const CIFAR_DOG: u8 = 5;

/// Loads one CIFAR-10 binary batch, keeping only records whose label appears
/// in `classes` (label byte -> response value). The seed shuffles the kept
/// record order so later truncation subsamples fairly.
pub fn load_cifar10(batch_path: &Path, classes: &[(u8, f64)], seed: u64) -> Result<Dataset> {
    let bytes = std::fs::read(batch_path)?;
    if bytes.is_empty() {
        return Err(Error::Format {
            offset: 0,
            message: "empty batch file".into(),
        });
    }
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Format {
            offset: (bytes.len() - bytes.len() % RECORD_LEN) as u64,
            message: format!(
                "file size {} is not a multiple of the {RECORD_LEN}-byte record",
                bytes.len()
            ),
        });
    }
    let n_records = bytes.len() / RECORD_LEN;
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for r in 0..n_records {
        let label = bytes[r * RECORD_LEN];
        if let Some(&(_, target)) = classes.iter().find(|(c, _)| *c == label) {
            kept.push((r, target));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyInput(
            "no records match the class filter".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kept.shuffle(&mut rng);

    let mut x = Matrix::zeros(kept.len(), 64);
    let mut y = Matrix::zeros(kept.len(), 1);
    for (row, &(r, target)) in kept.iter().enumerate() {
        let rec = &bytes[r * RECORD_LEN + 1..(r + 1) * RECORD_LEN];
        let gray = grayscale_downsample(rec);
        x.row_mut(row).copy_from_slice(&gray);
        y.set(row, 0, target);
    }
    Ok(Dataset {
        x,
        y,
        source: format!("cifar10({})", batch_path.display()),
        preprocessing: format!(
            "grayscale (R+G+B)/3, 4x4 block average 32->8, scale 1/255; \
             class filter {classes:?}, shuffled (seed {seed})"
        ),
    })
}

fn grayscale_downsample(pixels: &[u8]) -> [f64; 64] {
    debug_assert_eq!(pixels.len(), 3 * PLANE);
    let mut out = [0.0; 64];
    for by in 0..8 {
        for bx in 0..8 {
            let mut sum = 0.0;
            for dy in 0..4 {
                for dx in 0..4 {
                    let y = by * 4 + dy;
                    let x = bx * 4 + dx;
                    let idx = y * 32 + x;
                    let gray = (pixels[idx] as f64
                        + pixels[PLANE + idx] as f64
                        + pixels[2 * PLANE + idx] as f64)
                        / 3.0;
                    sum += gray;
                }
            }
            out[by * 8 + bx] = sum / (16.0 * 255.0);
        }
    }
    out
}
