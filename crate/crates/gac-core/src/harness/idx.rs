//! IDX-format image/label loading (the MNIST container format).
//!
//! Images: big-endian magic 0x00000803, then counts/rows/cols, then raw
//! bytes. Labels: magic 0x00000801, count, bytes. 28x28 images are cropped
//! to the centered 24x24 window and block-averaged 3x3 into 8x8 (28 is not
//! divisible by 8; the crop is recorded in the preprocessing field), scaled
//! to [0, 1]. Labels become one-hot rows over 10 classes.

use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::numerics::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const CLASSES: usize = 10;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    if offset + 4 > bytes.len() {
        return Err(Error::Format {
            offset: offset as u64,
            message: "file truncated inside header".into(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Raw parsed images: n rows of rows*cols bytes.
fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"),
        });
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("image data truncated: need {need} bytes, have {}", bytes.len()),
        });
    }
    Ok((n, rows, cols, &bytes[16..need]))
}

fn parse_labels(bytes: &[u8]) -> Result<(usize, &[u8])> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"),
        });
    }
    let n = read_u32(bytes, 4)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("label data truncated: need {need} bytes, have {}", bytes.len()),
        });
    }
    Ok((n, &bytes[8..need]))
}

/// Center-crop a 28x28 image to 24x24 and average 3x3 blocks into 8x8
/// values in [0, 1].
pub(crate) fn downsample_28_to_8(pixels: &[u8]) -> [f64; 64] {
    debug_assert_eq!(pixels.len(), 28 * 28);
    let mut out = [0.0; 64];
    for by in 0..8 {
        for bx in 0..8 {
            let mut sum = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    let y = 2 + by * 3 + dy;
                    let x = 2 + bx * 3 + dx;
                    sum += pixels[y * 28 + x] as f64;
                }
            }
            out[by * 8 + bx] = sum / (9.0 * 255.0);
        }
    }
    out
}

/// Loads an IDX image/label pair, downsamples to 8x8, one-hot encodes the
/// labels, and takes a stratified subsample of the requested size (0 keeps
/// everything).
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    subsample: usize,
    seed: u64,
) -> Result<Dataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let (n_img, rows, cols, pixels) = parse_images(&image_bytes)?;
    let (n_lab, labels) = parse_labels(&label_bytes)?;
    if n_img != n_lab {
        return Err(Error::Format {
            offset: 4,
            message: format!("{n_img} images but {n_lab} labels"),
        });
    }
    if rows != 28 || cols != 28 {
        return Err(Error::Format {
            offset: 8,
            message: format!("expected 28x28 images, got {rows}x{cols}"),
        });
    }
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= CLASSES {
            return Err(Error::Format {
                offset: (8 + i) as u64,
                message: format!("label {l} out of range"),
            });
        }
    }

    let keep = stratified_subsample(labels, subsample, seed);
    let mut x = Matrix::zeros(keep.len(), 64);
    let mut y = Matrix::zeros(keep.len(), CLASSES);
    for (row, &i) in keep.iter().enumerate() {
        let img = downsample_28_to_8(&pixels[i * 784..(i + 1) * 784]);
        x.row_mut(row).copy_from_slice(&img);
        y.set(row, labels[i] as usize, 1.0);
    }
    Ok(Dataset {
        x,
        y,
        source: format!("idx({})", images_path.display()),
        preprocessing: format!(
            "center-crop 28->24, 3x3 block average to 8x8, scale 1/255; \
             stratified subsample {} of {} (seed {seed})",
            keep.len(),
            n_img
        ),
    })
}

/// Stratified, seeded index selection: proportional per-class quotas, any
/// shortfall filled from the remaining pool in shuffled order.
fn stratified_subsample(labels: &[u8], want: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if want == 0 || want >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l as usize].push(i);
    }
    for class in per_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    let mut chosen = Vec::with_capacity(want);
    let base = want / CLASSES;
    let mut leftovers: Vec<usize> = Vec::new();
    for class in &per_class {
        let take = base.min(class.len());
        chosen.extend_from_slice(&class[..take]);
        leftovers.extend_from_slice(&class[take..]);
    }
    leftovers.shuffle(&mut rng);
    for &i in leftovers.iter().take(want - chosen.len().min(want)) {
        if chosen.len() >= want {
            break;
        }
        chosen.push(i);
    }
    chosen.sort_unstable();
    chosen
}
