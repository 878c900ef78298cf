//! Procedural two-class image sets for tests, demos and the scaled
//! end-to-end run. Benign items are smooth, low-frequency fields;
//! malignant items carry a fine oriented texture.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::imageio::{DatasetItem, GrayImage, Label, LabeledDataset};
use crate::seed;

fn to_bytes(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Sum of a few broad Gaussian bumps on a mid-gray background.
fn smooth_field(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(3..6))
        .map(|_| {
            (
                rng.random_range(0.0..size as f64),
                rng.random_range(0.0..size as f64),
                rng.random_range(0.15..0.35) * size as f64,
                rng.random_range(-0.25..0.25),
            )
        })
        .collect();
    let base = rng.random_range(0.35..0.65);
    let noise = Normal::new(0.0, 0.01).expect("valid normal");
    (0..size * size)
        .map(|i| {
            let (r, c) = ((i / size) as f64, (i % size) as f64);
            let bump: f64 = bumps
                .iter()
                .map(|&(br, bc, s, a)| a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            base + bump + noise.sample(rng)
        })
        .collect()
}

/// Oriented stripes with a period of a few pixels plus speckle.
fn fine_texture(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let angle = rng.random_range(0.0..PI);
    let period = rng.random_range(3.0..6.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let amplitude = rng.random_range(0.15..0.3);
    let base = rng.random_range(0.35..0.65);
    let (s, c) = angle.sin_cos();
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            let u = x * c + y * s;
            base + amplitude * (2.0 * PI * u / period + phase).sin() + noise.sample(rng)
        })
        .collect()
}

/// One raw 8-bit `size x size` image of the given class.
pub fn texture_image(label: Label, size: usize, rng: &mut impl Rng) -> Result<GrayImage> {
    let values = match label {
        Label::Benign => smooth_field(size, rng),
        Label::Malignant => fine_texture(size, rng),
    };
    GrayImage::from_raw(size, size, to_bytes(&values))
}

/// `per_class` raw source images per class with ids `benign_00`,
/// `malignant_00`, ... Item `i` draws from its own seeded stream.
pub fn texture_sources(per_class: usize, size: usize, seed: u64) -> Result<LabeledDataset> {
    let base = seed::stage_seed(seed, "synth-textures");
    let mut items = Vec::with_capacity(2 * per_class);
    for label in Label::ALL {
        for i in 0..per_class {
            let index = (label.index() * per_class + i) as u64;
            let mut rng = seed::item_rng(base, index);
            items.push(DatasetItem {
                image: texture_image(label, size, &mut rng)?,
                label,
                source_id: format!("{label}_{i:02}"),
                original: true,
            });
        }
    }
    Ok(LabeledDataset::new(items))
}

/// Normalized sanity set: flat gray images (benign) versus checkerboards
/// (malignant), `per_class` of each, interleaved by class.
pub fn sanity_dataset(per_class: usize, size: usize, seed: u64) -> Result<LabeledDataset> {
    let base = seed::stage_seed(seed, "synth-sanity");
    let mut items = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for label in Label::ALL {
            let index = (2 * i + label.index()) as u64;
            let mut rng = seed::item_rng(base, index);
            let level = rng.random_range(0.3..0.7);
            let pixels: Vec<f64> = match label {
                Label::Benign => vec![level; size * size],
                Label::Malignant => {
                    let cell = rng.random_range(2..=8usize);
                    let contrast = rng.random_range(0.15..0.3);
                    (0..size * size)
                        .map(|p| {
                            let on = ((p / size) / cell + (p % size) / cell) % 2 == 0;
                            if on { level + contrast } else { level - contrast }
                        })
                        .collect()
                }
            };
            items.push(DatasetItem {
                image: GrayImage::from_normalized(size, size, pixels)?,
                label,
                source_id: format!("{label}_{i:03}"),
                original: true,
            });
        }
    }
    Ok(LabeledDataset::new(items))
}
