//! Synthetic labeled image sets.
//!
//! Stand-in for external image datasets when none is configured: each class
//! gets a sparse prototype (a fixed random subset of bright pixels) and
//! samples perturb the prototype with pixel noise, clamped to `[0,1]`. The
//! classes are pairwise well separated, so linear agents can solve the bandit
//! at desk scale.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::idx::LabeledImageSet;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImageSpec {
    pub classes: usize,
    pub rows: usize,
    pub cols: usize,
    /// Fraction of pixels lit in each class prototype.
    pub on_fraction: f64,
    /// Pixel noise amplitude applied to every sample.
    pub noise: f64,
}

impl SyntheticImageSpec {
    /// Ten classes of 28x28 images, the shape of the classic digit sets.
    pub fn default_desk() -> Self {
        SyntheticImageSpec {
            classes: 10,
            rows: 28,
            cols: 28,
            on_fraction: 0.2,
            noise: 0.25,
        }
    }
}

fn sample_prototypes(spec: &SyntheticImageSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = spec.rows * spec.cols;
    let classes = spec.classes.max(1);
    // Per-class prototypes: a mask of lit pixels with a base intensity each.
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut proto = vec![0.0; dim];
        for p in proto.iter_mut() {
            if rng.gen::<f64>() < spec.on_fraction {
                *p = rng.gen_range(0.6..1.0);
            }
        }
        prototypes.push(proto);
    }
    prototypes
}

fn sample_images(
    spec: &SyntheticImageSpec,
    prototypes: &[Vec<f64>],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> LabeledImageSet {
    let classes = prototypes.len();
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        let proto = &prototypes[label];
        let img: Vec<f64> = proto
            .iter()
            .map(|&base| {
                let v = if base > 0.0 {
                    base + spec.noise * rng.gen_range(-1.0..1.0)
                } else {
                    // faint background speckle
                    0.05 * rng.gen::<f64>()
                };
                v.clamp(0.0, 1.0)
            })
            .collect();
        images.push(img);
        labels.push(label);
    }
    LabeledImageSet {
        images,
        labels,
        rows: spec.rows,
        cols: spec.cols,
    }
}

/// Draws several labeled sets of the given sizes from one shared draw of
/// class prototypes, so a train set and its held-out eval set describe the
/// same classes. Labels cycle through the classes so every class is
/// represented evenly.
pub fn generate_image_sets(
    spec: &SyntheticImageSpec,
    sizes: &[usize],
    rng: &mut ChaCha8Rng,
) -> Vec<LabeledImageSet> {
    let prototypes = sample_prototypes(spec, rng);
    sizes
        .iter()
        .map(|&n| sample_images(spec, &prototypes, n, rng))
        .collect()
}

/// Draws one labeled set with its own prototypes.
pub fn generate_image_set(
    spec: &SyntheticImageSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> LabeledImageSet {
    generate_image_sets(spec, &[n], rng)
        .pop()
        .expect("one size requested")
}
