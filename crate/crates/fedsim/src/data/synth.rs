//! Synthetic shape dataset.
//!
//! A desk-scale stand-in for 32x32x3 image benchmarks: each class is a
//! distinct colored geometric pattern, jittered per sample in position, hue,
//! and pixel noise. The patterns are deliberately easy — a small CNN should
//! reach high accuracy within a few epochs — while remaining non-trivial
//! under the pixel noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, Dataset, LabeledExample};
use crate::image::ImageTensor;
use crate::rng::{stream_rng, Stream};

const SIDE: usize = 32;
const BACKGROUND: f64 = 30.0;
const NOISE_STD: f64 = 8.0;
const MAX_SHIFT: i64 = 3;

/// Base color per class, RGB in [0, 255].
const CLASS_COLORS: [[f64; 3]; 10] = [
    [220.0, 60.0, 60.0],   // 0: filled square
    [60.0, 200.0, 60.0],   // 1: filled circle
    [70.0, 90.0, 230.0],   // 2: horizontal stripes
    [230.0, 200.0, 50.0],  // 3: vertical stripes
    [200.0, 60.0, 200.0],  // 4: left-to-right gradient
    [60.0, 200.0, 200.0],  // 5: top-to-bottom gradient
    [240.0, 140.0, 40.0],  // 6: hollow ring
    [150.0, 70.0, 220.0],  // 7: plus sign
    [210.0, 210.0, 210.0], // 8: checkerboard
    [40.0, 160.0, 130.0],  // 9: X cross
];

/// Pattern intensity in [0, 1] at (y, x) for a class, before shift/jitter.
fn pattern(class: usize, y: i64, x: i64) -> f64 {
    let c = SIDE as i64 / 2;
    let (dy, dx) = (y - c, x - c);
    match class {
        0 => {
            if dy.abs() <= 7 && dx.abs() <= 7 {
                1.0
            } else {
                0.0
            }
        }
        1 => {
            if dy * dy + dx * dx <= 8 * 8 {
                1.0
            } else {
                0.0
            }
        }
        2 => {
            if (y.rem_euclid(8)) < 4 {
                1.0
            } else {
                0.0
            }
        }
        3 => {
            if (x.rem_euclid(8)) < 4 {
                1.0
            } else {
                0.0
            }
        }
        4 => x as f64 / (SIDE - 1) as f64,
        5 => y as f64 / (SIDE - 1) as f64,
        6 => {
            let r2 = dy * dy + dx * dx;
            if (6 * 6..=10 * 10).contains(&r2) {
                1.0
            } else {
                0.0
            }
        }
        7 => {
            if dy.abs() <= 3 || dx.abs() <= 3 {
                1.0
            } else {
                0.0
            }
        }
        8 => {
            if ((y / 8) + (x / 8)) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        }
        9 => {
            if (y - x).abs() <= 2 || (y + x - (SIDE as i64 - 1)).abs() <= 2 {
                1.0
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Generates `n_per_class` examples for each of `class_count` classes
/// (at most 10), deterministically for a given seed. `split` selects an
/// independent stream so train and test sets never share samples.
pub fn synth_shapes(seed: u64, n_per_class: usize, class_count: usize) -> Result<Dataset, DataError> {
    synth_shapes_split(seed, 0, n_per_class, class_count)
}

/// Like [`synth_shapes`] but drawing from the stream labeled `split`.
pub fn synth_shapes_split(
    seed: u64,
    split: u64,
    n_per_class: usize,
    class_count: usize,
) -> Result<Dataset, DataError> {
    if class_count > 10 {
        return Err(DataError::TooManyClasses(class_count));
    }
    let mut rng = stream_rng(seed, Stream::Synth(split));
    let noise = Normal::new(0.0, NOISE_STD).expect("std is positive");
    let mut examples = Vec::with_capacity(n_per_class * class_count);
    for class in 0..class_count {
        let base = CLASS_COLORS[class];
        for _ in 0..n_per_class {
            let dy = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
            let dx = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
            let hue: [f64; 3] = [
                rng.gen_range(0.85..1.15),
                rng.gen_range(0.85..1.15),
                rng.gen_range(0.85..1.15),
            ];
            let mut img = ImageTensor::zeros(3, SIDE, SIDE);
            for ch in 0..3 {
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let p = pattern(class, y as i64 - dy, x as i64 - dx);
                        let v = BACKGROUND + (base[ch] * hue[ch] - BACKGROUND) * p
                            + noise.sample(&mut rng);
                        img.set(ch, y, x, v.clamp(0.0, 255.0));
                    }
                }
            }
            examples.push(LabeledExample { image: img, label: class });
        }
    }
    Dataset::new(examples, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_per_class() {
        let ds = synth_shapes(1, 10, 10).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.class_histogram(), vec![10; 10]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_shapes(5, 3, 4).unwrap();
        let b = synth_shapes(5, 3, 4).unwrap();
        assert_eq!(a, b);
        let c = synth_shapes(6, 3, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn splits_are_disjoint_streams() {
        let train = synth_shapes_split(5, 0, 3, 4).unwrap();
        let test = synth_shapes_split(5, 1, 3, 4).unwrap();
        assert_ne!(train, test);
    }

    #[test]
    fn pixels_in_range() {
        let ds = synth_shapes(2, 5, 10).unwrap();
        for ex in ds.examples() {
            for &v in ex.image.as_slice() {
                assert!((0.0..=255.0).contains(&v));
            }
        }
    }

    #[test]
    fn too_many_classes_rejected() {
        assert!(synth_shapes(1, 1, 11).is_err());
    }
}
