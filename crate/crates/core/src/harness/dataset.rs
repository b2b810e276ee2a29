//! Procedural super-resolution samples.
//!
//! Each HR channel mixes a linear gradient, a checkerboard and a low-frequency
//! sinusoid with random convex weights. LR images are `s×s` box averages, and
//! the network input is the LR image nearest-neighbour upsampled back to HR size.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::tensor::Tensor;

/// Image channels of the toy task.
pub const TOY_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SrSample {
    /// `1×C×H×W`, values in `[0, 1]`.
    pub hr: Tensor,
    /// `1×C×(H/s)×(W/s)`.
    pub lr: Tensor,
    pub scale: usize,
}

impl SrSample {
    pub fn from_hr(hr: Tensor, scale: usize) -> Result<Self, HarnessError> {
        let lr = box_downsample(&hr, scale)?;
        Ok(Self { hr, lr, scale })
    }

    /// LR upsampled to HR size, the network input.
    pub fn input(&self) -> Tensor {
        nearest_upsample(&self.lr, self.scale)
    }
}

fn check_divisible(h: usize, w: usize, s: usize) -> Result<(), HarnessError> {
    if s == 0 || !h.is_multiple_of(s) || !w.is_multiple_of(s) {
        return Err(HarnessError::Config(format!("image size {h}x{w} is not divisible by scale {s}")));
    }
    Ok(())
}

pub fn box_downsample(t: &Tensor, s: usize) -> Result<Tensor, HarnessError> {
    let (b, c, h, w) = t.dims4()?;
    check_divisible(h, w, s)?;
    let (oh, ow) = (h / s, w / s);
    let norm = (s * s) as f64;
    let d = t.data();
    Ok(Tensor::from_fn(&[b, c, oh, ow], |i| {
        let (plane, y, x) = (i / (oh * ow), (i / ow) % oh, i % ow);
        let mut acc = 0.0;
        for dy in 0..s {
            for dx in 0..s {
                acc += d[plane * h * w + (y * s + dy) * w + x * s + dx];
            }
        }
        acc / norm
    }))
}

pub fn nearest_upsample(t: &Tensor, s: usize) -> Tensor {
    let (b, c, h, w) = t.dims4().expect("rank-4 tensor");
    let (oh, ow) = (h * s, w * s);
    let d = t.data();
    Tensor::from_fn(&[b, c, oh, ow], |i| {
        let (plane, y, x) = (i / (oh * ow), (i / ow) % oh, i % ow);
        d[plane * h * w + (y / s) * w + x / s]
    })
}

/// `1×1×size×size` checkerboard alternating every `period / 2` pixels.
pub fn checkerboard(size: usize, period: usize) -> Tensor {
    let cell = (period / 2).max(1);
    Tensor::from_fn(&[1, 1, size, size], |i| ((i / size / cell + i % size / cell) % 2) as f64)
}

fn toy_channel(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let cell = rng.random_range(2..6usize);
    let (fx, fy) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut wts = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    let total: f64 = wts.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    wts.iter_mut().for_each(|v| *v /= total);
    let n = size as f64;
    (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            let gradient = 0.5 + 0.5 * (a * (x / n - 0.5) + b * (y / n - 0.5));
            let check = ((i / size / cell + i % size / cell) % 2) as f64;
            let wave = 0.5 + 0.5 * (2.0 * PI * (fx * x + fy * y) / n + phase).sin();
            (wts[0] * gradient + wts[1] * check + wts[2] * wave).clamp(0.0, 1.0)
        })
        .collect()
}

pub fn make_toy_dataset_with_channels(count: usize, size: usize, scale: usize, channels: usize, seed: u64) -> Result<Vec<SrSample>, HarnessError> {
    check_divisible(size, size, scale)?;
    if channels == 0 {
        return Err(HarnessError::Config("channels must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data: Vec<f64> = (0..channels).flat_map(|_| toy_channel(&mut rng, size)).collect();
            SrSample::from_hr(Tensor::new(vec![1, channels, size, size], data)?, scale)
        })
        .collect()
}

pub fn make_toy_dataset(count: usize, size: usize, scale: usize, seed: u64) -> Result<Vec<SrSample>, HarnessError> {
    make_toy_dataset_with_channels(count, size, scale, TOY_CHANNELS, seed)
}

/// Seeded 80/20 split of `0..n` into (train, held-out) indices.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5911));
    let test = if n >= 2 { ((n as f64) * 0.2).round().max(1.0) as usize } else { 0 };
    let held = idx.split_off(n - test);
    (idx, held)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_downsamples_to_constant() {
        let hr = Tensor::full(&[1, 2, 8, 8], 0.3);
        let s = SrSample::from_hr(hr, 2).unwrap();
        assert_eq!(s.lr.shape(), &[1, 2, 4, 4]);
        assert!(s.lr.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn checkerboard_of_period_s_averages_to_half() {
        for s in [2, 4] {
            let lr = box_downsample(&checkerboard(16, s), s).unwrap();
            assert!(lr.data().iter().all(|&v| v == 0.5), "s={s}");
        }
    }

    #[test]
    fn dataset_is_deterministic_and_bounded() {
        let a = make_toy_dataset(4, 16, 2, 7).unwrap();
        let b = make_toy_dataset(4, 16, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_toy_dataset(4, 16, 2, 8).unwrap());
        for s in &a {
            assert!(s.hr.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(s.input().shape(), s.hr.shape());
        }
    }

    #[test]
    fn indivisible_size_is_rejected() {
        assert!(make_toy_dataset(1, 15, 2, 0).is_err());
    }

    #[test]
    fn split_is_80_20_and_disjoint() {
        let (train, test) = split_indices(20, 3);
        assert_eq!((train.len(), test.len()), (16, 4));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(split_indices(20, 3), (train, test));
    }
}
