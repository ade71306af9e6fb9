//! Procedural test data: multi-modal image pairs with shared structure
//! plus per-modality unique components, and synthetic convolutional
//! sparse-coding instances.

use crate::lzsc::init_kernel;
use crate::tensor::{conv2d_same, ConvKernel, Tensor};
use crate::train::PairDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draw_rect(img: &mut Tensor, y0: usize, x0: usize, h: usize, w: usize, v: f64) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            let cur = img.get(y, x, 0);
            img.set(y, x, 0, cur.max(v));
        }
    }
}

fn draw_disk(img: &mut Tensor, cy: f64, cx: f64, r: f64, v: f64) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            if dy * dy + dx * dx <= r * r {
                let cur = img.get(y, x, 0);
                img.set(y, x, 0, cur.max(v));
            }
        }
    }
}

fn gaussian_noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One aligned multi-modal pair: a smooth shared background and shared
/// shapes visible in both modalities, unique shapes per modality, and
/// independent low-level noise. Values are clamped to [0, 1].
pub fn synthetic_pair(size: usize, rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let s = size as f64;
    // Smooth shared background.
    let (fy, fx) = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5));
    let (py, px) = (
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let tau = std::f64::consts::TAU;
    let base = Tensor::from_fn(size, size, 1, |y, x, _| {
        0.25 + 0.12
            * ((y as f64 / s) * tau * fy + py).sin()
            * ((x as f64 / s) * tau * fx + px).sin()
    });
    let mut i1 = base.clone();
    let mut i2 = base;

    // Shared structure at identical positions.
    for _ in 0..3 {
        let v = rng.gen_range(0.45..0.75);
        if rng.gen_bool(0.5) {
            let (y0, x0) = (rng.gen_range(0..size / 2), rng.gen_range(0..size / 2));
            let (h, w) = (rng.gen_range(size / 8..size / 3), rng.gen_range(size / 8..size / 3));
            draw_rect(&mut i1, y0, x0, h, w, v);
            draw_rect(&mut i2, y0, x0, h, w, v * rng.gen_range(0.95..1.05));
        } else {
            let (cy, cx) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
            let r = rng.gen_range(s / 10.0..s / 4.0);
            draw_disk(&mut i1, cy, cx, r, v);
            draw_disk(&mut i2, cy, cx, r, v * rng.gen_range(0.95..1.05));
        }
    }
    // Reversed-contrast shading: the modalities render one smooth field
    // with opposite sign (thermal-versus-visible style), so the per-pixel
    // max of the pair follows base + |field| with crease lines wherever
    // the field crosses zero.
    {
        let (gy, gx) = (rng.gen_range(0.4..1.2), rng.gen_range(0.4..1.2));
        let ph = rng.gen_range(0.0..tau);
        let amp = rng.gen_range(0.1..0.18);
        for y in 0..size {
            for x in 0..size {
                let f = amp * (tau * (gy * y as f64 + gx * x as f64) / s + ph).sin();
                let a = i1.get(y, x, 0);
                i1.set(y, x, 0, (a + f).max(0.0));
                let b = i2.get(y, x, 0);
                i2.set(y, x, 0, (b - f).max(0.0));
            }
        }
    }
    // Unique components: small, high-contrast features that only one
    // sensor sees (bright disks in modality 1, bright bars in modality 2).
    for _ in 0..3 {
        let v = rng.gen_range(0.9..1.0);
        let (cy, cx) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let r = rng.gen_range(1.5..3.0);
        draw_disk(&mut i1, cy, cx, r, v);
    }
    for _ in 0..3 {
        let v = rng.gen_range(0.9..1.0);
        let (y0, x0) = (rng.gen_range(0..size - 6), rng.gen_range(0..size - 6));
        let (h, w) = if rng.gen_bool(0.5) { (rng.gen_range(3..7), 3) } else { (3, rng.gen_range(3..7)) };
        draw_rect(&mut i2, y0, x0, h, w, v);
    }
    // Sensor point-spread smoothing, then independent noise.
    for img in [&mut i1, &mut i2] {
        *img = binomial_smooth(&binomial_smooth(img));
        for v in img.data_mut() {
            *v = (*v + gaussian_noise(rng, 0.0015)).clamp(0.0, 1.0);
        }
    }
    (i1, i2)
}

/// 3x3 binomial blur approximating a mild sensor point-spread function.
fn binomial_smooth(img: &Tensor) -> Tensor {
    let k = ConvKernel::from_vec(
        1,
        1,
        3,
        3,
        vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]
            .into_iter()
            .map(|v| v / 16.0)
            .collect(),
    )
    .unwrap();
    conv2d_same(img, &k).unwrap()
}

/// A seeded dataset of aligned synthetic pairs.
pub fn synthetic_dataset(count: usize, size: usize, seed: u64) -> PairDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..count).map(|_| synthetic_pair(size, &mut rng)).collect();
    PairDataset::new(pairs).expect("synthetic pairs are valid")
}

/// A synthetic convolutional sparse-coding problem: a unit-norm K -> 1
/// dictionary, sparse codes with comfortable spike magnitudes, and the
/// signals they synthesize.
pub struct CscInstance {
    pub dictionary: ConvKernel,
    pub codes: Vec<Tensor>,
    pub signals: Vec<Tensor>,
}

pub fn synthetic_csc(
    count: usize,
    size: usize,
    feature_channels: usize,
    kernel: usize,
    spikes_per_signal: usize,
    amplitude: (f64, f64),
    seed: u64,
) -> CscInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dictionary = init_kernel(1, feature_channels, kernel, &mut rng);
    let norm = dictionary.weights().iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in dictionary.weights_mut() {
        *v /= norm;
    }
    let mut codes = Vec::with_capacity(count);
    let mut signals = Vec::with_capacity(count);
    for _ in 0..count {
        let mut z = Tensor::zeros(size, size, feature_channels);
        for _ in 0..spikes_per_signal {
            let y = rng.gen_range(0..size);
            let x = rng.gen_range(0..size);
            let c = rng.gen_range(0..feature_channels);
            let mag = rng.gen_range(amplitude.0..amplitude.1);
            z.set(y, x, c, if rng.gen_bool(0.5) { mag } else { -mag });
        }
        let signal = conv2d_same(&z, &dictionary).unwrap();
        codes.push(z);
        signals.push(signal);
    }
    CscInstance {
        dictionary,
        codes,
        signals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_unit_range_and_aligned() {
        let data = synthetic_dataset(4, 32, 9);
        assert_eq!(data.len(), 4);
        for (a, b) in data.pairs() {
            assert_eq!(a.shape(), (32, 32, 1));
            assert_eq!(b.shape(), (32, 32, 1));
            assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(b.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn dataset_is_seeded_deterministically() {
        let a = synthetic_dataset(2, 16, 5);
        let b = synthetic_dataset(2, 16, 5);
        for ((a1, a2), (b1, b2)) in a.pairs().iter().zip(b.pairs()) {
            assert_eq!(a1.data(), b1.data());
            assert_eq!(a2.data(), b2.data());
        }
    }

    #[test]
    fn modalities_share_structure_but_differ() {
        let data = synthetic_dataset(3, 32, 11);
        for (a, b) in data.pairs() {
            let diff: f64 =
                a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
                    / a.len() as f64;
            assert!(diff > 0.005, "modalities identical");
            // Correlated through the shared background and shapes.
            let ma = a.mean();
            let mb = b.mean();
            let cov: f64 = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - ma) * (y - mb))
                .sum::<f64>();
            assert!(cov > 0.0);
        }
    }

    #[test]
    fn csc_signals_match_codes_through_dictionary() {
        let inst = synthetic_csc(3, 16, 4, 5, 8, (1.0, 2.5), 13);
        for (z, x) in inst.codes.iter().zip(&inst.signals) {
            let recon = conv2d_same(z, &inst.dictionary).unwrap();
            assert_eq!(recon.data(), x.data());
            assert!(z.data().iter().filter(|&&v| v != 0.0).count() <= 8);
        }
        let norm: f64 = inst.dictionary.weights().iter().map(|v| v * v).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
