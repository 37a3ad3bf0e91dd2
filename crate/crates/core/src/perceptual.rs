//! Feature-space image distance.
//!
//! [`RandomConvFeatures`] is a fixed, untrained two-layer conv net. It is a
//! smooth stand-in for a learned perceptual metric, not LPIPS.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autoencoder::{Image, ImageShape};
use crate::error::Result;
use crate::optim::finite_difference_gradient;
use crate::scalar::Scalar;

pub trait PerceptualMetric<T: Scalar>: Send + Sync {
    /// Non-negative, symmetric, zero on identical inputs.
    fn distance(&self, x: &Image<T>, y: &Image<T>) -> Result<T>;

    /// Gradient of `distance(x, ·)` at `y`. Defaults to central differences.
    fn grad_y(&self, x: &Image<T>, y: &Image<T>) -> Result<Image<T>> {
        x.same_shape(y)?;
        let g = finite_difference_gradient(
            |v| {
                let probe = Image::new(y.shape(), v.to_vec()).expect("shape preserved");
                self.distance(x, &probe).unwrap_or(T::nan())
            },
            &y.data,
            T::lit(1e-5),
        )?;
        Image::new(y.shape(), g)
    }
}

/// 3×3 zero-padded stride-1 convolution, `cout × cin × 3 × 3` weights.
#[derive(Clone, Debug)]
struct Conv3<T> {
    cin: usize,
    cout: usize,
    weights: Vec<T>,
}

impl<T: Scalar> Conv3<T> {
    fn random(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (1.0 / (9 * cin) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let weights = (0..cout * cin * 9).map(|_| T::lit(normal.sample(rng))).collect();
        Self { cin, cout, weights }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.weights[((o * self.cin + i) * 3 + ky) * 3 + kx]
    }

    fn forward(&self, input: &[T], h: usize, w: usize) -> Vec<T> {
        let mut out = vec![T::zero(); h * w * self.cout];
        for y in 0..h {
            for x in 0..w {
                let dst = (y * w + x) * self.cout;
                for ky in 0..3 {
                    let Some(sy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        let Some(sx) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                            continue;
                        };
                        let src = (sy * w + sx) * self.cin;
                        for o in 0..self.cout {
                            let mut acc = T::zero();
                            for i in 0..self.cin {
                                acc += self.w(o, i, ky, kx) * input[src + i];
                            }
                            out[dst + o] += acc;
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&self, grad_out: &[T], h: usize, w: usize) -> Vec<T> {
        let mut grad_in = vec![T::zero(); h * w * self.cin];
        for y in 0..h {
            for x in 0..w {
                let src = (y * w + x) * self.cout;
                for ky in 0..3 {
                    let Some(sy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        let Some(sx) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                            continue;
                        };
                        let dst = (sy * w + sx) * self.cin;
                        for o in 0..self.cout {
                            let g = grad_out[src + o];
                            for i in 0..self.cin {
                                grad_in[dst + i] += self.w(o, i, ky, kx) * g;
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }
}

const NORM_EPS: f64 = 1e-10;

/// Per-pixel unit normalization across channels.
fn normalize<T: Scalar>(f: &[T], channels: usize) -> (Vec<T>, Vec<T>) {
    let mut out = f.to_vec();
    let mut norms = Vec::with_capacity(f.len() / channels);
    for px in out.chunks_mut(channels) {
        let s = (px.iter().map(|&v| v * v).sum::<T>() + T::lit(NORM_EPS)).sqrt();
        px.iter_mut().for_each(|v| *v /= s);
        norms.push(s);
    }
    (out, norms)
}

struct Features<T> {
    h1: Vec<T>,
    n1: Vec<T>,
    s1: Vec<T>,
    h2: Vec<T>,
    n2: Vec<T>,
    s2: Vec<T>,
}

/// Fixed-seed `C → 8 → 16` channel tanh conv features; the distance is the
/// sum over both layers of the spatial mean of squared differences between
/// channel-normalized features.
#[derive(Clone, Debug)]
pub struct RandomConvFeatures<T> {
    seed: u64,
    channels: usize,
    conv1: Conv3<T>,
    conv2: Conv3<T>,
}

impl<T: Scalar> RandomConvFeatures<T> {
    pub const DEFAULT_SEED: u64 = 0x5eed_f00d;

    pub fn new(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = Conv3::random(channels, 8, &mut rng);
        let conv2 = Conv3::random(8, 16, &mut rng);
        Self {
            seed,
            channels,
            conv1,
            conv2,
        }
    }

    pub fn with_default_seed(channels: usize) -> Self {
        Self::new(channels, Self::DEFAULT_SEED)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn features(&self, x: &Image<T>) -> Result<Features<T>> {
        x.check_shape(ImageShape::new(x.height, x.width, self.channels))?;
        let (h, w) = (x.height, x.width);
        let h1: Vec<T> = self.conv1.forward(&x.data, h, w).into_iter().map(T::tanh).collect();
        let (n1, s1) = normalize(&h1, 8);
        let h2: Vec<T> = self.conv2.forward(&h1, h, w).into_iter().map(T::tanh).collect();
        let (n2, s2) = normalize(&h2, 16);
        Ok(Features { h1, n1, s1, h2, n2, s2 })
    }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum()
}

/// Pull a gradient on normalized features back to the raw features.
fn normalize_backward<T: Scalar>(g: &[T], n: &[T], norms: &[T], channels: usize) -> Vec<T> {
    let mut out = vec![T::zero(); g.len()];
    for (p, &s) in norms.iter().enumerate() {
        let range = p * channels..(p + 1) * channels;
        let (gp, np) = (&g[range.clone()], &n[range.clone()]);
        let proj: T = gp.iter().zip(np).map(|(&a, &b)| a * b).sum();
        for ((o, &gi), &ni) in out[range].iter_mut().zip(gp).zip(np) {
            *o = (gi - ni * proj) / s;
        }
    }
    out
}

impl<T: Scalar> PerceptualMetric<T> for RandomConvFeatures<T> {
    fn distance(&self, x: &Image<T>, y: &Image<T>) -> Result<T> {
        x.same_shape(y)?;
        let (fx, fy) = (self.features(x)?, self.features(y)?);
        let pixels = T::from_count(x.height * x.width);
        Ok((sq_dist(&fx.n1, &fy.n1) + sq_dist(&fx.n2, &fy.n2)) / pixels)
    }

    fn grad_y(&self, x: &Image<T>, y: &Image<T>) -> Result<Image<T>> {
        x.same_shape(y)?;
        let (fx, fy) = (self.features(x)?, self.features(y)?);
        let (h, w) = (y.height, y.width);
        let scale = T::lit(2.0) / T::from_count(h * w);
        let g_n2: Vec<T> = fy.n2.iter().zip(&fx.n2).map(|(&a, &b)| scale * (a - b)).collect();
        let g_h2 = normalize_backward(&g_n2, &fy.n2, &fy.s2, 16);
        let g_a2: Vec<T> = g_h2.iter().zip(&fy.h2).map(|(&g, &v)| g * (T::one() - v * v)).collect();
        let mut g_h1 = self.conv2.backward(&g_a2, h, w);
        let g_n1: Vec<T> = fy.n1.iter().zip(&fx.n1).map(|(&a, &b)| scale * (a - b)).collect();
        for (acc, g) in g_h1.iter_mut().zip(normalize_backward(&g_n1, &fy.n1, &fy.s1, 8)) {
            *acc += g;
        }
        let g_a1: Vec<T> = g_h1.iter().zip(&fy.h1).map(|(&g, &v)| g * (T::one() - v * v)).collect();
        Image::new(y.shape(), self.conv1.backward(&g_a1, h, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::gradient_check;
    use rand::Rng;

    fn random(shape: ImageShape, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(shape, (0..shape.pixel_count()).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn distance_axioms() {
        let shape = ImageShape::new(6, 5, 1);
        let p = RandomConvFeatures::<f64>::with_default_seed(1);
        let x = random(shape, 1);
        let y = random(shape, 2);
        assert_eq!(p.distance(&x, &x).unwrap(), 0.0);
        let d = p.distance(&x, &y).unwrap();
        assert!(d > 0.0);
        assert!((d - p.distance(&y, &x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let shape = ImageShape::new(4, 4, 3);
        let x = random(shape, 3);
        let y = random(shape, 4);
        let a = RandomConvFeatures::<f64>::new(3, 11).distance(&x, &y).unwrap();
        let b = RandomConvFeatures::<f64>::new(3, 11).distance(&x, &y).unwrap();
        let c = RandomConvFeatures::<f64>::new(3, 12).distance(&x, &y).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let shape = ImageShape::new(5, 6, 2);
        let p = RandomConvFeatures::<f64>::with_default_seed(2);
        let x = random(shape, 5);
        let y = random(shape, 6);
        let g = p.grad_y(&x, &y).unwrap();
        let f = |v: &[f64]| p.distance(&x, &Image::new(shape, v.to_vec()).unwrap()).unwrap();
        let err = gradient_check(f, &g.data, &y.data, 1e-5).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn rejects_channel_mismatch() {
        let p = RandomConvFeatures::<f64>::with_default_seed(1);
        let x = random(ImageShape::new(4, 4, 3), 1);
        assert!(p.distance(&x, &x).is_err());
    }
}
