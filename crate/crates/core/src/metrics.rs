//! PSNR, windowed SSIM (with its gradient), trajectory divergence.

use serde::{Deserialize, Serialize};

use crate::autoencoder::Image;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{norm2, sub};
use crate::perceptual::PerceptualMetric;
use crate::scalar::Scalar;

/// `10 log10(range² / MSE)`; identical images give `+∞`.
pub fn psnr<T: Scalar>(x: &Image<T>, y: &Image<T>, data_range: T) -> Result<T> {
    x.same_shape(y)?;
    if !(data_range > T::zero()) {
        return Err(Error::InvalidParameter("data_range must be positive".into()));
    }
    let mse = mse(&x.data, &y.data);
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (data_range * data_range / mse).log10())
}

fn mse<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = T::from_count(a.len().max(1));
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>() / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

/// Window weights plus window origins for one image size.
struct Windows<T> {
    /// Row-major `wh × ww` weights summing to 1.
    weights: Vec<T>,
    wh: usize,
    ww: usize,
    origins: Vec<(usize, usize)>,
}

impl<T: Scalar> Windows<T> {
    fn new(params: &SsimParams, height: usize, width: usize) -> Self {
        let k = params.window;
        if k == 0 || height < k || width < k {
            let n = T::from_count(height * width);
            return Self {
                weights: vec![T::one() / n; height * width],
                wh: height,
                ww: width,
                origins: vec![(0, 0)],
            };
        }
        let c = (k as f64 - 1.0) / 2.0;
        let g1: Vec<f64> = (0..k)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * params.sigma * params.sigma)).exp())
            .collect();
        let total: f64 = g1.iter().sum::<f64>().powi(2);
        let weights = (0..k * k).map(|i| T::lit(g1[i / k] * g1[i % k] / total)).collect();
        let origins = (0..=height - k)
            .flat_map(|y| (0..=width - k).map(move |x| (y, x)))
            .collect();
        Self {
            weights,
            wh: k,
            ww: k,
            origins,
        }
    }
}

struct WindowStats<T> {
    mx: T,
    my: T,
    vx: T,
    vy: T,
    cxy: T,
}

fn window_stats<T: Scalar>(
    x: &Image<T>,
    y: &Image<T>,
    w: &Windows<T>,
    oy: usize,
    ox: usize,
    c: usize,
) -> WindowStats<T> {
    let (mut mx, mut my) = (T::zero(), T::zero());
    for dy in 0..w.wh {
        for dx in 0..w.ww {
            let g = w.weights[dy * w.ww + dx];
            mx += g * x.at(oy + dy, ox + dx, c);
            my += g * y.at(oy + dy, ox + dx, c);
        }
    }
    let (mut vx, mut vy, mut cxy) = (T::zero(), T::zero(), T::zero());
    for dy in 0..w.wh {
        for dx in 0..w.ww {
            let g = w.weights[dy * w.ww + dx];
            let a = x.at(oy + dy, ox + dx, c) - mx;
            let b = y.at(oy + dy, ox + dx, c) - my;
            vx += g * a * a;
            vy += g * b * b;
            cxy += g * a * b;
        }
    }
    WindowStats { mx, my, vx, vy, cxy }
}

/// Mean local SSIM over valid window positions and channels. Images smaller
/// than the window fall back to a single uniform-weight window.
pub fn ssim<T: Scalar>(x: &Image<T>, y: &Image<T>, params: &SsimParams) -> Result<T> {
    ssim_inner(x, y, params, false).map(|(v, _)| v)
}

/// SSIM and its gradient with respect to `y`.
pub fn ssim_with_grad<T: Scalar>(x: &Image<T>, y: &Image<T>, params: &SsimParams) -> Result<(T, Image<T>)> {
    ssim_inner(x, y, params, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

fn ssim_inner<T: Scalar>(
    x: &Image<T>,
    y: &Image<T>,
    params: &SsimParams,
    want_grad: bool,
) -> Result<(T, Option<Image<T>>)> {
    x.same_shape(y)?;
    if x.data.is_empty() {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let w = Windows::<T>::new(params, x.height, x.width);
    let c1 = T::lit((params.k1 * params.data_range).powi(2));
    let c2 = T::lit((params.k2 * params.data_range).powi(2));
    let two = T::lit(2.0);
    let count = T::from_count(w.origins.len() * x.channels);
    let mut grad = want_grad.then(|| Image::filled(x.shape(), T::zero()));
    let mut total = T::zero();
    for c in 0..x.channels {
        for &(oy, ox) in &w.origins {
            let s = window_stats(x, y, &w, oy, ox, c);
            let a1 = two * s.mx * s.my + c1;
            let a2 = two * s.cxy + c2;
            let b1 = s.mx * s.mx + s.my * s.my + c1;
            let b2 = s.vx + s.vy + c2;
            let num = a1 * a2;
            let den = b1 * b2;
            total += num / den;
            if let Some(g) = grad.as_mut() {
                // dS/dy_k = g_k (alpha + beta x_k + gamma y_k)
                let beta = two * a1 / den;
                let gamma = -two * num * b1 / (den * den);
                let alpha = two * s.mx * a2 / den - two * s.my * num * b2 / (den * den) - beta * s.mx - gamma * s.my;
                for dy in 0..w.wh {
                    for dx in 0..w.ww {
                        let gk = w.weights[dy * w.ww + dx] / count;
                        let (py, px) = (oy + dy, ox + dx);
                        let idx = g.index(py, px, c);
                        g.data[idx] += gk * (alpha + beta * x.data[idx] + gamma * y.data[idx]);
                    }
                }
            }
        }
    }
    Ok((total / count, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEntry<T> {
    pub t: usize,
    pub distance: T,
}

/// `‖z_t^a − z_t^b‖₂` at every timestep of two sweeps over the same grid,
/// in ascending timestep order.
pub fn trajectory_divergence<T: Scalar>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<Vec<DivergenceEntry<T>>> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("trajectories use different grids".into()));
    }
    let mut ta = a.timesteps();
    let mut tb = b.timesteps();
    ta.sort_unstable();
    tb.sort_unstable();
    if ta != tb {
        return Err(Error::GridMismatch("trajectories visit different timesteps".into()));
    }
    ta.iter()
        .map(|&t| {
            let (za, zb) = (a.at(t).unwrap_or_default(), b.at(t).unwrap_or_default());
            if za.len() != zb.len() {
                return Err(Error::Dimension {
                    what: "trajectory latent",
                    expected: za.len(),
                    got: zb.len(),
                });
            }
            Ok(DivergenceEntry {
                t,
                distance: norm2(&sub(za, zb)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(with = "marker")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub perceptual: f64,
    pub roundtrip_l2_rel: f64,
}

impl MetricReport {
    /// Image metrics of `x_hat` against `x` after clamping `x_hat` to `[0, 1]`.
    pub fn compare<T: Scalar>(
        x: &Image<T>,
        x_hat: &Image<T>,
        perceptual: &dyn PerceptualMetric<T>,
        roundtrip_l2_rel: T,
    ) -> Result<Self> {
        let clamped = x_hat.clamped();
        Ok(Self {
            psnr_db: psnr(x, &clamped, T::one())?.as_f64(),
            ssim: ssim(x, &clamped, &SsimParams::default())?.as_f64(),
            perceptual: perceptual.distance(x, &clamped)?.as_f64(),
            roundtrip_l2_rel: roundtrip_l2_rel.as_f64(),
        })
    }
}

/// Formats a metric, writing non-finite values as `inf`, `-inf` or `nan`.
pub fn format_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

/// Serde adapter keeping `+∞` PSNR representable in JSON.
pub mod marker {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::format_metric(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad metric marker {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::ImageShape;
    use crate::optim::gradient_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: ImageShape, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(shape, (0..shape.pixel_count()).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn psnr_hand_values() {
        let shape = ImageShape::new(2, 2, 1);
        let x = Image::filled(shape, 0.5f64);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let y = Image::filled(shape, 0.6);
        assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let a = Image::filled(shape, 0.0f64);
        let b = Image::filled(shape, 1.0);
        assert!(psnr(&a, &b, 1.0).unwrap().abs() < 1e-12);
        assert!(psnr(&a, &b, 0.0).is_err());
        assert!(psnr(&a, &Image::filled(ImageShape::new(1, 4, 1), 0.0), 1.0).is_err());
    }

    #[test]
    fn ssim_self_symmetry_and_constant_case() {
        let shape = ImageShape::new(12, 10, 1);
        let x = random(shape, 1);
        let y = random(shape, 2);
        let p = SsimParams::default();
        assert!((ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&x, &y, &p).unwrap() - ssim(&y, &x, &p).unwrap()).abs() < 1e-12);

        let small = ImageShape::new(4, 4, 1);
        let z = Image::filled(small, 0.0);
        let h = Image::filled(small, 0.5);
        let expected: f64 = 1e-4 / (0.25 + 1e-4);
        assert!((ssim(&z, &h, &p).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 3.9984e-4).abs() < 1e-6);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let p = SsimParams::default();
        for (shape, seed) in [(ImageShape::new(9, 8, 1), 3), (ImageShape::new(4, 5, 2), 4)] {
            let x = random(shape, seed);
            let y = random(shape, seed + 10);
            let (_, g) = ssim_with_grad(&x, &y, &p).unwrap();
            let f = |v: &[f64]| ssim(&x, &Image::new(shape, v.to_vec()).unwrap(), &p).unwrap();
            let err = gradient_check(f, &g.data, &y.data, 1e-5).unwrap();
            assert!(err < 1e-5, "{err}");
        }
    }

    #[test]
    fn permutation_invariance_under_global_window() {
        let shape = ImageShape::new(3, 3, 1);
        let x = random(shape, 5);
        let y = random(shape, 6);
        let perm = [4, 0, 8, 2, 6, 1, 3, 7, 5];
        let px = Image::new(shape, perm.iter().map(|&i| x.data[i]).collect()).unwrap();
        let py = Image::new(shape, perm.iter().map(|&i| y.data[i]).collect()).unwrap();
        let p = SsimParams::default();
        assert!((ssim(&x, &y, &p).unwrap() - ssim(&px, &py, &p).unwrap()).abs() < 1e-12);
        assert!((psnr(&x, &y, 1.0).unwrap() - psnr(&px, &py, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metric_report_json_keeps_infinity() {
        let r = MetricReport {
            psnr_db: f64::INFINITY,
            ssim: 1.0,
            perceptual: 0.0,
            roundtrip_l2_rel: 0.0,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"psnr_db\":\"inf\""));
        let back: MetricReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
