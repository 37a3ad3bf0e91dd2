//! Synthetic datasets: 2-D Gaussian mixtures and procedural grayscale images.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{Image, ImageShape};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Gauss2d,
    Shapes,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss2d" => Ok(Self::Gauss2d),
            "shapes" => Ok(Self::Shapes),
            other => Err(Error::InvalidInput(format!("unknown dataset kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Mixture components for `gauss2d`.
    pub components: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Shapes,
            count: 20,
            height: 16,
            width: 16,
            components: 4,
        }
    }
}

impl DatasetSpec {
    pub fn image_shape(&self) -> ImageShape {
        ImageShape::new(self.height, self.width, 1)
    }
}

/// Generated data; exactly one of `points` / `images` is non-empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<Image<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len().max(self.images.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn generate(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(Error::InvalidInput("dataset count must be at least 1".into()));
    }
    let mut ds = Dataset {
        kind: spec.kind,
        seed,
        points: Vec::new(),
        labels: Vec::new(),
        images: Vec::new(),
    };
    match spec.kind {
        DatasetKind::Gauss2d => {
            if spec.components == 0 {
                return Err(Error::InvalidInput("gauss2d needs at least one component".into()));
            }
            for i in 0..spec.count {
                let (p, label) = gauss2d_point(&mut stream_rng(seed, i as u64), spec.components);
                ds.points.push(p);
                ds.labels.push(label);
            }
        }
        DatasetKind::Shapes => {
            if spec.height == 0 || spec.width == 0 {
                return Err(Error::InvalidInput("image size must be positive".into()));
            }
            for i in 0..spec.count {
                ds.images
                    .push(shape_image(&mut stream_rng(seed, i as u64), spec.image_shape()));
            }
        }
    }
    Ok(ds)
}

/// Mean of mixture component `k`: evenly spaced on a circle of radius 2.
pub fn gauss2d_mean(k: usize, components: usize) -> [f64; 2] {
    let a = std::f64::consts::TAU * k as f64 / components as f64;
    [2.0 * a.cos(), 2.0 * a.sin()]
}

pub const GAUSS2D_STD: f64 = 0.35;

fn gauss2d_point(rng: &mut ChaCha8Rng, components: usize) -> (Vec<f64>, usize) {
    let k = rng.random_range(0..components);
    let m = gauss2d_mean(k, components);
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    (vec![m[0] + GAUSS2D_STD * nx, m[1] + GAUSS2D_STD * ny], k)
}

/// Background gradient plus one to three rectangles or discs, clamped to `[0, 1]`.
fn shape_image(rng: &mut ChaCha8Rng, shape: ImageShape) -> Image<f64> {
    let (h, w) = (shape.height as f64, shape.width as f64);
    let base = rng.random_range(0.1..0.5);
    let gx = rng.random_range(-0.3..0.3);
    let gy = rng.random_range(-0.3..0.3);
    let mut data: Vec<f64> = (0..shape.height)
        .flat_map(|y| (0..shape.width).map(move |x| (y as f64 / h - 0.5, x as f64 / w - 0.5)))
        .map(|(v, u)| base + gx * u + gy * v)
        .collect();
    for _ in 0..rng.random_range(1..=3) {
        let value = rng.random_range(0.0..1.0);
        let cy = rng.random_range(0.0..h);
        let cx = rng.random_range(0.0..w);
        if rng.random_bool(0.5) {
            let hh = rng.random_range(1.5..(h / 2.5).max(1.6));
            let hw = rng.random_range(1.5..(w / 2.5).max(1.6));
            for y in 0..shape.height {
                for x in 0..shape.width {
                    if ((y as f64 + 0.5) - cy).abs() <= hh && ((x as f64 + 0.5) - cx).abs() <= hw {
                        data[y * shape.width + x] = value;
                    }
                }
            }
        } else {
            let r = rng.random_range(1.5..(h.min(w) / 3.0).max(1.6));
            for y in 0..shape.height {
                for x in 0..shape.width {
                    let (dy, dx) = ((y as f64 + 0.5) - cy, (x as f64 + 0.5) - cx);
                    if dy * dy + dx * dx <= r * r {
                        data[y * shape.width + x] = value;
                    }
                }
            }
        }
    }
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Image::new(shape, data).expect("generated to shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let spec = DatasetSpec {
            kind: DatasetKind::Gauss2d,
            count: 100,
            ..DatasetSpec::default()
        };
        let a = generate(&spec, 7).unwrap().to_json().unwrap();
        let b = generate(&spec, 7).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&spec, 8).unwrap().to_json().unwrap());
        let back = Dataset::from_json(&a).unwrap();
        assert_eq!(back.len(), 100);
        assert!(back.labels.iter().all(|&l| l < 4));
    }

    #[test]
    fn shapes_are_in_unit_range() {
        let spec = DatasetSpec {
            count: 1,
            ..DatasetSpec::default()
        };
        let ds = generate(&spec, 3).unwrap();
        assert_eq!(ds.images.len(), 1);
        assert!(ds.images[0].data.iter().all(|v| (0.0..=1.0).contains(v)));
        let many = generate(&DatasetSpec { count: 30, ..spec }, 4).unwrap();
        assert!(many
            .images
            .iter()
            .all(|im| im.data.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn rejects_empty_and_unknown() {
        assert!(generate(
            &DatasetSpec {
                count: 0,
                ..DatasetSpec::default()
            },
            1
        )
        .is_err());
        assert!("spirals".parse::<DatasetKind>().is_err());
        assert_eq!("gauss2d".parse::<DatasetKind>().unwrap(), DatasetKind::Gauss2d);
    }
}
