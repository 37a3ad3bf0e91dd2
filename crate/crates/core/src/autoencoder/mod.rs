//! Image ↔ latent maps `E`/`D`: identity, PCA projection and a tiny
//! convolutional (downsample / bilinear upsample) pair.

mod conv;
mod identity;
mod linear;

pub use conv::ConvAutoencoder;
pub use identity::IdentityAutoencoder;
pub use linear::{fit_linear_autoencoder, LinearAutoencoder};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Row-major `height × width × channels` image, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(shape: ImageShape, data: Vec<T>) -> Result<Self> {
        check_len("image data", shape.pixel_count(), data.len())?;
        Ok(Self {
            height: shape.height,
            width: shape.width,
            channels: shape.channels,
            data,
        })
    }

    pub fn filled(shape: ImageShape, value: T) -> Self {
        Self {
            height: shape.height,
            width: shape.width,
            channels: shape.channels,
            data: vec![value; shape.pixel_count()],
        }
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape::new(self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.max(T::zero()).min(T::one()));
        out
    }

    pub fn check_shape(&self, expected: ImageShape) -> Result<()> {
        if self.shape() == expected && self.data.len() == expected.pixel_count() {
            Ok(())
        } else {
            Err(Error::Dimension {
                what: "image",
                expected: expected.pixel_count(),
                got: self.data.len(),
            })
        }
    }

    pub fn same_shape(&self, other: &Image<T>) -> Result<()> {
        other.check_shape(self.shape())
    }
}

/// Encoder/decoder pair. `decode` output is not clamped; clamp only at
/// metric or export time.
pub trait Autoencoder<T: Scalar>: Send + Sync {
    fn image_shape(&self) -> ImageShape;

    fn latent_dim(&self) -> usize;

    fn encode(&self, x: &Image<T>) -> Result<Vec<T>>;

    fn decode(&self, z: &[T]) -> Result<Image<T>>;

    /// `vᵀ ∂D/∂z`. Defaults to central finite differences.
    fn decoder_vjp(&self, z: &[T], v: &Image<T>) -> Result<Vec<T>> {
        finite_difference_decoder_vjp(self, z, v)
    }

    fn supports_exact_vjp(&self) -> bool {
        false
    }
}

pub fn finite_difference_decoder_vjp<T: Scalar, A: Autoencoder<T> + ?Sized>(
    ae: &A,
    z: &[T],
    v: &Image<T>,
) -> Result<Vec<T>> {
    check_len("latent", ae.latent_dim(), z.len())?;
    v.check_shape(ae.image_shape())?;
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let h = T::lit(1e-4) * (T::one() + z[i].abs());
        probe[i] = z[i] + h;
        let plus = ae.decode(&probe)?;
        probe[i] = z[i] - h;
        let minus = ae.decode(&probe)?;
        probe[i] = z[i];
        let s = plus
            .data
            .iter()
            .zip(&minus.data)
            .zip(&v.data)
            .fold(T::zero(), |acc, ((&p, &m), &w)| acc + w * (p - m));
        out.push(s / (h + h));
    }
    Ok(out)
}
