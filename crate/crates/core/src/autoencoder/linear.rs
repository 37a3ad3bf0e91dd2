use crate::autoencoder::{Autoencoder, Image, ImageShape};
use crate::error::{check_len, Error, Result};
use crate::linalg::{matvec, matvec_t, symmetric_eigen};
use crate::scalar::Scalar;

/// `E(x) = W (x − μ)`, `D(z) = μ + W⁺ z`.
///
/// When fitted by PCA the rows of `W` are orthonormal and `W⁺ = Wᵀ`, so the
/// round trip is the orthogonal projection onto the retained subspace.
#[derive(Clone, Debug)]
pub struct LinearAutoencoder<T> {
    shape: ImageShape,
    latent_dim: usize,
    /// `latent_dim × pixel_count`, row-major.
    projection: Vec<T>,
    /// `pixel_count × latent_dim`, row-major.
    reconstruction: Vec<T>,
    mean: Vec<T>,
}

impl<T: Scalar> LinearAutoencoder<T> {
    pub fn new(
        shape: ImageShape,
        latent_dim: usize,
        projection: Vec<T>,
        reconstruction: Vec<T>,
        mean: Vec<T>,
    ) -> Result<Self> {
        let n = shape.pixel_count();
        if latent_dim == 0 || latent_dim > n {
            return Err(Error::InvalidParameter(format!(
                "latent_dim {latent_dim} must lie in 1..={n}"
            )));
        }
        check_len("projection", latent_dim * n, projection.len())?;
        check_len("reconstruction", latent_dim * n, reconstruction.len())?;
        check_len("mean image", n, mean.len())?;
        Ok(Self {
            shape,
            latent_dim,
            projection,
            reconstruction,
            mean,
        })
    }

    pub fn projection(&self) -> &[T] {
        &self.projection
    }

    pub fn reconstruction(&self) -> &[T] {
        &self.reconstruction
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }
}

impl<T: Scalar> Autoencoder<T> for LinearAutoencoder<T> {
    fn image_shape(&self) -> ImageShape {
        self.shape
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn encode(&self, x: &Image<T>) -> Result<Vec<T>> {
        x.check_shape(self.shape)?;
        let centered: Vec<T> = x.data.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        Ok(matvec(
            &self.projection,
            self.latent_dim,
            self.shape.pixel_count(),
            &centered,
        ))
    }

    fn decode(&self, z: &[T]) -> Result<Image<T>> {
        check_len("latent", self.latent_dim, z.len())?;
        let n = self.shape.pixel_count();
        let mut data = matvec(&self.reconstruction, n, self.latent_dim, z);
        for (d, &m) in data.iter_mut().zip(&self.mean) {
            *d += m;
        }
        Image::new(self.shape, data)
    }

    fn decoder_vjp(&self, z: &[T], v: &Image<T>) -> Result<Vec<T>> {
        check_len("latent", self.latent_dim, z.len())?;
        v.check_shape(self.shape)?;
        Ok(matvec_t(
            &self.reconstruction,
            self.shape.pixel_count(),
            self.latent_dim,
            &v.data,
        ))
    }

    fn supports_exact_vjp(&self) -> bool {
        true
    }
}

/// PCA fit: `W` holds the top `latent_dim` principal directions of the
/// centered images, `W⁺ = Wᵀ`.
pub fn fit_linear_autoencoder<T: Scalar>(images: &[Image<T>], latent_dim: usize) -> Result<LinearAutoencoder<T>> {
    if images.len() < 2 {
        return Err(Error::Fit("need at least two images".into()));
    }
    let shape = images[0].shape();
    for img in images {
        img.check_shape(shape)?;
    }
    let n = shape.pixel_count();
    if latent_dim == 0 || latent_dim > n {
        return Err(Error::InvalidParameter(format!(
            "latent_dim {latent_dim} must lie in 1..={n}"
        )));
    }
    let count = T::from_count(images.len());
    let mut mean = vec![T::zero(); n];
    for img in images {
        for (m, &v) in mean.iter_mut().zip(&img.data) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);

    let mut cov = vec![T::zero(); n * n];
    let mut centered = vec![T::zero(); n];
    for img in images {
        for ((c, &v), &m) in centered.iter_mut().zip(&img.data).zip(&mean) {
            *c = v - m;
        }
        for r in 0..n {
            let a = centered[r];
            if a == T::zero() {
                continue;
            }
            for (dst, &b) in cov[r * n + r..(r + 1) * n].iter_mut().zip(&centered[r..]) {
                *dst += a * b;
            }
        }
    }
    let total_variance = (0..n).map(|i| cov[i * n + i]).sum::<T>();
    if !(total_variance > T::zero()) {
        return Err(Error::Fit("images have zero variance".into()));
    }
    for r in 0..n {
        for c in 0..r {
            cov[r * n + c] = cov[c * n + r];
        }
    }

    let (_, vectors) = symmetric_eigen(&cov, n);
    let mut projection = vec![T::zero(); latent_dim * n];
    for k in 0..latent_dim {
        for p in 0..n {
            projection[k * n + p] = vectors[p * n + k];
        }
    }
    let mut reconstruction = vec![T::zero(); n * latent_dim];
    for k in 0..latent_dim {
        for p in 0..n {
            reconstruction[p * latent_dim + k] = projection[k * n + p];
        }
    }
    LinearAutoencoder::new(shape, latent_dim, projection, reconstruction, mean)
}
