use crate::autoencoder::{Autoencoder, Image, ImageShape};
use crate::error::{check_len, Result};
use crate::scalar::Scalar;

/// Pixel-space baseline: the latent is the flattened image.
#[derive(Clone, Debug)]
pub struct IdentityAutoencoder {
    shape: ImageShape,
}

impl IdentityAutoencoder {
    pub fn new(shape: ImageShape) -> Self {
        Self { shape }
    }
}

impl<T: Scalar> Autoencoder<T> for IdentityAutoencoder {
    fn image_shape(&self) -> ImageShape {
        self.shape
    }

    fn latent_dim(&self) -> usize {
        self.shape.pixel_count()
    }

    fn encode(&self, x: &Image<T>) -> Result<Vec<T>> {
        x.check_shape(self.shape)?;
        Ok(x.data.clone())
    }

    fn decode(&self, z: &[T]) -> Result<Image<T>> {
        Image::new(self.shape, z.to_vec())
    }

    fn decoder_vjp(&self, z: &[T], v: &Image<T>) -> Result<Vec<T>> {
        check_len("latent", self.shape.pixel_count(), z.len())?;
        v.check_shape(self.shape)?;
        Ok(v.data.clone())
    }

    fn supports_exact_vjp(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = ImageShape::new(2, 3, 1);
        let ae = IdentityAutoencoder::new(shape);
        let x = Image::new(shape, vec![0.1, 0.25, 0.3, 0.7, 0.9, 1.0]).unwrap();
        let z = ae.encode(&x).unwrap();
        assert_eq!(z, x.data);
        assert_eq!(Autoencoder::<f64>::decode(&ae, &z).unwrap(), x);
        assert_eq!(ae.decoder_vjp(&z, &x).unwrap(), x.data);
        assert!(Autoencoder::<f64>::decode(&ae, &z[..5]).is_err());
    }
}
