use crate::denoiser::{check_inputs, Condition, Denoiser};
use crate::error::Result;
use crate::scalar::Scalar;

/// `F ≡ c`, independent of input, timestep and condition.
#[derive(Clone, Debug)]
pub struct ConstantDenoiser<T> {
    value: Vec<T>,
}

impl<T: Scalar> ConstantDenoiser<T> {
    pub fn new(value: Vec<T>) -> Self {
        Self { value }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![T::zero(); dim])
    }
}

impl<T: Scalar> Denoiser<T> for ConstantDenoiser<T> {
    fn latent_dim(&self) -> usize {
        self.value.len()
    }

    fn eval(&self, z: &[T], _t: usize, cond: &Condition<T>) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        Ok(self.value.clone())
    }

    fn vjp(&self, z: &[T], _t: usize, cond: &Condition<T>, v: &[T]) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        crate::error::check_len("cotangent", self.value.len(), v.len())?;
        Ok(vec![T::zero(); z.len()])
    }

    fn supports_exact_vjp(&self) -> bool {
        true
    }
}

/// `F(z) = a · z` for every timestep.
#[derive(Clone, Debug)]
pub struct ScaledDenoiser<T> {
    dim: usize,
    scale: T,
}

impl<T: Scalar> ScaledDenoiser<T> {
    pub fn new(dim: usize, scale: T) -> Self {
        Self { dim, scale }
    }
}

impl<T: Scalar> Denoiser<T> for ScaledDenoiser<T> {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &[T], _t: usize, cond: &Condition<T>) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        Ok(z.iter().map(|&x| self.scale * x).collect())
    }

    fn vjp(&self, z: &[T], _t: usize, cond: &Condition<T>, v: &[T]) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        crate::error::check_len("cotangent", self.dim, v.len())?;
        Ok(v.iter().map(|&x| self.scale * x).collect())
    }

    fn supports_exact_vjp(&self) -> bool {
        true
    }
}
