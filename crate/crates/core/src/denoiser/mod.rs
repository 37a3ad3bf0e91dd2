//! ε-prediction models `F(z, t, c)` with input gradients, plus classifier-free
//! guidance blending.

mod gaussian;
mod mlp;
mod stub;

pub use gaussian::LinearGaussianDenoiser;
pub use mlp::{train_mlp_denoiser, MlpConfig, MlpDenoiser, MlpTrainConfig, TrainReport, TrainingSet};
pub use stub::{ConstantDenoiser, ScaledDenoiser};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Conditioning signal. Text encoders are out of scope, so embeddings are
/// supplied directly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition<T> {
    #[default]
    Unconditional,
    ClassLabel(usize),
    Embedding(Vec<T>),
}

/// A noise predictor. `eval` must be a pure function of its inputs.
pub trait Denoiser<T: Scalar>: Send + Sync {
    fn latent_dim(&self) -> usize;

    /// Number of class labels accepted by [`Condition::ClassLabel`].
    fn num_classes(&self) -> usize {
        0
    }

    /// Width of vectors accepted by [`Condition::Embedding`]; 0 if unsupported.
    fn condition_width(&self) -> usize {
        0
    }

    fn eval(&self, z: &[T], t: usize, cond: &Condition<T>) -> Result<Vec<T>>;

    /// `vᵀ ∂F/∂z`. Defaults to central finite differences.
    fn vjp(&self, z: &[T], t: usize, cond: &Condition<T>, v: &[T]) -> Result<Vec<T>> {
        finite_difference_vjp(self, z, t, cond, v)
    }

    fn supports_exact_vjp(&self) -> bool {
        false
    }
}

/// Shape and condition validation shared by the implementations.
pub fn check_inputs<T: Scalar, D: Denoiser<T> + ?Sized>(model: &D, z: &[T], cond: &Condition<T>) -> Result<()> {
    check_len("latent", model.latent_dim(), z.len())?;
    match cond {
        Condition::Unconditional => Ok(()),
        Condition::ClassLabel(k) if *k < model.num_classes() => Ok(()),
        Condition::ClassLabel(k) => Err(Error::Condition(format!(
            "class {k} outside 0..{}",
            model.num_classes()
        ))),
        Condition::Embedding(e) if model.condition_width() == 0 => Err(Error::Condition(format!(
            "model does not accept embeddings (got width {})",
            e.len()
        ))),
        Condition::Embedding(e) => check_len("condition embedding", model.condition_width(), e.len()),
    }
}

/// Central-difference vector–Jacobian product with per-coordinate step
/// `h = 1e-4 (1 + |z_i|)`.
pub fn finite_difference_vjp<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    z: &[T],
    t: usize,
    cond: &Condition<T>,
    v: &[T],
) -> Result<Vec<T>> {
    check_len("cotangent", model.latent_dim(), v.len())?;
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let h = T::lit(1e-4) * (T::one() + z[i].abs());
        probe[i] = z[i] + h;
        let plus = model.eval(&probe, t, cond)?;
        probe[i] = z[i] - h;
        let minus = model.eval(&probe, t, cond)?;
        probe[i] = z[i];
        let column = plus
            .iter()
            .zip(&minus)
            .zip(v)
            .fold(T::zero(), |acc, ((&p, &m), &vi)| acc + vi * (p - m));
        out.push(column / (h + h));
    }
    Ok(out)
}

/// Classifier-free guidance blend `ε_u + w (ε_c − ε_u)`.
///
/// `w = 1` returns the conditional prediction unchanged and `w = 0` the
/// unconditional one, without evaluating the other branch.
pub fn cfg_eval<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    z: &[T],
    t: usize,
    cond: &Condition<T>,
    w: T,
) -> Result<Vec<T>> {
    if w == T::one() || *cond == Condition::Unconditional {
        return model.eval(z, t, cond);
    }
    let uncond = model.eval(z, t, &Condition::Unconditional)?;
    if w == T::zero() {
        return Ok(uncond);
    }
    let c = model.eval(z, t, cond)?;
    Ok(uncond.iter().zip(&c).map(|(&u, &c)| u + w * (c - u)).collect())
}

/// Vector–Jacobian product of [`cfg_eval`].
pub fn cfg_vjp<T: Scalar, D: Denoiser<T> + ?Sized>(
    model: &D,
    z: &[T],
    t: usize,
    cond: &Condition<T>,
    w: T,
    v: &[T],
) -> Result<Vec<T>> {
    if w == T::one() || *cond == Condition::Unconditional {
        return model.vjp(z, t, cond, v);
    }
    let uncond = model.vjp(z, t, &Condition::Unconditional, v)?;
    if w == T::zero() {
        return Ok(uncond);
    }
    let c = model.vjp(z, t, cond, v)?;
    Ok(uncond.iter().zip(&c).map(|(&u, &c)| u + w * (c - u)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ε_u = 0, ε_c = 1 everywhere.
    struct Switch;

    impl Denoiser<f64> for Switch {
        fn latent_dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn eval(&self, z: &[f64], _t: usize, cond: &Condition<f64>) -> Result<Vec<f64>> {
            check_inputs(self, z, cond)?;
            Ok(vec![match cond {
                Condition::Unconditional => 0.0,
                _ => 1.0,
            }])
        }
    }

    #[test]
    fn cfg_blend_is_affine_in_w() {
        let c = Condition::ClassLabel(1);
        assert_eq!(cfg_eval(&Switch, &[0.3], 1, &c, 7.5).unwrap(), vec![7.5]);
        assert_eq!(cfg_eval(&Switch, &[0.3], 1, &c, 1.0).unwrap(), vec![1.0]);
        assert_eq!(cfg_eval(&Switch, &[0.3], 1, &c, 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn condition_validation() {
        assert!(matches!(
            Switch.eval(&[0.0], 1, &Condition::ClassLabel(2)),
            Err(Error::Condition(_))
        ));
        assert!(Switch.eval(&[0.0], 1, &Condition::Embedding(vec![1.0])).is_err());
        assert!(matches!(
            Switch.eval(&[0.0, 1.0], 1, &Condition::Unconditional),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fallback_vjp_of_constant_model_is_zero() {
        let v = Switch.vjp(&[0.4], 1, &Condition::ClassLabel(0), &[1.0]).unwrap();
        assert_eq!(v, vec![0.0]);
    }
}
