//! Adam and a finite-difference gradient checker.

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Bias-corrected Adam state for one optimized vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub lr: T,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
    pub fn new(dim: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            step_count: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            lr,
        }
    }

    /// Applies one update to `x` in place.
    pub fn step(&mut self, x: &mut [T], grad: &[T]) -> Result<()> {
        check_len("adam parameters", self.m.len(), x.len())?;
        check_len("adam gradient", self.m.len(), grad.len())?;
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("adam gradient".into()));
        }
        self.step_count += 1;
        let n = i32::try_from(self.step_count).unwrap_or(i32::MAX);
        let c1 = T::one() - self.beta1.powi(n);
        let c2 = T::one() - self.beta2.powi(n);
        for (((xi, &g), m), v) in x.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (T::one() - self.beta1) * g;
            *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *xi -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Central-difference gradient with per-coordinate step `h_rel (1 + |x_i|)`.
pub fn finite_difference_gradient<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x: &[T], h_rel: T) -> Result<Vec<T>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = h_rel * (T::one() + x[i].abs());
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        out.push((plus - minus) / (h + h));
    }
    Ok(out)
}

/// Largest per-coordinate relative error `|g_i − fd_i| / max(|fd_i|, 1e-12)`
/// of a claimed gradient against central finite differences.
pub fn gradient_check<T: Scalar>(f: impl FnMut(&[T]) -> T, grad: &[T], x: &[T], h_rel: T) -> Result<T> {
    check_len("claimed gradient", x.len(), grad.len())?;
    let fd = finite_difference_gradient(f, x, h_rel)?;
    let floor = T::lit(1e-12);
    Ok(fd
        .iter()
        .zip(grad)
        .map(|(&n, &g)| (g - n).abs() / n.abs().max(floor))
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(1, 0.001f64);
        let mut x = [0.0];
        s.step(&mut x, &[1.0]).unwrap();
        assert!((x[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_only_decays_moments() {
        let mut s = AdamState::new(2, 0.01);
        let mut x = [1.0, -2.0];
        s.step(&mut x, &[0.5, -0.5]).unwrap();
        let (m, v, before) = (s.m.clone(), s.v.clone(), x);
        s.step(&mut x, &[0.0, 0.0]).unwrap();
        assert_eq!(s.m, vec![0.9 * m[0], 0.9 * m[1]]);
        assert_eq!(s.v, vec![0.999 * v[0], 0.999 * v[1]]);
        // moments are non-zero, so x still drifts; with fresh state it stays put
        let mut fresh = AdamState::new(2, 0.01);
        let mut y = before;
        fresh.step(&mut y, &[0.0, 0.0]).unwrap();
        assert_eq!(y, before);
    }

    #[test]
    fn deterministic_and_lr_covariant() {
        let run = |lr: f64| {
            let mut s = AdamState::new(3, lr);
            let mut x = [0.3, -0.1, 2.0];
            s.step(&mut x, &[0.2, -1.5, 3.0]).unwrap();
            x
        };
        assert_eq!(run(0.01), run(0.01));
        let a = run(0.01);
        let b = run(0.02);
        let base = [0.3, -0.1, 2.0];
        for i in 0..3 {
            let da = a[i] - base[i];
            let db = b[i] - base[i];
            assert!((db - 2.0 * da).abs() <= 1e-15 * db.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut s = AdamState::new(1, 0.1);
        let mut x = [0.0];
        assert!(s.step(&mut x, &[f64::NAN]).is_err());
        assert!(s.step(&mut x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_check_cases() {
        let square = |x: &[f64]| x[0] * x[0];
        assert!(gradient_check(square, &[6.0], &[3.0], 1e-4).unwrap() <= 1e-8);
        let wrong = gradient_check(square, &[9.0], &[3.0], 1e-4).unwrap();
        assert!((wrong - 0.5).abs() < 1e-6);
        let constant = |_: &[f64]| 4.2;
        assert_eq!(gradient_check(constant, &[0.0, 0.0], &[1.0, -1.0], 1e-4).unwrap(), 0.0);
        let bad = |x: &[f64]| if x[0] > 3.0 { f64::INFINITY } else { 0.0 };
        assert!(gradient_check(bad, &[0.0], &[3.0], 1e-4).is_err());
    }
}
