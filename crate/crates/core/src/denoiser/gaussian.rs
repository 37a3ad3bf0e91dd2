use crate::denoiser::{check_inputs, Condition, Denoiser};
use crate::error::{check_len, Error, Result};
use crate::linalg::{matvec, matvec_t, symmetric_eigen};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

/// Exact ε-predictor for Gaussian data `x ~ N(μ, Σ)`.
///
/// With `z_t = √ᾱ x + √(1−ᾱ) ε`, the posterior mean of the noise is
/// `√(1−ᾱ) (ᾱΣ + (1−ᾱ)I)⁻¹ (z − √ᾱ μ)`, affine in `z` with a symmetric
/// Jacobian. Class labels select per-class means sharing one covariance.
#[derive(Clone, Debug)]
pub struct LinearGaussianDenoiser<T> {
    schedule: NoiseSchedule<T>,
    mean: Vec<T>,
    class_means: Vec<Vec<T>>,
    covariance: Vec<T>,
    eigenvalues: Vec<T>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    eigenvectors: Vec<T>,
}

impl<T: Scalar> LinearGaussianDenoiser<T> {
    pub fn new(schedule: NoiseSchedule<T>, mean: Vec<T>, covariance: Vec<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidParameter("empty mean vector".into()));
        }
        check_len("covariance", d * d, covariance.len())?;
        let tol = T::lit(1e-12);
        for r in 0..d {
            for c in r + 1..d {
                let (a, b) = (covariance[r * d + c], covariance[c * d + r]);
                if (a - b).abs() > tol * (T::one() + a.abs().max(b.abs())) {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
        }
        let (eigenvalues, eigenvectors) = symmetric_eigen(&covariance, d);
        if !eigenvalues.iter().all(|&l| l > T::zero() && l.is_finite()) {
            return Err(Error::InvalidParameter("covariance is not positive definite".into()));
        }
        Ok(Self {
            schedule,
            mean,
            class_means: Vec::new(),
            covariance,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Unit-covariance, zero-mean data.
    pub fn standard(schedule: NoiseSchedule<T>, dim: usize) -> Result<Self> {
        let mut cov = vec![T::zero(); dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = T::one();
        }
        Self::new(schedule, vec![T::zero(); dim], cov)
    }

    /// Fits mean and covariance to samples, adding `ridge · I`.
    pub fn fit(schedule: NoiseSchedule<T>, samples: &[Vec<T>], ridge: T) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Fit("need at least two samples".into()));
        }
        let d = samples[0].len();
        for s in samples {
            check_len("sample", d, s.len())?;
        }
        let n = T::from_count(samples.len());
        let mut mean = vec![T::zero(); d];
        for s in samples {
            for (m, &x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![T::zero(); d * d];
        for s in samples {
            for r in 0..d {
                let dr = s[r] - mean[r];
                for c in r..d {
                    cov[r * d + c] += dr * (s[c] - mean[c]);
                }
            }
        }
        for r in 0..d {
            for c in r..d {
                let v = cov[r * d + c] / (n - T::one());
                cov[r * d + c] = v;
                cov[c * d + r] = v;
            }
            cov[r * d + r] += ridge;
        }
        Self::new(schedule, mean, cov)
    }

    /// Adds one mean per class label; label `k` uses `means[k]`.
    pub fn with_class_means(mut self, means: Vec<Vec<T>>) -> Result<Self> {
        for m in &means {
            check_len("class mean", self.mean.len(), m.len())?;
        }
        self.class_means = means;
        Ok(self)
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn class_means(&self) -> &[Vec<T>] {
        &self.class_means
    }

    pub fn covariance(&self) -> &[T] {
        &self.covariance
    }

    fn mean_for(&self, cond: &Condition<T>) -> &[T] {
        match cond {
            Condition::ClassLabel(k) => &self.class_means[*k],
            _ => &self.mean,
        }
    }

    /// `√(1−ᾱ_t) K_t⁻¹ y` with `K_t = ᾱ_t Σ + (1−ᾱ_t) I`.
    fn apply_gain(&self, t: usize, y: &[T]) -> Result<Vec<T>> {
        self.schedule.check_step(t)?;
        let ab = self.schedule.alpha_bar(t)?;
        let d = self.mean.len();
        let scale = (T::one() - ab).sqrt();
        let mut coords = matvec_t(&self.eigenvectors, d, d, y);
        for (c, &l) in coords.iter_mut().zip(&self.eigenvalues) {
            *c /= ab * l + (T::one() - ab);
        }
        Ok(matvec(&self.eigenvectors, d, d, &coords)
            .into_iter()
            .map(|x| scale * x)
            .collect())
    }
}

impl<T: Scalar> Denoiser<T> for LinearGaussianDenoiser<T> {
    fn latent_dim(&self) -> usize {
        self.mean.len()
    }

    fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    fn eval(&self, z: &[T], t: usize, cond: &Condition<T>) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        let root_ab = self.schedule.alpha_bar(t)?.sqrt();
        let mean = self.mean_for(cond);
        let y: Vec<T> = z.iter().zip(mean).map(|(&z, &m)| z - root_ab * m).collect();
        self.apply_gain(t, &y)
    }

    fn vjp(&self, z: &[T], t: usize, cond: &Condition<T>, v: &[T]) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        check_len("cotangent", self.mean.len(), v.len())?;
        // the Jacobian is symmetric
        self.apply_gain(t, v)
    }

    fn supports_exact_vjp(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::finite_difference_vjp;

    fn toy() -> NoiseSchedule<f64> {
        NoiseSchedule::<f64>::linear(3, 0.1, 0.1).unwrap()
    }

    #[test]
    fn unit_gaussian_closed_form() {
        let m = LinearGaussianDenoiser::standard(toy(), 1).unwrap();
        let eps = m.eval(&[1.0], 2, &Condition::Unconditional).unwrap();
        assert!((eps[0] - 0.4358898943540674).abs() < 1e-12);
        let g = m.vjp(&[1.0], 2, &Condition::Unconditional, &[1.0]).unwrap();
        assert!((g[0] - 0.19f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.vjp(&[1.0], 2, &Condition::Unconditional, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn unit_gaussian_all_timesteps() {
        let s = NoiseSchedule::<f64>::linear(100, 1e-4, 0.05).unwrap();
        let m = LinearGaussianDenoiser::standard(s.clone(), 3).unwrap();
        let z = [0.3, -1.2, 2.5];
        for t in 1..=100 {
            let eps = m.eval(&z, t, &Condition::Unconditional).unwrap();
            let k = (1.0 - s.alpha_bar(t).unwrap()).sqrt();
            for (e, zi) in eps.iter().zip(z) {
                assert!((e - k * zi).abs() <= 1e-12);
            }
        }
    }

    /// ε* = −√(1−ᾱ) ∇ log p_t(z), with the score taken by finite differences
    /// of the closed-form Gaussian marginal log-density.
    #[test]
    fn matches_finite_difference_score_of_marginal() {
        let s = NoiseSchedule::<f64>::linear(10, 0.01, 0.2).unwrap();
        let mean = vec![0.5, -0.25];
        let cov = vec![1.5, 0.4, 0.4, 0.7];
        let m = LinearGaussianDenoiser::new(s.clone(), mean.clone(), cov.clone()).unwrap();
        let z = [0.8, 0.1];
        for t in [1, 5, 10] {
            let ab = s.alpha_bar(t).unwrap();
            let k = [ab * cov[0] + 1.0 - ab, ab * cov[1], ab * cov[2], ab * cov[3] + 1.0 - ab];
            let det = k[0] * k[3] - k[1] * k[2];
            let log_p = |x: &[f64]| {
                let y = [x[0] - ab.sqrt() * mean[0], x[1] - ab.sqrt() * mean[1]];
                let q = (k[3] * y[0] * y[0] - 2.0 * k[1] * y[0] * y[1] + k[0] * y[1] * y[1]) / det;
                -0.5 * q
            };
            let h = 1e-5;
            let eps = m.eval(&z, t, &Condition::Unconditional).unwrap();
            for i in 0..2 {
                let mut p = z;
                let mut q = z;
                p[i] += h;
                q[i] -= h;
                let score = (log_p(&p) - log_p(&q)) / (2.0 * h);
                assert!((eps[i] + (1.0 - ab).sqrt() * score).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn exact_vjp_agrees_with_finite_differences() {
        let s = NoiseSchedule::<f64>::linear(10, 0.01, 0.2).unwrap();
        let m = LinearGaussianDenoiser::new(s, vec![0.1, 0.2], vec![2.0, -0.3, -0.3, 0.5]).unwrap();
        let c = Condition::Unconditional;
        let exact = m.vjp(&[0.4, -0.9], 7, &c, &[1.0, -2.0]).unwrap();
        let fd = finite_difference_vjp(&m, &[0.4, -0.9], 7, &c, &[1.0, -2.0]).unwrap();
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn class_means_shift_prediction() {
        let m = LinearGaussianDenoiser::standard(toy(), 1)
            .unwrap()
            .with_class_means(vec![vec![1.0]])
            .unwrap();
        let u = m.eval(&[1.0], 2, &Condition::Unconditional).unwrap()[0];
        let c = m.eval(&[1.0], 2, &Condition::ClassLabel(0)).unwrap()[0];
        assert!((u - c - 0.19f64.sqrt() * 0.9).abs() < 1e-12);
        assert!(m.eval(&[1.0], 2, &Condition::ClassLabel(1)).is_err());
    }

    #[test]
    fn rejects_bad_covariance() {
        assert!(LinearGaussianDenoiser::new(toy(), vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(LinearGaussianDenoiser::new(toy(), vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(LinearGaussianDenoiser::new(toy(), vec![0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn fit_recovers_sample_moments() {
        let samples = vec![vec![0.0, 1.0], vec![2.0, 1.0], vec![1.0, 4.0]];
        let m = LinearGaussianDenoiser::fit(toy(), &samples, 0.0).unwrap();
        assert_eq!(m.mean(), &[1.0, 2.0]);
        assert!((m.covariance()[0] - 1.0).abs() < 1e-15);
        assert!((m.covariance()[3] - 3.0).abs() < 1e-15);
        assert!((m.covariance()[1] - 0.0).abs() < 1e-15);
        assert!(LinearGaussianDenoiser::fit(toy(), &samples[..1], 0.0).is_err());
    }
}
