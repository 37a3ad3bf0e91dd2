//! Forward noising and the deterministic DDIM generation / inversion steps.

use serde::{Deserialize, Serialize};

use crate::denoiser::{cfg_eval, Condition, Denoiser};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::schedule::{NoiseSchedule, TimestepGrid};

/// `√ᾱ_t z0 + √(1−ᾱ_t) ε`. `t = 0` returns `z0`.
pub fn forward_noise<T: Scalar>(schedule: &NoiseSchedule<T>, z0: &[T], t: usize, eps: &[T]) -> Result<Vec<T>> {
    check_len("noise", z0.len(), eps.len())?;
    let ab = schedule.alpha_bar(t)?;
    let (a, b) = (ab.sqrt(), (T::one() - ab).sqrt());
    Ok(z0.iter().zip(eps).map(|(&z, &e)| a * z + b * e).collect())
}

/// One Markov noising step `√(1−β_t) z_{t−1} + √β_t ε`.
pub fn forward_step<T: Scalar>(schedule: &NoiseSchedule<T>, z_prev: &[T], t: usize, eps: &[T]) -> Result<Vec<T>> {
    check_len("noise", z_prev.len(), eps.len())?;
    let beta = schedule.beta(t)?;
    let (a, b) = ((T::one() - beta).sqrt(), beta.sqrt());
    Ok(z_prev.iter().zip(eps).map(|(&z, &e)| a * z + b * e).collect())
}

/// A denoiser bound to a schedule, condition and guidance scale.
#[derive(Clone)]
pub struct Sampler<'a, T: Scalar> {
    pub model: &'a dyn Denoiser<T>,
    pub schedule: &'a NoiseSchedule<T>,
    pub condition: Condition<T>,
    pub guidance: T,
}

impl<'a, T: Scalar> Sampler<'a, T> {
    /// Unconditional sampler with `w = 1`.
    pub fn new(model: &'a dyn Denoiser<T>, schedule: &'a NoiseSchedule<T>) -> Self {
        Self {
            model,
            schedule,
            condition: Condition::Unconditional,
            guidance: T::one(),
        }
    }

    pub fn with_condition(mut self, condition: Condition<T>, guidance: T) -> Self {
        self.condition = condition;
        self.guidance = guidance;
        self
    }

    pub fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    /// Guided noise prediction at `(z, t)`.
    pub fn eps(&self, z: &[T], t: usize) -> Result<Vec<T>> {
        self.schedule.check_step(t)?;
        cfg_eval(self.model, z, t, &self.condition, self.guidance)
    }

    /// `φ z_t + ψ F(z_t, t) + σ ε`; with `eta = 0` the noise argument is ignored.
    pub fn generate_step(&self, z: &[T], t: usize, t_prev: usize, eta: T, noise: Option<&[T]>) -> Result<Vec<T>> {
        let k = self.schedule.coefficients(t, t_prev, eta)?;
        let noise = if eta > T::zero() {
            let n = noise.ok_or(Error::MissingNoise)?;
            check_len("noise", z.len(), n.len())?;
            Some(n)
        } else {
            None
        };
        let e = self.eps(z, t)?;
        let mut out: Vec<T> = z.iter().zip(&e).map(|(&z, &e)| k.phi * z + k.psi * e).collect();
        if let Some(n) = noise {
            for (o, &n) in out.iter_mut().zip(n) {
                *o += k.sigma * n;
            }
        }
        Ok(out)
    }

    /// Deterministic DDIM step `t → t_prev`.
    pub fn ddim_step(&self, z: &[T], t: usize, t_prev: usize) -> Result<Vec<T>> {
        self.generate_step(z, t, t_prev, T::zero(), None)
    }

    /// `(1/φ) z_prev − (ψ/φ) F(z_prev, t)`.
    pub fn invert_step(&self, z_prev: &[T], t_prev: usize, t: usize) -> Result<Vec<T>> {
        let k = self.schedule.coefficients(t, t_prev, T::zero())?;
        let e = self.eps(z_prev, t)?;
        let a = T::one() / k.phi;
        let b = k.psi / k.phi;
        Ok(z_prev.iter().zip(&e).map(|(&z, &e)| a * z - b * e).collect())
    }

    /// Deterministic generation sweep from `z_T` down to timestep 0.
    pub fn generate_trajectory(&self, grid: &TimestepGrid, z_top: &[T]) -> Result<Trajectory<T>> {
        self.check_grid(grid)?;
        check_len("latent", self.latent_dim(), z_top.len())?;
        let mut traj = self.empty_trajectory(grid, Direction::Generation);
        let mut z = z_top.to_vec();
        traj.push(grid.steps()[grid.len() - 1], z.clone());
        for (t_prev, t) in grid.transitions().rev() {
            z = self.ddim_step(&z, t, t_prev)?;
            traj.push(t_prev, z.clone());
        }
        Ok(traj)
    }

    /// Plain DDIM inversion sweep from `z_0` up to the last grid step.
    pub fn invert_trajectory(&self, grid: &TimestepGrid, z0: &[T]) -> Result<Trajectory<T>> {
        self.check_grid(grid)?;
        check_len("latent", self.latent_dim(), z0.len())?;
        let mut traj = self.empty_trajectory(grid, Direction::Inversion);
        let mut z = z0.to_vec();
        traj.push(0, z.clone());
        for (t_prev, t) in grid.transitions() {
            z = self.invert_step(&z, t_prev, t)?;
            traj.push(t, z.clone());
        }
        Ok(traj)
    }

    pub(crate) fn check_grid(&self, grid: &TimestepGrid) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty timestep grid".into()));
        }
        let last = grid.steps()[grid.len() - 1];
        self.schedule.check_step(last)
    }

    pub(crate) fn empty_trajectory(&self, grid: &TimestepGrid, direction: Direction) -> Trajectory<T> {
        Trajectory {
            direction,
            entries: Vec::with_capacity(grid.len() + 1),
            grid: grid.clone(),
            guidance: self.guidance,
            condition: self.condition.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Generation,
    Inversion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry<T> {
    pub t: usize,
    pub z: Vec<T>,
}

/// Timestep-ordered latents of one sweep, including timestep 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub direction: Direction,
    pub entries: Vec<TrajectoryEntry<T>>,
    pub grid: TimestepGrid,
    pub guidance: T,
    pub condition: Condition<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub(crate) fn push(&mut self, t: usize, z: Vec<T>) {
        self.entries.push(TrajectoryEntry { t, z });
    }

    pub fn first(&self) -> Option<&[T]> {
        self.entries.first().map(|e| e.z.as_slice())
    }

    pub fn last(&self) -> Option<&[T]> {
        self.entries.last().map(|e| e.z.as_slice())
    }

    pub fn at(&self, t: usize) -> Option<&[T]> {
        self.entries.iter().find(|e| e.t == t).map(|e| e.z.as_slice())
    }

    pub fn timesteps(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.t).collect()
    }

    /// Checks direction-consistent strict monotonicity and a shared latent width.
    pub fn validate(&self) -> Result<()> {
        let dim = self.entries.first().map_or(0, |e| e.z.len());
        for e in &self.entries {
            check_len("trajectory latent", dim, e.z.len())?;
        }
        let ordered = self.entries.windows(2).all(|w| match self.direction {
            Direction::Generation => w[0].t > w[1].t,
            Direction::Inversion => w[0].t < w[1].t,
        });
        if ordered {
            Ok(())
        } else {
            Err(Error::GridMismatch("trajectory timesteps are not monotone".into()))
        }
    }

    /// The `[{t, z}, …]` list used for plotting.
    pub fn entries_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.entries)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{ConstantDenoiser, ScaledDenoiser};

    fn toy() -> NoiseSchedule<f64> {
        NoiseSchedule::<f64>::linear(3, 0.1, 0.1).unwrap()
    }

    #[test]
    fn forward_noise_hand_values() {
        let s = toy();
        assert!((forward_noise(&s, &[1.0], 2, &[0.0]).unwrap()[0] - 0.9).abs() < 1e-15);
        let v = forward_noise(&s, &[1.0], 2, &[1.0]).unwrap()[0];
        assert!((v - (0.9 + 0.19f64.sqrt())).abs() < 1e-15);
        assert_eq!(forward_noise(&s, &[0.7], 0, &[3.0]).unwrap(), vec![0.7]);
        assert!(forward_noise(&s, &[1.0], 2, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_step_hand_values() {
        let s = toy();
        let z1 = forward_step(&s, &[1.0], 1, &[0.0]).unwrap();
        assert!((z1[0] - 0.9f64.sqrt()).abs() < 1e-15);
        let z2 = forward_step(&s, &z1, 2, &[0.0]).unwrap();
        assert!((z2[0] - 0.9).abs() < 1e-15);
        assert!((forward_step(&s, &[0.0], 2, &[1.0]).unwrap()[0] - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn generate_and_invert_hand_values() {
        let s = toy();
        let zero = ConstantDenoiser::zeros(1);
        let sampler = Sampler::new(&zero, &s);
        let phi = (0.9f64 / 0.81).sqrt();
        assert!((sampler.ddim_step(&[1.0], 2, 1).unwrap()[0] - phi).abs() < 1e-15);
        assert!((sampler.invert_step(&[1.0], 1, 2).unwrap()[0] - 1.0 / phi).abs() < 1e-15);
        assert!(matches!(sampler.invert_step(&[1.0], 2, 2), Err(Error::Ordering { .. })));
    }

    #[test]
    fn eta_zero_ignores_noise_and_eta_positive_requires_it() {
        let s = toy();
        let m = ScaledDenoiser::new(2, 0.5);
        let sampler = Sampler::new(&m, &s);
        let a = sampler.generate_step(&[0.3, -0.2], 3, 1, 0.0, None).unwrap();
        let b = sampler
            .generate_step(&[0.3, -0.2], 3, 1, 0.0, Some(&[5.0, 5.0]))
            .unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            sampler.generate_step(&[0.3, -0.2], 3, 1, 0.5, None),
            Err(Error::MissingNoise)
        ));
        let c = sampler
            .generate_step(&[0.3, -0.2], 3, 1, 0.5, Some(&[1.0, 1.0]))
            .unwrap();
        assert!(c.iter().zip(&a).all(|(c, a)| c != a));
    }

    #[test]
    fn constant_denoiser_steps_are_exact_inverses() {
        let s = toy();
        let m = ConstantDenoiser::new(vec![0.4, -1.3]);
        let sampler = Sampler::new(&m, &s);
        let z = [0.25, 1.75];
        let back = sampler
            .invert_step(&sampler.ddim_step(&z, 3, 1).unwrap(), 1, 3)
            .unwrap();
        let fwd = sampler
            .ddim_step(&sampler.invert_step(&z, 1, 3).unwrap(), 3, 1)
            .unwrap();
        for i in 0..2 {
            assert!((back[i] - z[i]).abs() < 1e-12);
            assert!((fwd[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_denoiser_sweep_scales_by_product_of_phis() {
        let s = NoiseSchedule::<f64>::linear(100, 1e-4, 0.05).unwrap();
        let grid = s.uniform_grid(50).unwrap();
        let zero = ConstantDenoiser::zeros(1);
        let sampler = Sampler::new(&zero, &s);
        let traj = sampler.generate_trajectory(&grid, &[1.0]).unwrap();
        traj.validate().unwrap();
        assert_eq!(traj.entries.len(), 51);
        let expected: f64 = grid
            .transitions()
            .map(|(p, t)| s.coefficients(t, p, 0.0).unwrap().phi)
            .product();
        assert!((traj.last().unwrap()[0] - expected).abs() < 1e-12);
        assert!((expected - 1.0 / s.alpha_bar(100).unwrap().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_step_grid_and_ordering() {
        let s = toy();
        let grid = TimestepGrid::new(vec![3], 3).unwrap();
        let m = ScaledDenoiser::new(1, 0.5);
        let sampler = Sampler::new(&m, &s);
        let inv = sampler.invert_trajectory(&grid, &[1.0]).unwrap();
        assert_eq!(inv.timesteps(), vec![0, 3]);
        let gen = sampler.generate_trajectory(&grid, inv.last().unwrap()).unwrap();
        assert_eq!(gen.timesteps(), vec![3, 0]);
        inv.validate().unwrap();
        gen.validate().unwrap();
        let json = inv.entries_json().unwrap();
        assert!(json.starts_with("[{\"t\":0,\"z\":[1.0]}"));
    }
}
