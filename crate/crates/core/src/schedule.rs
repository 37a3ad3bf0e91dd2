//! Noise schedules, cumulative products and per-step sampler coefficients.
//!
//! Timesteps are 1-based (`1..=t_train`). Timestep 0 denotes the clean latent
//! and carries the empty-product convention `ᾱ_0 = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a schedule was built; stored in model files so it can be rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleParams {
    Linear {
        t_train: usize,
        beta_start: f64,
        beta_end: f64,
    },
    Explicit {
        betas: Vec<f64>,
    },
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams::Linear {
            t_train: 100,
            beta_start: 1e-4,
            beta_end: 0.05,
        }
    }
}

impl ScheduleParams {
    pub fn build<T: Scalar>(&self) -> Result<NoiseSchedule<T>> {
        match *self {
            ScheduleParams::Linear {
                t_train,
                beta_start,
                beta_end,
            } => NoiseSchedule::linear(t_train, T::lit(beta_start), T::lit(beta_end)),
            ScheduleParams::Explicit { ref betas } => {
                NoiseSchedule::from_betas(betas.iter().map(|&b| T::lit(b)).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    betas: Vec<T>,
    /// `ᾱ_0 ..= ᾱ_T`, index 0 holds the empty product.
    alpha_bars: Vec<T>,
    params: ScheduleParams,
}

/// Coefficients `(φ, ψ, σ)` of one backward step `z_prev = φ z + ψ F + σ ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoefficients<T> {
    pub phi: T,
    pub psi: T,
    pub sigma: T,
    pub t: usize,
    pub t_prev: usize,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Betas interpolated linearly between the two endpoints, inclusive.
    pub fn linear(t_train: usize, beta_start: T, beta_end: T) -> Result<Self> {
        if t_train == 0 {
            return Err(Error::InvalidParameter("t_train must be at least 1".into()));
        }
        if !(beta_start > T::zero() && beta_start <= beta_end && beta_end < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas = if t_train == 1 {
            vec![beta_start]
        } else {
            let span = T::from_count(t_train - 1);
            (0..t_train)
                .map(|i| beta_start + (beta_end - beta_start) * T::from_count(i) / span)
                .collect()
        };
        let mut schedule = Self::from_betas(betas)?;
        schedule.params = ScheduleParams::Linear {
            t_train,
            beta_start: beta_start.as_f64(),
            beta_end: beta_end.as_f64(),
        };
        Ok(schedule)
    }

    pub fn from_betas(betas: Vec<T>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidParameter("empty beta sequence".into()));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > T::zero() && b < T::one()))
        {
            return Err(Error::InvalidParameter(format!("beta_{} = {b} outside (0, 1)", i + 1)));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(T::one());
        let mut acc = T::one();
        for &b in &betas {
            acc *= T::one() - b;
            alpha_bars.push(acc);
        }
        if acc <= T::zero() {
            return Err(Error::InvalidParameter("alpha_bar underflowed to zero".into()));
        }
        let params = ScheduleParams::Explicit {
            betas: betas.iter().map(|b| b.as_f64()).collect(),
        };
        Ok(Self {
            betas,
            alpha_bars,
            params,
        })
    }

    pub fn t_train(&self) -> usize {
        self.betas.len()
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    /// `ᾱ_1 ..= ᾱ_T` (without the stored `ᾱ_0 = 1`).
    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bars[1..]
    }

    /// `β_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> Result<T> {
        self.check_step(t)?;
        Ok(self.betas[t - 1])
    }

    /// `ᾱ_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> Result<T> {
        self.alpha_bars.get(t).copied().ok_or(Error::Bounds {
            t,
            min: 0,
            max: self.t_train(),
        })
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if (1..=self.t_train()).contains(&t) {
            Ok(())
        } else {
            Err(Error::Bounds {
                t,
                min: 1,
                max: self.t_train(),
            })
        }
    }

    /// Backward-step coefficients for the grid transition `t → t_prev`.
    ///
    /// `σ` uses `β_t` of the current step even on strided grids; only the
    /// `eta = 0` path is used by the inversion methods.
    pub fn coefficients(&self, t: usize, t_prev: usize, eta: T) -> Result<StepCoefficients<T>> {
        if t_prev >= t {
            return Err(Error::Ordering { t, t_prev });
        }
        if !(eta >= T::zero() && eta <= T::one()) {
            return Err(Error::InvalidParameter(format!("eta = {eta} outside [0, 1]")));
        }
        let beta = self.beta(t)?;
        let ab_t = self.alpha_bars[t];
        let ab_prev = self.alpha_bars[t_prev];
        let phi = (ab_prev / ab_t).sqrt();
        let sigma = if eta == T::zero() {
            T::zero()
        } else {
            eta * (beta * (T::one() - ab_prev) / (T::one() - ab_t)).sqrt()
        };
        let psi =
            (T::one() - ab_prev - sigma * sigma).max(T::zero()).sqrt() - ((T::one() - ab_t) * ab_prev / ab_t).sqrt();
        Ok(StepCoefficients {
            phi,
            psi,
            sigma,
            t,
            t_prev,
        })
    }

    /// `(φ_{0,δt}, ψ_{0,δt})` for the skip round trip between timestep 0 and `dt`.
    pub fn skip_coefficients(&self, dt: usize) -> Result<(T, T)> {
        self.check_step(dt)?;
        let ab0 = self.alpha_bars[0];
        let ab = self.alpha_bars[dt];
        let phi = (ab0 / ab).sqrt();
        let psi = (T::one() - ab0).sqrt() - ((T::one() - ab) * ab0 / ab).sqrt();
        Ok((phi, psi))
    }

    /// `s` inference steps evenly strided over `1..=T`, ending at `T`.
    pub fn uniform_grid(&self, s: usize) -> Result<TimestepGrid> {
        let t_train = self.t_train();
        if s == 0 || s > t_train {
            return Err(Error::InvalidParameter(format!(
                "inference steps {s} must lie in 1..={t_train}"
            )));
        }
        TimestepGrid::new((1..=s).map(|i| i * t_train / s).collect(), t_train)
    }
}

/// Strictly increasing inference timesteps, a subsequence of `1..=T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestepGrid {
    steps: Vec<usize>,
}

impl TimestepGrid {
    pub fn new(steps: Vec<usize>, t_train: usize) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidParameter("empty timestep grid".into()));
        }
        if steps[0] == 0 || *steps.last().unwrap() > t_train {
            return Err(Error::InvalidParameter(format!("grid steps must lie in 1..={t_train}")));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("grid steps must be strictly increasing".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Spacing of the first transition, `0 → steps[0]`.
    pub fn stride(&self) -> usize {
        self.steps[0]
    }

    /// `(t_prev, t)` pairs in inversion order, starting from `(0, steps[0])`.
    pub fn transitions(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> + '_ {
        (0..self.steps.len()).map(move |i| {
            let prev = if i == 0 { 0 } else { self.steps[i - 1] };
            (prev, self.steps[i])
        })
    }
}
