//! Latent bias optimization: per-step search for the inversion increment
//! `b = z_t − z_prev` such that one DDIM generation step from `z_prev + b`
//! lands back on `z_prev`.

use serde::{Deserialize, Serialize};

use crate::denoiser::cfg_vjp;
use crate::dynamics::{Direction, Sampler, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::linalg::{add, all_finite, mean_abs, norm_inf, sub};
use crate::optim::AdamState;
use crate::scalar::{signum0, Scalar};
use crate::schedule::TimestepGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LboMode {
    Gradient,
    Numerical,
    Hybrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LboConfig<T> {
    pub mode: LboMode,
    pub max_iters: usize,
    /// Threshold on the ∞-norm residual.
    pub tol: T,
    /// Adam learning rate for the gradient iterations.
    pub lr: T,
    /// Gradient iterations before switching to fixed-point sweeps (hybrid only).
    pub n_g: usize,
    pub guidance_w: T,
}

impl<T: Scalar> Default for LboConfig<T> {
    fn default() -> Self {
        Self::numerical()
    }
}

impl<T: Scalar> LboConfig<T> {
    pub fn numerical() -> Self {
        Self {
            mode: LboMode::Numerical,
            max_iters: 15,
            tol: T::lit(1e-8),
            lr: T::lit(1e-3),
            n_g: 5,
            guidance_w: T::one(),
        }
    }

    pub fn gradient() -> Self {
        Self {
            mode: LboMode::Gradient,
            max_iters: 20,
            ..Self::numerical()
        }
    }

    pub fn hybrid() -> Self {
        Self {
            mode: LboMode::Hybrid,
            max_iters: 20,
            ..Self::numerical()
        }
    }

    pub fn for_mode(mode: LboMode) -> Self {
        match mode {
            LboMode::Gradient => Self::gradient(),
            LboMode::Numerical => Self::numerical(),
            LboMode::Hybrid => Self::hybrid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter("lbo tol must be positive".into()));
        }
        if !(self.lr > T::zero()) {
            return Err(Error::InvalidParameter("lbo lr must be positive".into()));
        }
        if self.mode == LboMode::Hybrid && self.n_g > self.max_iters {
            return Err(Error::InvalidParameter(format!(
                "hybrid n_g = {} exceeds max_iters = {}",
                self.n_g, self.max_iters
            )));
        }
        if !self.guidance_w.is_finite() {
            return Err(Error::InvalidParameter("guidance must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LboStepReport<T> {
    pub t: usize,
    #[serde(rename = "iters")]
    pub iters_used: usize,
    /// `‖b^{i+1} − b^i‖_∞` for fixed-point sweeps, the objective value for
    /// pure gradient mode.
    #[serde(rename = "residual")]
    pub final_residual: T,
    pub converged: bool,
}

/// Plain DDIM increment: `invert_step(z_prev) − z_prev`.
pub fn init_bias<T: Scalar>(s: &Sampler<'_, T>, z_prev: &[T], t_prev: usize, t: usize) -> Result<Vec<T>> {
    Ok(sub(&s.invert_step(z_prev, t_prev, t)?, z_prev))
}

/// Generation-side increment `b̃ = (1−φ) z_t − ψ F(z_t, t)`, so that
/// `z_t − b̃` is the DDIM step from `z_t`.
pub fn bias_target<T: Scalar>(s: &Sampler<'_, T>, z_t: &[T], t: usize, t_prev: usize) -> Result<Vec<T>> {
    let k = s.schedule.coefficients(t, t_prev, T::zero())?;
    let e = s.eps(z_t, t)?;
    let a = T::one() - k.phi;
    Ok(z_t.iter().zip(&e).map(|(&z, &e)| a * z - k.psi * e).collect())
}

/// One fixed-point sweep `b ← b̃(z_prev + b)`.
pub fn numerical_iterate<T: Scalar>(
    s: &Sampler<'_, T>,
    z_prev: &[T],
    t_prev: usize,
    t: usize,
    b: &[T],
    iteration: usize,
) -> Result<Vec<T>> {
    check_len("bias", z_prev.len(), b.len())?;
    let next = bias_target(s, &add(z_prev, b), t, t_prev)?;
    if !all_finite(&next) {
        return Err(Error::Divergence {
            iteration,
            what: format!("fixed-point bias at t={t}"),
        });
    }
    Ok(next)
}

/// `mean |b − b̃(z_prev + b)|`.
pub fn objective<T: Scalar>(s: &Sampler<'_, T>, z_prev: &[T], t_prev: usize, t: usize, b: &[T]) -> Result<T> {
    check_len("bias", z_prev.len(), b.len())?;
    let target = bias_target(s, &add(z_prev, b), t, t_prev)?;
    Ok(mean_abs(&sub(b, &target)))
}

/// Objective value and its gradient in `b`.
///
/// With `r = φ b − (1−φ) z_prev + ψ F(z_prev + b)`, the gradient is
/// `(φ s + ψ J_Fᵀ s) / d` for `s = sign(r)`, `sign(0) = 0`. Residual
/// entries within a few ulps of zero are treated as exactly zero.
pub fn objective_gradient<T: Scalar>(
    s: &Sampler<'_, T>,
    z_prev: &[T],
    t_prev: usize,
    t: usize,
    b: &[T],
) -> Result<(T, Vec<T>)> {
    check_len("bias", z_prev.len(), b.len())?;
    let k = s.schedule.coefficients(t, t_prev, T::zero())?;
    let z = add(z_prev, b);
    let e = s.eps(&z, t)?;
    let a = T::one() - k.phi;
    let ulps = T::lit(4.0) * T::epsilon();
    let mut r = Vec::with_capacity(b.len());
    let mut signs = Vec::with_capacity(b.len());
    for ((&bi, &zi), &ei) in b.iter().zip(&z).zip(&e) {
        let ri = bi - (a * zi - k.psi * ei);
        r.push(ri);
        // residuals at rounding level count as the kink
        let floor = ulps * (bi.abs() + (a * zi).abs() + (k.psi * ei).abs());
        signs.push(if ri.abs() <= floor { T::zero() } else { signum0(ri) });
    }
    let value = mean_abs(&r);
    let back = cfg_vjp(s.model, &z, t, &s.condition, s.guidance, &signs)?;
    let d = T::from_count(b.len());
    let grad = signs
        .iter()
        .zip(&back)
        .map(|(&g, &j)| (k.phi * g + k.psi * j) / d)
        .collect();
    Ok((value, grad))
}

/// One Adam step on [`objective`]; returns the objective value before the step.
pub fn gradient_iterate<T: Scalar>(
    s: &Sampler<'_, T>,
    z_prev: &[T],
    t_prev: usize,
    t: usize,
    b: &mut [T],
    state: &mut AdamState<T>,
    iteration: usize,
) -> Result<T> {
    let (value, grad) = objective_gradient(s, z_prev, t_prev, t, b)?;
    let diverged = || Error::Divergence {
        iteration,
        what: format!("gradient bias at t={t}"),
    };
    if !value.is_finite() {
        return Err(diverged());
    }
    state.step(b, &grad).map_err(|_| diverged())?;
    if !all_finite(b) {
        return Err(diverged());
    }
    Ok(value)
}

/// Adam on the objective from `b`, keeping the lowest-objective iterate seen.
/// Returns `(best b, best objective, steps taken, converged)`.
fn gradient_phase<T: Scalar>(
    s: &Sampler<'_, T>,
    z_prev: &[T],
    t_prev: usize,
    t: usize,
    mut b: Vec<T>,
    steps: usize,
    cfg: &LboConfig<T>,
) -> Result<(Vec<T>, T, usize, bool)> {
    let mut state = AdamState::new(b.len(), cfg.lr);
    let mut best = (b.clone(), T::infinity());
    for i in 0..steps {
        let before = b.clone();
        let value = gradient_iterate(s, z_prev, t_prev, t, &mut b, &mut state, i + 1)?;
        if value < best.1 {
            best = (before, value);
        }
        if value < cfg.tol {
            return Ok((best.0, best.1, i, true));
        }
    }
    let value = objective(s, z_prev, t_prev, t, &b)?;
    if value < best.1 {
        best = (b, value);
    }
    let converged = best.1 < cfg.tol;
    Ok((best.0, best.1, steps, converged))
}

/// Fixed-point sweeps from `b`. Returns `(b, last step size, sweeps, converged)`.
#[allow(clippy::too_many_arguments)]
fn numerical_phase<T: Scalar>(
    s: &Sampler<'_, T>,
    z_prev: &[T],
    t_prev: usize,
    t: usize,
    mut b: Vec<T>,
    sweeps: usize,
    offset: usize,
    tol: T,
) -> Result<(Vec<T>, T, usize, bool)> {
    let mut residual = T::infinity();
    for i in 0..sweeps {
        let next = numerical_iterate(s, z_prev, t_prev, t, &b, offset + i + 1)?;
        residual = norm_inf(&sub(&next, &b));
        b = next;
        if residual < tol {
            return Ok((b, residual, i + 1, true));
        }
    }
    Ok((b, residual, sweeps, false))
}

/// One inversion step `t_prev → t`. Non-convergence is reported, not an error.
pub fn invert_step<T: Scalar>(
    s: &Sampler<'_, T>,
    z_prev: &[T],
    t_prev: usize,
    t: usize,
    cfg: &LboConfig<T>,
) -> Result<(Vec<T>, LboStepReport<T>)> {
    cfg.validate()?;
    let ddim = s.invert_step(z_prev, t_prev, t)?;
    let b0 = sub(&ddim, z_prev);
    let report = |iters_used, final_residual: T, converged| LboStepReport {
        t,
        iters_used,
        final_residual,
        converged,
    };

    if cfg.max_iters == 0 {
        // Plain DDIM inversion, returned as computed.
        let residual = match cfg.mode {
            LboMode::Gradient => objective(s, z_prev, t_prev, t, &b0)?,
            _ => norm_inf(&sub(&numerical_iterate(s, z_prev, t_prev, t, &b0, 0)?, &b0)),
        };
        return Ok((ddim, report(0, residual, residual < cfg.tol)));
    }

    let (b, residual, iters, converged) = match cfg.mode {
        LboMode::Numerical => numerical_phase(s, z_prev, t_prev, t, b0, cfg.max_iters, 0, cfg.tol)?,
        LboMode::Gradient => gradient_phase(s, z_prev, t_prev, t, b0, cfg.max_iters, cfg)?,
        LboMode::Hybrid => {
            let (b, _, used, _) = gradient_phase(s, z_prev, t_prev, t, b0, cfg.n_g, cfg)?;
            let (b, residual, sweeps, converged) =
                numerical_phase(s, z_prev, t_prev, t, b, cfg.max_iters - cfg.n_g, used, cfg.tol)?;
            (b, residual, used + sweeps, converged)
        }
    };
    Ok((add(z_prev, &b), report(iters, residual, converged)))
}

/// Full inversion sweep applying [`invert_step`] at every grid transition.
pub fn invert_trajectory<T: Scalar>(
    s: &Sampler<'_, T>,
    grid: &TimestepGrid,
    z0: &[T],
    cfg: &LboConfig<T>,
) -> Result<(Trajectory<T>, Vec<LboStepReport<T>>)> {
    cfg.validate()?;
    s.check_grid(grid)?;
    check_len("latent", s.latent_dim(), z0.len())?;
    let mut traj = s.empty_trajectory(grid, Direction::Inversion);
    let mut reports = Vec::with_capacity(grid.len());
    let mut z = z0.to_vec();
    traj.push(0, z.clone());
    for (t_prev, t) in grid.transitions() {
        let (next, report) = invert_step(s, &z, t_prev, t, cfg)?;
        z = next;
        traj.push(t, z.clone());
        reports.push(report);
    }
    Ok((traj, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{ConstantDenoiser, ScaledDenoiser};
    use crate::schedule::NoiseSchedule;

    fn toy() -> NoiseSchedule<f64> {
        NoiseSchedule::<f64>::linear(3, 0.1, 0.1).unwrap()
    }

    fn coeffs() -> (f64, f64) {
        let k = toy().coefficients(2, 1, 0.0).unwrap();
        (k.phi, k.psi)
    }

    /// Fixed point of `b ↦ (1−φ)(1+b) − 0.5ψ(1+b)`.
    fn b_star() -> f64 {
        let (phi, psi) = coeffs();
        (1.0 - phi - 0.5 * psi) / (phi + 0.5 * psi)
    }

    #[test]
    fn init_bias_and_target_hand_values() {
        let s = toy();
        let zero = ConstantDenoiser::zeros(1);
        let sampler = Sampler::new(&zero, &s);
        let (phi, _) = coeffs();
        assert!((init_bias(&sampler, &[1.0], 1, 2).unwrap()[0] - (1.0 / phi - 1.0)).abs() < 1e-15);
        assert_eq!(init_bias(&sampler, &[0.0], 1, 2).unwrap(), vec![0.0]);
        assert!((bias_target(&sampler, &[1.0], 2, 1).unwrap()[0] - (1.0 - phi)).abs() < 1e-15);

        let lin = ScaledDenoiser::new(1, 0.5);
        let sampler = Sampler::new(&lin, &s);
        let bt = bias_target(&sampler, &[1.0], 2, 1).unwrap()[0];
        assert!((bt - 0.0175277).abs() < 1e-6);
        let step = sampler.ddim_step(&[1.0], 2, 1).unwrap()[0];
        assert!((1.0 - bt - step).abs() <= 1e-15);
    }

    #[test]
    fn init_bias_matches_ddim_difference_bit_exactly() {
        let s = toy();
        let lin = ScaledDenoiser::new(2, 0.37);
        let sampler = Sampler::new(&lin, &s);
        let z = [0.3, -1.1];
        let b = init_bias(&sampler, &z, 1, 3).unwrap();
        let inv = sampler.invert_step(&z, 1, 3).unwrap();
        assert_eq!(b, vec![inv[0] - z[0], inv[1] - z[1]]);
    }

    #[test]
    fn numerical_fixed_point_hand_value() {
        let s = toy();
        let lin = ScaledDenoiser::new(1, 0.5);
        let sampler = Sampler::new(&lin, &s);
        let star = b_star();
        assert!((star - 0.0178404).abs() < 1e-6);
        let again = numerical_iterate(&sampler, &[1.0], 1, 2, &[star], 1).unwrap()[0];
        assert!((again - star).abs() < 1e-15);

        let cfg = LboConfig {
            tol: 1e-10,
            ..LboConfig::numerical()
        };
        let (z, rep) = invert_step(&sampler, &[1.0], 1, 2, &cfg).unwrap();
        assert!(rep.converged && rep.iters_used <= 15);
        assert!((z[0] - (1.0 + star)).abs() < 1e-10);
    }

    #[test]
    fn zero_denoiser_init_is_already_fixed() {
        let s = toy();
        let zero = ConstantDenoiser::zeros(1);
        let sampler = Sampler::new(&zero, &s);
        let b0 = init_bias(&sampler, &[1.0], 1, 2).unwrap();
        let b1 = numerical_iterate(&sampler, &[1.0], 1, 2, &b0, 1).unwrap();
        assert!((b1[0] - b0[0]).abs() < 1e-15);
        for mode in [LboMode::Numerical, LboMode::Gradient, LboMode::Hybrid] {
            let (_, rep) = invert_step(&sampler, &[1.0], 1, 2, &LboConfig::for_mode(mode)).unwrap();
            assert!(rep.converged, "{mode:?}");
            assert!(rep.iters_used <= 1 || mode == LboMode::Hybrid);
            assert!(rep.final_residual < 1e-12);
        }
    }

    #[test]
    fn residual_contracts_geometrically() {
        let s = toy();
        let lin = ScaledDenoiser::new(1, 0.5);
        let sampler = Sampler::new(&lin, &s);
        let (phi, psi) = coeffs();
        let ratio = (1.0 - phi - 0.5 * psi).abs();
        let mut b = init_bias(&sampler, &[1.0], 1, 2).unwrap();
        let mut last = f64::NAN;
        for i in 0..4 {
            let next = numerical_iterate(&sampler, &[1.0], 1, 2, &b, i).unwrap();
            let res = (next[0] - b[0]).abs();
            if last.is_finite() && last > 1e-14 {
                assert!((res / last - ratio).abs() < 1e-6 * ratio.max(1.0) + 1e-9);
            }
            last = res;
            b = next;
        }
    }

    #[test]
    fn gradient_step_moves_toward_fixed_point() {
        let s = toy();
        let lin = ScaledDenoiser::new(1, 0.5);
        let sampler = Sampler::new(&lin, &s);
        let star = b_star();
        let mut b = init_bias(&sampler, &[1.0], 1, 2).unwrap();
        let before = (b[0] - star).abs();
        let mut state = AdamState::new(1, 1e-3);
        gradient_iterate(&sampler, &[1.0], 1, 2, &mut b, &mut state, 1).unwrap();
        assert!((b[0] - star).abs() < before);

        let mut at = vec![star];
        let mut state = AdamState::new(1, 1e-3);
        let v = gradient_iterate(&sampler, &[1.0], 1, 2, &mut at, &mut state, 1).unwrap();
        assert!(v < 1e-15);
        assert!((at[0] - star).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_reproduce_ddim() {
        let s = NoiseSchedule::<f64>::linear(20, 1e-3, 0.1).unwrap();
        let grid = s.uniform_grid(5).unwrap();
        let lin = ScaledDenoiser::new(3, 0.8);
        let sampler = Sampler::new(&lin, &s);
        let z0 = [0.2, -0.4, 1.5];
        let plain = sampler.invert_trajectory(&grid, &z0).unwrap();
        for mode in [LboMode::Numerical, LboMode::Gradient, LboMode::Hybrid] {
            let cfg = LboConfig {
                max_iters: 0,
                n_g: 0,
                ..LboConfig::for_mode(mode)
            };
            let (traj, reports) = invert_trajectory(&sampler, &grid, &z0, &cfg).unwrap();
            assert_eq!(traj.entries, plain.entries);
            assert!(reports.iter().all(|r| r.iters_used == 0));
        }
    }

    #[test]
    fn config_validation_and_errors() {
        let s = toy();
        let lin = ScaledDenoiser::new(1, 0.5);
        let sampler = Sampler::new(&lin, &s);
        let bad = LboConfig {
            n_g: 30,
            ..LboConfig::hybrid()
        };
        assert!(invert_step(&sampler, &[1.0], 1, 2, &bad).is_err());
        let bad = LboConfig {
            tol: 0.0,
            ..LboConfig::numerical()
        };
        assert!(bad.validate().is_err());
        let empty = TimestepGrid::new(vec![], 3);
        assert!(
            empty.is_err() || invert_trajectory(&sampler, &empty.unwrap(), &[1.0], &LboConfig::numerical()).is_err()
        );
        let json = serde_json::to_string(&LboStepReport {
            t: 4,
            iters_used: 2,
            final_residual: 0.5,
            converged: true,
        })
        .unwrap();
        assert_eq!(json, r#"{"t":4,"iters":2,"residual":0.5,"converged":true}"#);
    }

    #[test]
    fn divergence_names_iteration() {
        let s = toy();
        let huge = ScaledDenoiser::new(1, f64::MAX);
        let sampler = Sampler::new(&huge, &s);
        let err = numerical_iterate(&sampler, &[1e10], 1, 2, &[1e10], 3).unwrap_err();
        assert!(matches!(err, Error::Divergence { iteration: 3, .. }));
    }
}
