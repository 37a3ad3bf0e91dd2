//! Image latent boosting: refine `z0 = E(x0)` against a reconstruction loss
//! plus a one-step diffusion round-trip regularizer.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Autoencoder, Image};
use crate::denoiser::cfg_vjp;
use crate::dynamics::Sampler;
use crate::error::{check_len, Error, Result};
use crate::linalg::{mean_abs, sub};
use crate::metrics::{ssim, ssim_with_grad, SsimParams};
use crate::optim::AdamState;
use crate::perceptual::PerceptualMetric;
use crate::scalar::{signum0, Scalar};
use crate::schedule::TimestepGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct LossWeights<T> {
    pub l1: T,
    pub ssim: T,
    pub perceptual: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            l1: T::one(),
            ssim: T::one(),
            perceptual: T::one(),
        }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn new(l1: T, ssim: T, perceptual: T) -> Self {
        Self { l1, ssim, perceptual }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct IlbConfig<T> {
    pub lr: T,
    pub max_iters: usize,
    /// Relative total-loss improvement below which an iteration counts as stalled.
    pub rel_tol: T,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    /// Skip interval `δt`; `None` uses the inference grid stride.
    pub dt: Option<usize>,
    pub use_reg: bool,
    pub weights: LossWeights<T>,
    pub guidance_w: T,
}

impl<T: Scalar> Default for IlbConfig<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(0.1),
            max_iters: 100,
            rel_tol: T::lit(1e-5),
            patience: 5,
            dt: None,
            use_reg: true,
            weights: LossWeights::default(),
            guidance_w: T::one(),
        }
    }
}

impl<T: Scalar> IlbConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > T::zero()) {
            return Err(Error::InvalidParameter("ilb lr must be positive".into()));
        }
        if !(self.rel_tol >= T::zero()) {
            return Err(Error::InvalidParameter("ilb rel_tol must be non-negative".into()));
        }
        let w = &self.weights;
        if !(w.l1 >= T::zero() && w.ssim >= T::zero() && w.perceptual >= T::zero()) {
            return Err(Error::InvalidParameter("loss weights must be non-negative".into()));
        }
        if self.dt == Some(0) {
            return Err(Error::InvalidParameter("dt must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve_dt(&self, grid: &TimestepGrid) -> usize {
        self.dt.unwrap_or_else(|| grid.stride())
    }
}

/// `w_l1 · mean|x0 − D(z0)| − w_ssim · SSIM(x0, D(z0)) + w_perc · perc(x0, D(z0))`.
pub fn consistency_loss<T: Scalar>(
    x0: &Image<T>,
    z0: &[T],
    ae: &dyn Autoencoder<T>,
    perc: &dyn PerceptualMetric<T>,
    weights: &LossWeights<T>,
) -> Result<T> {
    let x_hat = ae.decode(z0)?;
    x0.same_shape(&x_hat)?;
    let mut loss = weights.l1 * mean_abs(&sub(&x0.data, &x_hat.data));
    if weights.ssim != T::zero() {
        loss -= weights.ssim * ssim(x0, &x_hat, &SsimParams::default())?;
    }
    if weights.perceptual != T::zero() {
        loss += weights.perceptual * perc.distance(x0, &x_hat)?;
    }
    Ok(loss)
}

/// [`consistency_loss`] and its gradient in `z0`.
pub fn consistency_loss_grad<T: Scalar>(
    x0: &Image<T>,
    z0: &[T],
    ae: &dyn Autoencoder<T>,
    perc: &dyn PerceptualMetric<T>,
    weights: &LossWeights<T>,
) -> Result<(T, Vec<T>)> {
    let x_hat = ae.decode(z0)?;
    x0.same_shape(&x_hat)?;
    let n = T::from_count(x0.data.len());
    let diff = sub(&x_hat.data, &x0.data);
    let mut loss = weights.l1 * mean_abs(&diff);
    let mut g: Vec<T> = diff.iter().map(|&d| weights.l1 * signum0(d) / n).collect();
    if weights.ssim != T::zero() {
        let (s, gs) = ssim_with_grad(x0, &x_hat, &SsimParams::default())?;
        loss -= weights.ssim * s;
        for (gi, &v) in g.iter_mut().zip(&gs.data) {
            *gi -= weights.ssim * v;
        }
    }
    if weights.perceptual != T::zero() {
        loss += weights.perceptual * perc.distance(x0, &x_hat)?;
        let gp = perc.grad_y(x0, &x_hat)?;
        for (gi, &v) in g.iter_mut().zip(&gp.data) {
            *gi += weights.perceptual * v;
        }
    }
    let v = Image::new(x_hat.shape(), g)?;
    Ok((loss, ae.decoder_vjp(z0, &v)?))
}

/// One-step inversion to `δt` followed by one generation step back to 0.
pub fn skip_roundtrip<T: Scalar>(s: &Sampler<'_, T>, z0: &[T], dt: usize) -> Result<Vec<T>> {
    let (phi, psi) = s.schedule.skip_coefficients(dt)?;
    let z_dt = skip_up(s, z0, dt, phi, psi)?;
    let e = s.eps(&z_dt, dt)?;
    Ok(z_dt.iter().zip(&e).map(|(&z, &e)| phi * z + psi * e).collect())
}

fn skip_up<T: Scalar>(s: &Sampler<'_, T>, z0: &[T], dt: usize, phi: T, psi: T) -> Result<Vec<T>> {
    let e = s.eps(z0, dt)?;
    let (a, c) = (T::one() / phi, psi / phi);
    Ok(z0.iter().zip(&e).map(|(&z, &e)| a * z - c * e).collect())
}

/// `mean |z0 − skip_roundtrip(z0)|`.
pub fn regularization_loss<T: Scalar>(s: &Sampler<'_, T>, z0: &[T], dt: usize) -> Result<T> {
    Ok(mean_abs(&sub(z0, &skip_roundtrip(s, z0, dt)?)))
}

/// [`regularization_loss`] and its gradient, differentiating through both
/// denoiser evaluations of the round trip.
pub fn regularization_loss_grad<T: Scalar>(s: &Sampler<'_, T>, z0: &[T], dt: usize) -> Result<(T, Vec<T>)> {
    let (phi, psi) = s.schedule.skip_coefficients(dt)?;
    let z_dt = skip_up(s, z0, dt, phi, psi)?;
    let e = s.eps(&z_dt, dt)?;
    let r: Vec<T> = z0
        .iter()
        .zip(z_dt.iter().zip(&e))
        .map(|(&z, (&zd, &e))| z - (phi * zd + psi * e))
        .collect();
    let d = T::from_count(z0.len());
    let g: Vec<T> = r.iter().map(|&x| signum0(x) / d).collect();
    // Jᵀg for the round trip z0 → z_dt → z_rt
    let jd = cfg_vjp(s.model, &z_dt, dt, &s.condition, s.guidance, &g)?;
    let w: Vec<T> = g.iter().zip(&jd).map(|(&g, &j)| phi * g + psi * j).collect();
    let j0 = cfg_vjp(s.model, z0, dt, &s.condition, s.guidance, &w)?;
    let grad = g
        .iter()
        .zip(w.iter().zip(&j0))
        .map(|(&g, (&w, &j))| g - (w - psi * j) / phi)
        .collect();
    Ok((mean_abs(&r), grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlbTraceRow<T> {
    pub iter: usize,
    pub l_con: T,
    pub l_reg: T,
    pub total: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlbReport<T> {
    /// Number of evaluated iterates, including the initial `E(x0)`.
    pub iters_used: usize,
    pub best_iter: usize,
    pub initial: IlbTraceRow<T>,
    /// Values at the returned (best) iterate.
    pub final_values: IlbTraceRow<T>,
    pub trace: Vec<IlbTraceRow<T>>,
}

impl<T: Scalar> IlbReport<T> {
    /// `iter,l_con,l_reg,total` rows.
    pub fn trace_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.trace {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Everything [`ilb_optimize`] needs besides the image and config.
#[derive(Clone, Copy)]
pub struct IlbBackends<'a, T: Scalar> {
    pub autoencoder: &'a dyn Autoencoder<T>,
    pub perceptual: &'a dyn PerceptualMetric<T>,
}

/// Total loss and gradient at `z`: `(l_con, l_reg, total, grad)`.
fn evaluate<T: Scalar>(
    x0: &Image<T>,
    z: &[T],
    b: &IlbBackends<'_, T>,
    s: &Sampler<'_, T>,
    dt: usize,
    cfg: &IlbConfig<T>,
) -> Result<(T, T, T, Vec<T>)> {
    let (l_con, mut grad) = consistency_loss_grad(x0, z, b.autoencoder, b.perceptual, &cfg.weights)?;
    let (l_reg, total) = if cfg.use_reg {
        let (l_reg, g_reg) = regularization_loss_grad(s, z, dt)?;
        for (g, r) in grad.iter_mut().zip(g_reg) {
            *g += r;
        }
        (l_reg, l_con + l_reg)
    } else {
        (regularization_loss(s, z, dt)?, l_con)
    };
    Ok((l_con, l_reg, total, grad))
}

/// Adam on `L_con (+ L_reg)` from `E(x0)`; returns the lowest-loss iterate.
///
/// Stops after `max_iters` updates, or once the relative improvement has
/// stayed below `rel_tol` for `patience` consecutive updates. `L_reg` is
/// always recorded, but only enters the objective when `use_reg` is set.
pub fn ilb_optimize<T: Scalar>(
    x0: &Image<T>,
    backends: &IlbBackends<'_, T>,
    sampler: &Sampler<'_, T>,
    grid: &TimestepGrid,
    cfg: &IlbConfig<T>,
) -> Result<(Vec<T>, IlbReport<T>)> {
    cfg.validate()?;
    let dt = cfg.resolve_dt(grid);
    sampler.schedule.check_step(dt)?;
    let mut z = backends.autoencoder.encode(x0)?;
    check_len("latent", sampler.latent_dim(), z.len())?;
    let mut adam = AdamState::new(z.len(), cfg.lr);
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut best: Option<(Vec<T>, IlbTraceRow<T>)> = None;
    let mut stalled = 0;
    let mut prev_total = T::nan();
    for iter in 0..=cfg.max_iters {
        let (l_con, l_reg, total, grad) = evaluate(x0, &z, backends, sampler, dt, cfg)?;
        if !total.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                what: "ilb total loss".into(),
            });
        }
        let row = IlbTraceRow {
            iter,
            l_con,
            l_reg,
            total,
        };
        trace.push(row);
        if best.as_ref().is_none_or(|(_, b)| total < b.total) {
            best = Some((z.clone(), row));
        }
        if iter > 0 {
            let improvement = (prev_total - total) / prev_total.abs().max(T::min_positive_value());
            stalled = if improvement < cfg.rel_tol { stalled + 1 } else { 0 };
        }
        prev_total = total;
        if iter == cfg.max_iters || (cfg.patience > 0 && stalled >= cfg.patience) {
            break;
        }
        adam.step(&mut z, &grad).map_err(|_| Error::Divergence {
            iteration: iter,
            what: "ilb gradient".into(),
        })?;
    }
    let (z_best, final_values) = best.expect("at least one iterate");
    let report = IlbReport {
        iters_used: trace.len(),
        best_iter: final_values.iter,
        initial: trace[0],
        final_values,
        trace,
    };
    Ok((z_best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{IdentityAutoencoder, ImageShape};
    use crate::denoiser::{ConstantDenoiser, LinearGaussianDenoiser};
    use crate::perceptual::RandomConvFeatures;
    use crate::schedule::NoiseSchedule;

    fn toy() -> NoiseSchedule<f64> {
        NoiseSchedule::<f64>::linear(3, 0.1, 0.1).unwrap()
    }

    #[test]
    fn consistency_loss_hand_cases() {
        let shape = ImageShape::new(3, 3, 1);
        let ae = IdentityAutoencoder::new(shape);
        let perc = RandomConvFeatures::<f64>::with_default_seed(1);
        let x = Image::new(shape, (0..9).map(|i| i as f64 / 10.0).collect()).unwrap();
        let z = ae.encode(&x).unwrap();
        let l = consistency_loss(&x, &z, &ae, &perc, &LossWeights::new(1.0, 1.0, 0.0)).unwrap();
        assert!((l + 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = z.iter().map(|v| v + 0.1).collect();
        let l = consistency_loss(&x, &shifted, &ae, &perc, &LossWeights::new(1.0, 0.0, 0.0)).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
        let l = consistency_loss(&x, &z, &ae, &perc, &LossWeights::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn constant_denoiser_roundtrip_is_exact() {
        let s = toy();
        let zero = ConstantDenoiser::zeros(2);
        let sampler = Sampler::new(&zero, &s);
        assert_eq!(regularization_loss(&sampler, &[0.5, -0.25], 2).unwrap(), 0.0);
        let c = ConstantDenoiser::new(vec![0.3, -2.0]);
        let sampler = Sampler::new(&c, &s);
        let rt = skip_roundtrip(&sampler, &[0.5, -0.25], 3).unwrap();
        assert!((rt[0] - 0.5).abs() < 1e-12 && (rt[1] + 0.25).abs() < 1e-12);
        assert!(skip_roundtrip(&sampler, &[0.5, -0.25], 4).is_err());
    }

    #[test]
    fn analytic_roundtrip_hand_composition() {
        let s = toy();
        let m = LinearGaussianDenoiser::standard(s.clone(), 1).unwrap();
        let sampler = Sampler::new(&m, &s);
        let ab: f64 = 0.81;
        let (phi, psi) = (1.0 / ab.sqrt(), -((1.0 - ab) / ab).sqrt());
        let k = (1.0 - ab).sqrt();
        // ε*(z) = k z on both evaluations
        let up = 1.0 / phi - psi / phi * k;
        let down = phi + psi * k;
        let expected = up * down;
        let rt = skip_roundtrip(&sampler, &[1.0], 2).unwrap()[0];
        assert!((rt - expected).abs() < 1e-12);
        let l = regularization_loss(&sampler, &[1.0], 2).unwrap();
        assert!(l > 0.0 && (l - (1.0 - expected).abs()).abs() < 1e-12);
        let l2 = regularization_loss(&sampler, &[2.0], 2).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-12);
    }

    #[test]
    fn identity_with_zero_denoiser_is_already_optimal() {
        let s = NoiseSchedule::<f64>::linear(10, 0.01, 0.1).unwrap();
        let grid = s.uniform_grid(5).unwrap();
        let shape = ImageShape::new(4, 4, 1);
        let ae = IdentityAutoencoder::new(shape);
        let perc = RandomConvFeatures::with_default_seed(1);
        let zero = ConstantDenoiser::zeros(16);
        let sampler = Sampler::new(&zero, &s);
        let x = Image::new(shape, (0..16).map(|i| (i as f64 * 0.37).fract()).collect()).unwrap();
        let backends = IlbBackends {
            autoencoder: &ae,
            perceptual: &perc,
        };
        let (z, rep) = ilb_optimize(&x, &backends, &sampler, &grid, &IlbConfig::default()).unwrap();
        assert_eq!(z, x.data);
        assert_eq!(rep.best_iter, 0);
        assert!(rep.final_values.total <= rep.initial.total);
        assert_eq!(rep.trace.len(), rep.iters_used);
        let csv = rep.trace_csv().unwrap();
        assert!(csv.starts_with("iter,l_con,l_reg,total\n0,"));
    }
}
