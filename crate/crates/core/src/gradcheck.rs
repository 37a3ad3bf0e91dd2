//! Finite-difference audit of the three analytic gradients the optimizers
//! rely on: the denoiser VJP, the LBO objective gradient and the ILB loss
//! gradient.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{Autoencoder, Image};
use crate::denoiser::{Condition, Denoiser};
use crate::dynamics::Sampler;
use crate::error::{Error, Result};
use crate::ilb::{consistency_loss, consistency_loss_grad, regularization_loss, regularization_loss_grad, LossWeights};
use crate::lbo::{objective, objective_gradient};
use crate::linalg::{dot, norm2, sub};
use crate::optim::finite_difference_gradient;
use crate::perceptual::PerceptualMetric;
use crate::rng::stream_rng;
use crate::schedule::NoiseSchedule;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const H_REL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub probes: usize,
    /// Worst relative error per gradient over all probes.
    pub denoiser_vjp: f64,
    pub lbo: f64,
    pub ilb: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `‖g − fd‖ / ‖fd‖`, with `fd` the central difference of `f` at `x`.
pub fn relative_gradient_error(f: impl FnMut(&[f64]) -> f64, grad: &[f64], x: &[f64]) -> Result<f64> {
    let fd = finite_difference_gradient(f, x, H_REL)?;
    Ok(norm2(&sub(grad, &fd)) / norm2(&fd).max(1e-300))
}

fn normal(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Relative errors `(vjp, lbo, ilb)` at probe `p`.
///
/// The ILB probe starts from `E(x0)` of a random image perturbed by small
/// noise, so every term of the loss is exercised away from its kinks.
pub fn probe(
    model: &dyn Denoiser<f64>,
    schedule: &NoiseSchedule<f64>,
    ae: &dyn Autoencoder<f64>,
    perceptual: &dyn PerceptualMetric<f64>,
    seed: u64,
    p: usize,
) -> Result<(f64, f64, f64)> {
    let d = model.latent_dim();
    if ae.latent_dim() != d {
        return Err(Error::Dimension {
            what: "autoencoder latent",
            expected: d,
            got: ae.latent_dim(),
        });
    }
    let t_max = schedule.t_train();
    let mut rng = stream_rng(seed, p as u64);
    let cond = Condition::Unconditional;

    let t = rng.random_range(1..=t_max);
    let z = normal(&mut rng, d, 1.0);
    let v = normal(&mut rng, d, 1.0);
    let vjp = model.vjp(&z, t, &cond, &v)?;
    let e_vjp = relative_gradient_error(|z| model.eval(z, t, &cond).map_or(f64::NAN, |f| dot(&v, &f)), &vjp, &z)?;

    let s = Sampler::new(model, schedule);
    let t = rng.random_range(1..=t_max);
    let t_prev = rng.random_range(0..t);
    let z_prev = normal(&mut rng, d, 1.0);
    let b = normal(&mut rng, d, 0.1);
    let (_, g) = objective_gradient(&s, &z_prev, t_prev, t, &b)?;
    let e_lbo = relative_gradient_error(|b| objective(&s, &z_prev, t_prev, t, b).unwrap_or(f64::NAN), &g, &b)?;

    let shape = ae.image_shape();
    let x0 = Image::new(
        shape,
        (0..shape.pixel_count()).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let dt = rng.random_range(1..=t_max.div_ceil(2));
    let z0: Vec<f64> = ae
        .encode(&x0)?
        .iter()
        .zip(normal(&mut rng, d, 0.05))
        .map(|(a, b)| a + b)
        .collect();
    let w = LossWeights::default();
    let (_, g_con) = consistency_loss_grad(&x0, &z0, ae, perceptual, &w)?;
    let (_, g_reg) = regularization_loss_grad(&s, &z0, dt)?;
    let g: Vec<f64> = g_con.iter().zip(&g_reg).map(|(a, b)| a + b).collect();
    let e_ilb = relative_gradient_error(
        |z| {
            let con = consistency_loss(&x0, z, ae, perceptual, &w);
            let reg = regularization_loss(&s, z, dt);
            match (con, reg) {
                (Ok(c), Ok(r)) => c + r,
                _ => f64::NAN,
            }
        },
        &g,
        &z0,
    )?;
    Ok((e_vjp, e_lbo, e_ilb))
}

/// Runs `probes` seeded probes and reports the worst error of each kind.
pub fn run_gradcheck(
    model: &dyn Denoiser<f64>,
    schedule: &NoiseSchedule<f64>,
    ae: &dyn Autoencoder<f64>,
    perceptual: &dyn PerceptualMetric<f64>,
    probes: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    if probes == 0 {
        return Err(Error::InvalidParameter("probes must be at least 1".into()));
    }
    let (mut vjp, mut lbo, mut ilb) = (0.0f64, 0.0f64, 0.0f64);
    for p in 0..probes {
        let (a, b, c) = probe(model, schedule, ae, perceptual, seed, p)?;
        vjp = vjp.max(a);
        lbo = lbo.max(b);
        ilb = ilb.max(c);
    }
    let max = vjp.max(lbo).max(ilb);
    Ok(GradcheckReport {
        probes,
        denoiser_vjp: vjp,
        lbo,
        ilb,
        max_rel_error: max,
        tolerance: DEFAULT_TOLERANCE,
        passed: max <= DEFAULT_TOLERANCE,
    })
}
