//! Two-hidden-layer tanh MLP noise predictor, trained by ε-regression.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoiser::{check_inputs, Condition, Denoiser};
use crate::error::{check_len, Error, Result};
use crate::linalg::all_finite;
use crate::optim::AdamState;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub condition_width: usize,
}

impl MlpConfig {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            hidden: 64,
            num_classes: 0,
            condition_width: 0,
        }
    }
}

/// Offsets of each parameter array inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub w3: Range<usize>,
    pub b3: Range<usize>,
    pub time_embedding: Range<usize>,
    pub class_embedding: Range<usize>,
    pub condition_projection: Range<usize>,
}

impl Layout {
    fn new(cfg: &MlpConfig, t_train: usize) -> Self {
        let (d, h) = (cfg.latent_dim, cfg.hidden);
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        Self {
            w1: take(h * d),
            b1: take(h),
            w2: take(h * h),
            b2: take(h),
            w3: take(d * h),
            b3: take(d),
            time_embedding: take(t_train * h),
            // last row is the unconditional embedding
            class_embedding: take((cfg.num_classes + 1) * h),
            condition_projection: take(h * cfg.condition_width),
        }
    }

    fn len(&self) -> usize {
        self.condition_projection.end
    }

    /// Named arrays with shapes, in storage order.
    pub(crate) fn manifest(&self, cfg: &MlpConfig, t_train: usize) -> Vec<(&'static str, Vec<usize>, Range<usize>)> {
        let (d, h) = (cfg.latent_dim, cfg.hidden);
        vec![
            ("w1", vec![h, d], self.w1.clone()),
            ("b1", vec![h], self.b1.clone()),
            ("w2", vec![h, h], self.w2.clone()),
            ("b2", vec![h], self.b2.clone()),
            ("w3", vec![d, h], self.w3.clone()),
            ("b3", vec![d], self.b3.clone()),
            ("time_embedding", vec![t_train, h], self.time_embedding.clone()),
            (
                "class_embedding",
                vec![cfg.num_classes + 1, h],
                self.class_embedding.clone(),
            ),
            (
                "condition_projection",
                vec![h, cfg.condition_width],
                self.condition_projection.clone(),
            ),
        ]
    }
}

/// `F(z, t, c) = W3 tanh(W2 tanh(W1 z + b1 + e_t + e_c) + b2) + b3`, where
/// `e_t` is a learned per-timestep embedding and `e_c` a class embedding row
/// (the unconditional row for null conditions) or a projected embedding.
#[derive(Clone, Debug)]
pub struct MlpDenoiser<T> {
    config: MlpConfig,
    schedule: NoiseSchedule<T>,
    layout: Layout,
    params: Vec<T>,
    seed: u64,
}

struct Activations<T> {
    h1: Vec<T>,
    h2: Vec<T>,
    out: Vec<T>,
}

impl<T: Scalar> MlpDenoiser<T> {
    /// Random initialization: Gaussian weights scaled by fan-in, zero biases,
    /// sinusoidal initial time embeddings.
    pub fn new_random(config: MlpConfig, schedule: NoiseSchedule<T>, seed: u64) -> Result<Self> {
        if config.latent_dim == 0 || config.hidden == 0 {
            return Err(Error::InvalidParameter("latent_dim and hidden must be positive".into()));
        }
        let t_train = schedule.t_train();
        let layout = Layout::new(&config, t_train);
        let mut params = vec![T::zero(); layout.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (config.latent_dim as f64, config.hidden as f64);
        let mut fill = |range: Range<usize>, std: f64, rng: &mut ChaCha8Rng| {
            for p in &mut params[range] {
                let g: f64 = rng.sample(StandardNormal);
                *p = T::lit(g * std);
            }
        };
        fill(layout.w1.clone(), (1.0 / d).sqrt(), &mut rng);
        fill(layout.w2.clone(), (1.0 / h).sqrt(), &mut rng);
        fill(layout.w3.clone(), (1.0 / h).sqrt(), &mut rng);
        fill(layout.class_embedding.clone(), 0.1, &mut rng);
        if config.condition_width > 0 {
            fill(
                layout.condition_projection.clone(),
                (1.0 / config.condition_width as f64).sqrt(),
                &mut rng,
            );
        }
        let hidden = config.hidden;
        for t in 0..t_train {
            for j in 0..hidden {
                let freq = (-((j / 2) as f64) * 1000f64.ln() / hidden as f64).exp();
                let phase = (t + 1) as f64 * freq;
                let v = if j % 2 == 0 { phase.sin() } else { phase.cos() };
                params[layout.time_embedding.start + t * hidden + j] = T::lit(0.5 * v);
            }
        }
        Ok(Self {
            config,
            schedule,
            layout,
            params,
            seed,
        })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_parts(config: MlpConfig, schedule: NoiseSchedule<T>, params: Vec<T>, seed: u64) -> Result<Self> {
        let layout = Layout::new(&config, schedule.t_train());
        check_len("mlp parameters", layout.len(), params.len())?;
        if !all_finite(&params) {
            return Err(Error::NonFinite("mlp parameters".into()));
        }
        Ok(Self {
            config,
            schedule,
            layout,
            params,
            seed,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    fn condition_bias(&self, cond: &Condition<T>, into: &mut [T]) {
        let h = self.config.hidden;
        match cond {
            Condition::Embedding(e) => {
                let proj = &self.params[self.layout.condition_projection.clone()];
                let w = self.config.condition_width;
                for (j, acc) in into.iter_mut().enumerate() {
                    *acc += crate::linalg::dot(&proj[j * w..(j + 1) * w], e);
                }
            }
            _ => {
                let row = match cond {
                    Condition::ClassLabel(k) => *k,
                    _ => self.config.num_classes,
                };
                let start = self.layout.class_embedding.start + row * h;
                for (acc, &e) in into.iter_mut().zip(&self.params[start..start + h]) {
                    *acc += e;
                }
            }
        }
    }

    fn forward(&self, z: &[T], t: usize, cond: &Condition<T>) -> Activations<T> {
        let (d, h) = (self.config.latent_dim, self.config.hidden);
        let p = &self.params;
        let w1 = &p[self.layout.w1.clone()];
        let mut a1: Vec<T> = p[self.layout.b1.clone()].to_vec();
        let te = self.layout.time_embedding.start + (t - 1) * h;
        for j in 0..h {
            a1[j] += crate::linalg::dot(&w1[j * d..(j + 1) * d], z) + p[te + j];
        }
        self.condition_bias(cond, &mut a1);
        let h1: Vec<T> = a1.into_iter().map(|a| a.tanh()).collect();

        let w2 = &p[self.layout.w2.clone()];
        let b2 = &p[self.layout.b2.clone()];
        let h2: Vec<T> = (0..h)
            .map(|j| (crate::linalg::dot(&w2[j * h..(j + 1) * h], &h1) + b2[j]).tanh())
            .collect();

        let w3 = &p[self.layout.w3.clone()];
        let b3 = &p[self.layout.b3.clone()];
        let out = (0..d)
            .map(|i| crate::linalg::dot(&w3[i * h..(i + 1) * h], &h2) + b3[i])
            .collect();
        Activations { h1, h2, out }
    }

    /// Backpropagates `g_out` through the network. Returns the input gradient
    /// and, when `param_grad` is given, accumulates parameter gradients.
    fn backward(
        &self,
        z: &[T],
        t: usize,
        cond: &Condition<T>,
        act: &Activations<T>,
        g_out: &[T],
        param_grad: Option<&mut [T]>,
    ) -> Vec<T> {
        let (d, h) = (self.config.latent_dim, self.config.hidden);
        let l = &self.layout;
        let p = &self.params;

        let w3 = &p[l.w3.clone()];
        let g_h2 = crate::linalg::matvec_t(w3, d, h, g_out);
        let g_a2: Vec<T> = g_h2
            .iter()
            .zip(&act.h2)
            .map(|(&g, &y)| g * (T::one() - y * y))
            .collect();
        let w2 = &p[l.w2.clone()];
        let g_h1 = crate::linalg::matvec_t(w2, h, h, &g_a2);
        let g_a1: Vec<T> = g_h1
            .iter()
            .zip(&act.h1)
            .map(|(&g, &y)| g * (T::one() - y * y))
            .collect();
        let w1 = &p[l.w1.clone()];
        let g_z = crate::linalg::matvec_t(w1, h, d, &g_a1);

        if let Some(grad) = param_grad {
            outer_acc(&mut grad[l.w3.clone()], g_out, &act.h2);
            axpy_acc(&mut grad[l.b3.clone()], g_out);
            outer_acc(&mut grad[l.w2.clone()], &g_a2, &act.h1);
            axpy_acc(&mut grad[l.b2.clone()], &g_a2);
            outer_acc(&mut grad[l.w1.clone()], &g_a1, z);
            axpy_acc(&mut grad[l.b1.clone()], &g_a1);
            let te = l.time_embedding.start + (t - 1) * h;
            axpy_acc(&mut grad[te..te + h], &g_a1);
            match cond {
                Condition::Embedding(e) => {
                    outer_acc(&mut grad[l.condition_projection.clone()], &g_a1, e);
                }
                _ => {
                    let row = match cond {
                        Condition::ClassLabel(k) => *k,
                        _ => self.config.num_classes,
                    };
                    let start = l.class_embedding.start + row * h;
                    axpy_acc(&mut grad[start..start + h], &g_a1);
                }
            }
        }
        g_z
    }
}

fn outer_acc<T: Scalar>(dst: &mut [T], rows: &[T], cols: &[T]) {
    let n = cols.len();
    for (r, &a) in rows.iter().enumerate() {
        for (d, &b) in dst[r * n..(r + 1) * n].iter_mut().zip(cols) {
            *d += a * b;
        }
    }
}

fn axpy_acc<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<T: Scalar> Denoiser<T> for MlpDenoiser<T> {
    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn condition_width(&self) -> usize {
        self.config.condition_width
    }

    fn eval(&self, z: &[T], t: usize, cond: &Condition<T>) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        self.schedule.check_step(t)?;
        Ok(self.forward(z, t, cond).out)
    }

    fn vjp(&self, z: &[T], t: usize, cond: &Condition<T>, v: &[T]) -> Result<Vec<T>> {
        check_inputs(self, z, cond)?;
        check_len("cotangent", self.config.latent_dim, v.len())?;
        self.schedule.check_step(t)?;
        let act = self.forward(z, t, cond);
        Ok(self.backward(z, t, cond, &act, v, None))
    }

    fn supports_exact_vjp(&self) -> bool {
        true
    }
}

/// Latent samples with optional class labels.
#[derive(Clone, Debug)]
pub struct TrainingSet<T> {
    pub points: Vec<Vec<T>>,
    pub labels: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop once the held-out ε-MSE drops below this value.
    pub target_loss: f64,
    /// Noise draws per data point per epoch.
    pub draws_per_point: usize,
    /// Draw a fresh noise bank every epoch; when false the bank drawn at the
    /// start is reused (overfitting regime).
    pub resample_noise: bool,
    /// Probability of replacing a label by the unconditional embedding.
    pub cond_dropout: f64,
    pub heldout_size: usize,
    /// Evaluate the held-out loss every this many epochs.
    pub eval_every: usize,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            max_epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            target_loss: 0.0,
            draws_per_point: 1,
            resample_noise: true,
            cond_dropout: 0.1,
            heldout_size: 512,
            eval_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean ε-MSE over the last epoch's minibatches.
    pub train_loss: f64,
    pub heldout_loss: f64,
    pub reached_target: bool,
}

struct Sample<T> {
    point: usize,
    t: usize,
    noise: Vec<T>,
    cond: Condition<T>,
}

fn draw_samples<T: Scalar>(
    data: &TrainingSet<T>,
    t_train: usize,
    draws: usize,
    cond_dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Sample<T>> {
    let mut out = Vec::with_capacity(data.points.len() * draws);
    for (i, p) in data.points.iter().enumerate() {
        for _ in 0..draws {
            let t = rng.random_range(1..=t_train);
            let noise = (0..p.len())
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let cond = match &data.labels {
                Some(labels) if rng.random::<f64>() >= cond_dropout => Condition::ClassLabel(labels[i]),
                _ => Condition::Unconditional,
            };
            out.push(Sample {
                point: i,
                t,
                noise,
                cond,
            });
        }
    }
    out
}

fn noisy_input<T: Scalar>(schedule: &NoiseSchedule<T>, x: &[T], s: &Sample<T>) -> Vec<T> {
    let ab = schedule.alpha_bars()[s.t - 1];
    let (a, b) = (ab.sqrt(), (T::one() - ab).sqrt());
    x.iter().zip(&s.noise).map(|(&x, &e)| a * x + b * e).collect()
}

fn mean_loss<T: Scalar>(model: &MlpDenoiser<T>, data: &TrainingSet<T>, samples: &[Sample<T>]) -> f64 {
    let d = model.config.latent_dim;
    let total: f64 = samples
        .iter()
        .map(|s| {
            let z = noisy_input(&model.schedule, &data.points[s.point], s);
            let out = model.forward(&z, s.t, &s.cond).out;
            out.iter()
                .zip(&s.noise)
                .map(|(&o, &e)| (o - e).as_f64().powi(2))
                .sum::<f64>()
        })
        .sum();
    total / (samples.len() * d) as f64
}

/// Trains an [`MlpDenoiser`] with Adam on the ε-prediction mean squared error.
///
/// Runs until the held-out loss falls below `cfg.target_loss` or
/// `cfg.max_epochs` is reached. Fully determined by `cfg.seed`.
pub fn train_mlp_denoiser<T: Scalar>(
    data: &TrainingSet<T>,
    schedule: &NoiseSchedule<T>,
    cfg: &MlpTrainConfig,
) -> Result<(MlpDenoiser<T>, TrainReport)> {
    if data.points.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let d = data.points[0].len();
    if d == 0 {
        return Err(Error::InvalidInput("zero-dimensional points".into()));
    }
    for p in &data.points {
        check_len("training point", d, p.len())?;
    }
    let num_classes = match &data.labels {
        Some(labels) => {
            check_len("labels", data.points.len(), labels.len())?;
            labels.iter().max().map_or(0, |m| m + 1)
        }
        None => 0,
    };
    if cfg.batch_size == 0 || cfg.draws_per_point == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidParameter(
            "batch_size, draws_per_point and lr must be positive".into(),
        ));
    }

    let config = MlpConfig {
        latent_dim: d,
        hidden: cfg.hidden,
        num_classes,
        condition_width: 0,
    };
    let mut model = MlpDenoiser::new_random(config, schedule.clone(), cfg.seed)?;
    let t_train = schedule.t_train();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut heldout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    heldout_rng.set_stream(2);
    let heldout: Vec<Sample<T>> = {
        let draws = cfg.heldout_size.div_ceil(data.points.len()).max(1);
        draw_samples(data, t_train, draws, 0.0, &mut heldout_rng)
    };

    let mut adam = AdamState::new(model.params.len(), T::lit(cfg.lr));
    let mut bank = draw_samples(data, t_train, cfg.draws_per_point, cfg.cond_dropout, &mut rng);
    let mut order: Vec<usize> = (0..bank.len()).collect();
    let mut grad = vec![T::zero(); model.params.len()];
    let mut report = TrainReport {
        epochs: 0,
        train_loss: f64::NAN,
        heldout_loss: f64::NAN,
        reached_target: false,
    };

    for epoch in 1..=cfg.max_epochs {
        if cfg.resample_noise && epoch > 1 {
            bank = draw_samples(data, t_train, cfg.draws_per_point, cfg.cond_dropout, &mut rng);
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::lit(2.0 / (batch.len() * d) as f64);
            for &idx in batch {
                let s = &bank[idx];
                let z = noisy_input(schedule, &data.points[s.point], s);
                let act = model.forward(&z, s.t, &s.cond);
                let g_out: Vec<T> = act
                    .out
                    .iter()
                    .zip(&s.noise)
                    .map(|(&o, &e)| {
                        epoch_loss += (o - e).as_f64().powi(2);
                        scale * (o - e)
                    })
                    .collect();
                model.backward(&z, s.t, &s.cond, &act, &g_out, Some(&mut grad));
            }
            if !all_finite(&grad) {
                return Err(Error::Training {
                    epoch,
                    message: "non-finite gradient".into(),
                });
            }
            adam.step(&mut model.params, &grad).map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
        }
        epoch_loss /= (bank.len() * d) as f64;
        if !epoch_loss.is_finite() || !all_finite(&model.params) {
            return Err(Error::Training {
                epoch,
                message: "loss became non-finite".into(),
            });
        }
        report.epochs = epoch;
        report.train_loss = epoch_loss;
        if epoch % cfg.eval_every.max(1) == 0 || epoch == cfg.max_epochs {
            report.heldout_loss = mean_loss(&model, data, &heldout);
            if report.heldout_loss < cfg.target_loss {
                report.reached_target = true;
                break;
            }
        }
    }
    if report.epochs == 0 {
        report.heldout_loss = mean_loss(&model, data, &heldout);
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::finite_difference_vjp;
    use crate::optim::gradient_check;

    fn schedule() -> NoiseSchedule<f64> {
        NoiseSchedule::linear(100, 1e-4, 0.05).unwrap()
    }

    fn model(classes: usize, width: usize) -> MlpDenoiser<f64> {
        let cfg = MlpConfig {
            latent_dim: 3,
            hidden: 16,
            num_classes: classes,
            condition_width: width,
        };
        MlpDenoiser::new_random(cfg, schedule(), 11).unwrap()
    }

    #[test]
    fn eval_is_pure() {
        let m = model(2, 0);
        let c = Condition::ClassLabel(1);
        let a = m.eval(&[0.1, 0.2, 0.3], 40, &c).unwrap();
        let b = m.eval(&[0.1, 0.2, 0.3], 40, &c).unwrap();
        assert_eq!(a, b);
        assert!(m.eval(&[0.1, 0.2, 0.3], 0, &c).is_err());
        assert!(m.eval(&[0.1, 0.2], 4, &c).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let m = model(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conds = [
            Condition::Unconditional,
            Condition::ClassLabel(0),
            Condition::Embedding(vec![0.3, -0.2, 0.9, 0.1]),
        ];
        for probe in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let t = rng.random_range(1..=100);
            let c = &conds[probe % 3];
            let exact = m.vjp(&z, t, c, &v).unwrap();
            let fd = finite_difference_vjp(&m, &z, t, c, &v).unwrap();
            for (a, b) in exact.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-6), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let m = model(1, 0);
        let z = [0.4, -0.3, 0.8];
        let target = [0.1, 0.5, -0.2];
        let c = Condition::ClassLabel(0);
        let t = 17;
        let loss = |params: &[f64]| {
            let mm = MlpDenoiser::from_parts(m.config.clone(), m.schedule.clone(), params.to_vec(), 0).unwrap();
            let out = mm.eval(&z, t, &c).unwrap();
            out.iter().zip(&target).map(|(o, e)| (o - e).powi(2)).sum::<f64>()
        };
        let act = m.forward(&z, t, &c);
        let g_out: Vec<f64> = act.out.iter().zip(&target).map(|(o, e)| 2.0 * (o - e)).collect();
        let mut grad = vec![0.0; m.params.len()];
        m.backward(&z, t, &c, &act, &g_out, Some(&mut grad));
        // only check the parameters this sample touches
        let touched: Vec<usize> = (0..grad.len()).filter(|&i| grad[i] != 0.0).collect();
        assert!(touched.len() > 100);
        let sub_loss = |sub: &[f64]| {
            let mut p = m.params.clone();
            for (&i, &v) in touched.iter().zip(sub) {
                p[i] = v;
            }
            loss(&p)
        };
        let x: Vec<f64> = touched.iter().map(|&i| m.params[i]).collect();
        let g: Vec<f64> = touched.iter().map(|&i| grad[i]).collect();
        let err = gradient_check(sub_loss, &g, &x, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn training_rejects_empty_data() {
        let data = TrainingSet::<f64> {
            points: vec![],
            labels: None,
        };
        assert!(matches!(
            train_mlp_denoiser(&data, &schedule(), &MlpTrainConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn training_is_reproducible() {
        let data = TrainingSet {
            points: vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -1.0]],
            labels: Some(vec![0, 1, 0]),
        };
        let cfg = MlpTrainConfig {
            hidden: 8,
            max_epochs: 5,
            batch_size: 2,
            ..Default::default()
        };
        let (a, ra) = train_mlp_denoiser(&data, &schedule(), &cfg).unwrap();
        let (b, rb) = train_mlp_denoiser(&data, &schedule(), &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra, rb);
        assert_eq!(a.num_classes(), 2);
    }
}
