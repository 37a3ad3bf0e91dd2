//! Benchmark harness: for every instance and method, optional ILB, inversion,
//! generation replay from the inverted noise, decode, and image metrics.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    fit_linear_autoencoder, Autoencoder, ConvAutoencoder, IdentityAutoencoder, Image, ImageShape,
};
use crate::data::{generate, DatasetKind, DatasetSpec};
use crate::denoiser::{train_mlp_denoiser, Denoiser, LinearGaussianDenoiser, MlpTrainConfig, TrainingSet};
use crate::dynamics::Sampler;
use crate::error::{Error, Result};
use crate::ilb::{ilb_optimize, IlbBackends, IlbConfig};
use crate::lbo::{self, LboConfig, LboMode};
use crate::linalg::relative_l2;
use crate::metrics::{marker, MetricReport};
use crate::perceptual::RandomConvFeatures;
use crate::persist::{LoadedAutoencoder, LoadedDenoiser};
use crate::rng::derive_seed;
use crate::schedule::{NoiseSchedule, ScheduleParams, TimestepGrid};

const TRAIN_TAG: u64 = 0x74_7261_696e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Inversion {
    Ddim,
    LboG,
    LboN,
    LboH,
}

impl Inversion {
    pub fn name(self) -> &'static str {
        match self {
            Inversion::Ddim => "ddim",
            Inversion::LboG => "lbo-g",
            Inversion::LboN => "lbo-n",
            Inversion::LboH => "lbo-h",
        }
    }

    pub fn lbo_mode(self) -> Option<LboMode> {
        match self {
            Inversion::Ddim => None,
            Inversion::LboG => Some(LboMode::Gradient),
            Inversion::LboN => Some(LboMode::Numerical),
            Inversion::LboH => Some(LboMode::Hybrid),
        }
    }
}

impl FromStr for Inversion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddim" => Ok(Inversion::Ddim),
            "lbo-g" => Ok(Inversion::LboG),
            "lbo-n" => Ok(Inversion::LboN),
            "lbo-h" => Ok(Inversion::LboH),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected ddim, lbo-g, lbo-n or lbo-h)"
            ))),
        }
    }
}

/// An inversion method, optionally preceded by ILB; written `lbo-n+ilb`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Method {
    pub inversion: Inversion,
    pub ilb: bool,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.inversion.name())?;
        if self.ilb {
            f.write_str("+ilb")?;
        }
        Ok(())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, ilb) = match s.strip_suffix("+ilb") {
            Some(base) => (base, true),
            None => (s, false),
        };
        Ok(Method {
            inversion: base.parse()?,
            ilb,
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Method label of the autoencoder round-trip rows.
pub const UPPER_BOUND: &str = "vqae";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserChoice {
    /// Linear-Gaussian model fitted to encoded training latents.
    Analytic {
        ridge: f64,
        train_count: usize,
    },
    Mlp {
        train_count: usize,
        train: MlpTrainConfig,
    },
    File {
        path: String,
    },
}

impl Default for DenoiserChoice {
    fn default() -> Self {
        DenoiserChoice::Analytic {
            ridge: 1e-3,
            train_count: 500,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AutoencoderChoice {
    Identity,
    /// PCA autoencoder. Its encoder already minimizes pixel MSE, so ILB
    /// cannot raise PSNR with it. `latent_dim` defaults to a quarter of the
    /// pixels.
    Linear {
        latent_dim: Option<usize>,
        train_count: usize,
    },
    /// Fixed 2x downsampling encoder with a bilinear decoder.
    #[default]
    Conv,
    File {
        path: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptualChoice {
    pub seed: u64,
}

impl Default for PerceptualChoice {
    fn default() -> Self {
        Self {
            seed: RandomConvFeatures::<f64>::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: ScheduleParams,
    /// Grid size S.
    pub steps: usize,
    pub guidance: f64,
    pub denoiser: DenoiserChoice,
    pub autoencoder: AutoencoderChoice,
    pub perceptual: PerceptualChoice,
    pub lbo_g: LboConfig<f64>,
    pub lbo_n: LboConfig<f64>,
    pub lbo_h: LboConfig<f64>,
    pub ilb: IlbConfig<f64>,
    pub methods: Vec<Method>,
    pub dataset: DatasetSpec,
    pub parallel: bool,
    /// Fill the `wall_ms` column. Timings make the CSV non-reproducible.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            schedule: ScheduleParams::default(),
            steps: 50,
            guidance: 1.0,
            denoiser: DenoiserChoice::default(),
            autoencoder: AutoencoderChoice::default(),
            perceptual: PerceptualChoice::default(),
            lbo_g: LboConfig::gradient(),
            lbo_n: LboConfig::numerical(),
            lbo_h: LboConfig::hybrid(),
            ilb: IlbConfig::default(),
            methods: ["ddim", "lbo-n", "ddim+ilb", "lbo-n+ilb"]
                .iter()
                .map(|m| m.parse().expect("valid method"))
                .collect(),
            dataset: DatasetSpec::default(),
            parallel: false,
            record_wall_time: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// LBO settings for `inversion`; the mode always follows the method.
    pub fn lbo_config(&self, inversion: Inversion) -> Option<LboConfig<f64>> {
        let (cfg, mode) = match inversion {
            Inversion::Ddim => return None,
            Inversion::LboG => (&self.lbo_g, LboMode::Gradient),
            Inversion::LboN => (&self.lbo_n, LboMode::Numerical),
            Inversion::LboH => (&self.lbo_h, LboMode::Hybrid),
        };
        Some(LboConfig { mode, ..cfg.clone() })
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        for inversion in [Inversion::LboG, Inversion::LboN, Inversion::LboH] {
            self.lbo_config(inversion).expect("lbo method").validate()?;
        }
        self.ilb.validate()?;
        let denoiser_file = match &self.denoiser {
            DenoiserChoice::File { path } => Some(path),
            _ => None,
        };
        let autoencoder_file = match &self.autoencoder {
            AutoencoderChoice::File { path } => Some(path),
            _ => None,
        };
        for path in denoiser_file.into_iter().chain(autoencoder_file) {
            if !std::path::Path::new(path).exists() {
                return Err(Error::Config(format!("model file {path:?} does not exist")));
            }
        }
        Ok(())
    }
}

/// One CSV row. Failed instances keep their row with NaN metrics and `error` set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub instance_id: usize,
    #[serde(with = "marker")]
    pub psnr_db: f64,
    #[serde(with = "marker")]
    pub ssim: f64,
    #[serde(with = "marker")]
    pub perceptual: f64,
    #[serde(with = "marker")]
    pub roundtrip_l2_rel: f64,
    #[serde(with = "marker")]
    pub mean_lbo_iters: f64,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl BenchmarkRow {
    fn ok(method: String, instance_id: usize, m: MetricReport, iters: f64, wall_ms: Option<f64>) -> Self {
        Self {
            method,
            instance_id,
            psnr_db: m.psnr_db,
            ssim: m.ssim,
            perceptual: m.perceptual,
            roundtrip_l2_rel: m.roundtrip_l2_rel,
            mean_lbo_iters: iters,
            wall_ms,
            error: None,
        }
    }

    fn failed(method: String, instance_id: usize, e: &Error) -> Self {
        Self {
            method,
            instance_id,
            psnr_db: f64::NAN,
            ssim: f64::NAN,
            perceptual: f64::NAN,
            roundtrip_l2_rel: f64::NAN,
            mean_lbo_iters: f64::NAN,
            wall_ms: None,
            error: Some(format!("{}: {e}", e.code())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub errors: usize,
    #[serde(with = "marker")]
    pub psnr_db: f64,
    #[serde(with = "marker")]
    pub ssim: f64,
    #[serde(with = "marker")]
    pub perceptual: f64,
    #[serde(with = "marker")]
    pub roundtrip_l2_rel: f64,
    #[serde(with = "marker")]
    pub mean_lbo_iters: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub config: RunConfig,
    pub instances: usize,
    pub methods: Vec<MethodSummary>,
    pub upper_bound: MethodSummary,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutput {
    pub rows: Vec<BenchmarkRow>,
    pub summary: BenchmarkSummary,
}

impl BenchmarkOutput {
    pub fn csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

pub fn rows_to_csv(rows: &[BenchmarkRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// Everything built once per run and shared read-only by all instances.
pub struct Backends {
    pub schedule: NoiseSchedule<f64>,
    pub grid: TimestepGrid,
    pub denoiser: Box<dyn Denoiser<f64>>,
    pub autoencoder: Box<dyn Autoencoder<f64>>,
    pub perceptual: RandomConvFeatures<f64>,
}

/// Dataset items as images; points become `1 × d` single-channel images.
pub fn dataset_images(ds: crate::data::Dataset) -> Vec<Image<f64>> {
    match ds.kind {
        DatasetKind::Shapes => ds.images,
        DatasetKind::Gauss2d => ds
            .points
            .into_iter()
            .map(|p| Image::new(ImageShape::new(1, p.len(), 1), p).expect("point image"))
            .collect(),
    }
}

pub fn instance_shape(spec: &DatasetSpec) -> ImageShape {
    match spec.kind {
        DatasetKind::Shapes => spec.image_shape(),
        DatasetKind::Gauss2d => ImageShape::new(1, 2, 1),
    }
}

/// Benchmark instances: the dataset generated from `cfg.seed`. Points are
/// wrapped as `1 × 2` images.
pub fn instances(cfg: &RunConfig) -> Result<Vec<Image<f64>>> {
    Ok(dataset_images(generate(&cfg.dataset, cfg.seed)?))
}

fn training_images(cfg: &RunConfig, count: usize) -> Result<Vec<Image<f64>>> {
    let spec = DatasetSpec {
        count,
        ..cfg.dataset.clone()
    };
    Ok(dataset_images(generate(&spec, derive_seed(cfg.seed, TRAIN_TAG))?))
}

/// The denoiser named in `cfg` and the schedule it runs under. Fitted
/// backends need `autoencoder` to encode their training images.
pub fn build_denoiser(
    cfg: &RunConfig,
    autoencoder: Option<&dyn Autoencoder<f64>>,
) -> Result<(Box<dyn Denoiser<f64>>, NoiseSchedule<f64>)> {
    if let DenoiserChoice::File { path } = &cfg.denoiser {
        let m = LoadedDenoiser::load(path)?;
        let schedule = m.schedule().clone();
        return Ok((Box::new(m), schedule));
    }
    let schedule = cfg.schedule.build::<f64>()?;
    let ae = autoencoder.ok_or_else(|| Error::Config("fitting a denoiser needs an autoencoder".into()))?;
    let latents =
        |count: usize| -> Result<Vec<Vec<f64>>> { training_images(cfg, count)?.iter().map(|x| ae.encode(x)).collect() };
    let denoiser: Box<dyn Denoiser<f64>> = match &cfg.denoiser {
        DenoiserChoice::Analytic { ridge, train_count } => Box::new(LinearGaussianDenoiser::fit(
            schedule.clone(),
            &latents(*train_count)?,
            *ridge,
        )?),
        DenoiserChoice::Mlp { train_count, train } => {
            let data = TrainingSet {
                points: latents(*train_count)?,
                labels: None,
            };
            Box::new(train_mlp_denoiser(&data, &schedule, train)?.0)
        }
        DenoiserChoice::File { .. } => unreachable!("handled above"),
    };
    Ok((denoiser, schedule))
}

/// The autoencoder named in `cfg`, checked against the dataset's image shape.
/// Point datasets always use the identity unless a model file is given.
pub fn build_autoencoder(cfg: &RunConfig) -> Result<Box<dyn Autoencoder<f64>>> {
    let shape = instance_shape(&cfg.dataset);
    let autoencoder: Box<dyn Autoencoder<f64>> = match &cfg.autoencoder {
        AutoencoderChoice::File { path } => Box::new(LoadedAutoencoder::load(path)?),
        _ if cfg.dataset.kind == DatasetKind::Gauss2d => Box::new(IdentityAutoencoder::new(shape)),
        AutoencoderChoice::Identity => Box::new(IdentityAutoencoder::new(shape)),
        AutoencoderChoice::Conv => Box::new(ConvAutoencoder::new(shape)?),
        AutoencoderChoice::Linear {
            latent_dim,
            train_count,
        } => {
            let k = latent_dim.unwrap_or((shape.pixel_count() / 4).max(1));
            Box::new(fit_linear_autoencoder(&training_images(cfg, *train_count)?, k)?)
        }
    };
    if autoencoder.image_shape() != shape {
        return Err(Error::Config(format!(
            "autoencoder expects {:?}, dataset produces {shape:?}",
            autoencoder.image_shape()
        )));
    }
    Ok(autoencoder)
}

impl Backends {
    /// Builds or loads the backends named in `cfg`. Training data is drawn
    /// from a seed derived from `cfg.seed`, disjoint from the instances. A
    /// loaded denoiser brings its own schedule.
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let autoencoder = build_autoencoder(cfg)?;
        let (denoiser, schedule) = build_denoiser(cfg, Some(autoencoder.as_ref()))?;
        let grid = schedule.uniform_grid(cfg.steps)?;
        if denoiser.latent_dim() != autoencoder.latent_dim() {
            return Err(Error::Config(format!(
                "denoiser latent_dim {} does not match autoencoder latent_dim {}",
                denoiser.latent_dim(),
                autoencoder.latent_dim()
            )));
        }
        let perceptual = RandomConvFeatures::new(autoencoder.image_shape().channels, cfg.perceptual.seed);
        Ok(Self {
            schedule,
            grid,
            denoiser,
            autoencoder,
            perceptual,
        })
    }

    pub fn sampler(&self, guidance: f64) -> Sampler<'_, f64> {
        Sampler::new(self.denoiser.as_ref(), &self.schedule).with_condition(Default::default(), guidance)
    }
}

/// Inverts `z0` with `inversion`, replays generation from the result and
/// returns `(ẑ0, mean LBO iterations)`.
///
/// DDIM inversion and the replay use `cfg.guidance`; LBO inverts under its
/// own `guidance_w`.
pub fn roundtrip(b: &Backends, z0: &[f64], inversion: Inversion, cfg: &RunConfig) -> Result<(Vec<f64>, f64)> {
    let s = b.sampler(cfg.guidance);
    let (z_top, iters) = match cfg.lbo_config(inversion) {
        None => (
            s.invert_trajectory(&b.grid, z0)?.last().expect("nonempty").to_vec(),
            0.0,
        ),
        Some(lbo_cfg) => {
            let inverter = b.sampler(lbo_cfg.guidance_w);
            let (traj, reports) = lbo::invert_trajectory(&inverter, &b.grid, z0, &lbo_cfg)?;
            let total: usize = reports.iter().map(|r| r.iters_used).sum();
            (
                traj.last().expect("nonempty").to_vec(),
                total as f64 / reports.len().max(1) as f64,
            )
        }
    };
    let replay = s.generate_trajectory(&b.grid, &z_top)?;
    Ok((replay.last().expect("nonempty").to_vec(), iters))
}

fn run_instance(b: &Backends, cfg: &RunConfig, id: usize, x0: &Image<f64>) -> Vec<BenchmarkRow> {
    let ae = b.autoencoder.as_ref();
    let start = Instant::now();
    let wall = |t: Instant| cfg.record_wall_time.then(|| t.elapsed().as_secs_f64() * 1e3);

    let mut rows = Vec::with_capacity(cfg.methods.len() + 1);
    let z_enc = ae.encode(x0);
    rows.push(
        z_enc
            .as_ref()
            .map_err(|e| Error::InvalidInput(e.to_string()))
            .and_then(|z| MetricReport::compare(x0, &ae.decode(z)?, &b.perceptual, 0.0))
            .map_or_else(
                |e| BenchmarkRow::failed(UPPER_BOUND.into(), id, &e),
                |m| BenchmarkRow::ok(UPPER_BOUND.into(), id, m, 0.0, wall(start)),
            ),
    );

    let mut z_ilb: Option<Result<(Vec<f64>, f64)>> = None;
    for &method in &cfg.methods {
        let start = Instant::now();
        let result = (|| -> Result<BenchmarkRow> {
            let z0 = if method.ilb {
                let (z, _) = z_ilb
                    .get_or_insert_with(|| {
                        let t = Instant::now();
                        let backends = IlbBackends {
                            autoencoder: ae,
                            perceptual: &b.perceptual,
                        };
                        let ilb_sampler = b.sampler(cfg.ilb.guidance_w);
                        ilb_optimize(x0, &backends, &ilb_sampler, &b.grid, &cfg.ilb)
                            .map(|(z, _)| (z, t.elapsed().as_secs_f64() * 1e3))
                    })
                    .as_ref()
                    .map_err(|e| Error::InvalidInput(format!("ilb failed: {e}")))?;
                z.clone()
            } else {
                z_enc.as_ref().map_err(|e| Error::InvalidInput(e.to_string()))?.clone()
            };
            let (z0_hat, iters) = roundtrip(b, &z0, method.inversion, cfg)?;
            let m = MetricReport::compare(x0, &ae.decode(&z0_hat)?, &b.perceptual, relative_l2(&z0_hat, &z0))?;
            // ILB time is shared between the +ilb methods; charge it to each.
            let ilb_ms = match (&z_ilb, method.ilb) {
                (Some(Ok((_, ms))), true) => *ms,
                _ => 0.0,
            };
            Ok(BenchmarkRow::ok(
                method.to_string(),
                id,
                m,
                iters,
                wall(start).map(|w| w + ilb_ms),
            ))
        })();
        rows.push(result.unwrap_or_else(|e| BenchmarkRow::failed(method.to_string(), id, &e)));
    }
    rows
}

fn mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (if n == 0 { f64::NAN } else { sum / n as f64 }, n)
}

fn summarize(method: &str, rows: &[BenchmarkRow]) -> MethodSummary {
    let mine: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&&BenchmarkRow> = mine.iter().filter(|r| r.error.is_none()).collect();
    let avg = |f: fn(&BenchmarkRow) -> f64| mean(ok.iter().map(|r| f(r))).0;
    MethodSummary {
        method: method.into(),
        instances: mine.len(),
        errors: mine.len() - ok.len(),
        psnr_db: avg(|r| r.psnr_db),
        ssim: avg(|r| r.ssim),
        perceptual: avg(|r| r.perceptual),
        roundtrip_l2_rel: avg(|r| r.roundtrip_l2_rel),
        mean_lbo_iters: avg(|r| r.mean_lbo_iters),
    }
}

/// Runs the benchmark on prebuilt backends.
pub fn run_with_backends(cfg: &RunConfig, backends: &Backends, images: &[Image<f64>]) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let per_instance = |(id, x0): (usize, &Image<f64>)| run_instance(backends, cfg, id, x0);
    let mut rows: Vec<BenchmarkRow> = if cfg.parallel {
        images.par_iter().enumerate().flat_map_iter(per_instance).collect()
    } else {
        images.iter().enumerate().flat_map(per_instance).collect()
    };
    rows.sort_by(|a, b| (a.instance_id, &a.method).cmp(&(b.instance_id, &b.method)));

    let mut names: Vec<String> = cfg.methods.iter().map(Method::to_string).collect();
    names.dedup();
    let summary = BenchmarkSummary {
        config: cfg.clone(),
        instances: images.len(),
        methods: names.iter().map(|m| summarize(m, &rows)).collect(),
        upper_bound: summarize(UPPER_BOUND, &rows),
    };
    Ok(BenchmarkOutput { rows, summary })
}

/// Builds the backends, generates the instances and runs every method.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let backends = Backends::build(cfg)?;
    run_with_backends(cfg, &backends, &instances(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            steps: 10,
            dataset: DatasetSpec {
                count: 3,
                height: 8,
                width: 8,
                ..DatasetSpec::default()
            },
            denoiser: DenoiserChoice::Analytic {
                ridge: 1e-3,
                train_count: 60,
            },
            autoencoder: AutoencoderChoice::Conv,
            ilb: IlbConfig {
                max_iters: 5,
                ..IlbConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for name in ["ddim", "lbo-g", "lbo-n+ilb", "lbo-h"] {
            assert_eq!(name.parse::<Method>().unwrap().to_string(), name);
        }
        assert!("nti".parse::<Method>().is_err());
        assert!("lbo-n+ilb+ilb".parse::<Method>().is_err());
    }

    #[test]
    fn empty_method_list_is_a_config_error() {
        let cfg = RunConfig {
            methods: vec![],
            ..small()
        };
        assert!(matches!(run_benchmark(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_survive_json() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
        assert!(RunConfig::from_json(r#"{"methods":["ddim","bogus"]}"#).is_err());
    }

    #[test]
    fn rows_sorted_with_upper_bound() {
        let out = run_benchmark(&small()).unwrap();
        assert_eq!(out.rows.len(), 3 * 5);
        let keys: Vec<_> = out.rows.iter().map(|r| (r.instance_id, r.method.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(out.rows.iter().all(|r| r.error.is_none() && r.wall_ms.is_none()));
        assert_eq!(out.summary.upper_bound.instances, 3);
        let csv = out.csv().unwrap();
        assert!(csv
            .starts_with("method,instance_id,psnr_db,ssim,perceptual,roundtrip_l2_rel,mean_lbo_iters,wall_ms,error\n"));
    }

    #[test]
    fn failures_become_marked_rows() {
        let cfg = RunConfig {
            methods: vec!["lbo-n".parse().unwrap()],
            ..small()
        };
        let b = Backends::build(&cfg).unwrap();
        let bad = Image::filled(ImageShape::new(4, 4, 1), 0.5);
        let out = run_with_backends(&cfg, &b, &[bad]).unwrap();
        assert!(out.rows.iter().all(|r| r.error.is_some() && r.psnr_db.is_nan()));
        assert_eq!(out.summary.methods[0].errors, 1);
        assert!(out.csv().unwrap().contains("nan"));
    }
}
