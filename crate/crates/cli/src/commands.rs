use std::fs;
use std::path::{Path, PathBuf};

use lbi_core::autoencoder::{fit_linear_autoencoder, Autoencoder, ConvAutoencoder, IdentityAutoencoder, Image};
use lbi_core::bench::{
    build_autoencoder, build_denoiser, dataset_images, instances, roundtrip, run_benchmark, AutoencoderChoice,
    Backends, DenoiserChoice, Method, RunConfig,
};
use lbi_core::data::{generate, Dataset, DatasetKind};
use lbi_core::denoiser::{
    train_mlp_denoiser, Condition, Denoiser, LinearGaussianDenoiser, MlpConfig, MlpDenoiser, MlpTrainConfig,
    TrainingSet,
};
use lbi_core::dynamics::Sampler;
use lbi_core::gradcheck::run_gradcheck;
use lbi_core::ilb::{ilb_optimize, IlbBackends};
use lbi_core::lbo;
use lbi_core::linalg::relative_l2;
use lbi_core::metrics::{psnr, trajectory_divergence};
use lbi_core::persist::{LoadedAutoencoder, ModelFile};
use lbi_core::rng::standard_normal;
use lbi_core::schedule::NoiseSchedule;
use serde_json::{json, Value};

use crate::args::{Command, Common};
use crate::error::{CliError, CliResult};

pub fn load_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::from(e).with("path", path.display().to_string()))?;
            RunConfig::from_json(&text).map_err(|e| CliError::from(e).with("path", path.display().to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = c.steps {
        cfg.steps = steps;
    }
    if let Some(w) = c.guidance {
        cfg.guidance = w;
        cfg.lbo_g.guidance_w = w;
        cfg.lbo_n.guidance_w = w;
        cfg.lbo_h.guidance_w = w;
        cfg.ilb.guidance_w = w;
    }
    if let Some(dt) = c.dt {
        cfg.ilb.dt = Some(dt);
    }
    if !c.method.is_empty() {
        cfg.methods = c.method.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    }
    if c.no_ilb {
        for m in &mut cfg.methods {
            m.ilb = false;
        }
        let mut seen = Vec::new();
        cfg.methods.retain(|m| {
            let fresh = !seen.contains(m);
            seen.push(*m);
            fresh
        });
    }
    if let Some(p) = &c.denoiser {
        cfg.denoiser = DenoiserChoice::File {
            path: p.display().to_string(),
        };
    }
    if let Some(p) = &c.autoencoder {
        cfg.autoencoder = AutoencoderChoice::File {
            path: p.display().to_string(),
        };
    }
    Ok(cfg)
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult<String> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::from(e).with("path", path.display().to_string()))?;
    Ok(path.display().to_string())
}

fn read_dataset(path: &PathBuf) -> CliResult<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).with("path", path.display().to_string()))?;
    Ok(Dataset::from_json(&text)?)
}

/// Points the config's dataset spec at the shape of an existing dataset.
fn adopt_dataset(cfg: &mut RunConfig, ds: &Dataset) {
    cfg.dataset.kind = ds.kind;
    if let Some(img) = ds.images.first() {
        cfg.dataset.height = img.height;
        cfg.dataset.width = img.width;
    }
}

/// The configured denoiser and its schedule, without building an
/// autoencoder unless fitting requires one.
fn latent_model(cfg: &RunConfig) -> CliResult<(Box<dyn Denoiser<f64>>, NoiseSchedule<f64>)> {
    if matches!(cfg.denoiser, DenoiserChoice::File { .. }) {
        return Ok(build_denoiser(cfg, None)?);
    }
    let ae = build_autoencoder(cfg)?;
    Ok(build_denoiser(cfg, Some(ae.as_ref()))?)
}

/// A JSON number, or the `inf`/`nan` marker string when not finite.
fn metric(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(lbi_core::metrics::format_metric(v))
    }
}

fn first_method(cfg: &RunConfig, c: &Common, fallback: &str) -> CliResult<Method> {
    if c.method.is_empty() {
        Ok(fallback.parse()?)
    } else {
        Ok(cfg.methods[0])
    }
}

pub fn run(command: &Command, c: &Common) -> CliResult<Value> {
    let mut cfg = load_config(c)?;
    let out = &c.out;
    match command {
        Command::GenData { kind, count } => {
            if let Some(k) = kind {
                cfg.dataset.kind = k.parse::<DatasetKind>()?;
            }
            if let Some(n) = count {
                cfg.dataset.count = *n;
            }
            let ds = generate(&cfg.dataset, cfg.seed)?;
            let path = write(out, "dataset.json", ds.to_json()?)?;
            Ok(json!({ "path": path, "kind": ds.kind, "count": ds.len(), "seed": cfg.seed }))
        }

        Command::TrainDenoiser {
            data,
            kind,
            epochs,
            hidden,
            ridge,
        } => {
            let ds = read_dataset(data)?;
            adopt_dataset(&mut cfg, &ds);
            let schedule = cfg.schedule.build::<f64>()?;
            let labels = (!ds.labels.is_empty()).then(|| ds.labels.clone());
            let points = match ds.kind {
                DatasetKind::Gauss2d => ds.points.clone(),
                DatasetKind::Shapes => {
                    let ae = build_autoencoder(&cfg)?;
                    ds.images.iter().map(|x| ae.encode(x)).collect::<Result<_, _>>()?
                }
            };
            let (file, report) = match kind.as_str() {
                "analytic" => {
                    let m = LinearGaussianDenoiser::fit(schedule, &points, *ridge)?;
                    let report = json!({ "kind": "analytic", "samples": points.len(), "ridge": ridge });
                    (ModelFile::from(&m), report)
                }
                "mlp" => {
                    let mut train = match &cfg.denoiser {
                        DenoiserChoice::Mlp { train, .. } => train.clone(),
                        _ => MlpTrainConfig {
                            seed: cfg.seed,
                            ..MlpTrainConfig::default()
                        },
                    };
                    if let Some(e) = epochs {
                        train.max_epochs = *e;
                    }
                    if let Some(h) = hidden {
                        train.hidden = *h;
                    }
                    if let Some(seed) = c.seed {
                        train.seed = seed;
                    }
                    let (m, report) = train_mlp_denoiser(&TrainingSet { points, labels }, &schedule, &train)?;
                    (ModelFile::from(&m), serde_json::to_value(report)?)
                }
                other => {
                    return Err(
                        CliError::new("invalid_input", "denoiser kind must be mlp or analytic").with("kind", other)
                    )
                }
            };
            let model = write(out, "denoiser.lbm", file.to_bytes()?)?;
            let report_path = write(out, "train_report.json", serde_json::to_string_pretty(&report)?)?;
            Ok(json!({ "model": model, "report": report_path, "train": report }))
        }

        Command::TrainAutoencoder { data, kind, latent_dim } => {
            let ds = read_dataset(data)?;
            let images = dataset_images(ds);
            let shape = images
                .first()
                .map(Image::shape)
                .ok_or_else(|| CliError::new("invalid_input", "dataset is empty"))?;
            let ae = match kind.as_str() {
                "identity" => LoadedAutoencoder::Identity(IdentityAutoencoder::new(shape)),
                "conv" => LoadedAutoencoder::Conv(ConvAutoencoder::new(shape)?),
                "linear" => {
                    let k = latent_dim.unwrap_or((shape.pixel_count() / 4).max(1));
                    LoadedAutoencoder::Linear(fit_linear_autoencoder(&images, k)?)
                }
                other => {
                    return Err(
                        CliError::new("invalid_input", "autoencoder kind must be linear, conv or identity")
                            .with("kind", other),
                    )
                }
            };
            let mut total = 0.0;
            for x in &images {
                total += psnr(x, &ae.decode(&ae.encode(x)?)?.clamped(), 1.0)?;
            }
            let report = json!({
                "kind": kind,
                "latent_dim": ae.latent_dim(),
                "image_shape": [shape.height, shape.width, shape.channels],
                "mean_roundtrip_psnr_db": metric(total / images.len() as f64),
            });
            let model = write(out, "autoencoder.lbm", ae.to_file().to_bytes()?)?;
            let report_path = write(out, "autoencoder_report.json", serde_json::to_string_pretty(&report)?)?;
            Ok(json!({ "model": model, "report": report_path, "summary": report }))
        }

        Command::Sample { count, class } => {
            let b = Backends::build(&cfg)?;
            let mut s = b.sampler(cfg.guidance);
            if let Some(k) = class {
                s = s.with_condition(Condition::ClassLabel(*k), cfg.guidance);
            }
            let d = b.denoiser.latent_dim();
            let mut samples = Vec::with_capacity(*count);
            for i in 0..*count {
                let z_top: Vec<f64> = standard_normal(cfg.seed, i as u64, d);
                let traj = s.generate_trajectory(&b.grid, &z_top)?;
                let z0 = traj.last().expect("nonempty").to_vec();
                let image = b.autoencoder.decode(&z0)?.clamped();
                samples.push(json!({ "id": i, "z_top": z_top, "z0": z0, "image": image }));
            }
            let path = write(out, "samples.json", serde_json::to_string(&samples)?)?;
            Ok(json!({ "path": path, "count": count }))
        }

        Command::Invert { latent } => {
            let text =
                fs::read_to_string(latent).map_err(|e| CliError::from(e).with("path", latent.display().to_string()))?;
            let z0: Vec<f64> = serde_json::from_str(&text)?;
            let method = first_method(&cfg, c, "lbo-n")?;
            if method.ilb {
                return Err(
                    CliError::new("invalid_input", "invert works on latents; ILB needs an image")
                        .with("method", method.to_string()),
                );
            }
            let (model, schedule) = latent_model(&cfg)?;
            let grid = schedule.uniform_grid(cfg.steps)?;
            let sampler = |w: f64| Sampler::new(model.as_ref(), &schedule).with_condition(Condition::Unconditional, w);
            let (traj, steps) = match cfg.lbo_config(method.inversion) {
                None => (sampler(cfg.guidance).invert_trajectory(&grid, &z0)?, Vec::new()),
                Some(lbo_cfg) => lbo::invert_trajectory(&sampler(lbo_cfg.guidance_w), &grid, &z0, &lbo_cfg)?,
            };
            let replay = sampler(cfg.guidance).generate_trajectory(&grid, traj.last().expect("nonempty"))?;
            let err = relative_l2(replay.last().expect("nonempty"), &z0);
            let trajectory = write(out, "trajectory.json", serde_json::to_string(&traj)?)?;
            let steps_path = write(out, "steps.json", serde_json::to_string(&steps)?)?;
            Ok(json!({
                "method": method.to_string(),
                "trajectory": trajectory,
                "steps": steps_path,
                "z_top": traj.last(),
                "roundtrip_l2_rel": err,
            }))
        }

        Command::Ilb { data, index } => {
            let images = match data {
                Some(p) => {
                    let ds = read_dataset(p)?;
                    adopt_dataset(&mut cfg, &ds);
                    dataset_images(ds)
                }
                None => instances(&cfg)?,
            };
            let x0 = images.get(*index).ok_or_else(|| {
                CliError::new("invalid_input", "image index out of range")
                    .with("index", index)
                    .with("count", images.len())
            })?;
            let b = Backends::build(&cfg)?;
            let backends = IlbBackends {
                autoencoder: b.autoencoder.as_ref(),
                perceptual: &b.perceptual,
            };
            let (z, report) = ilb_optimize(x0, &backends, &b.sampler(cfg.ilb.guidance_w), &b.grid, &cfg.ilb)?;
            let before = psnr(x0, &b.autoencoder.decode(&b.autoencoder.encode(x0)?)?.clamped(), 1.0)?;
            let after = psnr(x0, &b.autoencoder.decode(&z)?.clamped(), 1.0)?;
            let latent = write(out, "ilb_latent.json", serde_json::to_string(&z)?)?;
            let report_path = write(out, "ilb_report.json", serde_json::to_string_pretty(&report)?)?;
            let trace = write(out, "ilb_trace.csv", report.trace_csv()?)?;
            Ok(json!({
                "latent": latent,
                "report": report_path,
                "trace": trace,
                "iters_used": report.iters_used,
                "initial_total": report.initial.total,
                "final_total": report.final_values.total,
                "psnr_before_db": metric(before),
                "psnr_after_db": metric(after),
            }))
        }

        Command::Roundtrip { count } => {
            if let Some(n) = count {
                cfg.dataset.count = *n;
            }
            if c.method.is_empty() {
                cfg.methods = vec!["ddim".parse()?];
            }
            let b = Backends::build(&cfg)?;
            let images = instances(&cfg)?;
            let mut results = Vec::new();
            for &method in &cfg.methods {
                let mut errors = Vec::with_capacity(images.len());
                for x0 in &images {
                    let z0 = if method.ilb {
                        let backends = IlbBackends {
                            autoencoder: b.autoencoder.as_ref(),
                            perceptual: &b.perceptual,
                        };
                        ilb_optimize(x0, &backends, &b.sampler(cfg.ilb.guidance_w), &b.grid, &cfg.ilb)?.0
                    } else {
                        b.autoencoder.encode(x0)?
                    };
                    let (z_hat, _) = roundtrip(&b, &z0, method.inversion, &cfg)?;
                    errors.push(relative_l2(&z_hat, &z0));
                }
                results.push(json!({
                    "method": method.to_string(),
                    "instances": errors.len(),
                    "mean_roundtrip_l2_rel": errors.iter().sum::<f64>() / errors.len() as f64,
                    "max_roundtrip_l2_rel": errors.iter().copied().fold(0.0, f64::max),
                }));
            }
            let path = write(out, "roundtrip.json", serde_json::to_string_pretty(&results)?)?;
            Ok(json!({ "path": path, "seed": cfg.seed, "results": results }))
        }

        Command::Gradcheck { probes } => {
            let ae = build_autoencoder(&cfg)?;
            let schedule = cfg.schedule.build::<f64>()?;
            let random;
            let loaded;
            let (model, schedule): (&dyn Denoiser<f64>, _) = match &c.denoiser {
                Some(_) => {
                    let b = Backends::build(&cfg)?;
                    loaded = b.denoiser;
                    (loaded.as_ref(), b.schedule)
                }
                None => {
                    let mlp = MlpConfig {
                        hidden: 32,
                        ..MlpConfig::new(ae.latent_dim())
                    };
                    random = MlpDenoiser::new_random(mlp, schedule.clone(), cfg.seed)?;
                    (&random, schedule)
                }
            };
            let perceptual =
                lbi_core::perceptual::RandomConvFeatures::new(ae.image_shape().channels, cfg.perceptual.seed);
            let report = run_gradcheck(model, &schedule, ae.as_ref(), &perceptual, *probes, cfg.seed)?;
            let path = write(out, "gradcheck.json", serde_json::to_string_pretty(&report)?)?;
            if !report.passed {
                return Err(
                    CliError::new("gradcheck_failed", "relative gradient error above tolerance")
                        .with("report", &report)
                        .with("path", path),
                );
            }
            Ok(json!({ "path": path, "max_rel_error": report.max_rel_error, "report": report }))
        }

        Command::ReportPlotData { count } => {
            cfg.dataset.count = *count;
            if c.method.is_empty() {
                cfg.methods = vec!["ddim".parse()?, "lbo-n".parse()?];
            }
            let b = Backends::build(&cfg)?;
            let s = b.sampler(cfg.guidance);
            let mut w = String::from("method,instance_id,t,distance\n");
            for (id, x0) in instances(&cfg)?.iter().enumerate() {
                let z0 = b.autoencoder.encode(x0)?;
                for &method in &cfg.methods {
                    let inv = match cfg.lbo_config(method.inversion) {
                        None => s.invert_trajectory(&b.grid, &z0)?,
                        Some(l) => lbo::invert_trajectory(&b.sampler(l.guidance_w), &b.grid, &z0, &l)?.0,
                    };
                    let gen = s.generate_trajectory(&b.grid, inv.last().expect("nonempty"))?;
                    for e in trajectory_divergence(&inv, &gen)? {
                        w.push_str(&format!("{},{id},{},{:e}\n", method.inversion.name(), e.t, e.distance));
                    }
                }
            }
            let path = write(out, "divergence.csv", w)?;
            Ok(json!({ "path": path, "instances": count }))
        }

        Command::Benchmark => {
            let result = run_benchmark(&cfg)?;
            let csv = write(out, "benchmark.csv", result.csv()?)?;
            let summary = write(out, "summary.json", result.summary_json()?)?;
            let means = serde_json::to_value(&result.summary.methods)?;
            Ok(json!({ "csv": csv, "summary": summary, "methods": means, "upper_bound": result.summary.upper_bound }))
        }
    }
}
