use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "lbi",
    version,
    about = "Diffusion inversion lab: DDIM, LBO and ILB on toy backends"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON); omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Method(s): ddim, lbo-g, lbo-n, lbo-h, each optionally suffixed `+ilb`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Number of sampler steps S.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Guidance scale, applied to generation, LBO and ILB alike.
    #[arg(long, global = true)]
    pub guidance: Option<f64>,
    /// ILB skip step δt.
    #[arg(long, global = true)]
    pub dt: Option<usize>,
    /// Drop ILB from every method.
    #[arg(long, global = true)]
    pub no_ilb: bool,
    /// Denoiser model file, replacing the configured backend.
    #[arg(long, global = true)]
    pub denoiser: Option<PathBuf>,
    /// Autoencoder model file, replacing the configured backend.
    #[arg(long, global = true)]
    pub autoencoder: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded dataset (dataset.json).
    GenData {
        /// gauss2d or shapes.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Fit a denoiser to a dataset (denoiser.lbm, train_report.json).
    TrainDenoiser {
        #[arg(long)]
        data: PathBuf,
        /// mlp or analytic.
        #[arg(long, default_value = "mlp")]
        kind: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        /// Ridge added to the covariance of the analytic model.
        #[arg(long, default_value_t = 1e-3)]
        ridge: f64,
    },
    /// Fit or instantiate an autoencoder (autoencoder.lbm, autoencoder_report.json).
    TrainAutoencoder {
        #[arg(long)]
        data: PathBuf,
        /// linear, conv or identity.
        #[arg(long, default_value = "linear")]
        kind: String,
        #[arg(long)]
        latent_dim: Option<usize>,
    },
    /// Generate latents from seeded noise (samples.json).
    Sample {
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Class label for class-conditional denoisers.
        #[arg(long)]
        class: Option<usize>,
    },
    /// Invert a stored latent (trajectory.json, steps.json).
    Invert {
        /// JSON array with the clean latent.
        #[arg(long)]
        latent: PathBuf,
    },
    /// Run image latent boosting on one image (ilb_latent.json, ilb_report.json, ilb_trace.csv).
    Ilb {
        /// Dataset file; defaults to the configured dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Invert and regenerate the configured instances, reporting latent error (roundtrip.json).
    Roundtrip {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Check analytic gradients against finite differences (gradcheck.json).
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Per-timestep inversion/replay divergence for plotting (divergence.csv).
    ReportPlotData {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Run the benchmark (benchmark.csv, summary.json).
    Benchmark,
}
