//! Model files: the 8-byte magic `LABMDL1\n`, one line of JSON header, then
//! the header's arrays as raw little-endian `f64` in manifest order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Autoencoder, ConvAutoencoder, IdentityAutoencoder, Image, ImageShape, LinearAutoencoder};
use crate::denoiser::{Condition, Denoiser, LinearGaussianDenoiser, MlpConfig, MlpDenoiser};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleParams};

pub const MAGIC: &[u8; 8] = b"LABMDL1\n";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArrayEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: String,
    pub dims: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleParams>,
    pub seed: u64,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub header: ModelHeader,
    /// One buffer per manifest entry.
    pub data: Vec<Vec<f64>>,
}

impl ModelFile {
    fn new(kind: &str, dims: &[(&str, usize)], schedule: Option<ScheduleParams>, seed: u64) -> Self {
        Self {
            header: ModelHeader {
                kind: kind.into(),
                dims: dims.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
                schedule,
                seed,
                arrays: Vec::new(),
            },
            data: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, shape: Vec<usize>, values: &[f64]) {
        self.header.arrays.push(ArrayEntry {
            name: name.into(),
            shape,
        });
        self.data.push(values.to_vec());
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for (entry, buf) in self.header.arrays.iter().zip(&self.data) {
            if entry.len() != buf.len() {
                return Err(Error::Format(format!("array {} length mismatch", entry.name)));
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        serde_json::to_writer(&mut out, &self.header)?;
        out.push(b'\n');
        for buf in &self.data {
            for v in buf {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::Format("missing LABMDL1 magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("unterminated header".into()))?;
        let header: ModelHeader = serde_json::from_slice(&rest[..nl])?;
        let mut body = &rest[nl + 1..];
        let total: usize = header.arrays.iter().map(ArrayEntry::len).sum();
        if body.len() != total * 8 {
            return Err(Error::Format(format!(
                "payload has {} bytes, manifest needs {}",
                body.len(),
                total * 8
            )));
        }
        let mut data = Vec::with_capacity(header.arrays.len());
        for entry in &header.arrays {
            let (chunk, tail) = body.split_at(entry.len() * 8);
            data.push(
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect(),
            );
            body = tail;
        }
        Ok(Self { header, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn dim(&self, name: &str) -> Result<usize> {
        self.header
            .dims
            .get(name)
            .copied()
            .ok_or_else(|| Error::Format(format!("header lacks dim {name:?}")))
    }

    fn array(&self, name: &str) -> Result<&[f64]> {
        self.header
            .arrays
            .iter()
            .position(|a| a.name == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::Format(format!("missing array {name:?}")))
    }

    fn schedule(&self) -> Result<&ScheduleParams> {
        self.header
            .schedule
            .as_ref()
            .ok_or_else(|| Error::Format("header lacks schedule".into()))
    }

    fn image_shape(&self) -> Result<ImageShape> {
        Ok(ImageShape::new(
            self.dim("height")?,
            self.dim("width")?,
            self.dim("channels")?,
        ))
    }
}

pub const KIND_MLP: &str = "mlp_denoiser";
pub const KIND_GAUSSIAN: &str = "linear_gaussian_denoiser";
pub const KIND_IDENTITY_AE: &str = "identity_autoencoder";
pub const KIND_LINEAR_AE: &str = "linear_autoencoder";
pub const KIND_CONV_AE: &str = "conv_autoencoder";

impl From<&MlpDenoiser<f64>> for ModelFile {
    fn from(m: &MlpDenoiser<f64>) -> Self {
        let c = m.config();
        let mut f = ModelFile::new(
            KIND_MLP,
            &[
                ("latent_dim", c.latent_dim),
                ("hidden", c.hidden),
                ("num_classes", c.num_classes),
                ("condition_width", c.condition_width),
            ],
            Some(m.schedule().params().clone()),
            m.seed(),
        );
        for (name, shape, range) in m.layout().manifest(c, m.schedule().t_train()) {
            f.push(name, shape, &m.params()[range]);
        }
        f
    }
}

impl From<&LinearGaussianDenoiser<f64>> for ModelFile {
    fn from(m: &LinearGaussianDenoiser<f64>) -> Self {
        let d = m.mean().len();
        let k = m.class_means().len();
        let mut f = ModelFile::new(
            KIND_GAUSSIAN,
            &[("latent_dim", d), ("num_classes", k)],
            Some(m.schedule().params().clone()),
            0,
        );
        f.push("mean", vec![d], m.mean());
        f.push("covariance", vec![d, d], m.covariance());
        f.push("class_means", vec![k, d], &m.class_means().concat());
        f
    }
}

fn shape_dims(s: ImageShape) -> [(&'static str, usize); 3] {
    [("height", s.height), ("width", s.width), ("channels", s.channels)]
}

/// A denoiser restored from a model file.
#[derive(Clone, Debug)]
pub enum LoadedDenoiser {
    Mlp(MlpDenoiser<f64>),
    Gaussian(LinearGaussianDenoiser<f64>),
}

impl LoadedDenoiser {
    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let schedule = f.schedule()?.build::<f64>()?;
        match f.header.kind.as_str() {
            KIND_MLP => {
                let cfg = MlpConfig {
                    latent_dim: f.dim("latent_dim")?,
                    hidden: f.dim("hidden")?,
                    num_classes: f.dim("num_classes")?,
                    condition_width: f.dim("condition_width")?,
                };
                let params = f.data.concat();
                Ok(Self::Mlp(MlpDenoiser::from_parts(
                    cfg,
                    schedule,
                    params,
                    f.header.seed,
                )?))
            }
            KIND_GAUSSIAN => {
                let d = f.dim("latent_dim")?;
                let m =
                    LinearGaussianDenoiser::new(schedule, f.array("mean")?.to_vec(), f.array("covariance")?.to_vec())?;
                let means: Vec<Vec<f64>> = f.array("class_means")?.chunks(d.max(1)).map(<[f64]>::to_vec).collect();
                Ok(Self::Gaussian(m.with_class_means(means)?))
            }
            other => Err(Error::Format(format!("{other:?} is not a denoiser"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&ModelFile::load(path)?)
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            Self::Mlp(m) => m.into(),
            Self::Gaussian(m) => m.into(),
        }
    }

    /// The schedule the model was trained under.
    pub fn schedule(&self) -> &NoiseSchedule<f64> {
        match self {
            Self::Mlp(m) => m.schedule(),
            Self::Gaussian(m) => m.schedule(),
        }
    }

    fn inner(&self) -> &dyn Denoiser<f64> {
        match self {
            Self::Mlp(m) => m,
            Self::Gaussian(m) => m,
        }
    }
}

impl Denoiser<f64> for LoadedDenoiser {
    fn latent_dim(&self) -> usize {
        self.inner().latent_dim()
    }

    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn condition_width(&self) -> usize {
        self.inner().condition_width()
    }

    fn eval(&self, z: &[f64], t: usize, cond: &Condition<f64>) -> Result<Vec<f64>> {
        self.inner().eval(z, t, cond)
    }

    fn vjp(&self, z: &[f64], t: usize, cond: &Condition<f64>, v: &[f64]) -> Result<Vec<f64>> {
        self.inner().vjp(z, t, cond, v)
    }

    fn supports_exact_vjp(&self) -> bool {
        self.inner().supports_exact_vjp()
    }
}

/// An autoencoder restored from a model file.
#[derive(Clone, Debug)]
pub enum LoadedAutoencoder {
    Identity(IdentityAutoencoder),
    Linear(LinearAutoencoder<f64>),
    Conv(ConvAutoencoder<f64>),
}

impl LoadedAutoencoder {
    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let shape = f.image_shape()?;
        match f.header.kind.as_str() {
            KIND_IDENTITY_AE => Ok(Self::Identity(IdentityAutoencoder::new(shape))),
            KIND_CONV_AE => Ok(Self::Conv(ConvAutoencoder::new(shape)?)),
            KIND_LINEAR_AE => Ok(Self::Linear(LinearAutoencoder::new(
                shape,
                f.dim("latent_dim")?,
                f.array("projection")?.to_vec(),
                f.array("reconstruction")?.to_vec(),
                f.array("mean")?.to_vec(),
            )?)),
            other => Err(Error::Format(format!("{other:?} is not an autoencoder"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&ModelFile::load(path)?)
    }

    pub fn to_file(&self) -> ModelFile {
        let shape = self.inner().image_shape();
        let dims = shape_dims(shape);
        match self {
            Self::Identity(_) => ModelFile::new(KIND_IDENTITY_AE, &dims, None, 0),
            Self::Conv(_) => ModelFile::new(KIND_CONV_AE, &dims, None, 0),
            Self::Linear(ae) => {
                let k = Autoencoder::<f64>::latent_dim(ae);
                let n = shape.pixel_count();
                let mut all = dims.to_vec();
                all.push(("latent_dim", k));
                let mut f = ModelFile::new(KIND_LINEAR_AE, &all, None, 0);
                f.push("projection", vec![k, n], ae.projection());
                f.push("reconstruction", vec![n, k], ae.reconstruction());
                f.push("mean", vec![n], ae.mean());
                f
            }
        }
    }

    fn inner(&self) -> &dyn Autoencoder<f64> {
        match self {
            Self::Identity(a) => a,
            Self::Linear(a) => a,
            Self::Conv(a) => a,
        }
    }
}

impl Autoencoder<f64> for LoadedAutoencoder {
    fn image_shape(&self) -> ImageShape {
        self.inner().image_shape()
    }

    fn latent_dim(&self) -> usize {
        self.inner().latent_dim()
    }

    fn encode(&self, x: &Image<f64>) -> Result<Vec<f64>> {
        self.inner().encode(x)
    }

    fn decode(&self, z: &[f64]) -> Result<Image<f64>> {
        self.inner().decode(z)
    }

    fn decoder_vjp(&self, z: &[f64], v: &Image<f64>) -> Result<Vec<f64>> {
        self.inner().decoder_vjp(z, v)
    }

    fn supports_exact_vjp(&self) -> bool {
        self.inner().supports_exact_vjp()
    }
}
