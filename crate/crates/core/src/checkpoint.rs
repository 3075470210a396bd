//! Checkpoint files: a magic tag, a JSON header holding the model spec and
//! tensor names, then every tensor in PHT1 framing.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::kernels::Mode;
use crate::models::{AttentionPoolModel, AttentionPoolSpec, Classifier, Model, ModelSpec};
use crate::nn::{Binding, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor_from, write_tensor_to, Tensor};
use crate::train::{Adam, AdamConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PHCK1\0\0\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDesc {
    Resnet { spec: ModelSpec },
    AttentionPool { spec: AttentionPoolSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDesc {
    pub config: AdamConfig,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelDesc,
    pub params: Vec<String>,
    pub buffers: Vec<String>,
    pub optimizer: Option<OptimizerDesc>,
    /// Free-form run details (training config, best epoch, input size).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// A model of either kind, restored from disk.
#[derive(Clone, Debug)]
pub enum AnyModel<T> {
    Resnet(Model<T>),
    AttentionPool(AttentionPoolModel<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn desc(&self) -> ModelDesc {
        match self {
            AnyModel::Resnet(m) => ModelDesc::Resnet { spec: m.spec.clone() },
            AnyModel::AttentionPool(m) => ModelDesc::AttentionPool { spec: m.spec.clone() },
        }
    }

    fn inner(&mut self) -> &mut dyn Classifier<T> {
        match self {
            AnyModel::Resnet(m) => m,
            AnyModel::AttentionPool(m) => m,
        }
    }

    fn inner_ref(&self) -> &dyn Classifier<T> {
        match self {
            AnyModel::Resnet(m) => m,
            AnyModel::AttentionPool(m) => m,
        }
    }

    /// Input channels the model expects.
    pub fn in_channels(&self) -> usize {
        match self {
            AnyModel::Resnet(m) => m.spec.in_channels,
            AnyModel::AttentionPool(m) => m.spec.in_channels,
        }
    }
}

impl<T: Scalar> Classifier<T> for AnyModel<T> {
    fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<(Var, Binding)> {
        self.inner().forward(g, x, mode)
    }
    fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.inner().logits(x)
    }
    fn params(&self) -> &ParamStore<T> {
        self.inner_ref().params()
    }
    fn params_mut(&mut self) -> &mut ParamStore<T> {
        self.inner().params_mut()
    }
    fn buffers(&self) -> &ParamStore<T> {
        self.inner_ref().buffers()
    }
    fn buffers_mut(&mut self) -> &mut ParamStore<T> {
        self.inner().buffers_mut()
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: AnyModel<T>,
    pub optimizer: Option<Adam<T>>,
    pub meta: serde_json::Value,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(fs::File::open(path)?))
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let names = |s: &ParamStore<T>| s.iter().map(|(n, _)| n.to_owned()).collect::<Vec<_>>();
        let header = CheckpointHeader {
            model: self.model.desc(),
            params: names(self.model.params()),
            buffers: names(self.model.buffers()),
            optimizer: self.optimizer.as_ref().map(|a| OptimizerDesc { config: a.config, step: a.step }),
            meta: self.meta.clone(),
        };
        let text = serde_json::to_vec(&header)?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(text.len() as u64).to_le_bytes())?;
        out.write_all(&text)?;
        for (_, t) in self.model.params().iter().chain(self.model.buffers().iter()) {
            write_tensor_to(out, t)?;
        }
        if let Some(a) = &self.optimizer {
            for t in a.m.iter().chain(&a.v) {
                write_tensor_to(out, t)?;
            }
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            bail!(Format, "not a checkpoint file (bad magic)");
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 30 {
            bail!(Format, "checkpoint header of {len} bytes is implausible");
        }
        let mut text = vec![0u8; len as usize];
        input.read_exact(&mut text)?;
        let header: CheckpointHeader = serde_json::from_slice(&text)?;

        // weights are overwritten below, so the init stream is irrelevant
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = match &header.model {
            ModelDesc::Resnet { spec } => AnyModel::Resnet(Model::build(spec, &mut rng)?),
            ModelDesc::AttentionPool { spec } => AnyModel::AttentionPool(AttentionPoolModel::build(spec, &mut rng)?),
        };
        let mut read_named = |names: &[String]| -> Result<Vec<(String, Tensor<T>)>> {
            names.iter().map(|n| Ok((n.clone(), read_tensor_from(input)?.exact::<T>()?))).collect()
        };
        let params = read_named(&header.params)?;
        let buffers = read_named(&header.buffers)?;
        model.params_mut().load(params)?;
        model.buffers_mut().load(buffers)?;
        let optimizer = match header.optimizer {
            Some(desc) => {
                let n = header.params.len();
                let mut adam = Adam::new(desc.config, model.params());
                adam.step = desc.step;
                let m = read_named(&header.params)?;
                let v = read_named(&header.params)?;
                for (i, ((_, mi), (_, vi))) in m.into_iter().zip(v).enumerate().take(n) {
                    if mi.shape() != adam.m[i].shape() || vi.shape() != adam.v[i].shape() {
                        bail!(Format, "optimizer moment {i} has the wrong shape");
                    }
                    adam.m[i] = mi;
                    adam.v[i] = vi;
                }
                Some(adam)
            }
            None => None,
        };
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            bail!(Format, "{} trailing bytes after the last tensor", rest.len());
        }
        Ok(Checkpoint { model, optimizer, meta: header.meta })
    }
}
