use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

use super::lm::LstmLm;
use super::lstm::LstmLayer;
use super::params::{ModelInfo, Parameterized};
use super::seq2seq::Seq2Seq;
use super::vocab::Vocab;

pub const CHECKPOINT_MAGIC: &str = "eoslab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LstmLm,
    Seq2seq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// On-disk model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub dims: Dims,
    /// Output vocabulary (the target side for encoder-decoders).
    pub vocab: Vocab,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_vocab: Option<Vocab>,
    pub condition: Condition,
    pub seed: u64,
    pub config_hash: String,
    pub training: serde_json::Value,
    pub params: Vec<ParamTensor>,
}

fn tensors<T: Scalar>(m: &impl Parameterized<T>) -> Vec<ParamTensor> {
    m.param_names()
        .into_iter()
        .zip(m.params())
        .map(|(name, p)| ParamTensor {
            name,
            rows: p.rows(),
            cols: p.cols(),
            data: p.data().iter().map(|x| x.as_f64()).collect(),
        })
        .collect()
}

fn restore<T: Scalar>(m: &mut impl Parameterized<T>, params: &[ParamTensor]) -> Result<()> {
    let names = m.param_names();
    if names.len() != params.len() {
        return Err(Error::Load(format!(
            "expected {} parameter tensors, found {}",
            names.len(),
            params.len()
        )));
    }
    for ((name, dst), src) in names.iter().zip(m.params_mut()).zip(params) {
        if *name != src.name
            || dst.shape() != (src.rows, src.cols)
            || src.data.len() != src.rows * src.cols
        {
            return Err(Error::Load(format!(
                "tensor {} ({}x{}) does not fit {name} {:?}",
                src.name,
                src.rows,
                src.cols,
                dst.shape()
            )));
        }
        *dst = Matrix::from_vec(
            src.rows,
            src.cols,
            src.data.iter().map(|&x| T::lit(x)).collect(),
        )?;
    }
    Ok(())
}

fn header(ck: &Checkpoint, kind: ModelKind) -> Result<()> {
    if ck.magic != CHECKPOINT_MAGIC {
        return Err(Error::Load(format!("bad magic {:?}", ck.magic)));
    }
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(Error::Load(format!(
            "unsupported format_version {} (expected {CHECKPOINT_VERSION})",
            ck.format_version
        )));
    }
    if ck.model_kind != kind {
        return Err(Error::Load(format!(
            "checkpoint holds {:?}, not {kind:?}",
            ck.model_kind
        )));
    }
    Ok(())
}

/// Conversion to and from the checkpoint document.
pub trait Checkpointable: Sized {
    fn to_checkpoint(&self) -> Checkpoint;
    fn from_checkpoint(ck: &Checkpoint) -> Result<Self>;

    fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}

/// Parses a checkpoint document without building a model.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    if value.get("magic").and_then(|m| m.as_str()) != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Load(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Load(format!("{}: {e}", path.display())))
}

impl<T: Scalar> Checkpointable for LstmLm<T> {
    fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            format_version: CHECKPOINT_VERSION,
            model_kind: ModelKind::LstmLm,
            dims: Dims {
                embed: self.embed_dim(),
                hidden: self.hidden_dim(),
                layers: 1,
            },
            vocab: self.vocab.clone(),
            src_vocab: None,
            condition: self.condition,
            seed: self.info.seed,
            config_hash: self.info.config_hash.clone(),
            training: self.info.training.clone(),
            params: tensors(self),
        }
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        header(ck, ModelKind::LstmLm)?;
        if ck.dims.layers != 1 {
            return Err(Error::Load("language models have one layer".into()));
        }
        let v = ck.vocab.len();
        let (e, h) = (ck.dims.embed, ck.dims.hidden);
        let mut m = LstmLm {
            vocab: ck.vocab.clone(),
            condition: ck.condition,
            embedding: Matrix::zeros(v, e),
            lstm: LstmLayer::zeros(e, h),
            out_w: Matrix::zeros(v, h),
            out_b: Matrix::zeros(1, v),
            info: ModelInfo {
                seed: ck.seed,
                config_hash: ck.config_hash.clone(),
                training: ck.training.clone(),
            },
        };
        restore(&mut m, &ck.params)?;
        Ok(m)
    }
}

impl<T: Scalar> Checkpointable for Seq2Seq<T> {
    fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            format_version: CHECKPOINT_VERSION,
            model_kind: ModelKind::Seq2seq,
            dims: Dims {
                embed: self.hidden_dim(),
                hidden: self.hidden_dim(),
                layers: self.layers(),
            },
            vocab: self.tgt_vocab.clone(),
            src_vocab: Some(self.src_vocab.clone()),
            condition: self.condition,
            seed: self.info.seed,
            config_hash: self.info.config_hash.clone(),
            training: self.info.training.clone(),
            params: tensors(self),
        }
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        header(ck, ModelKind::Seq2seq)?;
        let src_vocab = ck
            .src_vocab
            .clone()
            .ok_or_else(|| Error::Load("encoder-decoder checkpoint lacks src_vocab".into()))?;
        if ck.dims.embed != ck.dims.hidden {
            return Err(Error::Load(
                "encoder-decoder embed and hidden sizes differ".into(),
            ));
        }
        let mut m = Seq2Seq::new(
            src_vocab,
            ck.vocab.clone(),
            ck.condition,
            ck.dims.hidden,
            ck.dims.layers,
            ck.seed,
        )
        .map_err(|e| Error::Load(e.to_string()))?;
        m.info = ModelInfo {
            seed: ck.seed,
            config_hash: ck.config_hash.clone(),
            training: ck.training.clone(),
        };
        restore(&mut m, &ck.params)?;
        Ok(m)
    }
}

/// A checkpointed model of either kind.
#[derive(Clone, Debug)]
pub enum AnyModel<T> {
    Lm(LstmLm<T>),
    Seq2Seq(Seq2Seq<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn load(path: &Path) -> Result<Self> {
        let ck = read_checkpoint(path)?;
        Ok(match ck.model_kind {
            ModelKind::LstmLm => AnyModel::Lm(LstmLm::from_checkpoint(&ck)?),
            ModelKind::Seq2seq => AnyModel::Seq2Seq(Seq2Seq::from_checkpoint(&ck)?),
        })
    }

    pub fn condition(&self) -> Condition {
        match self {
            AnyModel::Lm(m) => m.condition,
            AnyModel::Seq2Seq(m) => m.condition,
        }
    }
}
