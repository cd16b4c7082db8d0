use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, Scalar};

/// Greedy decoding controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOptions {
    /// Zero the EOS probability (and renormalize) before each argmax.
    pub mask_eos: bool,
    /// Emit exactly this many tokens, with EOS masked throughout.
    pub forced_len: Option<usize>,
    pub max_len: usize,
}

impl DecodeOptions {
    /// Decode until EOS or `max_len`.
    pub fn standard(max_len: usize) -> Self {
        DecodeOptions {
            mask_eos: false,
            forced_len: None,
            max_len,
        }
    }

    /// Length-oracle decoding: exactly `len` tokens, EOS never emitted.
    pub fn oracle(len: usize) -> Self {
        DecodeOptions {
            mask_eos: true,
            forced_len: Some(len),
            max_len: len,
        }
    }

    pub(crate) fn validate(&self, eos: Option<usize>) -> Result<()> {
        if self.max_len < 1 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if let Some(n) = self.forced_len {
            if n > self.max_len {
                return Err(Error::Config(format!(
                    "forced_len {n} exceeds max_len {}",
                    self.max_len
                )));
            }
        }
        if (self.mask_eos || self.forced_len.is_some()) && eos.is_none() {
            return Err(Error::Config(
                "EOS masking requested but the vocabulary has no EOS".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn masks_eos(&self) -> bool {
        self.mask_eos || self.forced_len.is_some()
    }

    pub(crate) fn steps(&self) -> usize {
        self.forced_len.unwrap_or(self.max_len)
    }
}

/// Zeros the entries in `mask` and renormalizes the rest to sum to one.
pub fn masked_distribution<T: Scalar>(probs: &[T], mask: &[usize]) -> Result<Vec<T>> {
    let mut out = probs.to_vec();
    for &m in mask {
        if m >= out.len() {
            return Err(Error::Validation(format!(
                "mask index {m} outside a {}-way distribution",
                out.len()
            )));
        }
        out[m] = T::zero();
    }
    let total: T = out.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Degenerate(
            "mask removes all probability mass".into(),
        ));
    }
    out.iter_mut().for_each(|p| *p = *p / total);
    Ok(out)
}

/// Picks the next token from a model distribution under `opts`.
/// Returns `None` when decoding should stop on EOS.
pub(crate) fn choose_next<T: Scalar>(
    probs: &[T],
    eos: Option<usize>,
    opts: &DecodeOptions,
) -> Result<Option<usize>> {
    if opts.masks_eos() {
        let eos = eos.expect("validated");
        let masked = masked_distribution(probs, &[eos])?;
        Ok(Some(argmax(&masked)))
    } else {
        let next = argmax(probs);
        Ok(if Some(next) == eos { None } else { Some(next) })
    }
}
