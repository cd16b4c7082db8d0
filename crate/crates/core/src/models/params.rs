use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Scalar};

/// Provenance recorded in checkpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub training: serde_json::Value,
}

/// Flat, ordered access to a model's tensors.
///
/// Gradients are `Vec<Matrix<T>>` in the same order as [`params`].
///
/// [`params`]: Parameterized::params
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<&Matrix<T>>;
    fn params_mut(&mut self) -> Vec<&mut Matrix<T>>;
    fn param_names(&self) -> Vec<String>;

    fn zero_grads(&self) -> Vec<Matrix<T>> {
        self.params()
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// All parameters flattened in order.
    fn flat_params(&self) -> Vec<T> {
        self.params()
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect()
    }

    fn set_flat_params(&mut self, flat: &[T]) {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }
}

#[cfg(test)]
pub(crate) fn flatten<T: Scalar>(grads: &[Matrix<T>]) -> Vec<T> {
    grads
        .iter()
        .flat_map(|g| g.data().iter().copied())
        .collect()
}
