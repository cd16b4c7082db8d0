use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

/// Which recurrent vector a trace records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    #[default]
    Hidden,
    Cell,
}

/// Metadata for one captured state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateMeta {
    pub seq_id: usize,
    pub pos: usize,
    pub depth: Option<usize>,
    pub stack: Option<String>,
    pub can_end: Option<bool>,
    pub gold_token: Option<String>,
}

/// Stacked top-layer states, one row per captured position.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrace<T> {
    pub states: Matrix<T>,
    pub meta: Vec<StateMeta>,
}

impl<T: Scalar> StateTrace<T> {
    pub fn new(states: Matrix<T>, meta: Vec<StateMeta>) -> Result<Self> {
        if states.rows() != meta.len() {
            return Err(Error::Shape(format!(
                "{} states but {} metadata rows",
                states.rows(),
                meta.len()
            )));
        }
        Ok(StateTrace { states, meta })
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn concat(parts: Vec<StateTrace<T>>) -> Result<Self> {
        let mut mats = Vec::with_capacity(parts.len());
        let mut meta = Vec::new();
        for p in parts {
            mats.push(p.states);
            meta.extend(p.meta);
        }
        StateTrace::new(Matrix::vstack(&mats)?, meta)
    }

    /// Rows selected by `keep`.
    pub fn filter(&self, keep: impl Fn(&StateMeta) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.meta[i])).collect();
        let states = Matrix::from_fn(idx.len(), self.dim(), |i, j| self.states[(idx[i], j)]);
        StateTrace {
            states,
            meta: idx.iter().map(|&i| self.meta[i].clone()).collect(),
        }
    }

    /// `can_end` labels; fails if any row lacks one.
    pub fn can_end_labels(&self) -> Result<Vec<bool>> {
        self.meta
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.can_end
                    .ok_or_else(|| Error::Validation(format!("trace row {i} has no can_end label")))
            })
            .collect()
    }
}
