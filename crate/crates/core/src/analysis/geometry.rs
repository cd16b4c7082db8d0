use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::StateTrace;
use crate::numerics::{Matrix, Scalar};

use super::pca::{jacobi_eigen, pca_top2};
use super::probe::{eval_probe, train_probe, ProbeConfig};

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCorrelation {
    pub stack: String,
    pub size: usize,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub explained: [f64; 2],
    /// Probe accuracy separating empty-stack states from all others.
    pub empty_stack_separability: f64,
    /// Position correlation along each cluster's major axis in PC space,
    /// strongest first.
    pub clusters: Vec<ClusterCorrelation>,
}

impl GeometryReport {
    pub fn top2(&self) -> f64 {
        self.explained[0] + self.explained[1]
    }

    pub fn max_abs_r(&self) -> f64 {
        self.clusters.iter().map(|c| c.r.abs()).fold(0.0, f64::max)
    }
}

/// Length-manifold diagnostics on a labelled Dyck trace.
pub fn geometry_report<T: Scalar>(
    trace: &StateTrace<T>,
    min_cluster: usize,
) -> Result<GeometryReport> {
    let pca = pca_top2(&trace.states)?;
    let can_end = trace.can_end_labels()?;
    let probe = train_probe(&trace.states, &can_end, ProbeConfig::default())?;
    let separability = eval_probe(&probe, &trace.states, &can_end)?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, m) in trace.meta.iter().enumerate() {
        let s = m
            .stack
            .as_deref()
            .ok_or_else(|| Error::Validation("trace has no stack-state metadata".into()))?;
        groups.entry(s).or_default().push(i);
    }
    let mut clusters = Vec::new();
    for (stack, idx) in groups {
        if idx.len() < min_cluster.max(3) {
            continue;
        }
        let pts = Matrix::from_fn(idx.len(), 2, |r, c| pca.coords[idx[r]][c]);
        let Ok(local) = pca_top2_2d(&pts) else {
            continue;
        };
        let proj: Vec<f64> = idx
            .iter()
            .map(|&i| pca.coords[i][0] * local[0] + pca.coords[i][1] * local[1])
            .collect();
        let pos: Vec<f64> = idx.iter().map(|&i| trace.meta[i].pos as f64).collect();
        if let Some(r) = pearson(&proj, &pos) {
            clusters.push(ClusterCorrelation {
                stack: stack.to_string(),
                size: idx.len(),
                r,
            });
        }
    }
    clusters.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()));
    Ok(GeometryReport {
        explained: pca.explained,
        empty_stack_separability: separability,
        clusters,
    })
}

/// Major axis of a 2-D point cloud.
fn pca_top2_2d(pts: &Matrix<f64>) -> Result<[f64; 2]> {
    let (_, cov) = super::pca::covariance(pts);
    if !(cov[(0, 0)] + cov[(1, 1)] > 0.0) {
        return Err(Error::Degenerate("cluster has zero spread".into()));
    }
    let (_, v) = jacobi_eigen(&cov)?;
    Ok([v[(0, 0)], v[(1, 0)]])
}

/// In-domain held-out and out-of-domain accuracy of a can-end probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub in_domain: f64,
    pub out_of_domain: f64,
}

/// Trains on `train`, evaluates on `held_out` and `ood`.
pub fn can_end_probe<T: Scalar>(
    train: &StateTrace<T>,
    held_out: &StateTrace<T>,
    ood: &StateTrace<T>,
) -> Result<ProbeReport> {
    let y = train.can_end_labels()?;
    let probe = train_probe(&train.states, &y, ProbeConfig::default())?;
    Ok(ProbeReport {
        train_accuracy: eval_probe(&probe, &train.states, &y)?,
        in_domain: eval_probe(&probe, &held_out.states, &held_out.can_end_labels()?)?,
        out_of_domain: eval_probe(&probe, &ood.states, &ood.can_end_labels()?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::StateMeta;
    use crate::numerics::RngStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_basics() {
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert!(pearson(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn synthetic_manifold_is_detected() {
        // Two clusters: empty stack near the origin, "(" drifting with position.
        let mut rng = RngStream::new(3, 0);
        let n = 600;
        let mut meta = Vec::new();
        let states = Matrix::from_fn(n, 3, |r, c| {
            let pos = r / 2;
            let empty = r % 2 == 0;
            if c == 0 {
                meta.push(StateMeta {
                    seq_id: 0,
                    pos,
                    depth: Some(if empty { 0 } else { 1 }),
                    stack: Some(if empty { String::new() } else { "(".into() }),
                    can_end: Some(empty),
                    gold_token: None,
                });
            }
            let noise = rng.uniform_range(-0.02, 0.02);
            match (empty, c) {
                (true, _) => noise,
                (false, 0) => 1.0 + noise,
                (false, 1) => pos as f64 / n as f64 + noise,
                _ => noise,
            }
        });
        let t = StateTrace::new(states, meta).unwrap();
        let g = geometry_report(&t, 20).unwrap();
        assert!(g.top2() > 0.9);
        assert_eq!(g.empty_stack_separability, 1.0);
        assert_eq!(g.clusters[0].stack, "(");
        assert!(g.max_abs_r() > 0.9);
    }
}
