use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, Scalar, Trans};

/// Linear logistic classifier over hidden states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            iterations: 1000,
            learning_rate: 0.1,
        }
    }
}

impl Probe {
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.score(x) >= self.threshold
    }
}

fn check<T: Scalar>(states: &Matrix<T>, labels: &[bool]) -> Result<()> {
    if states.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} states but {} labels",
            states.rows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Full-batch gradient descent on the mean logistic loss, from zero weights.
pub fn train_probe<T: Scalar>(
    states: &Matrix<T>,
    labels: &[bool],
    cfg: ProbeConfig,
) -> Result<Probe> {
    check(states, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Degenerate(
            "probe labels contain a single class".into(),
        ));
    }
    let x: Matrix<f64> = states.cast();
    let (n, d) = x.shape();
    let mut w = Matrix::<f64>::zeros(d, 1);
    let mut b = 0.0;
    let mut z = Matrix::<f64>::zeros(n, 1);
    let mut gw = Matrix::<f64>::zeros(d, 1);
    for _ in 0..cfg.iterations {
        Matrix::gemm(1.0, &x, Trans::No, &w, Trans::No, 0.0, &mut z);
        let mut gb = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let e = (sigmoid(z[(r, 0)] + b) - if y { 1.0 } else { 0.0 }) / n as f64;
            z.row_mut(r)[0] = e;
            gb += e;
        }
        Matrix::gemm(1.0, &x, Trans::Yes, &z, Trans::No, 0.0, &mut gw);
        w.axpy(-cfg.learning_rate, &gw);
        b -= cfg.learning_rate * gb;
    }
    Ok(Probe {
        weights: w.into_data(),
        bias: b,
        threshold: 0.5,
    })
}

/// Fraction of states whose thresholded score matches the label.
pub fn eval_probe<T: Scalar>(probe: &Probe, states: &Matrix<T>, labels: &[bool]) -> Result<f64> {
    check(states, labels)?;
    if probe.weights.len() != states.cols() {
        return Err(Error::Shape(format!(
            "probe has {} weights for {}-dimensional states",
            probe.weights.len(),
            states.cols()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Validation("no states to evaluate".into()));
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(r, &y)| {
            let row: Vec<f64> = states.row(*r).iter().map(|v| v.as_f64()).collect();
            probe.predict(&row) == y
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn separable_clusters_are_learned() {
        let mut rng = RngStream::new(2, 0);
        let labels: Vec<bool> = (0..400).map(|i| i % 3 == 0).collect();
        let x = Matrix::from_fn(400, 3, |r, c| {
            let centre = if labels[r] { 0.6 } else { -0.6 };
            (if c == 1 { centre } else { 0.0 }) + rng.uniform_range(-0.3, 0.3)
        });
        let p = train_probe(&x, &labels, ProbeConfig::default()).unwrap();
        assert_eq!(p.weights.len(), 3);
        assert_eq!(eval_probe(&p, &x, &labels).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = Matrix::<f64>::zeros(4, 2);
        assert!(matches!(
            train_probe(&x, &[true; 4], ProbeConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            train_probe(&x, &[true; 3], ProbeConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn random_probe_is_near_chance() {
        let mut rng = RngStream::new(5, 0);
        let n = 10_000;
        let x = Matrix::from_fn(n, 4, |_, _| rng.uniform_range(-1.0, 1.0));
        let labels: Vec<bool> = (0..n).map(|_| rng.coin()).collect();
        let probe = Probe {
            weights: vec![0.3, -0.7, 0.2, 0.5],
            bias: 0.0,
            threshold: 0.5,
        };
        let acc = eval_probe(&probe, &x, &labels).unwrap();
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }

    #[test]
    fn constant_probe_scores_the_majority_fraction() {
        let x = Matrix::<f64>::zeros(10, 2);
        let labels: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let always = Probe {
            weights: vec![0.0, 0.0],
            bias: 1.0,
            threshold: 0.5,
        };
        assert_eq!(eval_probe(&always, &x, &labels).unwrap(), 0.7);
    }
}
