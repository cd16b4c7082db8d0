use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar, Trans};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as columns. Each vector's largest-magnitude entry is made positive.
pub fn jacobi_eigen(a: &Matrix<f64>) -> Result<(Vec<f64>, Matrix<f64>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!(
            "eigen-decomposition of a {n}x{} matrix",
            a.cols()
        )));
    }
    let mut m = a.clone();
    let mut v = Matrix::<f64>::identity(n);
    let scale = m.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m.row_mut(k)[p] = c * mkp - s * mkq;
                    m.row_mut(k)[q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m.row_mut(p)[k] = c * mpk - s * mqk;
                    m.row_mut(q)[k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v.row_mut(k)[p] = c * vkp - s * vkq;
                    v.row_mut(k)[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    for c in 0..n {
        let lead = (0..n).max_by(|&a, &b| vectors[(a, c)].abs().total_cmp(&vectors[(b, c)].abs()));
        if let Some(r) = lead {
            if vectors[(r, c)] < 0.0 {
                for r in 0..n {
                    vectors.row_mut(r)[c] = -vectors[(r, c)];
                }
            }
        }
    }
    Ok((values, vectors))
}

/// Top-two principal components of a set of states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub coords: Vec<[f64; 2]>,
    pub explained: [f64; 2],
    pub total_variance: f64,
}

impl PcaProjection {
    /// Coordinates of new states in this projection.
    pub fn project<T: Scalar>(&self, states: &Matrix<T>) -> Result<Vec<[f64; 2]>> {
        if states.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "states have {} columns, projection expects {}",
                states.cols(),
                self.mean.len()
            )));
        }
        Ok((0..states.rows())
            .map(|r| {
                let row = states.row(r);
                let mut out = [0.0; 2];
                for (o, comp) in out.iter_mut().zip(&self.components) {
                    *o = row
                        .iter()
                        .zip(&self.mean)
                        .zip(comp)
                        .map(|((x, m), c)| (x.as_f64() - m) * c)
                        .sum();
                }
                out
            })
            .collect())
    }
}

/// Mean-centred covariance (divided by `n`) of the rows of `x`.
pub fn covariance<T: Scalar>(x: &Matrix<T>) -> (Vec<f64>, Matrix<f64>) {
    let (n, d) = x.shape();
    let xs: Matrix<f64> = x.cast();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(xs.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let centred = Matrix::from_fn(n, d, |r, c| xs[(r, c)] - mean[c]);
    let mut cov = Matrix::zeros(d, d);
    Matrix::gemm(
        1.0 / n.max(1) as f64,
        &centred,
        Trans::Yes,
        &centred,
        Trans::No,
        0.0,
        &mut cov,
    );
    // exact symmetry for the eigensolver
    for i in 0..d {
        for j in i + 1..d {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov.row_mut(i)[j] = s;
            cov.row_mut(j)[i] = s;
        }
    }
    (mean, cov)
}

pub fn pca_top2<T: Scalar>(states: &Matrix<T>) -> Result<PcaProjection> {
    let (n, d) = states.shape();
    if n < 3 || d < 2 {
        return Err(Error::Validation(format!(
            "PCA needs at least 3 states of dimension 2, got {n}x{d}"
        )));
    }
    let (mean, cov) = covariance(states);
    let total: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("states have zero variance".into()));
    }
    let (values, vectors) = jacobi_eigen(&cov)?;
    let comp = |c: usize| (0..d).map(|r| vectors[(r, c)]).collect::<Vec<f64>>();
    let ratio = |i: usize| (values[i].max(0.0) / total).clamp(0.0, 1.0);
    let mut p = PcaProjection {
        mean,
        components: [comp(0), comp(1)],
        coords: Vec::new(),
        explained: [ratio(0), ratio(1)],
        total_variance: total,
    };
    p.coords = p.project(states)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use approx::assert_abs_diff_eq;

    fn cloud(n: usize, sds: &[f64], seed: u64) -> Matrix<f64> {
        let mut rng = RngStream::new(seed, 0);
        Matrix::from_fn(n, sds.len(), |_, c| {
            // Box-Muller
            let (u1, u2) = (rng.uniform().max(1e-300), rng.uniform());
            sds[c] * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
    }

    #[test]
    fn collinear_points() {
        let x = Matrix::from_fn(10, 2, |r, c| (r as f64) * if c == 0 { 1.0 } else { 2.0 });
        let p = pca_top2(&x).unwrap();
        assert_abs_diff_eq!(p.explained[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.explained[1], 0.0, epsilon = 1e-12);
        let s = 1.0 / 5f64.sqrt();
        assert_abs_diff_eq!(p.components[0][0], s, epsilon = 1e-12);
        assert_abs_diff_eq!(p.components[0][1], 2.0 * s, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_cloud_recovers_first_axis() {
        let x = cloud(20_000, &[3.0, 1.0, 0.1, 0.1], 7);
        let p = pca_top2(&x).unwrap();
        assert!(p.components[0][0].abs() > 0.999);
        assert!(p.components[1][1].abs() > 0.999);
        assert!(
            (p.explained[0] - 9.0 / 10.02).abs() < 0.03,
            "{:?}",
            p.explained
        );
    }

    #[test]
    fn matches_dense_eigensolver() {
        for (d, seed) in [(5, 1), (12, 2), (20, 3)] {
            let sds: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 0.37).collect();
            let base = cloud(300, &sds, seed);
            // mix the axes so the covariance is not diagonal
            let mut rng = RngStream::new(seed, 1);
            let mix = Matrix::from_fn(d, d, |_, _| rng.uniform_range(-1.0, 1.0));
            let x = base.matmul(&mix).unwrap();
            let p = pca_top2(&x).unwrap();
            let (_, cov) = covariance(&x);
            let na = nalgebra::DMatrix::from_row_slice(d, d, cov.data());
            let eig = nalgebra::SymmetricEigen::new(na);
            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let total: f64 = eig.eigenvalues.iter().sum();
            for (k, &j) in idx.iter().take(2).enumerate() {
                assert_abs_diff_eq!(p.explained[k], eig.eigenvalues[j] / total, epsilon = 1e-8);
                let v = eig.eigenvectors.column(j);
                let dot: f64 = v.iter().zip(&p.components[k]).map(|(a, b)| a * b).sum();
                assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn components_orthonormal_and_variance_accounted() {
        let sds = [2.0, 1.5, 1.0, 0.5, 0.2, 0.1];
        let mut rng = RngStream::new(4, 1);
        let mix = Matrix::from_fn(6, 6, |_, _| rng.uniform_range(-1.0, 1.0));
        let x = cloud(500, &sds, 4).matmul(&mix).unwrap();
        let p = pca_top2(&x).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert_abs_diff_eq!(dot(&p.components[0], &p.components[0]), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(dot(&p.components[1], &p.components[1]), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(dot(&p.components[0], &p.components[1]), 0.0, epsilon = 1e-9);
        assert!(p.explained[0] >= p.explained[1]);
        let n = p.coords.len() as f64;
        let captured: f64 = p
            .coords
            .iter()
            .map(|c| c[0] * c[0] + c[1] * c[1])
            .sum::<f64>()
            / n;
        assert_abs_diff_eq!(
            captured,
            (p.explained[0] + p.explained[1]) * p.total_variance,
            epsilon = 1e-8 * p.total_variance
        );
    }

    #[test]
    fn translation_invariant() {
        let x = cloud(200, &[1.0, 2.0, 0.5], 9);
        let shifted = x.map(|v| v + 3.5);
        let (a, b) = (pca_top2(&x).unwrap(), pca_top2(&shifted).unwrap());
        for (p, q) in a.coords.iter().zip(&b.coords) {
            assert_abs_diff_eq!(p[0], q[0], epsilon = 1e-9);
            assert_abs_diff_eq!(p[1], q[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let x = Matrix::from_fn(5, 3, |_, _| 1.0f64);
        assert!(matches!(pca_top2(&x), Err(Error::Degenerate(_))));
        assert!(matches!(
            pca_top2(&Matrix::<f64>::zeros(2, 3)),
            Err(Error::Validation(_))
        ));
    }
}
