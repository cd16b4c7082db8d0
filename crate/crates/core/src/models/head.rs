//! Output projection, masked softmax and cross-entropy shared by both models.

use crate::numerics::{softmax_in_place, Matrix, Scalar, Trans};

/// `logits = states * w^T + b`, with `masked` columns forced to `-inf`.
pub(crate) fn project<T: Scalar>(
    states: &Matrix<T>,
    w: &Matrix<T>,
    b: &Matrix<T>,
    masked: &[usize],
) -> Matrix<T> {
    let mut logits = Matrix::zeros(states.rows(), w.rows());
    Matrix::gemm(
        T::one(),
        states,
        Trans::No,
        w,
        Trans::Yes,
        T::zero(),
        &mut logits,
    );
    logits.add_row_vector(b.data());
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        for &m in masked {
            row[m] = T::neg_infinity();
        }
    }
    logits
}

/// Row-wise softmax of logits (masked columns become exact zeros).
pub(crate) fn probabilities<T: Scalar>(mut logits: Matrix<T>) -> Matrix<T> {
    for r in 0..logits.rows() {
        softmax_in_place(logits.row_mut(r));
    }
    logits
}

/// Turns `logits` into `scale * (softmax - onehot)` in place and returns the
/// summed negative log-likelihood of the targets. Rows with no target get
/// zero gradient.
pub(crate) fn softmax_xent_in_place<T: Scalar>(
    logits: &mut Matrix<T>,
    targets: &[Option<usize>],
    scale: T,
) -> T {
    debug_assert_eq!(logits.rows(), targets.len());
    let mut nll = T::zero();
    for (r, target) in targets.iter().enumerate() {
        let row = logits.row_mut(r);
        match target {
            Some(y) => {
                softmax_in_place(row);
                nll = nll - row[*y].ln();
                row[*y] = row[*y] - T::one();
                row.iter_mut().for_each(|x| *x = *x * scale);
            }
            None => row.iter_mut().for_each(|x| *x = T::zero()),
        }
    }
    nll
}

/// Accumulates head gradients from `dlogits` and returns `d states`.
pub(crate) fn head_backward<T: Scalar>(
    states: &Matrix<T>,
    dlogits: &Matrix<T>,
    w: &Matrix<T>,
    dw: &mut Matrix<T>,
    db: &mut Matrix<T>,
) -> Matrix<T> {
    Matrix::gemm(
        T::one(),
        dlogits,
        Trans::Yes,
        states,
        Trans::No,
        T::one(),
        dw,
    );
    dlogits.add_column_sums_into(db.data_mut());
    let mut dstates = Matrix::zeros(states.rows(), states.cols());
    Matrix::gemm(
        T::one(),
        dlogits,
        Trans::No,
        w,
        Trans::No,
        T::zero(),
        &mut dstates,
    );
    dstates
}
