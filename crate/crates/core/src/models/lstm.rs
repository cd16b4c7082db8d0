//! Batched LSTM layer with hand-derived backpropagation through time.
//!
//! Gate layout inside the `4H` pre-activation block is `[i, f, g, o]`:
//! `c = f*c_prev + i*g`, `h = o*tanh(c)`. Rows whose mask entry is false
//! at a step keep their previous state, so right-padded batches leave each
//! sequence's final state at its own last token.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, RngStream, Scalar, Trans};

/// Weights of one LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<T> {
    /// `4H x I`
    pub w_ih: Matrix<T>,
    /// `4H x H`
    pub w_hh: Matrix<T>,
    /// `1 x 4H`
    pub bias: Matrix<T>,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            w_ih: Matrix::zeros(4 * hidden, input),
            w_hh: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn params(&self) -> [&Matrix<T>; 3] {
        [&self.w_ih, &self.w_hh, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Matrix<T>; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        if self.w_ih.rows() != 4 * h || self.w_hh.rows() != 4 * h || self.bias.shape() != (1, 4 * h)
        {
            return Err(Error::Shape(format!(
                "inconsistent LSTM layer: w_ih {:?}, w_hh {:?}, bias {:?}",
                self.w_ih.shape(),
                self.w_hh.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }
}

/// Single unbatched step of an LSTM cell: returns `(h, c)`.
pub fn lstm_cell<T: Scalar>(
    layer: &LstmLayer<T>,
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    layer.check()?;
    let hd = layer.hidden();
    if x.len() != layer.input() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::Shape(format!(
            "cell expects x[{}], h[{hd}], c[{hd}]; got x[{}], h[{}], c[{}]",
            layer.input(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let hm = Matrix::from_vec(1, hd, h_prev.to_vec())?;
    let cm = Matrix::from_vec(1, hd, c_prev.to_vec())?;
    let step = step_forward(layer, &xm, &hm, &cm, None);
    Ok((step.h.into_data(), step.c.into_data()))
}

/// Activations of one batched step.
#[derive(Clone, Debug)]
pub(crate) struct Step<T> {
    /// Post-activation gates `B x 4H` in `[i, f, g, o]` order.
    pub gates: Matrix<T>,
    pub c: Matrix<T>,
    pub tanh_c: Matrix<T>,
    pub h: Matrix<T>,
}

pub(crate) fn step_forward<T: Scalar>(
    layer: &LstmLayer<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
    mask: Option<&[bool]>,
) -> Step<T> {
    let b = x.rows();
    let hd = layer.hidden();
    let mut gates = Matrix::zeros(b, 4 * hd);
    Matrix::gemm(
        T::one(),
        x,
        Trans::No,
        &layer.w_ih,
        Trans::Yes,
        T::zero(),
        &mut gates,
    );
    Matrix::gemm(
        T::one(),
        h_prev,
        Trans::No,
        &layer.w_hh,
        Trans::Yes,
        T::one(),
        &mut gates,
    );
    gates.add_row_vector(layer.bias.data());
    let mut c = Matrix::zeros(b, hd);
    let mut tanh_c = Matrix::zeros(b, hd);
    let mut h = Matrix::zeros(b, hd);
    for r in 0..b {
        let g = gates.row_mut(r);
        for j in 0..hd {
            g[j] = sigmoid(g[j]);
            g[hd + j] = sigmoid(g[hd + j]);
            g[2 * hd + j] = g[2 * hd + j].tanh();
            g[3 * hd + j] = sigmoid(g[3 * hd + j]);
        }
        let active = mask.is_none_or(|m| m[r]);
        let g = gates.row(r);
        let cp = c_prev.row(r);
        let hp = h_prev.row(r);
        let (cr, tr, hr) = (c.row_mut(r), tanh_c.row_mut(r), h.row_mut(r));
        for j in 0..hd {
            if active {
                cr[j] = g[hd + j] * cp[j] + g[j] * g[2 * hd + j];
                tr[j] = cr[j].tanh();
                hr[j] = g[3 * hd + j] * tr[j];
            } else {
                cr[j] = cp[j];
                tr[j] = cp[j].tanh();
                hr[j] = hp[j];
            }
        }
    }
    Step {
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Everything the backward pass needs from a forward pass over a sequence.
#[derive(Clone, Debug)]
pub(crate) struct LayerTrace<T> {
    pub inputs: Vec<Matrix<T>>,
    /// `h[0]`/`c[0]` are the initial state; `h[t+1]` follows input `t`.
    pub h: Vec<Matrix<T>>,
    pub c: Vec<Matrix<T>>,
    pub gates: Vec<Matrix<T>>,
    pub tanh_c: Vec<Matrix<T>>,
}

impl<T: Scalar> LayerTrace<T> {
    pub fn final_state(&self) -> (&Matrix<T>, &Matrix<T>) {
        (
            self.h.last().expect("initial state"),
            self.c.last().expect("initial state"),
        )
    }
}

pub(crate) fn layer_forward<T: Scalar>(
    layer: &LstmLayer<T>,
    inputs: Vec<Matrix<T>>,
    h0: Matrix<T>,
    c0: Matrix<T>,
    mask: &[Vec<bool>],
) -> LayerTrace<T> {
    let steps = inputs.len();
    let mut tr = LayerTrace {
        h: Vec::with_capacity(steps + 1),
        c: Vec::with_capacity(steps + 1),
        gates: Vec::with_capacity(steps),
        tanh_c: Vec::with_capacity(steps),
        inputs: Vec::new(),
    };
    tr.h.push(h0);
    tr.c.push(c0);
    for (t, x) in inputs.iter().enumerate() {
        let s = step_forward(layer, x, &tr.h[t], &tr.c[t], Some(&mask[t]));
        tr.gates.push(s.gates);
        tr.tanh_c.push(s.tanh_c);
        tr.h.push(s.h);
        tr.c.push(s.c);
    }
    tr.inputs = inputs;
    tr
}

/// Gradient buffers for one layer, same shapes as [`LstmLayer`].
pub(crate) type LayerGrads<T> = LstmLayer<T>;

/// Backpropagates through a traced layer.
///
/// `dh_out[t]` is the loss gradient w.r.t. the layer output after input `t`;
/// `dh_final`/`dc_final` flow into the final state. Returns the gradients
/// w.r.t. each input and the initial state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_backward<T: Scalar>(
    layer: &LstmLayer<T>,
    tr: &LayerTrace<T>,
    mask: &[Vec<bool>],
    dh_out: &[Matrix<T>],
    dh_final: Option<&Matrix<T>>,
    dc_final: Option<&Matrix<T>>,
    grads: &mut LayerGrads<T>,
    want_input_grads: bool,
) -> (Vec<Matrix<T>>, Matrix<T>, Matrix<T>) {
    let steps = tr.inputs.len();
    let hd = layer.hidden();
    let b = tr.h[0].rows();
    let one = T::one();
    let mut dh_next = dh_final.cloned().unwrap_or_else(|| Matrix::zeros(b, hd));
    let mut dc_next = dc_final.cloned().unwrap_or_else(|| Matrix::zeros(b, hd));
    let mut dx_all = if want_input_grads {
        vec![Matrix::zeros(0, 0); steps]
    } else {
        Vec::new()
    };
    let mut da = Matrix::zeros(b, 4 * hd);
    for t in (0..steps).rev() {
        let gates = &tr.gates[t];
        let tanh_c = &tr.tanh_c[t];
        let c_prev = &tr.c[t];
        let mut dc_prev = Matrix::zeros(b, hd);
        let mut pass_h = Matrix::zeros(b, hd);
        for (r, &active) in mask[t].iter().enumerate() {
            let dh_row: Vec<T> = dh_out[t]
                .row(r)
                .iter()
                .zip(dh_next.row(r))
                .map(|(&a, &b)| a + b)
                .collect();
            let dar = da.row_mut(r);
            if !active {
                dar.iter_mut().for_each(|x| *x = T::zero());
                pass_h.row_mut(r).copy_from_slice(&dh_row);
                dc_prev.row_mut(r).copy_from_slice(dc_next.row(r));
                continue;
            }
            let g = gates.row(r);
            let tc = tanh_c.row(r);
            let cp = c_prev.row(r);
            let dcn = dc_next.row(r);
            let dcp = dc_prev.row_mut(r);
            for j in 0..hd {
                let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let dh = dh_row[j];
                let d_o = dh * tc[j];
                let dc = dcn[j] + dh * o * (one - tc[j] * tc[j]);
                let di = dc * gg;
                let dg = dc * i;
                let df = dc * cp[j];
                dcp[j] = dc * f;
                dar[j] = di * i * (one - i);
                dar[hd + j] = df * f * (one - f);
                dar[2 * hd + j] = dg * (one - gg * gg);
                dar[3 * hd + j] = d_o * o * (one - o);
            }
        }
        Matrix::gemm(
            one,
            &da,
            Trans::Yes,
            &tr.inputs[t],
            Trans::No,
            one,
            &mut grads.w_ih,
        );
        Matrix::gemm(
            one,
            &da,
            Trans::Yes,
            &tr.h[t],
            Trans::No,
            one,
            &mut grads.w_hh,
        );
        da.add_column_sums_into(grads.bias.data_mut());
        if want_input_grads {
            let mut dx = Matrix::zeros(b, layer.input());
            Matrix::gemm(
                one,
                &da,
                Trans::No,
                &layer.w_ih,
                Trans::No,
                T::zero(),
                &mut dx,
            );
            dx_all[t] = dx;
        }
        let mut dh_prev = pass_h;
        Matrix::gemm(
            one,
            &da,
            Trans::No,
            &layer.w_hh,
            Trans::No,
            one,
            &mut dh_prev,
        );
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    (dx_all, dh_next, dc_next)
}

/// Fills every tensor uniformly in `[-scale, scale]` from `rng`.
pub(crate) fn init_uniform<T: Scalar>(
    params: &mut [&mut Matrix<T>],
    scale: f64,
    rng: &mut RngStream,
) {
    for p in params.iter_mut() {
        for x in p.data_mut() {
            *x = T::lit(rng.uniform_range(-scale, scale));
        }
    }
}

/// Builds the per-step input matrices by embedding lookup. Rows beyond a
/// sequence's length get zeros.
pub(crate) fn embed_steps<T: Scalar>(
    embedding: &Matrix<T>,
    seqs: &[&[usize]],
    steps: usize,
) -> Vec<Matrix<T>> {
    let d = embedding.cols();
    (0..steps)
        .map(|t| {
            let mut x = Matrix::zeros(seqs.len(), d);
            for (r, s) in seqs.iter().enumerate() {
                if let Some(&tok) = s.get(t) {
                    x.row_mut(r).copy_from_slice(embedding.row(tok));
                }
            }
            x
        })
        .collect()
}

pub(crate) fn step_mask(lens: &[usize], steps: usize) -> Vec<Vec<bool>> {
    (0..steps)
        .map(|t| lens.iter().map(|&l| t < l).collect())
        .collect()
}

/// Scatter-adds per-step input gradients into embedding rows.
pub(crate) fn accumulate_embedding_grads<T: Scalar>(
    grad: &mut Matrix<T>,
    seqs: &[&[usize]],
    dx: &[Matrix<T>],
) {
    for (t, d) in dx.iter().enumerate() {
        for (r, s) in seqs.iter().enumerate() {
            if let Some(&tok) = s.get(t) {
                let src = d.row(r);
                for (g, &v) in grad.row_mut(tok).iter_mut().zip(src) {
                    *g = *g + v;
                }
            }
        }
    }
}
