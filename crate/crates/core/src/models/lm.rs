use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::langgen::{DyckConfig, DyckSample};
use crate::numerics::{Matrix, RngStream, Scalar};

use super::decode::{choose_next, DecodeOptions};
use super::head::{head_backward, probabilities, project, softmax_xent_in_place};
use super::lstm::{
    accumulate_embedding_grads, embed_steps, init_uniform, layer_backward, layer_forward,
    step_forward, step_mask, LayerTrace, LstmLayer,
};
use super::params::{ModelInfo, Parameterized};
use super::trace::{StateMeta, StateTrace, TraceKind};
use super::vocab::Vocab;

/// Single-layer LSTM language model.
///
/// Under the `-EOS` conditions the EOS logit is structurally masked, so the
/// model's distribution never covers EOS and its output row receives no
/// gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLm<T> {
    pub vocab: Vocab,
    pub condition: Condition,
    pub embedding: Matrix<T>,
    pub lstm: LstmLayer<T>,
    pub out_w: Matrix<T>,
    pub out_b: Matrix<T>,
    pub info: ModelInfo,
}

/// Summed loss and gradients over a minibatch.
#[derive(Clone, Debug)]
pub struct BatchLoss<T> {
    pub nll_sum: T,
    pub count: usize,
    pub grads: Vec<Matrix<T>>,
}

impl<T: Scalar> BatchLoss<T> {
    pub fn mean(&self) -> T {
        self.nll_sum / T::lit(self.count as f64)
    }
}

/// Per-sequence forward outputs.
#[derive(Clone, Debug)]
pub struct SeqOutput<T> {
    /// `len x V` logits; row `t` predicts the token after input `t`.
    pub logits: Matrix<T>,
    /// `len x H` states after each input.
    pub states: Matrix<T>,
}

/// Rows `t*B + b` of the per-step matrices, for steps `0..steps`.
pub(crate) fn stack_steps<T: Scalar>(per_step: &[Matrix<T>]) -> Matrix<T> {
    Matrix::vstack(per_step).expect("uniform step widths")
}

/// Splits `t*B + b` stacked rows back into per-sequence matrices.
pub(crate) fn unstack_rows<T: Scalar>(stacked: &Matrix<T>, lens: &[usize]) -> Vec<Matrix<T>> {
    let b = lens.len();
    lens.iter()
        .enumerate()
        .map(|(r, &len)| Matrix::from_fn(len, stacked.cols(), |t, j| stacked[(t * b + r, j)]))
        .collect()
}

type Forward<T> = (LayerTrace<T>, Vec<Vec<bool>>, Vec<usize>);

impl<T: Scalar> LstmLm<T> {
    /// Fresh model with weights uniform in `±1/sqrt(hidden_dim)`.
    pub fn new(
        vocab: Vocab,
        condition: Condition,
        embed_dim: usize,
        hidden_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if vocab.is_empty() || embed_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !condition.trains_eos() && vocab.eos().is_none() {
            return Err(Error::Config("vocabulary lacks EOS".into()));
        }
        let v = vocab.len();
        let mut m = LstmLm {
            vocab,
            condition,
            embedding: Matrix::zeros(v, embed_dim),
            lstm: LstmLayer::zeros(embed_dim, hidden_dim),
            out_w: Matrix::zeros(v, hidden_dim),
            out_b: Matrix::zeros(1, v),
            info: ModelInfo {
                seed,
                ..ModelInfo::default()
            },
        };
        let scale = 1.0 / (hidden_dim as f64).sqrt();
        let mut rng = RngStream::derive(seed, "init", 0);
        init_uniform(&mut m.params_mut(), scale, &mut rng);
        Ok(m)
    }

    /// Hidden size `5m`, embedding size equal to hidden size.
    pub fn for_dyck(cfg: &DyckConfig, condition: Condition, seed: u64) -> Result<Self> {
        let h = cfg.hidden_dim();
        Self::new(Vocab::dyck(cfg.k), condition, h, h, seed)
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn eos(&self) -> Option<usize> {
        self.vocab.eos()
    }

    /// Output columns excluded from the distribution.
    pub fn output_mask(&self) -> Vec<usize> {
        let mut m = Vec::new();
        if !self.condition.trains_eos() {
            m.extend(self.vocab.eos());
        }
        m.extend(self.vocab.bos());
        m
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (v, e, h) = (self.vocab.len(), self.embed_dim(), self.hidden_dim());
        let ok = self.embedding.shape() == (v, e)
            && self.lstm.w_ih.shape() == (4 * h, e)
            && self.lstm.w_hh.shape() == (4 * h, h)
            && self.lstm.bias.shape() == (1, 4 * h)
            && self.out_w.shape() == (v, h)
            && self.out_b.shape() == (1, v);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(
                "inconsistent language model parameter shapes".into(),
            ))
        }
    }

    /// Returns the layer trace, the step mask and the sequence lengths.
    fn run(&self, seqs: &[&[usize]]) -> Result<Forward<T>> {
        for s in seqs {
            self.vocab.check(s)?;
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let steps = lens.iter().copied().max().unwrap_or(0);
        let mask = step_mask(&lens, steps);
        let b = seqs.len();
        let h = self.hidden_dim();
        let inputs = embed_steps(&self.embedding, seqs, steps);
        let tr = layer_forward(
            &self.lstm,
            inputs,
            Matrix::zeros(b, h),
            Matrix::zeros(b, h),
            &mask,
        );
        Ok((tr, mask, lens))
    }

    /// Logits and states for a batch of sequences.
    pub fn forward_batch(&self, seqs: &[&[usize]], kind: TraceKind) -> Result<Vec<SeqOutput<T>>> {
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let (tr, _, lens) = self.run(seqs)?;
        let per_step = match kind {
            TraceKind::Hidden => &tr.h[1..],
            TraceKind::Cell => &tr.c[1..],
        };
        let stacked = stack_steps(per_step);
        let hidden = if kind == TraceKind::Hidden {
            stacked.clone()
        } else {
            stack_steps(&tr.h[1..])
        };
        let logits = project(&hidden, &self.out_w, &self.out_b, &self.output_mask());
        Ok(unstack_rows(&logits, &lens)
            .into_iter()
            .zip(unstack_rows(&stacked, &lens))
            .map(|(logits, states)| SeqOutput { logits, states })
            .collect())
    }

    /// Logits for one sequence plus a trace of the hidden state after each token.
    pub fn lm_forward(&self, tokens: &[usize]) -> Result<(Matrix<T>, StateTrace<T>)> {
        let out = self.forward_batch(&[tokens], TraceKind::Hidden)?.remove(0);
        let meta = (0..tokens.len())
            .map(|pos| StateMeta {
                seq_id: 0,
                pos,
                ..StateMeta::default()
            })
            .collect();
        Ok((out.logits, StateTrace::new(out.states, meta)?))
    }

    /// Next-token distributions: row `t` of result `i` is the distribution
    /// after consuming `seqs[i][..=t]`.
    pub fn next_token_distributions(&self, seqs: &[&[usize]]) -> Result<Vec<Matrix<T>>> {
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let (tr, _, lens) = self.run(seqs)?;
        let hidden = stack_steps(&tr.h[1..]);
        let probs = probabilities(project(
            &hidden,
            &self.out_w,
            &self.out_b,
            &self.output_mask(),
        ));
        Ok(unstack_rows(&probs, &lens))
    }

    /// Summed NLL and gradients for `(inputs, targets)` pairs.
    pub fn batch_loss_and_grads(&self, batch: &[(&[usize], &[usize])]) -> Result<BatchLoss<T>> {
        self.batch_loss_impl(batch, true)
    }

    /// Mean NLL over a batch, forward only.
    pub fn batch_loss(&self, batch: &[(&[usize], &[usize])]) -> Result<T> {
        Ok(self.batch_loss_impl(batch, false)?.mean())
    }

    /// Mean token NLL of `targets` given `tokens`, with full BPTT gradients.
    pub fn loss_and_grads(
        &self,
        tokens: &[usize],
        targets: &[usize],
    ) -> Result<(T, Vec<Matrix<T>>)> {
        let b = self.batch_loss_and_grads(&[(tokens, targets)])?;
        Ok((b.mean(), b.grads))
    }

    fn batch_loss_impl(
        &self,
        batch: &[(&[usize], &[usize])],
        want_grads: bool,
    ) -> Result<BatchLoss<T>> {
        let mut count = 0;
        for (i, (x, y)) in batch.iter().enumerate() {
            if x.len() != y.len() {
                return Err(Error::Shape(format!(
                    "sequence {i}: {} inputs but {} targets",
                    x.len(),
                    y.len()
                )));
            }
            self.vocab.check(y)?;
            count += y.len();
        }
        if count == 0 {
            return Err(Error::Validation("batch has no target tokens".into()));
        }
        let seqs: Vec<&[usize]> = batch.iter().map(|(x, _)| *x).collect();
        let (tr, mask, lens) = self.run(&seqs)?;
        let b = batch.len();
        let steps = tr.inputs.len();
        let mut targets = Vec::with_capacity(steps * b);
        for t in 0..steps {
            for (_, y) in batch {
                targets.push(y.get(t).copied());
            }
        }
        let hidden = stack_steps(&tr.h[1..]);
        let mut dlogits = project(&hidden, &self.out_w, &self.out_b, &self.output_mask());
        let scale = T::one() / T::lit(count as f64);
        let nll_sum = softmax_xent_in_place(&mut dlogits, &targets, scale);
        let mut grads = self.zero_grads();
        if want_grads {
            let [g_emb, g_wih, g_whh, g_b, g_out_w, g_out_b] = &mut grads[..] else {
                unreachable!("six parameter tensors")
            };
            let dh = head_backward(&hidden, &dlogits, &self.out_w, g_out_w, g_out_b);
            let h = self.hidden_dim();
            let dh_steps: Vec<Matrix<T>> = (0..steps)
                .map(|t| Matrix::from_fn(b, h, |r, j| dh[(t * b + r, j)]))
                .collect();
            let mut lg = LstmLayer {
                w_ih: std::mem::replace(g_wih, Matrix::zeros(0, 0)),
                w_hh: std::mem::replace(g_whh, Matrix::zeros(0, 0)),
                bias: std::mem::replace(g_b, Matrix::zeros(0, 0)),
            };
            let (dx, _, _) =
                layer_backward(&self.lstm, &tr, &mask, &dh_steps, None, None, &mut lg, true);
            *g_wih = lg.w_ih;
            *g_whh = lg.w_hh;
            *g_b = lg.bias;
            accumulate_embedding_grads(g_emb, &seqs, &dx);
        }
        let _ = lens;
        Ok(BatchLoss {
            nll_sum,
            count,
            grads,
        })
    }

    /// Greedy continuation of `prefix` (which must be nonempty).
    pub fn greedy_decode(&self, prefix: &[usize], opts: &DecodeOptions) -> Result<Vec<usize>> {
        opts.validate(self.eos())?;
        if prefix.is_empty() {
            return Err(Error::Validation(
                "language-model decoding needs a nonempty prefix".into(),
            ));
        }
        self.vocab.check(prefix)?;
        let h = self.hidden_dim();
        let mut hs = Matrix::zeros(1, h);
        let mut cs = Matrix::zeros(1, h);
        let mask = self.output_mask();
        let feed = |tok: usize, hs: &Matrix<T>, cs: &Matrix<T>| {
            let x = Matrix::from_vec(1, self.embed_dim(), self.embedding.row(tok).to_vec())
                .expect("embedding row");
            let s = step_forward(&self.lstm, &x, hs, cs, None);
            (s.h, s.c)
        };
        for &tok in prefix {
            (hs, cs) = feed(tok, &hs, &cs);
        }
        let mut out = Vec::new();
        for _ in 0..opts.steps() {
            let probs = probabilities(project(&hs, &self.out_w, &self.out_b, &mask));
            match choose_next(probs.row(0), self.eos(), opts)? {
                None => break,
                Some(tok) => {
                    out.push(tok);
                    (hs, cs) = feed(tok, &hs, &cs);
                }
            }
        }
        Ok(out)
    }

    /// States after each bracket token of every sample, labelled from the
    /// gold annotations. EOS tokens are never consumed as input.
    pub fn trace_dyck(&self, samples: &[DyckSample], kind: TraceKind) -> Result<StateTrace<T>> {
        let eos = self.eos();
        let seqs: Vec<&[usize]> = samples
            .iter()
            .map(|s| {
                let n = if s.tokens.last().copied() == eos && eos.is_some() {
                    s.tokens.len() - 1
                } else {
                    s.tokens.len()
                };
                &s.tokens[..n]
            })
            .collect();
        let mut parts = Vec::new();
        const CHUNK: usize = 64;
        for (c, chunk) in seqs.chunks(CHUNK).enumerate() {
            let outs = self.forward_batch(chunk, kind)?;
            for (i, out) in outs.into_iter().enumerate() {
                let seq_id = c * CHUNK + i;
                let ann = &samples[seq_id].annotations;
                let meta = (0..out.states.rows())
                    .map(|pos| StateMeta {
                        seq_id,
                        pos,
                        depth: Some(ann.depth[pos]),
                        stack: Some(ann.stack[pos].clone()),
                        can_end: Some(ann.can_end[pos]),
                        gold_token: None,
                    })
                    .collect();
                parts.push(StateTrace::new(out.states, meta)?);
            }
        }
        StateTrace::concat(parts)
    }
}

/// Splits a sample into next-token inputs and targets.
pub fn lm_pair(tokens: &[usize]) -> (&[usize], &[usize]) {
    let n = tokens.len();
    if n < 2 {
        return (&tokens[..0], &tokens[..0]);
    }
    (&tokens[..n - 1], &tokens[1..])
}

impl<T: Scalar> Parameterized<T> for LstmLm<T> {
    fn params(&self) -> Vec<&Matrix<T>> {
        vec![
            &self.embedding,
            &self.lstm.w_ih,
            &self.lstm.w_hh,
            &self.lstm.bias,
            &self.out_w,
            &self.out_b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![
            &mut self.embedding,
            &mut self.lstm.w_ih,
            &mut self.lstm.w_hh,
            &mut self.lstm.bias,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    fn param_names(&self) -> Vec<String> {
        [
            "embedding",
            "lstm.w_ih",
            "lstm.w_hh",
            "lstm.bias",
            "out.w",
            "out.b",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}
