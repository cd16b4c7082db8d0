use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::langgen::ScanPair;
use crate::numerics::{Matrix, RngStream, Scalar};

use super::decode::{choose_next, DecodeOptions};
use super::head::{head_backward, probabilities, project, softmax_xent_in_place};
use super::lm::{stack_steps, unstack_rows, BatchLoss};
use super::lstm::{
    accumulate_embedding_grads, embed_steps, init_uniform, layer_backward, layer_forward,
    step_forward, step_mask, LayerTrace, LstmLayer,
};
use super::params::{ModelInfo, Parameterized};
use super::trace::{StateMeta, StateTrace};
use super::vocab::Vocab;

/// Stacked LSTM encoder-decoder without attention. Decoder layer `l` starts
/// from the encoder's final `(h, c)` of layer `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2Seq<T> {
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub condition: Condition,
    pub src_embedding: Matrix<T>,
    pub encoder: Vec<LstmLayer<T>>,
    pub tgt_embedding: Matrix<T>,
    pub decoder: Vec<LstmLayer<T>>,
    pub out_w: Matrix<T>,
    pub out_b: Matrix<T>,
    pub info: ModelInfo,
}

struct Teacher<T> {
    enc: Vec<LayerTrace<T>>,
    enc_mask: Vec<Vec<bool>>,
    dec: Vec<LayerTrace<T>>,
    dec_mask: Vec<Vec<bool>>,
    dec_inputs: Vec<Vec<usize>>,
    dec_targets: Vec<Vec<usize>>,
}

type State<T> = Vec<(Matrix<T>, Matrix<T>)>;

impl<T: Scalar> Seq2Seq<T> {
    pub fn new(
        src_vocab: Vocab,
        tgt_vocab: Vocab,
        condition: Condition,
        hidden_dim: usize,
        layers: usize,
        seed: u64,
    ) -> Result<Self> {
        if src_vocab.is_empty() || hidden_dim == 0 || layers == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if tgt_vocab.bos().is_none() || tgt_vocab.eos().is_none() {
            return Err(Error::Config("target vocabulary needs EOS and BOS".into()));
        }
        let (vs, vt, h) = (src_vocab.len(), tgt_vocab.len(), hidden_dim);
        let mut m = Seq2Seq {
            src_vocab,
            tgt_vocab,
            condition,
            src_embedding: Matrix::zeros(vs, h),
            encoder: (0..layers).map(|_| LstmLayer::zeros(h, h)).collect(),
            tgt_embedding: Matrix::zeros(vt, h),
            decoder: (0..layers).map(|_| LstmLayer::zeros(h, h)).collect(),
            out_w: Matrix::zeros(vt, h),
            out_b: Matrix::zeros(1, vt),
            info: ModelInfo {
                seed,
                ..ModelInfo::default()
            },
        };
        let mut rng = RngStream::derive(seed, "init", 0);
        init_uniform(&mut m.params_mut(), 1.0 / (h as f64).sqrt(), &mut rng);
        Ok(m)
    }

    /// SCAN vocabularies, two layers.
    pub fn for_scan(condition: Condition, hidden_dim: usize, seed: u64) -> Result<Self> {
        Self::new(
            Vocab::scan_source(),
            Vocab::scan_target(),
            condition,
            hidden_dim,
            2,
            seed,
        )
    }

    pub fn hidden_dim(&self) -> usize {
        self.out_w.cols()
    }

    pub fn layers(&self) -> usize {
        self.encoder.len()
    }

    pub fn eos(&self) -> usize {
        self.tgt_vocab.eos().expect("checked at construction")
    }

    pub fn bos(&self) -> usize {
        self.tgt_vocab.bos().expect("checked at construction")
    }

    pub fn output_mask(&self) -> Vec<usize> {
        let mut m = vec![self.bos()];
        if !self.condition.trains_eos() {
            m.push(self.eos());
        }
        m
    }

    pub fn check_shapes(&self) -> Result<()> {
        let h = self.hidden_dim();
        let layer_ok = |l: &LstmLayer<T>| {
            l.w_ih.shape() == (4 * h, h)
                && l.w_hh.shape() == (4 * h, h)
                && l.bias.shape() == (1, 4 * h)
        };
        let ok = self.encoder.len() == self.decoder.len()
            && !self.encoder.is_empty()
            && self.encoder.iter().chain(&self.decoder).all(layer_ok)
            && self.src_embedding.shape() == (self.src_vocab.len(), h)
            && self.tgt_embedding.shape() == (self.tgt_vocab.len(), h)
            && self.out_w.shape() == (self.tgt_vocab.len(), h)
            && self.out_b.shape() == (1, self.tgt_vocab.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(
                "inconsistent encoder-decoder parameter shapes".into(),
            ))
        }
    }

    /// Source and target ids for a SCAN pair.
    pub fn encode_pair(&self, pair: &ScanPair) -> Result<(Vec<usize>, Vec<usize>)> {
        let names: Vec<&str> = pair.actions.iter().map(|a| a.name()).collect();
        Ok((
            self.src_vocab.encode(&pair.command)?,
            self.tgt_vocab.encode(&names)?,
        ))
    }

    /// Decoder inputs and targets for a gold output under this condition.
    pub fn teacher_pair(&self, tgt: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut inputs = vec![self.bos()];
        let mut targets = tgt.to_vec();
        if self.condition.trains_eos() {
            inputs.extend_from_slice(tgt);
            targets.push(self.eos());
        } else {
            inputs.extend_from_slice(&tgt[..tgt.len().saturating_sub(1)]);
        }
        (inputs, targets)
    }

    fn check_pair(&self, src: &[usize], tgt: &[usize]) -> Result<()> {
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::Validation(
                "source and target must be nonempty".into(),
            ));
        }
        self.src_vocab.check(src)?;
        self.tgt_vocab.check(tgt)?;
        if let Some(p) = tgt.iter().position(|&t| t == self.eos() || t == self.bos()) {
            return Err(Error::Vocab {
                token: self.tgt_vocab.symbol(tgt[p]).to_string(),
                position: p,
            });
        }
        Ok(())
    }

    fn stack_forward(
        layers: &[LstmLayer<T>],
        embedding: &Matrix<T>,
        seqs: &[&[usize]],
        init: Option<&State<T>>,
    ) -> (Vec<LayerTrace<T>>, Vec<Vec<bool>>) {
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let steps = lens.iter().copied().max().unwrap_or(0);
        let mask = step_mask(&lens, steps);
        let b = seqs.len();
        let h = layers[0].hidden();
        let mut inputs = embed_steps(embedding, seqs, steps);
        let mut traces = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let (h0, c0) = match init {
                Some(s) => s[l].clone(),
                None => (Matrix::zeros(b, h), Matrix::zeros(b, h)),
            };
            let tr = layer_forward(layer, inputs, h0, c0, &mask);
            inputs = tr.h[1..].to_vec();
            traces.push(tr);
        }
        (traces, mask)
    }

    fn final_states(traces: &[LayerTrace<T>]) -> State<T> {
        traces
            .iter()
            .map(|t| {
                let (h, c) = t.final_state();
                (h.clone(), c.clone())
            })
            .collect()
    }

    fn teacher_forward(&self, batch: &[(&[usize], &[usize])]) -> Result<Teacher<T>> {
        for (s, t) in batch {
            self.check_pair(s, t)?;
        }
        let srcs: Vec<&[usize]> = batch.iter().map(|(s, _)| *s).collect();
        let (enc, enc_mask) = Self::stack_forward(&self.encoder, &self.src_embedding, &srcs, None);
        let init = Self::final_states(&enc);
        let (dec_inputs, dec_targets): (Vec<_>, Vec<_>) =
            batch.iter().map(|(_, t)| self.teacher_pair(t)).unzip();
        let dec_refs: Vec<&[usize]> = dec_inputs.iter().map(|v| v.as_slice()).collect();
        let (dec, dec_mask) =
            Self::stack_forward(&self.decoder, &self.tgt_embedding, &dec_refs, Some(&init));
        Ok(Teacher {
            enc,
            enc_mask,
            dec,
            dec_mask,
            dec_inputs,
            dec_targets,
        })
    }

    /// Teacher-forced decoder logits, one matrix per pair with one row per
    /// predicted target (including EOS under `+EOS`).
    pub fn teacher_logits(&self, batch: &[(&[usize], &[usize])]) -> Result<Vec<Matrix<T>>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let tf = self.teacher_forward(batch)?;
        let top = stack_steps(&tf.dec.last().expect("layers").h[1..]);
        let logits = project(&top, &self.out_w, &self.out_b, &self.output_mask());
        let lens: Vec<usize> = tf.dec_inputs.iter().map(|v| v.len()).collect();
        Ok(unstack_rows(&logits, &lens))
    }

    /// Teacher-forced top-layer decoder states, labelled with the gold token
    /// each state predicts.
    pub fn decoder_trace(&self, batch: &[(&[usize], &[usize])]) -> Result<StateTrace<T>> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let tf = self.teacher_forward(batch)?;
        let lens: Vec<usize> = tf.dec_inputs.iter().map(|v| v.len()).collect();
        let top = stack_steps(&tf.dec.last().expect("layers").h[1..]);
        let per_seq = unstack_rows(&top, &lens);
        let mut meta = Vec::new();
        for (seq_id, targets) in tf.dec_targets.iter().enumerate() {
            for (pos, &tok) in targets.iter().enumerate() {
                meta.push(StateMeta {
                    seq_id,
                    pos,
                    gold_token: Some(self.tgt_vocab.symbol(tok).to_string()),
                    ..StateMeta::default()
                });
            }
        }
        StateTrace::new(Matrix::vstack(&per_seq)?, meta)
    }

    pub fn batch_loss_and_grads(&self, batch: &[(&[usize], &[usize])]) -> Result<BatchLoss<T>> {
        self.loss_impl(batch, true)
    }

    pub fn batch_loss(&self, batch: &[(&[usize], &[usize])]) -> Result<T> {
        Ok(self.loss_impl(batch, false)?.mean())
    }

    fn loss_impl(&self, batch: &[(&[usize], &[usize])], want_grads: bool) -> Result<BatchLoss<T>> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let tf = self.teacher_forward(batch)?;
        let b = batch.len();
        let steps = tf.dec_mask.len();
        let count: usize = tf.dec_targets.iter().map(|t| t.len()).sum();
        let mut targets = Vec::with_capacity(steps * b);
        for t in 0..steps {
            for y in &tf.dec_targets {
                targets.push(y.get(t).copied());
            }
        }
        let top = stack_steps(&tf.dec.last().expect("layers").h[1..]);
        let mut dlogits = project(&top, &self.out_w, &self.out_b, &self.output_mask());
        let nll_sum =
            softmax_xent_in_place(&mut dlogits, &targets, T::one() / T::lit(count as f64));
        let mut grads = self.zero_grads();
        if want_grads {
            self.backward(&tf, &top, &dlogits, batch, &mut grads);
        }
        Ok(BatchLoss {
            nll_sum,
            count,
            grads,
        })
    }

    fn backward(
        &self,
        tf: &Teacher<T>,
        top: &Matrix<T>,
        dlogits: &Matrix<T>,
        batch: &[(&[usize], &[usize])],
        grads: &mut [Matrix<T>],
    ) {
        let nl = self.layers();
        let b = batch.len();
        let h = self.hidden_dim();
        // Gradient layout follows `params`: src_emb, enc layers, tgt_emb, dec layers, out_w, out_b.
        let dec_emb_idx = 1 + 3 * nl;
        let out_idx = dec_emb_idx + 1 + 3 * nl;
        let (head, tail) = grads.split_at_mut(out_idx);
        let (gw, gb) = tail.split_at_mut(1);
        let dh = head_backward(top, dlogits, &self.out_w, &mut gw[0], &mut gb[0]);
        let steps = tf.dec_mask.len();
        let mut dh_out: Vec<Matrix<T>> = (0..steps)
            .map(|t| Matrix::from_fn(b, h, |r, j| dh[(t * b + r, j)]))
            .collect();

        let take = |i: usize, head: &mut [Matrix<T>]| LstmLayer {
            w_ih: std::mem::replace(&mut head[i], Matrix::zeros(0, 0)),
            w_hh: std::mem::replace(&mut head[i + 1], Matrix::zeros(0, 0)),
            bias: std::mem::replace(&mut head[i + 2], Matrix::zeros(0, 0)),
        };
        let put = |i: usize, g: LstmLayer<T>, head: &mut [Matrix<T>]| {
            head[i] = g.w_ih;
            head[i + 1] = g.w_hh;
            head[i + 2] = g.bias;
        };

        let mut init_grads = vec![(Matrix::zeros(b, h), Matrix::zeros(b, h)); nl];
        for l in (0..nl).rev() {
            let gi = dec_emb_idx + 1 + 3 * l;
            let mut g = take(gi, head);
            let (dx, dh0, dc0) = layer_backward(
                &self.decoder[l],
                &tf.dec[l],
                &tf.dec_mask,
                &dh_out,
                None,
                None,
                &mut g,
                true,
            );
            put(gi, g, head);
            init_grads[l] = (dh0, dc0);
            dh_out = dx;
        }
        let dec_refs: Vec<&[usize]> = tf.dec_inputs.iter().map(|v| v.as_slice()).collect();
        accumulate_embedding_grads(&mut head[dec_emb_idx], &dec_refs, &dh_out);

        let enc_steps = tf.enc_mask.len();
        let mut dh_out: Vec<Matrix<T>> = vec![Matrix::zeros(b, h); enc_steps];
        for l in (0..nl).rev() {
            let gi = 1 + 3 * l;
            let mut g = take(gi, head);
            let (dh_f, dc_f) = &init_grads[l];
            let (dx, _, _) = layer_backward(
                &self.encoder[l],
                &tf.enc[l],
                &tf.enc_mask,
                &dh_out,
                Some(dh_f),
                Some(dc_f),
                &mut g,
                true,
            );
            put(gi, g, head);
            dh_out = dx;
        }
        let srcs: Vec<&[usize]> = batch.iter().map(|(s, _)| *s).collect();
        accumulate_embedding_grads(&mut head[0], &srcs, &dh_out);
    }

    fn decoder_step(&self, tokens: &[usize], state: &mut State<T>) -> Matrix<T> {
        let h = self.hidden_dim();
        let mut x = Matrix::from_fn(tokens.len(), h, |r, j| self.tgt_embedding[(tokens[r], j)]);
        for (l, layer) in self.decoder.iter().enumerate() {
            let s = step_forward(layer, &x, &state[l].0, &state[l].1, None);
            state[l] = (s.h.clone(), s.c);
            x = s.h;
        }
        probabilities(project(&x, &self.out_w, &self.out_b, &self.output_mask()))
    }

    /// Greedy decoding for a batch of sources under shared options. With
    /// `forced_lens`, row `i` is decoded to exactly `forced_lens[i]` tokens
    /// with EOS masked.
    pub fn greedy_decode_batch(
        &self,
        srcs: &[&[usize]],
        opts: &DecodeOptions,
        forced_lens: Option<&[usize]>,
    ) -> Result<Vec<Vec<usize>>> {
        opts.validate(Some(self.eos()))?;
        if let Some(f) = forced_lens {
            if f.len() != srcs.len() {
                return Err(Error::Shape("one forced length per source required".into()));
            }
        }
        for s in srcs {
            if s.is_empty() {
                return Err(Error::Validation("source must be nonempty".into()));
            }
            self.src_vocab.check(s)?;
        }
        if srcs.is_empty() {
            return Ok(Vec::new());
        }
        let (enc, _) = Self::stack_forward(&self.encoder, &self.src_embedding, srcs, None);
        let mut state = Self::final_states(&enc);
        let b = srcs.len();
        let row_opts: Vec<DecodeOptions> = (0..b)
            .map(|i| match forced_lens {
                Some(f) => DecodeOptions {
                    forced_len: Some(f[i]),
                    max_len: f[i].max(1),
                    ..*opts
                },
                None => *opts,
            })
            .collect();
        let mut out = vec![Vec::new(); b];
        let mut done: Vec<bool> = row_opts.iter().map(|o| o.steps() == 0).collect();
        let mut prev = vec![self.bos(); b];
        let horizon = row_opts.iter().map(|o| o.steps()).max().unwrap_or(0);
        for _ in 0..horizon {
            if done.iter().all(|&d| d) {
                break;
            }
            let probs = self.decoder_step(&prev, &mut state);
            for r in 0..b {
                if done[r] {
                    continue;
                }
                match choose_next(probs.row(r), Some(self.eos()), &row_opts[r])? {
                    None => done[r] = true,
                    Some(tok) => {
                        out[r].push(tok);
                        prev[r] = tok;
                        if out[r].len() >= row_opts[r].steps() {
                            done[r] = true;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn greedy_decode(&self, src: &[usize], opts: &DecodeOptions) -> Result<Vec<usize>> {
        Ok(self.greedy_decode_batch(&[src], opts, None)?.remove(0))
    }
}

impl<T: Scalar> Parameterized<T> for Seq2Seq<T> {
    fn params(&self) -> Vec<&Matrix<T>> {
        let mut v = vec![&self.src_embedding];
        for l in &self.encoder {
            v.extend(l.params());
        }
        v.push(&self.tgt_embedding);
        for l in &self.decoder {
            v.extend(l.params());
        }
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = vec![&mut self.src_embedding];
        for l in &mut self.encoder {
            v.extend(l.params_mut());
        }
        v.push(&mut self.tgt_embedding);
        for l in &mut self.decoder {
            v.extend(l.params_mut());
        }
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = vec!["src_embedding".to_string()];
        let layer =
            |side: &str, l: usize| ["w_ih", "w_hh", "bias"].map(|p| format!("{side}.{l}.{p}"));
        for l in 0..self.encoder.len() {
            v.extend(layer("encoder", l));
        }
        v.push("tgt_embedding".into());
        for l in 0..self.decoder.len() {
            v.extend(layer("decoder", l));
        }
        v.push("out.w".into());
        v.push("out.b".into());
        v
    }
}
