//! Dyck(k, m): balanced strings over `k` bracket types with nesting depth at
//! most `m`, sampled from a bounded random walk and truncated by length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Token table for Dyck(k, m): opens are `0..k`, closes `k..2k`, EOS is `2k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyckVocab {
    pub k: usize,
}

pub const EOS_SYMBOL: &str = "<EOS>";

impl DyckVocab {
    pub fn new(k: usize) -> Self {
        DyckVocab { k }
    }

    pub fn size(&self) -> usize {
        2 * self.k + 1
    }

    pub fn open(&self, ty: usize) -> usize {
        ty
    }

    pub fn close(&self, ty: usize) -> usize {
        self.k + ty
    }

    pub fn eos(&self) -> usize {
        2 * self.k
    }

    pub fn is_open(&self, id: usize) -> bool {
        id < self.k
    }

    pub fn is_close(&self, id: usize) -> bool {
        id >= self.k && id < 2 * self.k
    }

    /// Bracket type of an open or close token.
    pub fn bracket_type(&self, id: usize) -> Option<usize> {
        if self.is_open(id) {
            Some(id)
        } else if self.is_close(id) {
            Some(id - self.k)
        } else {
            None
        }
    }

    pub fn close_ids(&self) -> std::ops::Range<usize> {
        self.k..2 * self.k
    }

    pub fn render(&self, id: usize) -> String {
        const PRETTY_OPEN: [&str; 2] = ["(", "["];
        const PRETTY_CLOSE: [&str; 2] = [")", "]"];
        if id == self.eos() {
            EOS_SYMBOL.to_string()
        } else if self.k <= 2 && self.is_open(id) {
            PRETTY_OPEN[id].to_string()
        } else if self.k <= 2 && self.is_close(id) {
            PRETTY_CLOSE[id - self.k].to_string()
        } else if self.is_open(id) {
            format!("({id}")
        } else {
            format!("){}", id - self.k)
        }
    }

    pub fn symbols(&self) -> Vec<String> {
        (0..self.size()).map(|i| self.render(i)).collect()
    }

    pub fn parse(&self, symbol: &str) -> Option<usize> {
        (0..self.size()).find(|&i| self.render(i) == symbol)
    }

    /// Parses a whitespace-separated line into token ids.
    pub fn parse_line(&self, line: &str) -> Result<Vec<usize>> {
        line.split_whitespace()
            .enumerate()
            .map(|(position, s)| {
                self.parse(s).ok_or_else(|| Error::Vocab {
                    token: s.to_string(),
                    position,
                })
            })
            .collect()
    }

    pub fn render_line(&self, tokens: &[usize]) -> String {
        tokens
            .iter()
            .map(|&t| self.render(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Dataset-level parameters for one Dyck(k, m) experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckConfig {
    pub k: usize,
    pub m: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub test_min: usize,
    pub test_max: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

/// Training length window `(6m(m-2)+40, 7m(m-2)+60)`.
pub fn dyck_length_bounds(m: usize) -> Result<(usize, usize)> {
    if m < 3 {
        return Err(Error::Domain(format!("length bounds need m >= 3, got {m}")));
    }
    let q = m * (m - 2);
    Ok((6 * q + 40, 7 * q + 60))
}

/// Out-of-domain window: the published bounds for m in {4, 6, 8}, otherwise
/// ten times the training window.
pub fn dyck_test_bounds(m: usize) -> Result<(usize, usize)> {
    match m {
        4 => Ok((950, 1050)),
        6 => Ok((1840, 2280)),
        8 => Ok((3280, 3960)),
        _ => {
            let (lo, hi) = dyck_length_bounds(m)?;
            Ok((10 * lo, 10 * hi))
        }
    }
}

impl DyckConfig {
    /// Standard setup: k = 2, `10^(m/2+2)` training samples, 500
    /// validation samples, 10^4 test samples.
    pub fn standard(m: usize) -> Result<Self> {
        let (min_len, max_len) = dyck_length_bounds(m)?;
        let (test_min, test_max) = dyck_test_bounds(m)?;
        let cfg = DyckConfig {
            k: 2,
            m,
            min_len,
            max_len,
            test_min,
            test_max,
            n_train: 10f64.powf(m as f64 / 2.0 + 2.0).round() as usize,
            n_val: 500,
            n_test: 10_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.m < 2 {
            return Err(Error::Config("m must be at least 2".into()));
        }
        if !(self.min_len <= self.max_len
            && self.max_len < self.test_min
            && self.test_min <= self.test_max)
        {
            return Err(Error::Config(format!(
                "length windows must satisfy min_len <= max_len < test_min <= test_max, got [{}, {}] and [{}, {}]",
                self.min_len, self.max_len, self.test_min, self.test_max
            )));
        }
        Ok(())
    }

    pub fn vocab(&self) -> DyckVocab {
        DyckVocab::new(self.k)
    }

    pub fn hidden_dim(&self) -> usize {
        5 * self.m
    }

    /// Minibatch size `2^(m/2+2)`.
    pub fn batch_size(&self) -> usize {
        2f64.powf(self.m as f64 / 2.0 + 2.0).round() as usize
    }
}

/// Gold structure of a bracket string.
///
/// `depth`, `stack` and `can_end` describe the state after consuming each
/// token. `close_distance[i]` and `close_type[i]` describe the prediction of
/// token `i` from the prefix `tokens[..i]`: when that prefix has an unclosed
/// bracket, closing is legal, the correct close has the type on top of the
/// stack, and the distance is `i` minus the index of that open bracket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckAnnotations {
    pub depth: Vec<usize>,
    pub stack: Vec<String>,
    pub can_end: Vec<bool>,
    pub close_distance: Vec<Option<usize>>,
    pub close_type: Vec<Option<usize>>,
}

impl DyckAnnotations {
    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn legal_close_positions(&self) -> usize {
        self.close_distance.iter().filter(|d| d.is_some()).count()
    }
}

/// Runs the bracket stack over `tokens`. EOS is accepted only as the final
/// token of a balanced string and is not annotated.
pub fn dyck_annotations(vocab: &DyckVocab, tokens: &[usize]) -> Result<DyckAnnotations> {
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut ann = DyckAnnotations {
        depth: Vec::with_capacity(tokens.len()),
        stack: Vec::with_capacity(tokens.len()),
        can_end: Vec::with_capacity(tokens.len()),
        close_distance: Vec::with_capacity(tokens.len()),
        close_type: Vec::with_capacity(tokens.len()),
    };
    let mut rendered = String::new();
    for (i, &tok) in tokens.iter().enumerate() {
        if tok == vocab.eos() {
            if i + 1 != tokens.len() || !stack.is_empty() {
                return Err(Error::Validation(format!(
                    "EOS at position {i} must end a balanced string"
                )));
            }
            break;
        }
        match stack.last() {
            Some(&(ty, at)) => {
                ann.close_distance.push(Some(i - at));
                ann.close_type.push(Some(ty));
            }
            None => {
                ann.close_distance.push(None);
                ann.close_type.push(None);
            }
        }
        if vocab.is_open(tok) {
            stack.push((tok, i));
            rendered.push_str(&vocab.render(tok));
        } else if vocab.is_close(tok) {
            let ty = tok - vocab.k;
            match stack.pop() {
                None => {
                    return Err(Error::Validation(format!(
                        "close bracket at position {i} with empty stack"
                    )))
                }
                Some((open_ty, _)) if open_ty != ty => {
                    return Err(Error::Validation(format!(
                        "close bracket at position {i} has type {ty}, expected {open_ty}"
                    )))
                }
                Some((open_ty, _)) => {
                    let width = vocab.render(open_ty).len();
                    rendered.truncate(rendered.len() - width);
                }
            }
        } else {
            return Err(Error::Vocab {
                token: tok.to_string(),
                position: i,
            });
        }
        ann.depth.push(stack.len());
        ann.stack.push(rendered.clone());
        ann.can_end.push(stack.is_empty());
    }
    Ok(ann)
}

/// One Dyck string with its gold annotations. `tokens` may end with EOS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckSample {
    pub tokens: Vec<usize>,
    pub annotations: DyckAnnotations,
}

impl DyckSample {
    pub fn from_tokens(vocab: &DyckVocab, tokens: Vec<usize>) -> Result<Self> {
        let annotations = dyck_annotations(vocab, &tokens)?;
        Ok(DyckSample {
            tokens,
            annotations,
        })
    }

    /// Number of bracket tokens (EOS excluded).
    pub fn bracket_len(&self) -> usize {
        self.annotations.len()
    }

    pub fn has_eos(&self, vocab: &DyckVocab) -> bool {
        self.tokens.last() == Some(&vocab.eos())
    }

    pub fn max_depth(&self) -> usize {
        self.annotations.depth.iter().copied().max().unwrap_or(0)
    }
}

/// Natural log of the probability that the unconditioned chain emits exactly
/// `tokens` and then ends; `None` when it cannot.
pub fn chain_log_probability(k: usize, m: usize, tokens: &[usize]) -> Option<f64> {
    let vocab = DyckVocab::new(k);
    let half = 0.5f64.ln();
    let pick = (k as f64).ln();
    let mut stack: Vec<usize> = Vec::new();
    let mut lp = 0.0;
    for &t in tokens {
        let d = stack.len();
        if vocab.is_open(t) {
            if d >= m {
                return None;
            }
            lp += half - pick;
            stack.push(t);
        } else if vocab.is_close(t) {
            if stack.pop() != Some(t - k) {
                return None;
            }
            if d < m {
                lp += half;
            }
        } else {
            return None;
        }
    }
    if stack.is_empty() {
        Some(lp + half)
    } else {
        None
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// The Dyck chain conditioned on its final length landing in `[lo, hi]`.
///
/// `log_success[t][d]` is the log probability that the chain, at depth `d`
/// after `t` tokens, eventually ends with a length inside the window.
/// Reweighting each transition by it (a Doob h-transform) draws exactly from
/// the conditional distribution that whole-string rejection sampling
/// targets, without the exponential number of rejected attempts that long
/// windows would need.
#[derive(Clone, Debug)]
pub struct LengthConditionedChain {
    k: usize,
    m: usize,
    lo: usize,
    hi: usize,
    log_success: Vec<Vec<f64>>,
}

impl LengthConditionedChain {
    pub fn new(k: usize, m: usize, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::Config(format!("empty length window [{lo}, {hi}]")));
        }
        if k < 1 || m < 1 {
            return Err(Error::Config(format!(
                "invalid Dyck parameters k={k}, m={m}"
            )));
        }
        let half = 0.5f64.ln();
        let ninf = f64::NEG_INFINITY;
        let mut log_success = vec![vec![ninf; m + 1]; hi + 2];
        for t in (0..=hi).rev() {
            for d in 0..=m {
                let next = &log_success[t + 1];
                let v = if d == 0 {
                    let end = if t >= lo { half } else { ninf };
                    log_add(end, half + next[1])
                } else if d == m {
                    next[m - 1]
                } else {
                    log_add(half + next[d + 1], half + next[d - 1])
                };
                log_success[t][d] = v;
            }
        }
        if log_success[0][0] == ninf {
            return Err(Error::Sampling(format!(
                "no Dyck string has a length in [{lo}, {hi}]"
            )));
        }
        Ok(LengthConditionedChain {
            k,
            m,
            lo,
            hi,
            log_success,
        })
    }

    /// Log probability of the window under the unconditioned chain.
    pub fn log_window_mass(&self) -> f64 {
        self.log_success[0][0]
    }

    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<usize> {
        let vocab = DyckVocab::new(self.k);
        let half = 0.5f64.ln();
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(self.hi);
        loop {
            let t = out.len();
            let d = stack.len();
            let here = self.log_success[t][d];
            let next = &self.log_success[t + 1];
            if d == 0 {
                let p_end = if t >= self.lo {
                    (half - here).exp()
                } else {
                    0.0
                };
                if rng.uniform() < p_end {
                    return out;
                }
                let ty = rng.below(self.k);
                stack.push(ty);
                out.push(vocab.open(ty));
            } else if d == self.m {
                let ty = stack.pop().expect("nonempty stack");
                out.push(vocab.close(ty));
            } else {
                let p_open = (half + next[d + 1] - here).exp();
                if rng.uniform() < p_open {
                    let ty = rng.below(self.k);
                    stack.push(ty);
                    out.push(vocab.open(ty));
                } else {
                    let ty = stack.pop().expect("nonempty stack");
                    out.push(vocab.close(ty));
                }
            }
        }
    }
}

/// Draws one balanced string with length in `[lo, hi]` from the length-truncated
/// chain and annotates it.
pub fn sample_dyck(
    cfg: &DyckConfig,
    lo: usize,
    hi: usize,
    rng: &mut RngStream,
) -> Result<DyckSample> {
    let chain = LengthConditionedChain::new(cfg.k, cfg.m, lo, hi)?;
    DyckSample::from_tokens(&cfg.vocab(), chain.sample(rng))
}

/// Whole-string rejection sampling from the raw chain: resample until the
/// length lands in `[lo, hi]`, giving up after `budget` attempts. Only
/// practical for windows the raw chain reaches often.
pub fn sample_dyck_rejection(
    cfg: &DyckConfig,
    lo: usize,
    hi: usize,
    rng: &mut RngStream,
    budget: usize,
) -> Result<DyckSample> {
    let vocab = cfg.vocab();
    for _ in 0..budget {
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::new();
        let accepted = loop {
            if out.len() > hi {
                break false;
            }
            let d = stack.len();
            if d == 0 {
                if rng.coin() {
                    break out.len() >= lo;
                }
                let ty = rng.below(cfg.k);
                stack.push(ty);
                out.push(vocab.open(ty));
            } else if d == cfg.m || !rng.coin() {
                let ty = stack.pop().expect("nonempty stack");
                out.push(vocab.close(ty));
            } else {
                let ty = rng.below(cfg.k);
                stack.push(ty);
                out.push(vocab.open(ty));
            }
        };
        if accepted {
            return DyckSample::from_tokens(&vocab, out);
        }
    }
    Err(Error::Sampling(format!(
        "no sample with length in [{lo}, {hi}] after {budget} attempts"
    )))
}

/// Train, validation and test splits for one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckDatasets {
    pub config: DyckConfig,
    pub condition: Condition,
    pub seed: u64,
    pub train: Vec<DyckSample>,
    pub validation: Vec<DyckSample>,
    pub test: Vec<DyckSample>,
}

fn draw_many(
    chain: &LengthConditionedChain,
    seed: u64,
    purpose: &str,
    n: usize,
) -> Vec<Vec<usize>> {
    (0..n)
        .into_par_iter()
        .map(|i| chain.sample(&mut RngStream::derive(seed, purpose, i as u64)))
        .collect()
}

/// `n` annotated samples with bracket length in `[lo, hi]`, one substream
/// per index under `purpose`.
pub fn sample_dyck_set(
    cfg: &DyckConfig,
    lo: usize,
    hi: usize,
    seed: u64,
    purpose: &str,
    n: usize,
) -> Result<Vec<DyckSample>> {
    let chain = LengthConditionedChain::new(cfg.k, cfg.m, lo, hi)?;
    let vocab = cfg.vocab();
    draw_many(&chain, seed, purpose, n)
        .into_par_iter()
        .map(|t| DyckSample::from_tokens(&vocab, t))
        .collect()
}

/// Generates all three splits. Every sample comes from its own substream,
/// so output does not depend on worker count.
///
/// `+EOS` appends EOS to training and validation samples. Random cutoff
/// removes `u ~ U{0, .., max_len - min_len}` tokens from the end of each
/// training sample.
pub fn build_dyck_datasets(
    cfg: &DyckConfig,
    condition: Condition,
    seed: u64,
) -> Result<DyckDatasets> {
    cfg.validate()?;
    let vocab = cfg.vocab();
    let in_domain = LengthConditionedChain::new(cfg.k, cfg.m, cfg.min_len, cfg.max_len)?;
    let out_domain = LengthConditionedChain::new(cfg.k, cfg.m, cfg.test_min, cfg.test_max)?;

    let mut train = draw_many(&in_domain, seed, "dyck-train", cfg.n_train);
    let mut validation = draw_many(&in_domain, seed, "dyck-val", cfg.n_val);
    let test = draw_many(&out_domain, seed, "dyck-test", cfg.n_test);

    match condition {
        Condition::PlusEos => {
            for s in train.iter_mut().chain(validation.iter_mut()) {
                s.push(vocab.eos());
            }
        }
        Condition::MinusEos => {}
        Condition::MinusEosRandomCutoff => {
            let window = cfg.max_len - cfg.min_len;
            for (i, s) in train.iter_mut().enumerate() {
                let mut rng = RngStream::derive(seed, "dyck-cutoff", i as u64);
                let u = rng.below(window + 1);
                let keep = s.len().saturating_sub(u).max(2);
                s.truncate(keep);
            }
        }
    }

    let annotate = |v: Vec<Vec<usize>>| -> Result<Vec<DyckSample>> {
        v.into_par_iter()
            .map(|t| DyckSample::from_tokens(&vocab, t))
            .collect()
    };
    Ok(DyckDatasets {
        config: cfg.clone(),
        condition,
        seed,
        train: annotate(train)?,
        validation: annotate(validation)?,
        test: annotate(test)?,
    })
}

/// Token-length histogram (EOS excluded).
pub fn length_histogram(samples: &[DyckSample]) -> std::collections::BTreeMap<usize, usize> {
    let mut h = std::collections::BTreeMap::new();
    for s in samples {
        *h.entry(s.bracket_len()).or_insert(0) += 1;
    }
    h
}
