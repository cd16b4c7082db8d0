//! Metrics: bracket-closing score, perplexity and SCAN exact match.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::langgen::{DyckSample, ScanPair};
use crate::models::{DecodeOptions, LstmLm, Seq2Seq, Vocab};
use crate::numerics::{Matrix, Scalar};

pub use crate::models::masked_distribution as masked_next_distribution;

/// Threshold on the correct close's share of close-bracket mass.
pub const CLOSE_SHARE_THRESHOLD: f64 = 0.8;

/// Output length cap for standard-mode SCAN decoding.
pub const SCAN_MAX_DECODE: usize = 60;

const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    /// Bracket-closing only: distance -> (correct, total).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_distance: BTreeMap<usize, (usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default)]
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EvalReport {
    pub fn new(metric: impl Into<String>, value: f64) -> Self {
        EvalReport {
            metric: metric.into(),
            value,
            per_distance: BTreeMap::new(),
            condition: None,
            dataset: String::new(),
            seed: None,
        }
    }

    pub fn with_context(
        mut self,
        condition: Condition,
        dataset: impl Into<String>,
        seed: u64,
    ) -> Self {
        self.condition = Some(condition);
        self.dataset = dataset.into();
        self.seed = Some(seed);
        self
    }
}

/// A model that yields next-token distributions for every prefix.
pub trait PrefixModel<T> {
    fn prefix_vocab(&self) -> &Vocab;

    /// Row `t` of result `i` is the distribution after `seqs[i][..=t]`.
    fn next_token_distributions(&self, seqs: &[&[usize]]) -> Result<Vec<Matrix<T>>>;
}

impl<T: Scalar> PrefixModel<T> for LstmLm<T> {
    fn prefix_vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_token_distributions(&self, seqs: &[&[usize]]) -> Result<Vec<Matrix<T>>> {
        LstmLm::next_token_distributions(self, seqs)
    }
}

fn strip_eos(tokens: &[usize], eos: Option<usize>) -> &[usize] {
    match (tokens.last(), eos) {
        (Some(&last), Some(e)) if last == e => &tokens[..tokens.len() - 1],
        _ => tokens,
    }
}

/// Whether the correct close holds strictly more than 80% of the close mass.
pub fn close_credit(probs: &[f64], close_ids: std::ops::Range<usize>, correct: usize) -> bool {
    let total: f64 = probs[close_ids].iter().sum();
    total > 0.0 && probs[correct] / total > CLOSE_SHARE_THRESHOLD
}

/// Per-distance accuracies and their unweighted mean over nonempty buckets.
pub fn bracket_closing_score<T: Scalar, M: PrefixModel<T> + Sync>(
    model: &M,
    samples: &[DyckSample],
) -> Result<EvalReport> {
    let vocab = model.prefix_vocab();
    let k = vocab
        .symbols()
        .iter()
        .filter(|s| {
            s.as_str() != crate::langgen::EOS_SYMBOL && s.as_str() != crate::models::BOS_SYMBOL
        })
        .count()
        / 2;
    if k == 0 {
        return Err(Error::Validation("model vocabulary has no brackets".into()));
    }
    let mut table: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for chunk in samples.chunks(EVAL_CHUNK) {
        let seqs: Vec<&[usize]> = chunk
            .iter()
            .map(|s| {
                let t = strip_eos(&s.tokens, vocab.eos());
                if s.annotations.len() != t.len() {
                    return Err(Error::Validation(
                        "sample annotations do not match its tokens".into(),
                    ));
                }
                Ok(t)
            })
            .collect::<Result<_>>()?;
        let dists = model.next_token_distributions(&seqs)?;
        for (s, d) in chunk.iter().zip(&dists) {
            let ann = &s.annotations;
            for i in 1..ann.len() {
                let (Some(dist), Some(ty)) = (ann.close_distance[i], ann.close_type[i]) else {
                    continue;
                };
                let row: Vec<f64> = d.row(i - 1).iter().map(|x| x.as_f64()).collect();
                let hit = close_credit(&row, k..2 * k, k + ty);
                let e = table.entry(dist).or_insert((0, 0));
                e.0 += hit as usize;
                e.1 += 1;
            }
        }
    }
    if table.is_empty() {
        return Err(Error::Validation(
            "no legal close positions in the corpus".into(),
        ));
    }
    let mean = table
        .values()
        .map(|&(c, t)| c as f64 / t as f64)
        .sum::<f64>()
        / table.len() as f64;
    let mut r = EvalReport::new("bracket_closing", mean);
    r.per_distance = table;
    Ok(r)
}

/// `exp` of the mean next-token NLL over every predicted bracket token.
/// With `include_eos`, the end-of-string event after each sample is scored
/// too (an EOS-masked model gives infinite perplexity).
pub fn perplexity<T: Scalar, M: PrefixModel<T>>(
    model: &M,
    samples: &[DyckSample],
    include_eos: bool,
) -> Result<f64> {
    let eos = model.prefix_vocab().eos();
    if include_eos && eos.is_none() {
        return Err(Error::Config("vocabulary has no EOS to score".into()));
    }
    let mut nll = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let seqs: Vec<&[usize]> = chunk.iter().map(|s| strip_eos(&s.tokens, eos)).collect();
        let dists = model.next_token_distributions(&seqs)?;
        for (s, d) in seqs.iter().zip(&dists) {
            for i in 1..s.len() {
                nll -= d[(i - 1, s[i])].as_f64().ln();
                count += 1;
            }
            if include_eos && !s.is_empty() {
                nll -= d[(s.len() - 1, eos.expect("checked"))].as_f64().ln();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Validation("empty corpus".into()));
    }
    Ok((nll / count as f64).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Standard,
    Oracle,
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::Standard => "standard",
            DecodeMode::Oracle => "oracle",
        })
    }
}

/// Greedy outputs for every pair under `mode`.
pub fn decode_pairs<T: Scalar>(
    model: &Seq2Seq<T>,
    pairs: &[ScanPair],
    mode: DecodeMode,
) -> Result<Vec<Vec<usize>>> {
    if mode == DecodeMode::Standard && !model.condition.trains_eos() {
        return Err(Error::Config(format!(
            "standard decoding needs an EOS-trained model, not {}",
            model.condition.label()
        )));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(EVAL_CHUNK) {
        let srcs: Vec<Vec<usize>> = chunk
            .iter()
            .map(|p| model.src_vocab.encode(&p.command))
            .collect::<Result<_>>()?;
        let refs: Vec<&[usize]> = srcs.iter().map(|s| s.as_slice()).collect();
        let decoded = match mode {
            DecodeMode::Standard => {
                model.greedy_decode_batch(&refs, &DecodeOptions::standard(SCAN_MAX_DECODE), None)?
            }
            DecodeMode::Oracle => {
                let lens: Vec<usize> = chunk.iter().map(|p| p.actions.len()).collect();
                let cap = lens.iter().copied().max().unwrap_or(1).max(1);
                model.greedy_decode_batch(&refs, &DecodeOptions::oracle(cap), Some(&lens))?
            }
        };
        out.extend(decoded);
    }
    Ok(out)
}

/// Fraction of pairs decoded exactly.
pub fn exact_match<T: Scalar>(
    model: &Seq2Seq<T>,
    pairs: &[ScanPair],
    mode: DecodeMode,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Validation("no pairs to evaluate".into()));
    }
    let decoded = decode_pairs(model, pairs, mode)?;
    let mut hits = 0usize;
    for (p, d) in pairs.iter().zip(&decoded) {
        let gold = model
            .tgt_vocab
            .encode(&p.actions.iter().map(|a| a.name()).collect::<Vec<_>>())?;
        hits += (gold == *d) as usize;
    }
    Ok(EvalReport::new(
        format!("exact_match_{mode}"),
        hits as f64 / pairs.len() as f64,
    ))
}
