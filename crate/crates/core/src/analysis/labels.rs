use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LstmLm, Seq2Seq, StateTrace};
use crate::numerics::{Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Labeling {
    Position,
    StackState,
    Depth,
    CanEnd,
    GoldToken,
    EosPlurality,
}

impl std::str::FromStr for Labeling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "position" | "pos" => Labeling::Position,
            "stack-state" | "stack" => Labeling::StackState,
            "depth" => Labeling::Depth,
            "can-end" => Labeling::CanEnd,
            "gold-token" | "token" => Labeling::GoldToken,
            "eos-plurality" | "eos" => Labeling::EosPlurality,
            other => return Err(Error::Config(format!("unknown labeling {other:?}"))),
        })
    }
}

/// Access to a model's output layer, for labelling states by its argmax.
pub trait OutputHead<T> {
    fn head(&self) -> (&Matrix<T>, &Matrix<T>);
    fn eos_id(&self) -> Option<usize>;
    /// Ids that are never predicted regardless of condition.
    fn never_emitted(&self) -> Vec<usize>;
    fn trains_eos(&self) -> bool;
}

impl<T: Scalar> OutputHead<T> for LstmLm<T> {
    fn head(&self) -> (&Matrix<T>, &Matrix<T>) {
        (&self.out_w, &self.out_b)
    }
    fn eos_id(&self) -> Option<usize> {
        self.vocab.eos()
    }
    fn never_emitted(&self) -> Vec<usize> {
        self.vocab.bos().into_iter().collect()
    }
    fn trains_eos(&self) -> bool {
        self.condition.trains_eos()
    }
}

impl<T: Scalar> OutputHead<T> for Seq2Seq<T> {
    fn head(&self) -> (&Matrix<T>, &Matrix<T>) {
        (&self.out_w, &self.out_b)
    }
    fn eos_id(&self) -> Option<usize> {
        Some(self.eos())
    }
    fn never_emitted(&self) -> Vec<usize> {
        vec![self.bos()]
    }
    fn trains_eos(&self) -> bool {
        self.condition.trains_eos()
    }
}

/// Whether EOS holds the single largest probability at each state of
/// `trace`, judged by an EOS-trained model's output layer.
pub fn eos_plurality<T: Scalar>(
    reference: &dyn OutputHead<T>,
    trace: &StateTrace<T>,
) -> Result<Vec<bool>> {
    if !reference.trains_eos() {
        return Err(Error::Config(
            "EOS plurality labels need an EOS-trained reference model".into(),
        ));
    }
    let eos = reference
        .eos_id()
        .ok_or_else(|| Error::Config("reference model has no EOS".into()))?;
    let (w, b) = reference.head();
    if w.cols() != trace.dim() {
        return Err(Error::Shape(format!(
            "reference head expects {}-dimensional states, trace has {}",
            w.cols(),
            trace.dim()
        )));
    }
    let skip = reference.never_emitted();
    Ok((0..trace.len())
        .map(|r| {
            let h = trace.states.row(r);
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for v in 0..w.rows() {
                if skip.contains(&v) {
                    continue;
                }
                let z = b[(0, v)].as_f64()
                    + w.row(v)
                        .iter()
                        .zip(h)
                        .map(|(a, x)| a.as_f64() * x.as_f64())
                        .sum::<f64>();
                if z > best.1 {
                    best = (v, z);
                }
            }
            best.0 == eos
        })
        .collect())
}

/// One label per state. `eos_reference` supplies the reference model and
/// its own trace over the same positions.
pub fn label_states<T: Scalar>(
    trace: &StateTrace<T>,
    labeling: Labeling,
    eos_reference: Option<(&dyn OutputHead<T>, &StateTrace<T>)>,
) -> Result<Vec<String>> {
    let missing = |what: &str| Error::Validation(format!("trace has no {what} metadata"));
    let meta = &trace.meta;
    match labeling {
        Labeling::Position => Ok(meta.iter().map(|m| m.pos.to_string()).collect()),
        Labeling::StackState => meta
            .iter()
            .map(|m| m.stack.clone().ok_or_else(|| missing("stack-state")))
            .collect(),
        Labeling::Depth => meta
            .iter()
            .map(|m| {
                m.depth
                    .map(|d| d.to_string())
                    .ok_or_else(|| missing("depth"))
            })
            .collect(),
        Labeling::CanEnd => meta
            .iter()
            .map(|m| {
                m.can_end
                    .map(|c| c.to_string())
                    .ok_or_else(|| missing("can_end"))
            })
            .collect(),
        Labeling::GoldToken => meta
            .iter()
            .map(|m| m.gold_token.clone().ok_or_else(|| missing("gold-token")))
            .collect(),
        Labeling::EosPlurality => {
            let (head, ref_trace) = eos_reference.ok_or_else(|| {
                Error::Config("EOS plurality labels need a reference model".into())
            })?;
            let aligned = ref_trace.len() == trace.len()
                && ref_trace
                    .meta
                    .iter()
                    .zip(meta)
                    .all(|(a, b)| a.seq_id == b.seq_id && a.pos == b.pos);
            if !aligned {
                return Err(Error::Validation(
                    "reference trace is not aligned with the trace".into(),
                ));
            }
            Ok(eos_plurality(head, ref_trace)?
                .into_iter()
                .map(|b| b.to_string())
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::Condition;
    use crate::langgen::{DyckSample, DyckVocab};
    use crate::models::{TraceKind, Vocab};
    use crate::numerics::softmax;

    #[test]
    fn dyck_labels_from_metadata() {
        let m = LstmLm::<f64>::new(Vocab::dyck(2), Condition::PlusEos, 4, 4, 0).unwrap();
        let s = DyckSample::from_tokens(&DyckVocab::new(2), vec![0, 1, 3, 2, 4]).unwrap();
        let t = m.trace_dyck(&[s], TraceKind::Hidden).unwrap();
        assert_eq!(t.len(), 4);
        let stack = label_states(&t, Labeling::StackState, None).unwrap();
        assert_eq!(stack, vec!["(", "([", "(", ""]);
        assert_eq!(label_states(&t, Labeling::CanEnd, None).unwrap()[3], "true");
        assert!(label_states(&t, Labeling::GoldToken, None).is_err());
        assert!(matches!(
            label_states(&t, Labeling::EosPlurality, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn plurality_agrees_with_full_softmax_argmax() {
        let plus = LstmLm::<f64>::new(Vocab::dyck(2), Condition::PlusEos, 4, 6, 3).unwrap();
        let mut biased = plus.clone();
        biased.out_b.row_mut(0)[4] = 0.4;
        let seqs: Vec<&[usize]> = vec![&[0, 1, 3, 2, 0, 2], &[1, 1, 3, 3]];
        let outs = biased.forward_batch(&seqs, TraceKind::Hidden).unwrap();
        let states = crate::numerics::Matrix::vstack(
            &outs.iter().map(|o| o.states.clone()).collect::<Vec<_>>(),
        )
        .unwrap();
        let logits: Vec<Vec<f64>> = outs
            .iter()
            .flat_map(|o| {
                (0..o.logits.rows())
                    .map(|r| o.logits.row(r).to_vec())
                    .collect::<Vec<_>>()
            })
            .collect();
        let meta = (0..states.rows())
            .map(|i| crate::models::StateMeta {
                pos: i,
                ..Default::default()
            })
            .collect();
        let trace = StateTrace::new(states, meta).unwrap();
        let labels = eos_plurality(&biased, &trace).unwrap();
        for (l, z) in labels.iter().zip(&logits) {
            let p = softmax(z).unwrap();
            assert_eq!(*l, crate::numerics::argmax(&p) == 4);
        }
        let minus = LstmLm::<f64>::new(Vocab::dyck(2), Condition::MinusEos, 4, 6, 3).unwrap();
        assert!(matches!(
            eos_plurality(&minus, &trace),
            Err(Error::Config(_))
        ));
    }
}
