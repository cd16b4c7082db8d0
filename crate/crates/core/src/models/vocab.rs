use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::langgen::{Action, DyckVocab, COMMAND_WORDS, EOS_SYMBOL};

pub const BOS_SYMBOL: &str = "<BOS>";

/// Symbol table with optional end/start markers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
    eos: Option<usize>,
    bos: Option<usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(symbols: Vec<String>) -> Self {
        let index: HashMap<String, usize> = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocab {
            eos: index.get(EOS_SYMBOL).copied(),
            bos: index.get(BOS_SYMBOL).copied(),
            symbols,
            index,
        }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

impl Vocab {
    pub fn new(symbols: Vec<String>) -> Self {
        symbols.into()
    }

    /// Brackets plus EOS, in [`DyckVocab`] id order.
    pub fn dyck(k: usize) -> Self {
        DyckVocab::new(k).symbols().into()
    }

    /// The 13 command words.
    pub fn scan_source() -> Self {
        COMMAND_WORDS
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .into()
    }

    /// Six actions, EOS, BOS.
    pub fn scan_target() -> Self {
        let mut v: Vec<String> = Action::ALL.iter().map(|a| a.name().to_string()).collect();
        v.push(EOS_SYMBOL.to_string());
        v.push(BOS_SYMBOL.to_string());
        v.into()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn eos(&self) -> Option<usize> {
        self.eos
    }

    pub fn bos(&self) -> Option<usize> {
        self.bos
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<usize>> {
        symbols
            .iter()
            .enumerate()
            .map(|(position, s)| {
                self.id(s.as_ref()).ok_or_else(|| Error::Vocab {
                    token: s.as_ref().to_string(),
                    position,
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.symbol(i)).collect()
    }

    /// Fails with a vocabulary error on the first out-of-range id.
    pub fn check(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().position(|&i| i >= self.len()) {
            Some(position) => Err(Error::Vocab {
                token: format!("#{}", ids[position]),
                position,
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_symbols_located() {
        let v = Vocab::scan_target();
        assert_eq!(v.len(), 8);
        assert_eq!(v.eos(), Some(6));
        assert_eq!(v.bos(), Some(7));
        let d = Vocab::dyck(2);
        assert_eq!(d.eos(), Some(4));
        assert_eq!(d.bos(), None);
        assert_eq!(Vocab::scan_source().eos(), None);
    }

    #[test]
    fn encode_unknown_reports_position() {
        let v = Vocab::scan_source();
        let e = v.encode(&["walk", "fly"]).unwrap_err();
        assert!(matches!(e, Error::Vocab { position: 1, .. }));
        assert!(v.check(&[0, 13]).is_err());
    }

    #[test]
    fn serde_as_symbol_list() {
        let v = Vocab::dyck(2);
        let js = serde_json::to_string(&v).unwrap();
        assert_eq!(js, r#"["(","[",")","]","<EOS>"]"#);
        assert_eq!(serde_json::from_str::<Vocab>(&js).unwrap(), v);
    }
}
