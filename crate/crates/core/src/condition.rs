use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Training condition: whether targets carry an end-of-sequence token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "+eos")]
    PlusEos,
    #[serde(rename = "-eos")]
    MinusEos,
    /// `-EOS` with a random number of tokens removed from the end of each
    /// training sample.
    #[serde(rename = "-eos+random-cutoff")]
    MinusEosRandomCutoff,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::PlusEos,
        Condition::MinusEos,
        Condition::MinusEosRandomCutoff,
    ];

    /// True when EOS appears in training targets.
    pub fn trains_eos(self) -> bool {
        matches!(self, Condition::PlusEos)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::PlusEos => "+eos",
            Condition::MinusEos => "-eos",
            Condition::MinusEosRandomCutoff => "-eos+random-cutoff",
        }
    }

    /// Label used in printed tables.
    pub fn label(self) -> &'static str {
        match self {
            Condition::PlusEos => "+EOS",
            Condition::MinusEos => "-EOS",
            Condition::MinusEosRandomCutoff => "-EOS+RandomCutoff",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "+eos" | "plus-eos" | "eos" => Ok(Condition::PlusEos),
            "-eos" | "minus-eos" | "noeos" | "no-eos" => Ok(Condition::MinusEos),
            "-eos+random-cutoff" | "-eos+randomcutoff" | "random-cutoff" | "-eos+rc" => {
                Ok(Condition::MinusEosRandomCutoff)
            }
            other => Err(Error::Config(format!("unknown condition {other:?}"))),
        }
    }
}
