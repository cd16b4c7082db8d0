//! SCAN: templated navigation commands and their action sequences.
//!
//! ```text
//! C -> S and S | S after S | S
//! S -> V twice | V thrice | V
//! V -> X opposite D | X around D | X D | U
//! X -> U | turn
//! U -> walk | look | run | jump
//! D -> left | right
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primitive output action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    TurnLeft,
    TurnRight,
    Walk,
    Run,
    Jump,
    Look,
}

/// How action tokens are spelled in files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionStyle {
    /// `TURN_LEFT`, `WALK`, ...
    #[default]
    Plain,
    /// `I_TURN_LEFT`, `I_WALK`, ... as in the published data files.
    Prefixed,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Walk,
        Action::Run,
        Action::Jump,
        Action::Look,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
            Action::Walk => "WALK",
            Action::Run => "RUN",
            Action::Jump => "JUMP",
            Action::Look => "LOOK",
        }
    }

    pub fn render(self, style: ActionStyle) -> String {
        match style {
            ActionStyle::Plain => self.name().to_string(),
            ActionStyle::Prefixed => format!("I_{}", self.name()),
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        let bare = s.strip_prefix("I_").unwrap_or(s);
        Action::ALL.into_iter().find(|a| a.name() == bare)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The 13 command words.
pub const COMMAND_WORDS: [&str; 13] = [
    "walk", "look", "run", "jump", "turn", "left", "right", "opposite", "around", "twice",
    "thrice", "and", "after",
];

const PRIMITIVES: [(&str, Action); 4] = [
    ("walk", Action::Walk),
    ("look", Action::Look),
    ("run", Action::Run),
    ("jump", Action::Jump),
];

fn primitive(word: &str) -> Option<Action> {
    PRIMITIVES.iter().find(|(w, _)| *w == word).map(|&(_, a)| a)
}

fn turn_for(word: &str) -> Option<Action> {
    match word {
        "left" => Some(Action::TurnLeft),
        "right" => Some(Action::TurnRight),
        _ => None,
    }
}

fn parse_err(tokens: &[&str], position: usize, reason: &str) -> Error {
    Error::Parse {
        token: tokens.get(position).map_or("<end>", |t| t).to_string(),
        position,
        reason: reason.to_string(),
    }
}

/// Interprets a `V` phrase occupying `tokens[start..end]`.
fn interpret_verb_phrase(
    tokens: &[&str],
    start: usize,
    end: usize,
    out: &mut Vec<Action>,
) -> Result<()> {
    let phrase = &tokens[start..end];
    let head = *phrase
        .first()
        .ok_or_else(|| parse_err(tokens, start, "expected an action"))?;
    let action = primitive(head);
    if action.is_none() && head != "turn" {
        return Err(parse_err(
            tokens,
            start,
            "expected walk, look, run, jump or turn",
        ));
    }
    match phrase.len() {
        1 => match action {
            Some(a) => out.push(a),
            None => return Err(parse_err(tokens, start + 1, "turn needs a direction")),
        },
        2 => {
            let turn = turn_for(phrase[1])
                .ok_or_else(|| parse_err(tokens, start + 1, "expected left or right"))?;
            out.push(turn);
            out.extend(action);
        }
        3 => {
            let turn = turn_for(phrase[2])
                .ok_or_else(|| parse_err(tokens, start + 2, "expected left or right"))?;
            match phrase[1] {
                "opposite" => {
                    out.push(turn);
                    out.push(turn);
                    out.extend(action);
                }
                "around" => {
                    for _ in 0..4 {
                        out.push(turn);
                        out.extend(action);
                    }
                }
                _ => return Err(parse_err(tokens, start + 1, "expected opposite or around")),
            }
        }
        _ => return Err(parse_err(tokens, start + 3, "unexpected token")),
    }
    Ok(())
}

/// Interprets an `S` phrase occupying `tokens[start..end]`.
fn interpret_sentence(tokens: &[&str], start: usize, end: usize) -> Result<Vec<Action>> {
    if start == end {
        return Err(parse_err(tokens, start, "empty phrase"));
    }
    let (repeat, body_end) = match tokens[end - 1] {
        "twice" => (2, end - 1),
        "thrice" => (3, end - 1),
        _ => (1, end),
    };
    let mut once = Vec::new();
    interpret_verb_phrase(tokens, start, body_end, &mut once)?;
    Ok(once.repeat(repeat))
}

/// Maps a command to its action sequence.
pub fn scan_interpret<S: AsRef<str>>(command: &[S]) -> Result<Vec<Action>> {
    let tokens: Vec<&str> = command.iter().map(AsRef::as_ref).collect();
    if let Some(pos) = tokens.iter().position(|t| !COMMAND_WORDS.contains(t)) {
        return Err(parse_err(&tokens, pos, "not a command word"));
    }
    let conj: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == "and" || **t == "after")
        .map(|(i, _)| i)
        .collect();
    match conj.as_slice() {
        [] => interpret_sentence(&tokens, 0, tokens.len()),
        [c] => {
            let left = interpret_sentence(&tokens, 0, *c)?;
            let right = interpret_sentence(&tokens, c + 1, tokens.len())?;
            Ok(if tokens[*c] == "and" {
                [left, right].concat()
            } else {
                [right, left].concat()
            })
        }
        [_, second, ..] => Err(parse_err(&tokens, *second, "at most one conjunction")),
    }
}

/// Parses a space-separated command line and interprets it.
pub fn scan_interpret_str(command: &str) -> Result<Vec<Action>> {
    let words: Vec<&str> = command.split_whitespace().collect();
    scan_interpret(&words)
}

/// One command with its action sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScanPair {
    pub command: Vec<String>,
    pub actions: Vec<Action>,
}

impl ScanPair {
    pub fn new(command: &str) -> Result<Self> {
        Ok(ScanPair {
            command: command.split_whitespace().map(str::to_string).collect(),
            actions: scan_interpret_str(command)?,
        })
    }

    pub fn command_text(&self) -> String {
        self.command.join(" ")
    }

    pub fn actions_text(&self, style: ActionStyle) -> String {
        self.actions
            .iter()
            .map(|a| a.render(style))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// `IN: <command> OUT: <actions>`.
    pub fn to_line(&self, style: ActionStyle) -> String {
        format!(
            "IN: {} OUT: {}",
            self.command_text(),
            self.actions_text(style)
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Validation(format!("{reason}: {line:?}"));
        let rest = line
            .trim()
            .strip_prefix("IN: ")
            .ok_or_else(|| bad("missing IN:"))?;
        let (cmd, acts) = rest
            .split_once(" OUT: ")
            .ok_or_else(|| bad("missing OUT:"))?;
        let actions = acts
            .split_whitespace()
            .enumerate()
            .map(|(position, a)| {
                Action::parse(a).ok_or_else(|| Error::Vocab {
                    token: a.to_string(),
                    position,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScanPair {
            command: cmd.split_whitespace().map(str::to_string).collect(),
            actions,
        })
    }
}

fn verb_phrases() -> Vec<String> {
    let mut v = Vec::new();
    for (u, _) in PRIMITIVES {
        v.push(u.to_string());
    }
    for x in ["walk", "look", "run", "jump", "turn"] {
        for d in ["left", "right"] {
            v.push(format!("{x} {d}"));
            v.push(format!("{x} opposite {d}"));
            v.push(format!("{x} around {d}"));
        }
    }
    v
}

/// Every grammatical command with its interpretation, sorted by command text.
pub fn scan_enumerate() -> Vec<ScanPair> {
    let mut sentences = Vec::new();
    for v in verb_phrases() {
        sentences.push(v.clone());
        sentences.push(format!("{v} twice"));
        sentences.push(format!("{v} thrice"));
    }
    let mut commands = sentences.clone();
    for a in &sentences {
        for b in &sentences {
            commands.push(format!("{a} and {b}"));
            commands.push(format!("{a} after {b}"));
        }
    }
    commands.sort();
    commands
        .iter()
        .map(|c| ScanPair::new(c).expect("enumerated commands are grammatical"))
        .collect()
}

/// Train/test partition by action length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSplit {
    pub cutoff: usize,
    pub train: Vec<ScanPair>,
    pub test: Vec<ScanPair>,
}

/// Pairs with at most `cutoff` actions train; longer ones test.
pub fn scan_length_split(pairs: &[ScanPair], cutoff: usize) -> Result<LengthSplit> {
    if cutoff < 1 {
        return Err(Error::Config("length cutoff must be at least 1".into()));
    }
    let (train, test) = pairs
        .iter()
        .cloned()
        .partition(|p| p.actions.len() <= cutoff);
    Ok(LengthSplit {
        cutoff,
        train,
        test,
    })
}

/// Cutoffs with published results.
pub const PUBLISHED_CUTOFFS: [usize; 11] = [22, 24, 25, 26, 27, 28, 30, 32, 33, 36, 40];

#[cfg(test)]
mod tests {
    use super::*;

    fn acts(s: &str) -> Vec<Action> {
        s.split_whitespace()
            .map(|a| Action::parse(a).unwrap())
            .collect()
    }

    #[test]
    fn published_examples() {
        assert_eq!(
            scan_interpret_str("walk left twice").unwrap(),
            acts("TURN_LEFT WALK TURN_LEFT WALK")
        );
        assert_eq!(
            scan_interpret_str("turn left thrice").unwrap(),
            acts("TURN_LEFT TURN_LEFT TURN_LEFT")
        );
        assert_eq!(
            scan_interpret_str("run around right twice").unwrap(),
            acts("TURN_RIGHT RUN").repeat(8)
        );
        assert_eq!(
            scan_interpret_str("run twice after jump right").unwrap(),
            acts("TURN_RIGHT JUMP RUN RUN")
        );
        assert_eq!(
            scan_interpret_str("turn around left").unwrap(),
            acts("TURN_LEFT TURN_LEFT TURN_LEFT TURN_LEFT")
        );
        assert_eq!(
            scan_interpret_str("turn opposite right").unwrap(),
            acts("TURN_RIGHT TURN_RIGHT")
        );
        assert_eq!(scan_interpret_str("jump").unwrap(), acts("JUMP"));
    }

    #[test]
    fn ungrammatical_commands_name_the_token() {
        let e = scan_interpret_str("walk left left").unwrap_err();
        assert!(matches!(e, Error::Parse { position: 1, .. }), "{e}");
        let e = scan_interpret_str("turn").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        let e = scan_interpret_str("walk and run and jump").unwrap_err();
        assert!(matches!(e, Error::Parse { position: 3, .. }), "{e}");
        let e = scan_interpret_str("fly left").unwrap_err();
        assert!(matches!(e, Error::Parse { position: 0, ref token, .. } if token == "fly"));
        assert!(scan_interpret_str("").is_err());
        assert!(scan_interpret_str("twice").is_err());
        assert!(scan_interpret_str("walk twice twice").is_err());
        assert!(scan_interpret_str("walk and").is_err());
    }

    #[test]
    fn enumeration_counts() {
        let all = scan_enumerate();
        assert_eq!(all.len(), 20910);
        assert_eq!(all.iter().map(|p| p.actions.len()).max(), Some(48));
        assert_eq!(all.iter().map(|p| p.actions.len()).min(), Some(1));
        assert!(all.iter().all(|p| (1..=9).contains(&p.command.len())));
        assert!(all
            .windows(2)
            .all(|w| w[0].command_text() < w[1].command_text()));
    }

    #[test]
    fn standard_split_sizes() {
        let all = scan_enumerate();
        let s = scan_length_split(&all, 22).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (16990, 3920));
        let s = scan_length_split(&all, 48).unwrap();
        assert!(s.test.is_empty());
        for cutoff in PUBLISHED_CUTOFFS {
            let s = scan_length_split(&all, cutoff).unwrap();
            assert!(!s.train.is_empty() && !s.test.is_empty(), "{cutoff}");
            assert_eq!(s.train.len() + s.test.len(), all.len());
        }
        assert!(scan_length_split(&all, 0).is_err());
    }

    #[test]
    fn line_format_round_trip() {
        let p = ScanPair::new("jump around left twice").unwrap();
        for style in [ActionStyle::Plain, ActionStyle::Prefixed] {
            let line = p.to_line(style);
            assert_eq!(ScanPair::from_line(&line).unwrap(), p);
        }
        assert_eq!(
            ScanPair::new("walk left")
                .unwrap()
                .to_line(ActionStyle::Prefixed),
            "IN: walk left OUT: I_TURN_LEFT I_WALK"
        );
        assert!(ScanPair::from_line("walk OUT: WALK").is_err());
    }
}
