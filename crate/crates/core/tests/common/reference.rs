//! A second SCAN interpreter and enumerator, written directly from the
//! grammar with plain strings.

const PRIMITIVES: [&str; 4] = ["walk", "look", "run", "jump"];
const DIRECTIONS: [&str; 2] = ["left", "right"];

fn turn(dir: &str) -> String {
    format!("TURN_{}", dir.to_uppercase())
}

/// `V` phrases: a primitive or `turn`, optionally with a direction.
fn phrase(words: &[&str]) -> Option<Vec<String>> {
    let (verb, rest) = words.split_first()?;
    let act = match *verb {
        "turn" => None,
        v if PRIMITIVES.contains(&v) => Some(v.to_uppercase()),
        _ => return None,
    };
    let body = |prefix: Vec<String>| {
        let mut v = prefix;
        v.extend(act.clone());
        v
    };
    match rest {
        [] => act.clone().map(|a| vec![a]),
        [d] if DIRECTIONS.contains(d) => Some(body(vec![turn(d)])),
        ["opposite", d] if DIRECTIONS.contains(d) => Some(body(vec![turn(d), turn(d)])),
        ["around", d] if DIRECTIONS.contains(d) => {
            Some((0..4).flat_map(|_| body(vec![turn(d)])).collect())
        }
        _ => None,
    }
}

fn clause(words: &[&str]) -> Option<Vec<String>> {
    match words.split_last()? {
        (&"twice", head) => phrase(head).map(|v| [v.clone(), v].concat()),
        (&"thrice", head) => phrase(head).map(|v| [v.clone(), v.clone(), v].concat()),
        _ => phrase(words),
    }
}

pub fn interpret(command: &str) -> Option<Vec<String>> {
    let words: Vec<&str> = command.split_whitespace().collect();
    if let Some(i) = words.iter().position(|w| *w == "and" || *w == "after") {
        let (a, b) = (clause(&words[..i])?, clause(&words[i + 1..])?);
        return Some(if words[i] == "and" {
            [a, b].concat()
        } else {
            [b, a].concat()
        });
    }
    clause(&words)
}

/// Every grammatical command, sorted.
pub fn enumerate() -> Vec<String> {
    let mut phrases = Vec::new();
    for v in PRIMITIVES.iter().chain(&["turn"]) {
        if *v != "turn" {
            phrases.push(v.to_string());
        }
        for d in DIRECTIONS {
            phrases.push(format!("{v} {d}"));
            phrases.push(format!("{v} opposite {d}"));
            phrases.push(format!("{v} around {d}"));
        }
    }
    let mut clauses = phrases.clone();
    for p in &phrases {
        clauses.push(format!("{p} twice"));
        clauses.push(format!("{p} thrice"));
    }
    let mut all = clauses.clone();
    for a in &clauses {
        for b in &clauses {
            all.push(format!("{a} and {b}"));
            all.push(format!("{a} after {b}"));
        }
    }
    all.sort();
    all
}
