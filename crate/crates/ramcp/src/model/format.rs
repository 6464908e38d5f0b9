//! Line-oriented text format for POMDP models.
//!
//! ```text
//! # comment
//! discount: 0.95
//! states: tiger-left tiger-right
//! actions: listen open-left open-right
//! observations: hear-left hear-right
//! start: 0.5 0.5
//! T: listen : tiger-left : tiger-left 1.0
//! O: tiger-left : hear-left 0.85
//! R: tiger-left : listen -1
//! ```
//!
//! `T: action : s : s' p` sets a transition probability, `O: s : o p` an
//! observation probability (for the successor state `s`), `R: s : action r` a
//! reward. A `*` in an action or state position applies the line to every
//! element of that set. Entries never mentioned stay zero; later lines
//! overwrite earlier ones, so wildcard defaults can be refined by specific
//! lines. Name sections must appear before the table lines that use them.
//! Parsing does not validate stochasticity; call [`Pomdp::validate`] after.

use super::{Pomdp, PomdpParts};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown {kind} name '{name}'")]
    UnknownName {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: '{token}' is not a number")]
    Number { line: usize, token: String },
    #[error("missing required section '{section}:'")]
    MissingSection { section: &'static str },
    #[error("line {line}: section '{section}:' given twice")]
    DuplicateSection { line: usize, section: &'static str },
    #[error("{0}")]
    Shape(#[from] super::ModelError),
}

struct Names(Vec<String>);

impl Names {
    fn lookup(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    /// Resolves a name or the `*` wildcard to the matching index range.
    fn resolve(
        &self,
        name: &str,
        kind: &'static str,
        line: usize,
    ) -> Result<Vec<usize>, ParseError> {
        if name == "*" {
            Ok((0..self.0.len()).collect())
        } else {
            self.lookup(name)
                .map(|i| vec![i])
                .ok_or_else(|| ParseError::UnknownName {
                    line,
                    kind,
                    name: name.to_string(),
                })
        }
    }
}

pub fn parse_model(text: &str) -> Result<Pomdp, ParseError> {
    let mut discount: Option<f64> = None;
    let mut states: Option<Names> = None;
    let mut actions: Option<Names> = None;
    let mut observations: Option<Names> = None;
    let mut start: Option<Vec<f64>> = None;
    let mut transition: Vec<f64> = Vec::new();
    let mut observation: Vec<f64> = Vec::new();
    let mut reward: Vec<f64> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (head, rest) = content.split_once(':').ok_or_else(|| ParseError::Syntax {
            line,
            msg: format!("expected '<keyword>: ...', got '{content}'"),
        })?;
        let rest = rest.trim();
        match head.trim() {
            "discount" => {
                if discount.is_some() {
                    return Err(ParseError::DuplicateSection {
                        line,
                        section: "discount",
                    });
                }
                discount = Some(parse_number(rest, line)?);
            }
            "states" => {
                set_names(&mut states, rest, "states", line)?;
            }
            "actions" => {
                set_names(&mut actions, rest, "actions", line)?;
            }
            "observations" => {
                set_names(&mut observations, rest, "observations", line)?;
            }
            "start" => {
                if start.is_some() {
                    return Err(ParseError::DuplicateSection {
                        line,
                        section: "start",
                    });
                }
                let s = require(&states, "states", line)?;
                let probs: Vec<f64> = rest
                    .split_whitespace()
                    .map(|t| parse_number(t, line))
                    .collect::<Result<_, _>>()?;
                if probs.len() != s.0.len() {
                    return Err(ParseError::Syntax {
                        line,
                        msg: format!(
                            "start needs {} probabilities, got {}",
                            s.0.len(),
                            probs.len()
                        ),
                    });
                }
                start = Some(probs);
            }
            "T" => {
                let s = require(&states, "states", line)?;
                let a = require(&actions, "actions", line)?;
                if transition.is_empty() {
                    transition = vec![0.0; s.0.len() * a.0.len() * s.0.len()];
                }
                let (parts, value) = split_table_line(rest, 3, line)?;
                let acts = a.resolve(parts[0], "action", line)?;
                let froms = s.resolve(parts[1], "state", line)?;
                let tos = s.resolve(parts[2], "state", line)?;
                let n = s.0.len();
                for &ai in &acts {
                    for &si in &froms {
                        for &sj in &tos {
                            transition[(si * a.0.len() + ai) * n + sj] = value;
                        }
                    }
                }
            }
            "O" => {
                let s = require(&states, "states", line)?;
                let z = require(&observations, "observations", line)?;
                if observation.is_empty() {
                    observation = vec![0.0; s.0.len() * z.0.len()];
                }
                let (parts, value) = split_table_line(rest, 2, line)?;
                let froms = s.resolve(parts[0], "state", line)?;
                let oi = z.lookup(parts[1]).ok_or_else(|| ParseError::UnknownName {
                    line,
                    kind: "observation",
                    name: parts[1].to_string(),
                })?;
                for &si in &froms {
                    observation[si * z.0.len() + oi] = value;
                }
            }
            "R" => {
                let s = require(&states, "states", line)?;
                let a = require(&actions, "actions", line)?;
                if reward.is_empty() {
                    reward = vec![0.0; s.0.len() * a.0.len()];
                }
                let (parts, value) = split_table_line(rest, 2, line)?;
                let froms = s.resolve(parts[0], "state", line)?;
                let acts = a.resolve(parts[1], "action", line)?;
                for &si in &froms {
                    for &ai in &acts {
                        reward[si * a.0.len() + ai] = value;
                    }
                }
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    msg: format!("unknown keyword '{other}'"),
                });
            }
        }
    }

    let states = states.ok_or(ParseError::MissingSection { section: "states" })?;
    let actions = actions.ok_or(ParseError::MissingSection { section: "actions" })?;
    let observations = observations.ok_or(ParseError::MissingSection {
        section: "observations",
    })?;
    let discount = discount.ok_or(ParseError::MissingSection {
        section: "discount",
    })?;
    let start = start.ok_or(ParseError::MissingSection { section: "start" })?;
    let (ns, na, nz) = (states.0.len(), actions.0.len(), observations.0.len());
    if transition.is_empty() {
        transition = vec![0.0; ns * na * ns];
    }
    if observation.is_empty() {
        observation = vec![0.0; ns * nz];
    }
    if reward.is_empty() {
        reward = vec![0.0; ns * na];
    }
    Ok(Pomdp::from_parts(PomdpParts {
        discount,
        state_names: states.0,
        action_names: actions.0,
        obs_names: observations.0,
        transition,
        observation,
        reward,
        initial_belief: start,
    })?)
}

/// Serializes a model in the format accepted by [`parse_model`].
///
/// Zero probabilities and rewards are omitted; numbers are written with
/// round-trip precision so `parse_model(write_model(m)) == m`.
pub fn write_model(model: &Pomdp) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "discount: {}", model.discount()).unwrap();
    writeln!(
        out,
        "states: {}",
        model
            .states()
            .map(|s| model.state_name(s))
            .collect::<Vec<_>>()
            .join(" ")
    )
    .unwrap();
    writeln!(
        out,
        "actions: {}",
        model
            .actions()
            .map(|a| model.action_name(a))
            .collect::<Vec<_>>()
            .join(" ")
    )
    .unwrap();
    writeln!(
        out,
        "observations: {}",
        model
            .observations()
            .map(|o| model.obs_name(o))
            .collect::<Vec<_>>()
            .join(" ")
    )
    .unwrap();
    let start: Vec<String> = model
        .initial_belief()
        .as_slice()
        .iter()
        .map(|p| p.to_string())
        .collect();
    writeln!(out, "start: {}", start.join(" ")).unwrap();
    for a in model.actions() {
        for s in model.states() {
            for (sj, &p) in model.transition_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    writeln!(
                        out,
                        "T: {} : {} : {} {}",
                        model.action_name(a),
                        model.state_name(s),
                        model.state_name(super::StateId(sj as u16)),
                        p
                    )
                    .unwrap();
                }
            }
        }
    }
    for s in model.states() {
        for (oi, &p) in model.observation_row(s).iter().enumerate() {
            if p != 0.0 {
                writeln!(
                    out,
                    "O: {} : {} {}",
                    model.state_name(s),
                    model.obs_name(super::ObsId(oi as u16)),
                    p
                )
                .unwrap();
            }
        }
    }
    for s in model.states() {
        for a in model.actions() {
            let r = model.reward(s, a);
            if r != 0.0 {
                writeln!(
                    out,
                    "R: {} : {} {}",
                    model.state_name(s),
                    model.action_name(a),
                    r
                )
                .unwrap();
            }
        }
    }
    out
}

fn set_names(
    slot: &mut Option<Names>,
    rest: &str,
    section: &'static str,
    line: usize,
) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(ParseError::DuplicateSection { line, section });
    }
    let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
    if names.is_empty() {
        return Err(ParseError::Syntax {
            line,
            msg: format!("'{section}:' needs at least one name"),
        });
    }
    for (i, n) in names.iter().enumerate() {
        if n == "*" || names[..i].contains(n) {
            return Err(ParseError::Syntax {
                line,
                msg: format!("bad or duplicate name '{n}' in '{section}:'"),
            });
        }
    }
    *slot = Some(Names(names));
    Ok(())
}

fn require<'a>(
    slot: &'a Option<Names>,
    section: &'static str,
    line: usize,
) -> Result<&'a Names, ParseError> {
    slot.as_ref().ok_or(ParseError::Syntax {
        line,
        msg: format!("'{section}:' must appear before this line"),
    })
}

fn parse_number(token: &str, line: usize) -> Result<f64, ParseError> {
    token.trim().parse().map_err(|_| ParseError::Number {
        line,
        token: token.trim().to_string(),
    })
}

/// Splits `"x : y : z value"` into the `n` colon-separated fields and the
/// trailing number attached to the last field.
fn split_table_line(rest: &str, n: usize, line: usize) -> Result<(Vec<&str>, f64), ParseError> {
    let mut parts: Vec<&str> = rest.splitn(n, ':').map(str::trim).collect();
    if parts.len() != n {
        return Err(ParseError::Syntax {
            line,
            msg: format!("expected {n} ':'-separated fields"),
        });
    }
    let last = parts.pop().unwrap();
    let mut tail = last.split_whitespace();
    let name = tail.next().ok_or_else(|| ParseError::Syntax {
        line,
        msg: "missing name before the value".to_string(),
    })?;
    let value_tok = tail.next().ok_or_else(|| ParseError::Syntax {
        line,
        msg: "missing value".to_string(),
    })?;
    if tail.next().is_some() {
        return Err(ParseError::Syntax {
            line,
            msg: "unexpected trailing tokens".to_string(),
        });
    }
    parts.push(name);
    Ok((parts, parse_number(value_tok, line)?))
}
