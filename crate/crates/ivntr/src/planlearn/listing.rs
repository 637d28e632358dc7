//! Text format for lifted operators, written by the learner and read back
//! for comparisons and reports. One block per operator:
//!
//! ```text
//! MoveToGaze(?x0: robot, ?x1: target)
//!   :Pre  [HandEmpty(?x0)]
//!   :Eff+ [DockedT(?x1)]
//!   :Eff- []
//! ```
//!
//! Atoms may carry a prefix: `(not P(?x0))` or `(ForAll:?t P(?x0, ?t))`
//! with `?t` marking the quantified base slot.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Prefix;
use crate::planlearn::AbstractModel;

#[derive(Debug, Error)]
pub enum ListingError {
    #[error("listing parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Pool-independent atom: base predicate name, prefix, and the operator
/// variable index per free slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParsedAtom {
    pub name: String,
    pub prefix: Prefix,
    pub args: Vec<usize>,
}

/// Pool-independent operator, the unit of the text format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOperator {
    pub name: String,
    pub var_types: Vec<String>,
    pub pre: Vec<ParsedAtom>,
    pub eff_add: Vec<ParsedAtom>,
    pub eff_del: Vec<ParsedAtom>,
}

impl ParsedOperator {
    /// Sorted atom lists, so structurally equal operators compare equal.
    pub fn canonical(mut self) -> Self {
        self.pre.sort();
        self.eff_add.sort();
        self.eff_del.sort();
        self
    }
}

/// Detaches a model's operators from pool ids into name-based form, with
/// canonical atom order.
pub fn to_parsed(model: &AbstractModel) -> Vec<ParsedOperator> {
    let spec = &model.pool.spec;
    model
        .operators
        .iter()
        .map(|op| {
            let ctrl = &spec.controllers[op.controller];
            let convert = |atoms: &[crate::planlearn::LiftedAtom]| {
                atoms
                    .iter()
                    .map(|a| {
                        let pred = &model.pool.preds[a.pred];
                        ParsedAtom {
                            name: pred.sig.name.clone(),
                            prefix: pred.sig.prefix,
                            args: a.binding.clone(),
                        }
                    })
                    .collect()
            };
            ParsedOperator {
                name: ctrl.name.clone(),
                var_types: ctrl.var_types.clone(),
                pre: convert(&op.pre),
                eff_add: convert(&op.eff_add),
                eff_del: convert(&op.eff_del),
            }
            .canonical()
        })
        .collect()
}

fn print_atom(atom: &ParsedAtom) -> String {
    let plain = |args: &[String]| format!("{}({})", atom.name, args.join(", "));
    let vars: Vec<String> = atom.args.iter().map(|i| format!("?x{i}")).collect();
    match atom.prefix {
        Prefix::None => plain(&vars),
        Prefix::Negation => format!("(not {})", plain(&vars)),
        Prefix::Forall(slot) => {
            let mut full = vars;
            full.insert(slot.min(full.len()), "?t".to_string());
            format!("(ForAll:?t {})", plain(&full))
        }
    }
}

fn print_list(atoms: &[ParsedAtom]) -> String {
    let parts: Vec<String> = atoms.iter().map(print_atom).collect();
    format!("[{}]", parts.join(", "))
}

pub fn print_operator(op: &ParsedOperator) -> String {
    let params: Vec<String> = op
        .var_types
        .iter()
        .enumerate()
        .map(|(i, t)| format!("?x{i}: {t}"))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{}({})", op.name, params.join(", "));
    let _ = writeln!(out, "  :Pre  {}", print_list(&op.pre));
    let _ = writeln!(out, "  :Eff+ {}", print_list(&op.eff_add));
    let _ = writeln!(out, "  :Eff- {}", print_list(&op.eff_del));
    out
}

pub fn print_listing(ops: &[ParsedOperator]) -> String {
    ops.iter()
        .map(print_operator)
        .collect::<Vec<_>>()
        .join("\n")
}

/// The complete artifact for a learned model.
pub fn operator_listing(model: &AbstractModel) -> String {
    print_listing(&to_parsed(model))
}

/// Splits `a, b(c, d), e` on top-level commas only.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        parts.push(last);
    }
    parts.retain(|p| !p.is_empty());
    parts
}

/// Parses `Name(a, b, c)` into the name and raw argument strings.
fn parse_application(s: &str) -> Result<(String, Vec<&str>), String> {
    let open = s.find('(').ok_or("expected `(`")?;
    if !s.ends_with(')') {
        return Err("expected trailing `)`".into());
    }
    let name = s[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
        return Err(format!("bad name `{name}`"));
    }
    let inner = &s[open + 1..s.len() - 1];
    Ok((name.to_string(), split_top_level(inner)))
}

fn parse_var(s: &str) -> Result<usize, String> {
    s.strip_prefix("?x")
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| format!("expected `?xN`, got `{s}`"))
}

fn parse_atom(s: &str) -> Result<ParsedAtom, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("(not ") {
        let inner = rest.strip_suffix(')').ok_or("unterminated `(not ...)`")?;
        let atom = parse_atom(inner)?;
        if atom.prefix != Prefix::None {
            return Err("only one prefix per atom".into());
        }
        return Ok(ParsedAtom {
            prefix: Prefix::Negation,
            ..atom
        });
    }
    if let Some(rest) = s.strip_prefix("(ForAll:?t ") {
        let inner = rest.strip_suffix(')').ok_or("unterminated `(ForAll:?t ...)`")?;
        let (name, raw_args) = parse_application(inner)?;
        let slot = raw_args
            .iter()
            .position(|a| *a == "?t")
            .ok_or("quantified atom must mention `?t`")?;
        let args = raw_args
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != slot)
            .map(|(_, a)| parse_var(a))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(ParsedAtom {
            name,
            prefix: Prefix::Forall(slot),
            args,
        });
    }
    let (name, raw_args) = parse_application(s)?;
    let args = raw_args
        .iter()
        .map(|a| parse_var(a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedAtom {
        name,
        prefix: Prefix::None,
        args,
    })
}

fn parse_atom_list(s: &str, label: &str) -> Result<Vec<ParsedAtom>, String> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("{label}: expected `[...]`"))?;
    split_top_level(inner).into_iter().map(parse_atom).collect()
}

/// Parses a full listing back into operators. Inverse of
/// [`print_listing`] up to atom order.
pub fn parse_listing(text: &str) -> Result<Vec<ParsedOperator>, ListingError> {
    let mut ops = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    let fail = |line: usize, msg: String| ListingError::Parse { line: line + 1, msg };
    while let Some((lineno, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, raw_params) = parse_application(line.trim()).map_err(|m| fail(lineno, m))?;
        let mut var_types = Vec::new();
        for (i, p) in raw_params.iter().enumerate() {
            let (var, ty) = p
                .split_once(':')
                .ok_or_else(|| fail(lineno, format!("parameter `{p}` missing `: type`")))?;
            let idx = parse_var(var.trim()).map_err(|m| fail(lineno, m))?;
            if idx != i {
                return Err(fail(lineno, format!("parameter `{p}` out of order")));
            }
            var_types.push(ty.trim().to_string());
        }
        let mut section = |tag: &str| -> Result<Vec<ParsedAtom>, ListingError> {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| fail(lineno, format!("missing `{tag}` line")))?;
            let rest = line
                .trim_start()
                .strip_prefix(tag)
                .ok_or_else(|| fail(lineno, format!("expected `{tag}`, got `{}`", line.trim())))?;
            parse_atom_list(rest, tag).map_err(|m| fail(lineno, m))
        };
        let pre = section(":Pre")?;
        let eff_add = section(":Eff+")?;
        let eff_del = section(":Eff-")?;
        for atom in pre.iter().chain(&eff_add).chain(&eff_del) {
            if let Some(bad) = atom.args.iter().find(|a| **a >= var_types.len()) {
                return Err(fail(
                    lineno,
                    format!("atom {} uses unbound variable ?x{bad}", atom.name),
                ));
            }
        }
        ops.push(ParsedOperator {
            name,
            var_types,
            pre,
            eff_add,
            eff_del,
        });
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ops() -> Vec<ParsedOperator> {
        vec![
            ParsedOperator {
                name: "MoveToGaze".into(),
                var_types: vec!["robot".into(), "target".into()],
                pre: vec![
                    ParsedAtom {
                        name: "HandEmpty".into(),
                        prefix: Prefix::None,
                        args: vec![0],
                    },
                    ParsedAtom {
                        name: "P3_0".into(),
                        prefix: Prefix::Forall(1),
                        args: vec![0],
                    },
                ],
                eff_add: vec![ParsedAtom {
                    name: "DockedT".into(),
                    prefix: Prefix::None,
                    args: vec![1],
                }],
                eff_del: vec![ParsedAtom {
                    name: "P3_0".into(),
                    prefix: Prefix::Negation,
                    args: vec![0, 1],
                }],
            },
            ParsedOperator {
                name: "Drop".into(),
                var_types: vec!["robot".into(), "target".into(), "container".into()],
                pre: vec![],
                eff_add: vec![],
                eff_del: vec![],
            },
        ]
    }

    #[test]
    fn print_then_parse_is_identity() {
        let ops = sample_ops();
        let text = print_listing(&ops);
        let back = parse_listing(&text).unwrap();
        assert_eq!(back, ops);
        assert_eq!(print_listing(&back), text);
    }

    #[test]
    fn quantified_atom_round_trips_its_slot() {
        let atom = ParsedAtom {
            name: "Sees".into(),
            prefix: Prefix::Forall(0),
            args: vec![2],
        };
        let text = print_atom(&atom);
        assert_eq!(text, "(ForAll:?t Sees(?t, ?x2))");
        assert_eq!(parse_atom(&text).unwrap(), atom);
    }

    #[test]
    fn rejects_malformed_blocks() {
        assert!(parse_listing("Op(?x0: robot)\n  :Pre  [P(?x0]\n").is_err());
        assert!(parse_listing("Op(?x0: robot)\n  :Pre  [P(?x1)]\n  :Eff+ []\n  :Eff- []\n").is_err());
        assert!(parse_listing("Op(?x1: robot)\n  :Pre  []\n  :Eff+ []\n  :Eff- []\n").is_err());
        assert!(parse_listing("Op(?x0: robot)\n  :Pre  []\n").is_err());
    }

    #[test]
    fn negation_wraps_a_plain_atom_only() {
        assert!(parse_atom("(not (not P(?x0)))").is_err());
        let a = parse_atom("(not On(?x0, ?x1))").unwrap();
        assert_eq!(a.prefix, Prefix::Negation);
        assert_eq!(a.args, vec![0, 1]);
    }
}
