//! DCOP-Text, the line-oriented problem format.
//!
//! ```text
//! # comment
//! mode max|min
//! agent <id>
//! var <id> <owner> <lb> <ub>
//! constraint <id> ext <var>...
//!   <v1> ... <vk> <utility|-inf|+inf>
//! constraint <id> expr <var>... : <expression>
//! ```
//!
//! Names may be used before they are declared. Extensional rows are the
//! indented lines following their header; unlisted tuples are infeasible.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::expr;
use crate::model::{
    AgentId, Constraint, ConstraintBody, Dcop, Domain, ExtensionalRows, Mode, Utility, VarId, Variable,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    /// 1-based, when the error points inside the line.
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "line {}, column {}: {}", self.line, c, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column: None,
        message: message.into(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn identifier(line: usize, s: &str) -> Result<String, ParseError> {
    if is_identifier(s) {
        Ok(s.to_string())
    } else {
        Err(err(line, format!("`{s}` is not a valid identifier")))
    }
}

fn integer(line: usize, s: &str) -> Result<i64, ParseError> {
    s.parse()
        .map_err(|_| err(line, format!("expected an integer, found `{s}`")))
}

fn utility(line: usize, s: &str) -> Result<Utility, ParseError> {
    match s {
        "-inf" => Ok(Utility::NegInf),
        "+inf" | "inf" => Ok(Utility::PosInf),
        _ => integer(line, s).map(Utility::Finite),
    }
}

enum PendingBody {
    Ext(Vec<(usize, Vec<i64>, Utility)>),
    Expr(expr::Expr),
}

struct PendingConstraint {
    line: usize,
    name: String,
    scope: Vec<String>,
    body: PendingBody,
}

pub fn parse(text: &str) -> Result<Dcop, ParseError> {
    let mut mode = None;
    let mut agents: Vec<String> = Vec::new();
    let mut vars: Vec<(usize, String, String, i64, i64)> = Vec::new();
    let mut constraints: Vec<PendingConstraint> = Vec::new();
    let mut ids: HashMap<(&str, String), usize> = HashMap::new();
    let mut in_ext = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indented = content.starts_with([' ', '\t']);
        let words: Vec<&str> = content.split_whitespace().collect();
        if indented {
            let Some(PendingConstraint {
                body: PendingBody::Ext(rows),
                scope,
                ..
            }) = constraints.last_mut().filter(|_| in_ext)
            else {
                return Err(err(line, "indented row outside an extensional constraint"));
            };
            if words.len() != scope.len() + 1 {
                return Err(err(
                    line,
                    format!("row has {} fields, expected {}", words.len(), scope.len() + 1),
                ));
            }
            let tuple = words[..scope.len()]
                .iter()
                .map(|w| integer(line, w))
                .collect::<Result<Vec<_>, _>>()?;
            let u = utility(line, words[scope.len()])?;
            if rows.iter().any(|(_, t, _)| *t == tuple) {
                return Err(err(line, format!("duplicate row {tuple:?}")));
            }
            rows.push((line, tuple, u));
            continue;
        }
        in_ext = false;
        let mut declare = |kind: &'static str, name: &str| -> Result<String, ParseError> {
            let name = identifier(line, name)?;
            if let Some(first) = ids.insert((kind, name.clone()), line) {
                return Err(err(
                    line,
                    format!("duplicate id `{name}` (first declared on line {first})"),
                ));
            }
            Ok(name)
        };
        match words[0] {
            "mode" => {
                let [_, m] = words[..] else {
                    return Err(err(line, "expected `mode max` or `mode min`"));
                };
                if mode.is_some() {
                    return Err(err(line, "mode declared twice"));
                }
                mode = Some(match m {
                    "max" => Mode::Maximize,
                    "min" => Mode::Minimize,
                    _ => return Err(err(line, format!("unknown mode `{m}`"))),
                });
            }
            "agent" => {
                let [_, a] = words[..] else {
                    return Err(err(line, "expected `agent <id>`"));
                };
                agents.push(declare("agent", a)?);
            }
            "var" => {
                let [_, v, owner, lb, ub] = words[..] else {
                    return Err(err(line, "expected `var <id> <owner> <lb> <ub>`"));
                };
                let v = declare("var", v)?;
                if expr::is_keyword(&v) {
                    return Err(err(line, format!("`{v}` is reserved in expressions")));
                }
                let (lb, ub) = (integer(line, lb)?, integer(line, ub)?);
                if lb > ub {
                    return Err(err(line, format!("empty domain [{lb}, {ub}]")));
                }
                vars.push((line, v, identifier(line, owner)?, lb, ub));
            }
            "constraint" => {
                let (head, expression) = match content.find(':') {
                    Some(i) => (&content[..i], Some(i + 1)),
                    None => (content, None),
                };
                let head: Vec<&str> = head.split_whitespace().collect();
                if head.len() < 4 {
                    return Err(err(line, "expected `constraint <id> ext|expr <var>...`"));
                }
                let name = declare("constraint", head[1])?;
                let scope = head[3..]
                    .iter()
                    .map(|v| identifier(line, v))
                    .collect::<Result<Vec<_>, _>>()?;
                let body = match (head[2], expression) {
                    ("ext", None) => {
                        in_ext = true;
                        PendingBody::Ext(Vec::new())
                    }
                    ("ext", Some(_)) => return Err(err(line, "extensional constraint cannot have an expression")),
                    ("expr", None) => return Err(err(line, "expected `: <expression>` after the scope")),
                    ("expr", Some(start)) => {
                        let e = expr::parse(&content[start..]).map_err(|e| ParseError {
                            line,
                            column: Some(content[..start].chars().count() + e.column),
                            message: e.message,
                        })?;
                        if let Some(free) = e.free_variables().into_iter().find(|v| !scope.contains(v)) {
                            return Err(err(
                                line,
                                format!("expression uses `{free}`, which is not in the scope"),
                            ));
                        }
                        PendingBody::Expr(e)
                    }
                    (kind, _) => return Err(err(line, format!("unknown constraint kind `{kind}`"))),
                };
                constraints.push(PendingConstraint {
                    line,
                    name,
                    scope,
                    body,
                });
            }
            other => return Err(err(line, format!("unknown directive `{other}`"))),
        }
    }

    let mode = mode.ok_or_else(|| err(text.lines().count().max(1), "missing `mode` line"))?;
    let agent_index: HashMap<&str, AgentId> = agents
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), AgentId(i)))
        .collect();
    let var_index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.1.as_str(), i)).collect();

    let mut variables = Vec::with_capacity(vars.len());
    for (line, name, owner, lb, ub) in &vars {
        let owner = *agent_index
            .get(owner.as_str())
            .ok_or_else(|| err(*line, format!("unknown agent `{owner}`")))?;
        variables.push(Variable {
            name: name.clone(),
            owner,
            domain: Domain::new(*lb, *ub),
        });
    }
    let mut out = Vec::with_capacity(constraints.len());
    for c in constraints {
        let scope = c
            .scope
            .iter()
            .map(|v| {
                var_index
                    .get(v.as_str())
                    .map(|&i| VarId(i))
                    .ok_or_else(|| err(c.line, format!("unknown variable `{v}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let body = match c.body {
            PendingBody::Expr(e) => ConstraintBody::Intensional(e),
            PendingBody::Ext(rows) => {
                let mut table = ExtensionalRows::new();
                for (line, tuple, u) in rows {
                    for (x, v) in tuple.iter().zip(&scope) {
                        if !variables[v.0].domain.contains(*x) {
                            return Err(err(
                                line,
                                format!("value {x} outside the domain of `{}`", variables[v.0].name),
                            ));
                        }
                    }
                    table.push(tuple, u);
                }
                ConstraintBody::Extensional(table)
            }
        };
        out.push(Constraint {
            name: c.name,
            scope,
            body,
        });
    }
    Ok(Dcop {
        mode,
        agents,
        variables,
        constraints: out,
    })
}

/// Renders `problem` in DCOP-Text, each `header` line as a leading comment.
pub fn print(problem: &Dcop, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(
        out,
        "mode {}",
        if problem.mode == Mode::Maximize { "max" } else { "min" }
    );
    for a in &problem.agents {
        let _ = writeln!(out, "agent {a}");
    }
    for v in &problem.variables {
        let _ = writeln!(
            out,
            "var {} {} {} {}",
            v.name,
            problem.agent_name(v.owner),
            v.domain.lb,
            v.domain.ub
        );
    }
    for c in &problem.constraints {
        let scope: Vec<&str> = c.scope.iter().map(|v| problem.var(*v).name.as_str()).collect();
        match &c.body {
            ConstraintBody::Extensional(rows) => {
                let _ = writeln!(out, "constraint {} ext {}", c.name, scope.join(" "));
                for (tuple, u) in rows.iter() {
                    let fields: Vec<String> = tuple.iter().map(|x| x.to_string()).collect();
                    let _ = writeln!(out, "  {} {u}", fields.join(" "));
                }
            }
            ConstraintBody::Intensional(e) => {
                let _ = writeln!(out, "constraint {} expr {} : {e}", c.name, scope.join(" "));
            }
        }
    }
    out
}
