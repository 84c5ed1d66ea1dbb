//! UTIL and VALUE propagation: what a single agent computes when its
//! messages have arrived. Scheduling and transport live in
//! [`crate::harness`]; [`solve`] ties the three phases together.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::harness::{self, RunReport, TreeSource};
use crate::model::{AgentId, Assignment, Dcop, Defect, ModelError, VarId};
use crate::pseudotree::{self, PseudoTree, Separator, TreeError};
use crate::tables::{self, TableError, UtilityTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("invalid problem: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<Defect>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("agent {0:?} found no row consistent with its parent's values")]
    NoFeasibleExtension(AgentId),
    #[error("agent {agent:?} built a table of {rows} rows, over the limit")]
    TableLimit { agent: AgentId, rows: usize },
}

/// Sparse table over the sender's separator, in separator order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtilMessage {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub separator: Separator,
    pub table: UtilityTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Binding {
    pub owner: AgentId,
    pub var: VarId,
    pub value: i64,
}

/// Optimal values of the receiver's separator variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValueMessage {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub bindings: Vec<Binding>,
}

/// Result of an agent's UTIL step.
#[derive(Debug, Clone)]
pub struct UtilStep {
    /// `None` at the root.
    pub message: Option<UtilMessage>,
    /// Joined children's tables and relevant constraints, kept for VALUE.
    pub joint: UtilityTable,
    pub separator: Separator,
    /// At the root: the global optimum, or `None` when nothing is feasible.
    pub optimum: Option<i64>,
    pub work: u64,
}

/// Joins the children's UTIL tables with the agent's relevant constraints,
/// then projects the agent's own variables away. `child_messages` must hold
/// exactly one message per child. Fails once the joined table exceeds
/// `max_rows`.
pub fn compute_util(
    agent: AgentId,
    tree: &PseudoTree,
    problem: &Dcop,
    child_messages: &[UtilMessage],
    max_rows: Option<usize>,
) -> Result<UtilStep, SolveError> {
    let expected: BTreeSet<AgentId> = tree.children(agent).iter().copied().collect();
    let got: BTreeSet<AgentId> = child_messages.iter().map(|m| m.sender).collect();
    if got != expected || child_messages.len() != expected.len() {
        return Err(SolveError::ProtocolViolation(format!(
            "agent {agent:?} expected UTIL from {expected:?}, got {got:?}"
        )));
    }
    if let Some(m) = child_messages.iter().find(|m| m.receiver != agent) {
        return Err(SolveError::ProtocolViolation(format!(
            "UTIL for {:?} delivered to {agent:?}",
            m.receiver
        )));
    }

    let check = |t: &UtilityTable| match max_rows {
        Some(limit) if t.len() > limit => Err(SolveError::TableLimit { agent, rows: t.len() }),
        _ => Ok(()),
    };
    let mut work = 0;
    let mut joint = UtilityTable::unit(problem.mode);
    for m in child_messages {
        joint = tables::join_counted(&joint, &m.table, &mut work)?;
        check(&joint)?;
    }
    for c in pseudotree::relevant_constraints(tree, problem, agent) {
        let table = tables::materialize(problem, c)?;
        check(&table)?;
        joint = tables::join_counted(&joint, &table, &mut work)?;
        check(&joint)?;
    }
    let own: Vec<VarId> = joint
        .scope_vars()
        .into_iter()
        .filter(|v| problem.var(*v).owner == agent)
        .collect();
    let projected = tables::project_counted(&joint, &own, &mut work)?;

    let child_seps: Vec<&Separator> = child_messages.iter().map(|m| &m.separator).collect();
    let separator = pseudotree::separator_of(tree, problem, agent, &child_seps);
    let order: Vec<VarId> = separator.iter().map(|e| e.var).collect();
    let table = projected.reordered(&order).map_err(|_| {
        SolveError::ProtocolViolation(format!("agent {agent:?}: projected scope differs from its separator"))
    })?;

    let Some(parent) = tree.parent(agent) else {
        return Ok(UtilStep {
            message: None,
            joint,
            separator,
            optimum: table.get(&[]),
            work,
        });
    };
    if !separator.is_empty() && !separator.iter().any(|e| e.owner == parent) {
        return Err(SolveError::ProtocolViolation(format!(
            "UTIL from {agent:?} carries no variable of its parent {parent:?}"
        )));
    }
    let message = UtilMessage {
        sender: agent,
        receiver: parent,
        separator: separator.clone(),
        table,
    };
    Ok(UtilStep {
        message: Some(message),
        joint,
        separator,
        optimum: None,
        work,
    })
}

/// Result of an agent's VALUE step.
#[derive(Debug, Clone)]
pub struct ValueStep {
    /// Values of every variable the agent owns.
    pub local: Assignment,
    pub messages: Vec<ValueMessage>,
    pub work: u64,
}

/// Picks the agent's best row given its ancestors' values and forwards the
/// relevant values to each child. `parent` is `None` at the root.
/// `child_separators` lists each child with the separator from its UTIL
/// message.
pub fn compute_value(
    agent: AgentId,
    problem: &Dcop,
    separator: &Separator,
    joint: &UtilityTable,
    parent: Option<&ValueMessage>,
    child_separators: &[(AgentId, &Separator)],
) -> Result<ValueStep, SolveError> {
    let mut context = Assignment::new();
    if let Some(msg) = parent {
        if msg.receiver != agent {
            return Err(SolveError::ProtocolViolation(format!(
                "VALUE for {:?} delivered to {agent:?}",
                msg.receiver
            )));
        }
        for b in &msg.bindings {
            context.insert(b.var, b.value);
        }
    }
    let sep_vars: BTreeSet<VarId> = separator.iter().map(|e| e.var).collect();
    let bound: BTreeSet<VarId> = context.iter().map(|(v, _)| v).collect();
    if sep_vars != bound {
        return Err(SolveError::ProtocolViolation(format!(
            "VALUE to {agent:?} binds {bound:?}, separator is {sep_vars:?}"
        )));
    }

    let mut work = 0;
    let fixed = context.restricted_to(&joint.scope_vars());
    let (chosen, _) = tables::argbest_counted(joint, &fixed, &mut work).map_err(|e| match e {
        TableError::NoFeasibleExtension => SolveError::NoFeasibleExtension(agent),
        other => other.into(),
    })?;
    let mut local = Assignment::new();
    for v in problem.owned_vars(agent) {
        // unconstrained variables default to their lower bound
        local.insert(v, chosen.get(v).unwrap_or(problem.var(v).domain.lb));
    }
    context.extend(&local);

    let messages = child_separators
        .iter()
        .map(|(child, sep)| {
            let bindings = sep
                .iter()
                .map(|e| {
                    let value = context.get(e.var).ok_or_else(|| {
                        SolveError::ProtocolViolation(format!("agent {agent:?} lacks a value for {:?}", e.var))
                    })?;
                    Ok(Binding {
                        owner: e.owner,
                        var: e.var,
                        value,
                    })
                })
                .collect::<Result<Vec<_>, SolveError>>()?;
            Ok(ValueMessage {
                sender: agent,
                receiver: *child,
                bindings,
            })
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    Ok(ValueStep { local, messages, work })
}

/// Where Phase 1 starts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RootChoice {
    /// Highest max-degree score, lowest id on ties.
    #[default]
    Auto,
    Agent(AgentId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineConfig {
    pub root: RootChoice,
    /// Largest table an agent may build; `None` is unbounded.
    pub max_table_rows: Option<usize>,
}

/// Runs all three phases on the simulated network.
pub fn solve(problem: &Dcop, config: &EngineConfig) -> Result<RunReport, SolveError> {
    let root = match config.root {
        RootChoice::Auto => None,
        RootChoice::Agent(a) => Some(a),
    };
    harness::run(problem, TreeSource::Build { root }, config.max_table_rows)
}
