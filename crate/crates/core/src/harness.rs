//! Single-process message-passing simulator.
//!
//! Each agent is a state machine; the network delivers the pending message
//! with the smallest (phase, sender, sequence) key, so a run is a pure
//! function of the problem. Every message sent is logged.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::dpop::{self, SolveError, UtilMessage, UtilStep, ValueMessage};
use crate::model::{AgentId, Assignment, Dcop, Utility};
use crate::pseudotree::{self, DfsAgent, PseudoTree, Separator, TreeMessage};
use crate::wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Tree,
    Util,
    Value,
}

impl MessageKind {
    pub fn phase(self) -> u8 {
        match self {
            MessageKind::Tree => 1,
            MessageKind::Util => 2,
            MessageKind::Value => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Tree => "tree",
            MessageKind::Util => "util",
            MessageKind::Value => "value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Tree(TreeMessage),
    Util(UtilMessage),
    Value(ValueMessage),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub seq: u64,
    pub from: AgentId,
    pub to: AgentId,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self.payload {
            Payload::Tree(_) => MessageKind::Tree,
            Payload::Util(_) => MessageKind::Util,
            Payload::Value(_) => MessageKind::Value,
        }
    }

    /// Tree: visited-list length. Util: rows plus separator records.
    /// Value: number of bindings.
    pub fn size_units(&self) -> u64 {
        match &self.payload {
            Payload::Tree(t) => t.visited().len() as u64,
            Payload::Util(u) => (u.table.len() + u.separator.len()) as u64,
            Payload::Value(v) => v.bindings.len() as u64,
        }
    }
}

#[derive(Debug, Default)]
struct Network {
    pending: BTreeMap<(u8, AgentId, u64), Message>,
    log: Vec<Message>,
    next_seq: u64,
    delivered: u64,
}

impl Network {
    fn send(&mut self, from: AgentId, to: AgentId, payload: Payload) {
        let msg = Message {
            seq: self.next_seq,
            from,
            to,
            payload,
        };
        self.next_seq += 1;
        self.log.push(msg.clone());
        self.pending.insert((msg.kind().phase(), from, msg.seq), msg);
    }

    fn deliver(&mut self) -> Option<Message> {
        let (_, msg) = self.pending.pop_first()?;
        self.delivered += 1;
        Some(msg)
    }
}

/// Where the pseudo-tree comes from.
#[derive(Debug, Clone)]
pub enum TreeSource {
    /// Distributed DFS, from the given root or the best-scored agent.
    Build { root: Option<AgentId> },
    /// A precomputed tree; Phase 1 sends no messages.
    Injected(PseudoTree),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Optimal { utility: i64, assignment: Assignment },
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JointStats {
    pub rows: u64,
    pub dense_cells: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metrics {
    pub tree_messages: u64,
    pub util_messages: u64,
    pub value_messages: u64,
    pub total_util_size_units: u64,
    pub largest_util_size_units: u64,
    pub largest_util_rows: u64,
    /// Size units of the largest UTIL message had its table been dense.
    pub largest_dense_util_size_units: u64,
    pub total_dense_util_size_units: u64,
    pub phase2_units: Vec<u64>,
    pub phase3_units: Vec<u64>,
    /// Per agent: size of the table joined in Phase 2.
    pub joint: Vec<JointStats>,
    pub simulated_runtime: u64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: Status,
    pub tree: PseudoTree,
    pub metrics: Metrics,
    pub log: Vec<Message>,
}

impl RunReport {
    pub fn util_messages(&self) -> impl Iterator<Item = &UtilMessage> {
        self.log.iter().filter_map(|m| match &m.payload {
            Payload::Util(u) => Some(u),
            _ => None,
        })
    }

    /// Key/value text. `wall_time_us` is appended only when given, so that
    /// reports of identical runs are byte-identical by default.
    pub fn to_text(&self, problem: &Dcop, wall_time_us: Option<u128>) -> String {
        let m = &self.metrics;
        let mut out = String::new();
        match &self.status {
            Status::Optimal { utility, assignment } => {
                let _ = writeln!(out, "status optimal");
                let _ = writeln!(out, "utility {utility}");
                let pairs: Vec<String> = assignment
                    .iter()
                    .map(|(v, x)| format!("{}={x}", problem.var(v).name))
                    .collect();
                let _ = writeln!(out, "assignment {}", pairs.join(" "));
            }
            Status::Infeasible => {
                let _ = writeln!(out, "status infeasible");
            }
        }
        let _ = writeln!(out, "root {}", problem.agent_name(self.tree.root()));
        let _ = writeln!(out, "tree_messages {}", m.tree_messages);
        let _ = writeln!(out, "util_messages {}", m.util_messages);
        let _ = writeln!(out, "value_messages {}", m.value_messages);
        let _ = writeln!(out, "total_util_size_units {}", m.total_util_size_units);
        let _ = writeln!(out, "largest_util_size_units {}", m.largest_util_size_units);
        let _ = writeln!(out, "largest_util_rows {}", m.largest_util_rows);
        let _ = writeln!(out, "largest_dense_util_size_units {}", m.largest_dense_util_size_units);
        let _ = writeln!(out, "simulated_runtime {}", m.simulated_runtime);
        if let Some(us) = wall_time_us {
            let _ = writeln!(out, "wall_time_us {us}");
        }
        out
    }
}

/// One line per message: `kind from to sizeUnits digest`, where the digest
/// is the first 16 hex digits of the SHA-256 of the binary payload.
pub fn dump_log(problem: &Dcop, log: &[Message]) -> String {
    let mut out = String::new();
    for m in log {
        let digest = Sha256::digest(wire::encode(problem, m));
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            m.kind().name(),
            problem.agent_name(m.from),
            problem.agent_name(m.to),
            m.size_units(),
            &hex::encode(digest)[..16]
        );
    }
    out
}

/// Checks the ordering guarantees of a finished run's log: no agent sends
/// UTIL before its own tree messages, and no VALUE precedes the last UTIL.
pub fn check_phase_order(log: &[Message]) -> Result<(), String> {
    let mut last_tree: BTreeMap<AgentId, usize> = BTreeMap::new();
    let mut last_util = None;
    for (i, m) in log.iter().enumerate() {
        match m.kind() {
            MessageKind::Tree => {
                last_tree.insert(m.from, i);
            }
            MessageKind::Util => last_util = Some(i),
            MessageKind::Value => {}
        }
    }
    for (i, m) in log.iter().enumerate() {
        match m.kind() {
            MessageKind::Util if last_tree.get(&m.from).is_some_and(|&t| t > i) => {
                return Err(format!("UTIL #{} sent before its sender finished Phase 1", m.seq));
            }
            MessageKind::Value if last_util.is_some_and(|u| u > i) => {
                return Err(format!("VALUE #{} sent before Phase 2 ended", m.seq));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Runs all three phases. `max_rows` bounds every table an agent builds.
pub fn run(problem: &Dcop, source: TreeSource, max_rows: Option<usize>) -> Result<RunReport, SolveError> {
    let defects = problem.validate();
    if !defects.is_empty() {
        return Err(SolveError::InvalidProblem(defects));
    }
    let n = problem.agents.len();
    let mut net = Network::default();

    let tree = match source {
        TreeSource::Injected(tree) => {
            if tree.len() != n {
                return Err(SolveError::ProtocolViolation(format!(
                    "injected tree has {} agents, problem has {n}",
                    tree.len()
                )));
            }
            tree
        }
        TreeSource::Build { root } => build_tree(problem, root, &mut net)?,
    };
    let tree_messages = net.log.len() as u64;

    // Phase 2
    let mut inbox: Vec<Vec<UtilMessage>> = vec![Vec::new(); n];
    let mut steps: Vec<Option<UtilStep>> = vec![None; n];
    let mut phase2_units = vec![0u64; n];
    let mut optimum = None;
    let mut ready: Vec<AgentId> = problem.agent_ids().filter(|a| tree.children(*a).is_empty()).collect();
    loop {
        for a in ready.drain(..) {
            let step = dpop::compute_util(a, &tree, problem, &inbox[a.0], max_rows)?;
            phase2_units[a.0] = step.work;
            match &step.message {
                Some(msg) => net.send(a, msg.receiver, Payload::Util(msg.clone())),
                None => optimum = Some(step.optimum),
            }
            steps[a.0] = Some(step);
        }
        let Some(msg) = net.deliver() else { break };
        let Payload::Util(util) = msg.payload else {
            return Err(SolveError::ProtocolViolation(format!(
                "unexpected {} message in Phase 2",
                msg.kind().name()
            )));
        };
        let to = msg.to;
        inbox[to.0].push(util);
        if inbox[to.0].len() == tree.children(to).len() {
            inbox[to.0].sort_by_key(|m| tree.children(to).iter().position(|c| *c == m.sender));
            ready.push(to);
        }
    }
    let Some(optimum) = optimum else {
        return Err(SolveError::ProtocolViolation("root never completed Phase 2".into()));
    };
    let steps: Vec<UtilStep> = steps
        .into_iter()
        .enumerate()
        .map(|(a, s)| s.ok_or_else(|| SolveError::ProtocolViolation(format!("agent {a} never sent UTIL"))))
        .collect::<Result<_, _>>()?;

    // Phase 3
    let mut phase3_units = vec![0u64; n];
    let status = match optimum {
        None => Status::Infeasible,
        Some(utility) => {
            let mut assignment = Assignment::new();
            let mut pending: Vec<(AgentId, Option<ValueMessage>)> = vec![(tree.root(), None)];
            loop {
                for (a, parent_msg) in pending.drain(..) {
                    let kids: Vec<(AgentId, &Separator)> =
                        tree.children(a).iter().map(|c| (*c, &steps[c.0].separator)).collect();
                    let step = &steps[a.0];
                    let v = dpop::compute_value(a, problem, &step.separator, &step.joint, parent_msg.as_ref(), &kids)?;
                    phase3_units[a.0] = v.work;
                    assignment.extend(&v.local);
                    for m in v.messages {
                        net.send(a, m.receiver, Payload::Value(m));
                    }
                }
                let Some(msg) = net.deliver() else { break };
                let Payload::Value(value) = msg.payload else {
                    return Err(SolveError::ProtocolViolation(format!(
                        "unexpected {} message in Phase 3",
                        msg.kind().name()
                    )));
                };
                pending.push((msg.to, Some(value)));
            }
            if problem.total_utility(&assignment)? != Utility::Finite(utility) {
                return Err(SolveError::ProtocolViolation(
                    "assembled assignment does not achieve the root's optimum".into(),
                ));
            }
            Status::Optimal { utility, assignment }
        }
    };

    if net.delivered != net.log.len() as u64 {
        return Err(SolveError::ProtocolViolation("messages left undelivered".into()));
    }

    let mut metrics = Metrics {
        tree_messages,
        phase2_units,
        phase3_units,
        joint: steps
            .iter()
            .map(|s| JointStats {
                rows: s.joint.len() as u64,
                dense_cells: s.joint.dense_cells(),
            })
            .collect(),
        ..Metrics::default()
    };
    for m in &net.log[tree_messages as usize..] {
        match &m.payload {
            Payload::Util(u) => {
                metrics.util_messages += 1;
                metrics.total_util_size_units += m.size_units();
                metrics.largest_util_size_units = metrics.largest_util_size_units.max(m.size_units());
                metrics.largest_util_rows = metrics.largest_util_rows.max(u.table.len() as u64);
                let dense = u.separator.iter().map(|e| e.domain.size()).product::<u64>() + u.separator.len() as u64;
                metrics.largest_dense_util_size_units = metrics.largest_dense_util_size_units.max(dense);
                metrics.total_dense_util_size_units += dense;
            }
            Payload::Value(_) => metrics.value_messages += 1,
            Payload::Tree(_) => return Err(SolveError::ProtocolViolation("tree message after Phase 1".into())),
        }
    }
    metrics.simulated_runtime = simulated_runtime(&tree, &metrics.phase2_units, &metrics.phase3_units);

    Ok(RunReport {
        status,
        tree,
        metrics,
        log: net.log,
    })
}

fn build_tree(problem: &Dcop, root: Option<AgentId>, net: &mut Network) -> Result<PseudoTree, SolveError> {
    let scores = problem
        .agent_ids()
        .map(|a| pseudotree::score(problem, a))
        .collect::<Result<Vec<_>, _>>()?;
    let mut agents = Vec::with_capacity(problem.agents.len());
    for a in problem.agent_ids() {
        let ns: Vec<_> = problem.neighbors(a)?.into_iter().map(|b| scores[b.0]).collect();
        agents.push(DfsAgent::new(a, &ns));
    }
    let root = root.unwrap_or_else(|| pseudotree::select_root(problem));
    if root.0 >= agents.len() {
        return Err(SolveError::ProtocolViolation(format!("root {root:?} is not an agent")));
    }
    if let Some((to, m)) = agents[root.0].start_as_root() {
        net.send(root, to, Payload::Tree(m));
    }
    while let Some(msg) = net.deliver() {
        let Payload::Tree(t) = msg.payload else {
            return Err(SolveError::ProtocolViolation("non-tree message in Phase 1".into()));
        };
        if let Some((to, m)) = agents[msg.to.0].on_message(msg.from, t)? {
            net.send(msg.to, to, Payload::Tree(m));
        }
    }
    if let Some(a) = agents.iter().find(|a| !a.is_done()) {
        return Err(SolveError::ProtocolViolation(format!(
            "agent {:?} was never reached",
            a.id()
        )));
    }
    Ok(PseudoTree::from_records(
        problem,
        root,
        agents.iter().map(|a| a.record()).collect(),
    )?)
}

/// Critical path: an agent's UTIL finishes after its slowest child plus its
/// own Phase-2 work; the VALUE wave then adds the longest downward chain.
pub fn simulated_runtime(tree: &PseudoTree, phase2: &[u64], phase3: &[u64]) -> u64 {
    let order = tree.post_order();
    let mut finish = vec![0u64; phase2.len()];
    let mut down = vec![0u64; phase3.len()];
    for &a in &order {
        let kids = tree.children(a);
        finish[a.0] = kids.iter().map(|c| finish[c.0]).max().unwrap_or(0) + phase2[a.0];
        down[a.0] = kids.iter().map(|c| down[c.0]).max().unwrap_or(0) + phase3[a.0];
    }
    let r = tree.root().0;
    finish[r] + down[r]
}

/// Fact-syntax rendering of a payload, as exchanged between agents.
pub fn render_facts(problem: &Dcop, m: &Message) -> String {
    let agent = |a: AgentId| problem.agent_name(a).to_string();
    let mut out = String::new();
    match &m.payload {
        Payload::Tree(t) => {
            let (kind, list) = match t {
                TreeMessage::Visit(v) => ("visit", v),
                TreeMessage::Return(v) => ("return", v),
            };
            let names: Vec<String> = list.iter().map(|a| agent(*a)).collect();
            let _ = writeln!(out, "tree_{kind}({})", names.join(","));
        }
        Payload::Util(u) => out.push_str(&util_facts(problem, u)),
        Payload::Value(v) => {
            for b in &v.bindings {
                let _ = writeln!(
                    out,
                    "solution({},{},{})",
                    agent(b.owner),
                    problem.var(b.var).name,
                    b.value
                );
            }
        }
    }
    out
}

fn util_facts(problem: &Dcop, u: &UtilMessage) -> String {
    let mut out = String::new();
    let pred = format!(
        "table_{}_{}",
        if u.table.mode() == crate::model::Mode::Maximize {
            "max"
        } else {
            "min"
        },
        problem.agent_name(u.sender)
    );
    for (tuple, util) in u.table.rows() {
        let mut fields = vec![util.to_string()];
        fields.extend(tuple.iter().map(|x| x.to_string()));
        let _ = writeln!(out, "{pred}({})", fields.join(","));
    }
    for e in &u.separator {
        let _ = writeln!(
            out,
            "table_info({},{},{},{},{})",
            problem.agent_name(u.sender),
            problem.agent_name(e.owner),
            problem.var(e.var).name,
            e.domain.lb,
            e.domain.ub
        );
    }
    out
}
