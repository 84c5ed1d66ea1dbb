//! Pseudo-tree construction by distributed DFS, separators and relevant
//! constraint sets.
//!
//! The DFS itself runs as message exchange over the harness: [`DfsAgent`] is
//! the per-agent state machine and only ever reacts to tree messages. The
//! assembled [`PseudoTree`] is then shared read-only by the later phases.

use std::cmp::Reverse;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{AgentId, ConstraintId, Dcop, Domain, ModelError, VarId};

/// Max-degree score; ties are broken toward the lower agent id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    pub degree: usize,
    pub agent: AgentId,
}

impl Score {
    /// Larger key wins.
    pub fn key(&self) -> (usize, Reverse<AgentId>) {
        (self.degree, Reverse(self.agent))
    }
}

pub fn score(problem: &Dcop, a: AgentId) -> Result<Score, ModelError> {
    Ok(Score {
        degree: problem.neighbors(a)?.len(),
        agent: a,
    })
}

/// Root rule: highest score over all agents.
pub fn select_root(problem: &Dcop) -> AgentId {
    let graph = problem.constraint_graph();
    problem
        .agent_ids()
        .max_by_key(|a| {
            Score {
                degree: graph.neighbors(*a).len(),
                agent: *a,
            }
            .key()
        })
        .expect("problem has agents")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("constraint graph is disconnected")]
    DisconnectedGraph,
    #[error("agents {0:?} and {1:?} share a constraint but lie on different branches")]
    BranchViolation(AgentId, AgentId),
    #[error("tree message from {from:?} to {to:?} was not expected")]
    UnexpectedMessage { from: AgentId, to: AgentId },
    #[error("malformed tree: {0}")]
    Malformed(String),
}

/// Phase-1 payload: the ordered list of agents visited so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TreeMessage {
    /// Parent to child: "you are visited, continue the DFS from here".
    Visit(Vec<AgentId>),
    /// Child to parent: "my subtree is done".
    Return(Vec<AgentId>),
}

impl TreeMessage {
    pub fn visited(&self) -> &[AgentId] {
        match self {
            TreeMessage::Visit(v) | TreeMessage::Return(v) => v,
        }
    }
}

/// One agent's view of the DFS.
#[derive(Debug, Clone)]
pub struct DfsAgent {
    id: AgentId,
    /// Neighbors, best score first.
    ranked_neighbors: Vec<AgentId>,
    parent: Option<AgentId>,
    pseudo_parents: BTreeSet<AgentId>,
    children: Vec<AgentId>,
    visited: Vec<AgentId>,
    awaiting: Option<AgentId>,
    started: bool,
    done: bool,
}

impl DfsAgent {
    /// `neighbor_scores` are the scores of the agent's neighbors.
    pub fn new(id: AgentId, neighbor_scores: &[Score]) -> Self {
        let mut ranked: Vec<Score> = neighbor_scores.to_vec();
        ranked.sort_by_key(|s| Reverse(s.key()));
        DfsAgent {
            id,
            ranked_neighbors: ranked.into_iter().map(|s| s.agent).collect(),
            parent: None,
            pseudo_parents: BTreeSet::new(),
            children: Vec::new(),
            visited: Vec::new(),
            awaiting: None,
            started: false,
            done: false,
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Kicks off the traversal at the root.
    pub fn start_as_root(&mut self) -> Option<(AgentId, TreeMessage)> {
        self.started = true;
        self.visited = vec![self.id];
        self.advance()
    }

    pub fn on_message(&mut self, from: AgentId, msg: TreeMessage) -> Result<Option<(AgentId, TreeMessage)>, TreeError> {
        let unexpected = TreeError::UnexpectedMessage { from, to: self.id };
        match msg {
            TreeMessage::Visit(mut visited) => {
                if self.started || !self.ranked_neighbors.contains(&from) {
                    return Err(unexpected);
                }
                self.started = true;
                self.parent = Some(from);
                self.pseudo_parents = self
                    .ranked_neighbors
                    .iter()
                    .filter(|n| **n != from && visited.contains(n))
                    .copied()
                    .collect();
                visited.push(self.id);
                self.visited = visited;
            }
            TreeMessage::Return(visited) => {
                if self.awaiting != Some(from) {
                    return Err(unexpected);
                }
                self.awaiting = None;
                self.visited = visited;
            }
        }
        Ok(self.advance())
    }

    fn advance(&mut self) -> Option<(AgentId, TreeMessage)> {
        let next = self
            .ranked_neighbors
            .iter()
            .find(|n| !self.visited.contains(n))
            .copied();
        match next {
            Some(child) => {
                self.children.push(child);
                self.awaiting = Some(child);
                Some((child, TreeMessage::Visit(self.visited.clone())))
            }
            None => {
                self.done = true;
                self.parent.map(|p| (p, TreeMessage::Return(self.visited.clone())))
            }
        }
    }

    pub fn record(&self) -> NodeRecord {
        NodeRecord {
            parent: self.parent,
            pseudo_parents: self.pseudo_parents.clone(),
            children: self.children.clone(),
        }
    }
}

/// What a single agent learned in Phase 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeRecord {
    pub parent: Option<AgentId>,
    pub pseudo_parents: BTreeSet<AgentId>,
    pub children: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub parent: Option<AgentId>,
    pub pseudo_parents: BTreeSet<AgentId>,
    pub children: Vec<AgentId>,
    pub pseudo_children: BTreeSet<AgentId>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoTree {
    root: AgentId,
    nodes: Vec<TreeNode>,
}

impl PseudoTree {
    /// Assembles per-agent records; pseudo-children are installed as the
    /// mirror of every pseudo-parent link.
    pub fn from_records(problem: &Dcop, root: AgentId, records: Vec<NodeRecord>) -> Result<Self, TreeError> {
        let n = records.len();
        let mut nodes: Vec<TreeNode> = records
            .into_iter()
            .map(|r| TreeNode {
                parent: r.parent,
                pseudo_parents: r.pseudo_parents,
                children: r.children,
                pseudo_children: BTreeSet::new(),
                depth: 0,
            })
            .collect();
        for a in 0..n {
            for pp in nodes[a].pseudo_parents.clone() {
                nodes[pp.0].pseudo_children.insert(AgentId(a));
            }
        }
        let mut tree = PseudoTree { root, nodes };
        tree.assign_depths()?;
        tree.check(problem)?;
        Ok(tree)
    }

    /// Builds a tree from an explicit parent map (an injected tree). Children
    /// are ordered by ascending id; pseudo-parents are the non-parent
    /// ancestors adjacent in the constraint graph.
    pub fn from_parents(problem: &Dcop, parents: &[Option<AgentId>]) -> Result<Self, TreeError> {
        let n = problem.agents.len();
        if parents.len() != n {
            return Err(TreeError::Malformed(format!(
                "{} parents for {n} agents",
                parents.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&a| parents[a].is_none()).collect();
        let [root] = roots[..] else {
            return Err(TreeError::Malformed(format!("{} roots", roots.len())));
        };
        let mut records = vec![NodeRecord::default(); n];
        for a in 0..n {
            records[a].parent = parents[a];
            if let Some(p) = parents[a] {
                if p.0 >= n {
                    return Err(TreeError::Malformed(format!("unknown parent {p:?}")));
                }
                records[p.0].children.push(AgentId(a));
            }
        }
        let graph = problem.constraint_graph();
        let mut skeleton = PseudoTree {
            root: AgentId(root),
            nodes: records
                .iter()
                .map(|r| TreeNode {
                    parent: r.parent,
                    pseudo_parents: BTreeSet::new(),
                    children: r.children.clone(),
                    pseudo_children: BTreeSet::new(),
                    depth: 0,
                })
                .collect(),
        };
        skeleton.assign_depths()?;
        for a in problem.agent_ids() {
            let ancestors = skeleton.ancestors(a);
            records[a.0].pseudo_parents = graph
                .neighbors(a)
                .iter()
                .filter(|b| Some(**b) != parents[a.0] && ancestors.contains(b))
                .copied()
                .collect();
        }
        PseudoTree::from_records(problem, AgentId(root), records)
    }

    fn assign_depths(&mut self) -> Result<(), TreeError> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut stack = vec![(self.root, 0)];
        while let Some((a, d)) = stack.pop() {
            if std::mem::replace(&mut seen[a.0], true) {
                return Err(TreeError::Malformed("cycle in tree edges".into()));
            }
            self.nodes[a.0].depth = d;
            for c in &self.nodes[a.0].children {
                if self.nodes[c.0].parent != Some(a) {
                    return Err(TreeError::Malformed(format!("{c:?} does not point back to {a:?}")));
                }
                stack.push((*c, d + 1));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(TreeError::DisconnectedGraph);
        }
        Ok(())
    }

    /// Tree edges and back edges must put every constrained pair of agents on
    /// one branch.
    fn check(&self, problem: &Dcop) -> Result<(), TreeError> {
        for (a, b) in problem.constraint_graph().edges() {
            if !self.is_ancestor(a, b) && !self.is_ancestor(b, a) {
                return Err(TreeError::BranchViolation(a, b));
            }
        }
        for c in problem.constraint_ids() {
            let owners: Vec<AgentId> = problem.scope_owners(c).into_iter().collect();
            for &a in &owners {
                for &b in &owners {
                    if a != b && !self.is_ancestor(a, b) && !self.is_ancestor(b, a) {
                        return Err(TreeError::BranchViolation(a, b));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, a: AgentId) -> &TreeNode {
        &self.nodes[a.0]
    }

    pub fn parent(&self, a: AgentId) -> Option<AgentId> {
        self.nodes[a.0].parent
    }

    pub fn children(&self, a: AgentId) -> &[AgentId] {
        &self.nodes[a.0].children
    }

    pub fn depth(&self, a: AgentId) -> usize {
        self.nodes[a.0].depth
    }

    /// True when `anc` is a strict ancestor of `a`.
    pub fn is_ancestor(&self, anc: AgentId, a: AgentId) -> bool {
        let mut cur = self.nodes[a.0].parent;
        while let Some(p) = cur {
            if p == anc {
                return true;
            }
            cur = self.nodes[p.0].parent;
        }
        false
    }

    pub fn ancestors(&self, a: AgentId) -> BTreeSet<AgentId> {
        let mut out = BTreeSet::new();
        let mut cur = self.nodes[a.0].parent;
        while let Some(p) = cur {
            out.insert(p);
            cur = self.nodes[p.0].parent;
        }
        out
    }

    /// Agents in post-order (children before parents), children visited in
    /// their recorded order.
    pub fn post_order(&self) -> Vec<AgentId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((a, expanded)) = stack.pop() {
            if expanded {
                out.push(a);
                continue;
            }
            stack.push((a, true));
            for c in self.children(a).iter().rev() {
                stack.push((*c, false));
            }
        }
        out
    }
}

/// Constraints agent `a` folds into its joint table: every scope lies within
/// `a`, its parent and its pseudo-parents, and touches `a`.
pub fn relevant_constraints(tree: &PseudoTree, problem: &Dcop, a: AgentId) -> Vec<ConstraintId> {
    let node = tree.node(a);
    let mut allowed: BTreeSet<AgentId> = node.pseudo_parents.clone();
    allowed.insert(a);
    allowed.extend(node.parent);
    problem
        .constraint_ids()
        .filter(|c| {
            let owners = problem.scope_owners(*c);
            owners.contains(&a) && owners.is_subset(&allowed)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeparatorEntry {
    pub var: VarId,
    pub owner: AgentId,
    pub domain: Domain,
}

/// A separator in canonical order: ascending owner depth, then variable id.
pub type Separator = Vec<SeparatorEntry>;

pub fn canonical_separator(tree: &PseudoTree, problem: &Dcop, vars: impl IntoIterator<Item = VarId>) -> Separator {
    let mut vars: Vec<VarId> = vars.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    vars.sort_by_key(|v| (tree.depth(problem.var(*v).owner), *v));
    vars.into_iter()
        .map(|v| {
            let var = problem.var(v);
            SeparatorEntry {
                var: v,
                owner: var.owner,
                domain: var.domain,
            }
        })
        .collect()
}

/// Bottom-up separator: children's separators plus the scopes of the
/// agent's relevant constraints, minus the agent's own variables.
pub fn separator_of(tree: &PseudoTree, problem: &Dcop, a: AgentId, child_separators: &[&Separator]) -> Separator {
    let mut vars: BTreeSet<VarId> = child_separators.iter().flat_map(|s| s.iter().map(|e| e.var)).collect();
    for c in relevant_constraints(tree, problem, a) {
        vars.extend(problem.constraint(c).scope.iter().copied());
    }
    vars.retain(|v| problem.var(*v).owner != a);
    canonical_separator(tree, problem, vars)
}

/// Separators for every agent, computed in post-order.
pub fn all_separators(tree: &PseudoTree, problem: &Dcop) -> Vec<Separator> {
    let mut seps: Vec<Separator> = vec![Vec::new(); tree.len()];
    for a in tree.post_order() {
        let kids: Vec<&Separator> = tree.children(a).iter().map(|c| &seps[c.0]).collect();
        let s = separator_of(tree, problem, a, &kids);
        seps[a.0] = s;
    }
    seps
}

/// One line per agent: parent, pseudo-parents, children, pseudo-children,
/// separator.
pub fn report(tree: &PseudoTree, problem: &Dcop) -> String {
    let seps = all_separators(tree, problem);
    let names = |set: &mut dyn Iterator<Item = AgentId>| {
        let v: Vec<&str> = set.map(|a| problem.agent_name(a)).collect();
        format!("[{}]", v.join(","))
    };
    let mut out = String::new();
    for a in problem.agent_ids() {
        let node = tree.node(a);
        let sep: Vec<&str> = seps[a.0].iter().map(|e| problem.var(e.var).name.as_str()).collect();
        let _ = writeln!(
            out,
            "{} depth={} parent={} pseudo_parents={} children={} pseudo_children={} separator=[{}]",
            problem.agent_name(a),
            node.depth,
            node.parent.map_or("-", |p| problem.agent_name(p)),
            names(&mut node.pseudo_parents.iter().copied()),
            names(&mut node.children.iter().copied()),
            names(&mut node.pseudo_children.iter().copied()),
            sep.join(","),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{DcopBuilder, Mode, Utility};

    /// Synchronous DFS driver for unit tests; the harness runs the same
    /// state machines over its message queue.
    fn dfs(problem: &Dcop) -> (PseudoTree, usize) {
        let graph = problem.constraint_graph();
        let scores: Vec<Score> = problem.agent_ids().map(|a| score(problem, a).unwrap()).collect();
        let mut agents: Vec<DfsAgent> = problem
            .agent_ids()
            .map(|a| {
                let ns: Vec<Score> = graph.neighbors(a).iter().map(|b| scores[b.0]).collect();
                DfsAgent::new(a, &ns)
            })
            .collect();
        let root = select_root(problem);
        let mut pending = agents[root.0].start_as_root().map(|(to, m)| (root, to, m));
        let mut messages = 0;
        while let Some((from, to, m)) = pending.take() {
            messages += 1;
            pending = agents[to.0].on_message(from, m).unwrap().map(|(t, m)| (to, t, m));
        }
        let records = agents.iter().map(DfsAgent::record).collect();
        (PseudoTree::from_records(problem, root, records).unwrap(), messages)
    }

    fn chain3() -> Dcop {
        let mut b = DcopBuilder::new(Mode::Maximize);
        for (a, x) in [("a1", "x1"), ("a2", "x2"), ("a3", "x3")] {
            b.agent(a).unwrap();
            b.variable(x, a, 0, 1).unwrap();
        }
        b.extensional("c12", &["x1", "x2"], [(vec![0, 0], Utility::ZERO)])
            .unwrap();
        b.extensional("c23", &["x2", "x3"], [(vec![0, 0], Utility::ZERO)])
            .unwrap();
        b.build()
    }

    /// Separator straight from its set definition: ancestor-owned variables
    /// sharing a scope with a variable of the agent or a descendant.
    fn separator_by_definition(tree: &PseudoTree, problem: &Dcop, a: AgentId) -> BTreeSet<VarId> {
        let subtree: BTreeSet<AgentId> = problem
            .agent_ids()
            .filter(|b| *b == a || tree.is_ancestor(a, *b))
            .collect();
        let mut out = BTreeSet::new();
        for x in problem.var_ids() {
            if !tree.is_ancestor(problem.var(x).owner, a) {
                continue;
            }
            let linked = problem
                .constraints
                .iter()
                .any(|c| c.scope.contains(&x) && c.scope.iter().any(|y| subtree.contains(&problem.var(*y).owner)));
            if linked {
                out.insert(x);
            }
        }
        out
    }

    #[test]
    fn scores_on_triangle() {
        let p = fixtures::triangle();
        for a in p.agent_ids() {
            assert_eq!(score(&p, a).unwrap().degree, 2);
        }
        let (s1, s2) = (score(&p, AgentId(0)).unwrap(), score(&p, AgentId(1)).unwrap());
        assert!(s1.key() > s2.key(), "equal degree prefers the lower id");
        assert!(score(&p, AgentId(7)).is_err());
    }

    #[test]
    fn dfs_on_triangle() {
        let p = fixtures::triangle();
        let (t, messages) = dfs(&p);
        let (a1, a2, a3) = (AgentId(0), AgentId(1), AgentId(2));
        assert_eq!(t.root(), a1);
        assert_eq!(t.parent(a3), Some(a2));
        assert_eq!(t.node(a3).pseudo_parents, BTreeSet::from([a1]));
        assert_eq!(t.children(a1), &[a2]);
        assert_eq!(t.node(a1).pseudo_children, BTreeSet::from([a3]));
        assert_eq!(messages, 4);

        let seps = all_separators(&t, &p);
        assert_eq!(
            seps[a3.0].iter().map(|e| e.var).collect::<Vec<_>>(),
            vec![VarId(0), VarId(1)]
        );
        assert!(seps[a1.0].is_empty());

        let names = |cs: Vec<ConstraintId>| cs.into_iter().map(|c| p.constraint(c).name.clone()).collect::<Vec<_>>();
        assert_eq!(names(relevant_constraints(&t, &p, a3)), ["x1_cons_x3", "x2_cons_x3"]);
        assert_eq!(names(relevant_constraints(&t, &p, a2)), ["x1_cons_x2"]);
        assert!(relevant_constraints(&t, &p, a1).is_empty());
    }

    #[test]
    fn injected_tree_matches_dfs() {
        let p = fixtures::triangle();
        let injected = PseudoTree::from_parents(&p, &[None, Some(AgentId(0)), Some(AgentId(1))]).unwrap();
        assert_eq!(injected, dfs(&p).0);
    }

    #[test]
    fn injected_tree_must_respect_branches() {
        let p = fixtures::triangle();
        let star = [None, Some(AgentId(0)), Some(AgentId(0))];
        assert!(matches!(
            PseudoTree::from_parents(&p, &star),
            Err(TreeError::BranchViolation(..))
        ));
    }

    #[test]
    fn single_agent_tree() {
        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("solo").unwrap();
        b.variable("x", "solo", 0, 2).unwrap();
        b.extensional("u", &["x"], [(vec![1], Utility::Finite(3))]).unwrap();
        let p = b.build();
        let (t, messages) = dfs(&p);
        assert_eq!(messages, 0);
        assert_eq!(t.root(), AgentId(0));
        assert_eq!(relevant_constraints(&t, &p, AgentId(0)), vec![ConstraintId(0)]);
    }

    #[test]
    fn chain_separator() {
        let p = chain3();
        // a2 has degree 2 and becomes root; root a1 instead via injection
        let t = PseudoTree::from_parents(&p, &[None, Some(AgentId(0)), Some(AgentId(1))]).unwrap();
        let seps = all_separators(&t, &p);
        assert_eq!(seps[2].iter().map(|e| e.var).collect::<Vec<_>>(), vec![VarId(1)]);
        assert_eq!(seps[1].iter().map(|e| e.var).collect::<Vec<_>>(), vec![VarId(0)]);
        let (auto, _) = dfs(&p);
        assert_eq!(auto.root(), AgentId(1));
    }

    #[test]
    fn report_lists_every_agent() {
        let p = fixtures::triangle();
        let (t, _) = dfs(&p);
        let text = report(&t, &p);
        assert_eq!(
            text.lines().nth(2).unwrap(),
            "a3 depth=2 parent=a2 pseudo_parents=[a1] children=[] pseudo_children=[] separator=[x1,x2]"
        );
    }

    #[test]
    fn generated_instances_obey_tree_properties() {
        use crate::generators::{gen_random, RandomGraphParams};
        for seed in 0..60 {
            let params = RandomGraphParams {
                n_agents: 2 + (seed as usize % 5),
                n_variables: 6 + (seed as usize % 5),
                domain_size: 2,
                p1: 0.3 + 0.1 * (seed % 5) as f64,
                p2: 0.0,
                utility_range: (0, 9),
                seed,
            };
            let p = gen_random(&params).unwrap();
            let (t, messages) = dfs(&p);
            let n = p.agents.len();
            assert_eq!(messages, 2 * (n - 1));
            let total: usize = p.agent_ids().map(|a| relevant_constraints(&t, &p, a).len()).sum();
            assert_eq!(total, p.constraints.len(), "each constraint has exactly one home");
            let seps = all_separators(&t, &p);
            assert!(seps[t.root().0].is_empty());
            for a in p.agent_ids() {
                let got: BTreeSet<VarId> = seps[a.0].iter().map(|e| e.var).collect();
                assert_eq!(got, separator_by_definition(&t, &p, a), "seed {seed} agent {a:?}");
                for e in &seps[a.0] {
                    assert!(t.is_ancestor(e.owner, a));
                }
                for pp in &t.node(a).pseudo_parents {
                    assert!(t.node(*pp).pseudo_children.contains(&a));
                }
            }
        }
    }
}
