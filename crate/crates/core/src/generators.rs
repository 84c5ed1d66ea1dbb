//! Seeded instance generators: random binary-constraint graphs and
//! line-topology power networks.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{self, Expr};
use crate::model::{Dcop, DcopBuilder, Mode, Utility};

/// How many times a disconnected random graph is redrawn before giving up.
pub const CONNECT_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("unsatisfiable generator parameters: {0}")]
    UnsatisfiableParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomGraphParams {
    pub n_agents: usize,
    pub n_variables: usize,
    pub domain_size: usize,
    /// Constraint density in (0, 1].
    pub p1: f64,
    /// Fraction of infeasible tuples per constraint, in [0, 1).
    pub p2: f64,
    /// Inclusive range of feasible utilities.
    pub utility_range: (i64, i64),
    pub seed: u64,
}

impl Default for RandomGraphParams {
    fn default() -> Self {
        RandomGraphParams {
            n_agents: 5,
            n_variables: 15,
            domain_size: 6,
            p1: 0.6,
            p2: 0.6,
            utility_range: (0, 100),
            seed: 0,
        }
    }
}

impl RandomGraphParams {
    /// Generator invocation, for file headers.
    pub fn describe(&self) -> String {
        format!(
            "gen-random agents={} variables={} domain={} p1={} p2={} utility={}..{} seed={}",
            self.n_agents,
            self.n_variables,
            self.domain_size,
            self.p1,
            self.p2,
            self.utility_range.0,
            self.utility_range.1,
            self.seed
        )
    }
}

/// Number of binary constraints: `⌊n(n−1)p1⌋`. Each constraint sits on a
/// distinct ordered pair of variables, so `p1 = 1` uses every ordered pair.
pub fn edge_target(n_variables: usize, p1: f64) -> usize {
    let pairs = (n_variables * n_variables.saturating_sub(1)) as f64;
    (pairs * p1 + 1e-9).floor() as usize
}

/// Infeasible tuples per constraint: `⌈p2·d²⌉`.
pub fn infeasible_per_constraint(domain_size: usize, p2: f64) -> usize {
    let cells = (domain_size * domain_size) as f64;
    (cells * p2 - 1e-9).ceil().max(0.0) as usize
}

pub fn gen_random(params: &RandomGraphParams) -> Result<Dcop, GenError> {
    let n = params.n_variables;
    let d = params.domain_size;
    let bad = |msg: String| Err(GenError::UnsatisfiableParams(msg));
    if n == 0 || params.n_agents == 0 || params.n_agents > n {
        return bad(format!("{} agents for {n} variables", params.n_agents));
    }
    if d == 0 {
        return bad("empty domain".into());
    }
    if !(params.p1 > 0.0 && params.p1 <= 1.0) || !(0.0..1.0).contains(&params.p2) {
        return bad(format!("p1={} p2={}", params.p1, params.p2));
    }
    let (lo, hi) = params.utility_range;
    if lo > hi {
        return bad(format!("utility range {lo}..{hi}"));
    }
    let edges = edge_target(n, params.p1);
    if edges + 1 < n {
        return bad(format!("{edges} constraints cannot connect {n} variables"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let all_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
        .collect();
    let mut pairs = None;
    for _ in 0..CONNECT_RETRIES {
        let mut picked: Vec<(usize, usize)> = index::sample(&mut rng, all_pairs.len(), edges)
            .into_iter()
            .map(|k| all_pairs[k])
            .collect();
        picked.sort_unstable();
        if connects(n, &picked) {
            pairs = Some(picked);
            break;
        }
    }
    let Some(pairs) = pairs else {
        return bad(format!("no connected graph after {CONNECT_RETRIES} draws"));
    };

    let mut b = DcopBuilder::new(Mode::Maximize);
    for a in 0..params.n_agents {
        b.agent(&format!("a{}", a + 1)).unwrap();
    }
    for i in 0..n {
        let owner = format!("a{}", i % params.n_agents + 1);
        b.variable(&format!("x{}", i + 1), &owner, 0, d as i64 - 1).unwrap();
    }
    let cells = d * d;
    let k = infeasible_per_constraint(d, params.p2);
    for (ci, (i, j)) in pairs.iter().enumerate() {
        let infeasible: Vec<usize> = index::sample(&mut rng, cells, k).into_vec();
        let rows: Vec<(Vec<i64>, Utility)> = (0..cells)
            .map(|cell| {
                let tuple = vec![(cell / d) as i64, (cell % d) as i64];
                let u = if infeasible.contains(&cell) {
                    Utility::NegInf
                } else {
                    Utility::Finite(rng.gen_range(lo..=hi))
                };
                (tuple, u)
            })
            .collect();
        let (xi, xj) = (format!("x{}", i + 1), format!("x{}", j + 1));
        b.extensional(&format!("c{}", ci + 1), &[&xi, &xj], rows).unwrap();
    }
    Ok(b.build())
}

fn connects(n: usize, pairs: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetParams {
    pub n_nodes: usize,
    pub line_capacity: i64,
    pub generation_limit: i64,
    /// Each node's demand is drawn from `0..=consumption_limit`.
    pub consumption_limit: i64,
    pub loss_cost_factor: i64,
    pub hard_no_loss: bool,
    pub seed: u64,
}

impl Default for PowerNetParams {
    fn default() -> Self {
        PowerNetParams {
            n_nodes: 4,
            line_capacity: 2,
            generation_limit: 2,
            consumption_limit: 1,
            loss_cost_factor: 2,
            hard_no_loss: true,
            seed: 0,
        }
    }
}

impl PowerNetParams {
    pub fn describe(&self) -> String {
        format!(
            "gen-power nodes={} cap={} gen={} cons={} loss-factor={} hard={} seed={}",
            self.n_nodes,
            self.line_capacity,
            self.generation_limit,
            self.consumption_limit,
            self.loss_cost_factor,
            self.hard_no_loss,
            self.seed
        )
    }
}

/// Variable names of the two ends of line `i — j` (1-based nodes).
pub fn line_vars(i: usize, j: usize) -> (String, String) {
    (format!("x{i}_{j}"), format!("x{j}_{i}"))
}

/// A path of `n_nodes` power nodes, minimizing cost.
///
/// Node `i` (agent `a{i}`) owns its generation `g{i}`, its consumption `c{i}`
/// (pinned to a seeded demand) and one transfer variable per incident line.
/// On line `i — j` with `i < j`, `x{i}_{j} ∈ [0,cap]` and
/// `x{j}_{i} ∈ [−cap,0]`. Every node must balance exactly. A line either
/// charges `factor·|x{i}_{j} + x{j}_{i}|` for lost power, or, with
/// `hard_no_loss`, forbids any loss and charges `factor·x{i}_{j}` for the
/// transfer.
pub fn gen_power_net(params: &PowerNetParams) -> Result<Dcop, GenError> {
    let n = params.n_nodes;
    let cap = params.line_capacity;
    if n < 2 || cap < 0 || params.generation_limit < 0 || params.consumption_limit < 0 {
        return Err(GenError::UnsatisfiableParams(params.describe()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut b = DcopBuilder::new(Mode::Minimize);
    for i in 1..=n {
        b.agent(&format!("a{i}")).unwrap();
    }
    for i in 1..=n {
        let agent = format!("a{i}");
        b.variable(&format!("g{i}"), &agent, 0, params.generation_limit)
            .unwrap();
        let demand = rng.gen_range(0..=params.consumption_limit);
        b.variable(&format!("c{i}"), &agent, demand, demand).unwrap();
        for j in [i.wrapping_sub(1), i + 1] {
            if (1..=n).contains(&j) {
                let (out, _) = line_vars(i, j);
                let (lb, ub) = if i < j { (0, cap) } else { (-cap, 0) };
                b.variable(&out, &agent, lb, ub).unwrap();
            }
        }
    }
    let f = params.loss_cost_factor;
    for i in 1..n {
        let (fwd, back) = line_vars(i, i + 1);
        let source = if params.hard_no_loss {
            format!("if({fwd} + {back} == 0, {f}*{fwd}, INF)")
        } else {
            format!("{f}*abs({fwd} + {back})")
        };
        b.intensional(&format!("line{i}_{}", i + 1), &[&fwd, &back], parse(&source))
            .unwrap();
    }
    for i in 1..=n {
        let mut scope = vec![format!("g{i}"), format!("c{i}")];
        for j in [i.wrapping_sub(1), i + 1] {
            if (1..=n).contains(&j) {
                scope.push(line_vars(i, j).0);
            }
        }
        let transfers = scope[2..].join(" - ");
        let source = format!("if(g{i} - c{i} - {transfers} == 0, 0, INF)");
        let scope: Vec<&str> = scope.iter().map(String::as_str).collect();
        b.intensional(&format!("balance{i}"), &scope, parse(&source)).unwrap();
    }
    Ok(b.build())
}

fn parse(source: &str) -> Expr {
    expr::parse(source).expect("generated expression parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintBody, ConstraintId};
    use crate::tables::materialize;

    #[test]
    fn edge_target_formula() {
        assert_eq!(edge_target(15, 0.6), 126);
        assert_eq!(edge_target(8, 0.4), 22);
        assert_eq!(edge_target(4, 1.0), 12);
    }

    #[test]
    fn random_instance_shape() {
        let params = RandomGraphParams {
            seed: 3,
            ..RandomGraphParams::default()
        };
        let p = gen_random(&params).unwrap();
        assert_eq!(p.constraints.len(), 126);
        assert_eq!(p.variables.len(), 15);
        assert_eq!(p.agents.len(), 5);
        assert_eq!(p.validate(), vec![]);
        for (i, v) in p.variables.iter().enumerate() {
            assert_eq!(v.owner.0, i % 5);
        }
    }

    #[test]
    fn tightness_controls_infeasible_rows() {
        for (p2, want) in [(0.0, 0), (0.3, 11), (0.6, 22)] {
            let params = RandomGraphParams {
                p2,
                seed: 9,
                ..RandomGraphParams::default()
            };
            let p = gen_random(&params).unwrap();
            for c in &p.constraints {
                let ConstraintBody::Extensional(rows) = &c.body else {
                    panic!()
                };
                assert_eq!(rows.len(), 36);
                assert_eq!(rows.iter().filter(|(_, u)| *u == Utility::NegInf).count(), want);
            }
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let params = RandomGraphParams {
            n_variables: 8,
            domain_size: 3,
            seed: 77,
            ..Default::default()
        };
        assert_eq!(gen_random(&params).unwrap(), gen_random(&params).unwrap());
        let other = RandomGraphParams {
            seed: 78,
            ..params.clone()
        };
        assert_ne!(gen_random(&params).unwrap(), gen_random(&other).unwrap());
    }

    #[test]
    fn rejects_unconnectable_density() {
        let params = RandomGraphParams {
            n_variables: 10,
            p1: 0.05,
            ..Default::default()
        };
        assert!(gen_random(&params).is_err());
    }

    #[test]
    fn two_node_hard_line_prunes_to_three_rows() {
        let params = PowerNetParams {
            n_nodes: 2,
            line_capacity: 2,
            generation_limit: 0,
            consumption_limit: 0,
            loss_cost_factor: 2,
            hard_no_loss: true,
            seed: 0,
        };
        let p = gen_power_net(&params).unwrap();
        assert_eq!(p.validate(), vec![]);
        let line = p.constraint_id("line1_2").unwrap();
        let t = materialize(&p, line).unwrap();
        let rows: Vec<_> = t.rows().map(|(x, u)| (x.to_vec(), u)).collect();
        assert_eq!(rows, vec![(vec![0, 0], 0), (vec![1, -1], 2), (vec![2, -2], 4)]);
    }

    #[test]
    fn two_node_soft_line_keeps_all_rows() {
        let params = PowerNetParams {
            n_nodes: 2,
            hard_no_loss: false,
            ..Default::default()
        };
        let p = gen_power_net(&params).unwrap();
        let t = materialize(&p, ConstraintId(0)).unwrap();
        let rows: Vec<_> = t.rows().map(|(x, u)| (x.to_vec(), u)).collect();
        let want: Vec<(Vec<i64>, i64)> = vec![
            (vec![0, -2], 4),
            (vec![0, -1], 2),
            (vec![0, 0], 0),
            (vec![1, -2], 2),
            (vec![1, -1], 0),
            (vec![1, 0], 2),
            (vec![2, -2], 0),
            (vec![2, -1], 2),
            (vec![2, 0], 4),
        ];
        assert_eq!(rows, want);
    }

    #[test]
    fn hard_lines_keep_cap_plus_one_rows() {
        for cap in 1..6 {
            let params = PowerNetParams {
                n_nodes: 5,
                line_capacity: cap,
                seed: cap as u64,
                ..Default::default()
            };
            let p = gen_power_net(&params).unwrap();
            assert_eq!(p.validate(), vec![]);
            for c in p.constraint_ids().filter(|c| p.constraint(*c).name.starts_with("line")) {
                let t = materialize(&p, c).unwrap();
                assert_eq!(t.len() as i64, cap + 1);
                assert_eq!(t.dense_cells() as i64, (cap + 1) * (cap + 1));
            }
        }
    }
}
