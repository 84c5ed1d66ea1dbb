use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dpop_core::generators::{gen_power_net, gen_random, PowerNetParams, RandomGraphParams};
use dpop_core::harness::{self, MessageKind, Payload, TreeSource};
use dpop_core::oracle::{brute_force, OracleResult};
use dpop_core::{format, solve, AgentId, Dcop, EngineConfig, RootChoice, Status};

fn random_problem() -> impl Strategy<Value = Dcop> {
    (2usize..8, 2usize..4, 0.3f64..0.9, 0.0f64..0.6, 1usize..5, any::<u64>()).prop_filter_map(
        "unsatisfiable parameters",
        |(n, d, p1, p2, agents, seed)| {
            gen_random(&RandomGraphParams {
                n_agents: agents.min(n),
                n_variables: n,
                domain_size: d,
                p1,
                p2,
                utility_range: (-30, 30),
                seed,
            })
            .ok()
        },
    )
}

fn power_problem() -> impl Strategy<Value = Dcop> {
    (2usize..5, 1i64..3, 0i64..3, any::<bool>(), any::<u64>()).prop_map(|(n, cap, gen, hard, seed)| {
        gen_power_net(&PowerNetParams {
            n_nodes: n,
            line_capacity: cap,
            generation_limit: gen,
            consumption_limit: 1,
            loss_cost_factor: 2,
            hard_no_loss: hard,
            seed,
        })
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn engine_matches_oracle(p in prop_oneof![random_problem(), power_problem()]) {
        let r = solve(&p, &EngineConfig::default()).unwrap();
        match (r.status, brute_force(&p).unwrap()) {
            (Status::Infeasible, OracleResult::Infeasible) => {}
            (Status::Optimal { utility, assignment }, OracleResult::Optimal { utility: best, assignment: reference, optima }) => {
                prop_assert_eq!(utility, best);
                if optima == 1 {
                    prop_assert_eq!(assignment, reference);
                }
            }
            (a, b) => prop_assert!(false, "engine {:?}, oracle {:?}", a, b),
        }
    }

    #[test]
    fn every_root_gives_the_same_optimum(p in random_problem()) {
        let auto = solve(&p, &EngineConfig::default()).unwrap();
        for a in p.agent_ids() {
            let config = EngineConfig { root: RootChoice::Agent(a), ..Default::default() };
            let r = solve(&p, &config).unwrap();
            prop_assert_eq!(r.tree.root(), a);
            match (&r.status, &auto.status) {
                (Status::Optimal { utility: u, .. }, Status::Optimal { utility: v, .. }) => prop_assert_eq!(u, v),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn logs_obey_the_protocol(p in prop_oneof![random_problem(), power_problem()]) {
        let r = solve(&p, &EngineConfig::default()).unwrap();
        harness::check_phase_order(&r.log).unwrap();

        // each agent sends at most one UTIL, to its parent, and receives one
        // VALUE from its parent
        let mut util_from: BTreeMap<AgentId, usize> = BTreeMap::new();
        let mut value_to: BTreeMap<AgentId, usize> = BTreeMap::new();
        let seqs: BTreeSet<u64> = r.log.iter().map(|m| m.seq).collect();
        prop_assert_eq!(seqs.len(), r.log.len());
        for m in &r.log {
            match m.kind() {
                MessageKind::Util => {
                    *util_from.entry(m.from).or_default() += 1;
                    prop_assert_eq!(r.tree.parent(m.from), Some(m.to));
                }
                MessageKind::Value => {
                    *value_to.entry(m.to).or_default() += 1;
                    prop_assert_eq!(r.tree.parent(m.to), Some(m.from));
                }
                MessageKind::Tree => {}
            }
        }
        prop_assert!(util_from.values().all(|&c| c == 1));
        prop_assert!(value_to.values().all(|&c| c == 1));
    }

    #[test]
    fn util_scopes_hold_only_ancestor_variables(p in random_problem()) {
        let r = solve(&p, &EngineConfig::default()).unwrap();
        for m in r.util_messages() {
            let ancestors = r.tree.ancestors(m.sender);
            for v in m.table.scope_vars() {
                prop_assert!(ancestors.contains(&p.var(v).owner));
            }
            let dense: u64 = m.separator.iter().map(|e| e.domain.size()).product();
            prop_assert!(m.table.len() as u64 <= dense);
        }
    }

    #[test]
    fn injected_tree_reproduces_phases_two_and_three(p in random_problem()) {
        let built = solve(&p, &EngineConfig::default()).unwrap();
        let injected = harness::run(&p, TreeSource::Injected(built.tree.clone()), None).unwrap();
        let tail = |log: &[harness::Message]| -> Vec<(AgentId, AgentId, Payload)> {
            log.iter().filter(|m| m.kind() != MessageKind::Tree).map(|m| (m.from, m.to, m.payload.clone())).collect()
        };
        prop_assert_eq!(tail(&built.log), tail(&injected.log));
        prop_assert_eq!(built.status, injected.status);
    }

    #[test]
    fn runs_are_deterministic(p in prop_oneof![random_problem(), power_problem()]) {
        let a = solve(&p, &EngineConfig::default()).unwrap();
        let b = solve(&p, &EngineConfig::default()).unwrap();
        prop_assert_eq!(harness::dump_log(&p, &a.log), harness::dump_log(&p, &b.log));
        prop_assert_eq!(a.to_text(&p, None), b.to_text(&p, None));
    }

    #[test]
    fn simulated_runtime_dominates_each_agent(p in random_problem()) {
        let r = solve(&p, &EngineConfig::default()).unwrap();
        let m = &r.metrics;
        for a in p.agent_ids() {
            prop_assert!(m.simulated_runtime >= m.phase2_units[a.0] + m.phase3_units[a.0]);
        }
        let total: u64 = m.phase2_units.iter().chain(&m.phase3_units).sum();
        prop_assert!(m.simulated_runtime <= total);
    }

    #[test]
    fn files_round_trip(p in prop_oneof![random_problem(), power_problem()]) {
        let text = format::print(&p, &[]);
        prop_assert_eq!(format::parse(&text).unwrap(), p);
    }
}
