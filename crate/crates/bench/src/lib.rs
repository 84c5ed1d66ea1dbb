//! Workloads shared by the benchmarks.

use dpop_core::generators::{gen_power_net, gen_random, PowerNetParams, RandomGraphParams};
use dpop_core::tables::{self, ScopeVar, UtilityTable};
use dpop_core::{Dcop, Domain, Mode, VarId};

/// A random table over `vars`, keeping roughly `density` of the cells.
pub fn random_table(vars: &[usize], domain: i64, density: f64, seed: u64) -> UtilityTable {
    let scope: Vec<ScopeVar> = vars
        .iter()
        .map(|&v| ScopeVar {
            var: VarId(v),
            domain: Domain::new(0, domain - 1),
        })
        .collect();
    let mut t = UtilityTable::new(Mode::Maximize, scope);
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let cells = (domain as u64).pow(vars.len() as u32);
    for cell in 0..cells {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        if (state % 1000) as f64 >= density * 1000.0 {
            continue;
        }
        let mut rest = cell;
        let mut tuple = vec![0; vars.len()];
        for slot in tuple.iter_mut().rev() {
            *slot = (rest % domain as u64) as i64;
            rest /= domain as u64;
        }
        t.insert(tuple, (state % 100) as i64).expect("tuple fits the scope");
    }
    t
}

/// Two overlapping tables of the shape a mid-tree agent joins.
pub fn join_pair(domain: i64, density: f64) -> (UtilityTable, UtilityTable) {
    (
        random_table(&[0, 1, 2], domain, density, 1),
        random_table(&[1, 2, 3], domain, density, 2),
    )
}

pub fn joined(domain: i64, density: f64) -> UtilityTable {
    let (u, v) = join_pair(domain, density);
    tables::join(&u, &v).expect("same mode")
}

pub fn random_instance(p2: f64) -> Dcop {
    gen_random(&RandomGraphParams {
        n_agents: 4,
        n_variables: 8,
        domain_size: 4,
        p1: 0.4,
        p2,
        seed: 7,
        ..Default::default()
    })
    .expect("satisfiable parameters")
}

pub fn power_instance(cap: i64, hard: bool) -> Dcop {
    gen_power_net(&PowerNetParams {
        n_nodes: 6,
        line_capacity: cap,
        generation_limit: cap,
        hard_no_loss: hard,
        ..Default::default()
    })
    .expect("valid parameters")
}
