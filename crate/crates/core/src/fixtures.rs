//! Small hand-written instances shared by tests, benches and the CLI.

use crate::expr;
use crate::model::{Dcop, DcopBuilder, Mode, Utility};

/// Three agents in a triangle, one binary variable each, and the same
/// pairwise table on every edge: `(0,0)→5, (0,1)→8, (1,0)→20, (1,1)→3`
/// (first scope variable is the lower-numbered one). Optimum 45 at
/// `x1=1, x2=0, x3=0`.
pub fn triangle() -> Dcop {
    let mut b = DcopBuilder::new(Mode::Maximize);
    for a in ["a1", "a2", "a3"] {
        b.agent(a).unwrap();
    }
    for (x, a) in [("x1", "a1"), ("x2", "a2"), ("x3", "a3")] {
        b.variable(x, a, 0, 1).unwrap();
    }
    let rows =
        || [(vec![0, 0], 5), (vec![0, 1], 8), (vec![1, 0], 20), (vec![1, 1], 3)].map(|(t, u)| (t, Utility::Finite(u)));
    for (i, j) in [(1, 2), (1, 3), (2, 3)] {
        let (xi, xj) = (format!("x{i}"), format!("x{j}"));
        b.extensional(&format!("x{i}_cons_x{j}"), &[&xi, &xj], rows()).unwrap();
    }
    b.build()
}

/// Two power nodes joined by one line, minimizing cost. `x12 ∈ [0,cap]` is
/// owned by `a1`, `x21 ∈ [-cap,0]` by `a2`, and the single constraint is
/// `utility` over `(x12, x21)`.
pub fn two_node_line(cap: i64, utility: &str) -> Dcop {
    let mut b = DcopBuilder::new(Mode::Minimize);
    b.agent("a1").unwrap();
    b.agent("a2").unwrap();
    b.variable("x12", "a1", 0, cap).unwrap();
    b.variable("x21", "a2", -cap, 0).unwrap();
    b.intensional("f", &["x12", "x21"], expr::parse(utility).unwrap())
        .unwrap();
    b.build()
}

/// Loss-free transfer: cost `2*x12` when the line balances, `+∞` otherwise.
pub const NO_LOSS: &str = "if(x12 + x21 == 0, 2*x12, INF)";

/// Transfer cost twice the lost power.
pub const LOSS: &str = "2*abs(x12 + x21)";
