//! Benchmark fixtures shared by the criterion benches.

use mfrn_core::optim::ControlProblem;
use mfrn_core::scenarios::{build_test3, Test3Guess};
use mfrn_core::ControlPath;

/// The Test 3 problem on `n_cells` cells with its zero initial guess.
pub fn test3_problem(n_cells: usize) -> (ControlProblem, ControlPath) {
    let mut s = build_test3(Test3Guess::Zero);
    s.config.n_cells = n_cells;
    let problem = s.problem().expect("valid scenario");
    let c0 = s.initial_controls().expect("valid guess");
    (problem, c0)
}
