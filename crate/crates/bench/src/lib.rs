//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use fracsing::{FracOperator, Grid};

/// Sizes every benchmark sweeps over.
pub const SIZES: [usize; 3] = [128, 256, 512];

/// Operator on `(−1, 1)` with `n` nodes.
pub fn operator(n: usize, s: f64) -> FracOperator {
    let grid = Arc::new(Grid::new(-1.0, 1.0, n).expect("valid grid"));
    FracOperator::assemble(grid, s).expect("valid order")
}
