//! Uniform interior grid on a bounded interval.
//!
//! Only interior nodes are unknowns; the exterior condition `u = 0` outside
//! `(a, b)` is carried by the operator.

use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    delta: Vec<f64>,
}

impl Grid {
    /// Builds the grid `x_i = a + i h`, `i = 1..=n`, with `h = (b - a) / (n + 1)`.
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(invalid(format!("interval ({a}, {b}) must satisfy a < b")));
        }
        if n < 3 {
            return Err(invalid(format!("need at least 3 interior nodes, got {n}")));
        }
        let h = (b - a) / (n + 1) as f64;
        let nodes: Vec<f64> = (1..=n).map(|i| a + i as f64 * h).collect();
        let delta = nodes.iter().map(|&x| (x - a).min(b - x)).collect();
        Ok(Self {
            a,
            b,
            n,
            h,
            nodes,
            delta,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Distance of each node to the boundary.
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Dyadic refinement: `2n + 1` interior nodes, containing every current node.
    pub fn refine(&self) -> Self {
        Self::new(self.a, self.b, 2 * self.n + 1).expect("refinement of a valid grid is valid")
    }

    /// True when both grids describe the same interval and node count.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.a == other.a && self.b == other.b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_nodes_on_symmetric_interval() {
        let g = Grid::new(-1.0, 1.0, 3).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.nodes(), &[-0.5, 0.0, 0.5]);
        assert_eq!(g.delta(), &[0.5, 1.0, 0.5]);
        assert_eq!(g.delta()[1], 1.0);
    }

    #[test]
    fn seven_nodes_on_zero_two() {
        let g = Grid::new(0.0, 2.0, 7).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.nodes()[3], 1.0);
        assert_eq!(g.delta()[3], 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(0.0, 1.0, 2).is_err());
        assert!(Grid::new(1.0, 1.0, 10).is_err());
        assert!(Grid::new(2.0, 1.0, 10).is_err());
    }

    #[test]
    fn refinement_contains_original_nodes() {
        let g = Grid::new(-1.0, 3.0, 9).unwrap();
        let r = g.refine();
        assert_eq!(r.len(), 19);
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((r.nodes()[2 * i + 1] - x).abs() < 1e-14);
        }
    }

    proptest::proptest! {
        #[test]
        fn nodes_inside_and_delta_exact(a in -5.0f64..5.0, w in 0.1f64..10.0, n in 3usize..400) {
            let g = Grid::new(a, a + w, n).unwrap();
            let b = a + w;
            proptest::prop_assert!((g.h() * (n + 1) as f64 - w).abs() <= 1e-12 * w.max(1.0));
            for (i, (&x, &d)) in g.nodes().iter().zip(g.delta()).enumerate() {
                proptest::prop_assert!(a < x && x < b);
                proptest::prop_assert_eq!(d, (x - a).min(b - x));
                proptest::prop_assert!(d > 0.0);
                if i > 0 {
                    proptest::prop_assert!(x > g.nodes()[i - 1]);
                }
            }
        }
    }
}
