use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Nodal values on the interior nodes of a grid; zero outside the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self::from_vec_unchecked(grid, vec![0.0; n])
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Self::from_vec_unchecked(grid, vec![c; n])
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::from_vec_unchecked(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "fields live on grids with {} and {} nodes",
                self.len(),
                other.len()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_vec_unchecked(self.grid.clone(), values))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Self> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L^2(a, b)` norm, `sqrt(h * sum u_i^2)`.
    pub fn norm_l2(&self) -> f64 {
        (self.grid.h() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Discrete integral `h * sum u_i`.
    pub fn integral(&self) -> f64 {
        self.grid.h() * self.values.iter().sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    /// `max_i |self_i - other_i|`
    pub fn dist_inf(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(0.0, 1.0, n).unwrap())
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            Field::new(grid(5), vec![1.0; 4]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Field::new(grid(3), vec![1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn norms_of_constant() {
        let f = Field::constant(grid(9), 2.0);
        assert_eq!(f.norm_inf(), 2.0);
        // h * 9 = 0.9
        assert!((f.norm_l2() - (4.0f64 * 0.9).sqrt()).abs() < 1e-14);
        assert!((f.integral() - 1.8).abs() < 1e-14);
    }

    #[test]
    fn cross_grid_ops_fail() {
        let a = Field::zeros(grid(5));
        let b = Field::zeros(grid(7));
        assert!(a.sub(&b).is_err());
    }
}
