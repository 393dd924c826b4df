//! Uniform symmetric grids and sampled fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MIN_POINTS: usize = 17;

/// Uniform tensor grid on [−L, L]ⁿ with an odd node count per axis, so y = 0 is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<S> {
    n_dim: usize,
    half_width: S,
    points: usize,
}

impl<S: Scalar> Grid<S> {
    pub fn new(n_dim: usize, half_width: S, points: usize) -> Result<Self> {
        if !(1..=2).contains(&n_dim) {
            return Err(Error::InvalidParam(format!(
                "grid dimension {n_dim} not in 1..=2"
            )));
        }
        if !(half_width > S::zero()) || !half_width.is_finite() {
            return Err(Error::InvalidParam(format!(
                "half-width {half_width} must be positive"
            )));
        }
        if points < MIN_POINTS || points.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "points per axis {points} must be odd and >= {MIN_POINTS}"
            )));
        }
        Ok(Grid {
            n_dim,
            half_width,
            points,
        })
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn half_width(&self) -> S {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> S {
        S::lit(2.0) * self.half_width / S::from_usize_lossy(self.points - 1)
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.n_dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center_index(&self) -> usize {
        let c = self.points / 2;
        if self.n_dim == 1 {
            c
        } else {
            c * self.points + c
        }
    }

    /// Coordinate of node `i` along an axis.
    pub fn node(&self, i: usize) -> S {
        let c = (self.points / 2) as f64;
        S::lit(i as f64 - c) * self.spacing()
    }

    pub fn axis(&self) -> Vec<S> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    /// Per-axis indices of flat index `k`.
    pub fn unflatten(&self, k: usize) -> [usize; 2] {
        if self.n_dim == 1 {
            [k, 0]
        } else {
            [k / self.points, k % self.points]
        }
    }

    /// Coordinates of flat index `k`; the second entry is zero in 1D.
    pub fn coords(&self, k: usize) -> [S; 2] {
        let [i, j] = self.unflatten(k);
        if self.n_dim == 1 {
            [self.node(i), S::zero()]
        } else {
            [self.node(i), self.node(j)]
        }
    }

    pub fn point(&self, k: usize) -> Vec<S> {
        let c = self.coords(k);
        c[..self.n_dim].to_vec()
    }

    pub fn radius_sq(&self, k: usize) -> S {
        let [a, b] = self.coords(k);
        a * a + b * b
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let last = self.points - 1;
        let [i, j] = self.unflatten(k);
        i == 0 || i == last || (self.n_dim == 2 && (j == 0 || j == last))
    }

    /// Trapezoid weight of flat node `k`.
    pub fn quad_weight(&self, k: usize) -> S {
        let h = self.spacing();
        let last = self.points - 1;
        let w1 = |i: usize| {
            if i == 0 || i == last {
                h / S::lit(2.0)
            } else {
                h
            }
        };
        let [i, j] = self.unflatten(k);
        if self.n_dim == 1 {
            w1(i)
        } else {
            w1(i) * w1(j)
        }
    }

    /// Rough bound on the fraction of ∫|y|^order ρ lying outside the grid.
    pub fn gaussian_tail(&self, order: usize) -> S {
        let l = self.half_width;
        let two = S::lit(2.0);
        S::from_usize_lossy(self.n_dim) * two * l.powi(order as i32) * (-l * l / S::lit(4.0)).exp()
            / (l * S::PI().sqrt())
    }

    pub fn require_coverage(&self, radius: S) -> Result<()> {
        if self.half_width < radius {
            Err(Error::GridTooNarrow {
                required: radius.as_f64(),
                half_width: self.half_width.as_f64(),
            })
        } else {
            Ok(())
        }
    }

    pub fn sample<F: Fn(&[S]) -> S>(&self, f: F) -> Field<S> {
        let values = (0..self.len()).map(|k| f(&self.point(k))).collect();
        Field {
            grid: *self,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<S> {
    pub grid: Grid<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> Field<S> {
    pub fn new(grid: Grid<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid<S>) -> Self {
        Field {
            grid,
            values: vec![S::zero(); grid.len()],
        }
    }

    pub fn constant(grid: Grid<S>, c: S) -> Self {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn center(&self) -> S {
        self.values[self.grid.center_index()]
    }

    pub fn map<F: Fn(S) -> S>(&self, f: F) -> Self {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(S, S) -> S>(&self, other: &Self, f: F) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rules() {
        assert!(Grid::<f64>::new(1, 10.0, 16).is_err());
        assert!(Grid::<f64>::new(1, 10.0, 18).is_err());
        assert!(Grid::<f64>::new(3, 10.0, 17).is_err());
        assert!(Grid::<f64>::new(1, -1.0, 17).is_err());
        let g = Grid::<f64>::new(1, 8.0, 17).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.node(8), 0.0);
        assert_eq!(g.node(0), -8.0);
        assert_eq!(g.node(16), 8.0);
    }

    #[test]
    fn two_dim_layout() {
        let g = Grid::<f64>::new(2, 2.0, 17).unwrap();
        assert_eq!(g.len(), 289);
        assert_eq!(g.coords(g.center_index()), [0.0, 0.0]);
        assert_eq!(g.coords(1), [-2.0, -1.75]);
        assert!(g.is_boundary(0) && !g.is_boundary(g.center_index()));
        let total: f64 = (0..g.len()).map(|k| g.quad_weight(k)).sum();
        assert!((total - 16.0).abs() < 1e-12);
    }

    #[test]
    fn field_checks() {
        let g = Grid::<f64>::new(1, 1.0, 17).unwrap();
        assert!(Field::new(g, vec![0.0; 3]).is_err());
        let f = g.sample(|y| y[0] * y[0]);
        assert_eq!(f.center(), 0.0);
        assert_eq!(f.sup_abs(), 1.0);
        assert!(f.is_finite());
        assert!(!f.map(|v| v / 0.0).is_finite());
    }
}
