//! Rescaled Hermite polynomials, the Gaussian weight, projections and the operator 𝓛.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::scalar::Scalar;

pub const HERMITE_MAX_ORDER: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    components: Vec<usize>,
}

impl MultiIndex {
    pub fn new(components: Vec<usize>) -> Self {
        MultiIndex { components }
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn order(&self) -> usize {
        self.components.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

pub fn hermite<S: Scalar>(m: usize, y: S) -> Result<S> {
    if m > HERMITE_MAX_ORDER {
        return Err(Error::InvalidParam(format!(
            "Hermite order {m} exceeds {HERMITE_MAX_ORDER}"
        )));
    }
    Ok(hermite_unchecked(m, y))
}

/// h_{m+1} = y h_m − 2m h_{m−1}.
pub(crate) fn hermite_unchecked<S: Scalar>(m: usize, y: S) -> S {
    let (mut prev, mut cur) = (S::one(), y);
    if m == 0 {
        return prev;
    }
    for k in 1..m {
        let next = y * cur - S::lit(2.0 * k as f64) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

pub fn hermite_multi<S: Scalar>(beta: &MultiIndex, y: &[S]) -> Result<S> {
    if beta.dim() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.dim(),
            got: y.len(),
        });
    }
    let mut out = S::one();
    for (&m, &yi) in beta.components.iter().zip(y) {
        out *= hermite(m, yi)?;
    }
    Ok(out)
}

pub fn weight_rho<S: Scalar>(y: &[S]) -> S {
    let r2: S = y.iter().map(|&v| v * v).sum();
    let four_pi = S::lit(4.0) * S::PI();
    (-r2 / S::lit(4.0)).exp() / four_pi.powf(S::lit(y.len() as f64 / 2.0))
}

pub fn norm_h_beta_sq<S: Scalar>(beta: &MultiIndex) -> S {
    let mut out = S::one();
    for &m in &beta.components {
        for k in 1..=m {
            out *= S::lit(2.0 * k as f64);
        }
    }
    out
}

/// ∫ f g ρ by the trapezoid rule on the field's grid.
pub fn weighted_integral<S: Scalar, G: Fn(&[S]) -> S>(field: &Field<S>, g: G) -> S {
    let grid = &field.grid;
    let mut acc = S::zero();
    for k in 0..grid.len() {
        let y = grid.point(k);
        acc += grid.quad_weight(k) * field.values[k] * g(&y) * weight_rho(&y);
    }
    acc
}

/// Coefficient of h_β in the L²_ρ expansion of `field`.
pub fn project<S: Scalar>(field: &Field<S>, beta: &MultiIndex) -> Result<S> {
    let grid = &field.grid;
    if beta.dim() != grid.n_dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_dim(),
            got: beta.dim(),
        });
    }
    if beta.order() > HERMITE_MAX_ORDER {
        return Err(Error::InvalidParam(format!(
            "Hermite order {} too large",
            beta.order()
        )));
    }
    let tail = grid.gaussian_tail(2 * beta.order());
    if tail > S::lit(1e-12) {
        log::warn!(
            "grid half-width {} too narrow for order {} projection: tail bound {:e}",
            grid.half_width(),
            beta.order(),
            tail.as_f64()
        );
    }
    let integral = weighted_integral(field, |y| {
        beta.components
            .iter()
            .zip(y)
            .fold(S::one(), |acc, (&m, &yi)| acc * hermite_unchecked(m, yi))
    });
    Ok(integral / norm_h_beta_sq(beta))
}

/// First and second derivative stencils along one axis at position `i` of a line of length `n`.
fn line_derivatives<S: Scalar>(line: &dyn Fn(usize) -> S, i: usize, n: usize, h: S) -> (S, S) {
    let two = S::lit(2.0);
    let h2 = h * h;
    if i == 0 {
        let (f0, f1, f2, f3) = (line(0), line(1), line(2), line(3));
        let d1 = (-S::lit(3.0) * f0 + S::lit(4.0) * f1 - f2) / (two * h);
        let d2 = (two * f0 - S::lit(5.0) * f1 + S::lit(4.0) * f2 - f3) / h2;
        (d1, d2)
    } else if i == n - 1 {
        let (f0, f1, f2, f3) = (line(n - 1), line(n - 2), line(n - 3), line(n - 4));
        let d1 = (S::lit(3.0) * f0 - S::lit(4.0) * f1 + f2) / (two * h);
        let d2 = (two * f0 - S::lit(5.0) * f1 + S::lit(4.0) * f2 - f3) / h2;
        (d1, d2)
    } else {
        let (fm, f0, fp) = (line(i - 1), line(i), line(i + 1));
        ((fp - fm) / (two * h), (fp - two * f0 + fm) / h2)
    }
}

/// 𝓛f = Δf − (y/2)·∇f + f; second order, one-sided at the outermost node of each axis.
pub fn apply_l<S: Scalar>(field: &Field<S>) -> Field<S> {
    let grid = field.grid;
    let n = grid.points();
    let h = grid.spacing();
    let half = S::lit(0.5);
    let v = &field.values;
    let mut out = vec![S::zero(); grid.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let [i, j] = grid.unflatten(k);
        let [yi, yj] = grid.coords(k);
        let mut acc = v[k];
        if grid.n_dim() == 1 {
            let (d1, d2) = line_derivatives(&|a| v[a], i, n, h);
            acc += d2 - half * yi * d1;
        } else {
            let (d1, d2) = line_derivatives(&|a| v[a * n + j], i, n, h);
            acc += d2 - half * yi * d1;
            let (e1, e2) = line_derivatives(&|b| v[i * n + b], j, n, h);
            acc += e2 - half * yj * e1;
        }
        *o = acc;
    }
    Field { grid, values: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 3.5f64).unwrap(), 1.0);
        assert_eq!(hermite(2, 3.0f64).unwrap(), 7.0);
        assert_eq!(hermite(3, 2.0f64).unwrap(), -4.0);
        assert!(hermite(31, 1.0f64).is_err());
        assert_eq!(hermite(30, 0.0f64).unwrap(), hermite_unchecked(30, 0.0));
    }

    #[test]
    fn multi_index() {
        let b = MultiIndex::new(vec![2, 0]);
        assert_eq!(b.order(), 2);
        assert_eq!(
            hermite_multi(&MultiIndex::new(vec![0, 0]), &[0.3, -2.0]).unwrap(),
            1.0
        );
        assert_eq!(hermite_multi(&b, &[1.0, 5.0]).unwrap(), -1.0);
        assert_eq!(
            hermite_multi(&MultiIndex::new(vec![1, 1]), &[2.0, 3.0]).unwrap(),
            6.0
        );
        assert!(hermite_multi(&b, &[1.0f64]).is_err());
    }

    #[test]
    fn weight_and_norms() {
        assert_relative_eq!(weight_rho(&[0.0f64]), 0.2820948, epsilon = 1e-7);
        assert_relative_eq!(weight_rho(&[0.0f64, 0.0]), 0.0795775, epsilon = 1e-7);
        let y = [0.7f64, -1.9];
        assert_relative_eq!(
            weight_rho(&y),
            weight_rho(&y[..1]) * weight_rho(&y[1..]),
            max_relative = 1e-15
        );
        assert_eq!(norm_h_beta_sq::<f64>(&MultiIndex::new(vec![0])), 1.0);
        assert_eq!(norm_h_beta_sq::<f64>(&MultiIndex::new(vec![2])), 8.0);
        assert_eq!(norm_h_beta_sq::<f64>(&MultiIndex::new(vec![2, 1])), 16.0);

        let g = Grid::<f64>::new(1, 20.0, 801).unwrap();
        let one = Field::constant(g, 1.0);
        assert_relative_eq!(weighted_integral(&one, |_| 1.0), 1.0, epsilon = 1e-13);
        let g2 = Grid::<f64>::new(2, 16.0, 161).unwrap();
        let one2 = Field::constant(g2, 1.0);
        assert_relative_eq!(weighted_integral(&one2, |_| 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_examples() {
        let g = Grid::<f64>::new(1, 20.0, 1025).unwrap();
        let h2 = g.sample(|y| hermite_unchecked(2, y[0]));
        let y2 = g.sample(|y| y[0] * y[0]);
        let b0 = MultiIndex::new(vec![0]);
        let b2 = MultiIndex::new(vec![2]);
        assert!((project(&h2, &b2).unwrap() - 1.0).abs() < 1e-8);
        assert!(project(&h2, &b0).unwrap().abs() < 1e-8);
        assert!((project(&y2, &b2).unwrap() - 1.0).abs() < 1e-8);
        assert!((project(&y2, &b0).unwrap() - 2.0).abs() < 1e-8);
        assert!(project(&y2, &MultiIndex::new(vec![2, 0])).is_err());
    }

    #[test]
    fn two_dim_projection() {
        let g = Grid::<f64>::new(2, 16.0, 257).unwrap();
        let f = g.sample(|y| hermite_unchecked(2, y[0]) * hermite_unchecked(1, y[1]));
        assert!((project(&f, &MultiIndex::new(vec![2, 1])).unwrap() - 1.0).abs() < 1e-8);
        assert!(project(&f, &MultiIndex::new(vec![1, 2])).unwrap().abs() < 1e-8);
    }

    #[test]
    fn eigenfunctions_2d() {
        let g = Grid::<f64>::new(2, 8.0, 129).unwrap();
        let h = g.spacing();
        let f = g.sample(|y| hermite_unchecked(2, y[0]) * hermite_unchecked(1, y[1]));
        let lf = apply_l(&f);
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..g.len() {
            let [a, b] = g.coords(k);
            if a.abs() <= 4.0 && b.abs() <= 4.0 {
                err = err.max((lf.values[k] + 0.5 * f.values[k]).abs());
                scale = scale.max(f.values[k].abs());
            }
        }
        assert!(err / scale < 10.0 * h * h, "{}", err / scale);
    }

    #[test]
    fn f32_path() {
        assert_eq!(hermite(2, 3.0f32).unwrap(), 7.0);
        let g = Grid::<f32>::new(1, 16.0, 513).unwrap();
        let h2 = g.sample(|y| hermite_unchecked(2, y[0]));
        let c = project(&h2, &MultiIndex::new(vec![2])).unwrap();
        assert!((c - 1.0).abs() < 1e-4);
    }
}
