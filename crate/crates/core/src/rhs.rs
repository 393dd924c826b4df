//! Right-hand-side ingredients of the w- and q-systems.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::{norm_sq, phi1_radial, phi2_radial, Params, P_MAX};
use crate::scalar::Scalar;

const fn binomial_table() -> [[u64; 10]; 10] {
    let mut t = [[0u64; 10]; 10];
    let mut n = 0;
    while n < 10 {
        t[n][0] = 1;
        let mut k = 1;
        while k <= n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0 };
            k += 1;
        }
        n += 1;
    }
    t
}

pub const BINOMIAL: [[u64; 10]; 10] = binomial_table();

fn binom<S: Scalar>(n: u32, k: u32) -> S {
    debug_assert!(n <= P_MAX);
    S::lit(BINOMIAL[n as usize][k as usize] as f64)
}

fn sign<S: Scalar>(j: u32) -> S {
    if j.is_multiple_of(2) {
        S::one()
    } else {
        -S::one()
    }
}

/// Real and imaginary parts of (u1 + i u2)ᵖ as binomial sums.
pub fn f1f2<S: Scalar>(u1: S, u2: S, p: u32) -> (S, S) {
    let mut re = S::zero();
    for j in 0..=p / 2 {
        re += binom::<S>(p, 2 * j)
            * sign::<S>(j)
            * u1.powi((p - 2 * j) as i32)
            * u2.powi(2 * j as i32);
    }
    let mut im = S::zero();
    for j in 0..=(p - 1) / 2 {
        im += binom::<S>(p, 2 * j + 1)
            * sign::<S>(j)
            * u1.powi((p - 2 * j - 1) as i32)
            * u2.powi((2 * j + 1) as i32);
    }
    (re, im)
}

/// Σ_{k≥2} C(p,k) a^{p−k} qᵏ: the Taylor remainder of zᵖ at a, free of cancellation.
fn power_remainder<S: Scalar>(a: Complex<S>, q: Complex<S>, p: u32) -> Complex<S> {
    let mut acc = Complex::new(S::zero(), S::zero());
    let mut qk = q * q;
    for k in 2..=p {
        acc += qk * a.powu(p - k) * binom::<S>(p, k);
        qk *= q;
    }
    acc
}

/// (B̄₁, B̄₂): the nonlinearity about κ with the linear part removed.
pub fn bar_b<S: Scalar>(w1bar: S, w2: S, params: &Params<S>) -> (S, S) {
    let r = power_remainder(
        Complex::new(params.kappa, S::zero()),
        Complex::new(w1bar, w2),
        params.p,
    );
    (r.re, r.im)
}

pub fn potential_v<S: Scalar>(y: &[S], s: S, params: &Params<S>) -> S {
    potential_v_radial(norm_sq(y), s, params)
}

pub(crate) fn potential_v_radial<S: Scalar>(r2: S, s: S, params: &Params<S>) -> S {
    let phi = phi1_radial(r2, s, params);
    params.ps() * (phi.powi(params.p as i32 - 1) - params.pm1().recip())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossPotentials<S> {
    pub v11: S,
    pub v12: S,
    pub v21: S,
    pub v22: S,
}

/// Binomial-sum potentials at given profile values (Φ₁, Φ₂).
pub fn potentials_at<S: Scalar>(phi1: S, phi2: S, p: u32) -> CrossPotentials<S> {
    let pw = |x: S, e: i64| if e == 0 { S::one() } else { x.powi(e as i32) };
    let pi = i64::from(p);
    let mut v = CrossPotentials {
        v11: S::zero(),
        v12: S::zero(),
        v21: S::zero(),
        v22: S::zero(),
    };
    for j in 1..=p / 2 {
        let ji = i64::from(j);
        let c = binom::<S>(p, 2 * j) * sign::<S>(j);
        let f11 = pi - 2 * ji;
        if f11 != 0 {
            v.v11 += c * S::lit(f11 as f64) * pw(phi1, pi - 2 * ji - 1) * pw(phi2, 2 * ji);
        }
        v.v12 += c * S::lit(2.0 * j as f64) * pw(phi1, pi - 2 * ji) * pw(phi2, 2 * ji - 1);
    }
    for j in 0..=(p - 1) / 2 {
        let ji = i64::from(j);
        let c = binom::<S>(p, 2 * j + 1) * sign::<S>(j);
        let f21 = pi - 2 * ji - 1;
        if f21 != 0 {
            v.v21 += c * S::lit(f21 as f64) * pw(phi1, pi - 2 * ji - 2) * pw(phi2, 2 * ji + 1);
        }
        if j >= 1 {
            v.v22 += c * S::lit((2 * j + 1) as f64) * pw(phi1, pi - 2 * ji - 1) * pw(phi2, 2 * ji);
        }
    }
    v
}

pub fn potentials_vjk<S: Scalar>(y: &[S], s: S, params: &Params<S>) -> CrossPotentials<S> {
    let r2 = norm_sq(y);
    potentials_at(
        phi1_radial(r2, s, params),
        phi2_radial(r2, s, params),
        params.p,
    )
}

/// (B₁, B₂) at explicit profile values.
pub fn quadratic_b_at<S: Scalar>(q1: S, q2: S, phi1: S, phi2: S, p: u32) -> (S, S) {
    let r = power_remainder(Complex::new(phi1, phi2), Complex::new(q1, q2), p);
    (r.re, r.im)
}

pub fn quadratic_b<S: Scalar>(q1: S, q2: S, y: &[S], s: S, params: &Params<S>) -> (S, S) {
    let r2 = norm_sq(y);
    quadratic_b_at(
        q1,
        q2,
        phi1_radial(r2, s, params),
        phi2_radial(r2, s, params),
        params.p,
    )
}

/// Radial derivatives of the profiles: (value, d/dr2, d²/dr2², ∂ₛ) for Φ₁ and Φ₂.
#[derive(Debug, Clone, Copy)]
pub struct ProfileJet<S> {
    pub phi1: [S; 4],
    pub phi2: [S; 4],
}

pub fn profile_jet<S: Scalar>(r2: S, s: S, params: &Params<S>) -> ProfileJet<S> {
    let pm1 = params.pm1();
    let n = params.ns();
    let kappa = params.kappa;
    let (one, two) = (S::one(), S::lit(2.0));
    let bs = params.b / s;
    let d = pm1 + bs * r2;
    let alpha = pm1.recip();
    let beta = params.ps() / pm1;

    let da = d.powf(-alpha);
    let phi1 = [
        da + n * kappa / (two * params.ps() * s),
        -alpha * bs * da / d,
        alpha * (alpha + one) * bs * bs * da / (d * d),
        alpha * params.b * r2 / (s * s) * da / d - n * kappa / (two * params.ps() * s * s),
    ];

    let db = d.powf(-beta);
    let s2 = s * s;
    let g1 = db - beta * bs * r2 * db / d;
    let g2 = -two * beta * bs * db / d + beta * (beta + one) * bs * bs * r2 * db / (d * d);
    let phi2 = [
        r2 * db / s2 - two * n * kappa / (pm1 * s2),
        g1 / s2,
        g2 / s2,
        -two * r2 * db / (s2 * s)
            + beta * params.b * r2 * r2 / (s2 * s2) * db / d
            + S::lit(4.0) * n * kappa / (pm1 * s2 * s),
    ];
    ProfileJet { phi1, phi2 }
}

/// Profile residuals (R₁, R₂) = 𝒫Φ + F(Φ) − ∂ₛΦ with 𝒫 = Δ − y/2·∇ − 1/(p−1).
pub fn rest_r<S: Scalar>(y: &[S], s: S, params: &Params<S>) -> (S, S) {
    rest_r_radial(norm_sq(y), s, params)
}

pub(crate) fn rest_r_radial<S: Scalar>(r2: S, s: S, params: &Params<S>) -> (S, S) {
    let jet = profile_jet(r2, s, params);
    let n = params.ns();
    let (two, four) = (S::lit(2.0), S::lit(4.0));
    let inv = params.pm1().recip();
    let lin = |j: [S; 4]| {
        let lap = four * r2 * j[2] + two * n * j[1];
        let drift = two * r2 * j[1];
        lap - drift / two - j[0] * inv - j[3]
    };
    let (f1, f2) = f1f2(jet.phi1[0], jet.phi2[0], params.p);
    (lin(jet.phi1) + f1, lin(jet.phi2) + f2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    /// Smooth step ψ(2−x)/(ψ(2−x)+ψ(x−1)) with ψ(x) = e^{−1/x}.
    #[default]
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec<S> {
    pub k: S,
    pub kind: CutoffKind,
}

pub fn chi0<S: Scalar>(x: S) -> S {
    if x <= S::one() {
        return S::one();
    }
    let two = S::lit(2.0);
    if x >= two {
        return S::zero();
    }
    let psi = |t: S| {
        if t > S::zero() {
            (-t.recip()).exp()
        } else {
            S::zero()
        }
    };
    let a = psi(two - x);
    a / (a + psi(x - S::one()))
}

pub fn cutoff_chi<S: Scalar>(y: &[S], s: S, spec: &CutoffSpec<S>) -> S {
    chi0(norm_sq(y).sqrt() / (spec.k * s.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataParams<S> {
    pub a: S,
    pub s0: S,
    pub p1: S,
    pub d1_0: S,
    pub d1_1: Vec<S>,
    pub d2_0: S,
    pub d2_1: Vec<S>,
    /// Row-major symmetric n×n matrix.
    pub d2_2: Vec<Vec<S>>,
}

impl<S: Scalar> InitialDataParams<S> {
    pub fn zero(a: S, s0: S, p1: S, n_dim: usize) -> Self {
        InitialDataParams {
            a,
            s0,
            p1,
            d1_0: S::zero(),
            d1_1: vec![S::zero(); n_dim],
            d2_0: S::zero(),
            d2_1: vec![S::zero(); n_dim],
            d2_2: vec![vec![S::zero(); n_dim]; n_dim],
        }
    }

    pub fn validate(&self, n_dim: usize) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.a >= S::one()) {
            errs.push(format!("A = {} must be >= 1", self.a));
        }
        if !(self.s0 >= S::one()) {
            errs.push(format!("s0 = {} must be >= 1", self.s0));
        }
        if !(self.p1 > S::zero() && self.p1 < S::one()) {
            errs.push(format!("p1 = {} must lie in (0, 1)", self.p1));
        }
        if self.d1_1.len() != n_dim || self.d2_1.len() != n_dim || self.d2_2.len() != n_dim {
            errs.push(format!("d vectors/matrix must have dimension {n_dim}"));
        } else {
            for (j, row) in self.d2_2.iter().enumerate() {
                if row.len() != n_dim {
                    errs.push(format!("d2_2 row {j} has length {}", row.len()));
                } else {
                    for (k, &v) in row.iter().enumerate() {
                        if (v - self.d2_2[k][j]).abs() > S::epsilon() * S::lit(16.0) {
                            errs.push(format!("d2_2 not symmetric at ({j}, {k})"));
                        }
                    }
                }
            }
        }
        let two = S::lit(2.0);
        let all = [self.d1_0, self.d2_0]
            .into_iter()
            .chain(self.d1_1.iter().copied())
            .chain(self.d2_1.iter().copied())
            .chain(self.d2_2.iter().flatten().copied());
        if all.into_iter().any(|v| !(v.abs() <= two)) {
            errs.push("all d parameters must satisfy |d| <= 2".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParam(errs.join("; ")))
        }
    }
}

/// Perturbations (φ₁, φ₂) at s₀; the w initial data is Φ(·, s₀) plus these.
pub fn initial_data<S: Scalar>(
    grid: &Grid<S>,
    idp: &InitialDataParams<S>,
    spec: &CutoffSpec<S>,
    params: &Params<S>,
) -> Result<(Field<S>, Field<S>)> {
    let n = grid.n_dim();
    if n != params.n_dim {
        return Err(Error::DimensionMismatch {
            expected: params.n_dim,
            got: n,
        });
    }
    idp.validate(n)?;
    let s0 = idp.s0;
    grid.require_coverage(S::lit(2.0) * spec.k * s0.sqrt())?;
    let a = idp.a;
    let sp = s0.powf(idp.p1 + S::lit(2.0));
    let c1 = a / (s0 * s0);
    let c2 = a * a / sp;
    let c22 = a.powi(5) * s0.ln() / sp;
    let trace: S = (0..n).map(|j| idp.d2_2[j][j]).sum();
    let mut q1 = Field::zeros(*grid);
    let mut q2 = Field::zeros(*grid);
    for k in 0..grid.len() {
        let y = grid.point(k);
        let y2: Vec<S> = y.iter().map(|&v| S::lit(2.0) * v).collect();
        let chi = cutoff_chi(&y2, s0, spec);
        if chi == S::zero() {
            continue;
        }
        let dot = |d: &[S]| d.iter().zip(&y).map(|(&a, &b)| a * b).sum::<S>();
        let mut quad = S::zero();
        for j in 0..n {
            for l in 0..n {
                quad += y[j] * idp.d2_2[j][l] * y[l];
            }
        }
        q1.values[k] = c1 * (idp.d1_0 + dot(&idp.d1_1)) * chi;
        q2.values[k] =
            (c2 * (idp.d2_0 + dot(&idp.d2_1)) + c22 * (quad - S::lit(2.0) * trace)) * chi;
    }
    Ok((q1, q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;
    use approx::assert_relative_eq;

    #[test]
    fn binomials() {
        assert_eq!(BINOMIAL[9], [1, 9, 36, 84, 126, 126, 84, 36, 9, 1]);
        assert_eq!(BINOMIAL[4][2], 6);
    }

    #[test]
    fn complex_power_examples() {
        assert_eq!(f1f2(2.0f64, 1.0, 2), (3.0, 4.0));
        assert_eq!(f1f2(1.0f64, 1.0, 3), (-2.0, 2.0));
        assert_eq!(f1f2(1.0f64, 1.0, 5), (-4.0, -4.0));
        assert_eq!(f1f2(1.7f64, 0.0, 4), (1.7f64.powi(4), 0.0));
    }

    #[test]
    fn bar_b_examples() {
        let p: Params<f64> = make_params(2, 1).unwrap();
        assert_eq!(bar_b(0.0, 0.0, &p), (0.0, 0.0));
        let (b1, b2) = bar_b(0.1, 0.0, &p);
        assert_relative_eq!(b1, 0.01, epsilon = 1e-16);
        assert_eq!(b2, 0.0);
        let (b1, b2) = bar_b(0.1, 0.2, &p);
        assert_relative_eq!(b1, -0.03, epsilon = 1e-16);
        assert_relative_eq!(b2, 0.04, epsilon = 1e-16);
    }

    #[test]
    fn potential_examples() {
        let p: Params<f64> = make_params(2, 1).unwrap();
        assert_relative_eq!(potential_v(&[0.0], 10.0, &p), 0.05, epsilon = 1e-14);
        let v = potentials_vjk(&[0.0], 10.0, &p);
        assert_relative_eq!(v.v12, 0.04, epsilon = 1e-15);
        assert_relative_eq!(v.v21, -0.04, epsilon = 1e-15);
        assert_eq!((v.v11, v.v22), (0.0, 0.0));
    }

    #[test]
    fn potentials_are_jacobian_entries() {
        for p in 2..=9u32 {
            let (a, b) = (0.83f64, 0.21);
            let v = potentials_at(a, b, p);
            let h = 1e-6;
            let d1 = |f: &dyn Fn(f64, f64) -> f64| (f(a + h, b) - f(a - h, b)) / (2.0 * h);
            let d2 = |f: &dyn Fn(f64, f64) -> f64| (f(a, b + h) - f(a, b - h)) / (2.0 * h);
            let re = |x, y| f1f2(x, y, p).0;
            let im = |x, y| f1f2(x, y, p).1;
            let pa = f64::from(p) * a.powi(p as i32 - 1);
            assert_relative_eq!(v.v11 + pa, d1(&re), max_relative = 1e-8);
            assert_relative_eq!(v.v12, d2(&re), max_relative = 1e-8);
            assert_relative_eq!(v.v21, d1(&im), max_relative = 1e-8);
            assert_relative_eq!(v.v22 + pa, d2(&im), max_relative = 1e-8);
        }
    }

    #[test]
    fn quadratic_terms() {
        let p: Params<f64> = make_params(2, 1).unwrap();
        assert_eq!(quadratic_b(0.0, 0.0, &[1.0], 10.0, &p), (0.0, 0.0));
        let (q1, q2) = (0.3, -0.7);
        let (b1, b2) = quadratic_b(q1, q2, &[2.0], 12.0, &p);
        assert_relative_eq!(b1, q1 * q1 - q2 * q2, epsilon = 1e-15);
        assert_relative_eq!(b2, 2.0 * q1 * q2, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_against_definition() {
        for pp in 2..=7u32 {
            let p: Params<f64> = make_params(pp, 2).unwrap();
            let (y, s) = ([1.1, -0.4], 7.0);
            let (q1, q2) = (0.4, -0.25);
            let r2 = 1.1f64 * 1.1 + 0.16;
            let (a, b) = (phi1_radial(r2, s, &p), phi2_radial(r2, s, &p));
            let v = potentials_at(a, b, pp);
            let pa = p.ps() * a.powi(pp as i32 - 1);
            let (f1q, f2q) = f1f2(a + q1, b + q2, pp);
            let (f1, f2) = f1f2(a, b, pp);
            let e1 = f1q - f1 - (pa + v.v11) * q1 - v.v12 * q2;
            let e2 = f2q - f2 - v.v21 * q1 - (pa + v.v22) * q2;
            let (b1, b2) = quadratic_b(q1, q2, &y, s, &p);
            assert_relative_eq!(b1, e1, epsilon = 1e-12);
            assert_relative_eq!(b2, e2, epsilon = 1e-12);
        }
    }

    #[test]
    fn cutoff_values() {
        let spec = CutoffSpec {
            k: 5.0f64,
            kind: CutoffKind::Exponential,
        };
        let s = 16.0f64;
        let ks = 5.0 * 4.0;
        assert_eq!(cutoff_chi(&[0.5 * ks], s, &spec), 1.0);
        assert_eq!(cutoff_chi(&[3.0 * ks], s, &spec), 0.0);
        let mid = cutoff_chi(&[1.5 * ks], s, &spec);
        assert!(mid > 0.0 && mid < 1.0);
        assert_relative_eq!(mid, 0.5, epsilon = 1e-15);
        assert!(cutoff_chi(&[1.4 * ks], s, &spec) > cutoff_chi(&[1.6 * ks], s, &spec));
    }

    #[test]
    fn initial_data_examples() {
        let p: Params<f64> = make_params(2, 1).unwrap();
        let spec = CutoffSpec {
            k: 5.0,
            kind: CutoffKind::Exponential,
        };
        let g = Grid::new(1, 60.0, 1201).unwrap();
        let mut idp = InitialDataParams::zero(10.0, 25.0, 0.5, 1);
        let (q1, q2) = initial_data(&g, &idp, &spec, &p).unwrap();
        assert_eq!(q1.sup_abs() + q2.sup_abs(), 0.0);
        idp.d1_0 = 1.0;
        idp.d2_2 = vec![vec![1.0]];
        let (q1, q2) = initial_data(&g, &idp, &spec, &p).unwrap();
        assert_relative_eq!(q1.center(), 10.0 / 625.0, epsilon = 1e-16);
        let c22 = 1e5 * 25f64.ln() / 25f64.powf(2.5);
        assert_relative_eq!(q2.center(), -2.0 * c22, max_relative = 1e-14);
        let support = 5.0 * 5.0;
        for k in 0..g.len() {
            if g.node(k).abs() > support {
                assert_eq!((q1.values[k], q2.values[k]), (0.0, 0.0));
            }
        }
        let narrow = Grid::new(1, 40.0, 801).unwrap();
        assert!(matches!(
            initial_data(&narrow, &idp, &spec, &p),
            Err(Error::GridTooNarrow { .. })
        ));
        idp.d1_0 = 3.0;
        assert!(initial_data(&g, &idp, &spec, &p).is_err());
    }

    #[test]
    fn jet_matches_profiles() {
        let p: Params<f64> = make_params(3, 2).unwrap();
        let (r2, s) = (2.3, 9.0);
        let j = profile_jet(r2, s, &p);
        assert_relative_eq!(j.phi1[0], phi1_radial(r2, s, &p), epsilon = 1e-15);
        assert_relative_eq!(j.phi2[0], phi2_radial(r2, s, &p), epsilon = 1e-15);
        let h = 1e-5;
        let fd = |f: &dyn Fn(f64, f64) -> f64| (f(r2 + h, s) - f(r2 - h, s)) / (2.0 * h);
        let fs = |f: &dyn Fn(f64, f64) -> f64| (f(r2, s + h) - f(r2, s - h)) / (2.0 * h);
        let a = |r: f64, s: f64| phi1_radial(r, s, &p);
        let b = |r: f64, s: f64| phi2_radial(r, s, &p);
        assert_relative_eq!(j.phi1[1], fd(&a), max_relative = 1e-8);
        assert_relative_eq!(j.phi2[1], fd(&b), max_relative = 1e-8);
        assert_relative_eq!(j.phi1[3], fs(&a), max_relative = 1e-7);
        assert_relative_eq!(j.phi2[3], fs(&b), max_relative = 1e-7);
    }
}
