//! Model constants, closed-form profiles and exact solutions.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const P_MAX: u32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params<S> {
    pub p: u32,
    pub n_dim: usize,
    pub kappa: S,
    pub b: S,
}

pub fn make_params<S: Scalar>(p: u32, n_dim: usize) -> Result<Params<S>> {
    if p < 2 {
        return Err(Error::InvalidParam(format!("p = {p}, need p >= 2")));
    }
    if p > P_MAX {
        return Err(Error::InvalidParam(format!(
            "p = {p}, supported range is 2..={P_MAX}"
        )));
    }
    if n_dim < 1 {
        return Err(Error::InvalidParam("n_dim must be >= 1".into()));
    }
    let pm1 = S::lit(f64::from(p - 1));
    let kappa = pm1.powf(-pm1.recip());
    let b = pm1 * pm1 / (S::lit(4.0) * S::lit(f64::from(p)));
    Ok(Params { p, n_dim, kappa, b })
}

impl<S: Scalar> Params<S> {
    pub fn ps(&self) -> S {
        S::lit(f64::from(self.p))
    }

    /// p − 1 as a scalar.
    pub fn pm1(&self) -> S {
        S::lit(f64::from(self.p - 1))
    }

    pub fn ns(&self) -> S {
        S::from_usize_lossy(self.n_dim)
    }

    /// κᵖ, equal to κ/(p−1).
    pub fn kappa_p(&self) -> S {
        self.kappa.powi(self.p as i32)
    }

    /// The quadratic base p − 1 + b z².
    pub fn base(&self, z2: S) -> S {
        self.pm1() + self.b * z2
    }
}

pub fn f0<S: Scalar>(z2: S, params: &Params<S>) -> S {
    params.base(z2).powf(-params.pm1().recip())
}

pub fn g0<S: Scalar>(z2: S, params: &Params<S>) -> S {
    z2 * params.base(z2).powf(-params.ps() / params.pm1())
}

pub(crate) fn norm_sq<S: Scalar>(y: &[S]) -> S {
    y.iter().map(|&v| v * v).sum()
}

fn check_s<S: Scalar>(s: S) -> Result<()> {
    if s > S::zero() {
        Ok(())
    } else {
        Err(Error::Domain(format!("s = {s} must be positive")))
    }
}

/// Φ₁ as a function of r2 = |y|².
pub fn phi1_radial<S: Scalar>(r2: S, s: S, params: &Params<S>) -> S {
    f0(r2 / s, params) + params.ns() * params.kappa / (S::lit(2.0) * params.ps() * s)
}

/// Φ₂ as a function of r2 = |y|².
pub fn phi2_radial<S: Scalar>(r2: S, s: S, params: &Params<S>) -> S {
    let beta = params.ps() / params.pm1();
    r2 / (s * s) * params.base(r2 / s).powf(-beta)
        - S::lit(2.0) * params.ns() * params.kappa / (params.pm1() * s * s)
}

pub fn phi1<S: Scalar>(y: &[S], s: S, params: &Params<S>) -> Result<S> {
    check_s(s)?;
    Ok(phi1_radial(norm_sq(y), s, params))
}

pub fn phi2<S: Scalar>(y: &[S], s: S, params: &Params<S>) -> Result<S> {
    check_s(s)?;
    Ok(phi2_radial(norm_sq(y), s, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuterTerm {
    R10,
    R11,
    R21,
    R22,
}

/// Coefficients of the second-order imaginary outer term.
///
/// With D = p−1+bz²:
/// R22 = −2D^{-p/(p-1)} + c21 z²D^{-(2p-1)/(p-1)} + c23a z² ln D D^{-p/(p-1)}
///       + c23b z² ln D D^{-(2p-1)/(p-1)} + c_hom z²D^{-p/(p-1)}.
/// `c_hom` multiplies the homogeneous solution and is conventionally zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R22Constants<S> {
    pub c21: S,
    pub c23a: S,
    pub c23b: S,
    pub c_hom: S,
}

pub fn outer_r<S: Scalar>(
    which: OuterTerm,
    z: S,
    params: &Params<S>,
    consts: Option<&R22Constants<S>>,
) -> Result<S> {
    let pm1 = params.pm1();
    let p = params.ps();
    let z2 = z * z;
    let d = params.base(z2);
    let dp = d.powf(-p / pm1);
    Ok(match which {
        OuterTerm::R10 => d.powf(-pm1.recip()),
        OuterTerm::R11 => pm1 / (S::lit(2.0) * p) * dp - pm1 / (S::lit(4.0) * p) * z2 * d.ln() * dp,
        OuterTerm::R21 => z2 * dp,
        OuterTerm::R22 => {
            let c = consts.ok_or(Error::ConstantsUnresolved)?;
            let d2 = d.powf(-(S::lit(2.0) * p - S::one()) / pm1);
            let ln = d.ln();
            -S::lit(2.0) * dp
                + c.c21 * z2 * d2
                + c.c23a * z2 * ln * dp
                + c.c23b * z2 * ln * d2
                + c.c_hom * z2 * dp
        }
    })
}

/// κ e^{i2kπ/(p−1)} (T−t)^{−1/(p−1)}.
pub fn exact_constant_solution<S: Scalar>(
    k: i64,
    t: S,
    big_t: S,
    params: &Params<S>,
) -> Result<Complex<S>> {
    if t >= big_t {
        return Err(Error::Domain(format!("t = {t} must be below T = {big_t}")));
    }
    let pm1 = params.pm1();
    let theta = S::lit(2.0 * std::f64::consts::PI * k as f64) / pm1;
    let modulus = params.kappa * (big_t - t).powf(-pm1.recip());
    Ok(Complex::from_polar(modulus, theta))
}

/// Spatially frozen ODE solution used as the intermediate profile.
pub fn hat_uv<S: Scalar>(tau: S, k0: S, params: &Params<S>) -> Result<(S, S)> {
    if !(tau >= S::zero() && tau < S::one()) {
        return Err(Error::Domain(format!("tau = {tau} outside [0, 1)")));
    }
    let pm1 = params.pm1();
    let k02 = k0 * k0;
    let base = pm1 * (S::one() - tau) + params.b * k02;
    Ok((base.powf(-pm1.recip()), k02 * base.powf(-params.ps() / pm1)))
}

/// Leading-order final profile (u₁*, u₂*) at distance `x` from the blow-up point.
pub fn final_profile_prediction<S: Scalar>(x: S, params: &Params<S>) -> Result<(S, S)> {
    if !(x > S::zero() && x < S::one()) {
        return Err(Error::Domain(format!("x = {x} outside (0, 1)")));
    }
    let pm1 = params.pm1();
    let p = params.ps();
    let lnx = x.ln().abs();
    let bracket = pm1 * pm1 * x * x / (S::lit(8.0) * p * lnx);
    let u1 = bracket.powf(-pm1.recip());
    Ok((u1, S::lit(2.0) * p / (pm1 * pm1) * u1 / lnx))
}

/// Solves |x0| = K0 √(θ |ln θ|) for θ = T − t0 ∈ (0, min(T, 1/e)).
pub fn solve_t0_gap<S: Scalar>(x0: S, k0: S, big_t: S) -> Result<S> {
    let target = (x0 / k0).powi(2);
    let g = |theta: S| theta * theta.ln().abs() - target;
    let upper = big_t.min(S::one() / S::E());
    if !(target > S::zero()) || g(upper) < S::zero() {
        return Err(Error::Domain(format!(
            "no t0 with |x0| = {x0}, K0 = {k0}, T = {big_t}"
        )));
    }
    // θ|ln θ| is increasing below 1/e; bisect in ln θ.
    let mut lo = S::min_positive_value().ln();
    let mut hi = upper.ln();
    let tol = S::lit(1e-12) * target;
    for _ in 0..400 {
        let mid = (lo + hi) / S::lit(2.0);
        let r = g(mid.exp());
        if r.abs() <= tol {
            return Ok(mid.exp());
        }
        if r > S::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(((lo + hi) / S::lit(2.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p2() -> Params<f64> {
        make_params(2, 1).unwrap()
    }

    #[test]
    fn constants() {
        let p = p2();
        assert_eq!(p.kappa, 1.0);
        assert_eq!(p.b, 0.125);
        let p3: Params<f64> = make_params(3, 1).unwrap();
        assert_relative_eq!(p3.kappa, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(p3.b, 1.0 / 3.0, epsilon = 1e-16);
        assert!(make_params::<f64>(1, 1).is_err());
        assert!(make_params::<f64>(2, 0).is_err());
        assert!(make_params::<f64>(10, 1).is_err());
        for p in 2..=9 {
            let q: Params<f64> = make_params(p, 1).unwrap();
            let check = f64::from(p - 1) * q.kappa.powi(p as i32 - 1);
            assert!((check - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn profile_values() {
        let p = p2();
        assert_eq!(f0(0.0, &p), 1.0);
        assert_relative_eq!(f0(8.0, &p), 0.5, epsilon = 1e-15);
        assert!(f0(1e30, &p) < 1e-20);
        assert_eq!(g0(0.0, &p), 0.0);
        assert_relative_eq!(g0(1.0, &p), 64.0 / 81.0, epsilon = 1e-15);
        assert_relative_eq!(g0(8.0, &p), 2.0, epsilon = 1e-15);

        assert_relative_eq!(phi1(&[0.0], 10.0, &p).unwrap(), 1.025, epsilon = 1e-15);
        assert_relative_eq!(
            phi1(&[80f64.sqrt()], 10.0, &p).unwrap(),
            0.525,
            epsilon = 1e-14
        );
        assert_relative_eq!(phi2(&[0.0], 10.0, &p).unwrap(), -0.02, epsilon = 1e-15);
        let v = phi2(&[10.0], 100.0, &p).unwrap();
        assert_relative_eq!(
            v,
            1.0 / (100.0 * (9.0f64 / 8.0).powi(2)) - 2e-4,
            epsilon = 1e-15
        );
        assert_relative_eq!(v, 0.0077011, epsilon = 1e-6);
        assert!(phi1(&[0.0], 0.0, &p).is_err());
        assert!(phi2(&[0.0], -1.0, &p).is_err());
    }

    #[test]
    fn outer_terms() {
        let p = p2();
        assert_eq!(outer_r(OuterTerm::R10, 0.0, &p, None).unwrap(), 1.0);
        assert_relative_eq!(
            outer_r(OuterTerm::R21, 8f64.sqrt(), &p, None).unwrap(),
            2.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(outer_r(OuterTerm::R11, 0.0, &p, None).unwrap(), 0.25);
        assert_eq!(
            outer_r(OuterTerm::R22, 1.0, &p, None),
            Err(Error::ConstantsUnresolved)
        );
        let c = R22Constants {
            c21: 0.0,
            c23a: 0.0,
            c23b: 0.0,
            c_hom: 0.0,
        };
        assert_relative_eq!(outer_r(OuterTerm::R22, 0.0, &p, Some(&c)).unwrap(), -2.0);
    }

    #[test]
    fn constant_solution() {
        let p = p2();
        let u = exact_constant_solution(0, 0.0, 1.0, &p).unwrap();
        assert_relative_eq!(u.re, 1.0);
        assert_eq!(u.im, 0.0);
        let u = exact_constant_solution(0, 0.5, 1.0, &p).unwrap();
        assert_relative_eq!(u.re, 2.0);
        let u1 = exact_constant_solution(1, 0.3, 1.0, &p).unwrap();
        let u0 = exact_constant_solution(0, 0.3, 1.0, &p).unwrap();
        assert!((u1 - u0).norm() < 1e-14);
        assert!(exact_constant_solution(0, 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn constant_solution_solves_ode() {
        for pp in [2u32, 3, 5] {
            let p: Params<f64> = make_params(pp, 1).unwrap();
            for k in 0..3 {
                let (t, h) = (0.4, 1e-5);
                let u = |t| exact_constant_solution(k, t, 1.0, &p).unwrap();
                let du = (u(t + h) - u(t - h)) / (2.0 * h);
                let res = (du - u(t).powu(pp)).norm();
                assert!(res < 1e-8, "p={pp} k={k} residual {res}");
            }
        }
    }

    #[test]
    fn hat_uv_values_and_ode() {
        let p = p2();
        let k0 = 8f64.sqrt();
        let (u, v) = hat_uv(0.0, k0, &p).unwrap();
        assert_relative_eq!(u, 0.5, epsilon = 1e-15);
        assert_relative_eq!(v, 2.0, epsilon = 1e-15);
        let (u, v) = hat_uv(1.0 - 1e-13, k0, &p).unwrap();
        assert_relative_eq!(u, 1.0, epsilon = 1e-10);
        assert_relative_eq!(v, 8.0, epsilon = 1e-10);
        assert!(hat_uv(1.0, k0, &p).is_err());
        assert!(hat_uv(-0.1, k0, &p).is_err());

        for pp in [2u32, 3, 4] {
            let p: Params<f64> = make_params(pp, 1).unwrap();
            let k0 = 1.7;
            let (u0, v0) = hat_uv(0.0, k0, &p).unwrap();
            assert_relative_eq!(u0, f0(k0 * k0, &p), epsilon = 1e-14);
            assert_relative_eq!(v0, g0(k0 * k0, &p), epsilon = 1e-14);
            let h = 1e-5;
            for i in 1..9 {
                let tau = 0.1 * f64::from(i);
                let (up, vp) = hat_uv(tau + h, k0, &p).unwrap();
                let (um, vm) = hat_uv(tau - h, k0, &p).unwrap();
                let (u, v) = hat_uv(tau, k0, &p).unwrap();
                let ru = (up - um) / (2.0 * h) - u.powi(pp as i32);
                let rv = (vp - vm) / (2.0 * h) - p.ps() * u.powi(pp as i32 - 1) * v;
                assert!(ru.abs() < 1e-6 && rv.abs() < 1e-6, "tau={tau}: {ru} {rv}");
            }
        }
    }

    #[test]
    fn final_profile() {
        let p = p2();
        let x = (-10f64).exp();
        let (u1, u2) = final_profile_prediction(x, &p).unwrap();
        assert_relative_eq!(u1, 160.0 * 20f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(u2 / u1, 4.0 / 10.0, max_relative = 1e-12);
        assert!(final_profile_prediction(1.0, &p).is_err());
        let (a1, a2) = final_profile_prediction(1e-30, &p).unwrap();
        assert!(a1 > u1 && a2 > u2 && a2 / a1 < u2 / u1);
    }

    #[test]
    fn t0_gap_bisection() {
        let (k0, big_t) = (2.0, (-25f64).exp());
        for x0 in [1e-9, 1e-7, 1e-6] {
            let th = solve_t0_gap(x0, k0, big_t).unwrap();
            let res = k0 * (th * th.ln().abs()).sqrt() - x0;
            assert!(res.abs() / x0 < 1e-11, "x0 {x0}: {res}");
            assert!(th < big_t);
        }
        assert!(solve_t0_gap(1.0, k0, big_t).is_err());
    }
}
