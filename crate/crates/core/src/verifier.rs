//! Numeric certification of the closed-form outer terms, the choice of b, and the
//! asymptotic bounds on B̄, V, B and R, independent of any simulation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::loglog_slope;
use crate::params::{make_params, outer_r, OuterTerm, Params, R22Constants};
use crate::rhs::{bar_b, f1f2, potential_v, potentials_vjk, quadratic_b, rest_r};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub p: u32,
    pub n_dim: usize,
    pub samples: usize,
    pub worst_residual: f64,
    pub fitted_constant: Option<f64>,
    pub pass: bool,
    pub notes: String,
    pub seed: Option<u64>,
    /// Named auxiliary numbers (slopes, fitted coefficients, step sizes).
    pub values: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(name: &str, params: &Params<f64>) -> Self {
        CheckReport {
            check_name: name.to_string(),
            p: params.p,
            n_dim: params.n_dim,
            samples: 0,
            worst_residual: 0.0,
            fitted_constant: None,
            pass: false,
            notes: String::new(),
            seed: None,
            values: BTreeMap::new(),
        }
    }

    fn note(&mut self, s: impl AsRef<str>) {
        if !self.notes.is_empty() {
            self.notes.push_str("; ");
        }
        self.notes.push_str(s.as_ref());
    }
}

pub const OUTER_TOLERANCE: f64 = 1e-9;
pub const R22_TOLERANCE: f64 = 1e-6;
pub const B_SELECTION_TOLERANCE: f64 = 1e-14;
pub const COMPLEX_TOLERANCE: f64 = 1e-12;
pub const LEADING_COEFF_TOLERANCE: f64 = 1e-6;
pub const SLOPE_TOLERANCE: f64 = 0.05;
pub const REST_CONSTANT_TOLERANCE: f64 = 0.01;
/// Normalized sups below this are treated as identically zero.
pub const ZERO_FLOOR: f64 = 1e-200;

/// Differentiation step for the 7-point stencils.
pub fn default_step() -> f64 {
    f64::EPSILON.powf(1.0 / 7.0)
}

pub fn d1_7pt(f: &dyn Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    (-f(z - 3.0 * h) + 9.0 * f(z - 2.0 * h) - 45.0 * f(z - h) + 45.0 * f(z + h)
        - 9.0 * f(z + 2.0 * h)
        + f(z + 3.0 * h))
        / (60.0 * h)
}

pub fn d2_7pt(f: &dyn Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    (2.0 * f(z - 3.0 * h) - 27.0 * f(z - 2.0 * h) + 270.0 * f(z - h) - 490.0 * f(z)
        + 270.0 * f(z + h)
        - 27.0 * f(z + 2.0 * h)
        + 2.0 * f(z + 3.0 * h))
        / (180.0 * h * h)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Least-squares coefficients and max residual of `y ≈ Σ c_k basis_k`.
fn lstsq(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let c = m
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .expect("SVD with vectors");
    let r = (&m * &c - &b).amax();
    (c.iter().copied().collect(), r)
}

/// Residual functions of the four order-by-order outer equations.
struct OuterEquations {
    params: Params<f64>,
    b: f64,
}

impl OuterEquations {
    fn new(params: Params<f64>) -> Self {
        OuterEquations {
            b: params.b,
            params,
        }
    }

    fn pm1(&self) -> f64 {
        f64::from(self.params.p - 1)
    }

    fn p(&self) -> f64 {
        f64::from(self.params.p)
    }

    fn r10(&self, z: f64) -> f64 {
        (self.pm1() + self.b * z * z).powf(-1.0 / self.pm1())
    }

    fn closed(&self, which: OuterTerm, z: f64) -> f64 {
        outer_r(which, z, &self.params, None).expect("closed form without constants")
    }

    fn res10(&self, z: f64, h: f64) -> f64 {
        let f = |t: f64| self.closed(OuterTerm::R10, t);
        let r = f(z);
        -0.5 * z * d1_7pt(&f, z, h) - r / self.pm1() + r.powi(self.params.p as i32)
    }

    fn res11(&self, z: f64, h: f64) -> f64 {
        let f0 = |t: f64| self.closed(OuterTerm::R10, t);
        let f1 = |t: f64| self.closed(OuterTerm::R11, t);
        let r = f1(z);
        -0.5 * z * d1_7pt(&f1, z, h) - r / self.pm1()
            + self.p() * f0(z).powi(self.params.p as i32 - 1) * r
            + d2_7pt(&f0, z, h)
            + 0.5 * z * d1_7pt(&f0, z, h)
    }

    fn res21(&self, z: f64, h: f64) -> f64 {
        let f0 = |t: f64| self.closed(OuterTerm::R10, t);
        let f = |t: f64| self.closed(OuterTerm::R21, t);
        let r = f(z);
        -0.5 * z * d1_7pt(&f, z, h) - r / self.pm1()
            + self.p() * f0(z).powi(self.params.p as i32 - 1) * r
    }

    /// Source of the second-order imaginary equation, from its definition.
    fn f22(&self, z: f64, h: f64) -> f64 {
        let f = |t: f64| self.closed(OuterTerm::R21, t);
        let r21 = f(z);
        let p = self.p();
        d2_7pt(&f, z, h)
            + r21
            + 0.5 * z * d1_7pt(&f, z, h)
            + p * (p - 1.0)
                * self.r10(z).powi(self.params.p as i32 - 2)
                * self.closed(OuterTerm::R11, z)
                * r21
    }

    fn res22(&self, c: &R22Constants<f64>, z: f64, h: f64) -> f64 {
        let f = |t: f64| outer_r(OuterTerm::R22, t, &self.params, Some(c)).unwrap();
        let r = f(z);
        -0.5 * z * d1_7pt(&f, z, h) - r / self.pm1()
            + self.p() * self.r10(z).powi(self.params.p as i32 - 1) * r
            + self.f22(z, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R22Fit {
    pub constants: R22Constants<f64>,
    /// Fitted coefficient of D^{-p/(p-1)}; the closed form has −2.
    pub leading: f64,
    pub fit_residual: f64,
}

pub const R22_FIT_RANGE: (f64, f64) = (0.1, 5.0);

/// Determines the second-order imaginary outer constants from a quadrature solution of
/// its variation-of-constants formula, started at the left end of `R22_FIT_RANGE`.
pub fn fit_r22_constants(params: &Params<f64>) -> R22Fit {
    let eq = OuterEquations::new(*params);
    let h = default_step();
    let p = eq.p();
    let pm1 = eq.pm1();
    let e1 = p / pm1;
    let e2 = (2.0 * p - 1.0) / pm1;
    let dd = |z: f64| pm1 + params.b * z * z;
    let integrand = |t: f64| 2.0 * eq.f22(t, h) * dd(t).powf(e1) / (t * t * t);
    let (gx, gw) = gauss_legendre(10);
    let (z0, z1) = R22_FIT_RANGE;
    let panel = 0.025;
    let zs = linspace(z0, z1, ((z1 - z0) / panel).round() as usize + 1);
    let mut rows = Vec::with_capacity(zs.len());
    let mut ys = Vec::with_capacity(zs.len());
    let mut acc = 0.0;
    for (i, &z) in zs.iter().enumerate() {
        if i > 0 {
            let (a, b) = (zs[i - 1], z);
            let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
            acc += gx
                .iter()
                .zip(&gw)
                .map(|(&x, &w)| w * r * integrand(m + r * x))
                .sum::<f64>();
        }
        let d = dd(z);
        let ln = d.ln();
        let z2 = z * z;
        ys.push(z2 * d.powf(-e1) * acc);
        rows.push(vec![
            d.powf(-e1),
            z2 * d.powf(-e2),
            z2 * ln * d.powf(-e1),
            z2 * ln * d.powf(-e2),
            z2 * d.powf(-e1),
        ]);
    }
    let (c, fit_residual) = lstsq(&rows, &ys);
    R22Fit {
        constants: R22Constants {
            c21: c[1],
            c23a: c[2],
            c23b: c[3],
            c_hom: c[4],
        },
        leading: c[0],
        fit_residual,
    }
}

/// Coefficient of 1/z in the integrand (2H/z)F₁,₁ that would produce a ln z term.
pub fn b_selection_coefficient(b: f64, p: u32) -> f64 {
    let pm1 = f64::from(p - 1);
    -2.0 * b / pm1 + 8.0 * f64::from(p) * b * b / pm1.powi(3)
}

/// Fits (2H/z)F₁,₁ with F₁,₁ built from R₁,₀ at the given b onto {z⁻³, z⁻¹, z/D};
/// returns the coefficients and the fit residual.
pub fn r11_integrand_fit(params: &Params<f64>, b: f64) -> (Vec<f64>, f64) {
    let pm1 = f64::from(params.p - 1);
    let p = f64::from(params.p);
    let h = default_step();
    let r10 = move |z: f64| (pm1 + b * z * z).powf(-1.0 / pm1);
    let zs = linspace(0.2, 5.0, 97);
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for &z in &zs {
        let d = pm1 + b * z * z;
        let f11 = d2_7pt(&r10, z, h) + 0.5 * z * d1_7pt(&r10, z, h);
        let big_h = d.powf(p / pm1) / (z * z);
        ys.push(2.0 * big_h * f11 / z);
        rows.push(vec![z.powi(-3), 1.0 / z, z / d]);
    }
    lstsq(&rows, &ys)
}

pub fn default_z_samples() -> Vec<f64> {
    linspace(0.1, 10.0, 199)
}

pub fn check_outer_ode_residuals(params: &Params<f64>, z_samples: &[f64]) -> Vec<CheckReport> {
    let eq = OuterEquations::new(*params);
    let h = default_step();
    let mut out = Vec::new();
    let worst = |f: &dyn Fn(f64) -> f64| z_samples.iter().map(|&z| f(z).abs()).fold(0.0, f64::max);

    for (name, f) in [
        (
            "outer_ode_R10",
            &(|z| eq.res10(z, h)) as &dyn Fn(f64) -> f64,
        ),
        ("outer_ode_R11", &|z| eq.res11(z, h)),
        ("outer_ode_R21", &|z| eq.res21(z, h)),
    ] {
        let mut r = CheckReport::new(name, params);
        r.samples = z_samples.len();
        r.worst_residual = worst(f);
        r.pass = r.worst_residual < OUTER_TOLERANCE;
        r.values.insert("h".into(), h);
        if name == "outer_ode_R11" && !r.pass {
            r.note("displayed closed form does not reach the differentiation noise floor");
        }
        for (label, hh) in [
            ("residual_h_div_10", h / 10.0),
            ("residual_h_div_100", h / 100.0),
        ] {
            let res = match name {
                "outer_ode_R10" => worst(&|z| eq.res10(z, hh)),
                "outer_ode_R11" => worst(&|z| eq.res11(z, hh)),
                _ => worst(&|z| eq.res21(z, hh)),
            };
            r.values.insert(label.into(), res);
        }
        out.push(r);
    }

    // Below the optimal step, roundoff in the second derivative grows like h⁻².
    let mut deg = CheckReport::new("outer_ode_step_degradation", params);
    let hs = [h / 10.0, h / 100.0, h / 1000.0];
    let res: Vec<f64> = hs.iter().map(|&hh| worst(&|z| eq.res11(z, hh))).collect();
    let slope = loglog_slope(&hs, &res).unwrap_or(f64::NAN);
    deg.samples = z_samples.len() * hs.len();
    deg.worst_residual = res[2];
    deg.values.insert("h".into(), h);
    deg.values.insert("loglog_slope".into(), slope);
    deg.pass = (-2.5..=-1.5).contains(&slope);
    deg.note(
        "slope of the R11 residual against h below the optimal step; quadratic degradation is -2",
    );
    out.push(deg);

    let fit = fit_r22_constants(params);
    let zc: Vec<f64> = z_samples
        .iter()
        .copied()
        .filter(|&z| (R22_FIT_RANGE.0..=R22_FIT_RANGE.1).contains(&z))
        .collect();
    let mut r = CheckReport::new("outer_ode_R22_fitted", params);
    r.samples = zc.len();
    r.worst_residual = zc
        .iter()
        .map(|&z| eq.res22(&fit.constants, z, h).abs())
        .fold(0.0, f64::max);
    r.pass = r.worst_residual < R22_TOLERANCE && (fit.leading + 2.0).abs() < R22_TOLERANCE;
    r.fitted_constant = Some(fit.constants.c21);
    r.values.insert("leading".into(), fit.leading);
    r.values.insert("c21".into(), fit.constants.c21);
    r.values.insert("c23a".into(), fit.constants.c23a);
    r.values.insert("c23b".into(), fit.constants.c23b);
    r.values.insert("c_hom".into(), fit.constants.c_hom);
    r.values.insert("fit_residual".into(), fit.fit_residual);
    r.values.insert("h".into(), h);
    if (fit.constants.c23a - fit.constants.c23b).abs() > 1e-6 {
        r.note("the two ln D coefficients differ, so a single shared constant cannot fit");
    }
    if !r.pass {
        r.note("fitted form does not satisfy its equation to tolerance");
    }
    out.push(r);

    let mut r = CheckReport::new("outer_R11_log_term", params);
    let (c_paper, res_paper) = r11_integrand_fit(params, params.b);
    let (c_pert, res_pert) = r11_integrand_fit(params, 1.1 * params.b);
    let pm1 = f64::from(params.p - 1);
    r.samples = 2 * 97;
    r.worst_residual = res_paper.max(res_pert);
    r.fitted_constant = Some(c_pert[1]);
    r.values.insert("inv_z_coeff_at_b".into(), c_paper[1]);
    r.values.insert("inv_z_coeff_at_1.1b".into(), c_pert[1]);
    r.values.insert("inv_z3_coeff_at_b".into(), c_paper[0]);
    r.values.insert("z_over_d_coeff_at_b".into(), c_paper[2]);
    let expected = b_selection_coefficient(1.1 * params.b, params.p);
    r.pass = c_paper[1].abs() < 1e-7
        && (c_pert[1] - expected).abs() < 1e-7
        && c_pert[1].abs() > 1e-3
        && (c_paper[0] + 4.0 * params.b / pm1).abs() < 1e-7
        && r.worst_residual < 1e-7;
    r.note("1/z coefficient vanishes at the selected b and not at 1.1 b");
    out.push(r);
    out
}

pub fn check_b_selection(params: &Params<f64>) -> CheckReport {
    let mut r = CheckReport::new("b_selection", params);
    let at_b = b_selection_coefficient(params.b, params.p);
    let lo = b_selection_coefficient(0.9 * params.b, params.p);
    let hi = b_selection_coefficient(1.1 * params.b, params.p);
    r.samples = 3;
    r.worst_residual = at_b.abs();
    r.values.insert("at_0.9b".into(), lo);
    r.values.insert("at_1.1b".into(), hi);
    r.pass = at_b.abs() < B_SELECTION_TOLERANCE && lo.abs() > 1e-6 && hi.abs() > 1e-6;
    r
}

/// Cancels the O(r) and O(r²) error terms of g(r) = L + a r + b r² + ….
fn richardson(g: &dyn Fn(f64) -> f64, r: f64) -> f64 {
    let (g1, g2, g4) = (g(r), g(r / 2.0), g(r / 4.0));
    let a = 2.0 * g2 - g1;
    let b = 2.0 * g4 - g2;
    (4.0 * b - a) / 3.0
}

pub const BARB_SHELLS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

pub fn check_barb_expansion(params: &Params<f64>) -> CheckReport {
    let mut r = CheckReport::new("barB_expansion", params);
    let kappa = params.kappa;
    let p = f64::from(params.p);
    let (c1_exp, c2_exp) = (p / (2.0 * kappa), p / kappa);
    let c1 = richardson(&|t| bar_b(t, 0.0, params).0 / (t * t), 1e-3);
    let c2 = richardson(&|t| bar_b(t, t, params).1 / (t * t) - 0.0, 1e-3);
    // B̄₂(t,t)/t² = p/κ + O(t); the O(t) part comes only from the cubic remainder.
    let err = ((c1 - c1_exp).abs()).max((c2 - c2_exp).abs());
    let mut sup1 = Vec::new();
    let mut sup2 = Vec::new();
    let m = 400;
    for &shell in &BARB_SHELLS {
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for i in 0..=m {
            let t = -1.0 + 2.0 * i as f64 / m as f64;
            for sign in [-1.0, 1.0] {
                let w1 = shell * t;
                let w2 = sign * shell * (1.0 - t.abs());
                let (b1, b2) = bar_b(w1, w2, params);
                let den1 = w1.abs().powi(3) + w2 * w2;
                if den1 > 0.0 {
                    m1 = m1.max((b1 - c1_exp * w1 * w1).abs() / den1);
                }
                let den2 = w1 * w1 * w2.abs() + w2.abs().powi(3);
                if den2 > 0.0 {
                    m2 = m2.max((b2 - c2_exp * w1 * w2).abs() / den2);
                }
            }
        }
        sup1.push(m1);
        sup2.push(m2);
    }
    let slope = |v: &[f64]| {
        if v.iter().all(|&x| x < ZERO_FLOOR) {
            0.0
        } else {
            loglog_slope(&BARB_SHELLS, v).unwrap_or(f64::NAN)
        }
    };
    let (s1, s2) = (slope(&sup1), slope(&sup2));
    r.samples = BARB_SHELLS.len() * 2 * (m + 1);
    r.worst_residual = err;
    r.fitted_constant = Some(sup1.iter().chain(&sup2).copied().fold(0.0, f64::max));
    r.values.insert("leading_b1".into(), c1);
    r.values.insert("leading_b2".into(), c2);
    r.values.insert("remainder_slope_b1".into(), s1);
    r.values.insert("remainder_slope_b2".into(), s2);
    r.pass =
        err < LEADING_COEFF_TOLERANCE && s1.abs() < SLOPE_TOLERANCE && s2.abs() < SLOPE_TOLERANCE;
    r
}

pub fn default_s_grid() -> Vec<f64> {
    logspace(1e3, 1e4, 9)
}

/// Radii covering |y| ≤ 10 finely, then z = |y|/√s up to 12 finely and the far field coarsely.
fn radii(s: f64) -> Vec<f64> {
    let mut r: Vec<f64> = linspace(0.0, 10.0, 401);
    let mut z: Vec<f64> = linspace(0.0, 12.0, 481);
    z.extend(logspace(12.5, 1e3, 80));
    r.extend(z.into_iter().map(|v| v * s.sqrt()).filter(|&v| v > 10.0));
    r
}

/// Log-log slope over the upper half of the s-grid, where the next-order 1/s
/// corrections have died out.
fn tail_slope(s_grid: &[f64], sups: &[f64]) -> f64 {
    let k = s_grid.len() / 2;
    loglog_slope(&s_grid[k..], &sups[k..]).unwrap_or(f64::NAN)
}

fn point(r: f64, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    y[0] = r;
    y
}

struct BoundSeries {
    name: &'static str,
    sups: Vec<f64>,
}

fn slope_reports(
    check: &str,
    params: &Params<f64>,
    s_grid: &[f64],
    series: Vec<BoundSeries>,
    samples: usize,
) -> CheckReport {
    let mut r = CheckReport::new(check, params);
    r.samples = samples;
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut fitted = 0.0f64;
    for b in &series {
        let top = b.sups.iter().copied().fold(0.0, f64::max);
        fitted = fitted.max(top);
        if top < ZERO_FLOOR {
            r.values.insert(format!("{}_slope", b.name), 0.0);
            r.note(format!("{} vanishes identically", b.name));
            continue;
        }
        let slope = tail_slope(s_grid, &b.sups);
        r.values.insert(format!("{}_slope", b.name), slope);
        r.values.insert(format!("{}_sup", b.name), top);
        worst = worst.max(slope.abs());
        if !(slope.abs() < SLOPE_TOLERANCE) {
            pass = false;
            r.note(format!(
                "{} normalized sup trends with slope {slope:.3}",
                b.name
            ));
        }
    }
    r.worst_residual = worst;
    r.fitted_constant = Some(fitted);
    r.pass = pass;
    r
}

pub fn check_potential_bounds(params: &Params<f64>, s_grid: &[f64], k: f64) -> CheckReport {
    let n = params.n_dim;
    let nf = n as f64;
    let names = [
        "V",
        "V_weighted",
        "V_tilde",
        "V11_V22_sup",
        "V12_V21_sup",
        "V11_V22_pointwise",
        "V12_V21_pointwise",
    ];
    let mut sups = vec![Vec::with_capacity(s_grid.len()); names.len()];
    let mut samples = 0;
    for &s in s_grid {
        let mut m = [0.0f64; 7];
        for r in radii(s) {
            samples += 1;
            let y = point(r, n);
            let r2 = r * r;
            let v = potential_v(&y, s, params);
            let c = potentials_vjk(&y, s, params);
            let diag = c.v11.abs() + c.v22.abs();
            let off = c.v12.abs() + c.v21.abs();
            m[0] = m[0].max(v.abs());
            m[1] = m[1].max(v.abs() * s / (1.0 + r2));
            if r <= 2.0 * k * s.sqrt() {
                let vt = v + (r2 - 2.0 * nf) / (4.0 * s);
                m[2] = m[2].max(vt.abs() * s * s / (1.0 + r2 * r2));
            }
            m[3] = m[3].max(diag * s * s);
            m[4] = m[4].max(off * s);
            m[5] = m[5].max(diag * s.powi(4) / (1.0 + r2 * r2));
            m[6] = m[6].max(off * s * s / (1.0 + r2));
        }
        for (i, v) in m.iter().enumerate() {
            sups[i].push(*v);
        }
    }
    let series = names
        .iter()
        .zip(sups)
        .map(|(&name, sups)| BoundSeries { name, sups })
        .collect();
    let mut rep = slope_reports("potential_bounds", params, s_grid, series, samples);
    let v0 = potential_v(&point(0.0, n), s_grid[0], params) * s_grid[0];
    rep.values.insert("s_V_at_origin_first_s".into(), v0);
    rep
}

pub fn check_quadratic_bounds(
    params: &Params<f64>,
    s_grid: &[f64],
    a: f64,
    p1: f64,
    seed: u64,
) -> CheckReport {
    let n = params.n_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id("quadratic_bounds"));
    let mut sup1 = Vec::new();
    let mut sup2 = Vec::new();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut samples = 0;
    for &s in s_grid {
        let env1 = a / (s * s);
        let env2 = a * a / s.powf(p1 + 2.0);
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for r in radii(s).into_iter().step_by(8) {
            let y = point(r, n);
            for j in 0..8 {
                let (q1, q2) = if j < 4 {
                    (
                        env1 * rng.gen_range(-1.0..=1.0),
                        env2 * rng.gen_range(-1.0..=1.0),
                    )
                } else {
                    (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
                };
                let (b1, b2) = quadratic_b(q1, q2, &y, s, params);
                let d1 = q1 * q1 + q2 * q2;
                let d2 = q1 * q1 / s + (q1 * q2).abs() + q2 * q2;
                if d1 == 0.0 {
                    continue;
                }
                samples += 1;
                m1 = m1.max(b1.abs() / d1);
                m2 = m2.max(b2.abs() / d2);
                rows.push(vec![q1 * q1 / s, (q1 * q2).abs(), q2 * q2]);
                ys.push(b2.abs());
            }
        }
        sup1.push(m1);
        sup2.push(m2);
    }
    let series = vec![
        BoundSeries {
            name: "B1",
            sups: sup1,
        },
        BoundSeries {
            name: "B2",
            sups: sup2,
        },
    ];
    let mut rep = slope_reports("quadratic_bounds", params, s_grid, series, samples);
    let (c, _) = lstsq(&rows, &ys);
    rep.values.insert("B2_coeff_q1sq_over_s".into(), c[0]);
    rep.values.insert("B2_coeff_q1q2".into(), c[1]);
    rep.values.insert("B2_coeff_q2sq".into(), c[2]);
    rep.seed = Some(seed);
    rep
}

/// c₂,p as stated for the imaginary rest term at the origin.
pub fn expected_c2(params: &Params<f64>) -> f64 {
    let n = params.n_dim as f64;
    -n * (n + 4.0) * params.kappa / f64::from(params.p - 1)
}

/// Extrapolates c from s^k R(0, s) = c + a/s at the two largest s.
fn fit_origin_constant(s_grid: &[f64], f: &dyn Fn(f64) -> f64) -> f64 {
    let m = s_grid.len();
    let (sa, sb) = (s_grid[m - 2], s_grid[m - 1]);
    let (ga, gb) = (f(sa), f(sb));
    (sb * gb - sa * ga) / (sb - sa)
}

pub const REST_CHECK_S: f64 = 1e4;

pub fn check_rest_bounds(params: &Params<f64>, s_grid: &[f64], k: f64) -> CheckReport {
    let n = params.n_dim;
    let origin = point(0.0, n);
    let c1 = fit_origin_constant(s_grid, &|s| rest_r(&origin, s, params).0 * s * s);
    let c2 = fit_origin_constant(s_grid, &|s| rest_r(&origin, s, params).1 * s.powi(3));
    let c2_at = rest_r(&origin, REST_CHECK_S, params).1 * REST_CHECK_S.powi(3);
    let c2_exp = expected_c2(params);
    let names = ["R1_tilde", "R2_tilde", "R1_sup", "R2_sup"];
    let mut sups = vec![Vec::new(); 4];
    let mut samples = 0;
    for &s in s_grid {
        let mut m = [0.0f64; 4];
        for r in radii(s) {
            samples += 1;
            let (r1, r2v) = rest_r(&point(r, n), s, params);
            let rr = r * r;
            if r <= 2.0 * k * s.sqrt() {
                m[0] = m[0].max((r1 - c1 / (s * s)).abs() * s.powi(3) / (1.0 + rr * rr));
                m[1] = m[1].max((r2v - c2 / s.powi(3)).abs() * s.powi(4) / (1.0 + rr.powi(3)));
            }
            m[2] = m[2].max(r1.abs() * s);
            m[3] = m[3].max(r2v.abs() * s * s);
        }
        for (i, v) in m.iter().enumerate() {
            sups[i].push(*v);
        }
    }
    let series = names
        .iter()
        .zip(sups)
        .map(|(&name, sups)| BoundSeries { name, sups })
        .collect();
    let mut rep = slope_reports("rest_bounds", params, s_grid, series, samples);
    let rel = (c2_at - c2_exp).abs() / c2_exp.abs();
    rep.values.insert("c1_fit".into(), c1);
    rep.values.insert("c2_fit".into(), c2);
    rep.values.insert("c2_at_check_s".into(), c2_at);
    rep.values.insert("c2_expected".into(), c2_exp);
    rep.values.insert("c2_rel_err".into(), rel);
    rep.fitted_constant = Some(c2_at);
    if rel >= REST_CONSTANT_TOLERANCE {
        rep.pass = false;
        rep.note(format!(
            "c2 at s = {REST_CHECK_S:e} is {c2_at}, expected {c2_exp}"
        ));
    }
    rep
}

pub fn check_complex_identity(params: &Params<f64>, sample_count: usize, seed: u64) -> CheckReport {
    let mut r = CheckReport::new("complex_identity", params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id("complex_identity"));
    let p = params.p;
    let mut worst = 0.0f64;
    for _ in 0..sample_count {
        let u = Complex::new(rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0));
        let mut z = Complex::new(1.0, 0.0);
        for _ in 0..p {
            z *= u;
        }
        let (a, b) = f1f2(u.re, u.im, p);
        let diff = Complex::new(a, b) - z;
        if z.norm() > 0.0 {
            worst = worst.max(diff.norm() / z.norm());
        }
    }
    r.samples = sample_count;
    r.worst_residual = worst;
    r.pass = worst < COMPLEX_TOLERANCE;
    r.seed = Some(seed);
    r
}

fn stream_id(name: &str) -> u64 {
    // FNV-1a, so the stream assignment does not depend on check ordering.
    name.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100000001b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub complex_samples: usize,
    pub a: f64,
    pub p1: f64,
    pub k: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            complex_samples: 10_000,
            a: 10.0,
            p1: 0.5,
            k: 5.0,
        }
    }
}

/// All checks for one (p, n), in a fixed order, computed in parallel.
pub fn run_all(params: &Params<f64>, opts: &SuiteOptions) -> Vec<CheckReport> {
    let s_grid = default_s_grid();
    let z = default_z_samples();
    let jobs: Vec<Box<dyn Fn() -> Vec<CheckReport> + Sync + Send + '_>> = vec![
        Box::new(|| check_outer_ode_residuals(params, &z)),
        Box::new(|| vec![check_b_selection(params)]),
        Box::new(|| vec![check_barb_expansion(params)]),
        Box::new(|| vec![check_potential_bounds(params, &s_grid, opts.k)]),
        Box::new(|| {
            vec![check_quadratic_bounds(
                params, &s_grid, opts.a, opts.p1, opts.seed,
            )]
        }),
        Box::new(|| vec![check_rest_bounds(params, &s_grid, opts.k)]),
        Box::new(|| {
            vec![check_complex_identity(
                params,
                opts.complex_samples,
                opts.seed,
            )]
        }),
    ];
    jobs.par_iter()
        .map(|j| j())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// `run_all` over every (p, n) pair.
pub fn run_suite(
    ps: &[u32],
    dims: &[usize],
    opts: &SuiteOptions,
) -> crate::Result<Vec<CheckReport>> {
    let mut pairs = Vec::new();
    for &p in ps {
        for &n in dims {
            pairs.push(make_params::<f64>(p, n)?);
        }
    }
    Ok(pairs
        .par_iter()
        .map(|pr| run_all(pr, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(p: u32, n: usize) -> Params<f64> {
        make_params(p, n).unwrap()
    }

    #[test]
    fn stencils_exact_on_polynomials() {
        let f = |x: f64| x.powi(6) - 3.0 * x * x;
        let h = 0.1;
        assert!((d1_7pt(&f, 0.7, h) - (6.0 * 0.7f64.powi(5) - 4.2)).abs() < 1e-10);
        assert!((d2_7pt(&f, 0.7, h) - (30.0 * 0.7f64.powi(4) - 6.0)).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((int - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn b_selection_examples() {
        assert_eq!(b_selection_coefficient(0.125, 2), 0.0);
        assert!(b_selection_coefficient(1.0 / 3.0, 3).abs() < 1e-15);
        assert!((b_selection_coefficient(0.15, 2) - (-0.3 + 16.0 * 0.0225)).abs() < 1e-15);
        for pp in 2..=9 {
            assert!(check_b_selection(&p(pp, 1)).pass);
        }
    }

    #[test]
    fn outer_residuals_p2() {
        let reps = check_outer_ode_residuals(&p(2, 1), &default_z_samples());
        for r in &reps {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn r22_constants_match_symbolic_values() {
        // Symbolic solution of the second-order imaginary equation.
        for pp in [2u32, 3, 4, 5] {
            let fit = fit_r22_constants(&p(pp, 1));
            let pf = f64::from(pp);
            assert!((fit.leading + 2.0).abs() < 1e-8, "{fit:?}");
            assert!(
                (fit.constants.c21 + (pf - 1.0) / 2.0).abs() < 1e-8,
                "{fit:?}"
            );
            assert!(
                (fit.constants.c23a - (pf - 2.0) / (pf - 1.0)).abs() < 1e-8,
                "{fit:?}"
            );
            assert!((fit.constants.c23b - pf).abs() < 1e-8, "{fit:?}");
        }
    }

    #[test]
    fn barb_leading_coefficients() {
        let r = check_barb_expansion(&p(2, 1));
        assert!(r.pass, "{r:?}");
        assert!((r.values["leading_b1"] - 1.0).abs() < 1e-6);
        assert!((r.values["leading_b2"] - 2.0).abs() < 1e-6);
        let r = check_barb_expansion(&p(3, 1));
        assert!((r.values["leading_b1"] - 3.0 / (2.0 * 0.5f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn complex_identity_examples() {
        let (a, b) = f1f2(1.0, 1.0, 5);
        assert_eq!((a, b), (-4.0, -4.0));
        let r = check_complex_identity(&p(7, 1), 10_000, 3);
        assert!(r.pass && r.worst_residual < 1e-12);
        assert_eq!(r, check_complex_identity(&p(7, 1), 10_000, 3));
    }

    #[test]
    fn quadratic_p2_exact_b2() {
        let r = check_quadratic_bounds(&p(2, 1), &default_s_grid(), 10.0, 0.5, 1);
        assert!((r.values["B2_coeff_q1q2"] - 2.0).abs() < 1e-10, "{r:?}");
        assert!(r.values["B2_coeff_q2sq"].abs() < 1e-10);
    }

    #[test]
    fn rest_constants() {
        let r = check_rest_bounds(&p(2, 1), &default_s_grid(), 5.0);
        assert!((r.values["c2_at_check_s"] + 5.0).abs() < 0.05, "{r:?}");
        // n(n+4)κ/(8p) by expanding Φ₁ to second order at the origin.
        assert!((r.values["c1_fit"] - 5.0 / 16.0).abs() < 1e-3, "{r:?}");
        let r = check_rest_bounds(&p(2, 2), &default_s_grid(), 5.0);
        assert!((r.values["c2_at_check_s"] + 12.0).abs() < 0.12);
        assert!((r.values["c1_fit"] - 0.75).abs() < 1e-3);
    }

    #[test]
    fn potential_at_origin() {
        let v = potential_v(&[0.0], 10.0, &p(2, 1));
        assert!((v * 10.0 - 0.5).abs() < 0.05, "{v}");
    }
}
