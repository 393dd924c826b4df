//! Measurements of trajectories: mode decomposition, shrinking-set membership,
//! mode-ODE residuals, inner-expansion fits and profile comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::hermite::{hermite_unchecked, weight_rho};
use crate::params::{f0, g0, hat_uv, solve_t0_gap, Params};
use crate::rhs::{cutoff_chi, CutoffKind, CutoffSpec};
use crate::solver::{linear_fit, PhysicalTrajectory, SimilarityState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkingSetParams {
    pub a: f64,
    pub p1: f64,
    pub k: f64,
}

impl ShrinkingSetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 1.0) || !(self.p1 > 0.0 && self.p1 < 1.0) || !(self.k > 0.0) {
            return Err(Error::InvalidParam(format!(
                "shrinking set needs A >= 1, p1 in (0,1), K > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> CutoffSpec<f64> {
        CutoffSpec {
            k: self.k,
            kind: CutoffKind::Exponential,
        }
    }
}

impl Default for ShrinkingSetParams {
    fn default() -> Self {
        ShrinkingSetParams {
            a: 10.0,
            p1: 0.5,
            k: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDecomposition {
    pub q0: f64,
    pub q1: Vec<f64>,
    pub q2: Vec<Vec<f64>>,
    /// sup |q₋| / (1 + |y|³)
    pub q_minus_weighted_norm: f64,
    /// sup |q_e|
    pub q_e_norm: f64,
}

impl ModeDecomposition {
    pub fn zero(n: usize) -> Self {
        ModeDecomposition {
            q0: 0.0,
            q1: vec![0.0; n],
            q2: vec![vec![0.0; n]; n],
            q_minus_weighted_norm: 0.0,
            q_e_norm: 0.0,
        }
    }

    /// q₀ + q₁·y + ½yᵀq₂y − Tr q₂.
    pub fn polynomial(&self, y: &[f64]) -> f64 {
        let n = self.q1.len();
        let mut acc = self.q0;
        for j in 0..n {
            acc += self.q1[j] * y[j] - self.q2[j][j];
            for k in 0..n {
                acc += 0.5 * y[j] * self.q2[j][k] * y[k];
            }
        }
        acc
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        ModeDecomposition {
            q0: lambda * self.q0,
            q1: self.q1.iter().map(|v| lambda * v).collect(),
            q2: self
                .q2
                .iter()
                .map(|r| r.iter().map(|v| lambda * v).collect())
                .collect(),
            q_minus_weighted_norm: lambda.abs() * self.q_minus_weighted_norm,
            q_e_norm: lambda.abs() * self.q_e_norm,
        }
    }
}

/// Decomposition together with the fields q_b = χq and q₋.
pub fn decompose_fields(
    q: &Field<f64>,
    s: f64,
    ssp: &ShrinkingSetParams,
) -> Result<(ModeDecomposition, Field<f64>, Field<f64>)> {
    let grid = q.grid;
    grid.require_coverage(2.0 * ssp.k * s.sqrt())?;
    let n = grid.n_dim();
    let spec = ssp.cutoff();
    let mut qb = Field::zeros(grid);
    let mut q_e_norm = 0.0f64;
    let mut d = ModeDecomposition::zero(n);
    for k in 0..grid.len() {
        let y = grid.point(k);
        let chi = cutoff_chi(&y, s, &spec);
        let v = q.values[k];
        qb.values[k] = chi * v;
        q_e_norm = q_e_norm.max(((1.0 - chi) * v).abs());
        let wr = grid.quad_weight(k) * weight_rho(&y) * qb.values[k];
        if wr == 0.0 {
            continue;
        }
        d.q0 += wr;
        for j in 0..n {
            d.q1[j] += wr * y[j] / 2.0;
            for l in 0..n {
                let delta = if j == l { 0.5 } else { 0.0 };
                d.q2[j][l] += wr * (0.25 * y[j] * y[l] - delta);
            }
        }
    }
    for j in 0..n {
        for l in 0..j {
            let m = 0.5 * (d.q2[j][l] + d.q2[l][j]);
            d.q2[j][l] = m;
            d.q2[l][j] = m;
        }
    }
    d.q_e_norm = q_e_norm;
    let mut qm = Field::zeros(grid);
    let mut wnorm = 0.0f64;
    for k in 0..grid.len() {
        let y = grid.point(k);
        qm.values[k] = qb.values[k] - d.polynomial(&y);
        let r = grid.radius_sq(k).sqrt();
        wnorm = wnorm.max(qm.values[k].abs() / (1.0 + r * r * r));
    }
    d.q_minus_weighted_norm = wnorm;
    Ok((d, qb, qm))
}

pub fn decompose(q: &Field<f64>, s: f64, ssp: &ShrinkingSetParams) -> Result<ModeDecomposition> {
    decompose_fields(q, s, ssp).map(|(d, _, _)| d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundMargin {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    /// (bound − observed) / bound
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub margins: Vec<BoundMargin>,
    pub inside: bool,
    pub on_boundary: bool,
}

impl MembershipReport {
    pub fn min_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(|m| m.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Per-bound margins against the ten bounds defining V_A(s).
pub fn in_shrinking_set(
    d1: &ModeDecomposition,
    d2: &ModeDecomposition,
    ssp: &ShrinkingSetParams,
    s: f64,
) -> MembershipReport {
    let a = ssp.a;
    let p1 = ssp.p1;
    let s2 = s * s;
    let sp = s.powf(p1 + 2.0);
    let ln = s.ln();
    let rows = [
        ("q1_0", a / s2, d1.q0.abs()),
        ("q2_0", a * a / sp, d2.q0.abs()),
        ("q1_j", a / s2, max_abs(d1.q1.iter().copied())),
        ("q2_j", a * a / sp, max_abs(d2.q1.iter().copied())),
        (
            "q1_jk",
            a * a * ln / s2,
            max_abs(d1.q2.iter().flatten().copied()),
        ),
        (
            "q2_jk",
            a.powi(5) * ln / sp,
            max_abs(d2.q2.iter().flatten().copied()),
        ),
        ("q1_minus", a / s2, d1.q_minus_weighted_norm),
        (
            "q2_minus",
            a * a / s.powf((p1 + 5.0) / 2.0),
            d2.q_minus_weighted_norm,
        ),
        ("q1_e", a * a / s.sqrt(), d1.q_e_norm),
        ("q2_e", a.powi(3) / s.powf((p1 + 2.0) / 2.0), d2.q_e_norm),
    ];
    let margins: Vec<BoundMargin> = rows
        .iter()
        .map(|&(name, bound, observed)| BoundMargin {
            name: name.to_string(),
            bound,
            observed,
            margin: (bound - observed) / bound,
        })
        .collect();
    let inside = margins.iter().all(|m| m.margin >= 0.0);
    let on_boundary = inside && margins.iter().any(|m| m.margin == 0.0);
    MembershipReport {
        margins,
        inside,
        on_boundary,
    }
}

pub fn profile_error(state: &SimilarityState<f64>, params: &Params<f64>) -> (f64, f64) {
    let grid = state.grid();
    let s = state.s;
    let mut e1 = 0.0f64;
    let mut e2 = 0.0f64;
    for k in 0..grid.len() {
        let z2 = grid.radius_sq(k) / s;
        e1 = e1.max((state.w1.values[k] - f0(z2, params)).abs());
        e2 = e2.max((s * state.w2.values[k] - g0(z2, params)).abs());
    }
    (e1, e2)
}

/// Projections of w̄₁ = w₁ − κ and w₂ on h₀ and on h₂ along the first axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerModes {
    pub w1bar_0: f64,
    pub w1bar_2: f64,
    pub w2_0: f64,
    pub w2_2: f64,
}

pub fn inner_modes(state: &SimilarityState<f64>, params: &Params<f64>) -> InnerModes {
    let grid = state.grid();
    let mut m = InnerModes {
        w1bar_0: 0.0,
        w1bar_2: 0.0,
        w2_0: 0.0,
        w2_2: 0.0,
    };
    for k in 0..grid.len() {
        let y = grid.point(k);
        let wr = grid.quad_weight(k) * weight_rho(&y);
        let h2 = hermite_unchecked(2, y[0]) / 8.0;
        let a = state.w1.values[k] - params.kappa;
        let b = state.w2.values[k];
        m.w1bar_0 += wr * a;
        m.w1bar_2 += wr * a * h2;
        m.w2_0 += wr * b;
        m.w2_2 += wr * b * h2;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub s: f64,
    pub d1: ModeDecomposition,
    pub d2: ModeDecomposition,
    pub e1: f64,
    pub e2: f64,
    pub inner: InnerModes,
    pub membership: MembershipReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub s: f64,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub snapshots: Vec<FieldSnapshot>,
}

/// Builds trajectory records from similarity states; used as the `evolve` observer.
pub struct Recorder {
    params: Params<f64>,
    ssp: ShrinkingSetParams,
    pending_snapshots: Vec<f64>,
    pub trajectory: Trajectory,
}

impl Recorder {
    pub fn new(params: Params<f64>, ssp: ShrinkingSetParams, mut snapshot_s: Vec<f64>) -> Self {
        snapshot_s.sort_by(|a, b| b.total_cmp(a));
        Recorder {
            params,
            ssp,
            pending_snapshots: snapshot_s,
            trajectory: Trajectory::default(),
        }
    }

    pub fn observe(&mut self, state: &SimilarityState<f64>) -> Result<()> {
        let record = make_record(state, &self.params, &self.ssp)?;
        self.trajectory.records.push(record);
        while let Some(&next) = self.pending_snapshots.last() {
            if state.s + 1e-9 < next {
                break;
            }
            self.pending_snapshots.pop();
            self.trajectory.snapshots.push(FieldSnapshot {
                s: state.s,
                w1: state.w1.values.clone(),
                w2: state.w2.values.clone(),
            });
        }
        Ok(())
    }
}

pub fn make_record(
    state: &SimilarityState<f64>,
    params: &Params<f64>,
    ssp: &ShrinkingSetParams,
) -> Result<TrajectoryRecord> {
    let s = state.s;
    let grid = *state.grid();
    let q1 = Field {
        grid,
        values: (0..grid.len())
            .map(|k| state.w1.values[k] - crate::params::phi1_radial(grid.radius_sq(k), s, params))
            .collect(),
    };
    let q2 = Field {
        grid,
        values: (0..grid.len())
            .map(|k| state.w2.values[k] - crate::params::phi2_radial(grid.radius_sq(k), s, params))
            .collect(),
    };
    let d1 = decompose(&q1, s, ssp)?;
    let d2 = decompose(&q2, s, ssp)?;
    let (e1, e2) = profile_error(state, params);
    let membership = in_shrinking_set(&d1, &d2, ssp, s);
    Ok(TrajectoryRecord {
        s,
        d1,
        d2,
        e1,
        e2,
        inner: inner_modes(state, params),
        membership,
    })
}

/// Least-squares slope of ln|v| against ln s, skipping zeros.
pub fn loglog_slope(s: &[f64], v: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = s
        .iter()
        .zip(v)
        .filter(|(_, &b)| b != 0.0 && b.is_finite())
        .map(|(&a, &b)| (a.ln(), b.abs().ln()))
        .unzip();
    linear_fit(&x, &y).map(|(_, b)| b)
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Raw residuals below this are indistinguishable from roundoff in the mode integrals.
pub const RESIDUAL_NOISE_FLOOR: f64 = 1e-13;
pub const MAX_RECORD_SPACING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub name: String,
    pub s: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// 95th percentile of the normalized residual.
    pub fitted_constant: f64,
    /// log-log slope of the normalized residual against s.
    pub slope: f64,
    /// Decay exponent of the raw residual, −d ln|r| / d ln s.
    pub achieved_exponent: f64,
    pub below_noise_floor: bool,
}

/// Residuals of the finite-dimensional mode ODEs along a trajectory, restricted to
/// records with s in `window`.
pub fn mode_ode_residuals(
    traj: &Trajectory,
    ssp: &ShrinkingSetParams,
    window: Option<(f64, f64)>,
) -> Result<Vec<ResidualSeries>> {
    let r = &traj.records;
    if r.len() < 3 {
        return Err(Error::InsufficientSpan(
            "need at least three records".into(),
        ));
    }
    let spacing = r.windows(2).map(|w| w[1].s - w[0].s).fold(0.0, f64::max);
    if spacing > MAX_RECORD_SPACING + 1e-12 {
        return Err(Error::TooSparse {
            spacing,
            limit: MAX_RECORD_SPACING,
        });
    }
    #[derive(Clone, Copy)]
    enum Kind {
        Growing(f64),
        Null,
    }
    type Extract = fn(&TrajectoryRecord) -> Vec<f64>;
    type Norm = Box<dyn Fn(f64) -> f64>;
    let a = ssp.a;
    let p1 = ssp.p1;
    let specs: [(&str, Extract, Kind, Norm); 6] = [
        (
            "q1_0",
            |t| vec![t.d1.q0],
            Kind::Growing(1.0),
            Box::new(|s: f64| s * s),
        ),
        (
            "q1_j",
            |t| t.d1.q1.clone(),
            Kind::Growing(0.5),
            Box::new(|s: f64| s * s),
        ),
        (
            "q2_0",
            |t| vec![t.d2.q0],
            Kind::Growing(1.0),
            Box::new(move |s: f64| s.powf(p1 + 2.0)),
        ),
        (
            "q2_j",
            |t| t.d2.q1.clone(),
            Kind::Growing(0.5),
            Box::new(move |s: f64| s.powf(p1 + 2.0)),
        ),
        (
            "q1_jk",
            |t| t.d1.q2.concat(),
            Kind::Null,
            Box::new(move |s: f64| s.powi(3) / a),
        ),
        (
            "q2_jk",
            |t| t.d2.q2.concat(),
            Kind::Null,
            Box::new(move |s: f64| s.powf(p1 + 3.0) / (a * a * s.ln())),
        ),
    ];
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut out = Vec::new();
    for (name, extract, kind, norm) in specs.iter() {
        let mut series = ResidualSeries {
            name: name.to_string(),
            s: vec![],
            raw: vec![],
            normalized: vec![],
            fitted_constant: 0.0,
            slope: 0.0,
            achieved_exponent: f64::NAN,
            below_noise_floor: false,
        };
        for i in 1..r.len() - 1 {
            let s = r[i].s;
            if s < lo || s > hi {
                continue;
            }
            let (qm, q, qp) = (extract(&r[i - 1]), extract(&r[i]), extract(&r[i + 1]));
            let ds = r[i + 1].s - r[i - 1].s;
            let mut res = 0.0f64;
            for c in 0..q.len() {
                let dq = (qp[c] - qm[c]) / ds;
                let rhs = match kind {
                    Kind::Growing(l) => l * q[c],
                    Kind::Null => -2.0 / s * q[c],
                };
                res = res.max((dq - rhs).abs());
            }
            series.s.push(s);
            series.raw.push(res);
            series.normalized.push(res * norm(s));
        }
        if series.s.len() >= 2 {
            series.fitted_constant = percentile(&series.normalized, 0.95);
            series.below_noise_floor = max_abs(series.raw.iter().copied()) < RESIDUAL_NOISE_FLOOR;
            if series.below_noise_floor {
                series.slope = 0.0;
            } else {
                series.slope = loglog_slope(&series.s, &series.normalized).unwrap_or(f64::NAN);
                series.achieved_exponent =
                    -loglog_slope(&series.s, &series.raw).unwrap_or(f64::NAN);
            }
        }
        out.push(series);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFit {
    pub value_at_end: f64,
    /// Relative change across each consecutive window, oldest first.
    pub window_drifts: Vec<f64>,
    pub last_window_drift: f64,
    pub drift_shrinking: bool,
}

fn limit_fit(s: &[f64], v: &[f64], windows: usize) -> LimitFit {
    let n = s.len();
    let value_at_end = v[n - 1];
    let s0 = s[0];
    let width = (s[n - 1] - s0) / windows as f64;
    let at = |t: f64| -> f64 {
        let i = s.iter().position(|&x| x >= t - 1e-9).unwrap_or(n - 1);
        v[i]
    };
    let window_drifts: Vec<f64> = (0..windows)
        .map(|w| {
            let (a, b) = (at(s0 + w as f64 * width), at(s0 + (w + 1) as f64 * width));
            (b - a).abs() / b.abs().max(f64::MIN_POSITIVE)
        })
        .collect();
    let last_window_drift = *window_drifts.last().unwrap_or(&f64::NAN);
    let tail = &window_drifts[windows / 2..];
    let drift_shrinking = tail.windows(2).all(|w| w[1] <= w[0]);
    LimitFit {
        value_at_end,
        window_drifts,
        last_window_drift,
        drift_shrinking,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerFit {
    /// s·w̄₁,₂(s); expected limit −κ/(4p).
    pub s_w1bar2: LimitFit,
    /// s²·w₂,₂(s); expected nonzero limit.
    pub s2_w22: LimitFit,
    pub s3_w20_max: f64,
    pub expected_s_w1bar2: f64,
}

pub const INNER_MIN_SPAN: f64 = 10.0;
pub const INNER_WINDOWS: usize = 6;

pub fn inner_fit(traj: &Trajectory, params: &Params<f64>) -> Result<InnerFit> {
    let r = &traj.records;
    if r.len() < 2 * INNER_WINDOWS || r[r.len() - 1].s - r[0].s < INNER_MIN_SPAN {
        return Err(Error::InsufficientSpan(format!(
            "inner fits need at least {INNER_MIN_SPAN} units of s and {} records",
            2 * INNER_WINDOWS
        )));
    }
    let s: Vec<f64> = r.iter().map(|t| t.s).collect();
    let a: Vec<f64> = r.iter().map(|t| t.s * t.inner.w1bar_2).collect();
    let b: Vec<f64> = r.iter().map(|t| t.s * t.s * t.inner.w2_2).collect();
    let s3_w20_max = max_abs(r.iter().map(|t| t.s.powi(3) * t.inner.w2_0));
    Ok(InnerFit {
        s_w1bar2: limit_fit(&s, &a, INNER_WINDOWS),
        s2_w22: limit_fit(&s, &b, INNER_WINDOWS),
        s3_w20_max,
        expected_s_w1bar2: -params.kappa / (4.0 * f64::from(params.p)),
    })
}

/// Four-point Lagrange interpolation on a uniform 1D grid.
fn cubic_at(grid: &Grid<f64>, v: &[f64], x: f64) -> Option<f64> {
    let n = grid.points();
    let h = grid.spacing();
    let pos = (x + grid.half_width()) / h;
    if !(pos >= 0.0 && pos <= (n - 1) as f64) {
        return None;
    }
    let i = (pos.floor() as usize).clamp(1, n - 3);
    let t = pos - i as f64;
    let (a, b, c, d) = (v[i - 1], v[i], v[i + 1], v[i + 2]);
    Some(
        -t * (t - 1.0) * (t - 2.0) / 6.0 * a + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * b
            - (t + 1.0) * t * (t - 2.0) / 2.0 * c
            + (t + 1.0) * t * (t - 1.0) / 6.0 * d,
    )
}

/// (u₁, u₂)(x, t) by cubic interpolation in x and linear interpolation in t.
pub fn interpolate_physical(ptraj: &PhysicalTrajectory, x: f64, t: f64) -> Option<(f64, f64)> {
    let snaps = &ptraj.snapshots;
    let j = snaps.iter().position(|s| s.t >= t)?;
    let at = |k: usize| -> Option<(f64, f64)> {
        Some((
            cubic_at(&ptraj.grid, &snaps[k].u1, x)?,
            cubic_at(&ptraj.grid, &snaps[k].u2, x)?,
        ))
    };
    if j == 0 {
        return if snaps[0].t == t { at(0) } else { None };
    }
    let (t0, t1) = (snaps[j - 1].t, snaps[j].t);
    let (a, b) = (at(j - 1)?, at(j)?);
    let w = (t - t0) / (t1 - t0);
    Some(((1.0 - w) * a.0 + w * b.0, (1.0 - w) * a.1 + w * b.1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateReport {
    pub x0: f64,
    pub k0: f64,
    pub t0: f64,
    pub gap: f64,
    pub tau_max: f64,
    pub sup_abs_diff_u: f64,
    pub sup_abs_diff_v2: f64,
    /// Largest relative deviation along ξ = 0 for τ ≤ tau_max.
    pub center_rel_diff_u: f64,
    pub center_rel_diff_v2: f64,
    pub samples: usize,
}

pub const XI_HALF_WIDTH: f64 = 1.0;
pub const TAU_LIMIT: f64 = 0.9;

/// Compares the rescaled solution near x₀ against the frozen ODE profiles (Û, V̂₂).
pub fn intermediate_profile_check(
    ptraj: &PhysicalTrajectory,
    x0: f64,
    k0: f64,
    params: &Params<f64>,
) -> Result<IntermediateReport> {
    if ptraj.grid.n_dim() != 1 {
        return Err(Error::InvalidParam(
            "intermediate profiles are measured in 1D".into(),
        ));
    }
    let big_t = ptraj
        .t_estimate
        .ok_or_else(|| Error::OutOfRange("no blow-up time estimate".into()))?;
    let gap = solve_t0_gap(x0.abs(), k0, big_t)?;
    let t0 = big_t - gap;
    let (first, last) = match (ptraj.snapshots.first(), ptraj.snapshots.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::OutOfRange("no snapshots".into())),
    };
    if t0 < first || t0 > last {
        return Err(Error::OutOfRange(format!(
            "t0 = {t0:e} outside [{first:e}, {last:e}]"
        )));
    }
    let tau_max = ((last - t0) / gap).min(TAU_LIMIT);
    let scale = gap.powf(1.0 / f64::from(params.p - 1));
    let lng = gap.ln().abs();
    let mut rep = IntermediateReport {
        x0,
        k0,
        t0,
        gap,
        tau_max,
        sup_abs_diff_u: 0.0,
        sup_abs_diff_v2: 0.0,
        center_rel_diff_u: 0.0,
        center_rel_diff_v2: 0.0,
        samples: 0,
    };
    let (nt, nx) = (19usize, 9usize);
    for it in 0..nt {
        let tau = tau_max * it as f64 / (nt - 1) as f64;
        let (uh, vh) = hat_uv(tau, k0, params)?;
        for ix in 0..nx {
            let xi = XI_HALF_WIDTH * (2.0 * ix as f64 / (nx - 1) as f64 - 1.0);
            let x = x0 + xi * gap.sqrt();
            let Some((u1, u2)) = interpolate_physical(ptraj, x, t0 + tau * gap) else {
                continue;
            };
            let (u, v2) = (scale * u1, lng * scale * u2);
            rep.samples += 1;
            rep.sup_abs_diff_u = rep.sup_abs_diff_u.max((u - uh).abs());
            rep.sup_abs_diff_v2 = rep.sup_abs_diff_v2.max((v2 - vh).abs());
            if ix == nx / 2 {
                rep.center_rel_diff_u = rep.center_rel_diff_u.max((u - uh).abs() / uh);
                rep.center_rel_diff_v2 = rep.center_rel_diff_v2.max((v2 - vh).abs() / vh);
            }
        }
    }
    Ok(rep)
}

pub const FINAL_PROFILE_TOLERANCE: f64 = 0.01;

/// Limiting values of (u₁, u₂)(x, t) as t → T: the last snapshot, accepted when it agrees
/// with the latest snapshot taken before max|u| grew by the last tenfold.
pub fn extract_final_profile(ptraj: &PhysicalTrajectory, x: f64) -> Result<(f64, f64)> {
    if x == 0.0 {
        return Err(Error::Domain(
            "final profile is undefined at the blow-up point".into(),
        ));
    }
    let n = ptraj.snapshots.len();
    if n < 2 {
        return Err(Error::NonConvergence {
            x,
            rel_diff: f64::INFINITY,
        });
    }
    let val = |k: usize| -> Result<(f64, f64)> {
        let s = &ptraj.snapshots[k];
        match (
            cubic_at(&ptraj.grid, &s.u1, x),
            cubic_at(&ptraj.grid, &s.u2, x),
        ) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::OutOfRange(format!(
                "x = {x} outside the physical grid"
            ))),
        }
    };
    let peak = |k: usize| {
        let sn = &ptraj.snapshots[k];
        sn.u1
            .iter()
            .zip(&sn.u2)
            .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)))
    };
    let top = peak(n - 1);
    let reference = (0..n - 1)
        .rev()
        .find(|&k| peak(k) <= top / 10.0)
        .unwrap_or(n - 2);
    let (a, b) = (val(reference)?, val(n - 1)?);
    let rel = |p: f64, q: f64| (q - p).abs() / q.abs().max(f64::MIN_POSITIVE);
    let rel_diff = rel(a.0, b.0).max(rel(a.1, b.1));
    if rel_diff < FINAL_PROFILE_TOLERANCE {
        Ok(b)
    } else {
        Err(Error::NonConvergence { x, rel_diff })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    fn grid() -> Grid<f64> {
        Grid::new(1, 60.0, 2401).unwrap()
    }

    #[test]
    fn decompose_h2() {
        let g = grid();
        let ssp = ShrinkingSetParams::default();
        let q = g.sample(|y| y[0] * y[0] - 2.0);
        let d = decompose(&q, 30.0, &ssp).unwrap();
        assert!(d.q0.abs() < 1e-10 && d.q1[0].abs() < 1e-10, "{d:?}");
        assert!((d.q2[0][0] - 2.0).abs() < 1e-10);
        let (_, _, qm) = decompose_fields(&q, 30.0, &ssp).unwrap();
        for k in 0..g.len() {
            if g.node(k).abs() < 10.0 {
                assert!(qm.values[k].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn decompose_constant_and_zero() {
        let g = grid();
        let ssp = ShrinkingSetParams::default();
        let d = decompose(&Field::constant(g, 0.3), 30.0, &ssp).unwrap();
        assert!((d.q0 - 0.3).abs() < 1e-10);
        assert!(d.q_e_norm > 0.29);
        let z = decompose(&Field::zeros(g), 30.0, &ssp).unwrap();
        assert_eq!(z, ModeDecomposition::zero(1));
        assert!(matches!(
            decompose(&Field::zeros(g), 40.0, &ssp),
            Err(Error::GridTooNarrow { .. })
        ));
    }

    #[test]
    fn membership_examples() {
        let ssp = ShrinkingSetParams::default();
        let s = 30.0;
        let z = ModeDecomposition::zero(1);
        let rep = in_shrinking_set(&z, &z, &ssp, s);
        assert!(rep.inside && rep.margins.iter().all(|m| m.margin == 1.0));
        let mut d = z.clone();
        d.q0 = ssp.a / (s * s);
        let rep = in_shrinking_set(&d, &z, &ssp, s);
        assert!(rep.inside && rep.on_boundary && rep.margins[0].margin == 0.0);
        let mut d2 = z.clone();
        d2.q2[0][0] = 2.0 * ssp.a.powi(5) * s.ln() / s.powf(ssp.p1 + 2.0);
        let rep = in_shrinking_set(&z, &d2, &ssp, s);
        assert!(!rep.inside);
        let m = rep.margins.iter().find(|m| m.name == "q2_jk").unwrap();
        assert!((m.margin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_error_of_profile_state() {
        let p: Params<f64> = make_params(2, 1).unwrap();
        let g = grid();
        let s = 30.0;
        let st = SimilarityState::from_profile(s, &Field::zeros(g), &Field::zeros(g), &p).unwrap();
        let (e1, e2) = profile_error(&st, &p);
        assert!((e1 - 1.0 / (4.0 * s)).abs() < 1e-12);
        assert!((e2 - 2.0 / s).abs() < 1e-12);
    }

    #[test]
    fn too_sparse_rejected() {
        let p: Params<f64> = make_params(2, 1).unwrap();
        let g = grid();
        let ssp = ShrinkingSetParams::default();
        let mut traj = Trajectory::default();
        for i in 0..4 {
            let st = SimilarityState::from_profile(
                20.0 + 0.5 * i as f64,
                &Field::zeros(g),
                &Field::zeros(g),
                &p,
            )
            .unwrap();
            traj.records.push(make_record(&st, &p, &ssp).unwrap());
        }
        assert!(matches!(
            mode_ode_residuals(&traj, &ssp, None),
            Err(Error::TooSparse { .. })
        ));
        assert!(matches!(
            inner_fit(&traj, &p),
            Err(Error::InsufficientSpan(_))
        ));
    }

    #[test]
    fn synthetic_mode_series() {
        // Exact solutions of the model ODEs give residuals at the O(Δs²) level only.
        let ssp = ShrinkingSetParams::default();
        let mut traj = Trajectory::default();
        for i in 0..=200 {
            let s = 30.0 + 0.05 * i as f64;
            let mut d1 = ModeDecomposition::zero(1);
            d1.q0 = 1e-12 * (s - 30.0).exp();
            d1.q1[0] = 1e-12 * ((s - 30.0) / 2.0).exp();
            d1.q2[0][0] = 1.0 / (s * s);
            let d2 = ModeDecomposition::zero(1);
            traj.records.push(TrajectoryRecord {
                s,
                membership: in_shrinking_set(&d1, &d2, &ssp, s),
                d1,
                d2,
                e1: 0.0,
                e2: 0.0,
                inner: InnerModes {
                    w1bar_0: 0.0,
                    w1bar_2: 0.0,
                    w2_0: 0.0,
                    w2_2: 0.0,
                },
            });
        }
        let res = mode_ode_residuals(&traj, &ssp, None).unwrap();
        let jk = res.iter().find(|r| r.name == "q1_jk").unwrap();
        assert!(jk.raw.iter().all(|&v| v < 1e-7), "{:?}", &jk.raw[..3]);
        let q20 = res.iter().find(|r| r.name == "q2_0").unwrap();
        assert!(q20.below_noise_floor && q20.slope == 0.0);
    }

    #[test]
    fn percentile_and_slope() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 95.0);
        let s = [10.0, 20.0, 40.0];
        let y = [100.0, 400.0, 1600.0];
        assert!((loglog_slope(&s, &y).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_interpolation_exact_for_cubics() {
        let g = Grid::new(1, 2.0, 41).unwrap();
        let v: Vec<f64> = g.axis().iter().map(|x| x * x * x - x).collect();
        let x = 0.3337;
        assert!((cubic_at(&g, &v, x).unwrap() - (x * x * x - x)).abs() < 1e-13);
        assert!(cubic_at(&g, &v, 2.5).is_none());
    }

    #[test]
    fn final_profile_needs_a_decade_of_stability() {
        use crate::solver::PhysicalSnapshot;
        let g = Grid::new(1, 1.0, 33).unwrap();
        let make = |drift: f64| PhysicalTrajectory {
            grid: g,
            records: vec![],
            snapshots: (0..6)
                .map(|k| {
                    let u1 = (0..33)
                        .map(|i| {
                            if i == 16 {
                                3f64.powi(k)
                            } else {
                                2.0 + drift * k as f64
                            }
                        })
                        .collect();
                    PhysicalSnapshot {
                        t: k as f64,
                        u1,
                        u2: vec![0.5; 33],
                    }
                })
                .collect(),
            t_estimate: Some(6.0),
            rate_slope: None,
        };
        let (u1, u2) = extract_final_profile(&make(0.0), 0.5).unwrap();
        assert!((u1 - 2.0).abs() < 1e-12 && (u2 - 0.5).abs() < 1e-12);
        // 0.4% between neighbours, 1.2% across the last decade of growth.
        assert!(matches!(
            extract_final_profile(&make(0.008), 0.5),
            Err(Error::NonConvergence { .. })
        ));
        assert!(extract_final_profile(&make(0.0), 0.0).is_err());
    }
}
