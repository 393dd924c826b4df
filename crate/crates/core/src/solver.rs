//! Time integration in similarity variables (primary) and physical variables (cross-check).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::{phi1_radial, phi2_radial, Params};
use crate::rhs::f1f2;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    SemiImplicit,
    ExplicitRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Boundary nodes pinned to Φ(·, s).
    #[default]
    ProfileClamp,
    /// Zero-gradient copy of the adjacent interior node.
    Extrapolate,
}

/// Largest admissible drift Courant number y_max·ds/(2h) for the explicit stage.
///
/// Heun's method with the second-order upwind stencil is stable up to 0.5.
pub const DRIFT_CFL: f64 = 0.5;
pub const SEMI_IMPLICIT_MAX_DS: f64 = 0.01;
pub const SIMILARITY_BLOWUP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<S> {
    pub ds: S,
    pub scheme: Scheme,
    pub boundary: Boundary,
    pub s_end: S,
    pub record_every: usize,
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.ds > S::zero()) {
            return Err(Error::InvalidParam(format!(
                "ds = {} must be positive",
                self.ds
            )));
        }
        if self.scheme == Scheme::SemiImplicit && self.ds > S::lit(SEMI_IMPLICIT_MAX_DS) {
            return Err(Error::InvalidParam(format!(
                "ds = {} exceeds {SEMI_IMPLICIT_MAX_DS} for the semi-implicit scheme",
                self.ds
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParam("record_every must be >= 1".into()));
        }
        if !self.s_end.is_finite() {
            return Err(Error::InvalidParam("s_end must be finite".into()));
        }
        Ok(())
    }

    /// Number of equal substeps each `ds` step is split into on `grid`.
    pub fn substeps(&self, grid: &Grid<S>) -> usize {
        let h = grid.spacing();
        let y_max = grid.half_width();
        let mut limit = S::lit(DRIFT_CFL) * S::lit(2.0) * h / y_max;
        if self.scheme == Scheme::ExplicitRk4 {
            let diff = S::lit(0.6) * h * h / S::from_usize_lossy(grid.n_dim());
            limit = limit.min(diff);
        }
        (self.ds / limit).ceil().to_usize().unwrap_or(1).max(1)
    }

    pub fn effective_ds(&self, grid: &Grid<S>) -> S {
        self.ds / S::from_usize_lossy(self.substeps(grid))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityState<S> {
    pub s: S,
    pub w1: Field<S>,
    pub w2: Field<S>,
}

impl<S: Scalar> SimilarityState<S> {
    pub fn new(s: S, w1: Field<S>, w2: Field<S>) -> Result<Self> {
        if w1.grid != w2.grid {
            return Err(Error::InvalidParam("w1 and w2 on different grids".into()));
        }
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::Domain("non-finite initial state".into()));
        }
        Ok(SimilarityState { s, w1, w2 })
    }

    /// (Φ₁, Φ₂)(·, s) plus the given perturbation.
    pub fn from_profile(s: S, q1: &Field<S>, q2: &Field<S>, params: &Params<S>) -> Result<Self> {
        let grid = q1.grid;
        let w1 = grid
            .sample(|y| phi1_radial(sq(y), s, params))
            .zip_map(q1, |a, b| a + b);
        let w2 = grid
            .sample(|y| phi2_radial(sq(y), s, params))
            .zip_map(q2, |a, b| a + b);
        Self::new(s, w1, w2)
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.w1.grid
    }

    pub fn max_modulus(&self) -> S {
        self.w1
            .values
            .iter()
            .zip(&self.w2.values)
            .fold(S::zero(), |m, (&a, &b)| m.max(a.hypot(b)))
    }
}

fn sq<S: Scalar>(y: &[S]) -> S {
    y.iter().map(|&v| v * v).sum()
}

/// Thomas solve of −r x_{i−1} + (1+2r) x_i − r x_{i+1} = d_i with the given boundary rows.
fn solve_line<S: Scalar>(d: &mut [S], r: S, boundary: Boundary, cp: &mut [S]) {
    let n = d.len();
    let one = S::one();
    let (a, b, c) = (-r, one + S::lit(2.0) * r, -r);
    // Row 0: clamp keeps x0 = d0; extrapolate imposes x0 − x1 = 0.
    let (b0, c0) = match boundary {
        Boundary::ProfileClamp => (one, S::zero()),
        Boundary::Extrapolate => {
            d[0] = S::zero();
            (one, -one)
        }
    };
    cp[0] = c0 / b0;
    d[0] /= b0;
    for i in 1..n - 1 {
        let m = b - a * cp[i - 1];
        cp[i] = c / m;
        d[i] = (d[i] - a * d[i - 1]) / m;
    }
    let (an, bn) = match boundary {
        Boundary::ProfileClamp => (S::zero(), one),
        Boundary::Extrapolate => {
            d[n - 1] = S::zero();
            (-one, one)
        }
    };
    let m = bn - an * cp[n - 2];
    d[n - 1] = (d[n - 1] - an * d[n - 2]) / m;
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Backward-Euler diffusion, axis by axis.
fn implicit_diffusion<S: Scalar>(v: &mut [S], grid: &Grid<S>, dt: S, boundary: Boundary) {
    let n = grid.points();
    let h = grid.spacing();
    let r = dt / (h * h);
    let mut line = vec![S::zero(); n];
    let mut cp = vec![S::zero(); n];
    if grid.n_dim() == 1 {
        solve_line(v, r, boundary, &mut cp);
        return;
    }
    for j in 0..n {
        for i in 0..n {
            line[i] = v[i * n + j];
        }
        solve_line(&mut line, r, boundary, &mut cp);
        for i in 0..n {
            v[i * n + j] = line[i];
        }
    }
    for i in 0..n {
        solve_line(&mut v[i * n..(i + 1) * n], r, boundary, &mut cp);
    }
}

/// ∂w along one axis, second-order upwind for the outward velocity +y/2.
#[inline]
fn upwind<S: Scalar>(v: &[S], k: usize, stride: usize, y: S, h: S) -> S {
    let three = S::lit(3.0);
    let four = S::lit(4.0);
    let two_h = S::lit(2.0) * h;
    if y > S::zero() {
        (three * v[k] - four * v[k - stride] + v[k - 2 * stride]) / two_h
    } else if y < S::zero() {
        (-three * v[k] + four * v[k + stride] - v[k + 2 * stride]) / two_h
    } else {
        S::zero()
    }
}

#[inline]
fn laplacian<S: Scalar>(v: &[S], k: usize, grid: &Grid<S>) -> S {
    let n = grid.points();
    let h2 = grid.spacing() * grid.spacing();
    let two = S::lit(2.0);
    let mut acc = (v[k + 1] - two * v[k] + v[k - 1]) / h2;
    if grid.n_dim() == 2 {
        acc += (v[k + n] - two * v[k] + v[k - n]) / h2;
    }
    acc
}

struct Workspace<S> {
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Interior neighbour used by the zero-gradient boundary.
    mirror: Vec<usize>,
    coords: Vec<[S; 2]>,
    r2_boundary: Vec<S>,
}

impl<S: Scalar> Workspace<S> {
    fn new(grid: &Grid<S>) -> Self {
        let n = grid.points();
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut mirror = Vec::new();
        let mut r2_boundary = Vec::new();
        for k in 0..grid.len() {
            if grid.is_boundary(k) {
                boundary.push(k);
                let [i, j] = grid.unflatten(k);
                let ci = i.clamp(1, n - 2);
                mirror.push(if grid.n_dim() == 1 {
                    ci
                } else {
                    ci * n + j.clamp(1, n - 2)
                });
                r2_boundary.push(grid.radius_sq(k));
            } else {
                interior.push(k);
            }
        }
        let coords = (0..grid.len()).map(|k| grid.coords(k)).collect();
        Workspace {
            interior,
            boundary,
            mirror,
            coords,
            r2_boundary,
        }
    }

    fn apply_bc(&self, w1: &mut [S], w2: &mut [S], s: S, boundary: Boundary, params: &Params<S>) {
        match boundary {
            Boundary::ProfileClamp => {
                for (&k, &r2) in self.boundary.iter().zip(&self.r2_boundary) {
                    w1[k] = phi1_radial(r2, s, params);
                    w2[k] = phi2_radial(r2, s, params);
                }
            }
            Boundary::Extrapolate => {
                for (&k, &m) in self.boundary.iter().zip(&self.mirror) {
                    w1[k] = w1[m];
                    w2[k] = w2[m];
                }
            }
        }
    }
}

/// Right-hand side of the explicit stage at interior nodes; `with_diffusion` adds Δ.
#[allow(clippy::too_many_arguments)]
fn explicit_rhs<S: Scalar>(
    w1: &[S],
    w2: &[S],
    grid: &Grid<S>,
    ws: &Workspace<S>,
    params: &Params<S>,
    with_diffusion: bool,
    out1: &mut [S],
    out2: &mut [S],
) {
    let n = grid.points();
    let h = grid.spacing();
    let half = S::lit(0.5);
    let inv = params.pm1().recip();
    let two_d = grid.n_dim() == 2;
    let (s1, s2) = if two_d { (n, 1) } else { (1, 0) };
    for &k in &ws.interior {
        let [ya, yb] = ws.coords[k];
        let mut d1 = ya * upwind(w1, k, s1, ya, h);
        let mut d2 = ya * upwind(w2, k, s1, ya, h);
        if two_d {
            d1 += yb * upwind(w1, k, s2, yb, h);
            d2 += yb * upwind(w2, k, s2, yb, h);
        }
        let (f1, f2) = f1f2(w1[k], w2[k], params.p);
        let mut g1 = -half * d1 - w1[k] * inv + f1;
        let mut g2 = -half * d2 - w2[k] * inv + f2;
        if with_diffusion {
            g1 += laplacian(w1, k, grid);
            g2 += laplacian(w2, k, grid);
        }
        out1[k] = g1;
        out2[k] = g2;
    }
}

struct Buffers<S> {
    k1: [Vec<S>; 2],
    k2: [Vec<S>; 2],
    k3: [Vec<S>; 2],
    k4: [Vec<S>; 2],
    tmp: [Vec<S>; 2],
}

impl<S: Scalar> Buffers<S> {
    fn new(len: usize) -> Self {
        let z = || [vec![S::zero(); len], vec![S::zero(); len]];
        Buffers {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            tmp: z(),
        }
    }
}

/// Integrator bound to one grid and configuration; reuses its scratch buffers.
pub struct SimilarityStepper<S> {
    cfg: SolverConfig<S>,
    params: Params<S>,
    grid: Grid<S>,
    substeps: usize,
    ws: Workspace<S>,
    buf: Buffers<S>,
}

impl<S: Scalar> SimilarityStepper<S> {
    pub fn new(grid: Grid<S>, cfg: SolverConfig<S>, params: Params<S>) -> Result<Self> {
        cfg.validate()?;
        if grid.n_dim() != params.n_dim {
            return Err(Error::DimensionMismatch {
                expected: params.n_dim,
                got: grid.n_dim(),
            });
        }
        let substeps = cfg.substeps(&grid);
        if substeps > 1 {
            log::info!(
                "drift CFL: ds {} split into {substeps} substeps of {}",
                cfg.ds,
                cfg.ds / S::from_usize_lossy(substeps)
            );
        }
        let len = grid.len();
        Ok(SimilarityStepper {
            cfg,
            params,
            grid,
            substeps,
            ws: Workspace::new(&grid),
            buf: Buffers::new(len),
        })
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Advances the state by one `ds` step.
    pub fn step(&mut self, mut state: SimilarityState<S>) -> Result<SimilarityState<S>> {
        if state.w1.grid != self.grid {
            return Err(Error::InvalidParam(
                "state grid differs from stepper grid".into(),
            ));
        }
        let dt = self.cfg.ds / S::from_usize_lossy(self.substeps);
        let s0 = state.s;
        for m in 0..self.substeps {
            let s_new = s0 + S::from_usize_lossy(m + 1) * dt;
            match self.cfg.scheme {
                Scheme::SemiImplicit => self.semi_implicit(&mut state, dt, s_new),
                Scheme::ExplicitRk4 => self.rk4(&mut state, dt, s_new),
            }
            state.s = s_new;
            let max = state.max_modulus();
            let limit = S::lit(SIMILARITY_BLOWUP_FACTOR) * self.params.kappa;
            if !max.is_finite() || max > limit {
                return Err(Error::SimilarityBlowup {
                    s: s_new.as_f64(),
                    max_abs: max.as_f64(),
                });
            }
        }
        state.s = s0 + self.cfg.ds;
        Ok(state)
    }

    fn semi_implicit(&mut self, state: &mut SimilarityState<S>, dt: S, s_new: S) {
        let bc = self.cfg.boundary;
        let (w1, w2) = (&mut state.w1.values, &mut state.w2.values);
        self.ws.apply_bc(w1, w2, s_new, bc, &self.params);
        implicit_diffusion(w1, &self.grid, dt, bc);
        implicit_diffusion(w2, &self.grid, dt, bc);

        // Heun stage for drift and reaction.
        let Buffers { k1, k2, tmp, .. } = &mut self.buf;
        let [a1, a2] = k1;
        explicit_rhs(w1, w2, &self.grid, &self.ws, &self.params, false, a1, a2);
        let [t1, t2] = tmp;
        t1.copy_from_slice(w1);
        t2.copy_from_slice(w2);
        for &k in &self.ws.interior {
            t1[k] = w1[k] + dt * a1[k];
            t2[k] = w2[k] + dt * a2[k];
        }
        self.ws.apply_bc(t1, t2, s_new, bc, &self.params);
        let [b1, b2] = k2;
        explicit_rhs(t1, t2, &self.grid, &self.ws, &self.params, false, b1, b2);
        let half = S::lit(0.5) * dt;
        for &k in &self.ws.interior {
            w1[k] += half * (a1[k] + b1[k]);
            w2[k] += half * (a2[k] + b2[k]);
        }
        self.ws.apply_bc(w1, w2, s_new, bc, &self.params);
    }

    fn rk4(&mut self, state: &mut SimilarityState<S>, dt: S, s_new: S) {
        let bc = self.cfg.boundary;
        let s_old = s_new - dt;
        let s_mid = s_old + dt / S::lit(2.0);
        let (w1, w2) = (&mut state.w1.values, &mut state.w2.values);
        let Buffers {
            k1,
            k2,
            k3,
            k4,
            tmp,
        } = &mut self.buf;
        let stage = |src1: &[S], src2: &[S], k: &[Vec<S>; 2], c: S, t: &mut [Vec<S>; 2]| {
            let [t1, t2] = t;
            t1.copy_from_slice(src1);
            t2.copy_from_slice(src2);
            for &i in &self.ws.interior {
                t1[i] = src1[i] + c * k[0][i];
                t2[i] = src2[i] + c * k[1][i];
            }
        };
        let eval = |t: &mut [Vec<S>; 2], s: S, out: &mut [Vec<S>; 2]| {
            let [t1, t2] = t;
            self.ws.apply_bc(t1, t2, s, bc, &self.params);
            let [o1, o2] = out;
            explicit_rhs(t1, t2, &self.grid, &self.ws, &self.params, true, o1, o2);
        };
        tmp[0].copy_from_slice(w1);
        tmp[1].copy_from_slice(w2);
        eval(tmp, s_old, k1);
        stage(w1, w2, k1, dt / S::lit(2.0), tmp);
        eval(tmp, s_mid, k2);
        stage(w1, w2, k2, dt / S::lit(2.0), tmp);
        eval(tmp, s_mid, k3);
        stage(w1, w2, k3, dt, tmp);
        eval(tmp, s_new, k4);
        let sixth = dt / S::lit(6.0);
        let two = S::lit(2.0);
        for &i in &self.ws.interior {
            w1[i] += sixth * (k1[0][i] + two * k2[0][i] + two * k3[0][i] + k4[0][i]);
            w2[i] += sixth * (k1[1][i] + two * k2[1][i] + two * k3[1][i] + k4[1][i]);
        }
        self.ws.apply_bc(w1, w2, s_new, bc, &self.params);
    }
}

pub fn step_similarity<S: Scalar>(
    state: SimilarityState<S>,
    cfg: &SolverConfig<S>,
    params: &Params<S>,
) -> Result<SimilarityState<S>> {
    SimilarityStepper::new(*state.grid(), *cfg, *params)?.step(state)
}

#[derive(Debug, Clone)]
pub struct Evolution<S, R> {
    pub records: Vec<R>,
    pub final_state: SimilarityState<S>,
}

/// Steps from `initial.s` to `cfg.s_end`, calling `observer` on the initial state and
/// after every `record_every` steps.
pub fn evolve<S, R, F>(
    initial: SimilarityState<S>,
    cfg: &SolverConfig<S>,
    params: &Params<S>,
    mut observer: F,
) -> Result<Evolution<S, R>>
where
    S: Scalar,
    F: FnMut(&SimilarityState<S>) -> R,
{
    if initial.s < S::one() {
        return Err(Error::Domain(format!(
            "initial s = {} must be >= 1",
            initial.s
        )));
    }
    let mut stepper = SimilarityStepper::new(*initial.grid(), *cfg, *params)?;
    let s0 = initial.s;
    let span = cfg.s_end - s0;
    let steps = (span / cfg.ds - S::lit(1e-9))
        .ceil()
        .to_usize()
        .unwrap_or(0);
    let mut records = vec![observer(&initial)];
    let mut state = initial;
    for k in 1..=steps {
        let s_before = state.s;
        state = stepper.step(state).map_err(|e| Error::AtStep {
            s: s_before.as_f64(),
            source: Box::new(e),
        })?;
        state.s = s0 + S::from_usize_lossy(k) * cfg.ds;
        if k % cfg.record_every == 0 || k == steps {
            records.push(observer(&state));
        }
    }
    Ok(Evolution {
        records,
        final_state: state,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalState<S> {
    pub t: S,
    pub u1: Field<S>,
    pub u2: Field<S>,
    pub t_estimate: Option<S>,
}

impl<S: Scalar> PhysicalState<S> {
    pub fn max_modulus(&self) -> (S, usize) {
        let mut best = (S::zero(), 0);
        for (k, (&a, &b)) in self.u1.values.iter().zip(&self.u2.values).enumerate() {
            let m = a.hypot(b);
            if m > best.0 {
                best = (m, k);
            }
        }
        best
    }

    /// Physical data u(x, 0) = T^{−1/(p−1)} w(x/√T, −ln T) on the grid x = √T·y.
    pub fn from_similarity(state: &SimilarityState<S>, params: &Params<S>) -> Result<Self> {
        let big_t = (-state.s).exp();
        let g = state.grid();
        let grid = Grid::new(g.n_dim(), g.half_width() * big_t.sqrt(), g.points())?;
        let scale = big_t.powf(-params.pm1().recip());
        let u1 = Field::new(grid, state.w1.values.iter().map(|&v| v * scale).collect())?;
        let u2 = Field::new(grid, state.w2.values.iter().map(|&v| v * scale).collect())?;
        Ok(PhysicalState {
            t: S::zero(),
            u1,
            u2,
            t_estimate: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PhysicalStep<S> {
    pub state: PhysicalState<S>,
    /// Set when the step produced non-finite values; `state` is then the input state.
    pub overflowed: bool,
}

fn reaction_rk4<S: Scalar>(u1: S, u2: S, dt: S, p: u32) -> (S, S) {
    let f = |a: S, b: S| f1f2(a, b, p);
    let half = dt / S::lit(2.0);
    let (a1, b1) = f(u1, u2);
    let (a2, b2) = f(u1 + half * a1, u2 + half * b1);
    let (a3, b3) = f(u1 + half * a2, u2 + half * b2);
    let (a4, b4) = f(u1 + dt * a3, u2 + dt * b3);
    let two = S::lit(2.0);
    let sixth = dt / S::lit(6.0);
    (
        u1 + sixth * (a1 + two * a2 + two * a3 + a4),
        u2 + sixth * (b1 + two * b2 + two * b3 + b4),
    )
}

/// One split step of ∂ₜu = Δu + F(u): implicit diffusion with zero-gradient boundary,
/// then a pointwise RK4 reaction step.
pub fn step_physical<S: Scalar>(
    state: PhysicalState<S>,
    dt: S,
    params: &Params<S>,
) -> Result<PhysicalStep<S>> {
    if !(dt > S::zero()) {
        return Err(Error::InvalidParam(format!("dt = {dt} must be positive")));
    }
    let grid = state.u1.grid;
    let mut u1 = state.u1.values.clone();
    let mut u2 = state.u2.values.clone();
    implicit_diffusion(&mut u1, &grid, dt, Boundary::Extrapolate);
    implicit_diffusion(&mut u2, &grid, dt, Boundary::Extrapolate);
    for (a, b) in u1.iter_mut().zip(u2.iter_mut()) {
        let (x, y) = reaction_rk4(*a, *b, dt, params.p);
        *a = x;
        *b = y;
    }
    if u1.iter().chain(&u2).any(|v| !v.is_finite()) {
        return Ok(PhysicalStep {
            state,
            overflowed: true,
        });
    }
    let next = PhysicalState {
        t: state.t + dt,
        u1: Field { grid, values: u1 },
        u2: Field { grid, values: u2 },
        t_estimate: state.t_estimate,
    };
    Ok(PhysicalStep {
        state: next,
        overflowed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRunOptions {
    /// dt = dt_factor · m^{1−p}, with m the max|u| at the last refresh.
    pub dt_factor: f64,
    /// dt is refreshed each time max|u| grows by this factor.
    pub shrink_factor: f64,
    /// Stop once max|u| has grown by this factor over its initial value.
    pub growth_stop: f64,
    pub max_steps: usize,
    pub snapshot_every: usize,
}

impl Default for PhysicalRunOptions {
    fn default() -> Self {
        PhysicalRunOptions {
            dt_factor: 1e-3,
            shrink_factor: 2.0,
            growth_stop: 1e6,
            max_steps: 2_000_000,
            snapshot_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRecord {
    pub t: f64,
    pub dt: f64,
    pub max_abs: f64,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSnapshot {
    pub t: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalTrajectory {
    pub grid: Grid<f64>,
    pub records: Vec<PhysicalRecord>,
    pub snapshots: Vec<PhysicalSnapshot>,
    pub t_estimate: Option<f64>,
    /// Fitted exponent of max|u| against (T − t); the constant-solution rate is −1/(p−1).
    pub rate_slope: Option<f64>,
}

/// Linear least squares y ≈ a + b x.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Blow-up time and rate exponent from the last decade of growth.
pub fn estimate_blowup_time(records: &[PhysicalRecord], p: u32) -> Option<(f64, f64)> {
    let last = records.last()?;
    let from = records
        .iter()
        .position(|r| r.max_abs >= last.max_abs / 10.0)?;
    let window = &records[from..];
    let t: Vec<f64> = window.iter().map(|r| r.t).collect();
    let inv: Vec<f64> = window
        .iter()
        .map(|r| r.max_abs.powf(1.0 - f64::from(p)))
        .collect();
    let (a, b) = linear_fit(&t, &inv)?;
    if b >= 0.0 {
        return None;
    }
    let big_t = -a / b;
    let pts: Vec<(f64, f64)> = window
        .iter()
        .filter(|r| big_t - r.t > 0.0)
        .map(|r| ((big_t - r.t).ln(), r.max_abs.ln()))
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let slope = linear_fit(&lx, &ly).map(|(_, s)| s).unwrap_or(f64::NAN);
    Some((big_t, slope))
}

/// Integrates toward blow-up with dt tied to the constant-solution timescale.
pub fn run_physical_blowup(
    u0: PhysicalState<f64>,
    params: &Params<f64>,
    opts: &PhysicalRunOptions,
) -> Result<(PhysicalTrajectory, f64)> {
    if !(opts.shrink_factor > 1.0) || !(opts.dt_factor > 0.0) || !(opts.growth_stop > 1.0) {
        return Err(Error::InvalidParam(
            "physical run options out of range".into(),
        ));
    }
    let grid = u0.u1.grid;
    let pm1 = f64::from(params.p - 1);
    let (m0, arg0) = u0.max_modulus();
    if !(m0 > 0.0) {
        return Err(Error::NoBlowup("initial data vanish identically".into()));
    }
    let snap = |s: &PhysicalState<f64>| PhysicalSnapshot {
        t: s.t,
        u1: s.u1.values.clone(),
        u2: s.u2.values.clone(),
    };
    let mut records = vec![PhysicalRecord {
        t: 0.0,
        dt: 0.0,
        max_abs: m0,
        argmax: arg0,
    }];
    let mut snapshots = vec![snap(&u0)];
    let mut m_ref = m0;
    let mut dt = opts.dt_factor * m_ref.powf(-pm1);
    let mut peak = m0;
    let mut state = u0;
    let stop = opts.growth_stop * m0;
    for step in 1..=opts.max_steps {
        let out = step_physical(state, dt, params)?;
        if out.overflowed {
            log::warn!("overflow at t = {}; stopping", out.state.t);
            state = out.state;
            break;
        }
        state = out.state;
        let (m, arg) = state.max_modulus();
        records.push(PhysicalRecord {
            t: state.t,
            dt,
            max_abs: m,
            argmax: arg,
        });
        if step % opts.snapshot_every.max(1) == 0 {
            snapshots.push(snap(&state));
        }
        peak = peak.max(m);
        if m >= stop {
            break;
        }
        if m < 0.9 * peak {
            return Err(Error::NoBlowup(format!(
                "max|u| fell from its peak {peak:e} to {m:e} at t = {:e}",
                state.t
            )));
        }
        if m >= opts.shrink_factor * m_ref {
            m_ref = m;
            dt = opts.dt_factor * m_ref.powf(-pm1);
        }
    }
    if snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(snap(&state));
    }
    let last = records.last().map(|r| r.max_abs).unwrap_or(m0);
    if last < stop {
        return Err(Error::NoBlowup(format!(
            "max|u| grew only by {:.3e} in {} steps",
            last / m0,
            records.len() - 1
        )));
    }
    let (big_t, slope) = estimate_blowup_time(&records, params.p)
        .ok_or_else(|| Error::NoBlowup("blow-up law fit failed".into()))?;
    let traj = PhysicalTrajectory {
        grid,
        records,
        snapshots,
        t_estimate: Some(big_t),
        rate_slope: Some(slope),
    };
    Ok((traj, big_t))
}
