//! Mode dispatch: each runner returns a structured outcome and writes its artifacts.

use std::path::Path;

use heatblow::diagnostics::{
    extract_final_profile, inner_fit, intermediate_profile_check, loglog_slope, mode_ode_residuals,
    InnerFit, IntermediateReport, Recorder, ResidualSeries, Trajectory, TrajectoryRecord,
};
use heatblow::params::final_profile_prediction;
use heatblow::rhs::initial_data;
use heatblow::solver::{
    evolve, run_physical_blowup, PhysicalState, PhysicalTrajectory, SimilarityState,
};
use heatblow::verifier::{run_suite, CheckReport, SuiteOptions};
use heatblow::Grid64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::output::{physical_table, similarity_table, Artifacts};

/// Range of a scaled diagnostic over a window of s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub window: (f64, f64),
    pub min: f64,
    pub max: f64,
    /// max / min
    pub ratio: f64,
}

fn band(
    records: &[TrajectoryRecord],
    window: (f64, f64),
    f: impl Fn(&TrajectoryRecord) -> f64,
) -> Option<Band> {
    let vals: Vec<f64> = records
        .iter()
        .filter(|r| r.s >= window.0 - 1e-9 && r.s <= window.1 + 1e-9)
        .map(f)
        .collect();
    if vals.is_empty() {
        return None;
    }
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Band {
        window,
        min,
        max,
        ratio: max / min,
    })
}

fn windowed_slope(
    records: &[TrajectoryRecord],
    window: (f64, f64),
    f: impl Fn(&TrajectoryRecord) -> f64,
) -> Option<f64> {
    let (s, v): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.s >= window.0 - 1e-9 && r.s <= window.1 + 1e-9)
        .map(|r| (r.s, f(r)))
        .unzip();
    loglog_slope(&s, &v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Containment {
    pub inside_all: bool,
    pub min_margin: f64,
    pub worst_bound: String,
    pub worst_s: f64,
    pub first_exit_s: Option<f64>,
}

fn containment(records: &[TrajectoryRecord]) -> Containment {
    let mut c = Containment {
        inside_all: true,
        min_margin: f64::INFINITY,
        worst_bound: String::new(),
        worst_s: f64::NAN,
        first_exit_s: None,
    };
    for r in records {
        if !r.membership.inside {
            c.inside_all = false;
            c.first_exit_s.get_or_insert(r.s);
        }
        for m in &r.membership.margins {
            if m.margin < c.min_margin {
                c.min_margin = m.margin;
                c.worst_bound = m.name.clone();
                c.worst_s = r.s;
            }
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub name: String,
    pub fitted_constant: f64,
    pub slope: f64,
    pub achieved_exponent: f64,
    pub below_noise_floor: bool,
}

impl From<&ResidualSeries> for ResidualSummary {
    fn from(r: &ResidualSeries) -> Self {
        ResidualSummary {
            name: r.name.clone(),
            fitted_constant: r.fitted_constant,
            slope: r.slope,
            achieved_exponent: r.achieved_exponent,
            below_noise_floor: r.below_noise_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityFits {
    pub p: u32,
    pub n_dim: usize,
    pub s0: f64,
    pub s_end: f64,
    pub records: usize,
    /// e1(s)·√s
    pub e1_scaled: Option<Band>,
    /// e2(s)·s^{p1/2}
    pub e2_scaled: Option<Band>,
    pub e1_slope: Option<f64>,
    pub e2_slope: Option<f64>,
    pub inner: Option<InnerFit>,
    pub inner_error: Option<String>,
    /// Limit of s²·w₂,₂ at the end of the run.
    pub c0_tilde: Option<f64>,
    pub residual_window: (f64, f64),
    pub residuals: Vec<ResidualSummary>,
    pub residual_error: Option<String>,
    pub containment: Containment,
}

#[derive(Debug, Clone)]
pub struct SimilarityOutcome {
    pub trajectory: Trajectory,
    pub residuals: Vec<ResidualSeries>,
    pub fits: SimilarityFits,
}

/// Φ(·, s₀) plus the configured perturbation.
pub fn initial_state(cfg: &RunConfig, grid: &Grid64) -> Result<SimilarityState<f64>, CliError> {
    let params = cfg.model_params()?;
    let idp = cfg.initial_data_params();
    let (q1, q2) = initial_data(grid, &idp, &cfg.shrinking_set.cutoff(), &params)?;
    Ok(SimilarityState::from_profile(
        cfg.solver.s0,
        &q1,
        &q2,
        &params,
    )?)
}

pub fn simulate_similarity(cfg: &RunConfig) -> Result<SimilarityOutcome, CliError> {
    let params = cfg.model_params()?;
    let ssp = cfg.shrinking_set;
    let init = initial_state(cfg, &cfg.grid()?)?;
    let mut rec = Recorder::new(params, ssp, cfg.solver.snapshot_s.clone());
    let evo = evolve(init, &cfg.solver_config(), &params, |st| rec.observe(st))?;
    evo.records
        .into_iter()
        .collect::<heatblow::Result<Vec<()>>>()?;
    let trajectory = rec.trajectory;
    let records = &trajectory.records;

    let bw = cfg.band_window();
    let half_p1 = ssp.p1 / 2.0;
    let (inner, inner_error) = match inner_fit(&trajectory, &params) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rw = cfg.residual_window();
    let (residuals, residual_error) = match mode_ode_residuals(&trajectory, &ssp, Some(rw)) {
        Ok(r) => (r, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let fits = SimilarityFits {
        p: params.p,
        n_dim: params.n_dim,
        s0: cfg.solver.s0,
        s_end: cfg.solver.s_end,
        records: records.len(),
        e1_scaled: band(records, bw, |r| r.e1 * r.s.sqrt()),
        e2_scaled: band(records, bw, |r| r.e2 * r.s.powf(half_p1)),
        e1_slope: windowed_slope(records, bw, |r| r.e1),
        e2_slope: windowed_slope(records, bw, |r| r.e2),
        c0_tilde: inner.as_ref().map(|f| f.s2_w22.value_at_end),
        inner,
        inner_error,
        residual_window: rw,
        residuals: residuals.iter().map(ResidualSummary::from).collect(),
        residual_error,
        containment: containment(records),
    };
    Ok(SimilarityOutcome {
        trajectory,
        residuals,
        fits,
    })
}

fn write_similarity(
    cfg: &RunConfig,
    out: &SimilarityOutcome,
    art: &Artifacts,
) -> Result<(), CliError> {
    let params = cfg.model_params()?;
    let c0 = out.fits.c0_tilde.unwrap_or(f64::NAN);
    let (cols, rows) = similarity_table(
        &out.trajectory.records,
        params.n_dim,
        cfg.shrinking_set.a,
        params.kappa,
        params.p,
        c0,
    );
    art.csv("trajectory.csv", &cols, &rows)?;
    art.json("fits.json", &out.fits)?;
    if !out.trajectory.snapshots.is_empty() {
        #[derive(Serialize)]
        struct Snaps<'a> {
            snapshots: &'a [heatblow::diagnostics::FieldSnapshot],
        }
        art.json(
            "snapshots.json",
            &Snaps {
                snapshots: &out.trajectory.snapshots,
            },
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub ln_x: f64,
    pub x: f64,
    pub u1: Option<f64>,
    pub u2: Option<f64>,
    pub predicted_u1: f64,
    pub predicted_u2: f64,
    /// u₁*(x) / prediction
    pub ratio: Option<f64>,
    /// u₂*(x)·|ln|x|| / u₁*(x), expected 2p/(p−1)²
    pub log_ratio: Option<f64>,
    pub log_ratio_expected: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalFits {
    pub p: u32,
    /// e^{−s0}, the blow-up time the initial data are built for.
    pub t_nominal: f64,
    pub t_estimate: Option<f64>,
    pub rate_slope: Option<f64>,
    pub rate_expected: f64,
    pub steps: usize,
    pub growth: f64,
    pub probes: Vec<ProbeResult>,
    pub intermediate: Option<IntermediateReport>,
    pub intermediate_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PhysicalOutcome {
    pub trajectory: PhysicalTrajectory,
    pub fits: PhysicalFits,
}

pub fn simulate_physical(cfg: &RunConfig) -> Result<PhysicalOutcome, CliError> {
    let params = cfg.model_params()?;
    let sim = initial_state(cfg, &cfg.physical_grid()?)?;
    let u0 = PhysicalState::from_similarity(&sim, &params)?;
    let (trajectory, big_t) = run_physical_blowup(u0, &params, &cfg.physical_options())?;
    let pm1 = f64::from(params.p - 1);
    let pf = f64::from(params.p);
    let probes = cfg
        .physical
        .probe_ln
        .iter()
        .map(|&l| {
            let x = (-l).exp();
            let (pu1, pu2) = final_profile_prediction(x, &params).unwrap_or((f64::NAN, f64::NAN));
            let mut pr = ProbeResult {
                ln_x: l,
                x,
                u1: None,
                u2: None,
                predicted_u1: pu1,
                predicted_u2: pu2,
                ratio: None,
                log_ratio: None,
                log_ratio_expected: 2.0 * pf / (pm1 * pm1),
                error: None,
            };
            match extract_final_profile(&trajectory, x) {
                Ok((u1, u2)) => {
                    pr.u1 = Some(u1);
                    pr.u2 = Some(u2);
                    pr.ratio = Some(u1 / pu1);
                    pr.log_ratio = Some(u2 * l / u1);
                }
                Err(e) => pr.error = Some(e.to_string()),
            }
            pr
        })
        .collect();
    let (intermediate, intermediate_error) = match cfg.physical.intermediate_x0 {
        None => (None, None),
        Some(x0) => {
            match intermediate_profile_check(&trajectory, x0, cfg.physical.intermediate_k0, &params)
            {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
    };
    let first = trajectory
        .records
        .first()
        .map(|r| r.max_abs)
        .unwrap_or(f64::NAN);
    let last = trajectory
        .records
        .last()
        .map(|r| r.max_abs)
        .unwrap_or(f64::NAN);
    let fits = PhysicalFits {
        p: params.p,
        t_nominal: (-cfg.solver.s0).exp(),
        t_estimate: Some(big_t),
        rate_slope: trajectory.rate_slope,
        rate_expected: -1.0 / pm1,
        steps: trajectory.records.len() - 1,
        growth: last / first,
        probes,
        intermediate,
        intermediate_error,
    };
    Ok(PhysicalOutcome { trajectory, fits })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub all_pass: bool,
    pub failed: Vec<String>,
    pub reports: Vec<CheckReport>,
}

pub fn verify(cfg: &RunConfig) -> Result<VerifyOutcome, CliError> {
    let opts = SuiteOptions {
        seed: cfg.seed,
        complex_samples: cfg.verify.complex_samples,
        a: cfg.shrinking_set.a,
        p1: cfg.shrinking_set.p1,
        k: cfg.shrinking_set.k,
    };
    let reports = run_suite(&cfg.verify.ps, &cfg.verify.dims, &opts)?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} (p={}, n={})", r.check_name, r.p, r.n_dim))
        .collect();
    Ok(VerifyOutcome {
        all_pass: failed.is_empty(),
        failed,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: u32,
    pub n_dim: usize,
    pub ok: bool,
    pub s_w1bar2: Option<f64>,
    /// −κ/(4p)
    pub expected_s_w1bar2: f64,
    pub c0_tilde: Option<f64>,
    pub e1_slope: Option<f64>,
    pub e2_slope: Option<f64>,
    pub inside_all: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub failures: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn table(&self) -> String {
        let mut t = String::from(
            "p  n  status  s*w1bar2     expected     c0_tilde     e1_slope  e2_slope\n",
        );
        let o =
            |v: Option<f64>, w: usize| v.map_or(format!("{:>w$}", "-"), |x| format!("{x:>w$.6}"));
        for r in &self.rows {
            t.push_str(&format!(
                "{}  {}  {:<6}  {}  {:>11.6}  {}  {}  {}\n",
                r.p,
                r.n_dim,
                if r.ok { "ok" } else { "FAILED" },
                o(r.s_w1bar2, 11),
                r.expected_s_w1bar2,
                o(r.c0_tilde, 11),
                o(r.e1_slope, 8),
                o(r.e2_slope, 8),
            ));
        }
        t
    }
}

/// Runs every (p, n) member independently; a failing member is marked, not fatal.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<SweepOutcome, CliError> {
    let mut members = Vec::new();
    for &p in &cfg.sweep.ps {
        for &n in &cfg.sweep.dims {
            members.push(cfg.sweep_member(p, n));
        }
    }
    let rows: Vec<SweepRow> = members
        .par_iter()
        .map(|m| {
            let expected = heatblow::make_params::<f64>(m.params.p, m.params.n_dim)
                .map(|pr| -pr.kappa / (4.0 * f64::from(pr.p)))
                .unwrap_or(f64::NAN);
            let mut row = SweepRow {
                p: m.params.p,
                n_dim: m.params.n_dim,
                ok: false,
                s_w1bar2: None,
                expected_s_w1bar2: expected,
                c0_tilde: None,
                e1_slope: None,
                e2_slope: None,
                inside_all: None,
                error: None,
            };
            let dir = out.join(format!("p{}_n{}", m.params.p, m.params.n_dim));
            let res = m.validate().and_then(|_| {
                let art = Artifacts::new(&dir, &m.hash())?;
                write_header(m, &art)?;
                let o = simulate_similarity(m)?;
                write_similarity(m, &o, &art)?;
                Ok(o)
            });
            match res {
                Ok(o) => {
                    row.ok = true;
                    row.s_w1bar2 = o.fits.inner.as_ref().map(|f| f.s_w1bar2.value_at_end);
                    row.c0_tilde = o.fits.c0_tilde;
                    row.e1_slope = o.fits.e1_slope;
                    row.e2_slope = o.fits.e2_slope;
                    row.inside_all = Some(o.fits.containment.inside_all);
                }
                Err(e) => {
                    log::warn!(
                        "sweep member p={} n={} failed: {e}",
                        m.params.p,
                        m.params.n_dim
                    );
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect();
    let failures = rows.iter().filter(|r| !r.ok).count();
    Ok(SweepOutcome { failures, rows })
}

#[derive(Serialize)]
struct RunHeader<'a> {
    config: &'a RunConfig,
}

fn write_header(cfg: &RunConfig, art: &Artifacts) -> Result<(), CliError> {
    let mut resolved = cfg.clone();
    resolved.grid.half_width = Some(cfg.half_width());
    resolved.physical.half_width = Some(cfg.physical_half_width());
    art.json("run_header.json", &RunHeader { config: &resolved })?;
    Ok(())
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Similarity(Box<SimilarityOutcome>),
    Physical(Box<PhysicalOutcome>),
    Verify(VerifyOutcome),
    Sweep(SweepOutcome),
}

/// Validates, runs the configured mode and writes its artifacts into `out`.
///
/// Returns the outcome and the exit status: 0 on success, 1 when verification checks
/// fail or some sweep members fail.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<(Outcome, i32), CliError> {
    cfg.validate()?;
    let art = Artifacts::new(out, &cfg.hash())?;
    write_header(cfg, &art)?;
    match cfg.mode {
        Mode::SimulateSimilarity => {
            let o = simulate_similarity(cfg)?;
            write_similarity(cfg, &o, &art)?;
            Ok((Outcome::Similarity(Box::new(o)), 0))
        }
        Mode::SimulatePhysical => {
            let o = simulate_physical(cfg)?;
            let (cols, rows) = physical_table(&o.trajectory);
            art.csv("trajectory.csv", &cols, &rows)?;
            art.json("fits.json", &o.fits)?;
            Ok((Outcome::Physical(Box::new(o)), 0))
        }
        Mode::Verify => {
            let o = verify(cfg)?;
            art.json("verify_report.json", &o)?;
            let code = if o.all_pass { 0 } else { 1 };
            Ok((Outcome::Verify(o), code))
        }
        Mode::Sweep => {
            let o = sweep(cfg, out)?;
            art.json("sweep_summary.json", &o)?;
            let code = if o.failures == 0 { 0 } else { 1 };
            Ok((Outcome::Sweep(o), code))
        }
    }
}

/// `execute`, with failures recorded as error.json in `out` when possible.
pub fn run(cfg: &RunConfig, out: &Path) -> (Option<Outcome>, i32) {
    match execute(cfg, out) {
        Ok((o, code)) => (Some(o), code),
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            if let Ok(art) = Artifacts::new(out, &cfg.hash()) {
                let _ = art.json("error.json", &e.record());
            }
            (None, e.exit_code())
        }
    }
}
