//! Similarity-variable run from unperturbed initial data, printing a few diagnostics.
//!
//! cargo run --release -p heatblow --example desk_run

use heatblow::diagnostics::{Recorder, ShrinkingSetParams};
use heatblow::rhs::{initial_data, InitialDataParams};
use heatblow::solver::{evolve, SimilarityState, SolverConfig};
use heatblow::{make_params, Grid64, Params64};

fn main() -> heatblow::Result<()> {
    let params: Params64 = make_params(2, 1)?;
    let ssp = ShrinkingSetParams::default();
    let (s0, s_end) = (25.0f64, 60.0f64);
    let grid = Grid64::new(1, 2.0 * ssp.k * s_end.sqrt() + 10.0, 4097)?;
    let cfg = SolverConfig {
        ds: 5e-3,
        s_end,
        record_every: 20,
        scheme: Default::default(),
        boundary: Default::default(),
    };
    let idp = InitialDataParams::zero(ssp.a, s0, ssp.p1, 1);
    let (q1, q2) = initial_data(&grid, &idp, &ssp.cutoff(), &params)?;
    let init = SimilarityState::from_profile(s0, &q1, &q2, &params)?;
    let mut rec = Recorder::new(params, ssp, vec![]);
    let evo = evolve(init, &cfg, &params, |st| rec.observe(st))?;
    evo.records
        .into_iter()
        .collect::<heatblow::Result<Vec<_>>>()?;
    for r in rec.trajectory.records.iter().step_by(50) {
        println!(
            "s={:6.2} e1*sqrt(s)={:.4} e2*s^p1/2={:.4} s*w1bar2={:.5} s2*w22={:.5} q1_0={:.3e} min_margin={:.3}",
            r.s,
            r.e1 * r.s.sqrt(),
            r.e2 * r.s.powf(ssp.p1 / 2.0),
            r.s * r.inner.w1bar_2,
            r.s * r.s * r.inner.w2_2,
            r.d1.q0,
            r.membership.min_margin()
        );
    }
    Ok(())
}
