//! Run configuration: a TOML file with every field defaulted, validated as a whole.

use std::path::Path;

use heatblow::diagnostics::ShrinkingSetParams;
use heatblow::params::P_MAX;
use heatblow::rhs::InitialDataParams;
use heatblow::solver::{Boundary, PhysicalRunOptions, Scheme, SolverConfig, SEMI_IMPLICIT_MAX_DS};
use heatblow::{make_params, Grid64, Params64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    SimulateSimilarity,
    SimulatePhysical,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub p: u32,
    pub n_dim: usize,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection { p: 2, n_dim: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Half-width L; when absent, 2K√s_end + 10.
    pub half_width: Option<f64>,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            half_width: None,
            points: 4097,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub ds: f64,
    pub s0: f64,
    pub s_end: f64,
    pub scheme: Scheme,
    pub boundary: Boundary,
    pub record_every: usize,
    /// s values at which full fields are kept.
    pub snapshot_s: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            ds: 5e-3,
            s0: 25.0,
            s_end: 60.0,
            scheme: Scheme::SemiImplicit,
            boundary: Boundary::ProfileClamp,
            record_every: 20,
            snapshot_s: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialDataSection {
    pub d1_0: f64,
    /// Empty means the zero vector.
    pub d1_1: Vec<f64>,
    pub d2_0: f64,
    pub d2_1: Vec<f64>,
    pub d2_2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalSection {
    /// Half-width in similarity units of the grid the physical data are built on;
    /// 2K√s0 when absent. The physical half-width is this times √T.
    pub half_width: Option<f64>,
    pub points: usize,
    pub dt_factor: f64,
    pub shrink_factor: f64,
    pub growth_stop: f64,
    pub max_steps: usize,
    pub snapshot_every: usize,
    /// Probe points for the final profile, given as |ln|x||.
    pub probe_ln: Vec<f64>,
    /// Optional intermediate-profile check at x₀ with |x₀| = K₀√(θ|ln θ|).
    pub intermediate_x0: Option<f64>,
    pub intermediate_k0: f64,
}

impl Default for PhysicalSection {
    fn default() -> Self {
        let o = PhysicalRunOptions::default();
        PhysicalSection {
            half_width: None,
            points: 65537,
            dt_factor: o.dt_factor,
            shrink_factor: o.shrink_factor,
            growth_stop: 1e4,
            max_steps: o.max_steps,
            snapshot_every: o.snapshot_every,
            probe_ln: vec![10.0, 11.5, 13.0],
            intermediate_x0: None,
            intermediate_k0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitsSection {
    /// Start of the profile-error band window; s0 + 10 when absent.
    pub band_start: Option<f64>,
    /// Start of the mode-ODE residual window; s0 + 5 when absent.
    pub residual_start: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub ps: Vec<u32>,
    pub dims: Vec<usize>,
    pub complex_samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            ps: vec![2, 3, 4],
            dims: vec![1, 2],
            complex_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub ps: Vec<u32>,
    pub dims: Vec<usize>,
    /// Points per axis for two-dimensional runs; one-dimensional runs use grid.points.
    pub points_2d: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ps: vec![2, 3, 4],
            dims: vec![1, 2],
            points_2d: 257,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(skip_serializing)]
    pub output: Option<String>,
    pub params: ParamsSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub shrinking_set: ShrinkingSetParams,
    pub initial_data: InitialDataSection,
    pub physical: PhysicalSection,
    pub fits: FitsSection,
    pub verify: VerifySection,
    pub sweep: SweepSection,
}

/// Largest record spacing in s for the mode-ODE residuals.
pub const MAX_RECORD_SPACING: f64 = heatblow::diagnostics::MAX_RECORD_SPACING;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Config with every default filled in, as written into output headers.
    pub fn resolved_toml(&self) -> String {
        let mut c = self.clone();
        c.grid.half_width = Some(self.half_width());
        c.physical.half_width = Some(self.physical_half_width());
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn band_window(&self) -> (f64, f64) {
        (
            self.fits.band_start.unwrap_or(self.solver.s0 + 10.0),
            self.solver.s_end,
        )
    }

    pub fn residual_window(&self) -> (f64, f64) {
        (
            self.fits.residual_start.unwrap_or(self.solver.s0 + 5.0),
            self.solver.s_end,
        )
    }

    /// The configuration of one sweep member.
    pub fn sweep_member(&self, p: u32, n_dim: usize) -> RunConfig {
        let mut c = self.clone();
        c.mode = Mode::SimulateSimilarity;
        c.params = ParamsSection { p, n_dim };
        if n_dim == 2 {
            c.grid.points = self.sweep.points_2d;
        }
        c.initial_data = InitialDataSection::default();
        c
    }

    pub fn half_width(&self) -> f64 {
        self.grid
            .half_width
            .unwrap_or(2.0 * self.shrinking_set.k * self.solver.s_end.max(0.0).sqrt() + 10.0)
    }

    pub fn physical_half_width(&self) -> f64 {
        self.physical
            .half_width
            .unwrap_or(2.0 * self.shrinking_set.k * self.solver.s0.max(0.0).sqrt())
    }

    pub fn physical_grid(&self) -> Result<Grid64, CliError> {
        Grid64::new(1, self.physical_half_width(), self.physical.points)
            .map_err(|e| CliError::Invalid(vec![e.to_string()]))
    }

    pub fn model_params(&self) -> Result<Params64, CliError> {
        make_params(self.params.p, self.params.n_dim)
            .map_err(|e| CliError::Invalid(vec![e.to_string()]))
    }

    pub fn grid(&self) -> Result<Grid64, CliError> {
        Grid64::new(self.params.n_dim, self.half_width(), self.grid.points)
            .map_err(|e| CliError::Invalid(vec![e.to_string()]))
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            ds: self.solver.ds,
            scheme: self.solver.scheme,
            boundary: self.solver.boundary,
            s_end: self.solver.s_end,
            record_every: self.solver.record_every,
        }
    }

    pub fn initial_data_params(&self) -> InitialDataParams<f64> {
        let n = self.params.n_dim;
        let d = &self.initial_data;
        let or_zero = |v: &Vec<f64>| {
            if v.is_empty() {
                vec![0.0; n]
            } else {
                v.clone()
            }
        };
        InitialDataParams {
            a: self.shrinking_set.a,
            s0: self.solver.s0,
            p1: self.shrinking_set.p1,
            d1_0: d.d1_0,
            d1_1: or_zero(&d.d1_1),
            d2_0: d.d2_0,
            d2_1: or_zero(&d.d2_1),
            d2_2: if d.d2_2.is_empty() {
                vec![vec![0.0; n]; n]
            } else {
                d.d2_2.clone()
            },
        }
    }

    pub fn physical_options(&self) -> PhysicalRunOptions {
        let ph = &self.physical;
        PhysicalRunOptions {
            dt_factor: ph.dt_factor,
            shrink_factor: ph.shrink_factor,
            growth_stop: ph.growth_stop,
            max_steps: ph.max_steps,
            snapshot_every: ph.snapshot_every,
        }
    }

    /// Checks every field and cross-field constraint, collecting all violations.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let p = self.params.p;
        let n = self.params.n_dim;
        if !(2..=P_MAX).contains(&p) {
            errs.push(format!("params.p = {p} must lie in 2..={P_MAX}"));
        }
        if !(1..=2).contains(&n) {
            errs.push(format!("params.n_dim = {n} must be 1 or 2"));
        }
        if let Err(e) = self.shrinking_set.validate() {
            errs.push(format!("shrinking_set: {e}"));
        }
        match self.mode {
            Mode::SimulateSimilarity | Mode::SimulatePhysical | Mode::Sweep => {
                self.validate_simulation(&mut errs);
            }
            Mode::Verify => {}
        }
        if self.mode == Mode::SimulatePhysical {
            self.validate_physical(&mut errs);
        }
        if self.mode == Mode::Verify {
            for &q in &self.verify.ps {
                if !(2..=P_MAX).contains(&q) {
                    errs.push(format!("verify.ps contains {q}, outside 2..={P_MAX}"));
                }
            }
            for &d in &self.verify.dims {
                if !(1..=2).contains(&d) {
                    errs.push(format!("verify.dims contains {d}, must be 1 or 2"));
                }
            }
            if self.verify.complex_samples == 0 {
                errs.push("verify.complex_samples must be positive".into());
            }
        }
        if self.mode == Mode::Sweep {
            for &q in &self.sweep.ps {
                if !(2..=P_MAX).contains(&q) {
                    errs.push(format!("sweep.ps contains {q}, outside 2..={P_MAX}"));
                }
            }
            for &d in &self.sweep.dims {
                if !(1..=2).contains(&d) {
                    errs.push(format!("sweep.dims contains {d}, must be 1 or 2"));
                }
            }
            if self.sweep.dims.contains(&2) {
                let pts = self.sweep.points_2d;
                if pts < heatblow::grid::MIN_POINTS || pts.is_multiple_of(2) {
                    errs.push(format!(
                        "sweep.points_2d = {pts} must be odd and >= {}",
                        heatblow::grid::MIN_POINTS
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(errs))
        }
    }

    fn validate_simulation(&self, errs: &mut Vec<String>) {
        let sv = &self.solver;
        let l = self.half_width();
        let pts = self.grid.points;
        if !(l > 0.0) || !l.is_finite() {
            errs.push(format!("grid.half_width = {l} must be positive"));
        }
        if pts < heatblow::grid::MIN_POINTS || pts.is_multiple_of(2) {
            errs.push(format!(
                "grid.points = {pts} must be odd and >= {}",
                heatblow::grid::MIN_POINTS
            ));
        }
        if !(sv.s0 >= 1.0) {
            errs.push(format!("solver.s0 = {} must be >= 1", sv.s0));
        }
        if !(sv.s_end > sv.s0) {
            errs.push(format!(
                "solver.s_end = {} must exceed s0 = {}",
                sv.s_end, sv.s0
            ));
        }
        if !(sv.ds > 0.0) {
            errs.push(format!("solver.ds = {} must be positive", sv.ds));
        } else if sv.scheme == Scheme::SemiImplicit && sv.ds > SEMI_IMPLICIT_MAX_DS {
            errs.push(format!(
                "solver.ds = {} exceeds {SEMI_IMPLICIT_MAX_DS}",
                sv.ds
            ));
        }
        if sv.record_every == 0 {
            errs.push("solver.record_every must be >= 1".into());
        } else if sv.record_every as f64 * sv.ds > MAX_RECORD_SPACING + 1e-12 {
            errs.push(format!(
                "solver.record_every * ds = {} exceeds {MAX_RECORD_SPACING}, too sparse for mode-ODE residuals",
                sv.record_every as f64 * sv.ds
            ));
        }
        let need = 2.0 * self.shrinking_set.k * sv.s_end.max(0.0).sqrt();
        if l < need {
            errs.push(format!(
                "grid.half_width = {l} does not cover 2K*sqrt(s_end) = {need}"
            ));
        }
        if let (Ok(g), true) = (
            Grid64::new(
                self.params.n_dim.clamp(1, 2),
                l.max(1e-300),
                pts.max(17) | 1,
            ),
            sv.ds > 0.0,
        ) {
            let k = self.solver_config().substeps(&g);
            if k > 10_000 {
                errs.push(format!(
                    "drift CFL requires {k} substeps per step; reduce ds or refine"
                ));
            }
        }
        if self.mode != Mode::Sweep {
            if let Err(e) = self.initial_data_params().validate(self.params.n_dim) {
                errs.push(format!("initial_data: {e}"));
            }
        }
    }

    fn validate_physical(&self, errs: &mut Vec<String>) {
        let ph = &self.physical;
        if self.params.n_dim != 1 {
            errs.push("simulate-physical runs in one space dimension".into());
        }
        if !(ph.dt_factor > 0.0) {
            errs.push("physical.dt_factor must be positive".into());
        }
        if !(ph.shrink_factor > 1.0) {
            errs.push("physical.shrink_factor must exceed 1".into());
        }
        if !(ph.growth_stop > 1.0) {
            errs.push("physical.growth_stop must exceed 1".into());
        }
        if ph.snapshot_every == 0 || ph.max_steps == 0 {
            errs.push("physical.snapshot_every and physical.max_steps must be positive".into());
        }
        let ly = self.physical_half_width();
        let need = 2.0 * self.shrinking_set.k * self.solver.s0.max(0.0).sqrt();
        if !(ly >= need) {
            errs.push(format!(
                "physical.half_width = {ly} does not cover 2K*sqrt(s0) = {need}"
            ));
        }
        let pts = ph.points;
        if pts < heatblow::grid::MIN_POINTS || pts.is_multiple_of(2) {
            errs.push(format!(
                "physical.points = {pts} must be odd and >= {}",
                heatblow::grid::MIN_POINTS
            ));
        }
        let big_t = (-self.solver.s0).exp();
        let xmax = ly * big_t.sqrt();
        for &l in &ph.probe_ln {
            let x = (-l).exp();
            if !(l > 0.0) || x >= xmax {
                errs.push(format!(
                    "physical.probe_ln = {l} gives x = {x:e} outside the physical grid (|x| < {xmax:e})"
                ));
            }
        }
        if let Some(x0) = ph.intermediate_x0 {
            if !(x0 > 0.0 && x0 < xmax) || !(ph.intermediate_k0 > 0.0) {
                errs.push("physical.intermediate_x0 must lie inside the grid and K0 > 0".into());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_desk_run() {
        let c = RunConfig::default();
        assert!(c.validate().is_ok());
        assert!((c.half_width() - (10.0 * 60f64.sqrt() + 10.0)).abs() < 1e-12);
        assert_eq!(c.grid().unwrap().points(), 4097);
    }

    #[test]
    fn coverage_violation_is_named() {
        let c = RunConfig::from_toml("[grid]\nhalf_width = 50.0\n").unwrap();
        match c.validate() {
            Err(CliError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("2K*sqrt(s_end)"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_errors_listed() {
        let c =
            RunConfig::from_toml("[params]\np = 12\n[solver]\nds = 0.5\ns_end = 10.0\n").unwrap();
        match c.validate() {
            Err(CliError::Invalid(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[grid]\nwidth = 3\n").is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = RunConfig::default();
        let h = a.hash();
        a.output = Some("elsewhere".into());
        assert_eq!(h, a.hash());
        a.seed = 4;
        assert_ne!(h, a.hash());
    }
}
