//! Artifact writers. Every file starts with a header naming the artifact, the crate
//! version and the config hash; nothing time-dependent is written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use heatblow::diagnostics::{ModeDecomposition, TrajectoryRecord};
use heatblow::solver::PhysicalTrajectory;
use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Header {
    pub artifact: String,
    pub version: String,
    pub config_sha256: String,
}

impl Header {
    pub fn new(artifact: &str, config_sha256: &str) -> Self {
        Header {
            artifact: artifact.to_string(),
            version: VERSION.to_string(),
            config_sha256: config_sha256.to_string(),
        }
    }

    fn csv_lines(&self) -> String {
        format!(
            "# artifact: {}\n# version: {}\n# config_sha256: {}\n",
            self.artifact, self.version, self.config_sha256
        )
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: Header,
    #[serde(flatten)]
    body: &'a T,
}

/// Writer bound to one output directory and one config hash.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    /// Writes `{header, ...body}` as pretty JSON; `body` must serialize to an object.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let doc = Document {
            header: Header::new(name, &self.hash),
            body,
        };
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn csv(
        &self,
        name: &str,
        columns: &[String],
        rows: &[Vec<f64>],
    ) -> Result<PathBuf, CliError> {
        let mut text = Header::new(name, &self.hash).csv_lines();
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(',');
                }
                first = false;
                write!(text, "{}", fmt_f64(*v)).expect("write to String");
            }
            text.push('\n');
        }
        self.write(name, &text)
    }
}

/// 17 significant digits, '.' decimal.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn mode_columns(prefix: &str, n: usize, cols: &mut Vec<String>) {
    cols.push(format!("{prefix}_0"));
    for j in 0..n {
        cols.push(format!("{prefix}_j{j}"));
    }
    for j in 0..n {
        for k in 0..n {
            cols.push(format!("{prefix}_jk{j}{k}"));
        }
    }
    cols.push(format!("{prefix}_minus"));
    cols.push(format!("{prefix}_e"));
}

fn mode_values(d: &ModeDecomposition, row: &mut Vec<f64>) {
    row.push(d.q0);
    row.extend(&d.q1);
    for r in &d.q2 {
        row.extend(r);
    }
    row.push(d.q_minus_weighted_norm);
    row.push(d.q_e_norm);
}

/// Columns and rows of trajectory.csv for a similarity run.
///
/// Reference curves: −κ/(4ps) for w̄₁,₂ and c̃₀/s² for w₂,₂, with c̃₀ the fitted limit.
pub fn similarity_table(
    records: &[TrajectoryRecord],
    n: usize,
    a: f64,
    kappa: f64,
    p: u32,
    c0: f64,
) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut cols = vec!["s".to_string()];
    mode_columns("q1", n, &mut cols);
    mode_columns("q2", n, &mut cols);
    for c in [
        "env_a_s2",
        "env_a2lns_s2",
        "e1",
        "e2",
        "w1bar_0",
        "w1bar_2",
        "w2_0",
        "w2_2",
        "ref_w1bar_2",
        "ref_w2_2",
        "min_margin",
        "inside",
    ] {
        cols.push(c.to_string());
    }
    let pf = f64::from(p);
    let rows = records
        .iter()
        .map(|r| {
            let s = r.s;
            let mut row = vec![s];
            mode_values(&r.d1, &mut row);
            mode_values(&r.d2, &mut row);
            row.extend([
                a / (s * s),
                a * a * s.ln() / (s * s),
                r.e1,
                r.e2,
                r.inner.w1bar_0,
                r.inner.w1bar_2,
                r.inner.w2_0,
                r.inner.w2_2,
                -kappa / (4.0 * pf * s),
                c0 / (s * s),
                r.membership.min_margin(),
                if r.membership.inside { 1.0 } else { 0.0 },
            ]);
            row
        })
        .collect();
    (cols, rows)
}

/// Columns and rows of trajectory.csv for a physical run.
pub fn physical_table(ptraj: &PhysicalTrajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let cols = ["t", "dt", "max_abs", "argmax_x"]
        .map(String::from)
        .to_vec();
    let rows = ptraj
        .records
        .iter()
        .map(|r| vec![r.t, r.dt, r.max_abs, ptraj.grid.point(r.argmax)[0]])
        .collect();
    (cols, rows)
}
