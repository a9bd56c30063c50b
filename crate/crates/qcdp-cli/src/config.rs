//! Experiment configuration and the run manifest.
//!
//! A config is a JSON object whose fields all have defaults; a manifest
//! written by a previous run is accepted as a config, so reruns from a saved
//! manifest reproduce its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qcdp::disorder::{DisorderModel, Regime, ThetaMode};
use qcdp::polymer_sim::{TestFunction, Truncation};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Disorder law: `gaussian`, `rademacher`, `bernoulli:p` or `discrete:v1:w1,v2:w2,...`.
    pub law: String,
    /// System sizes N.
    pub n: Vec<usize>,
    /// Block counts M.
    pub m: Vec<usize>,
    /// Block indices to simulate; all of 1..=M when absent.
    pub blocks: Option<Vec<usize>>,
    /// `sqrt_log`, `pow:α` or `fixed:v`.
    pub theta_mode: String,
    /// `quasi-critical` or `critical-window`.
    pub regime: String,
    /// Test function, e.g. `indicator:1`, `bump:1`, `rect:x0,y0,x1,y1`.
    pub phi: String,
    pub replicas: usize,
    pub seed: u64,
    /// Light-cone factor b of the simulation box; `null` keeps the full cone.
    pub buffer: Option<f64>,
    /// Tail mass ε discarded by the simulation box.
    pub buffer_eps: f64,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    pub workers: usize,
    pub out: PathBuf,
    /// Gauss-Legendre order for the continuum integrals.
    pub quadrature_order: usize,
    /// Time intervals (a, b] ⊂ [0, 1] for `limit-variance`.
    pub intervals: Vec<[f64; 2]>,
    /// Refuse simulations with more site updates than this.
    pub budget_site_updates: f64,
    /// `moment-check` and `bound-check` grid: laws, β, h and L.
    pub moment_laws: Vec<String>,
    pub moment_betas: Vec<f64>,
    pub moment_h: Vec<usize>,
    pub moment_l: Vec<usize>,
    /// Extra (h, L) pairs appended to the grid.
    pub moment_extra: Vec<[usize; 2]>,
    /// Random-walk constant 𝖼 for the bounds; fitted when absent.
    pub walk_constant: Option<f64>,
    /// `exact` or `uniform`.
    pub constants_mode: String,
    /// Replicas for the Monte Carlo fourth moments of `bound-check`.
    pub bound_replicas: usize,
    /// Largest n of the random-walk checks.
    pub rw_n_max: u64,
    pub rw_t_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            law: "gaussian".into(),
            n: vec![256],
            m: vec![1, 4],
            blocks: None,
            theta_mode: "sqrt_log".into(),
            regime: "quasi-critical".into(),
            phi: "indicator:1".into(),
            replicas: 1000,
            seed: 0,
            buffer: Some(1.0),
            buffer_eps: 1e-8,
            workers: 0,
            out: PathBuf::from("out"),
            quadrature_order: 10,
            intervals: vec![[0.0, 1.0]],
            budget_site_updates: 2e12,
            moment_laws: vec!["gaussian".into(), "rademacher".into()],
            moment_betas: vec![0.3, 0.7],
            moment_h: vec![2, 3],
            moment_l: vec![2, 3],
            moment_extra: vec![[4, 2]],
            walk_constant: None,
            constants_mode: "exact".into(),
            bound_replicas: 0,
            rw_n_max: 128,
            rw_t_grid: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
        }
    }
}

/// The config with every string field parsed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: DisorderModel,
    pub theta_mode: ThetaMode,
    pub regime: Regime,
    pub phi: TestFunction,
    pub truncation: Truncation,
    pub moment_laws: Vec<DisorderModel>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let body = match value.get("config") {
            Some(c) => c.clone(),
            None => value,
        };
        serde_json::from_value(body).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        let truncation = match self.buffer {
            Some(b) => Truncation::new(b, self.buffer_eps).map_err(|e| cfg(&e))?,
            None => Truncation::exact(),
        };
        for &n in &self.n {
            if n < 2 {
                return Err(CliError::Config(format!("N = {n} must be at least 2")));
            }
            for &m in &self.m {
                if m == 0 || n % m != 0 {
                    return Err(CliError::Config(format!("N = {n} is not divisible by M = {m}")));
                }
            }
        }
        if self.intervals.iter().any(|[a, b]| !(0.0 <= *a && a < b && *b <= 1.0)) {
            return Err(CliError::Config("intervals must satisfy 0 ≤ a < b ≤ 1".into()));
        }
        if !matches!(self.constants_mode.as_str(), "exact" | "uniform") {
            return Err(CliError::Config(format!(
                "constants_mode '{}' is not 'exact' or 'uniform'",
                self.constants_mode
            )));
        }
        Ok(Resolved {
            model: self.law.parse().map_err(|e| cfg(&e))?,
            theta_mode: self.theta_mode.parse().map_err(|e| cfg(&e))?,
            regime: self.regime.parse().map_err(|e| cfg(&e))?,
            phi: self.phi.parse().map_err(|e| cfg(&e))?,
            truncation,
            moment_laws: self
                .moment_laws
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(|e| cfg(&e))?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct ThetaEntry {
    pub n: usize,
    pub theta: f64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub resolved_theta: Vec<ThetaEntry>,
    pub versions: Versions,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub qcdp: &'static str,
    pub qcdp_cli: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            qcdp: qcdp::VERSION,
            qcdp_cli: env!("CARGO_PKG_VERSION"),
        }
    }
}
