//! Scenario configuration: one JSON document with system, synthesis,
//! reference, simulation and output blocks.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{rows_matrix, DocumentError, SystemSpec};
use crate::sdp::SdpOptions;
use crate::simulate::{Reference, SimError};
use crate::synthesis::{Domain, Mode, Objective, SynthesisConfig};
use crate::system::ControlAffineSystem;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Document(#[from] DocumentError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

fn default_grid() -> usize {
    9
}
fn default_degree() -> u32 {
    2
}
fn default_alpha1() -> f64 {
    0.1
}
fn default_alpha2() -> f64 {
    10.0
}
fn default_margin() -> f64 {
    1e-6
}
fn default_rho_max() -> f64 {
    100.0
}
fn default_samples() -> usize {
    4096
}
fn default_mode() -> Mode {
    Mode::Stabilize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisBlock {
    pub domain: Domain,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_degree")]
    pub basis_degree: u32,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    #[serde(default = "default_alpha2")]
    pub alpha2: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_diagonal: Option<Vec<usize>>,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default = "default_samples")]
    pub verify_samples: usize,
}

impl SynthesisBlock {
    pub fn to_config(&self, n: usize, m: usize) -> Result<SynthesisConfig, ConfigError> {
        let mut cfg = SynthesisConfig::new(self.domain.clone());
        cfg.grid = self.grid;
        cfg.basis_degree = self.basis_degree;
        cfg.lambda = self.lambda;
        cfg.mode = self.mode;
        cfg.alpha1 = self.alpha1;
        cfg.alpha2 = self.alpha2;
        cfg.margin = self.margin;
        cfg.q = self.q.as_ref().map(|q| rows_matrix(q, n, n, "Q")).transpose()?;
        cfg.r = self.r.as_ref().map(|r| rows_matrix(r, m, m, "R")).transpose()?;
        cfg.block_diagonal = self.block_diagonal.clone();
        cfg.rho_max = self.rho_max;
        cfg.objective = self.objective;
        cfg.verify_samples = self.verify_samples;
        cfg.solver = SdpOptions::default();
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceBlock {
    Equilibrium {
        x: Vec<f64>,
        u: Vec<f64>,
    },
    Harmonic {
        omega: f64,
        x_offset: Vec<f64>,
        x_sin: Vec<f64>,
        x_cos: Vec<f64>,
        u_offset: Vec<f64>,
        u_sin: Vec<f64>,
        u_cos: Vec<f64>,
    },
    /// Inline samples, or a CSV file with header `t,x1..xn,u1..um`.
    Tabulated {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        times: Vec<f64>,
        #[serde(default)]
        states: Vec<Vec<f64>>,
        #[serde(default)]
        controls: Vec<Vec<f64>>,
    },
}

fn default_dt() -> f64 {
    1e-3
}
fn default_interval() -> f64 {
    0.1
}
fn default_segments() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Geodesic,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub x0: Vec<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub controller: ControllerKind,
    /// Riemannian distance sampling interval; 0 disables it.
    #[serde(default = "default_interval")]
    pub distance_interval: f64,
    #[serde(default = "default_segments")]
    pub geodesic_segments: usize,
    /// Stop once the tracking error falls below this (guaranteed-cost runs
    /// default to 1e-6 with T capped at 50).
    #[serde(default)]
    pub stop_below_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub certificate: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub synthesis: SynthesisBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    /// Directory relative paths resolve against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        if let Some(ReferenceBlock::Tabulated { path: Some(p), .. }) = &self.reference {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(ConfigError::Invalid(format!(
                    "reference file {} does not exist",
                    full.display()
                )));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let (n, m) = (self.system.n, self.system.m);
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.synthesis.domain.dim() != n {
            return bad(format!("synthesis domain has {} axes, system has n = {n}", self.synthesis.domain.dim()));
        }
        if let Some(sim) = &self.simulation {
            if sim.x0.len() != n {
                return bad(format!("simulation x0 has length {}, expected {n}", sim.x0.len()));
            }
            if !(sim.dt > 0.0 && sim.t_final >= sim.dt) {
                return bad("simulation needs dt > 0 and T >= dt".into());
            }
        }
        let dims_ok = |x: &[f64], u: &[f64]| x.len() == n && u.len() == m;
        match &self.reference {
            Some(ReferenceBlock::Equilibrium { x, u }) if !dims_ok(x, u) => {
                return bad("equilibrium reference dimensions do not match the system".into())
            }
            Some(ReferenceBlock::Harmonic {
                x_offset,
                x_sin,
                x_cos,
                u_offset,
                u_sin,
                u_cos,
                ..
            }) if !(dims_ok(x_offset, u_offset) && dims_ok(x_sin, u_sin) && dims_ok(x_cos, u_cos)) => {
                return bad("harmonic reference dimensions do not match the system".into())
            }
            Some(ReferenceBlock::Tabulated { path: None, states, controls, .. })
                if states.iter().any(|x| x.len() != n) || controls.iter().any(|u| u.len() != m) =>
            {
                return bad("tabulated reference dimensions do not match the system".into())
            }
            _ => {}
        }
        Ok(())
    }

    pub fn system(&self) -> Result<ControlAffineSystem, ConfigError> {
        Ok(self.system.to_system()?)
    }

    pub fn synthesis_config(&self) -> Result<SynthesisConfig, ConfigError> {
        self.synthesis.to_config(self.system.n, self.system.m)
    }

    /// The configured reference, defaulting to the origin with zero input.
    pub fn reference(&self, sys: &ControlAffineSystem) -> Result<Reference, ConfigError> {
        Ok(match &self.reference {
            None => Reference::Equilibrium {
                x: vec![0.0; sys.n()],
                u: vec![0.0; sys.m()],
            },
            Some(ReferenceBlock::Equilibrium { x, u }) => Reference::Equilibrium {
                x: x.clone(),
                u: u.clone(),
            },
            Some(ReferenceBlock::Harmonic {
                omega,
                x_offset,
                x_sin,
                x_cos,
                u_offset,
                u_sin,
                u_cos,
            }) => Reference::Harmonic {
                omega: *omega,
                x_offset: x_offset.clone(),
                x_sin: x_sin.clone(),
                x_cos: x_cos.clone(),
                u_offset: u_offset.clone(),
                u_sin: u_sin.clone(),
                u_cos: u_cos.clone(),
            },
            Some(ReferenceBlock::Tabulated {
                path: Some(p),
                ..
            }) => {
                let full = self.resolve(p);
                let text = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io {
                    path: full.clone(),
                    source,
                })?;
                let (t, x, u) = parse_reference_csv(&text, sys.n(), sys.m())?;
                Reference::tabulated(sys, t, x, u)?
            }
            Some(ReferenceBlock::Tabulated {
                path: None,
                times,
                states,
                controls,
            }) => Reference::tabulated(sys, times.clone(), states.clone(), controls.clone())?,
        })
    }
}

type Columns = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Reads `t,x1..xn,u1..um` rows after a header line.
pub fn parse_reference_csv(text: &str, n: usize, m: usize) -> Result<Columns, ConfigError> {
    let mut t = Vec::new();
    let mut x = Vec::new();
    let mut u = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| ConfigError::Invalid(format!("reference CSV line {}: {e}", line_no + 1)))?;
        if vals.len() != 1 + n + m {
            return Err(ConfigError::Invalid(format!(
                "reference CSV line {} has {} columns, expected {}",
                line_no + 1,
                vals.len(),
                1 + n + m
            )));
        }
        t.push(vals[0]);
        x.push(vals[1..=n].to_vec());
        u.push(vals[n + 1..].to_vec());
    }
    Ok((t, x, u))
}

/// Builds a system block from a drift and input matrix.
pub fn system_spec(f: &[&str], b: &DMatrix<f64>) -> SystemSpec {
    SystemSpec {
        n: f.len(),
        m: b.ncols(),
        f: f.iter().map(|s| s.to_string()).collect(),
        b: crate::document::matrix_rows(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DI: &str = r#"{
        "system": {"n": 2, "m": 1, "f": ["x2", "0"], "B": [[0], [1]]},
        "synthesis": {"domain": {"lower": [-5, -5], "upper": [5, 5]}, "basis_degree": 0,
                      "lambda": 0.5, "mode": "exponential"},
        "reference": {"type": "harmonic", "omega": 1, "x_offset": [0, 0], "x_sin": [1, 0],
                      "x_cos": [0, 1], "u_offset": [0], "u_sin": [-1], "u_cos": [0]},
        "simulation": {"x0": [2, -1], "T": 10}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_json(DI).unwrap();
        let s = cfg.synthesis_config().unwrap();
        assert_eq!((s.grid, s.basis_degree, s.mode), (9, 0, Mode::Exponential));
        assert_eq!(s.alpha1, 0.1);
        let sim = cfg.simulation.as_ref().unwrap();
        assert_eq!((sim.dt, sim.controller), (1e-3, ControllerKind::Geodesic));
        let sys = cfg.system().unwrap();
        let r = cfg.reference(&sys).unwrap();
        assert!(r.dynamics_residual(&sys, &[0.0, 1.0, 2.0]).0 < 1e-6);
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::from_json(DI).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let bad = DI.replace("\"x0\": [2, -1]", "\"x0\": [2]");
        assert!(matches!(RunConfig::from_json(&bad), Err(ConfigError::Invalid(_))));
        let bad = DI.replace("\"lambda\"", "\"lambda_typo\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(ConfigError::Json(_))));
    }

    #[test]
    fn malformed_polynomial_reports_column() {
        let bad = DI.replace("\"x2\", \"0\"", "\"x2 + * x1\", \"0\"");
        let cfg = RunConfig::from_json(&bad).unwrap();
        let err = cfg.system().unwrap_err().to_string();
        assert!(err.contains("column 6"), "{err}");
    }

    #[test]
    fn reference_csv() {
        let (t, x, u) = parse_reference_csv("t,x1,u1\n0,1,0\n0.5,2,1\n", 1, 1).unwrap();
        assert_eq!(t, vec![0.0, 0.5]);
        assert_eq!(x, vec![vec![1.0], vec![2.0]]);
        assert_eq!(u, vec![vec![0.0], vec![1.0]]);
        assert!(parse_reference_csv("t,x1\n0,1,2,3\n", 1, 1).is_err());
    }
}
