//! Run configuration: a single JSON document with a top-level `"schema": 1`.

use std::path::{Path, PathBuf};

use cyflab::continuation::validate_schedule;
use cyflab::lattice::StencilConfig;
use cyflab::{FamilySpec, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA: u32 = 1;
pub const SUITES: [&str; 7] = ["identities", "elliptic", "product", "epsilon", "green", "positivity", "convergence"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub family: FamilySpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub stencil: StencilConfig,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    /// Single-fiber settings for `solve-fiber`.
    #[serde(default)]
    pub fiber: FiberSection,
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub grid_n: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub damping_floor: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self { grid_n: 64, tol: d.tol, max_iters: d.max_iters, damping_floor: d.damping_floor }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { tol: self.tol, max_iters: self.max_iters, damping_floor: self.damping_floor, ..SolverConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub eps_schedule: Vec<f64>,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        Self { eps_schedule: vec![1.0, 0.3, 0.1, 0.03, 0.01, 0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![Format::Json, Format::Csv] }
    }
}

/// Manufactured solution `φ* = amplitude · cos 2π k·ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manufactured {
    pub amplitude: f64,
    pub k: Vec<i64>,
    /// Largest accepted recovery error.
    #[serde(default = "default_recovery_tol")]
    pub tolerance: f64,
}

fn default_recovery_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FiberSection {
    /// Base point; the first family sample when absent.
    pub s: Option<[f64; 2]>,
    pub epsilon: f64,
    pub manufactured: Option<Manufactured>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub fd_step: Option<f64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path, over: Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply(over);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid JSON: {e}")))?;
        match value.get("schema").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA as u64 => {}
            Some(v) => return Err(ConfigError(format!("unsupported schema {v}, expected {SCHEMA}"))),
            None => return Err(ConfigError("missing integer field \"schema\"".into())),
        }
        serde_json::from_value(value).map_err(|e| ConfigError(format!("schema: {e}")))
    }

    pub fn apply(&mut self, over: Overrides) {
        if let Some(n) = over.grid {
            self.solver.grid_n = n;
        }
        if let Some(h) = over.fd_step {
            self.stencil.h_s = h;
        }
        if let Some(t) = over.threads {
            self.threads = t;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.solver;
        if s.grid_n < 8 || s.grid_n % 2 != 0 {
            return Err(ConfigError(format!("solver.grid_n = {} must be even and >= 8", s.grid_n)));
        }
        if !(s.tol > 0.0 && s.tol <= 1e-4) {
            return Err(ConfigError(format!("solver.tol = {} must lie in (0, 1e-4]", s.tol)));
        }
        if s.max_iters == 0 {
            return Err(ConfigError("solver.max_iters must be positive".into()));
        }
        if !(s.damping_floor > 0.0 && s.damping_floor < 1.0) {
            return Err(ConfigError(format!("solver.damping_floor = {} must lie in (0, 1)", s.damping_floor)));
        }
        validate_schedule(&self.continuation.eps_schedule).map_err(|e| ConfigError(format!("continuation.eps_schedule: {e}")))?;
        self.stencil.validate().map_err(|e| ConfigError(format!("stencil: {e}")))?;
        for suite in &self.suites {
            if !SUITES.contains(&suite.as_str()) {
                return Err(ConfigError(format!("unknown suite {suite:?}; known: {}", SUITES.join(", "))));
            }
        }
        if !(self.fiber.epsilon >= 0.0 && self.fiber.epsilon.is_finite()) {
            return Err(ConfigError(format!("fiber.epsilon = {} must be finite and >= 0", self.fiber.epsilon)));
        }
        if let Some(m) = &self.fiber.manufactured {
            if m.k.len() != 2 * self.family.n {
                return Err(ConfigError(format!("fiber.manufactured.k needs {} entries", 2 * self.family.n)));
            }
            if !(m.amplitude.is_finite() && m.tolerance > 0.0) {
                return Err(ConfigError("fiber.manufactured needs a finite amplitude and a positive tolerance".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the effective configuration. The thread count does not
    /// affect results and is left out.
    pub fn hash(&self) -> String {
        let canonical = Self { threads: 0, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema": 1, "family": {"kind": "universal_elliptic", "base": {"samples": [[0, 1]]}}}"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.solver.grid_n, 64);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_keys_and_schemas_are_rejected() {
        let extra = MINIMAL.replace("\"schema\": 1,", "\"schema\": 1, \"colour\": 3,");
        assert!(RunConfig::parse(&extra).is_err());
        assert!(RunConfig::parse(&MINIMAL.replace("\"schema\": 1", "\"schema\": 2")).is_err());
        let nested = MINIMAL.replace("}}}", "}}, \"solver\": {\"grid\": 8}}");
        assert!(RunConfig::parse(&nested).is_err());
    }

    #[test]
    fn invariants() {
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        for n in [6, 7, 33] {
            cfg.solver.grid_n = n;
            assert!(cfg.validate().is_err());
        }
        cfg.solver.grid_n = 8;
        for tol in [0.0, 1e-3, f64::NAN] {
            cfg.solver.tol = tol;
            assert!(cfg.validate().is_err());
        }
        cfg.solver.tol = 1e-4;
        cfg.validate().unwrap();
        cfg.continuation.eps_schedule = vec![1.0, 1.0, 0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_change_the_hash() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.apply(Overrides { grid: None, fd_step: None, threads: Some(3) });
        assert_eq!(a.hash(), b.hash());
        b.apply(Overrides { grid: Some(32), fd_step: Some(5e-4), threads: None });
        assert_eq!((b.solver.grid_n, b.stencil.h_s), (32, 5e-4));
        assert_ne!(a.hash(), b.hash());
    }
}
