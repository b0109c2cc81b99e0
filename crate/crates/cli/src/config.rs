use std::path::{Path, PathBuf};

use bosecond::commutator::DEFAULT_DEPTH_CAP;
use bosecond::potential::{load_tabulated_csv, PotentialSpec, Shape};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Ball { v0: f64, radius: f64 },
    /// Two-column (r, V) file.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    pub kappa: f64,
    pub beta: f64,
    pub n: u64,
    /// Particle numbers for scans; empty means `[n]`.
    pub n_list: Vec<u64>,
    pub ell: f64,
    /// Momentum set |n|² ≤ cutoff_sq, i.e. P_max = 2π√cutoff_sq.
    pub cutoff_sq: i64,
    pub mesh_steps: usize,
    /// Fock-space modes |n|² ≤ modes_sq.
    pub modes_sq: i64,
    pub n_max: usize,
    pub eigencount: usize,
    /// Born order; defaults to m_β.
    pub k_max: Option<usize>,
    /// Commutator depth for `expand`.
    pub depth: usize,
    pub trials: usize,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: PotentialConfig::Ball { v0: 1.0, radius: 1.0 },
            kappa: 0.05,
            beta: 0.5,
            n: 1000,
            n_list: Vec::new(),
            ell: 0.4,
            cutoff_sq: 12,
            mesh_steps: 1000,
            modes_sq: 1,
            n_max: 4,
            eigencount: 3,
            k_max: None,
            depth: 3,
            trials: 100,
            output: PathBuf::from("out"),
            seed: 0x5eed,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad config file {}: {e}", path.display())))
    }

    pub fn n_values(&self) -> Vec<u64> {
        if self.n_list.is_empty() {
            vec![self.n]
        } else {
            self.n_list.clone()
        }
    }

    fn shape(&self) -> Result<Shape, CliError> {
        match &self.potential {
            PotentialConfig::Ball { v0, radius } => Ok(Shape::Ball { v0: *v0, radius: *radius }),
            PotentialConfig::Csv { path } => Ok(load_tabulated_csv(path)?),
        }
    }

    pub fn spec(&self, n: u64) -> Result<PotentialSpec, CliError> {
        let spec = PotentialSpec { shape: self.shape()?, kappa: self.kappa, beta: self.beta, n };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every precondition before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        for n in self.n_values() {
            self.spec(n)?;
            if (self.n_max as u64) > n {
                return bad(format!("n_max = {} exceeds N = {n}", self.n_max));
            }
        }
        if !(self.ell > 0.0 && self.ell < 0.5) {
            return bad(format!("ell must lie in (0, 1/2), got {}", self.ell));
        }
        if self.cutoff_sq < 1 {
            return bad(format!("cutoff_sq must be >= 1, got {}", self.cutoff_sq));
        }
        if self.modes_sq < 1 {
            return bad(format!("modes_sq must be >= 1, got {}", self.modes_sq));
        }
        if self.mesh_steps < 10 {
            return bad(format!("mesh_steps must be >= 10, got {}", self.mesh_steps));
        }
        if self.eigencount == 0 {
            return bad("eigencount must be >= 1".into());
        }
        if self.k_max == Some(0) {
            return bad("k_max must be >= 1".into());
        }
        if self.depth > DEFAULT_DEPTH_CAP {
            return bad(format!("depth {} exceeds the cap {DEFAULT_DEPTH_CAP}", self.depth));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        Ok(())
    }
}
