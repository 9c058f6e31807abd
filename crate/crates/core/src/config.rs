//! Run configuration: one JSON document drives the whole pipeline.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::dr::DrEvent;
use crate::error::{param_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Taylor,
    Digamma,
    Average,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Taylor => "taylor",
            Method::Digamma => "digamma",
            Method::Average => "average",
        }
    }

    pub fn all() -> [Method; 3] {
        [Method::Taylor, Method::Digamma, Method::Average]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub n_buildings: usize,
    pub noise_frac: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub k: f64,
    pub h: f64,
    #[serde(default)]
    pub psi: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    pub method: Method,
    /// Sample count for the average-value route; required there only.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Monte Carlo draws used by the (ε,δ) accounting.
    #[serde(default)]
    pub accounting_samples: Option<usize>,
    /// Concentrations swept by the `sweep` command.
    #[serde(default)]
    pub sweep_k: Option<Vec<f64>>,
    /// Optional overrides for the guarantee inputs; per-row defaults apply
    /// when absent.
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub omega_bar: Option<f64>,
    #[serde(default)]
    pub w_size: Option<usize>,
}

pub const DEFAULT_SWEEP_K: [f64; 4] = [25.0, 50.0, 100.0, 200.0];
pub const DEFAULT_ACCOUNTING_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub consumption_csv: Option<PathBuf>,
    #[serde(default)]
    pub matrix_json: Option<PathBuf>,
    #[serde(default)]
    pub state_space_csv: Option<PathBuf>,
    #[serde(default)]
    pub synthesis: Option<SynthesisConfig>,
    pub n_states: usize,
    pub gamma: f64,
    pub horizon: usize,
    pub event: DrEvent,
    pub privacy: PrivacyConfig,
    /// Initial state; defaults to the empirical occupancy of the estimation
    /// path when absent.
    #[serde(default)]
    pub rho0_state: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return param_err(format!(
                "field `n_states` must be at least 2, got {}",
                self.n_states
            ));
        }
        if !(self.gamma > 0.0) {
            return param_err(format!("field `gamma` must be positive, got {}", self.gamma));
        }
        if self.horizon < 2 {
            return param_err(format!(
                "field `horizon` must be at least 2, got {}",
                self.horizon
            ));
        }
        self.event.validate(self.horizon)?;
        let p = &self.privacy;
        if !(p.k > 0.0) {
            return param_err(format!("field `privacy.k` must be positive, got {}", p.k));
        }
        if !(p.h > 0.0 && p.h <= 1.0) {
            return param_err(format!("field `privacy.h` must be in (0,1], got {}", p.h));
        }
        match (p.psi, p.delta) {
            (None, None) => {
                return param_err("specify exactly one of `privacy.psi` or `privacy.delta`")
            }
            (Some(_), Some(_)) => {
                return param_err("specify exactly one of `privacy.psi` or `privacy.delta`")
            }
            (Some(psi), None) if !(psi > 0.0 && psi <= 1.0) => {
                return param_err(format!("field `privacy.psi` must be in (0,1], got {psi}"));
            }
            (None, Some(delta)) if !(0.0..=1.0).contains(&delta) => {
                return param_err(format!("field `privacy.delta` must be in [0,1], got {delta}"));
            }
            _ => {}
        }
        if p.method == Method::Average && p.n_samples.is_none() {
            return param_err("field `n_samples` is required when method is `average`");
        }
        if let Some(n) = p.n_samples {
            if n < 1 {
                return param_err("field `privacy.n_samples` must be at least 1");
            }
        }
        if let Some(s) = &self.synthesis {
            if s.n_buildings < 1 {
                return param_err("field `synthesis.n_buildings` must be at least 1");
            }
            if !(0.0..1.0).contains(&s.noise_frac) {
                return param_err(format!(
                    "field `synthesis.noise_frac` must be in [0,1), got {}",
                    s.noise_frac
                ));
            }
        }
        if let Some(state) = self.rho0_state {
            if state >= self.n_states {
                return param_err(format!(
                    "field `rho0_state` = {state} out of range for {} states",
                    self.n_states
                ));
            }
        }
        let have_csv = self.consumption_csv.is_some();
        let have_matrix = self.matrix_json.is_some() && self.state_space_csv.is_some();
        if !have_csv && !have_matrix {
            return param_err(
                "either `consumption_csv` or both `matrix_json` and `state_space_csv` are required",
            );
        }
        for (field, path) in [
            ("consumption_csv", &self.consumption_csv),
            ("matrix_json", &self.matrix_json),
            ("state_space_csv", &self.state_space_csv),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return param_err(format!(
                        "field `{field}`: file {} does not exist",
                        p.display()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sweep_grid(&self) -> Vec<f64> {
        self.privacy
            .sweep_k
            .clone()
            .unwrap_or_else(|| DEFAULT_SWEEP_K.to_vec())
    }

    pub fn accounting_samples(&self) -> usize {
        self.privacy
            .accounting_samples
            .unwrap_or(DEFAULT_ACCOUNTING_SAMPLES)
    }
}
