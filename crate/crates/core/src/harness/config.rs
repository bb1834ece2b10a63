use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::SacConfig;
use crate::env::{VoltageLimits, DEFAULT_VIOLATION_PENALTY};
use crate::error::{Error, Result};
use crate::gridflow::CaseId;
use crate::scenario::DEFAULT_NOISE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Dispatch optimised on the accurate network.
    MboAccurate,
    /// Dispatch optimised on the impedance-scaled reference network.
    MboReference,
    /// Plain agent over the full device boxes.
    Sac,
    /// Residual agent with a residual box as large as the device box.
    RmSacWide,
    /// Residual agent with half-width `λ·(ā − a̲)/2`.
    RmSac,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::MboAccurate, Mode::MboReference, Mode::Sac, Mode::RmSacWide, Mode::RmSac];

    pub fn name(self) -> &'static str {
        match self {
            Mode::MboAccurate => "mbo_accurate",
            Mode::MboReference => "mbo_reference",
            Mode::Sac => "sac",
            Mode::RmSacWide => "rm_sac_wide",
            Mode::RmSac => "rm_sac",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Mode::Sac | Mode::RmSacWide | Mode::RmSac)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s:?}")))
    }
}

/// Impedance factor of the reference model per feeder.
pub fn default_impedance_factor(net: CaseId) -> f64 {
    match net {
        CaseId::Case33 | CaseId::Case69 => 1.5,
        CaseId::Case118 => 1.3,
    }
}

/// Residual scale used when none is given.
pub fn default_lambda(net: CaseId) -> f64 {
    match net {
        CaseId::Case33 => 0.3,
        CaseId::Case69 => 0.5,
        CaseId::Case118 => 0.2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: CaseId,
    pub mode: Mode,
    /// Only read in `rm_sac` mode; defaults per feeder.
    pub lambda_scale: Option<f64>,
    /// Defaults per feeder.
    pub impedance_factor: Option<f64>,
    pub days: usize,
    pub seed: u64,
    pub noise: f64,
    pub c_v: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub sac: SacConfig,
    pub output_dir: PathBuf,
    /// CSV of solved dispatches reused across runs.
    pub dispatch_cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lim = VoltageLimits::default();
        ExperimentConfig {
            network: CaseId::Case33,
            mode: Mode::RmSac,
            lambda_scale: None,
            impedance_factor: None,
            days: 100,
            seed: 0,
            noise: DEFAULT_NOISE,
            c_v: DEFAULT_VIOLATION_PENALTY,
            v_min: lim.v_min,
            v_max: lim.v_max,
            sac: SacConfig::default(),
            output_dir: PathBuf::from("runs"),
            dispatch_cache: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_scale.unwrap_or_else(|| default_lambda(self.network))
    }

    pub fn impedance(&self) -> f64 {
        self.impedance_factor.unwrap_or_else(|| default_impedance_factor(self.network))
    }

    pub fn limits(&self) -> Result<VoltageLimits> {
        VoltageLimits::new(self.v_min, self.v_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        let lam = self.lambda();
        if !(0.0..=1.0).contains(&lam) {
            return Err(Error::Config(format!("lambda_scale {lam} must lie in [0, 1]")));
        }
        if self.lambda_scale.is_some() && self.mode != Mode::RmSac {
            return Err(Error::Config(format!("lambda_scale only applies to rm_sac, not {}", self.mode)));
        }
        let f = self.impedance();
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Config(format!("impedance factor {f} must be positive")));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} must lie in [0, 1)", self.noise)));
        }
        if !(self.c_v >= 0.0 && self.c_v.is_finite()) {
            return Err(Error::Config("c_v must be non-negative".into()));
        }
        self.limits().map_err(|e| Error::Config(e.to_string()))?;
        self.sac.validate()
    }

    /// Hex SHA-256 of the configuration with defaults resolved, ignoring where files go.
    pub fn config_hash(&self) -> String {
        let mut resolved = self.clone();
        resolved.lambda_scale = (self.mode == Mode::RmSac).then(|| self.lambda());
        resolved.impedance_factor = Some(self.impedance());
        let mut value = serde_json::to_value(&resolved).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("dispatch_cache");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// `case33_rm_sac_lam0.3_seed0`.
    pub fn run_name(&self) -> String {
        match self.mode {
            Mode::RmSac => format!("{}_{}_lam{}_seed{}", self.network, self.mode, self.lambda(), self.seed),
            _ => format!("{}_{}_seed{}", self.network, self.mode, self.seed),
        }
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.csv", self.run_name()))
    }
}
