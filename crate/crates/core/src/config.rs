//! Run configuration: a TOML file with explicit SI units on every physical
//! quantity. Dimensionless groups are always derived from it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{FockSpace, StateVector};
use crate::models::{
    apply_scaling, duffing_pair, squid_dimensionless, squid_pair, squid_single, DuffingParams,
    ModelError, SquidPhysicalParams, SystemModel,
};
use crate::stochastic::{StepperConfig, TimeSpan, Unravelling};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QTRAJ_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "qtraj-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown sweep path `{0}`")]
    UnknownPath(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DuffingPair,
    SquidPair,
    /// One SQUID ring.
    SingleModeTest,
}

impl ModelKind {
    pub fn n_modes(self) -> usize {
        match self {
            Self::SingleModeTest => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Qsd,
    Jumps,
    LindbladOracle,
}

impl Method {
    pub fn unravelling(self) -> Option<Unravelling> {
        match self {
            Self::Qsd => Some(Unravelling::Qsd),
            Self::Jumps => Some(Unravelling::Jumps),
            Self::LindbladOracle => None,
        }
    }
}

/// SQUID ring circuit values. `scale_a` and `scale_b` rescale the listed
/// values (`C → aC`, `L → bL` with the compensating changes of R, I_c, I_d
/// and ω_d) before the dimensionless groups are derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquidConfig {
    pub capacitance_farads: f64,
    pub inductance_henries: f64,
    pub resistance_ohms: f64,
    pub critical_current_amperes: f64,
    pub drive_current_amperes: f64,
    pub drive_frequency_rad_per_second: f64,
    pub flux_bias_webers: f64,
    pub scale_a: f64,
    pub scale_b: f64,
    /// Ring-ring coupling in oscillator units.
    pub coupling_mu: f64,
}

impl Default for SquidConfig {
    fn default() -> Self {
        let base = SquidPhysicalParams::base();
        Self {
            capacitance_farads: base.capacitance,
            inductance_henries: base.inductance,
            resistance_ohms: base.resistance,
            critical_current_amperes: base.critical_current,
            drive_current_amperes: base.drive_current,
            drive_frequency_rad_per_second: base.drive_frequency,
            flux_bias_webers: base.flux_bias,
            scale_a: 1.0,
            scale_b: 1.0,
            coupling_mu: 0.2,
        }
    }
}

impl SquidConfig {
    /// Physical parameters after scaling.
    pub fn physical(&self) -> Result<SquidPhysicalParams, ModelError> {
        let listed = SquidPhysicalParams {
            capacitance: self.capacitance_farads,
            inductance: self.inductance_henries,
            resistance: self.resistance_ohms,
            critical_current: self.critical_current_amperes,
            drive_current: self.drive_current_amperes,
            drive_frequency: self.drive_frequency_rad_per_second,
            flux_bias: self.flux_bias_webers,
            scale_a: 1.0,
            scale_b: 1.0,
        };
        listed.validate()?;
        apply_scaling(&listed, self.scale_a, self.scale_b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

/// Parameter paths accepted by sweeps.
pub const SWEEP_PATHS: &[&str] = &[
    "squid.scale_a",
    "squid.scale_b",
    "squid.capacitance_farads",
    "squid.coupling_mu",
    "duffing.beta",
    "duffing.g",
    "duffing.gamma",
    "duffing.mu",
    "n_levels",
    "dt",
];

fn default_label() -> String {
    "run".to_string()
}
fn default_dt() -> f64 {
    1e-3
}
fn default_record_every() -> usize {
    10
}
fn default_transient() -> f64 {
    0.25
}
fn default_tolerance() -> f64 {
    crate::observables::DEFAULT_SETTLE_TOLERANCE
}
fn default_leakage() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_label")]
    pub label: String,
    pub model: ModelKind,
    pub unravelling: Method,
    /// Fock levels per mode.
    pub n_levels: usize,
    /// Time step in drive periods.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Integration span in drive periods.
    pub t_span: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub n_trajectories: u64,
    #[serde(default)]
    pub seed: u64,
    /// Leading fraction of the record excluded from time averages.
    #[serde(default = "default_transient")]
    pub transient_fraction: f64,
    #[serde(default = "default_tolerance")]
    pub settle_tolerance: f64,
    /// Abort a trajectory once the top-level population exceeds this.
    #[serde(default = "default_leakage")]
    pub leakage_limit: f64,
    /// Observable summarised per sweep point; defaults to the entanglement
    /// entropy for two-mode stochastic runs and `x0` otherwise.
    #[serde(default)]
    pub summary_observable: Option<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Initial coherent-state centre per mode in classical coordinates:
    /// `[φ, dφ/dτ]` for SQUID rings, `[q, p]` for the Duffing pair.
    #[serde(default)]
    pub initial: Vec<[f64; 2]>,
    #[serde(default)]
    pub duffing: DuffingParams,
    #[serde(default)]
    pub squid: SquidConfig,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

/// One point of the sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub coordinates: Vec<(String, f64)>,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_trajectories < 1 {
            return Err(invalid("n_trajectories", "must be at least 1"));
        }
        if self.n_levels < 2 {
            return Err(invalid("n_levels", "must be at least 2"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_span.is_finite() && self.t_span > 0.0) {
            return Err(invalid("t_span", "must be positive"));
        }
        if self.steps() == 0 {
            return Err(invalid("t_span", "shorter than one step"));
        }
        if self.record_every < 1 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(invalid("transient_fraction", "must lie in [0, 1)"));
        }
        if !(self.settle_tolerance > 0.0) {
            return Err(invalid("settle_tolerance", "must be positive"));
        }
        if !(self.leakage_limit > 0.0) {
            return Err(invalid("leakage_limit", "must be positive"));
        }
        if !self.initial.is_empty() && self.initial.len() != self.n_modes() {
            return Err(invalid(
                "initial",
                format!("expected {} entries, found {}", self.n_modes(), self.initial.len()),
            ));
        }
        if self.initial.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("initial", "must be finite"));
        }
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return Err(invalid("label", "must be a non-empty file name"));
        }
        if let Some(name) = &self.summary_observable {
            let known = self.observable_names();
            if !known.contains(name) {
                return Err(invalid("summary_observable", format!("unknown observable; expected one of {known:?}")));
            }
        }
        for axis in &self.sweep {
            if !SWEEP_PATHS.contains(&axis.path.as_str()) {
                return Err(ConfigError::UnknownPath(axis.path.clone()));
            }
            if axis.values.is_empty() {
                return Err(invalid(&format!("sweep.{}", axis.path), "no values"));
            }
        }
        if self.sweep.is_empty() {
            self.check_model()?;
        } else {
            for point in self.points()? {
                point.config.check_model()?;
            }
        }
        Ok(())
    }

    fn check_model(&self) -> Result<(), ConfigError> {
        match self.model {
            ModelKind::DuffingPair => self.duffing.validate()?,
            _ => {
                self.squid.physical()?;
                if !self.squid.coupling_mu.is_finite() {
                    return Err(invalid("squid.coupling_mu", "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn observable_names(&self) -> Vec<String> {
        match self.unravelling {
            Method::LindbladOracle => {
                let mut names = crate::ensemble::observable_names(self.n_modes());
                names.retain(|n| n != crate::ensemble::ENTROPY);
                names.push(PURITY.to_string());
                names
            }
            _ => crate::ensemble::observable_names(self.n_modes()),
        }
    }

    pub fn summary_observable(&self) -> String {
        match &self.summary_observable {
            Some(name) => name.clone(),
            None if self.n_modes() == 2 && self.unravelling != Method::LindbladOracle => {
                crate::ensemble::ENTROPY.to_string()
            }
            None => "x0".to_string(),
        }
    }

    fn set(&mut self, path: &str, value: f64) -> Result<(), ConfigError> {
        let as_count = |key: &str| {
            if value.fract() == 0.0 && value >= 0.0 {
                Ok(value as usize)
            } else {
                Err(invalid(key, format!("{value} is not a whole number")))
            }
        };
        match path {
            "squid.scale_a" => self.squid.scale_a = value,
            "squid.scale_b" => self.squid.scale_b = value,
            "squid.capacitance_farads" => self.squid.scale_a = value / self.squid.capacitance_farads,
            "squid.coupling_mu" => self.squid.coupling_mu = value,
            "duffing.beta" => self.duffing.beta = value,
            "duffing.g" => self.duffing.g = value,
            "duffing.gamma" => self.duffing.gamma = value,
            "duffing.mu" => self.duffing.mu = value,
            "n_levels" => self.n_levels = as_count(path)?,
            "dt" => self.dt = value,
            other => return Err(ConfigError::UnknownPath(other.to_string())),
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, first axis slowest. Without a
    /// sweep there is a single point.
    pub fn points(&self) -> Result<Vec<SweepPoint>, ConfigError> {
        let mut grid: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.path.clone(), v));
                        p
                    })
                })
                .collect();
        }
        grid.into_iter()
            .enumerate()
            .map(|(index, coordinates)| {
                let mut config = self.clone();
                config.sweep.clear();
                for (path, value) in &coordinates {
                    config.set(path, *value)?;
                }
                Ok(SweepPoint {
                    index,
                    coordinates,
                    config,
                })
            })
            .collect()
    }

    pub fn space(&self) -> Result<FockSpace, ConfigError> {
        FockSpace::new(self.n_levels, self.n_modes()).map_err(|e| invalid("n_levels", e.to_string()))
    }

    pub fn build_model(&self) -> Result<SystemModel, ConfigError> {
        let space = self.space()?;
        Ok(match self.model {
            ModelKind::DuffingPair => duffing_pair(&self.duffing, &space)?,
            ModelKind::SquidPair => squid_pair(&self.squid.physical()?, self.squid.coupling_mu, &space)?,
            ModelKind::SingleModeTest => squid_single(&self.squid.physical()?, &space)?,
        })
    }

    pub fn initial_state(&self, model: &SystemModel) -> Result<StateVector, ConfigError> {
        let points: Vec<(f64, f64)> = if self.initial.is_empty() {
            vec![(0.0, 0.0); self.n_modes()]
        } else {
            self.initial.iter().map(|&[q, dq]| (q, dq)).collect()
        };
        Ok(model.coherent_state_classical(&points)?)
    }

    /// Integration steps over `t_span`.
    pub fn steps(&self) -> usize {
        (self.t_span / self.dt).round() as usize
    }

    /// Stepper settings in model time units for `model`.
    pub fn stepper(&self, model: &SystemModel) -> Option<StepperConfig> {
        self.unravelling.unravelling().map(|u| StepperConfig {
            leakage_limit: Some(self.leakage_limit),
            ..StepperConfig::new(u, self.dt * model.drive_period())
        })
    }

    pub fn span(&self) -> TimeSpan {
        TimeSpan {
            start: 0.0,
            steps: self.steps(),
            record_every: self.record_every,
        }
    }

    /// Human-readable report of the derived quantities at each sweep point.
    pub fn describe(&self) -> Result<String, ConfigError> {
        let mut out = String::new();
        let points = self.points()?;
        for point in &points {
            let c = &point.config;
            let _ = write!(out, "point {}", point.index);
            for (path, v) in &point.coordinates {
                let _ = write!(out, " {path}={v:e}");
            }
            out.push('\n');
            let space = c.space()?;
            let _ = writeln!(
                out,
                "  modes={} levels={} dim={} steps={} records={}",
                space.n_modes(),
                c.n_levels,
                space.dim(),
                c.steps(),
                c.steps() / c.record_every + 1
            );
            match c.model {
                ModelKind::DuffingPair => {
                    let d = &c.duffing;
                    let _ = writeln!(out, "  beta={} g={} gamma={} mu={}", d.beta, d.g, d.gamma, d.mu);
                }
                _ => {
                    let phys = c.squid.physical()?;
                    let d = squid_dimensionless(&phys)?;
                    let _ = writeln!(
                        out,
                        "  C={:e} F L={:e} H R={:e} ohm I_c={:e} A I_d={:e} A omega_d={:e} rad/s",
                        phys.capacitance,
                        phys.inductance,
                        phys.resistance,
                        phys.critical_current,
                        phys.drive_current,
                        phys.drive_frequency
                    );
                    let _ = writeln!(
                        out,
                        "  beta={:.12} zeta={:.12} omega={:.12} phi_d={:.12} phi_x={:.12}",
                        d.beta, d.zeta, d.omega, d.phi_d, d.phi_x
                    );
                    let _ = writeln!(
                        out,
                        "  Omega={:.12} omega0={:e} rad/s E_J={:.6} flux_unit={:.6}",
                        d.big_omega, d.omega0, d.josephson_energy, d.flux_unit
                    );
                }
            }
        }
        Ok(out)
    }
}

pub const PURITY: &str = "purity";

/// Output directory: explicit choice, then the configuration, then
/// `$QTRAJ_OUTPUT_DIR`, then `qtraj-out`.
pub fn resolve_output_dir(explicit: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &config.output_dir {
        return p.clone();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}
