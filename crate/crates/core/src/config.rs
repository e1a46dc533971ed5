//! Run configuration: one TOML file with `[system]`, `[drive]`, `[noise]`,
//! `[sweep]`, `[integrator]`, `[series]` and an optional `[dynamics]` table.
//! Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorConfig;
use crate::entanglement::{AveragingConfig, PhaseAveraging};
use crate::error::{ConfigError, ModelError};
use crate::floquet::SeriesConfig;
use crate::model::{DriveParams, QubitParams, SystemParams, KB_OVER_H_GHZ_PER_MK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub delta1: f64,
    pub delta2: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub amplitude: Option<f64>,
    /// Per-qubit amplitudes are accepted only when they agree.
    pub amplitude1: Option<f64>,
    pub amplitude2: Option<f64>,
    pub omega: f64,
    #[serde(default)]
    pub phi0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Explicit excitation rates; derived from the temperature when absent.
    pub gamma_excite1: Option<f64>,
    pub gamma_excite2: Option<f64>,
    #[serde(default)]
    pub gamma_phi1: f64,
    #[serde(default)]
    pub gamma_phi2: f64,
    #[serde(default = "default_temperature")]
    pub temperature_mk: f64,
    #[serde(default = "default_kb")]
    pub kb_conversion: f64,
    /// Alternative relaxation rates (applied to both qubits); the dynamics
    /// and sweep commands produce one output per entry.
    #[serde(default)]
    pub rate_sets: Vec<f64>,
}

fn default_temperature() -> f64 {
    30.0
}

fn default_kb() -> f64 {
    KB_OVER_H_GHZ_PER_MK
}

/// A swept or linked scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Eps1,
    Eps2,
    Delta1,
    Delta2,
    G,
    Amplitude,
    Omega,
    Phi0,
    Gamma1,
    Gamma2,
    /// Both relaxation rates.
    Gamma,
    GammaPhi1,
    GammaPhi2,
    /// Both dephasing rates.
    GammaPhi,
    TemperatureMk,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Eps1 => "eps1",
            Param::Eps2 => "eps2",
            Param::Delta1 => "delta1",
            Param::Delta2 => "delta2",
            Param::G => "g",
            Param::Amplitude => "amplitude",
            Param::Omega => "omega",
            Param::Phi0 => "phi0",
            Param::Gamma1 => "gamma1",
            Param::Gamma2 => "gamma2",
            Param::Gamma => "gamma",
            Param::GammaPhi1 => "gamma_phi1",
            Param::GammaPhi2 => "gamma_phi2",
            Param::GammaPhi => "gamma_phi",
            Param::TemperatureMk => "temperature_mk",
        }
    }

    pub fn apply(self, p: &mut SystemParams, v: f64) {
        match self {
            Param::Eps1 => p.qubits[0].eps = v,
            Param::Eps2 => p.qubits[1].eps = v,
            Param::Delta1 => p.qubits[0].delta = v,
            Param::Delta2 => p.qubits[1].delta = v,
            Param::G => p.g = v,
            Param::Amplitude => p.drive.amplitude = v,
            Param::Omega => p.drive.omega = v,
            Param::Phi0 => p.drive.phi0 = v,
            Param::Gamma1 => p.qubits[0].gamma_relax = v,
            Param::Gamma2 => p.qubits[1].gamma_relax = v,
            Param::Gamma => {
                p.qubits[0].gamma_relax = v;
                p.qubits[1].gamma_relax = v;
            }
            Param::GammaPhi1 => p.qubits[0].gamma_phi = v,
            Param::GammaPhi2 => p.qubits[1].gamma_phi = v,
            Param::GammaPhi => {
                p.qubits[0].gamma_phi = v;
                p.qubits[1].gamma_phi = v;
            }
            Param::TemperatureMk => p.temperature_mk = v,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    pub fn cell(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }
}

/// `target = scale · source + offset`, with `source` one of the swept axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linked {
    pub param: Param,
    pub source: Param,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Numeric,
    Analytic,
    Both,
}

impl Method {
    pub fn numeric(self) -> bool {
        matches!(self, Method::Numeric | Method::Both)
    }

    pub fn analytic(self) -> bool {
        matches!(self, Method::Analytic | Method::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    #[serde(default)]
    pub linked: Vec<Linked>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_n_phase")]
    pub n_phase: usize,
    #[serde(default = "default_n_time")]
    pub n_time: usize,
    #[serde(default = "default_phase_averaging")]
    pub phase_averaging: PhaseAveraging,
    /// Output file stem.
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_method() -> Method {
    Method::Both
}

fn default_n_phase() -> usize {
    AveragingConfig::default().n_phase
}

fn default_n_time() -> usize {
    AveragingConfig::default().n_time
}

fn default_phase_averaging() -> PhaseAveraging {
    AveragingConfig::default().strategy
}

fn default_output() -> String {
    "sweep".into()
}

impl SweepSection {
    pub fn averaging(&self) -> AveragingConfig {
        AveragingConfig {
            n_phase: self.n_phase,
            n_time: self.n_time,
            strategy: self.phase_averaging,
        }
    }

    pub fn axes(&self) -> Vec<&Axis> {
        std::iter::once(&self.axis1).chain(self.axis2.as_ref()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Simulated time in ns; defaults to `20 / Γ` (slowest per-qubit Γ + Γ′), extended to two
    /// periods past the steady-state entry.
    pub t_max: Option<f64>,
    /// Rows written per drive period.
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    /// Periodicity threshold defining the steady-state entry period.
    #[serde(default = "default_entry_tol")]
    pub entry_tol: f64,
}

fn default_samples() -> usize {
    16
}

fn default_entry_tol() -> f64 {
    1e-6
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            t_max: None,
            samples_per_period: default_samples(),
            entry_tol: default_entry_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    pub drive: DriveSection,
    pub noise: NoiseSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub series: SeriesConfig,
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn amplitude(&self) -> Result<f64, ConfigError> {
        let d = &self.drive;
        match (d.amplitude, d.amplitude1, d.amplitude2) {
            (Some(a), None, None) => Ok(a),
            (None, Some(a1), Some(a2)) if a1 == a2 => Ok(a1),
            (None, Some(a1), Some(a2)) => Err(ModelError::UnequalAmplitudes { a1, a2 }.into()),
            (None, None, None) => Err(invalid("drive.amplitude", "missing")),
            _ => Err(invalid(
                "drive.amplitude",
                "give either `amplitude` or both `amplitude1` and `amplitude2`",
            )),
        }
    }

    /// Base parameter set (before sweeps and rate sets are applied).
    pub fn params(&self) -> Result<SystemParams, ConfigError> {
        let s = &self.system;
        let n = &self.noise;
        let qubit = |delta, eps, gamma, excite, phi| QubitParams {
            delta,
            eps,
            gamma_relax: gamma,
            gamma_excite: excite,
            gamma_phi: phi,
        };
        let mut p = SystemParams::new(
            qubit(s.delta1, s.eps1, n.gamma1, n.gamma_excite1, n.gamma_phi1),
            qubit(s.delta2, s.eps2, n.gamma2, n.gamma_excite2, n.gamma_phi2),
            s.g,
            DriveParams {
                amplitude: self.amplitude()?,
                omega: self.drive.omega,
                phi0: self.drive.phi0,
            },
        );
        p.temperature_mk = n.temperature_mk;
        p.kb_conversion = n.kb_conversion;
        Ok(p)
    }

    /// One parameter set per entry of `noise.rate_sets`, or the base set.
    pub fn rate_variants(&self) -> Result<Vec<(Option<f64>, SystemParams)>, ConfigError> {
        let base = self.params()?;
        if self.noise.rate_sets.is_empty() {
            return Ok(vec![(None, base)]);
        }
        Ok(self
            .noise
            .rate_sets
            .iter()
            .map(|&g| {
                let mut p = base;
                Param::Gamma.apply(&mut p, g);
                (Some(g), p)
            })
            .collect())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.params()?;
        p.validate()?;
        for (i, &g) in self.noise.rate_sets.iter().enumerate() {
            if !(g.is_finite() && g >= 0.0) {
                return Err(invalid(&format!("noise.rate_sets[{i}]"), format!("invalid rate {g}")));
            }
        }
        self.integrator
            .validate()
            .map_err(|e| invalid("integrator", e.to_string()))?;
        self.series
            .validate(&p)
            .map_err(|e| invalid("series", e.to_string()))?;
        let d = &self.dynamics;
        if let Some(t) = d.t_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("dynamics.t_max", "must be positive"));
            }
        }
        if d.samples_per_period == 0 {
            return Err(invalid("dynamics.samples_per_period", "must be positive"));
        }
        if !(d.entry_tol > 0.0) {
            return Err(invalid("dynamics.entry_tol", "must be positive"));
        }
        if let Some(sw) = &self.sweep {
            self.validate_sweep(sw)?;
        }
        Ok(())
    }

    fn validate_sweep(&self, sw: &SweepSection) -> Result<(), ConfigError> {
        for (name, axis) in [("sweep.axis1", Some(&sw.axis1)), ("sweep.axis2", sw.axis2.as_ref())] {
            let Some(axis) = axis else { continue };
            if axis.n < 2 {
                return Err(invalid(name, format!("n = {} is below 2", axis.n)));
            }
            if !(axis.min.is_finite() && axis.max.is_finite()) || axis.max < axis.min {
                return Err(invalid(name, "needs finite min ≤ max"));
            }
        }
        if let Some(a2) = &sw.axis2 {
            if a2.param == sw.axis1.param {
                return Err(invalid("sweep.axis2", "sweeps the same parameter as axis1"));
            }
        }
        let axes: Vec<Param> = sw.axes().iter().map(|a| a.param).collect();
        for (i, l) in sw.linked.iter().enumerate() {
            let field = format!("sweep.linked[{i}]");
            if !axes.contains(&l.source) {
                return Err(invalid(&field, format!("source `{}` is not a swept axis", l.source)));
            }
            if axes.contains(&l.param) {
                return Err(invalid(&field, format!("`{}` is already swept", l.param)));
            }
            if !(l.scale.is_finite() && l.offset.is_finite()) {
                return Err(invalid(&field, "scale and offset must be finite"));
            }
        }
        sw.averaging()
            .validate()
            .map_err(|e| invalid("sweep", e.to_string()))?;
        if sw.output.is_empty() || sw.output.contains(['/', '\\']) {
            return Err(invalid("sweep.output", "must be a plain file stem"));
        }
        Ok(())
    }
}
