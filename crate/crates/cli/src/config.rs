//! Experiment configuration: JSON, unknown keys rejected, defaults filled.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lplab::grid::Grid;
use lplab::io::{read_binary, read_csv};
use lplab::potentials::{poschl_teller_preset, InitialDatum};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Reference,
    Evolve,
    Decompose,
    Adiabatic,
    Dispersive,
    Sweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Reference => "reference",
            Kind::Evolve => "evolve",
            Kind::Decompose => "decompose",
            Kind::Adiabatic => "adiabatic",
            Kind::Dispersive => "dispersive",
            Kind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

/// Initial field data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// `φ₀ = -a sech²`, `φ̇₀ = 0.2 x e^{-x²}`.
    PoschlTeller { a: f64 },
    /// Field files (`.csv` or binary) on the configured grid; relative paths
    /// resolve against the config file's directory.
    File { phi0: PathBuf, phi_dot0: PathBuf },
}

impl Default for Preset {
    fn default() -> Self {
        Preset::PoschlTeller { a: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ref_tol: f64,
    pub rho_tol: f64,
    pub gap_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ref_tol: 1e-10,
            rho_tol: 0.02,
            gap_tol: 1e-6,
        }
    }
}

/// Translated-well path for `adiabatic`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdiabaticConfig {
    pub depth: f64,
    pub amplitude: f64,
    pub dt_path: f64,
}

impl Default for AdiabaticConfig {
    fn default() -> Self {
        AdiabaticConfig {
            depth: 1.5,
            amplitude: 0.3,
            dt_path: 2e-3,
        }
    }
}

/// Static `-depth sech²` well for `dispersive`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersiveConfig {
    pub depth: f64,
    pub project: bool,
    pub record_stride: usize,
}

impl Default for DispersiveConfig {
    fn default() -> Self {
        DispersiveConfig {
            depth: 1.5,
            project: true,
            record_stride: 5,
        }
    }
}

fn default_mass() -> f64 {
    1.0
}
fn default_epsilons() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn default_t() -> f64 {
    1.0
}
fn default_dt_ref() -> f64 {
    1e-3
}
fn default_c_psi() -> f64 {
    0.02
}
fn default_stride() -> f64 {
    0.25
}
fn default_oversample() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub preset: Preset,
    /// `||ψ₀||₂`.
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(rename = "T", default = "default_t")]
    pub t_final: f64,
    #[serde(default = "default_dt_ref")]
    pub dt_ref: f64,
    #[serde(default = "default_c_psi")]
    pub c_psi: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub kind: Option<Kind>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Time between stored snapshots and checkpoints.
    #[serde(default = "default_stride")]
    pub checkpoint_stride: f64,
    /// Refinement factor for the sup norms behind `M₂`, `M₃` (1 = grid nodes).
    #[serde(default = "default_oversample")]
    pub sup_oversample: usize,
    #[serde(default)]
    pub adiabatic: AdiabaticConfig,
    #[serde(default)]
    pub dispersive: DispersiveConfig,
    /// Directory of the config file, for resolving relative field paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config_str(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        positive("grid.L", self.grid.half_width)?;
        if !self.grid.points.is_power_of_two() {
            return Err(CliError::invalid("grid.N", "N must be a power of two"));
        }
        Grid::new(self.grid.half_width, self.grid.points).map_err(|e| CliError::invalid("grid.N", e))?;
        if let Preset::PoschlTeller { a } = self.preset {
            positive("preset.poschl_teller.a", a)?;
        }
        positive("mass", self.mass)?;
        if self.epsilons.is_empty() {
            return Err(CliError::invalid("epsilons", "at least one value is required"));
        }
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(CliError::invalid(
                "epsilons",
                format!("values must lie in (0, 1], got {e}"),
            ));
        }
        positive("T", self.t_final)?;
        positive("dt_ref", self.dt_ref)?;
        positive("c_psi", self.c_psi)?;
        if self.c_psi > lplab::lp::MAX_STEP_RATIO {
            return Err(CliError::invalid(
                "c_psi",
                format!("must not exceed {}, got {}", lplab::lp::MAX_STEP_RATIO, self.c_psi),
            ));
        }
        positive("tolerances.ref_tol", self.tolerances.ref_tol)?;
        positive("tolerances.rho_tol", self.tolerances.rho_tol)?;
        positive("tolerances.gap_tol", self.tolerances.gap_tol)?;
        positive("checkpoint_stride", self.checkpoint_stride)?;
        if !(1..=16).contains(&self.sup_oversample) {
            return Err(CliError::invalid("sup_oversample", "must lie in 1..=16"));
        }
        positive("adiabatic.depth", self.adiabatic.depth)?;
        positive("adiabatic.dt_path", self.adiabatic.dt_path)?;
        if !self.adiabatic.amplitude.is_finite() {
            return Err(CliError::invalid("adiabatic.amplitude", "must be finite"));
        }
        positive("dispersive.depth", self.dispersive.depth)?;
        if self.dispersive.record_stride == 0 {
            return Err(CliError::invalid("dispersive.record_stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Checks that the subcommand agrees with `kind` when both are given.
    pub fn resolve_kind(&self, requested: Kind) -> Result<Kind, CliError> {
        match self.kind {
            Some(k) if k != requested => Err(CliError::invalid(
                "kind",
                format!("config says `{}` but `{}` was requested", k.name(), requested.name()),
            )),
            _ => {
                if requested == Kind::Sweep {
                    let mut eps = self.epsilons.clone();
                    eps.sort_by(|a, b| b.total_cmp(a));
                    eps.dedup();
                    if eps.len() < 3 {
                        return Err(CliError::invalid(
                            "epsilons",
                            "a sweep needs at least three distinct values",
                        ));
                    }
                }
                Ok(requested)
            }
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid.half_width, self.grid.points).expect("validated")
    }

    pub fn datum(&self) -> Result<InitialDatum, CliError> {
        let grid = self.grid();
        match &self.preset {
            Preset::PoschlTeller { a } => {
                let mut d = poschl_teller_preset(&grid, *a);
                d.mass = self.mass;
                Ok(d)
            }
            Preset::File { phi0, phi_dot0 } => Ok(InitialDatum {
                phi0: self.read_real_field(&grid, phi0, "preset.file.phi0")?,
                phi_dot0: self.read_real_field(&grid, phi_dot0, "preset.file.phi_dot0")?,
                mass: self.mass,
            }),
        }
    }

    fn read_real_field(&self, grid: &Grid, path: &Path, key: &str) -> Result<Vec<f64>, CliError> {
        let full = if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        };
        let file = File::open(&full).map_err(|e| CliError::invalid(key, format!("{}: {e}", full.display())))?;
        let is_csv = full.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let field = if is_csv {
            read_csv(BufReader::new(file))
        } else {
            read_binary(BufReader::new(file))
        }
        .map_err(|e| CliError::invalid(key, e))?;
        if field.grid() != grid {
            return Err(CliError::invalid(key, "field grid differs from the configured grid"));
        }
        if !field.is_real() {
            return Err(CliError::invalid(key, "field must be real"));
        }
        Ok(field.real_values())
    }
}
