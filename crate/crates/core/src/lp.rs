//! The coupled electron–field system
//!
//! ```text
//! ε i ∂ₜψ = -∂ₓ²ψ + φ ψ,      -∂ₜ²φ = φ + ½|ψ|²
//! ```
//!
//! integrated by Strang splitting: exact kinetic half-steps in Fourier
//! space around a potential phase, with the field advanced in closed form
//! (harmonic rotation about the frozen equilibrium `-½|ψ|²`) on either side
//! of the phase step. Every stage is unitary in `ψ` and the step is exactly
//! reversible under `dt ↦ -dt`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{to_complex, Field, Grid, NormKind};
use crate::potentials::InitialDatum;
use crate::spectral::ground_state;

#[derive(Debug, Clone)]
pub struct PolaronState {
    pub grid: Grid,
    pub t: f64,
    pub psi: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
}

impl PolaronState {
    pub fn new(grid: &Grid, psi: Vec<Complex64>, phi: Vec<f64>, phi_dot: Vec<f64>) -> Result<Self> {
        grid.check_len(psi.len())?;
        grid.check_len(phi.len())?;
        grid.check_len(phi_dot.len())?;
        Ok(PolaronState {
            grid: grid.clone(),
            t: 0.0,
            psi,
            phi,
            phi_dot,
        })
    }

    /// `ψ₀` is the ground state of `-∂ₓ² + φ₀` scaled to the datum's mass.
    pub fn from_datum(grid: &Grid, datum: &InitialDatum, tol: f64) -> Result<Self> {
        let gs = ground_state(grid, &datum.phi0, datum.mass, tol)?;
        PolaronState::new(grid, to_complex(&gs.state), datum.phi0.clone(), datum.phi_dot0.clone())
    }

    pub fn psi_field(&self) -> Field {
        Field::complex(&self.grid, self.psi.clone()).expect("length checked at construction")
    }

    pub fn phi_field(&self) -> Field {
        Field::real(&self.grid, self.phi.clone()).expect("length checked at construction")
    }

    pub fn phi_dot_field(&self) -> Field {
        Field::real(&self.grid, self.phi_dot.clone()).expect("length checked at construction")
    }
}

/// How the field responds to the electron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Full two-way coupling.
    #[default]
    Coupled,
    /// `φ` held fixed; `ψ` sees it as a static potential.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpParams {
    pub epsilon: f64,
    /// Signed step; negative values integrate backwards.
    pub dt: f64,
    #[serde(default)]
    pub field: FieldMode,
    /// Peak damping rate of the optional absorbing layer on the outer tenth
    /// of the box. Never enable it when checking conservation.
    #[serde(default)]
    pub absorber: Option<f64>,
}

pub const MAX_STEP_RATIO: f64 = 0.05;

impl LpParams {
    /// `dt = c_psi * epsilon`.
    pub fn new(epsilon: f64, c_psi: f64) -> Result<Self> {
        let p = LpParams {
            epsilon,
            dt: c_psi * epsilon,
            field: FieldMode::Coupled,
            absorber: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(LabError::InvalidParameter {
                name: "epsilon",
                reason: format!("must lie in (0, 1], got {}", self.epsilon),
            });
        }
        if !(self.dt != 0.0 && self.dt.abs() <= MAX_STEP_RATIO * self.epsilon * (1.0 + 1e-12)) {
            return Err(LabError::InvalidParameter {
                name: "dt",
                reason: format!(
                    "|dt| must be nonzero and at most {MAX_STEP_RATIO} * epsilon, got {}",
                    self.dt
                ),
            });
        }
        if let Some(a) = self.absorber {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(LabError::InvalidParameter {
                    name: "absorber",
                    reason: format!("damping rate must be finite and nonnegative, got {a}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedDiagnostics {
    pub mass: f64,
    pub energy: f64,
}

/// `mass = ||ψ||²`, `energy = ||ψ'||² + ∫φ|ψ|² + ∫(φ² + φ̇²)`.
pub fn conserved(state: &PolaronState) -> ConservedDiagnostics {
    let g = &state.grid;
    let h = g.spacing();
    let dpsi = g.spectral_derivative(&state.psi, 1);
    let kinetic: f64 = dpsi.iter().map(|z| z.norm_sqr()).sum();
    let mut mass = 0.0;
    let mut coupling = 0.0;
    let mut field = 0.0;
    for ((z, &p), &pd) in state.psi.iter().zip(&state.phi).zip(&state.phi_dot) {
        let rho = z.norm_sqr();
        mass += rho;
        coupling += p * rho;
        field += p * p + pd * pd;
    }
    ConservedDiagnostics {
        mass: h * mass,
        energy: h * (kinetic + coupling + field),
    }
}

/// Precomputed propagator pieces for a fixed grid and step.
#[derive(Debug, Clone)]
pub struct LpStepper {
    grid: Grid,
    params: LpParams,
    half_kinetic: Vec<Complex64>,
    damping: Option<Vec<f64>>,
}

impl LpStepper {
    pub fn new(grid: &Grid, params: &LpParams) -> Result<Self> {
        params.validate()?;
        let tau = 0.5 * params.dt / params.epsilon;
        let half_kinetic = grid
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -k * k * tau))
            .collect();
        let damping = params.absorber.map(|rate| {
            absorber_profile(grid, rate)
                .into_iter()
                .map(|g| (-g * params.dt.abs()).exp())
                .collect()
        });
        Ok(LpStepper {
            grid: grid.clone(),
            params: params.clone(),
            half_kinetic,
            damping,
        })
    }

    pub fn params(&self) -> &LpParams {
        &self.params
    }

    pub fn step(&self, state: &mut PolaronState) -> Result<()> {
        if state.grid != self.grid {
            return Err(LabError::ShapeMismatch {
                expected: self.grid.n(),
                found: state.grid.n(),
            });
        }
        let dt = self.params.dt;
        let eps = self.params.epsilon;
        let coupled = self.params.field == FieldMode::Coupled;

        self.kinetic_half(&mut state.psi);
        if coupled {
            field_advance(&mut state.phi, &mut state.phi_dot, &state.psi, 0.5 * dt);
        }
        for (z, &p) in state.psi.iter_mut().zip(&state.phi) {
            *z *= Complex64::from_polar(1.0, -p * dt / eps);
        }
        if coupled {
            field_advance(&mut state.phi, &mut state.phi_dot, &state.psi, 0.5 * dt);
        }
        self.kinetic_half(&mut state.psi);
        if let Some(d) = &self.damping {
            for (z, f) in state.psi.iter_mut().zip(d) {
                *z *= f;
            }
        }
        state.t += dt;

        let finite = state.psi.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && state.phi.iter().all(|v| v.is_finite())
            && state.phi_dot.iter().all(|v| v.is_finite());
        if !finite {
            return Err(LabError::NonFiniteSample { t: state.t });
        }
        Ok(())
    }

    fn kinetic_half(&self, psi: &mut [Complex64]) {
        self.grid.forward(psi);
        for (z, f) in psi.iter_mut().zip(&self.half_kinetic) {
            *z *= f;
        }
        self.grid.inverse(psi);
    }
}

/// Damping rate `rate * sin²` ramping up over `|x| ∈ [0.9L, L]`.
pub fn absorber_profile(grid: &Grid, rate: f64) -> Vec<f64> {
    let l = grid.half_width();
    let start = 0.9 * l;
    grid.sample(|x| {
        let d = x.abs() - start;
        if d <= 0.0 {
            0.0
        } else {
            let s = (0.5 * std::f64::consts::PI * (d / (l - start)).min(1.0)).sin();
            rate * s * s
        }
    })
}

/// Exact flow of `φ̈ = -φ - ½ρ` over `tau` with `ρ = |ψ|²` frozen.
fn field_advance(phi: &mut [f64], phi_dot: &mut [f64], psi: &[Complex64], tau: f64) {
    let (s, c) = tau.sin_cos();
    for ((p, pd), z) in phi.iter_mut().zip(phi_dot.iter_mut()).zip(psi) {
        let rest = -0.5 * z.norm_sqr();
        let dev = *p - rest;
        let v = *pd;
        *p = rest + dev * c + v * s;
        *pd = -dev * s + v * c;
    }
}

/// One step, for callers that do not keep a stepper around.
pub fn lp_step(state: &PolaronState, params: &LpParams) -> Result<PolaronState> {
    let stepper = LpStepper::new(&state.grid, params)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// One row of the dense diagnostics series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub linf_psi: f64,
}

impl DiagnosticsRow {
    pub fn of(state: &PolaronState) -> Self {
        let c = conserved(state);
        DiagnosticsRow {
            t: state.t,
            mass: c.mass,
            energy: c.energy,
            linf_psi: state.grid.norm(&state.psi, NormKind::LINF),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpRun {
    pub params: LpParams,
    /// Step actually taken: the requested step shrunk so that an integer
    /// number of steps lands on the final time.
    pub dt: f64,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub checkpoints: Vec<PolaronState>,
    pub final_state: PolaronState,
}

impl LpRun {
    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.diagnostics[0].energy;
        self.diagnostics
            .iter()
            .map(|d| ((d.energy - e0) / e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass;
        self.diagnostics
            .iter()
            .map(|d| ((d.mass - m0) / m0).abs())
            .fold(0.0, f64::max)
    }
}

/// Which quantities [`evolve_lp_with`] records.
#[derive(Debug, Clone, Default)]
pub struct RecordOptions {
    /// Store the full state at these times (rounded to the nearest step).
    pub checkpoint_times: Vec<f64>,
    /// Skip the per-step conserved-quantity evaluation (two FFTs).
    pub skip_diagnostics: bool,
}

pub fn evolve_lp(initial: &PolaronState, params: &LpParams, t_final: f64) -> Result<LpRun> {
    evolve_lp_with(initial, params, t_final, &RecordOptions::default(), |_| Ok(()))
}

/// Integrates to `initial.t + t_final`, calling `observer` on the initial
/// state and after every step.
pub fn evolve_lp_with<F>(
    initial: &PolaronState,
    params: &LpParams,
    t_final: f64,
    record: &RecordOptions,
    mut observer: F,
) -> Result<LpRun>
where
    F: FnMut(&PolaronState) -> Result<()>,
{
    params.validate()?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(LabError::InvalidParameter {
            name: "T",
            reason: format!("must be finite and nonnegative, got {t_final}"),
        });
    }
    let steps = (t_final / params.dt.abs() - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps == 0 {
        params.dt
    } else {
        params.dt.signum() * t_final / steps as f64
    };
    let effective = LpParams { dt, ..params.clone() };
    let stepper = LpStepper::new(&initial.grid, &effective)?;
    let checkpoint_steps: Vec<usize> = record
        .checkpoint_times
        .iter()
        .map(|&t| {
            if steps == 0 {
                0
            } else {
                (t / dt.abs()).round().clamp(0.0, steps as f64) as usize
            }
        })
        .collect();

    let mut state = initial.clone();
    let mut diagnostics = Vec::with_capacity(if record.skip_diagnostics { 0 } else { steps + 1 });
    let mut checkpoints = Vec::new();
    let mut keep = |n: usize, s: &PolaronState, diag: &mut Vec<DiagnosticsRow>| {
        if !record.skip_diagnostics {
            diag.push(DiagnosticsRow::of(s));
        }
        for _ in checkpoint_steps.iter().filter(|&&c| c == n) {
            checkpoints.push(s.clone());
        }
    };
    keep(0, &state, &mut diagnostics);
    observer(&state)?;
    for n in 1..=steps {
        stepper.step(&mut state)?;
        keep(n, &state, &mut diagnostics);
        observer(&state).map_err(|e| e.at(state.t))?;
    }
    Ok(LpRun {
        params: params.clone(),
        dt,
        diagnostics,
        checkpoints,
        final_state: state,
    })
}
