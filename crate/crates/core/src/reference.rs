//! The ε-independent comparison dynamics: at every time `Q` is the ground
//! state of `-∂ₓ² + V` with `||Q|| = ||ψ₀||`, and
//!
//! ```text
//! V(t) = φ₀ cos t + φ̇₀ sin t - ½ ∫₀ᵗ Q(s)² sin(t - s) ds.
//! ```
//!
//! The convolution is carried by two running integrals,
//! `A = ∫ Q² cos s` and `B = ∫ Q² sin s`, via
//! `∫₀ᵗ Q² sin(t - s) ds = sin t · A(t) - cos t · B(t)`.
//! Under the trapezoid rule the newest sample enters `A` and `B` with weights
//! whose contributions to `sin t · A - cos t · B` cancel (the kernel vanishes at
//! `s = t`), so `V(t_{n+1})` needs only `Q` up to `t_n` and the march is
//! explicit.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Grid, NormKind};
use crate::interp::time_derivative;
use crate::spectral::{
    constrained_resolvent_solve, ground_state_with, spectral_report, GroundState, ReportOptions, SolverOptions,
    SpectralReport,
};

/// Source of ground states along the march; swappable so tests can freeze `Q`.
pub trait GroundStateSolver {
    fn solve(&mut self, grid: &Grid, potential: &[f64], mass: f64, guess: Option<&[f64]>) -> Result<GroundState>;
}

/// The production eigensolver.
#[derive(Debug, Clone, Default)]
pub struct SpectralSolver {
    pub options: SolverOptions,
}

impl GroundStateSolver for SpectralSolver {
    fn solve(&mut self, grid: &Grid, potential: &[f64], mass: f64, guess: Option<&[f64]>) -> Result<GroundState> {
        ground_state_with(grid, potential, mass, &self.options, guess)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub dt_ref: f64,
    pub t_final: f64,
    /// Eigen-residual and resolvent tolerance.
    pub ref_tol: f64,
    pub report: ReportOptions,
    pub gap_tol: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            dt_ref: 1e-3,
            t_final: 1.0,
            ref_tol: 1e-10,
            report: ReportOptions::default(),
            gap_tol: 1e-6,
        }
    }
}

/// Time-indexed `(Q, V, ∂ₜV, E)` plus the derived `χ`, `∂ₜQ` and `θ`.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub grid: Grid,
    pub mass: f64,
    pub dt_ref: f64,
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub v_dot: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub residual: Vec<f64>,
    /// Filled by [`chi_and_rate`].
    pub dq_dt: Vec<Vec<f64>>,
    pub chi: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// Running integrals at the final time.
    pub acc_cos: Vec<f64>,
    pub acc_sin: Vec<f64>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn has_rates(&self) -> bool {
        self.chi.len() == self.len() && self.dq_dt.len() == self.len() && self.theta.len() == self.len()
    }

    /// `max_n ||(-∂ₓ² + V - E) Q||₂` over stored times.
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// `||-∂ₜ²V - V - ½Q²||₂` at interior times, `∂ₜ²` by second differences.
    pub fn field_equation_residual(&self) -> Vec<f64> {
        let h2 = self.dt_ref * self.dt_ref;
        (1..self.len().saturating_sub(1))
            .map(|n| {
                let r: Vec<f64> = (0..self.grid.n())
                    .map(|j| {
                        let d2 = (self.v[n + 1][j] - 2.0 * self.v[n][j] + self.v[n - 1][j]) / h2;
                        d2 + self.v[n][j] + 0.5 * self.q[n][j] * self.q[n][j]
                    })
                    .collect();
                self.grid.l2_real(&r)
            })
            .collect()
    }
}

/// Marches the reference system with the production eigensolver.
pub fn march_reference(
    grid: &Grid,
    phi0: &[f64],
    phi_dot0: &[f64],
    mass: f64,
    opts: &ReferenceOptions,
) -> Result<ReferenceTrajectory> {
    let mut solver = SpectralSolver {
        options: SolverOptions {
            tol: opts.ref_tol,
            gap_tol: opts.gap_tol,
            ..SolverOptions::default()
        },
    };
    march_reference_with(grid, phi0, phi_dot0, mass, opts, &mut solver)
}

pub fn march_reference_with<S: GroundStateSolver>(
    grid: &Grid,
    phi0: &[f64],
    phi_dot0: &[f64],
    mass: f64,
    opts: &ReferenceOptions,
    solver: &mut S,
) -> Result<ReferenceTrajectory> {
    grid.check_len(phi0.len())?;
    grid.check_len(phi_dot0.len())?;
    if !(opts.dt_ref > 0.0 && opts.t_final >= 0.0) {
        return Err(LabError::InvalidParameter {
            name: "dt_ref",
            reason: format!("need dt_ref > 0 and T >= 0, got {} and {}", opts.dt_ref, opts.t_final),
        });
    }
    check_assumption(grid, phi0, &opts.report)?;

    let steps = (opts.t_final / opts.dt_ref - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps == 0 {
        opts.dt_ref
    } else {
        opts.t_final / steps as f64
    };
    let n = grid.n();

    let gs0 = solver.solve(grid, phi0, mass, None)?;
    let mut traj = ReferenceTrajectory {
        grid: grid.clone(),
        mass,
        dt_ref: dt,
        times: vec![0.0],
        q: vec![gs0.state],
        v: vec![phi0.to_vec()],
        v_dot: vec![phi_dot0.to_vec()],
        energy: vec![gs0.energy],
        residual: vec![gs0.residual],
        dq_dt: Vec::new(),
        chi: Vec::new(),
        theta: Vec::new(),
        acc_cos: vec![0.0; n],
        acc_sin: vec![0.0; n],
    };

    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * dt;
        let t = step as f64 * dt;
        let q_prev = traj.q.last().expect("nonempty");
        // older samples plus the known half of the newest trapezoid panel
        let (cp, sp) = (t_prev.cos(), t_prev.sin());
        for j in 0..n {
            let q2 = q_prev[j] * q_prev[j];
            traj.acc_cos[j] += 0.5 * dt * q2 * cp;
            traj.acc_sin[j] += 0.5 * dt * q2 * sp;
        }
        let (ct, st) = (t.cos(), t.sin());
        let v: Vec<f64> = (0..n)
            .map(|j| phi0[j] * ct + phi_dot0[j] * st - 0.5 * (st * traj.acc_cos[j] - ct * traj.acc_sin[j]))
            .collect();

        let mut gs = solver.solve(grid, &v, mass, Some(q_prev)).map_err(|e| e.at(t))?;
        if grid.inner_real(q_prev, &gs.state) < 0.0 {
            gs.state.iter_mut().for_each(|x| *x = -*x);
        }
        for j in 0..n {
            let q2 = gs.state[j] * gs.state[j];
            traj.acc_cos[j] += 0.5 * dt * q2 * ct;
            traj.acc_sin[j] += 0.5 * dt * q2 * st;
        }
        let v_dot: Vec<f64> = (0..n)
            .map(|j| -phi0[j] * st + phi_dot0[j] * ct - 0.5 * (ct * traj.acc_cos[j] + st * traj.acc_sin[j]))
            .collect();

        traj.times.push(t);
        traj.q.push(gs.state);
        traj.v.push(v);
        traj.v_dot.push(v_dot);
        traj.energy.push(gs.energy);
        traj.residual.push(gs.residual);
    }
    Ok(traj)
}

/// The starting potential must carry exactly one bound state and no
/// zero-energy resonance.
pub fn check_assumption(grid: &Grid, potential: &[f64], opts: &ReportOptions) -> Result<SpectralReport> {
    let report = spectral_report(grid, potential, opts)?;
    if report.negative_count != 1 {
        return Err(LabError::AssumptionViolated(format!(
            "expected one negative eigenvalue, found {}",
            report.negative_count
        )));
    }
    if report.is_resonant {
        return Err(LabError::AssumptionViolated(format!(
            "zero-energy resonance (indicator {:.3e})",
            report.resonance_indicator
        )));
    }
    Ok(report)
}

/// Fills `∂ₜQ` (second-order differences), `χ` and `θ = ∫₀ᵗ E`.
pub fn chi_and_rate(traj: &mut ReferenceTrajectory, tol: f64) -> Result<()> {
    let len = traj.len();
    if len < 3 {
        return Err(LabError::InsufficientSamples {
            needed: 3,
            available: len,
        });
    }
    let h = traj.dt_ref;
    let dq = time_derivative(&traj.q, h)?;
    let mut chi = Vec::with_capacity(len);
    for k in 0..len {
        let c = constrained_resolvent_solve(&traj.grid, &traj.v[k], traj.energy[k], &traj.q[k], &dq[k], tol)
            .map_err(|e| e.at(traj.times[k]))?;
        chi.push(c);
    }
    traj.theta = trapezoid_cumulative(&traj.energy, h);
    traj.dq_dt = dq;
    traj.chi = chi;
    Ok(())
}

/// Cumulative trapezoid integral of uniformly spaced samples.
pub fn trapezoid_cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * h * (values[k - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Uniform-in-time size of the corrector, reported as diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiBounds {
    pub sup_weighted_l1: f64,
    pub sup_linf: f64,
    pub sup_overlap: f64,
}

pub fn chi_bounds(traj: &ReferenceTrajectory) -> ChiBounds {
    let g = &traj.grid;
    let mut b = ChiBounds {
        sup_weighted_l1: 0.0,
        sup_linf: 0.0,
        sup_overlap: 0.0,
    };
    for (c, q) in traj.chi.iter().zip(&traj.q) {
        b.sup_weighted_l1 = b.sup_weighted_l1.max(g.norm_real(c, NormKind::L1.weighted(1)));
        b.sup_linf = b.sup_linf.max(g.norm_real(c, NormKind::LINF));
        b.sup_overlap = b.sup_overlap.max(g.inner_real(q, c).abs());
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SecondBoundState,
    Resonance,
    EigenvalueLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TStarReport {
    pub horizon_reached: bool,
    pub first_violation_time: Option<f64>,
    pub violation_kind: Option<ViolationKind>,
}

/// Runs the shooting diagnostics on every stored potential.
pub fn monitor_tstar(traj: &ReferenceTrajectory, opts: &ReportOptions) -> TStarReport {
    monitor_potentials(
        &traj.grid,
        traj.times.iter().copied().zip(traj.v.iter().map(|v| v.as_slice())),
        opts,
    )
}

pub fn monitor_potentials<'a, I>(grid: &Grid, samples: I, opts: &ReportOptions) -> TStarReport
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    for (t, v) in samples {
        let kind = match spectral_report(grid, v, opts) {
            Err(_) => Some(ViolationKind::EigenvalueLoss),
            Ok(r) if r.negative_count == 0 => Some(ViolationKind::EigenvalueLoss),
            Ok(r) if r.negative_count > 1 => Some(ViolationKind::SecondBoundState),
            Ok(r) if r.is_resonant => Some(ViolationKind::Resonance),
            Ok(_) => None,
        };
        if let Some(kind) = kind {
            return TStarReport {
                horizon_reached: false,
                first_violation_time: Some(t),
                violation_kind: Some(kind),
            };
        }
    }
    TStarReport {
        horizon_reached: true,
        first_violation_time: None,
        violation_kind: None,
    }
}
