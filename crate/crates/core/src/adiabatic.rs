//! Linear adiabatic evolution `iε∂ₜΨ = H(t)Ψ` with `H(t) = -∂ₓ² + V(t)`,
//! started in the ground state, compared against the adiabatic ansatz
//! `e^{-iθ/ε} Φ(t)`.
//!
//! All eigenfunctions here are real, so the Berry-type phase `β` vanishes
//! and `Ξ = (H - E)⁻¹ ∂ₜΦ` on `Φ^⊥`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::interp::{fit_power_law, interpolate_scalar, interpolate_vec, time_derivative, LineFit};
use crate::reference::trapezoid_cumulative;
use crate::spectral::{apply_hamiltonian, constrained_resolvent_solve, ground_state_with, SolverOptions};

/// A time-dependent potential on a fixed grid.
pub trait PotentialPath: Send + Sync {
    fn grid(&self) -> &Grid;
    fn potential(&self, t: f64) -> Vec<f64>;
    /// Lets callers skip per-step eigensolves.
    fn is_static(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct StaticPotential {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl PotentialPath for StaticPotential {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn potential(&self, _t: f64) -> Vec<f64> {
        self.values.clone()
    }

    fn is_static(&self) -> bool {
        true
    }
}

/// `V(t) = -depth sech²(x - amplitude sin t)`.
#[derive(Debug, Clone)]
pub struct TranslatedWell {
    pub grid: Grid,
    pub depth: f64,
    pub amplitude: f64,
}

impl TranslatedWell {
    pub fn standard(grid: &Grid) -> Self {
        TranslatedWell {
            grid: grid.clone(),
            depth: 1.5,
            amplitude: 0.3,
        }
    }
}

impl PotentialPath for TranslatedWell {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn potential(&self, t: f64) -> Vec<f64> {
        crate::potentials::sech2_shifted(&self.grid, self.depth, self.amplitude * t.sin())
    }
}

/// Eigen-data of a path on a uniform time mesh.
#[derive(Debug, Clone)]
pub struct AdiabaticPath {
    pub grid: Grid,
    pub dt_path: f64,
    pub times: Vec<f64>,
    pub potentials: Vec<Vec<f64>>,
    /// Unit-norm ground states with continuous sign.
    pub phi: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub theta: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub xi_norm: Vec<f64>,
    pub dxi_norm: Vec<f64>,
    /// `sup_{s ≤ t} (||Ξ(s)|| + ∫₀ˢ ||∂Ξ||)`.
    pub bound_core: Vec<f64>,
}

impl AdiabaticPath {
    pub fn build(path: &dyn PotentialPath, t_final: f64, dt_path: f64, tol: f64) -> Result<Self> {
        let grid = path.grid().clone();
        if !(dt_path > 0.0 && t_final > 0.0) {
            return Err(LabError::InvalidParameter {
                name: "dt_path",
                reason: format!("need positive step and horizon, got {dt_path} and {t_final}"),
            });
        }
        let steps = (t_final / dt_path - 1e-9).ceil().max(2.0) as usize;
        let h = t_final / steps as f64;
        let opts = SolverOptions {
            tol,
            ..SolverOptions::default()
        };
        let mut times = Vec::with_capacity(steps + 1);
        let mut potentials = Vec::with_capacity(steps + 1);
        let mut phi: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let mut energy = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = k as f64 * h;
            let v = path.potential(t);
            let mut gs =
                ground_state_with(&grid, &v, 1.0, &opts, phi.last().map(|p| p.as_slice())).map_err(|e| e.at(t))?;
            if let Some(prev) = phi.last() {
                if grid.inner_real(prev, &gs.state) < 0.0 {
                    gs.state.iter_mut().for_each(|x| *x = -*x);
                }
            }
            times.push(t);
            potentials.push(v);
            phi.push(gs.state);
            energy.push(gs.energy);
        }
        let dphi = time_derivative(&phi, h)?;
        let mut xi = Vec::with_capacity(phi.len());
        for k in 0..phi.len() {
            let x = constrained_resolvent_solve(&grid, &potentials[k], energy[k], &phi[k], &dphi[k], tol)
                .map_err(|e| e.at(times[k]))?;
            xi.push(x);
        }
        let dxi = time_derivative(&xi, h)?;
        let xi_norm: Vec<f64> = xi.iter().map(|x| grid.l2_real(x)).collect();
        let dxi_norm: Vec<f64> = dxi.iter().map(|x| grid.l2_real(x)).collect();
        let dxi_int = trapezoid_cumulative(&dxi_norm, h);
        let mut bound_core = Vec::with_capacity(phi.len());
        let mut sup = 0.0f64;
        for (a, b) in xi_norm.iter().zip(&dxi_int) {
            sup = sup.max(a + b);
            bound_core.push(sup);
        }
        Ok(AdiabaticPath {
            grid,
            dt_path: h,
            times,
            potentials,
            phi,
            theta: trapezoid_cumulative(&energy, h),
            energy,
            xi,
            xi_norm,
            dxi_norm,
            bound_core,
        })
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    fn phi_at(&self, t: f64) -> Vec<f64> {
        let mut p = interpolate_vec(&self.phi, self.dt_path, t);
        let n = self.grid.l2_real(&p);
        p.iter_mut().for_each(|x| *x /= n);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticOptions {
    pub epsilon: f64,
    pub dt: f64,
    /// Evolve with `H - E|Φ><Φ|` instead of `H`.
    pub deflate: bool,
}

/// Strang splitting `K/2 · V/2 · D · V/2 · K/2` with `V` sampled at step
/// midpoints and the optional rank-one factor
/// `D = 1 + (e^{iE dt/ε} - 1)|Φ><Φ|`. Returns `Ψ` on the path mesh.
pub fn evolve_adiabatic(
    path: &dyn PotentialPath,
    mesh: &AdiabaticPath,
    opts: &AdiabaticOptions,
) -> Result<Vec<Vec<Complex64>>> {
    let eps = opts.epsilon;
    if !(eps > 0.0 && opts.dt > 0.0 && opts.dt <= 0.05 * eps * (1.0 + 1e-12)) {
        return Err(LabError::InvalidParameter {
            name: "dt",
            reason: format!("need 0 < dt <= 0.05 epsilon, got dt = {} at epsilon = {eps}", opts.dt),
        });
    }
    let grid = &mesh.grid;
    let sub = (mesh.dt_path / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = mesh.dt_path / sub as f64;
    let half_kinetic: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .map(|&k| Complex64::from_polar(1.0, -k * k * 0.5 * dt / eps))
        .collect();

    let mut psi: Vec<Complex64> = mesh.phi[0].iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut out = Vec::with_capacity(mesh.times.len());
    out.push(psi.clone());
    for k in 1..mesh.times.len() {
        for m in 0..sub {
            let t_mid = mesh.times[k - 1] + (m as f64 + 0.5) * dt;
            let v = path.potential(t_mid);
            kinetic(grid, &mut psi, &half_kinetic);
            phase(&mut psi, &v, 0.5 * dt / eps);
            if opts.deflate {
                let p = mesh.phi_at(t_mid);
                let e = interpolate_scalar(&mesh.energy, mesh.dt_path, t_mid);
                let c = grid.inner_rc(&p, &psi) * (Complex64::from_polar(1.0, e * dt / eps) - 1.0);
                for (z, pj) in psi.iter_mut().zip(&p) {
                    *z += c * pj;
                }
            }
            phase(&mut psi, &v, 0.5 * dt / eps);
            kinetic(grid, &mut psi, &half_kinetic);
        }
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFiniteSample { t: mesh.times[k] });
        }
        out.push(psi.clone());
    }
    Ok(out)
}

fn kinetic(grid: &Grid, psi: &mut [Complex64], factor: &[Complex64]) {
    grid.forward(psi);
    for (z, f) in psi.iter_mut().zip(factor) {
        *z *= f;
    }
    grid.inverse(psi);
}

fn phase(psi: &mut [Complex64], v: &[f64], scale: f64) {
    for (z, &w) in psi.iter_mut().zip(v) {
        *z *= Complex64::from_polar(1.0, -w * scale);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdiabaticErrorReport {
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// `||Ψ - e^{-iθ/ε} Φ||₂`.
    pub lhs_l2: Vec<f64>,
    /// `2ε sup_{s≤t}(||Ξ(s)|| + ∫₀ˢ||∂Ξ||)`.
    pub rhs_l2: Vec<f64>,
    /// `||ΠΨ||₂`, bounded by the same right side.
    pub pi_l2: Vec<f64>,
    /// `<ΠΨ, (H - E) ΠΨ>`.
    pub energy_lhs: Vec<f64>,
    pub ratio: Vec<f64>,
    pub mass_drift: f64,
}

impl AdiabaticErrorReport {
    pub fn sup_lhs(&self) -> f64 {
        self.lhs_l2.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_ratio(&self) -> f64 {
        self.ratio.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_energy(&self) -> f64 {
        self.energy_lhs.iter().copied().fold(0.0, f64::max)
    }
}

/// Evolves without deflation and evaluates both adiabatic estimates.
pub fn adiabatic_bound_check(
    path: &dyn PotentialPath,
    mesh: &AdiabaticPath,
    epsilon: f64,
    dt: f64,
) -> Result<AdiabaticErrorReport> {
    let opts = AdiabaticOptions {
        epsilon,
        dt,
        deflate: false,
    };
    let psi = evolve_adiabatic(path, mesh, &opts)?;
    let grid = &mesh.grid;
    let mut rep = AdiabaticErrorReport {
        epsilon,
        times: mesh.times.clone(),
        lhs_l2: Vec::new(),
        rhs_l2: Vec::new(),
        pi_l2: Vec::new(),
        energy_lhs: Vec::new(),
        ratio: Vec::new(),
        mass_drift: 0.0,
    };
    for (k, p) in psi.iter().enumerate() {
        let phi = &mesh.phi[k];
        let ph = Complex64::from_polar(1.0, -mesh.theta[k] / epsilon);
        let diff: Vec<Complex64> = p.iter().zip(phi).map(|(z, f)| z - ph * f).collect();
        let lhs = grid.l2(&diff);
        let overlap = grid.inner_rc(phi, p);
        let pi: Vec<Complex64> = p.iter().zip(phi).map(|(z, f)| z - overlap * f).collect();
        let mut hpi = apply_hamiltonian(grid, &mesh.potentials[k], &pi)?;
        for (a, b) in hpi.iter_mut().zip(&pi) {
            *a -= mesh.energy[k] * b;
        }
        let rhs = 2.0 * epsilon * mesh.bound_core[k];
        rep.lhs_l2.push(lhs);
        rep.rhs_l2.push(rhs);
        rep.pi_l2.push(grid.l2(&pi));
        rep.energy_lhs.push(grid.inner(&pi, &hpi).re);
        rep.ratio.push(if rhs > 0.0 { lhs / rhs } else { 0.0 });
        rep.mass_drift = rep.mass_drift.max((grid.l2(p) - 1.0).abs());
    }
    Ok(rep)
}

/// Log-log slope of a sup-in-time quantity across an ε list.
pub fn epsilon_slope(epsilons: &[f64], values: &[f64]) -> Result<LineFit> {
    if epsilons.len() < 3 {
        return Err(LabError::InsufficientSamples {
            needed: 3,
            available: epsilons.len(),
        });
    }
    fit_power_law(epsilons, values)
}
