//! Dispersion of the continuous-spectrum part under a slowly moving
//! potential: `iε∂ₜψ = (-∂ₓ² + V(t)) P_c(t) ψ` with `P_c = 1 - |φ><φ|`.
//!
//! Since `Hφ = Eφ`, the generator equals `H - E|φ><φ|`. Each step applies the
//! Strang splitting of that operator (with the rank-one part exponentiated
//! exactly), then projects onto the continuous subspace at the new time. The
//! bound-state coefficient `a = <φ, ψ>` obeys `ȧ = <∂ₜφ, ψ̃>` and is carried
//! separately, so that on a static potential `<φ, ψ̃>` stays at round-off
//! instead of picking up the O(dt²) leakage of the split step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adiabatic::PotentialPath;
use crate::error::{LabError, Result};
use crate::grid::{Grid, NormKind};
use crate::interp::{fit_power_law, time_derivative};
use crate::reference::check_assumption;
use crate::spectral::{ground_state, ground_state_with, ReportOptions, SolverOptions};

/// `f - <φ, f> φ` with `φ` the unit ground state of `-∂ₓ² + V`.
pub fn pc_project(grid: &Grid, potential: &[f64], f: &[Complex64], tol: f64) -> Result<Vec<Complex64>> {
    grid.check_len(f.len())?;
    let gs = ground_state(grid, potential, 1.0, tol)?;
    Ok(project_out(grid, &gs.state, f))
}

fn project_out(grid: &Grid, phi: &[f64], f: &[Complex64]) -> Vec<Complex64> {
    let c = grid.inner_rc(phi, f);
    f.iter().zip(phi).map(|(z, p)| z - c * p).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedOptions {
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    /// With `false` the bound state is ignored and the plain Schrödinger
    /// flow is integrated (free baseline).
    pub project: bool,
    /// Record norms every this many steps.
    pub record_stride: usize,
    /// Keep `ψ̃`, `φ` and `V` at every step (needed by the Duhamel check).
    pub keep_fields: bool,
    pub eigen_tol: f64,
    pub report: ReportOptions,
}

impl ProjectedOptions {
    pub fn new(epsilon: f64, dt: f64, t_final: f64) -> Self {
        ProjectedOptions {
            epsilon,
            dt,
            t_final,
            project: true,
            record_stride: 1,
            keep_fields: false,
            eigen_tol: 1e-11,
            report: ReportOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectedRun {
    pub grid: Grid,
    pub epsilon: f64,
    /// Step actually taken (the requested one shrunk to land on `t_final`).
    pub dt: f64,
    pub times: Vec<f64>,
    /// `||<x>⁻¹ ψ̃||∞`.
    pub winf_m1: Vec<f64>,
    pub linf: Vec<f64>,
    pub l2: Vec<f64>,
    /// `|<φ, ψ̃>|`.
    pub overlap: Vec<f64>,
    /// `||ψ̃||² + |a|²`.
    pub mass: Vec<f64>,
    pub initial: Vec<Complex64>,
    pub dense: Option<DenseFields>,
}

/// Per-step fields of a run.
#[derive(Debug, Clone, Default)]
pub struct DenseFields {
    pub psi_tilde: Vec<Vec<Complex64>>,
    pub phi: Vec<Vec<f64>>,
    pub potential: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
}

impl ProjectedRun {
    pub fn max_overlap(&self) -> f64 {
        self.overlap.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass.iter().map(|m| ((m - m0) / m0).abs()).fold(0.0, f64::max)
    }

    pub fn series(&self, kind: SeriesKind) -> &[f64] {
        match kind {
            SeriesKind::WeightedLinf => &self.winf_m1,
            SeriesKind::Linf => &self.linf,
            SeriesKind::L2 => &self.l2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    WeightedLinf,
    Linf,
    L2,
}

struct Eigen {
    phi: Vec<f64>,
    energy: f64,
}

fn eigen_at(
    path: &dyn PotentialPath,
    v: &[f64],
    t: f64,
    prev: Option<&Eigen>,
    opts: &ProjectedOptions,
) -> Result<Eigen> {
    let grid = path.grid();
    check_assumption(grid, v, &opts.report).map_err(|e| e.at(t))?;
    let solver = SolverOptions {
        tol: opts.eigen_tol,
        ..SolverOptions::default()
    };
    let gs = ground_state_with(grid, v, 1.0, &solver, prev.map(|p| p.phi.as_slice())).map_err(|e| e.at(t))?;
    let mut phi = gs.state;
    if let Some(p) = prev {
        if grid.inner_real(&p.phi, &phi) < 0.0 {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(Eigen { phi, energy: gs.energy })
}

/// One split step of `H - E|φ><φ|` with `V`, `φ`, `E` frozen over the step.
struct SplitStep {
    half_kinetic: Vec<Complex64>,
    scale: f64,
}

impl SplitStep {
    fn new(grid: &Grid, epsilon: f64, dt: f64) -> Self {
        SplitStep {
            half_kinetic: grid
                .wavenumbers()
                .iter()
                .map(|&k| Complex64::from_polar(1.0, -k * k * 0.5 * dt / epsilon))
                .collect(),
            scale: dt / epsilon,
        }
    }

    fn apply(&self, grid: &Grid, psi: &mut [Complex64], v: &[f64], bound: Option<(&[f64], f64)>) {
        self.kinetic(grid, psi);
        self.phase(psi, v);
        if let Some((phi, e)) = bound {
            let c = grid.inner_rc(phi, psi) * (Complex64::from_polar(1.0, e * self.scale) - 1.0);
            for (z, p) in psi.iter_mut().zip(phi) {
                *z += c * p;
            }
        }
        self.phase(psi, v);
        self.kinetic(grid, psi);
    }

    fn kinetic(&self, grid: &Grid, psi: &mut [Complex64]) {
        grid.forward(psi);
        for (z, f) in psi.iter_mut().zip(&self.half_kinetic) {
            *z *= f;
        }
        grid.inverse(psi);
    }

    fn phase(&self, psi: &mut [Complex64], v: &[f64]) {
        for (z, &w) in psi.iter_mut().zip(v) {
            *z *= Complex64::from_polar(1.0, -0.5 * w * self.scale);
        }
    }
}

pub fn evolve_projected(path: &dyn PotentialPath, psi0: &[Complex64], opts: &ProjectedOptions) -> Result<ProjectedRun> {
    let grid = path.grid().clone();
    grid.check_len(psi0.len())?;
    let eps = opts.epsilon;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(LabError::InvalidParameter {
            name: "epsilon",
            reason: format!("must lie in (0, 1], got {eps}"),
        });
    }
    if !(opts.dt > 0.0 && opts.dt <= 0.05 * eps * (1.0 + 1e-12) && opts.t_final >= 0.0) {
        return Err(LabError::InvalidParameter {
            name: "dt",
            reason: format!("need 0 < dt <= 0.05 epsilon and T >= 0, got dt = {}", opts.dt),
        });
    }
    let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps == 0 {
        opts.dt
    } else {
        opts.t_final / steps as f64
    };
    let stride = opts.record_stride.max(1);
    let split = SplitStep::new(&grid, eps, dt);

    let v0 = path.potential(0.0);
    let mut eig = if opts.project {
        Some(eigen_at(path, &v0, 0.0, None, opts)?)
    } else {
        None
    };
    let mut tilde = match &eig {
        Some(e) => project_out(&grid, &e.phi, psi0),
        None => psi0.to_vec(),
    };
    let mut a = Complex64::default();
    let target_mass = grid.l2(&tilde).powi(2);

    let mut run = ProjectedRun {
        grid: grid.clone(),
        epsilon: eps,
        dt,
        times: Vec::new(),
        winf_m1: Vec::new(),
        linf: Vec::new(),
        l2: Vec::new(),
        overlap: Vec::new(),
        mass: Vec::new(),
        initial: tilde.clone(),
        dense: opts.keep_fields.then(DenseFields::default),
    };
    record(&mut run, 0.0, &tilde, a, eig.as_ref(), &v0);

    let static_path = path.is_static();
    for n in 1..=steps {
        let t_prev = (n - 1) as f64 * dt;
        let t = n as f64 * dt;
        let v_mid = if static_path {
            v0.clone()
        } else {
            path.potential(t_prev + 0.5 * dt)
        };
        let mut psi = tilde.clone();
        if let Some(e) = &eig {
            for (z, p) in psi.iter_mut().zip(&e.phi) {
                *z += a * p;
            }
        }
        let next_eig = match &eig {
            Some(e) if static_path => Some(Eigen {
                phi: e.phi.clone(),
                energy: e.energy,
            }),
            Some(e) => Some(eigen_at(path, &path.potential(t), t, Some(e), opts)?),
            None => None,
        };
        let mid_phi: Option<(Vec<f64>, f64)> = match (&eig, &next_eig) {
            (Some(e0), Some(e1)) if !static_path => {
                let mut p: Vec<f64> = e0.phi.iter().zip(&e1.phi).map(|(x, y)| 0.5 * (x + y)).collect();
                let norm = grid.l2_real(&p);
                p.iter_mut().for_each(|x| *x /= norm);
                Some((p, 0.5 * (e0.energy + e1.energy)))
            }
            (Some(e0), Some(_)) => Some((e0.phi.clone(), e0.energy)),
            _ => None,
        };
        split.apply(
            &grid,
            &mut psi,
            &v_mid,
            mid_phi.as_ref().map(|(p, e)| (p.as_slice(), *e)),
        );

        match (&eig, &next_eig) {
            (Some(e0), Some(e1)) => {
                let new_tilde = project_out(&grid, &e1.phi, &psi);
                if !static_path {
                    let dphi: Vec<f64> = e1.phi.iter().zip(&e0.phi).map(|(x, y)| x - y).collect();
                    let avg: Vec<Complex64> = tilde.iter().zip(&new_tilde).map(|(x, y)| 0.5 * (x + y)).collect();
                    a += grid.inner_rc(&dphi, &avg);
                }
                tilde = new_tilde;
            }
            _ => tilde = psi,
        }
        if opts.project {
            let cont = target_mass - a.norm_sqr();
            let now = grid.l2(&tilde).powi(2);
            if cont > 0.0 && now > 0.0 {
                let s = (cont / now).sqrt();
                tilde.iter_mut().for_each(|z| *z *= s);
            }
        }
        if tilde.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFiniteSample { t });
        }
        eig = next_eig;
        if n % stride == 0 || n == steps || opts.keep_fields {
            let v_now = if static_path { v0.clone() } else { path.potential(t) };
            record(&mut run, t, &tilde, a, eig.as_ref(), &v_now);
        }
    }
    Ok(run)
}

fn record(run: &mut ProjectedRun, t: f64, tilde: &[Complex64], a: Complex64, eig: Option<&Eigen>, v: &[f64]) {
    let g = &run.grid;
    run.times.push(t);
    run.winf_m1.push(g.norm(tilde, NormKind::LINF.weighted(-1)));
    run.linf.push(g.norm(tilde, NormKind::LINF));
    let l2 = g.l2(tilde);
    run.l2.push(l2);
    run.mass.push(l2 * l2 + a.norm_sqr());
    run.overlap.push(eig.map_or(0.0, |e| g.inner_rc(&e.phi, tilde).norm()));
    if let Some(d) = run.dense.as_mut() {
        d.psi_tilde.push(tilde.to_vec());
        d.phi.push(eig.map_or_else(|| vec![0.0; g.n()], |e| e.phi.clone()));
        d.potential.push(v.to_vec());
        d.energy.push(eig.map_or(0.0, |e| e.energy));
    }
}

/// Least-squares exponent of a norm series over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t_lo: f64,
    pub t_hi: f64,
    pub exponent: f64,
    pub coefficient: f64,
    pub r2: f64,
    pub samples: usize,
}

pub fn measure_decay(run: &ProjectedRun, kind: SeriesKind, t_lo: f64, t_hi: f64) -> Result<DecayFit> {
    if t_lo < 5.0 * run.epsilon * (1.0 - 1e-12) {
        return Err(LabError::InvalidParameter {
            name: "t_lo",
            reason: format!("window must start at or after 5 epsilon = {}", 5.0 * run.epsilon),
        });
    }
    fit_window(&run.times, run.series(kind), t_lo, t_hi)
}

/// Power-law fit of `(t, y)` samples inside `[t_lo, t_hi]`.
pub fn fit_window(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Result<DecayFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_lo && **t <= t_hi)
        .map(|(t, y)| (*t, *y))
        .unzip();
    if t.len() < 10 {
        return Err(LabError::InsufficientSamples {
            needed: 10,
            available: t.len(),
        });
    }
    let fit = fit_power_law(&t, &y)?;
    Ok(DecayFit {
        t_lo,
        t_hi,
        exponent: fit.slope,
        coefficient: fit.intercept.exp(),
        r2: fit.r2,
        samples: t.len(),
    })
}

/// Wavenumber below which all but `tail` of the spectral mass of `f` lies.
pub fn bandwidth(grid: &Grid, f: &[Complex64], tail: f64) -> f64 {
    let mut buf = f.to_vec();
    grid.forward(&mut buf);
    let mut modes: Vec<(f64, f64)> = buf
        .iter()
        .zip(grid.wavenumbers())
        .map(|(z, k)| (k.abs(), z.norm_sqr()))
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = modes.iter().map(|m| m.1).sum();
    let mut beyond = total;
    for (k, w) in &modes {
        beyond -= w;
        if beyond <= tail * total {
            return *k;
        }
    }
    grid.max_wavenumber()
}

/// Time for the fastest relevant component, moving at the group velocity
/// `2 k_max / ε`, to travel from the origin to the box edge.
pub fn reflection_time(grid: &Grid, psi0: &[Complex64], epsilon: f64) -> f64 {
    let k = bandwidth(grid, psi0, 1e-6).max(1e-12);
    epsilon * grid.half_width() / (2.0 * k)
}

/// The standard dispersive datum `(1 + x²)^{-2}` at unit mass, projected off
/// the bound state of `potential`.
pub fn bump_datum(grid: &Grid, potential: &[f64], tol: f64) -> Result<Vec<Complex64>> {
    let raw: Vec<Complex64> = grid
        .sample(|x| (1.0 + x * x).powi(-2))
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    let norm = grid.l2(&raw);
    let unit: Vec<Complex64> = raw.iter().map(|z| z / norm).collect();
    pc_project(grid, potential, &unit, tol)
}

/// `L∞` norm of the mismatch in the Duhamel representation of `ψ̃(t)` about
/// the frozen operator at `t0`. The frozen propagator is the run's own split
/// step with `V(t0)`, `φ(t0)`, `E(t0)` followed by `P_c(t0)`; time integrals
/// use the trapezoid rule on the run's step.
pub fn duhamel_residual(run: &ProjectedRun, t0: f64, t: f64) -> Result<f64> {
    let dense = run.dense.as_ref().ok_or(LabError::InsufficientSamples {
        needed: run.times.len(),
        available: 0,
    })?;
    let grid = &run.grid;
    let dt = run.dt;
    let idx = |s: f64| (s / dt).round() as usize;
    let (k0, n) = (idx(t0), idx(t));
    let len = dense.psi_tilde.len();
    if k0 >= len || n >= len {
        return Err(LabError::InsufficientSamples {
            needed: k0.max(n) + 1,
            available: len,
        });
    }
    let dphi = time_derivative(&dense.phi, dt)?;
    let phi_ref = &dense.phi[k0];
    let v_ref = &dense.potential[k0];
    let e_ref = dense.energy[k0];
    let split = SplitStep::new(grid, run.epsilon, dt);
    let propagate = |f: &mut Vec<Complex64>| {
        split.apply(grid, f, v_ref, Some((phi_ref, e_ref)));
        let c = grid.inner_rc(phi_ref, f);
        for (z, p) in f.iter_mut().zip(phi_ref) {
            *z -= c * p;
        }
    };
    let project_ref = |f: Vec<Complex64>| project_out(grid, phi_ref, &f);

    let inv_ie = Complex64::new(0.0, -1.0 / run.epsilon);
    let mut cumulative = Complex64::default();
    let mut prev_rate = Complex64::default();
    let mut source = |k: usize| -> Vec<Complex64> {
        let tilde = &dense.psi_tilde[k];
        let rate = grid.inner_rc(&dphi[k], tilde);
        if k > 0 {
            cumulative += 0.5 * dt * (prev_rate + rate);
        }
        prev_rate = rate;
        let g: Vec<Complex64> = (0..grid.n())
            .map(|j| {
                inv_ie * (dense.potential[k][j] - v_ref[j]) * tilde[j]
                    - rate * dense.phi[k][j]
                    - cumulative * dphi[k][j]
            })
            .collect();
        project_ref(g)
    };

    let mut free = project_ref(run.initial.clone());
    let g0 = source(0);
    let mut first = g0.clone();
    let mut acc = g0.clone();
    let mut last = g0;
    for k in 1..=n {
        propagate(&mut free);
        propagate(&mut first);
        propagate(&mut acc);
        last = source(k);
        for (a, g) in acc.iter_mut().zip(&last) {
            *a += g;
        }
    }
    let target = &dense.psi_tilde[n];
    let pd = grid.inner_rc(phi_ref, target);
    let diff: Vec<Complex64> = (0..grid.n())
        .map(|j| {
            let integral = dt * (acc[j] - 0.5 * last[j] - 0.5 * first[j]);
            free[j] + pd * phi_ref[j] + integral - target[j]
        })
        .collect();
    Ok(grid.norm(&diff, NormKind::LINF))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiabatic::StaticPotential;
    use crate::potentials::sech2;

    #[test]
    fn projector_kernel_and_idempotence() {
        let g = Grid::new(30.0, 512).unwrap();
        let v = sech2(&g, 1.5);
        let gs = ground_state(&g, &v, 1.0, 1e-11).unwrap();
        let phi: Vec<Complex64> = gs.state.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        assert!(g.l2(&pc_project(&g, &v, &phi, 1e-11).unwrap()) < 1e-12);

        let odd = g.sample_complex(|x| Complex64::new(x * (-x * x).exp(), 0.5 * x.tanh() * (-x * x / 4.0).exp()));
        let p = pc_project(&g, &v, &odd, 1e-11).unwrap();
        assert!(p.iter().zip(&odd).all(|(a, b)| (a - b).norm() < 1e-14));

        let f = g.sample_complex(|x| Complex64::new((-(x - 1.0).powi(2)).exp(), (-x * x).exp()));
        let once = pc_project(&g, &v, &f, 1e-11).unwrap();
        let twice = pc_project(&g, &v, &once, 1e-11).unwrap();
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn static_run_keeps_bound_state_empty() {
        let g = Grid::new(30.0, 512).unwrap();
        let path = StaticPotential {
            values: sech2(&g, 1.5),
            grid: g.clone(),
        };
        let psi0 = bump_datum(&g, &path.values, 1e-11).unwrap();
        let run = evolve_projected(&path, &psi0, &ProjectedOptions::new(0.1, 0.002, 0.2)).unwrap();
        assert!(run.max_overlap() < 1e-10, "{}", run.max_overlap());
        assert!(run.max_mass_drift() < 1e-12, "{}", run.max_mass_drift());
    }

    #[test]
    fn resonant_well_is_rejected() {
        let g = Grid::new(30.0, 512).unwrap();
        let path = StaticPotential {
            values: sech2(&g, 2.0),
            grid: g.clone(),
        };
        let psi0 = g.sample_complex(|x| Complex64::new(x * (-x * x).exp(), 0.0));
        let r = evolve_projected(&path, &psi0, &ProjectedOptions::new(0.1, 0.002, 0.1));
        assert!(
            matches!(r.as_ref().map_err(|e| e.root()), Err(LabError::AssumptionViolated(_))),
            "{:?}",
            r.err()
        );
    }

    #[test]
    fn fit_oracle() {
        let t: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|s| 0.7 * s.powf(-1.5)).collect();
        let fit = fit_window(&t, &y, 0.1, 1.0).unwrap();
        assert!((fit.exponent + 1.5).abs() < 1e-12);
        assert!(matches!(
            fit_window(&t, &y, 0.9, 1.0),
            Err(LabError::InsufficientSamples { .. })
        ));
    }
}
