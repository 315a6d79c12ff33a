//! The Schrödinger operator `H = -d²/dx² + W` on the periodic grid.
//!
//! Everything here is matrix-free: `H` is applied with one FFT pair, and the
//! linear solves use conjugate gradients preconditioned by the exact inverse
//! of the shifted kinetic part, `(k² + c)⁻¹`, which keeps iteration counts
//! independent of the grid resolution.
//!
//! The ground state is found in two stages. A Lanczos run with full
//! reorthogonalization supplies the lowest Ritz pair; Jacobi–Davidson
//! corrections (Newton steps for the Rayleigh quotient, solved on the
//! orthogonal complement of the current iterate) then polish it to the
//! requested residual.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{to_complex, Grid};

/// Applies `(-d²/dx² + W) f`.
pub fn apply_hamiltonian(grid: &Grid, potential: &[f64], f: &[Complex64]) -> Result<Vec<Complex64>> {
    grid.check_len(potential.len())?;
    grid.check_len(f.len())?;
    let mut out = f.to_vec();
    grid.apply_symbol(&mut out, |k| Complex64::new(k * k, 0.0));
    for ((o, z), w) in out.iter_mut().zip(f).zip(potential) {
        *o += z * w;
    }
    Ok(out)
}

/// Real-valued variant of [`apply_hamiltonian`].
pub fn apply_hamiltonian_real(grid: &Grid, potential: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = grid.neg_laplacian_real(f);
    for ((o, v), w) in out.iter_mut().zip(f).zip(potential) {
        *o += v * w;
    }
    out
}

/// Tuning knobs shared by the eigensolver and the resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target for `||(H - E) psi||_2` with `psi` at the requested mass.
    pub tol: f64,
    /// Budget of Jacobi–Davidson corrections.
    pub max_outer: usize,
    /// Budget of CG iterations per linear solve.
    pub max_inner: usize,
    /// Krylov dimension of the initial Lanczos run.
    pub lanczos_steps: usize,
    /// Eigenvalues above `-gap_tol` count as threshold, not bound.
    pub gap_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_outer: 60,
            max_inner: 4000,
            lanczos_steps: 120,
            gap_tol: 1e-6,
        }
    }
}

/// Lowest eigenpair of `-d²/dx² + W`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    /// Real eigenfunction with `||state||_2 = mass` and a positive peak.
    pub state: Vec<f64>,
    /// `||(H - E) state||_2`.
    pub residual: f64,
}

/// Ground state normalized to `||psi||_2 = mass`, converged to `tol`.
pub fn ground_state(grid: &Grid, potential: &[f64], mass: f64, tol: f64) -> Result<GroundState> {
    let opts = SolverOptions {
        tol,
        ..SolverOptions::default()
    };
    ground_state_with(grid, potential, mass, &opts, None)
}

/// Ground state with explicit options and an optional warm start (used when
/// marching along a slowly varying family of potentials).
pub fn ground_state_with(
    grid: &Grid,
    potential: &[f64],
    mass: f64,
    opts: &SolverOptions,
    guess: Option<&[f64]>,
) -> Result<GroundState> {
    grid.check_len(potential.len())?;
    if !(mass > 0.0) {
        return Err(LabError::InvalidParameter {
            name: "mass",
            reason: format!("must be positive, got {mass}"),
        });
    }
    let unit_tol = opts.tol / mass;

    let (mut u, ritz_bound) = match guess {
        Some(g) => {
            grid.check_len(g.len())?;
            (normalized(grid, g.to_vec()), None)
        }
        None => {
            let lz = lanczos(grid, potential, &default_start(grid, potential), opts.lanczos_steps);
            (lz.lowest_vector, lz.ritz_values.first().copied())
        }
    };

    let mut fell_back = false;
    let mut rho = 0.0;
    let mut res_norm = f64::INFINITY;
    for iter in 0..opts.max_outer {
        let hu = apply_hamiltonian_real(grid, potential, &u);
        rho = grid.inner_real(&u, &hu);
        let r: Vec<f64> = hu.iter().zip(&u).map(|(a, b)| a - rho * b).collect();
        res_norm = grid.l2_real(&r);

        if res_norm <= unit_tol {
            let excited =
                sign_changes(&u, 1e-6) > 0 || ritz_bound.is_some_and(|theta| rho > theta + 1e-8 * theta.abs().max(1.0));
            if !excited {
                break;
            }
            if fell_back {
                return Err(LabError::NoConvergence {
                    solver: "ground state (excited-state lock)",
                    residual: res_norm,
                    iterations: iter,
                });
            }
            // converged onto an excited state; restart from a nodeless guess
            fell_back = true;
            u = normalized(grid, default_start(grid, potential));
            u = safe_inverse_iteration(grid, potential, u, 40, opts)?;
            continue;
        }

        let inner_tol = (0.05 * res_norm).max(0.1 * unit_tol);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        match pcg(grid, potential, rho, Some(&u), &rhs, inner_tol, opts.max_inner) {
            Ok(sol) => {
                let next: Vec<f64> = u.iter().zip(&sol.x).map(|(a, b)| a + b).collect();
                u = normalized(grid, next);
            }
            Err(PcgBreakdown::Indefinite) | Err(PcgBreakdown::Stalled(_)) => {
                u = safe_inverse_iteration(grid, potential, u, 5, opts)?;
            }
        }
    }

    if rho >= -opts.gap_tol {
        return Err(LabError::NoNegativeEigenvalue { lowest: rho });
    }
    if res_norm > unit_tol {
        return Err(LabError::NoConvergence {
            solver: "ground state",
            residual: res_norm * mass,
            iterations: opts.max_outer,
        });
    }

    fix_sign(&mut u);
    let state: Vec<f64> = u.iter().map(|v| v * mass).collect();
    Ok(GroundState {
        energy: rho,
        state,
        residual: res_norm * mass,
    })
}

/// Inverse iteration at a shift strictly below the spectrum, where
/// `H - sigma` is positive definite.
fn safe_inverse_iteration(
    grid: &Grid,
    potential: &[f64],
    mut u: Vec<f64>,
    sweeps: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let wmin = potential.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma = wmin.min(0.0) - 1.0;
    for _ in 0..sweeps {
        let sol =
            pcg(grid, potential, sigma, None, &u, 1e-10, opts.max_inner).map_err(|_| LabError::NoConvergence {
                solver: "shifted inverse iteration",
                residual: f64::NAN,
                iterations: opts.max_inner,
            })?;
        u = normalized(grid, sol.x);
    }
    Ok(u)
}

/// Smooth positive start vector centred at the bottom of the well.
fn default_start(grid: &Grid, potential: &[f64]) -> Vec<f64> {
    let (jmin, _) = potential
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, &w)| if w < acc.1 { (j, w) } else { acc });
    let xc = grid.nodes()[jmin];
    grid.sample(|x| (-(x - xc) * (x - xc) / 8.0).exp())
}

fn normalized(grid: &Grid, mut v: Vec<f64>) -> Vec<f64> {
    let n = grid.l2_real(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    v
}

/// Makes the largest-magnitude sample positive.
pub fn fix_sign(v: &mut [f64]) {
    let peak = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if peak < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Sign changes among samples above `rel_floor * max|v|`.
pub fn sign_changes(v: &[f64], rel_floor: f64) -> usize {
    let floor = rel_floor * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut last = 0.0f64;
    let mut count = 0;
    for &x in v {
        if x.abs() <= floor {
            continue;
        }
        if last != 0.0 && last.signum() != x.signum() {
            count += 1;
        }
        last = x;
    }
    count
}

/// Output of a Lanczos run.
#[derive(Debug, Clone)]
pub struct LanczosSpectrum {
    /// Ritz values in increasing order.
    pub ritz_values: Vec<f64>,
    /// Unit Ritz vector for the smallest Ritz value.
    pub lowest_vector: Vec<f64>,
}

/// Lanczos with full reorthogonalization on `-d²/dx² + W`.
pub fn lanczos(grid: &Grid, potential: &[f64], start: &[f64], steps: usize) -> LanczosSpectrum {
    let steps = steps.clamp(1, grid.n());
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut v = normalized(grid, start.to_vec());
    for j in 0..steps {
        let mut w = apply_hamiltonian_real(grid, potential, &v);
        let alpha = grid.inner_real(&v, &w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= alpha * vi;
        }
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= beta * pi;
            }
        }
        basis.push(v);
        alphas.push(alpha);
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = grid.inner_real(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = grid.l2_real(&w);
        if j + 1 == steps || beta < 1e-12 {
            break;
        }
        betas.push(beta);
        v = w.into_iter().map(|x| x / beta).collect();
    }

    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let ritz_values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lowest = order[0];
    let mut lowest_vector = vec![0.0; grid.n()];
    for (i, b) in basis.iter().enumerate() {
        let c = eig.eigenvectors[(i, lowest)];
        for (y, bi) in lowest_vector.iter_mut().zip(b) {
            *y += c * bi;
        }
    }
    LanczosSpectrum {
        ritz_values,
        lowest_vector: normalized(grid, lowest_vector),
    }
}

/// Number of Lanczos Ritz values below `-gap_tol`. The start vector has no
/// parity, so odd bound states of an even well are not missed.
pub fn count_negative_ritz_values(grid: &Grid, potential: &[f64], steps: usize, gap_tol: f64) -> usize {
    let (jmin, _) = potential
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, &w)| if w < acc.1 { (j, w) } else { acc });
    let xc = grid.nodes()[jmin];
    let start = grid.sample(|x| (1.0 + 0.7 * (x - xc)) * (-(x - xc) * (x - xc) / 8.0).exp());
    lanczos(grid, potential, &start, steps)
        .ritz_values
        .iter()
        .filter(|&&v| v < -gap_tol)
        .count()
}

struct PcgSolution {
    x: Vec<f64>,
}

#[derive(Debug)]
enum PcgBreakdown {
    Indefinite,
    Stalled(f64),
}

/// Preconditioned CG for `(H - shift) x = b`. With `constraint = Some(q)`
/// (unit `q`) the system is solved on `q^⊥`: the right-hand side, every
/// search direction and the iterate are projected.
fn pcg(
    grid: &Grid,
    potential: &[f64],
    shift: f64,
    constraint: Option<&[f64]>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> std::result::Result<PcgSolution, PcgBreakdown> {
    let project = |v: &mut Vec<f64>| {
        if let Some(q) = constraint {
            let c = grid.inner_real(q, v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    };
    let precond_shift = 1.0 + (-shift).max(0.0);
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut buf = to_complex(r);
        grid.forward(&mut buf);
        for (z, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
            *z /= k * k + precond_shift;
        }
        grid.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    };
    let operator = |p: &[f64]| -> Vec<f64> {
        let mut out = apply_hamiltonian_real(grid, potential, p);
        for (o, pi) in out.iter_mut().zip(p) {
            *o -= shift * pi;
        }
        out
    };

    let mut rhs = b.to_vec();
    project(&mut rhs);
    let mut x = vec![0.0; b.len()];
    if grid.l2_real(&rhs) <= tol {
        return Ok(PcgSolution { x });
    }

    let mut iterations = 0;
    // restart from the true residual when the recursive one has drifted
    for _restart in 0..4 {
        let mut r = {
            let ax = operator(&x);
            let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
            project(&mut r);
            r
        };
        if grid.l2_real(&r) <= tol {
            project(&mut x);
            return Ok(PcgSolution { x });
        }
        let mut z = precondition(&r);
        project(&mut z);
        let mut p = z.clone();
        let mut rz = grid.inner_real(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            let mut ap = operator(&p);
            project(&mut ap);
            let pap = grid.inner_real(&p, &ap);
            if pap <= 0.0 {
                return Err(PcgBreakdown::Indefinite);
            }
            let step = rz / pap;
            for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
                *xi += step * pi;
                *ri -= step * api;
            }
            if grid.l2_real(&r) <= 0.5 * tol {
                break;
            }
            z = precondition(&r);
            project(&mut z);
            let rz_next = grid.inner_real(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        if iterations >= max_iter {
            break;
        }
    }
    let ax = operator(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
    project(&mut r);
    let res = grid.l2_real(&r);
    project(&mut x);
    if res <= tol {
        Ok(PcgSolution { x })
    } else {
        Err(PcgBreakdown::Stalled(res))
    }
}

/// Solves `(H - E) chi = P rhs` with `<q, chi> = 0`, where
/// `P = 1 - |q><q| / ||q||²`.
///
/// `E` must be the eigenvalue belonging to `q` (or lie below the rest of the
/// spectrum) so that `H - E` is positive on `q^⊥`.
pub fn constrained_resolvent_solve(
    grid: &Grid,
    potential: &[f64],
    energy: f64,
    q: &[f64],
    rhs: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    constrained_resolvent_solve_with(grid, potential, energy, q, rhs, tol, SolverOptions::default().max_inner)
}

pub fn constrained_resolvent_solve_with(
    grid: &Grid,
    potential: &[f64],
    energy: f64,
    q: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    grid.check_len(potential.len())?;
    grid.check_len(q.len())?;
    grid.check_len(rhs.len())?;
    let qn = grid.l2_real(q);
    if !(qn > 0.0) {
        return Err(LabError::InvalidParameter {
            name: "q",
            reason: "constraint vector has zero norm".into(),
        });
    }
    let unit: Vec<f64> = q.iter().map(|v| v / qn).collect();
    match pcg(grid, potential, energy, Some(&unit), rhs, tol, max_iter) {
        Ok(sol) => Ok(sol.x),
        Err(PcgBreakdown::Stalled(res)) => Err(LabError::NoConvergence {
            solver: "constrained resolvent",
            residual: res,
            iterations: max_iter,
        }),
        Err(PcgBreakdown::Indefinite) => Err(LabError::AssumptionViolated(
            "H - E is not positive on the complement of q".into(),
        )),
    }
}

/// Complex right-hand sides: the operator is real, so real and imaginary
/// parts are solved independently.
pub fn constrained_resolvent_solve_complex(
    grid: &Grid,
    potential: &[f64],
    energy: f64,
    q: &[f64],
    rhs: &[Complex64],
    tol: f64,
) -> Result<Vec<Complex64>> {
    let re: Vec<f64> = rhs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = rhs.iter().map(|z| z.im).collect();
    let half = tol / std::f64::consts::SQRT_2;
    let x = constrained_resolvent_solve(grid, potential, energy, q, &re, half)?;
    let y = constrained_resolvent_solve(grid, potential, energy, q, &im, half)?;
    Ok(x.into_iter().zip(y).map(|(a, b)| Complex64::new(a, b)).collect())
}

/// Thresholds for [`spectral_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// `is_resonant` iff the indicator is below this value.
    pub rho_tol: f64,
    /// Largest `|W|` tolerated on the outer tenth of the box.
    pub boundary_tol: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            rho_tol: 0.02,
            boundary_tol: 1e-6,
        }
    }
}

/// Zero-energy shooting diagnostics for `-d²/dx² + W`.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Sign changes of the zero-energy solution (Sturm oscillation count).
    pub negative_count: usize,
    /// `L|u'(L)| / (|u(L)| + L|u'(L)|)`: zero for a solution that levels
    /// off, close to 1/2 for one growing linearly.
    pub resonance_indicator: f64,
    pub is_resonant: bool,
    /// The zero-energy solution sampled at the grid nodes.
    pub shooting_solution: Vec<f64>,
}

/// Integrates `-u'' + W u = 0` from `x = -L` with `u = 1`, `u' = 0` by RK4.
/// Half-node values of `W` come from its trigonometric interpolant.
pub fn spectral_report(grid: &Grid, potential: &[f64], opts: &ReportOptions) -> Result<SpectralReport> {
    grid.check_len(potential.len())?;
    let cutoff = 0.9 * grid.half_width();
    let max_tail = grid
        .nodes()
        .iter()
        .zip(potential)
        .filter(|(x, _)| x.abs() >= cutoff)
        .fold(0.0f64, |m, (_, w)| m.max(w.abs()));
    if max_tail >= opts.boundary_tol {
        return Err(LabError::PotentialNotLocalized { max_tail });
    }

    let n = grid.n();
    let h = grid.spacing();
    let half = grid.fourier_shift_real(potential, 0.5 * h);
    let mut u = 1.0f64;
    let mut p = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    samples.push(u);
    let mut count = 0;
    let mut last_sign = 1.0f64;
    for j in 0..n {
        let w0 = potential[j];
        let wm = half[j];
        let w1 = potential[(j + 1) % n];
        let (k1u, k1p) = (p, w0 * u);
        let (k2u, k2p) = (p + 0.5 * h * k1p, wm * (u + 0.5 * h * k1u));
        let (k3u, k3p) = (p + 0.5 * h * k2p, wm * (u + 0.5 * h * k2u));
        let (k4u, k4p) = (p + h * k3p, w1 * (u + h * k3u));
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        if u != 0.0 {
            if u.signum() != last_sign {
                count += 1;
            }
            last_sign = u.signum();
        }
        if j + 1 < n {
            samples.push(u);
        }
    }
    let l = grid.half_width();
    let slope = l * p.abs();
    let indicator = slope / (u.abs() + slope);
    Ok(SpectralReport {
        negative_count: count,
        resonance_indicator: indicator,
        is_resonant: indicator < opts.rho_tol,
        shooting_solution: samples,
    })
}
