//! Splitting an LP trajectory against the reference dynamics.
//!
//! With `θ(t) = ∫₀ᵗ E`, `m = ||ψ₀||²` and `u = e^{iθ/ε} ψ`:
//!
//! ```text
//! α = ⟨Q, u⟩ / m,   R = u - α Q,   R̃ = R - iε α χ,   W = φ - V.
//! ```
//!
//! Reference quantities are interpolated (four-point Lagrange in `t`) to the
//! LP stamps. The interpolated `Q` is rescaled to `||ψ₀||`, `χ` is projected
//! back onto `Q⊥`, and `θ` is accumulated at LP resolution from the
//! interpolated energy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{to_complex, Grid, NormKind};
use crate::interp::{fit_power_law, interpolate_scalar, interpolate_vec};
use crate::lp::{evolve_lp_with, LpParams, LpRun, PolaronState, RecordOptions};
use crate::reference::ReferenceTrajectory;

/// Per-stamp decomposition diagnostics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DecompositionSeries {
    pub epsilon: f64,
    /// `||ψ₀||²`.
    pub mass: f64,
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: Vec<Complex64>,
    pub r_l2: Vec<f64>,
    pub rt_l2: Vec<f64>,
    pub rt_linf: Vec<f64>,
    pub rt_winf: Vec<f64>,
    pub w_l2: Vec<f64>,
    pub dw_l2: Vec<f64>,
    /// `||ψ - e^{-iθ/ε} Q||₂`.
    pub psi_error: Vec<f64>,
    /// `|∂ₜ|α|²|` by finite differences.
    pub dalpha2: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub m3: Vec<f64>,
    /// Right side of the `α` equation evaluated from the fields.
    pub alpha_rhs: Vec<Complex64>,
    /// `|⟨Q, R⟩|` and `|⟨Q, R̃⟩|`.
    pub overlap_r: Vec<f64>,
    pub overlap_rt: Vec<f64>,
    /// `| ||R||₂ - ||ψ₀||₂ √(1 - |α|²) |`.
    pub mass_identity: Vec<f64>,
    pub chi0_l2: f64,
    /// `||R̃(0) + iε χ₀||₂`.
    pub rt0_defect: f64,
    /// Max over interior stamps of `||D_t W - ∂ₜW||₂`, with `D_t` the centred
    /// difference of `φ - V` and `∂ₜW = φ̇ - V̇`.
    pub dw_consistency: f64,
    /// Max over stamps of `|θ - θ_ref| / ε`, with `θ_ref` interpolated from
    /// the reference quadrature; bounds the phase error of `e^{iθ/ε}`.
    pub phase_check: f64,
}

impl DecompositionSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup(values: &[f64]) -> f64 {
        values.iter().copied().fold(0.0, f64::max)
    }

    /// `sup_t (||W||₂ + ||∂ₜW||₂)`.
    pub fn sup_field_error(&self) -> f64 {
        self.w_l2
            .iter()
            .zip(&self.dw_l2)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max)
    }

    /// `sup_t (1 - |α|²)`.
    pub fn sup_alpha_defect(&self) -> f64 {
        self.alpha.iter().map(|a| 1.0 - a.norm_sqr()).fold(0.0, f64::max)
    }

    fn finish(&mut self) {
        let a2: Vec<f64> = self.alpha.iter().map(|a| a.norm_sqr()).collect();
        self.dalpha2 = centred_rate(&self.times, &a2).into_iter().map(f64::abs).collect();
    }
}

fn centred_rate(times: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    (0..n)
        .map(|k| match k {
            0 => (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h),
            k if k == n - 1 => (3.0 * y[k] - 4.0 * y[k - 1] + y[k - 2]) / (2.0 * h),
            k => (y[k + 1] - y[k - 1]) / (2.0 * h),
        })
        .collect()
}

/// Streaming decomposition; feed it every LP state in time order.
pub struct Decomposer<'a> {
    traj: &'a ReferenceTrajectory,
    series: DecompositionSeries,
    last_energy: Option<(f64, f64)>,
    theta: f64,
    w_window: Vec<(f64, Vec<f64>, Vec<f64>)>,
    oversample: usize,
}

impl<'a> Decomposer<'a> {
    /// `traj` must carry `χ` and `∂ₜQ` and reach `t_final`.
    pub fn new(traj: &'a ReferenceTrajectory, epsilon: f64, mass: f64, t_final: f64) -> Result<Self> {
        if !traj.has_rates() {
            return Err(LabError::InsufficientSamples {
                needed: traj.len(),
                available: traj.chi.len(),
            });
        }
        if traj.t_final() + 1e-9 * t_final.max(1.0) < t_final {
            return Err(LabError::HorizonMismatch {
                reference: traj.t_final(),
                required: t_final,
            });
        }
        Ok(Decomposer {
            traj,
            series: DecompositionSeries {
                epsilon,
                mass,
                ..Default::default()
            },
            last_energy: None,
            theta: 0.0,
            w_window: Vec::with_capacity(3),
            oversample: 1,
        })
    }

    pub fn observe(&mut self, state: &PolaronState) -> Result<()> {
        let traj = self.traj;
        let g: &Grid = &traj.grid;
        let t = state.t;
        if t > traj.t_final() * (1.0 + 1e-9) + 1e-12 {
            return Err(LabError::HorizonMismatch {
                reference: traj.t_final(),
                required: t,
            });
        }
        let eps = self.series.epsilon;
        let m = self.series.mass;
        let h = traj.dt_ref;

        let mut q = interpolate_vec(&traj.q, h, t);
        let scale = m.sqrt() / g.l2_real(&q);
        q.iter_mut().for_each(|v| *v *= scale);
        let mut chi = interpolate_vec(&traj.chi, h, t);
        let c = g.inner_real(&q, &chi) / m;
        chi.iter_mut().zip(&q).for_each(|(x, qv)| *x -= c * qv);
        let dq = interpolate_vec(&traj.dq_dt, h, t);
        let v = interpolate_vec(&traj.v, h, t);
        let v_dot = interpolate_vec(&traj.v_dot, h, t);
        let energy = interpolate_scalar(&traj.energy, h, t);

        if let Some((t_prev, e_prev)) = self.last_energy {
            self.theta += 0.5 * (t - t_prev) * (e_prev + energy);
        }
        self.last_energy = Some((t, energy));
        let theta_ref = interpolate_scalar(&traj.theta, h, t);
        self.series.phase_check = self.series.phase_check.max((self.theta - theta_ref).abs() / eps);

        let phase = Complex64::from_polar(1.0, self.theta / eps);
        let u: Vec<Complex64> = state.psi.iter().map(|z| phase * z).collect();
        let qc = to_complex(&q);
        let alpha = g.inner(&qc, &u) / m;
        let r: Vec<Complex64> = u.iter().zip(&q).map(|(z, qv)| z - alpha * qv).collect();
        let shift = Complex64::new(0.0, eps) * alpha;
        let rt: Vec<Complex64> = r.iter().zip(&chi).map(|(z, x)| z - shift * x).collect();
        let w: Vec<f64> = state.phi.iter().zip(&v).map(|(a, b)| a - b).collect();
        let dw: Vec<f64> = state.phi_dot.iter().zip(&v_dot).map(|(a, b)| a - b).collect();
        let psi_err: Vec<Complex64> = u.iter().zip(&q).map(|(z, qv)| z - qv).collect();

        let wu: Vec<Complex64> = u.iter().zip(&w).map(|(z, wv)| z * wv).collect();
        let rhs = (g.inner(&to_complex(&dq), &r) - Complex64::new(0.0, 1.0 / eps) * g.inner(&qc, &wu)) / m;

        let s = &mut self.series;
        let r_l2 = g.l2(&r);
        let rt_l2 = g.l2(&rt);
        let (rt_linf, rt_winf) = if self.oversample > 1 {
            (
                g.oversampled_linf(&rt, self.oversample, 0),
                g.oversampled_linf(&rt, self.oversample, -1),
            )
        } else {
            (g.norm(&rt, NormKind::LINF), g.norm(&rt, NormKind::LINF.weighted(-1)))
        };
        if s.times.is_empty() {
            s.chi0_l2 = g.l2_real(&chi);
            let defect: Vec<Complex64> = rt
                .iter()
                .zip(&chi)
                .map(|(z, x)| z + Complex64::new(0.0, eps * x))
                .collect();
            s.rt0_defect = g.l2(&defect);
        }
        let ratio = if t > 0.0 { eps / t } else { f64::INFINITY };
        let m1 = rt_l2 / eps;
        let m2 = rt_linf / (eps * 1f64.max(ratio.sqrt()));
        let m3 = rt_winf / (eps * (eps + ratio.sqrt().min(ratio.powf(1.5))));
        let running = |series: &Vec<f64>, x: f64| series.last().map_or(x, |p: &f64| p.max(x));
        s.m1.push(running(&s.m1, m1));
        s.m2.push(running(&s.m2, m2));
        s.m3.push(running(&s.m3, m3));

        s.times.push(t);
        s.theta.push(self.theta);
        s.alpha.push(alpha);
        s.r_l2.push(r_l2);
        s.rt_l2.push(rt_l2);
        s.rt_linf.push(rt_linf);
        s.rt_winf.push(rt_winf);
        s.w_l2.push(g.l2_real(&w));
        s.dw_l2.push(g.l2_real(&dw));
        s.psi_error.push(g.l2(&psi_err));
        s.alpha_rhs.push(rhs);
        s.overlap_r.push(g.inner(&qc, &r).norm());
        s.overlap_rt.push(g.inner(&qc, &rt).norm());
        s.mass_identity
            .push((r_l2 - m.sqrt() * (1.0 - alpha.norm_sqr()).max(0.0).sqrt()).abs());

        if self.w_window.len() == 3 {
            self.w_window.remove(0);
        }
        self.w_window.push((t, w, dw));
        if let [(t0, w0, _), (_, _, dw1), (t2, w2, _)] = self.w_window.as_slice() {
            let diff: Vec<f64> = (0..g.n()).map(|j| (w2[j] - w0[j]) / (t2 - t0) - dw1[j]).collect();
            s.dw_consistency = s.dw_consistency.max(g.l2_real(&diff));
        }
        Ok(())
    }

    /// Evaluates the sup norms behind `M₂` and `M₃` on the band-limited
    /// interpolant refined `factor` times instead of on the grid nodes.
    pub fn with_oversampling(mut self, factor: usize) -> Self {
        self.oversample = factor.max(1);
        self
    }

    pub fn finish(mut self) -> DecompositionSeries {
        self.series.finish();
        self.series
    }
}

/// Runs LP from `initial` to `t_final` and decomposes every step against
/// `traj`.
pub fn decompose(
    initial: &PolaronState,
    params: &LpParams,
    t_final: f64,
    traj: &ReferenceTrajectory,
    record: &RecordOptions,
) -> Result<(LpRun, DecompositionSeries)> {
    decompose_with(initial, params, t_final, traj, record, 1)
}

/// [`decompose`] with the sup norms of `R̃` taken on a mesh refined
/// `oversample` times.
pub fn decompose_with(
    initial: &PolaronState,
    params: &LpParams,
    t_final: f64,
    traj: &ReferenceTrajectory,
    record: &RecordOptions,
    oversample: usize,
) -> Result<(LpRun, DecompositionSeries)> {
    let g = &initial.grid;
    if *g != traj.grid {
        return Err(LabError::ShapeMismatch {
            expected: traj.grid.n(),
            found: g.n(),
        });
    }
    let mass = g.l2(&initial.psi).powi(2);
    let mut dec = Decomposer::new(traj, params.epsilon, mass, initial.t + t_final)?.with_oversampling(oversample);
    let run = evolve_lp_with(initial, params, t_final, record, |s| dec.observe(s))?;
    Ok((run, dec.finish()))
}

/// LP initial state matching the reference at `t = 0`: `ψ₀ = Q₀` and the
/// field data of the trajectory.
pub fn matched_initial_state(traj: &ReferenceTrajectory) -> Result<PolaronState> {
    if traj.is_empty() {
        return Err(LabError::InsufficientSamples {
            needed: 1,
            available: 0,
        });
    }
    PolaronState::new(
        &traj.grid,
        to_complex(&traj.q[0]),
        traj.v[0].clone(),
        traj.v_dot[0].clone(),
    )
}

/// Residual of the `α` equation: centred difference of `α` against the
/// field-evaluated right side, at interior stamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaResidual {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub rate: Vec<f64>,
}

impl AlphaResidual {
    pub fn sup_residual(&self) -> f64 {
        DecompositionSeries::sup(&self.residual)
    }

    /// `sup_t |∂ₜα|` from the finite differences.
    pub fn sup_rate(&self) -> f64 {
        DecompositionSeries::sup(&self.rate)
    }
}

pub fn alpha_residual_check(series: &DecompositionSeries) -> Result<AlphaResidual> {
    let n = series.len();
    if n < 3 {
        return Err(LabError::InsufficientSamples {
            needed: 3,
            available: n,
        });
    }
    let mut out = AlphaResidual {
        times: Vec::with_capacity(n - 2),
        residual: Vec::with_capacity(n - 2),
        rate: Vec::with_capacity(n - 2),
    };
    for k in 1..n - 1 {
        let d = (series.alpha[k + 1] - series.alpha[k - 1]) / (series.times[k + 1] - series.times[k - 1]);
        out.times.push(series.times[k]);
        out.residual.push((d - series.alpha_rhs[k]).norm());
        out.rate.push(d.norm());
    }
    Ok(out)
}

/// The three-regime profile bounding `|∂ₜ|α|²|`.
pub fn alpha_envelope(epsilon: f64, t: f64) -> f64 {
    if t <= epsilon {
        epsilon
    } else if t <= epsilon.cbrt() {
        epsilon * (epsilon / t).powf(1.5)
    } else {
        epsilon * epsilon
    }
}

/// Smallest constants making `|∂ₜ|α|²| ≤ C · envelope` on each regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub constant: f64,
    pub early: f64,
    pub middle: f64,
    pub late: f64,
}

pub fn alpha_rate_envelope(series: &DecompositionSeries) -> EnvelopeReport {
    let eps = series.epsilon;
    let mut r = EnvelopeReport {
        constant: 0.0,
        early: 0.0,
        middle: 0.0,
        late: 0.0,
    };
    for (&t, &d) in series.times.iter().zip(&series.dalpha2) {
        let c = d / alpha_envelope(eps, t);
        let slot = if t <= eps {
            &mut r.early
        } else if t <= eps.cbrt() {
            &mut r.middle
        } else {
            &mut r.late
        };
        *slot = slot.max(c);
        r.constant = r.constant.max(c);
    }
    r
}

/// Log-log slope of one observable across an `ε` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub observable: String,
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub expected: (f64, f64),
    pub pass: bool,
}

/// Fits `values ≈ C ε^p`. `epsilons` must be strictly decreasing with at least
/// three entries.
pub fn scaling_slope(
    observable: &str,
    epsilons: &[f64],
    values: &[f64],
    expected: (f64, f64),
) -> Result<ScalingReport> {
    if epsilons.len() < 3 || values.len() != epsilons.len() {
        return Err(LabError::InsufficientSamples {
            needed: 3.max(epsilons.len()),
            available: epsilons.len().min(values.len()),
        });
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidParameter {
            name: "epsilons",
            reason: "must be strictly decreasing".into(),
        });
    }
    let slope = fit_power_law(epsilons, values)?.slope;
    Ok(ScalingReport {
        observable: observable.to_string(),
        epsilons: epsilons.to_vec(),
        values: values.to_vec(),
        slope,
        expected,
        pass: slope >= expected.0 && slope <= expected.1,
    })
}

/// Slopes of the sup-in-time observables over a sweep, ordered by
/// decreasing `ε`.
pub fn scaling_fit(sweep: &[DecompositionSeries]) -> Result<Vec<ScalingReport>> {
    let mut sorted: Vec<&DecompositionSeries> = sweep.iter().collect();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let eps: Vec<f64> = sorted.iter().map(|s| s.epsilon).collect();
    let pick = |f: &dyn Fn(&DecompositionSeries) -> f64| sorted.iter().map(|s| f(s)).collect::<Vec<f64>>();
    let sup = DecompositionSeries::sup;
    let one = (0.8, 1.2);
    let two = (1.7, 2.3);
    let flat = (-0.3, 0.3);
    let rows: Vec<(&str, Vec<f64>, (f64, f64))> = vec![
        ("psi_error", pick(&|s| sup(&s.psi_error)), one),
        ("field_error", pick(&|s| s.sup_field_error()), two),
        ("w_l2", pick(&|s| sup(&s.w_l2)), two),
        ("dw_l2", pick(&|s| sup(&s.dw_l2)), two),
        ("alpha_defect", pick(&|s| s.sup_alpha_defect()), two),
        ("m1", pick(&|s| sup(&s.m1)), flat),
        ("m2", pick(&|s| sup(&s.m2)), flat),
        ("m3", pick(&|s| sup(&s.m3)), flat),
    ];
    rows.into_iter()
        .map(|(name, v, e)| scaling_slope(name, &eps, &v, e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::FieldMode;
    use crate::potentials::sech2;
    use crate::spectral::ground_state;

    fn frozen_trajectory(g: &Grid, steps: usize, h: f64) -> ReferenceTrajectory {
        let v = sech2(g, 2.0);
        let gs = ground_state(g, &v, 1.0, 1e-12).unwrap();
        let n = steps + 1;
        ReferenceTrajectory {
            grid: g.clone(),
            mass: 1.0,
            dt_ref: h,
            times: (0..n).map(|k| k as f64 * h).collect(),
            q: vec![gs.state.clone(); n],
            v: vec![v.clone(); n],
            v_dot: vec![vec![0.0; g.n()]; n],
            energy: vec![gs.energy; n],
            residual: vec![gs.residual; n],
            dq_dt: vec![vec![0.0; g.n()]; n],
            chi: vec![vec![0.0; g.n()]; n],
            theta: (0..n).map(|k| gs.energy * k as f64 * h).collect(),
            acc_cos: vec![],
            acc_sin: vec![],
        }
    }

    #[test]
    fn frozen_stub_has_no_alpha_dynamics() {
        let g = Grid::new(20.0, 256).unwrap();
        let traj = frozen_trajectory(&g, 100, 1e-3);
        let init = matched_initial_state(&traj).unwrap();
        let params = LpParams {
            epsilon: 0.1,
            dt: 1e-4,
            field: FieldMode::Frozen,
            absorber: None,
        };
        let (_, s) = decompose(&init, &params, 0.05, &traj, &RecordOptions::default()).unwrap();
        assert!(s.alpha_rhs.iter().all(|z| z.norm() < 1e-12));
        // α moves only through the O((dt/ε)²) splitting offset of the eigenstate.
        let res = alpha_residual_check(&s).unwrap();
        assert!(res.sup_residual() < 1e-5, "{}", res.sup_residual());
        assert!((s.alpha[0] - 1.0).norm() < 1e-14);
        let env = alpha_rate_envelope(&s);
        assert!(env.constant < 1e-6, "{env:?}");
    }

    #[test]
    fn horizon_is_checked() {
        let g = Grid::new(20.0, 256).unwrap();
        let traj = frozen_trajectory(&g, 10, 1e-3);
        let init = matched_initial_state(&traj).unwrap();
        let params = LpParams::new(0.1, 0.01).unwrap();
        let err = decompose(&init, &params, 0.02, &traj, &RecordOptions::default()).unwrap_err();
        assert!(matches!(err.root(), LabError::HorizonMismatch { .. }), "{err:?}");
    }

    #[test]
    fn envelope_fit_recovers_constant() {
        let eps = 0.05;
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 5e-4).collect();
        let s = DecompositionSeries {
            epsilon: eps,
            dalpha2: times.iter().map(|&t| 2.5 * alpha_envelope(eps, t)).collect(),
            times,
            ..Default::default()
        };
        let r = alpha_rate_envelope(&s);
        assert!((r.constant - 2.5).abs() < 1e-12);
        assert!((r.early - 2.5).abs() < 1e-12 && (r.middle - 2.5).abs() < 1e-12 && (r.late - 2.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_slope_oracle() {
        let eps = [0.1, 0.05, 0.025];
        let v: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powf(1.7)).collect();
        let r = scaling_slope("x", &eps, &v, (1.6, 1.8)).unwrap();
        assert!((r.slope - 1.7).abs() < 1e-10 && r.pass);
        assert!(scaling_slope("x", &[0.05, 0.1, 0.025], &v, (0.0, 1.0)).is_err());
        assert!(scaling_slope("x", &eps[..2], &v[..2], (0.0, 1.0)).is_err());
    }
}
