//! Pipelines behind each subcommand.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use lplab::adiabatic::{adiabatic_bound_check, epsilon_slope, AdiabaticPath, StaticPotential, TranslatedWell};
use lplab::decomposition::{
    alpha_rate_envelope, alpha_residual_check, decompose_with, matched_initial_state, scaling_fit, DecompositionSeries,
    EnvelopeReport, ScalingReport,
};
use lplab::dispersive::{
    bump_datum, evolve_projected, measure_decay, reflection_time, DecayFit, ProjectedOptions, SeriesKind,
};
use lplab::error::LabError;
use lplab::grid::Grid;
use lplab::lp::{evolve_lp_with, LpParams, PolaronState, RecordOptions};
use lplab::potentials::sech2;
use lplab::reference::{
    check_assumption, chi_and_rate, chi_bounds, march_reference, monitor_tstar, ChiBounds, ReferenceOptions,
    ReferenceTrajectory, TStarReport,
};
use lplab::spectral::ReportOptions;

use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use crate::manifest::{unix_now, Emitter, RunManifest};
use crate::plot::LinePlot;

/// A finished run: the manifest is always written; `error` holds the first
/// failing stage, if any.
pub struct Outcome {
    pub manifest: RunManifest,
    pub error: Option<CliError>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        self.error.as_ref().map_or(0, CliError::exit_code)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, kind: Kind, out: &Path, workers: usize) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let kind = cfg.resolve_kind(kind)?;
    let needs_reference_datum = matches!(kind, Kind::Reference | Kind::Evolve | Kind::Decompose | Kind::Sweep);
    if needs_reference_datum {
        let datum = cfg.datum()?;
        check_assumption(&cfg.grid(), &datum.phi0, &report_options(cfg))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::invalid("workers", e))?;
    let started = unix_now();
    let em = Emitter::new(out)?;
    log::info!("running `{}` into {}", kind.name(), out.display());
    let error = pool.install(|| match kind {
        Kind::Reference => run_reference(cfg, &em).err(),
        Kind::Evolve => run_evolve(cfg, &em).err(),
        Kind::Decompose => run_decompose(cfg, &em, false).err(),
        Kind::Sweep => run_decompose(cfg, &em, true).err(),
        Kind::Adiabatic => run_adiabatic(cfg, &em).err(),
        Kind::Dispersive => run_dispersive(cfg, &em).err(),
    });
    let manifest = em.finish(kind.name(), cfg, started)?;
    Ok(Outcome { manifest, error })
}

fn report_options(cfg: &ExperimentConfig) -> ReportOptions {
    ReportOptions {
        rho_tol: cfg.tolerances.rho_tol,
        ..ReportOptions::default()
    }
}

fn eps_dir(eps: f64) -> String {
    format!("eps_{eps}")
}

/// Runs `f` for every `ε` on the current rayon pool. Failures, including panics,
/// are confined to their own `ε` and recorded as stages.
pub fn per_epsilon<T, F>(em: &Emitter, prefix: &str, epsilons: &[f64], f: F) -> Vec<(f64, Result<T, CliError>)>
where
    T: Send,
    F: Fn(f64) -> Result<T, CliError> + Sync,
{
    let results: Vec<(f64, Result<T, CliError>)> = epsilons
        .par_iter()
        .map(|&eps| {
            let r = catch_unwind(AssertUnwindSafe(|| f(eps))).unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(CliError::Numerical(LabError::AssumptionViolated(format!(
                    "worker panicked: {msg}"
                ))))
            });
            (eps, r)
        })
        .collect();
    for (eps, r) in &results {
        em.stage(&format!("{prefix} eps={eps}"), r);
    }
    results
}

fn first_error<T>(results: Vec<(f64, Result<T, CliError>)>) -> (Vec<(f64, T)>, Option<CliError>) {
    let mut ok = Vec::new();
    let mut err = None;
    for (eps, r) in results {
        match r {
            Ok(v) => ok.push((eps, v)),
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    }
    (ok, err)
}

#[derive(Serialize)]
struct ReferenceSummary {
    t_final: f64,
    steps: usize,
    energy_initial: f64,
    energy_final: f64,
    max_eigen_residual: f64,
    max_field_equation_residual: f64,
    chi: ChiBounds,
    tstar: TStarReport,
}

fn reference_trajectory(cfg: &ExperimentConfig, em: &Emitter) -> Result<ReferenceTrajectory, CliError> {
    let grid = cfg.grid();
    let datum = cfg.datum()?;
    let opts = ReferenceOptions {
        dt_ref: cfg.dt_ref,
        t_final: cfg.t_final,
        ref_tol: cfg.tolerances.ref_tol,
        report: report_options(cfg),
        gap_tol: cfg.tolerances.gap_tol,
    };
    let mut traj = march_reference(&grid, &datum.phi0, &datum.phi_dot0, datum.mass, &opts)?;
    chi_and_rate(&mut traj, cfg.tolerances.ref_tol)?;

    em.csv(
        "reference/times.csv",
        &["t", "E", "theta"],
        (0..traj.len()).map(|k| vec![traj.times[k], traj.energy[k], traj.theta[k]]),
    )?;
    let stride = ((cfg.checkpoint_stride / cfg.dt_ref).round() as usize).max(1);
    for k in (0..traj.len()).step_by(stride).chain(std::iter::once(traj.len() - 1)) {
        em.real_field(&format!("reference/snapshots/Q_{k:06}.bin"), &grid, &traj.q[k])?;
        em.real_field(&format!("reference/snapshots/V_{k:06}.bin"), &grid, &traj.v[k])?;
        em.real_field(&format!("reference/snapshots/chi_{k:06}.bin"), &grid, &traj.chi[k])?;
    }
    let tstar = monitor_tstar(&traj, &opts.report);
    em.json("reference/tstar.json", &tstar)?;
    let summary = ReferenceSummary {
        t_final: traj.t_final(),
        steps: traj.len() - 1,
        energy_initial: traj.energy[0],
        energy_final: *traj.energy.last().expect("nonempty"),
        max_eigen_residual: traj.max_residual(),
        max_field_equation_residual: traj.field_equation_residual().into_iter().fold(0.0, f64::max),
        chi: chi_bounds(&traj),
        tstar,
    };
    em.json("reference/summary.json", &summary)?;
    em.svg(
        "reference/energy.svg",
        &LinePlot::new("ground-state energy", "t", "E(t)").add("E", &traj.times, &traj.energy),
    )?;
    Ok(traj)
}

fn run_reference(cfg: &ExperimentConfig, em: &Emitter) -> Result<(), CliError> {
    let r = reference_trajectory(cfg, em).map(|_| ());
    em.stage("reference", &r);
    r
}

#[derive(Serialize)]
struct EvolveSummary {
    epsilon: f64,
    dt: f64,
    steps: usize,
    max_relative_mass_drift: f64,
    max_relative_energy_drift: f64,
}

fn run_evolve(cfg: &ExperimentConfig, em: &Emitter) -> Result<(), CliError> {
    let grid = cfg.grid();
    let init = PolaronState::from_datum(&grid, &cfg.datum()?, cfg.tolerances.ref_tol)?;
    let checkpoints = checkpoint_times(cfg);
    let results = per_epsilon(em, "evolve", &cfg.epsilons, |eps| {
        let params = LpParams::new(eps, cfg.c_psi)?;
        let record = RecordOptions {
            checkpoint_times: checkpoints.clone(),
            skip_diagnostics: false,
        };
        let run = evolve_lp_with(&init, &params, cfg.t_final, &record, |_| Ok(()))?;
        let dir = eps_dir(eps);
        em.csv(
            &format!("{dir}/diagnostics.csv"),
            &["t", "mass", "energy", "linf_psi"],
            run.diagnostics.iter().map(|d| vec![d.t, d.mass, d.energy, d.linf_psi]),
        )?;
        for s in &run.checkpoints {
            let stem = format!("{dir}/checkpoints/t_{:.6}", s.t);
            em.complex_field(&format!("{stem}_psi.bin"), &grid, &s.psi)?;
            em.real_field(&format!("{stem}_phi.bin"), &grid, &s.phi)?;
            em.real_field(&format!("{stem}_phi_dot.bin"), &grid, &s.phi_dot)?;
        }
        em.json(
            &format!("{dir}/summary.json"),
            &EvolveSummary {
                epsilon: eps,
                dt: run.dt,
                steps: run.diagnostics.len().saturating_sub(1),
                max_relative_mass_drift: run.max_relative_mass_drift(),
                max_relative_energy_drift: run.max_relative_energy_drift(),
            },
        )?;
        let e0 = run.diagnostics[0].energy;
        let t: Vec<f64> = run.diagnostics.iter().map(|d| d.t).collect();
        let drift: Vec<f64> = run.diagnostics.iter().map(|d| ((d.energy - e0) / e0).abs()).collect();
        em.svg(
            &format!("{dir}/energy.svg"),
            &LinePlot::new(
                &format!("relative energy drift, eps = {eps}"),
                "t",
                "|E(t) - E(0)| / |E(0)|",
            )
            .log_y()
            .add("drift", &t, &drift),
        )?;
        Ok(())
    });
    first_error(results).1.map_or(Ok(()), Err)
}

fn checkpoint_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = (cfg.t_final / cfg.checkpoint_stride + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * cfg.checkpoint_stride).collect()
}

#[derive(Serialize)]
struct DecompositionSummary {
    epsilon: f64,
    c_psi: f64,
    sup_psi_error: f64,
    sup_field_error: f64,
    sup_r_over_eps: f64,
    sup_alpha_defect: f64,
    sup_mass_identity: f64,
    sup_overlap_r: f64,
    sup_overlap_rt: f64,
    rt0_defect: f64,
    phase_check: f64,
    dw_consistency: f64,
    alpha_residual_sup: f64,
    alpha_rate_sup: f64,
    envelope: EnvelopeReport,
    m1: f64,
    m2: f64,
    m3: f64,
}

#[derive(Serialize)]
struct SweepReport {
    epsilons: Vec<f64>,
    failed: Vec<f64>,
    reports: Vec<ScalingReport>,
}

fn run_decompose(cfg: &ExperimentConfig, em: &Emitter, sweep: bool) -> Result<(), CliError> {
    let traj = reference_trajectory(cfg, em);
    em.stage("reference", &traj);
    let traj = traj?;
    let prefix = if sweep { "sweep" } else { "decompose" };
    let results = per_epsilon(em, prefix, &cfg.epsilons, |eps| decompose_one(cfg, em, &traj, eps));
    finish_sweep(em, sweep, results)
}

/// Scaling fit over the successful `ε` values; failed ones are listed.
pub fn finish_sweep(
    em: &Emitter,
    fit: bool,
    results: Vec<(f64, Result<DecompositionSeries, CliError>)>,
) -> Result<(), CliError> {
    let failed: Vec<f64> = results.iter().filter(|r| r.1.is_err()).map(|r| r.0).collect();
    let (ok, err) = first_error(results);
    if fit {
        let series: Vec<DecompositionSeries> = ok.into_iter().map(|(_, s)| s).collect();
        let fitted = if series.len() >= 3 {
            let reports = scaling_fit(&series);
            let reports = reports.map_err(CliError::from);
            em.stage("scaling", &reports);
            reports.ok()
        } else {
            em.stage::<()>(
                "scaling",
                &Err(CliError::Numerical(LabError::InsufficientSamples {
                    needed: 3,
                    available: series.len(),
                })),
            );
            None
        };
        let mut eps: Vec<f64> = series.iter().map(|s| s.epsilon).collect();
        eps.sort_by(|a, b| b.total_cmp(a));
        let reports = fitted.unwrap_or_default();
        em.json(
            "scaling.json",
            &SweepReport {
                epsilons: eps,
                failed,
                reports: reports.clone(),
            },
        )?;
        let mut plot = LinePlot::new("sup-in-time observables", "epsilon", "value")
            .log_log()
            .with_markers();
        for r in &reports {
            plot = plot.add(
                &format!("{} (slope {:.2})", r.observable, r.slope),
                &r.epsilons,
                &r.values,
            );
        }
        em.svg("scaling.svg", &plot)?;
    }
    err.map_or(Ok(()), Err)
}

fn decompose_one(
    cfg: &ExperimentConfig,
    em: &Emitter,
    traj: &ReferenceTrajectory,
    eps: f64,
) -> Result<DecompositionSeries, CliError> {
    let init = matched_initial_state(traj)?;
    let params = LpParams::new(eps, cfg.c_psi)?;
    let record = RecordOptions {
        checkpoint_times: Vec::new(),
        skip_diagnostics: true,
    };
    let (_, s) = decompose_with(&init, &params, cfg.t_final, traj, &record, cfg.sup_oversample)?;
    let dir = eps_dir(eps);
    em.csv(
        &format!("{dir}/series.csv"),
        &[
            "t", "re_alpha", "im_alpha", "nR_l2", "nRt_l2", "nRt_linf", "nRt_winf", "nW_l2", "dW_l2", "dalpha2", "M1",
            "M2", "M3",
        ],
        (0..s.len()).map(|k| {
            vec![
                s.times[k],
                s.alpha[k].re,
                s.alpha[k].im,
                s.r_l2[k],
                s.rt_l2[k],
                s.rt_linf[k],
                s.rt_winf[k],
                s.w_l2[k],
                s.dw_l2[k],
                s.dalpha2[k],
                s.m1[k],
                s.m2[k],
                s.m3[k],
            ]
        }),
    )?;
    let residual = alpha_residual_check(&s)?;
    let sup = DecompositionSeries::sup;
    em.json(
        &format!("{dir}/summary.json"),
        &DecompositionSummary {
            epsilon: eps,
            c_psi: cfg.c_psi,
            sup_psi_error: sup(&s.psi_error),
            sup_field_error: s.sup_field_error(),
            sup_r_over_eps: sup(&s.r_l2) / eps,
            sup_alpha_defect: s.sup_alpha_defect(),
            sup_mass_identity: sup(&s.mass_identity),
            sup_overlap_r: sup(&s.overlap_r),
            sup_overlap_rt: sup(&s.overlap_rt),
            rt0_defect: s.rt0_defect,
            phase_check: s.phase_check,
            dw_consistency: s.dw_consistency,
            alpha_residual_sup: residual.sup_residual(),
            alpha_rate_sup: residual.sup_rate(),
            envelope: alpha_rate_envelope(&s),
            m1: sup(&s.m1),
            m2: sup(&s.m2),
            m3: sup(&s.m3),
        },
    )?;
    let re: Vec<f64> = s.alpha.iter().map(|a| a.re).collect();
    let im: Vec<f64> = s.alpha.iter().map(|a| a.im).collect();
    em.svg(
        &format!("{dir}/alpha.svg"),
        &LinePlot::new(&format!("alpha trajectory, eps = {eps}"), "Re alpha", "Im alpha").add("alpha", &re, &im),
    )?;
    let rt: Vec<f64> = s.rt_l2.iter().map(|v| v / eps).collect();
    let w: Vec<f64> = s.w_l2.iter().map(|v| v / (eps * eps)).collect();
    em.svg(
        &format!("{dir}/norms.svg"),
        &LinePlot::new(&format!("scaled remainders, eps = {eps}"), "t", "value")
            .add("|R~|_2 / eps", &s.times, &rt)
            .add("|W|_2 / eps^2", &s.times, &w),
    )?;
    Ok(s)
}

#[derive(Serialize)]
struct AdiabaticSummary {
    epsilon: f64,
    dt: f64,
    sup_lhs: f64,
    sup_ratio: f64,
    sup_energy: f64,
    mass_drift: f64,
}

#[derive(Serialize)]
struct AdiabaticSlopes {
    epsilons: Vec<f64>,
    lhs_slope: f64,
    energy_slope: f64,
}

fn run_adiabatic(cfg: &ExperimentConfig, em: &Emitter) -> Result<(), CliError> {
    let grid = cfg.grid();
    let a = cfg.adiabatic;
    let path = TranslatedWell {
        grid: grid.clone(),
        depth: a.depth,
        amplitude: a.amplitude,
    };
    let mesh = AdiabaticPath::build(&path, cfg.t_final, a.dt_path, cfg.tolerances.ref_tol);
    let mesh = mesh.map_err(CliError::from);
    em.stage("path", &mesh);
    let mesh = mesh?;
    let results = per_epsilon(em, "adiabatic", &cfg.epsilons, |eps| {
        let dt = cfg.c_psi * eps;
        let rep = adiabatic_bound_check(&path, &mesh, eps, dt)?;
        let dir = eps_dir(eps);
        em.csv(
            &format!("{dir}/report.csv"),
            &["t", "lhs_l2", "rhs_l2", "energy_lhs", "ratio"],
            (0..rep.times.len()).map(|k| {
                vec![
                    rep.times[k],
                    rep.lhs_l2[k],
                    rep.rhs_l2[k],
                    rep.energy_lhs[k],
                    rep.ratio[k],
                ]
            }),
        )?;
        em.json(
            &format!("{dir}/summary.json"),
            &AdiabaticSummary {
                epsilon: eps,
                dt,
                sup_lhs: rep.sup_lhs(),
                sup_ratio: rep.sup_ratio(),
                sup_energy: rep.sup_energy(),
                mass_drift: rep.mass_drift,
            },
        )?;
        em.svg(
            &format!("{dir}/bound.svg"),
            &LinePlot::new(&format!("adiabatic error and bound, eps = {eps}"), "t", "L2 norm")
                .add("lhs", &rep.times, &rep.lhs_l2)
                .add("rhs", &rep.times, &rep.rhs_l2),
        )?;
        Ok((rep.sup_lhs(), rep.sup_energy()))
    });
    let (ok, err) = first_error(results);
    if ok.len() >= 3 {
        let mut ok = ok;
        ok.sort_by(|a, b| b.0.total_cmp(&a.0));
        let eps: Vec<f64> = ok.iter().map(|r| r.0).collect();
        let lhs: Vec<f64> = ok.iter().map(|r| r.1 .0).collect();
        let energy: Vec<f64> = ok.iter().map(|r| r.1 .1).collect();
        let slopes = AdiabaticSlopes {
            lhs_slope: epsilon_slope(&eps, &lhs)?.slope,
            energy_slope: epsilon_slope(&eps, &energy)?.slope,
            epsilons: eps,
        };
        em.json("slopes.json", &slopes)?;
    }
    err.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct DecayReport {
    epsilon: f64,
    dt: f64,
    t_reflection: f64,
    window: (f64, f64),
    weighted: Option<DecayFit>,
    unweighted: Option<DecayFit>,
    max_overlap: f64,
    max_mass_drift: f64,
}

fn run_dispersive(cfg: &ExperimentConfig, em: &Emitter) -> Result<(), CliError> {
    let grid: Grid = cfg.grid();
    let d = cfg.dispersive;
    let path = StaticPotential {
        values: sech2(&grid, d.depth),
        grid: grid.clone(),
    };
    let psi0 = bump_datum(&grid, &path.values, cfg.tolerances.ref_tol)?;
    let results = per_epsilon(em, "dispersive", &cfg.epsilons, |eps| {
        let dt = cfg.c_psi * eps;
        let mut opts = ProjectedOptions::new(eps, dt, cfg.t_final);
        opts.project = d.project;
        opts.record_stride = d.record_stride;
        opts.eigen_tol = cfg.tolerances.ref_tol;
        opts.report = report_options(cfg);
        let run = evolve_projected(&path, &psi0, &opts)?;
        let t_refl = reflection_time(&grid, &psi0, eps);
        let window = (5.0 * eps, t_refl.min(cfg.t_final));
        let dir = eps_dir(eps);
        em.csv(
            &format!("{dir}/norms.csv"),
            &["t", "winf_m1", "linf", "l2"],
            (0..run.times.len()).map(|k| vec![run.times[k], run.winf_m1[k], run.linf[k], run.l2[k]]),
        )?;
        let report = DecayReport {
            epsilon: eps,
            dt,
            t_reflection: t_refl,
            window,
            weighted: measure_decay(&run, SeriesKind::WeightedLinf, window.0, window.1).ok(),
            unweighted: measure_decay(&run, SeriesKind::Linf, window.0, window.1).ok(),
            max_overlap: run.max_overlap(),
            max_mass_drift: run.max_mass_drift(),
        };
        em.json(&format!("{dir}/decay.json"), &report)?;
        let (t, w, l): (Vec<f64>, Vec<f64>, Vec<f64>) = (1..run.times.len())
            .map(|k| (run.times[k], run.winf_m1[k], run.linf[k]))
            .fold((vec![], vec![], vec![]), |(mut a, mut b, mut c), (x, y, z)| {
                a.push(x);
                b.push(y);
                c.push(z);
                (a, b, c)
            });
        em.svg(
            &format!("{dir}/decay.svg"),
            &LinePlot::new(&format!("dispersive decay, eps = {eps}"), "t", "norm")
                .log_log()
                .add("|<x>^-1 psi~|_inf", &t, &w)
                .add("|psi~|_inf", &t, &l),
        )?;
        if report.weighted.is_none() || report.unweighted.is_none() {
            return Err(CliError::Numerical(LabError::InsufficientSamples {
                needed: 10,
                available: run.times.iter().filter(|&&t| t >= window.0 && t <= window.1).count(),
            }));
        }
        Ok(())
    });
    first_error(results).1.map_or(Ok(()), Err)
}
