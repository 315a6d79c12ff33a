//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;

use lplab::adiabatic::{adiabatic_bound_check, epsilon_slope, AdiabaticPath, StaticPotential, TranslatedWell};
use lplab::decomposition::{alpha_residual_check, decompose, matched_initial_state, scaling_fit, DecompositionSeries};
use lplab::dispersive::{
    bump_datum, duhamel_residual, evolve_projected, measure_decay, reflection_time, ProjectedOptions, SeriesKind,
};
use lplab::grid::Grid;
use lplab::interp::fit_power_law;
use lplab::lp::{evolve_lp, LpParams, PolaronState, RecordOptions};
use lplab::potentials::{poschl_teller_ground_energy, poschl_teller_preset, sech2, DEFAULT_DEPTH};
use lplab::reference::{chi_and_rate, march_reference, ReferenceOptions, ReferenceTrajectory};
use lplab::spectral::{ground_state, spectral_report, ReportOptions};

type Outcome = Result<(bool, String), String>;

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn standard_grid() -> Grid {
    Grid::new(40.0, 1024).unwrap()
}

fn standard_reference(grid: &Grid, dt_ref: f64) -> ReferenceTrajectory {
    let p = poschl_teller_preset(grid, DEFAULT_DEPTH);
    let opts = ReferenceOptions {
        dt_ref,
        ..ReferenceOptions::default()
    };
    let mut traj = march_reference(grid, &p.phi0, &p.phi_dot0, p.mass, &opts).unwrap();
    chi_and_rate(&mut traj, 1e-10).unwrap();
    traj
}

fn closed_form_eigenpairs() -> Outcome {
    let start = Instant::now();
    let g = Grid::new(40.0, 4096).map_err(|e| e.to_string())?;
    let a = ground_state(&g, &sech2(&g, 1.5), 1.0, 1e-11).map_err(|e| e.to_string())?;
    let e15 = (a.energy - poschl_teller_ground_energy(1.5)).abs();
    let b = ground_state(&g, &sech2(&g, 2.0), 1.0, 1e-11).map_err(|e| e.to_string())?;
    let e2 = (b.energy + 1.0).abs();
    let sech = g.sample(|x| 1.0 / x.cosh());
    let norm = g.l2_real(&sech);
    let diff: Vec<f64> = b.state.iter().zip(&sech).map(|(u, s)| u - s / norm).collect();
    let dist = g.l2_real(&diff);
    let secs = start.elapsed().as_secs_f64();
    Ok((
        e15 < 1e-6 && e2 < 1e-8 && dist < 1e-6 && secs < 5.0,
        format!("|dE(1.5)|={e15:.1e} |dE(2)|={e2:.1e} |u-sech|={dist:.1e} time={secs:.2}s"),
    ))
}

fn resonance_dichotomy() -> Outcome {
    let g = Grid::new(40.0, 2048).unwrap();
    let opts = ReportOptions::default();
    let mut ok = true;
    let mut msg = Vec::new();
    for (depth, resonant, count) in [
        (2.0, true, Some(1)),
        (6.0, true, Some(2)),
        (1.5, false, Some(1)),
        (2.5, false, None),
    ] {
        let r = spectral_report(&g, &sech2(&g, depth), &opts).map_err(|e| e.to_string())?;
        ok &= r.is_resonant == resonant && count.is_none_or(|c| r.negative_count == c);
        msg.push(format!(
            "a={depth}: n={} rho={:.3} res={}",
            r.negative_count, r.resonance_indicator, r.is_resonant
        ));
    }
    Ok((ok, msg.join("; ")))
}

fn conservation() -> Outcome {
    let g = standard_grid();
    let init =
        PolaronState::from_datum(&g, &poschl_teller_preset(&g, DEFAULT_DEPTH), 1e-11).map_err(|e| e.to_string())?;
    let eps = 0.1;
    let run = evolve_lp(&init, &LpParams::new(eps, 0.02).unwrap(), 1.0).map_err(|e| e.to_string())?;
    let per_step = run
        .diagnostics
        .windows(2)
        .map(|w| ((w[1].mass - w[0].mass) / w[0].mass).abs())
        .fold(0.0, f64::max);
    let drift = run.max_relative_energy_drift();
    let cs = [0.04, 0.02, 0.01];
    let mut dts = Vec::new();
    let mut drifts = Vec::new();
    for c in cs {
        let r = evolve_lp(&init, &LpParams::new(eps, c).unwrap(), 1.0).map_err(|e| e.to_string())?;
        dts.push(c * eps);
        drifts.push(r.max_relative_energy_drift());
    }
    let slope = fit_power_law(&dts, &drifts).map_err(|e| e.to_string())?.slope;
    Ok((
        per_step < 1e-12 && drift < 1e-6 && within(slope, 1.8, 2.2),
        format!("mass/step={per_step:.1e} energy drift={drift:.2e} (need <1e-6) order={slope:.3}"),
    ))
}

fn reference_consistency() -> Outcome {
    let g = standard_grid();
    let p = poschl_teller_preset(&g, DEFAULT_DEPTH);
    let mut sups = Vec::new();
    let mut eig = 0.0f64;
    let mut mass = 0.0f64;
    let steps = [2e-3, 1e-3, 5e-4];
    for dt_ref in steps {
        let opts = ReferenceOptions {
            dt_ref,
            ..ReferenceOptions::default()
        };
        let t = march_reference(&g, &p.phi0, &p.phi_dot0, p.mass, &opts).map_err(|e| e.to_string())?;
        eig = eig.max(t.max_residual());
        mass = t.q.iter().map(|q| (g.l2_real(q) - p.mass).abs()).fold(mass, f64::max);
        sups.push(t.field_equation_residual().into_iter().fold(0.0, f64::max));
    }
    let slope = fit_power_law(&steps, &sups).map_err(|e| e.to_string())?.slope;
    Ok((
        eig <= 1e-8 && within(slope, 1.8, 2.2) && mass < 1e-12,
        format!("eigen-residual={eig:.1e} field-eq order={slope:.3} | ||Q||-||psi0|| |={mass:.1e}"),
    ))
}

fn sweep(traj: &ReferenceTrajectory, epsilons: &[f64], c_psi: f64) -> Result<Vec<DecompositionSeries>, String> {
    let init = matched_initial_state(traj).map_err(|e| e.to_string())?;
    let record = RecordOptions {
        skip_diagnostics: true,
        ..RecordOptions::default()
    };
    epsilons
        .iter()
        .map(|&eps| {
            let params = LpParams::new(eps, c_psi).map_err(|e| e.to_string())?;
            decompose(&init, &params, 1.0, traj, &record)
                .map(|(_, s)| s)
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn scaling(series: &[DecompositionSeries]) -> Outcome {
    let reports = scaling_fit(series).map_err(|e| e.to_string())?;
    let wanted = ["psi_error", "field_error", "m1", "m2", "m3"];
    let mut ok = true;
    let mut msg = Vec::new();
    for r in reports.iter().filter(|r| wanted.contains(&r.observable.as_str())) {
        ok &= r.pass;
        msg.push(format!(
            "{}={:.3} [{}, {}]{}",
            r.observable,
            r.slope,
            r.expected.0,
            r.expected.1,
            if r.pass { "" } else { "!" }
        ));
    }
    Ok((ok, msg.join(" ")))
}

fn identities(series: &[DecompositionSeries]) -> Outcome {
    let sup = DecompositionSeries::sup;
    let mut ok = true;
    let (mut ident, mut orth, mut a0, mut r0) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in series {
        ident = ident.max(sup(&s.mass_identity));
        orth = orth.max(sup(&s.overlap_r));
        a0 = a0.max((s.alpha[0] - Complex64::new(1.0, 0.0)).norm());
        r0 = r0.max(s.rt0_defect).max((s.rt_l2[0] - s.epsilon * s.chi0_l2).abs());
    }
    ok &= ident < 1e-8 && orth < 1e-10 && a0 < 1e-10 && r0 < 1e-10;
    Ok((
        ok,
        format!("mass identity={ident:.1e} <Q,R>={orth:.1e} |alpha0-1|={a0:.1e} R~0 defect={r0:.1e}"),
    ))
}

fn adiabatic() -> Outcome {
    let g = standard_grid();
    let path = TranslatedWell::standard(&g);
    let mesh = AdiabaticPath::build(&path, 1.0, 2e-3, 1e-11).map_err(|e| e.to_string())?;
    let eps = [0.1, 0.05, 0.025];
    let mut reps = Vec::new();
    for e in eps {
        reps.push(adiabatic_bound_check(&path, &mesh, e, 0.02 * e).map_err(|e| e.to_string())?);
    }
    let ratio = reps[1].sup_ratio();
    let halving = reps[1].sup_lhs() / reps[2].sup_lhs();
    let energies: Vec<f64> = reps.iter().map(|r| r.sup_energy()).collect();
    let slope = epsilon_slope(&eps, &energies).map_err(|e| e.to_string())?.slope;
    Ok((
        ratio <= 1.1 && within(halving, 1.6, 2.4) && within(slope, 1.7, 2.3),
        format!("sup lhs/rhs={ratio:.3} lhs(0.05)/lhs(0.025)={halving:.3} energy slope={slope:.3}"),
    ))
}

fn dispersive_rates() -> Outcome {
    let eps = 0.02;
    let g = Grid::new(400.0, 8192).unwrap();
    let path = StaticPotential {
        values: sech2(&g, 1.5),
        grid: g.clone(),
    };
    let psi0 = bump_datum(&g, &path.values, 1e-11).map_err(|e| e.to_string())?;
    let t_hi = reflection_time(&g, &psi0, eps).min(1.0);
    let mut opts = ProjectedOptions::new(eps, 0.02 * eps, 1.0);
    opts.record_stride = 5;
    let run = evolve_projected(&path, &psi0, &opts).map_err(|e| e.to_string())?;
    let weighted = measure_decay(&run, SeriesKind::WeightedLinf, 5.0 * eps, t_hi).map_err(|e| e.to_string())?;
    let plain = measure_decay(&run, SeriesKind::Linf, 5.0 * eps, t_hi).map_err(|e| e.to_string())?;

    let free_path = StaticPotential {
        values: vec![0.0; g.n()],
        grid: g.clone(),
    };
    let gauss = g.sample_complex(|x| Complex64::new((-x * x / 2.0).exp(), 0.0));
    let t_free = reflection_time(&g, &gauss, eps).min(1.0);
    let mut free_opts = ProjectedOptions::new(eps, 0.02 * eps, t_free);
    free_opts.project = false;
    let free = evolve_projected(&free_path, &gauss, &free_opts).map_err(|e| e.to_string())?;
    let free_err = free
        .times
        .iter()
        .zip(&free.linf)
        .map(|(t, v)| (v - (1.0 + 4.0 * (t / eps).powi(2)).powf(-0.25)).abs())
        .fold(0.0, f64::max);
    Ok((
        within(weighted.exponent, -1.7, -1.3) && within(plain.exponent, -0.65, -0.35) && free_err < 1e-6,
        format!(
            "window=[{:.2},{t_hi:.3}] weighted p={:.3} unweighted p={:.3} free-Gaussian err={free_err:.1e}",
            5.0 * eps,
            weighted.exponent,
            plain.exponent
        ),
    ))
}

fn duhamel() -> Outcome {
    let g = Grid::new(20.0, 512).unwrap();
    let eps = 0.1;
    let stat = StaticPotential {
        values: sech2(&g, 1.5),
        grid: g.clone(),
    };
    let psi0 = bump_datum(&g, &stat.values, 1e-11).map_err(|e| e.to_string())?;
    let mut opts = ProjectedOptions::new(eps, 1e-3, 0.3);
    opts.keep_fields = true;
    let run = evolve_projected(&stat, &psi0, &opts).map_err(|e| e.to_string())?;
    let static_res = duhamel_residual(&run, 0.1, 0.3).map_err(|e| e.to_string())?;

    let moving = TranslatedWell::standard(&g);
    let steps = [4e-3, 2e-3, 1e-3];
    let mut res = Vec::new();
    for dt in steps {
        let mut o = ProjectedOptions::new(eps, dt, 0.3);
        o.keep_fields = true;
        let r = evolve_projected(&moving, &psi0, &o).map_err(|e| e.to_string())?;
        res.push(duhamel_residual(&r, 0.0, 0.3).map_err(|e| e.to_string())?);
    }
    let slope = fit_power_law(&steps, &res).map_err(|e| e.to_string())?.slope;
    Ok((
        static_res < 1e-6 && within(slope, 1.8, 2.2),
        format!(
            "static={static_res:.1e} moving={:.1e}..{:.1e} order={slope:.3}",
            res[0], res[2]
        ),
    ))
}

fn alpha_equation(traj: &ReferenceTrajectory) -> Outcome {
    let cs = [0.02, 0.01, 0.005];
    let mut dts = Vec::new();
    let mut res = Vec::new();
    let mut budget = 0.0;
    for c in cs {
        let s = &sweep(traj, &[0.05], c)?[0];
        let r = alpha_residual_check(s).map_err(|e| e.to_string())?;
        if c == 0.02 {
            budget = r.sup_residual() / r.sup_rate();
        }
        dts.push(c * 0.05);
        res.push(r.sup_residual());
    }
    let slope = fit_power_law(&dts, &res).map_err(|e| e.to_string())?.slope;
    Ok((
        budget <= 0.05 && within(slope, 1.8, 2.2),
        format!("sup residual / sup|d alpha|={budget:.3} order={slope:.3}"),
    ))
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let grid = standard_grid();
    let traj = standard_reference(&grid, 1e-3);
    let series = sweep(&traj, &[0.1, 0.05, 0.025], 0.005);

    let from_series = |f: fn(&[DecompositionSeries]) -> Outcome| match &series {
        Ok(s) => f(s),
        Err(e) => Err(e.clone()),
    };
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("closed-form eigenpairs", Box::new(closed_form_eigenpairs)),
        ("resonance dichotomy", Box::new(resonance_dichotomy)),
        ("conservation", Box::new(conservation)),
        ("reference self-consistency", Box::new(reference_consistency)),
        ("epsilon scaling", Box::new(move || from_series(scaling))),
        ("decomposition identities", Box::new(move || from_series(identities))),
        ("adiabatic bound", Box::new(adiabatic)),
        ("dispersive rates", Box::new(dispersive_rates)),
        ("Duhamel residual", Box::new(duhamel)),
        ("alpha equation residual", Box::new(|| alpha_equation(&traj))),
    ];

    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{:>2} {} {name}: {detail} ({:.1}s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
