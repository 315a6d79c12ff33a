use lplab::adiabatic::StaticPotential;
use lplab::dispersive::{bump_datum, evolve_projected, measure_decay, pc_project, ProjectedOptions, SeriesKind};
use lplab::grid::{to_complex, Grid};
use lplab::lp::{conserved, LpParams, LpStepper, PolaronState};
use lplab::potentials::sech2;
use num_complex::Complex64;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(20.0, 256).unwrap()
}

fn state(g: &Grid, amp: f64, shift: f64, k: f64, depth: f64) -> PolaronState {
    let psi = g.sample_complex(|x| amp * Complex64::from_polar((-(x - shift).powi(2)).exp(), k * x));
    let phi = sech2(g, depth);
    let phi_dot = g.sample(|x| 0.2 * x * (-x * x).exp());
    PolaronState::new(g, psi, phi, phi_dot).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_is_invariant_per_step(amp in 0.2f64..2.0, shift in -3.0f64..3.0, k in -3.0f64..3.0, c in 0.005f64..0.05) {
        let g = grid();
        let mut s = state(&g, amp, shift, k, 1.5);
        let stepper = LpStepper::new(&g, &LpParams::new(0.1, c).unwrap()).unwrap();
        let m0 = conserved(&s).mass;
        for _ in 0..20 {
            let before = conserved(&s).mass;
            stepper.step(&mut s).unwrap();
            prop_assert!((conserved(&s).mass - before).abs() <= 1e-12 * before);
        }
        prop_assert!((conserved(&s).mass - m0).abs() <= 1e-12 * m0 * 20.0);
    }

    #[test]
    fn stepping_back_undoes_stepping_forward(amp in 0.2f64..2.0, shift in -3.0f64..3.0, k in -3.0f64..3.0) {
        let g = grid();
        let s0 = state(&g, amp, shift, k, 1.5);
        let fwd = LpParams::new(0.1, 0.02).unwrap();
        let back = LpParams { dt: -fwd.dt, ..fwd.clone() };
        let (f, b) = (LpStepper::new(&g, &fwd).unwrap(), LpStepper::new(&g, &back).unwrap());
        let mut s = s0.clone();
        for _ in 0..100 {
            f.step(&mut s).unwrap();
        }
        for _ in 0..100 {
            b.step(&mut s).unwrap();
        }
        let diff: Vec<Complex64> = s.psi.iter().zip(&s0.psi).map(|(a, b)| a - b).collect();
        prop_assert!(g.l2(&diff) < 1e-8);
        prop_assert!(s.t.abs() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent_and_self_adjoint(
        a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256),
        b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256),
    ) {
        let g = grid();
        let v = sech2(&g, 1.5);
        let f: Vec<Complex64> = a.into_iter().map(|(x, y)| Complex64::new(x, y)).collect();
        let h: Vec<Complex64> = b.into_iter().map(|(x, y)| Complex64::new(x, y)).collect();
        let pf = pc_project(&g, &v, &f, 1e-12).unwrap();
        let ppf = pc_project(&g, &v, &pf, 1e-12).unwrap();
        let ph = pc_project(&g, &v, &h, 1e-12).unwrap();
        let d: Vec<Complex64> = ppf.iter().zip(&pf).map(|(x, y)| x - y).collect();
        prop_assert!(g.l2(&d) < 1e-12 * g.l2(&f));
        let (l, r) = (g.inner(&pf, &h), g.inner(&f, &ph));
        prop_assert!((l - r).norm() < 1e-12 * g.l2(&f) * g.l2(&h));
    }
}

#[test]
fn decay_exponent_ignores_datum_scale() {
    let g = Grid::new(60.0, 2048).unwrap();
    let path = StaticPotential {
        values: sech2(&g, 1.5),
        grid: g.clone(),
    };
    let psi0 = bump_datum(&g, &path.values, 1e-11).unwrap();
    let psi3: Vec<Complex64> = psi0.iter().map(|z| 3.0 * z).collect();
    let eps = 0.05;
    let mut opts = ProjectedOptions::new(eps, 0.02 * eps, 0.6);
    opts.record_stride = 2;
    let r1 = evolve_projected(&path, &psi0, &opts).unwrap();
    let r3 = evolve_projected(&path, &psi3, &opts).unwrap();
    for kind in [SeriesKind::WeightedLinf, SeriesKind::Linf] {
        let p1 = measure_decay(&r1, kind, 5.0 * eps, 0.6).unwrap().exponent;
        let p3 = measure_decay(&r3, kind, 5.0 * eps, 0.6).unwrap().exponent;
        assert!((p1 - p3).abs() < 1e-12, "{kind:?}: {p1} vs {p3}");
    }
}

#[test]
fn field_stays_real_and_datum_builds() {
    let g = grid();
    let d = lplab::potentials::poschl_teller_preset(&g, 1.5);
    let s = PolaronState::from_datum(&g, &d, 1e-11).unwrap();
    assert!((g.l2(&s.psi) - 1.0).abs() < 1e-12);
    assert_eq!(s.psi, to_complex(&ground(&g, &d.phi0)));
}

fn ground(g: &Grid, v: &[f64]) -> Vec<f64> {
    lplab::spectral::ground_state(g, v, 1.0, 1e-11).unwrap().state
}
