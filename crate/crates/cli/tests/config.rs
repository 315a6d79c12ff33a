use lplab_cli::config::{parse_config, parse_config_str, Kind, Preset};
use lplab_cli::error::CliError;

const MINIMAL: &str = r#"{
  "grid": {"L": 20, "N": 512},
  "preset": {"poschl_teller": {"a": 1.5}},
  "epsilons": [0.1],
  "T": 1,
  "kind": "evolve"
}"#;

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config_str(MINIMAL).unwrap();
    assert_eq!(cfg.kind, Some(Kind::Evolve));
    assert_eq!(cfg.preset, Preset::PoschlTeller { a: 1.5 });
    assert_eq!(cfg.mass, 1.0);
    assert_eq!(cfg.dt_ref, 1e-3);
    assert_eq!(cfg.c_psi, 0.02);
    assert_eq!(cfg.tolerances.ref_tol, 1e-10);
    assert_eq!(cfg.tolerances.rho_tol, 0.02);
    assert_eq!(cfg.tolerances.gap_tol, 1e-6);
    assert_eq!(cfg.checkpoint_stride, 0.25);
    assert!(cfg.output.is_none());
}

#[test]
fn grid_only_config_is_enough() {
    let cfg = parse_config_str(r#"{"grid": {"L": 40, "N": 1024}}"#).unwrap();
    assert_eq!(cfg.epsilons, vec![0.1, 0.05, 0.025]);
    assert_eq!(cfg.t_final, 1.0);
    assert!(cfg.kind.is_none());
}

#[test]
fn non_power_of_two_is_a_validation_error() {
    let err = parse_config_str(r#"{"grid": {"L": 20, "N": 1000}}"#).unwrap_err();
    match err {
        CliError::Validation(m) => {
            assert!(m.contains("grid.N"), "{m}");
            assert!(m.contains("N must be a power of two"), "{m}");
        }
        other => panic!("expected validation error, got {other}"),
    }
}

#[test]
fn unknown_key_is_a_parse_error() {
    let err = parse_config_str(r#"{"grid": {"L": 20, "N": 512}, "foo": 1}"#).unwrap_err();
    match err {
        CliError::Parse(m) => assert!(m.contains("foo") && m.contains("line"), "{m}"),
        other => panic!("expected parse error, got {other}"),
    }
    assert!(matches!(
        parse_config_str(r#"{"grid": {"L": 20, "N": 512, "M": 3}}"#),
        Err(CliError::Parse(_))
    ));
    assert!(matches!(parse_config_str("{ not json"), Err(CliError::Parse(_))));
}

#[test]
fn out_of_range_values_name_their_field() {
    let cases = [
        (r#""epsilons": [0.1, 1.5]"#, "epsilons"),
        (r#""epsilons": []"#, "epsilons"),
        (r#""T": 0"#, "T"),
        (r#""tolerances": {"rho_tol": -1}"#, "tolerances.rho_tol"),
        (r#""c_psi": 0.2"#, "c_psi"),
        (r#""mass": 0"#, "mass"),
    ];
    for (extra, field) in cases {
        let text = format!(r#"{{"grid": {{"L": 20, "N": 512}}, {extra}}}"#);
        match parse_config_str(&text) {
            Err(CliError::Validation(m)) => assert!(m.starts_with(field), "{extra}: {m}"),
            other => panic!("{extra}: expected validation error, got {:?}", other.map(|_| ())),
        }
    }
}

#[test]
fn kind_must_agree_with_subcommand() {
    let cfg = parse_config_str(MINIMAL).unwrap();
    assert_eq!(cfg.resolve_kind(Kind::Evolve).unwrap(), Kind::Evolve);
    assert!(matches!(
        cfg.resolve_kind(Kind::Reference),
        Err(CliError::Validation(_))
    ));
    let open = parse_config_str(r#"{"grid": {"L": 20, "N": 512}, "epsilons": [0.1, 0.1, 0.05]}"#).unwrap();
    assert!(matches!(open.resolve_kind(Kind::Sweep), Err(CliError::Validation(_))));
    assert_eq!(open.resolve_kind(Kind::Decompose).unwrap(), Kind::Decompose);
}

#[test]
fn file_preset_reads_fields_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let src = parse_config_str(r#"{"grid": {"L": 20, "N": 256}}"#).unwrap();
    let grid = src.grid();
    let datum = src.datum().unwrap();
    let phi0 = lplab::grid::Field::real(&grid, datum.phi0.clone()).unwrap();
    let phi_dot0 = lplab::grid::Field::real(&grid, datum.phi_dot0.clone()).unwrap();
    lplab::io::write_csv(&phi0, std::fs::File::create(dir.path().join("phi0.csv")).unwrap()).unwrap();
    lplab::io::write_binary(
        &phi_dot0,
        std::fs::File::create(dir.path().join("phi_dot0.bin")).unwrap(),
    )
    .unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"grid": {"L": 20, "N": 256}, "preset": {"file": {"phi0": "phi0.csv", "phi_dot0": "phi_dot0.bin"}}}"#,
    )
    .unwrap();
    let cfg = parse_config(&path).unwrap();
    let read = cfg.datum().unwrap();
    assert_eq!(read.phi_dot0, datum.phi_dot0);
    let err = read
        .phi0
        .iter()
        .zip(&datum.phi0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-15, "csv round trip error {err}");

    std::fs::write(
        &path,
        r#"{"grid": {"L": 20, "N": 512}, "preset": {"file": {"phi0": "phi0.csv", "phi_dot0": "phi_dot0.bin"}}}"#,
    )
    .unwrap();
    let mismatched = parse_config(&path).unwrap();
    assert!(matches!(mismatched.datum(), Err(CliError::Validation(_))));
}
