use ccm_core::bundled::{example_config, EXAMPLE_NAMES};
use ccm_core::synthesis::lti::lti_stabilizability_check;
use ccm_core::synthesis::{
    annihilator::is_annihilated, synthesize, verify_at_points, verify_certificate, verify_certificate_seeded, Domain,
    Mode, SynthesisConfig,
};
use ccm_core::ControlAffineSystem;
use nalgebra::DMatrix;

fn double_integrator() -> ControlAffineSystem {
    ControlAffineSystem::from_strings(&["x2", "0"], DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap()
}

fn exp_cfg() -> SynthesisConfig {
    let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 5.0));
    cfg.basis_degree = 0;
    cfg.lambda = 0.5;
    cfg.mode = Mode::Exponential;
    cfg
}

#[test]
fn double_integrator_exponential() {
    let sys = double_integrator();
    let cert = synthesize(&sys, &exp_cfg()).unwrap();
    let rep = verify_certificate(&sys, &cert, 10_000);
    assert!(rep.pass && rep.worst_margin_contraction > 0.0 && rep.worst_margin_bounds > 0.0, "{rep:?}");
    assert!(is_annihilated(&cert.w, sys.input_matrix()));
}

#[test]
fn tampered_lambda_fails() {
    let sys = double_integrator();
    let mut cert = synthesize(&sys, &exp_cfg()).unwrap();
    cert.lambda *= 20.0;
    assert!(!verify_certificate(&sys, &cert, 1000).pass);
}

#[test]
fn cubic_scalar_degree_zero() {
    let sys = ControlAffineSystem::from_strings(&["-x1^3"], DMatrix::from_element(1, 1, 1.0)).unwrap();
    let mut cfg = SynthesisConfig::new(Domain::symmetric(1, 3.0));
    cfg.basis_degree = 0;
    let cert = synthesize(&sys, &cfg).unwrap();
    let rep = verify_certificate_seeded(&sys, &cert, 10_000, 7);
    assert!(rep.pass && rep.worst_margin_contraction > 0.0, "{rep:?}");
}

#[test]
fn hierarchical_block_diagonal() {
    let sys = ControlAffineSystem::from_strings(&["-x1 + x2", "0"], DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
    let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 5.0));
    cfg.basis_degree = 0;
    cfg.block_diagonal = Some(vec![1, 1]);
    let cert = synthesize(&sys, &cfg).unwrap();
    assert!(cert.w.get(0, 1).is_zero());
    assert!(verify_certificate(&sys, &cert, 10_000).pass);
}

#[test]
fn nonlinear_degree_two() {
    // State-dependent Jacobian in the unactuated row.
    let sys = ControlAffineSystem::from_strings(&["-x1 + x2 - x1^3", "x1^2"], DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
    let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 2.0));
    cfg.basis_degree = 2;
    cfg.lambda = 0.1;
    cfg.mode = Mode::Exponential;
    let cert = synthesize(&sys, &cfg).unwrap();
    assert!(is_annihilated(&cert.w, sys.input_matrix()));
    assert!(verify_certificate_seeded(&sys, &cert, 4000, 5).pass);
}

#[test]
fn gcc_double_integrator() {
    let sys = double_integrator();
    let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 5.0));
    cfg.basis_degree = 0;
    cfg.mode = Mode::GuaranteedCost;
    cfg.q = Some(DMatrix::identity(2, 2));
    cfg.r = Some(DMatrix::identity(1, 1));
    let cert = synthesize(&sys, &cfg).unwrap();
    assert!(verify_certificate(&sys, &cert, 2000).pass);
}

#[test]
fn every_grid_point_passes_reverification() {
    for (f, b, deg, lambda, mode) in [
        (vec!["x2", "0"], vec![0.0, 1.0], 0, 0.5, Mode::Exponential),
        (vec!["-x1 + x2 - x1^3", "x1^2"], vec![0.0, 1.0], 2, 0.1, Mode::Exponential),
    ] {
        let sys = ControlAffineSystem::from_strings(&f, DMatrix::from_column_slice(2, 1, &b)).unwrap();
        let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 2.0));
        cfg.basis_degree = deg;
        cfg.lambda = lambda;
        cfg.mode = mode;
        let cert = synthesize(&sys, &cfg).unwrap();
        let rep = verify_at_points(&sys, &cert, &cert.domain.grid(cfg.grid));
        assert!(rep.pass, "{f:?}: {rep:?}");
    }
}

fn linear(f: [&str; 2], b: [f64; 2]) -> (ControlAffineSystem, DMatrix<f64>, DMatrix<f64>) {
    let sys = ControlAffineSystem::from_strings(&f, DMatrix::from_column_slice(2, 1, &b)).unwrap();
    let a = sys.jacobian().a.eval(&[0.0, 0.0]).unwrap();
    let b = sys.input_matrix().clone();
    (sys, a, b)
}

#[test]
fn linear_systems_agree_with_lti_check() {
    let cases = [
        (["x2", "0"], [0.0, 1.0], true),
        (["x1 + x2", "-x1 + 2*x2"], [0.0, 1.0], true),
        (["x1", "-x2"], [1.0, 0.0], true),
        (["x1", "x2"], [1.0, 0.0], false),
        (["x1", "0.5*x2"], [1.0, 0.0], false),
        (["-x1", "x2"], [1.0, 0.0], false),
    ];
    for (f, b, expected) in cases {
        let (sys, a, b) = linear(f, b);
        let lti = lti_stabilizability_check(&a, &b).is_ok();
        let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 3.0));
        cfg.basis_degree = 0;
        let full = synthesize(&sys, &cfg).is_ok();
        assert_eq!((lti, full), (expected, expected), "{f:?}");
    }
}

#[test]
fn stabilizable_examples_admit_guaranteed_cost() {
    for name in EXAMPLE_NAMES {
        let run = example_config(name).unwrap();
        let sys = run.system().unwrap();
        let mut cfg = run.synthesis_config().unwrap();
        cfg.mode = Mode::Stabilize;
        cfg.lambda = 0.0;
        cfg.q = None;
        cfg.r = None;
        if synthesize(&sys, &cfg).is_err() {
            continue;
        }
        cfg.mode = Mode::GuaranteedCost;
        cfg.q = Some(DMatrix::identity(sys.n(), sys.n()) * 1e-2);
        cfg.r = Some(DMatrix::identity(sys.m(), sys.m()) * 1e-2);
        let cert = synthesize(&sys, &cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(verify_certificate(&sys, &cert, 2000).pass, "{name}");
    }
}
