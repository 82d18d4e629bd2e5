use std::sync::OnceLock;

use ccm_core::controller::{cost_bound, linear_gain, path_image_openloop, FeedbackContext};
use ccm_core::geometry::{DiscretePath, GeodesicOptions};
use ccm_core::simulate::{self, DistanceSampling, LinearFeedback, Reference, SimOptions};
use ccm_core::synthesis::lti::lti_stabilizability_check;
use ccm_core::synthesis::{synthesize, CcmCertificate, Domain, Mode, SynthesisConfig};
use ccm_core::ControlAffineSystem;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn b_last(n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    b
}

struct Case {
    sys: ControlAffineSystem,
    cert: CcmCertificate,
}

fn case(f: &[&str], half_width: f64, degree: u32, mode: Mode, lambda: f64) -> Case {
    let n = f.len();
    let sys = ControlAffineSystem::from_strings(f, b_last(n)).unwrap();
    let mut cfg = SynthesisConfig::new(Domain::symmetric(n, half_width));
    cfg.basis_degree = degree;
    cfg.mode = mode;
    cfg.lambda = lambda;
    if mode == Mode::GuaranteedCost {
        cfg.q = Some(DMatrix::identity(n, n));
        cfg.r = Some(DMatrix::identity(1, 1));
    }
    let cert = synthesize(&sys, &cfg).unwrap();
    Case { sys, cert }
}

fn cases() -> &'static [Case] {
    static CELL: OnceLock<Vec<Case>> = OnceLock::new();
    CELL.get_or_init(|| {
        vec![
            case(&["x2", "0"], 5.0, 0, Mode::Exponential, 0.5),
            case(&["-x1^3"], 3.0, 0, Mode::Stabilize, 0.0),
            case(&["-x1 + x2 - x1^3", "x1^2"], 2.0, 2, Mode::Exponential, 0.1),
            case(&["x2", "0"], 5.0, 0, Mode::GuaranteedCost, 0.0),
        ]
    })
}

fn nonconstant() -> &'static Case {
    &cases()[2]
}

/// `δᵀ(Ṁ + AclᵀM + MAcl)δ` and `δᵀMδ` with every ingredient by finite
/// differences or dense inversion.
fn decrease_oracle(c: &Case, x: &[f64], delta: &[f64]) -> (f64, f64) {
    let n = x.len();
    let metric = |p: &[f64]| c.cert.w_at(p).try_inverse().unwrap();
    let m = metric(x);
    let f = c.sys.drift_at(x).unwrap();
    let h = 1e-6;
    let shifted = |s: f64| -> Vec<f64> { x.iter().zip(f.iter()).map(|(a, b)| a + s * h * b).collect() };
    let mdot = (metric(&shifted(1.0)) - metric(&shifted(-1.0))) / (2.0 * h);
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let col = (c.sys.drift_at(&xp).unwrap() - c.sys.drift_at(&xm).unwrap()) / (2.0 * h);
        a.set_column(j, &col);
    }
    let b = c.sys.input_matrix();
    let k = match c.cert.mode {
        Mode::GuaranteedCost => -(c.cert.r.as_ref().unwrap().clone().try_inverse().unwrap() * b.transpose() * &m),
        _ => b.transpose() * &m * (-0.5 * c.cert.rho_at(x)),
    };
    let acl = a + b * k;
    let q = mdot + acl.transpose() * &m + &m * acl;
    let d = DVector::from_column_slice(delta);
    (d.dot(&(q * &d)), d.dot(&(&m * &d)))
}

fn point_in(domain: &Domain, u: &[f64]) -> Vec<f64> {
    (0..domain.dim())
        .map(|i| domain.lower[i] + u[i] * (domain.upper[i] - domain.lower[i]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differential_decrease_matches_oracle_and_is_negative(
        which in 0usize..4,
        u in prop::collection::vec(0.0..1.0f64, 2),
        d in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let c = &cases()[which];
        let n = c.sys.n();
        let x = point_in(&c.cert.domain, &u[..n]);
        let delta = &d[..n];
        let ctx = FeedbackContext::new(c.sys.clone(), c.cert.clone()).unwrap();
        let got = ctx.differential_decrease(&x, delta).unwrap();
        let (oracle, energy) = decrease_oracle(c, &x, delta);
        prop_assert!((got - oracle).abs() <= 1e-5 * (1.0 + oracle.abs()), "{} vs {}", got, oracle);
        // Contraction at rate λ: δᵀ(…)δ ≤ −2λ δᵀMδ.
        prop_assert!(got <= -2.0 * c.cert.lambda * energy + 1e-8, "{} (λ = {})", got, c.cert.lambda);
    }

    #[test]
    fn constant_metric_feedback_is_linear(
        xs in prop::collection::vec(-3.0..3.0f64, 2),
        x in prop::collection::vec(-3.0..3.0f64, 2),
        us in -2.0..2.0f64,
    ) {
        let c = &cases()[0];
        let k = linear_gain(&c.sys, &c.cert).unwrap();
        let ctx = FeedbackContext::new(c.sys.clone(), c.cert.clone()).unwrap();
        let out = ctx.feedback(&xs, &[us], &x).unwrap();
        let e = DVector::from_column_slice(&x) - DVector::from_column_slice(&xs);
        let expect = (&k * e)[0] + us;
        prop_assert!((out.u[0] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        prop_assert!(!out.degraded && !out.out_of_domain);
    }

    #[test]
    fn cost_bound_is_symmetric(
        a in prop::collection::vec(-4.0..4.0f64, 2),
        b in prop::collection::vec(-4.0..4.0f64, 2),
    ) {
        let c = &cases()[3];
        let ctx = FeedbackContext::new(c.sys.clone(), c.cert.clone()).unwrap();
        let ab = cost_bound(&ctx, &a, &b).unwrap();
        let ba = cost_bound(&ctx, &b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-6 * (1.0 + ab));
    }
}

#[test]
fn cost_bound_requires_guaranteed_cost_mode() {
    let c = &cases()[0];
    let ctx = FeedbackContext::new(c.sys.clone(), c.cert.clone()).unwrap();
    assert!(cost_bound(&ctx, &[1.0, 0.0], &[0.0, 0.0]).is_err());
}

#[test]
fn linear_gain_rejects_state_dependent_metric() {
    let c = nonconstant();
    assert!(!c.cert.is_constant());
    assert!(linear_gain(&c.sys, &c.cert).is_err());
}

#[test]
fn path_image_matches_closed_loop_on_lti() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = b_last(2);
    let sys = ControlAffineSystem::linear(&a, b.clone()).unwrap();
    let lti = lti_stabilizability_check(&a, &b).unwrap();
    let cert = CcmCertificate::constant(&lti.w, lti.rho, Mode::Stabilize, 0.0, Domain::symmetric(2, 1e3));
    let ctx = FeedbackContext::new(sys.clone(), cert.clone()).unwrap();
    let reference = Reference::Harmonic {
        omega: 1.0,
        x_offset: vec![0.0, 0.0],
        x_sin: vec![1.0, 0.0],
        x_cos: vec![0.0, 1.0],
        u_offset: vec![0.0],
        u_sin: vec![-1.0],
        u_cos: vec![0.0],
    };
    let x0 = [1.5, -0.5];
    let (xs0, _) = reference.sample(0.0);
    let (dt, horizon) = (1e-2, 5.0);
    let path = DiscretePath::straight(xs0.as_slice(), &x0, 16).unwrap();
    let u_star = |t: f64| reference.sample(t).1;
    let sched = path_image_openloop(&ctx, &path, &u_star, horizon, dt).unwrap();
    assert!(!sched.truncated);

    let ctl = LinearFeedback {
        k: linear_gain(&sys, &cert).unwrap(),
    };
    let run = simulate::simulate_closed_loop(&sys, &ctl, &reference, &x0, &SimOptions::new(horizon, dt)).unwrap();
    assert_eq!(run.len(), sched.times.len());
    let worst = run
        .controls
        .iter()
        .zip(&sched.controls)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "path image and closed loop differ by {worst}");
}

#[test]
fn cubic_path_family_contracts() {
    let c = &cases()[1];
    let ctx = FeedbackContext::new(c.sys.clone(), c.cert.clone()).unwrap();
    let path = DiscretePath::straight(&[0.0], &[2.0], 32).unwrap();
    let sched = path_image_openloop(&ctx, &path, &|_| DVector::zeros(1), 5.0, 1e-2).unwrap();
    assert!(!sched.truncated);
    assert!(sched.spread.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(sched.spread.last().unwrap() < &(0.5 * sched.spread[0]));
}

#[test]
fn geodesic_feedback_shrinks_distance_on_state_dependent_metric() {
    let c = nonconstant();
    let geo = GeodesicOptions {
        segments: 16,
        ..Default::default()
    };
    let ctx = FeedbackContext::new(c.sys.clone(), c.cert.clone())
        .unwrap()
        .with_geodesic_options(geo.clone());
    let reference = Reference::Equilibrium {
        x: vec![0.0, 0.0],
        u: vec![0.0],
    };
    let mut opts = SimOptions::new(4.0, 1e-2);
    opts.domain = Some(c.cert.domain.clone());
    opts.distance = Some(DistanceSampling {
        metric: ctx.mf.clone(),
        geodesic: geo,
        interval: 0.1,
    });
    let run = simulate::simulate_closed_loop(&c.sys, &ctx, &reference, &[0.8, -0.6], &opts).unwrap();
    assert!(!run.flags.degraded && !run.flags.left_domain && !run.flags.blew_up);
    assert!(simulate::distance_nonincreasing(&run, 1e-3, 1e-9));
    let d = &run.distance;
    assert!(d.last().unwrap().1 < d[0].1 * (-0.1f64 * 3.5).exp());
}
