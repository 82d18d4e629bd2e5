//! Closed-loop RK4 simulation against reference solutions, with envelope,
//! distance and cost instrumentation.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerError, FeedbackContext};
use crate::geometry::{self, GeodesicOptions, MetricField};
use crate::synthesis::Domain;
use crate::system::ControlAffineSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),
    #[error("reference violates the dynamics: residual {residual:.3e} at t = {time}")]
    InfeasibleReference { residual: f64, time: f64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("cost accumulation rejected: {0}")]
    CostRejected(String),
}

/// A solution `(x⋆(t), u⋆(t))` of the open-loop system.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Equilibrium {
        x: Vec<f64>,
        u: Vec<f64>,
    },
    /// `x⋆ = x₀ + a sin ωt + b cos ωt`, `u⋆ = u₀ + c sin ωt + d cos ωt`.
    Harmonic {
        omega: f64,
        x_offset: Vec<f64>,
        x_sin: Vec<f64>,
        x_cos: Vec<f64>,
        u_offset: Vec<f64>,
        u_sin: Vec<f64>,
        u_cos: Vec<f64>,
    },
    /// Cubic Hermite interpolation of states with the given slopes; piecewise
    /// linear controls.
    Tabulated {
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
        controls: Vec<Vec<f64>>,
    },
}

impl Reference {
    /// Tabulated samples of a solution; slopes are taken from the dynamics.
    pub fn tabulated(
        sys: &ControlAffineSystem,
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        controls: Vec<Vec<f64>>,
    ) -> Result<Self, SimError> {
        if times.len() < 2 || times.len() != states.len() || times.len() != controls.len() {
            return Err(SimError::InvalidSetup(
                "tabulated reference needs at least 2 samples and equal-length columns".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::InvalidSetup("reference times must increase strictly".into()));
        }
        let slopes = states
            .iter()
            .zip(&controls)
            .map(|(x, u)| {
                sys.eval_dynamics(x, u)
                    .map(|v| v.as_slice().to_vec())
                    .map_err(|e| SimError::InvalidSetup(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Reference::Tabulated {
            times,
            states,
            slopes,
            controls,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Reference::Equilibrium { x, u } => (x.len(), u.len()),
            Reference::Harmonic { x_offset, u_offset, .. } => (x_offset.len(), u_offset.len()),
            Reference::Tabulated { states, controls, .. } => (states[0].len(), controls[0].len()),
        }
    }

    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        match self {
            Reference::Equilibrium { x, u } => (DVector::from_column_slice(x), DVector::from_column_slice(u)),
            Reference::Harmonic {
                omega,
                x_offset,
                x_sin,
                x_cos,
                u_offset,
                u_sin,
                u_cos,
            } => {
                let (s, c) = (omega * t).sin_cos();
                let comb = |o: &[f64], a: &[f64], b: &[f64]| {
                    DVector::from_iterator(o.len(), (0..o.len()).map(|i| o[i] + a[i] * s + b[i] * c))
                };
                (comb(x_offset, x_sin, x_cos), comb(u_offset, u_sin, u_cos))
            }
            Reference::Tabulated {
                times,
                states,
                slopes,
                controls,
            } => {
                let last = times.len() - 1;
                let k = match times.partition_point(|&tk| tk <= t) {
                    0 => 0,
                    p => (p - 1).min(last - 1),
                };
                let h = times[k + 1] - times[k];
                let s = ((t - times[k]) / h).clamp(0.0, 1.0);
                let (h00, h10, h01, h11) = (
                    2.0 * s.powi(3) - 3.0 * s * s + 1.0,
                    s.powi(3) - 2.0 * s * s + s,
                    -2.0 * s.powi(3) + 3.0 * s * s,
                    s.powi(3) - s * s,
                );
                let n = states[0].len();
                let x = DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        h00 * states[k][i]
                            + h10 * h * slopes[k][i]
                            + h01 * states[k + 1][i]
                            + h11 * h * slopes[k + 1][i]
                    }),
                );
                let m = controls[0].len();
                let u = DVector::from_iterator(
                    m,
                    (0..m).map(|i| (1.0 - s) * controls[k][i] + s * controls[k + 1][i]),
                );
                (x, u)
            }
        }
    }

    /// Largest `|ẋ⋆ − f(x⋆) − Bu⋆|` over `times`, with `ẋ⋆` by central
    /// differences; returns the worst residual and where it occurs.
    pub fn dynamics_residual(&self, sys: &ControlAffineSystem, times: &[f64]) -> (f64, f64) {
        let h = 1e-4;
        let mut worst = (0.0, times.first().copied().unwrap_or(0.0));
        for &t in times {
            let (xp, _) = self.sample(t + h);
            let (xm, _) = self.sample(t - h);
            let (x, u) = self.sample(t);
            let xdot = (xp - xm) / (2.0 * h);
            let r = match sys.eval_dynamics(x.as_slice(), u.as_slice()) {
                Ok(f) => (xdot - f).amax(),
                Err(_) => f64::INFINITY,
            };
            if !(r <= worst.0) {
                worst = (r, t);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    pub degraded: bool,
    pub out_of_domain: bool,
}

/// A state-feedback law `u = k(t, x)` relative to a reference sample.
pub trait Controller {
    fn control(&self, t: f64, x: &[f64], x_star: &[f64], u_star: &[f64]) -> Result<ControlOutput, SimError>;
}

/// `u ≡ 0`.
pub struct ZeroInput {
    pub m: usize,
}

impl Controller for ZeroInput {
    fn control(&self, _t: f64, _x: &[f64], _xs: &[f64], _us: &[f64]) -> Result<ControlOutput, SimError> {
        Ok(ControlOutput {
            u: DVector::zeros(self.m),
            degraded: false,
            out_of_domain: false,
        })
    }
}

/// `u = u⋆ + K(x − x⋆)`.
pub struct LinearFeedback {
    pub k: DMatrix<f64>,
}

impl Controller for LinearFeedback {
    fn control(&self, _t: f64, x: &[f64], x_star: &[f64], u_star: &[f64]) -> Result<ControlOutput, SimError> {
        let e = DVector::from_column_slice(x) - DVector::from_column_slice(x_star);
        Ok(ControlOutput {
            u: DVector::from_column_slice(u_star) + &self.k * e,
            degraded: false,
            out_of_domain: false,
        })
    }
}

impl Controller for FeedbackContext {
    fn control(&self, _t: f64, x: &[f64], x_star: &[f64], u_star: &[f64]) -> Result<ControlOutput, SimError> {
        let out = self.feedback(x_star, u_star, x)?;
        Ok(ControlOutput {
            u: out.u,
            degraded: out.degraded,
            out_of_domain: out.out_of_domain,
        })
    }
}

/// Sampled Riemannian distance between reference and state.
#[derive(Debug, Clone)]
pub struct DistanceSampling {
    pub metric: MetricField,
    pub geodesic: GeodesicOptions,
    pub interval: f64,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t_final: f64,
    pub dt: f64,
    pub distance: Option<DistanceSampling>,
    /// End the run once `|x − x⋆|` drops below this.
    pub stop_below_error: Option<f64>,
    /// Domain used for the `left_domain` flag.
    pub domain: Option<Domain>,
    /// Tolerance on the reference dynamics residual.
    pub reference_tolerance: f64,
}

impl SimOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        SimOptions {
            t_final,
            dt,
            distance: None,
            stop_below_error: None,
            domain: None,
            reference_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimFlags {
    pub blew_up: bool,
    pub left_domain: bool,
    pub degraded: bool,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub ref_states: Vec<DVector<f64>>,
    pub ref_controls: Vec<DVector<f64>>,
    pub tracking_error: Vec<f64>,
    /// `(t, d(x⋆(t), x(t)))` at the sampling interval.
    pub distance: Vec<(f64, f64)>,
    pub flags: SimFlags,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }

    /// Header `t,x1..,u1..,xref1..,uref1..,error,distance`; the distance
    /// column is empty between samples.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let m = self.controls[0].len();
        let mut out = String::from("t");
        for (p, k) in [("x", n), ("u", m), ("xref", n), ("uref", m)] {
            for i in 1..=k {
                let _ = write!(out, ",{p}{i}");
            }
        }
        out.push_str(",error,distance\n");
        let mut dist = self.distance.iter().peekable();
        for k in 0..self.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in self.states[k]
                .iter()
                .chain(self.controls[k].iter())
                .chain(self.ref_states[k].iter())
                .chain(self.ref_controls[k].iter())
            {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(out, ",{},", self.tracking_error[k]);
            if let Some(&&(t, d)) = dist.peek() {
                if t == self.times[k] {
                    let _ = write!(out, "{d}");
                    dist.next();
                }
            }
            out.push('\n');
        }
        out
    }
}

fn rhs(
    sys: &ControlAffineSystem,
    ctl: &dyn Controller,
    reference: &Reference,
    t: f64,
    x: &DVector<f64>,
    flags: &mut SimFlags,
) -> Result<(DVector<f64>, DVector<f64>), SimError> {
    let (xs, us) = reference.sample(t);
    let out = ctl.control(t, x.as_slice(), xs.as_slice(), us.as_slice())?;
    flags.degraded |= out.degraded || out.out_of_domain;
    if out.u.len() != sys.m() {
        return Err(SimError::InvalidSetup("controller returned the wrong input size".into()));
    }
    let dx = sys
        .eval_dynamics(x.as_slice(), out.u.as_slice())
        .map_err(|e| SimError::InvalidSetup(e.to_string()))?;
    Ok((dx, out.u))
}

/// Classical RK4 with the controller evaluated at every stage.
pub fn simulate_closed_loop(
    sys: &ControlAffineSystem,
    ctl: &dyn Controller,
    reference: &Reference,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    let (dt, t_final) = (opts.dt, opts.t_final);
    if !(dt > 0.0 && t_final >= dt && t_final.is_finite()) {
        return Err(SimError::InvalidSetup(format!(
            "need dt > 0 and T >= dt, got dt = {dt}, T = {t_final}"
        )));
    }
    if x0.len() != sys.n() || reference.dims() != (sys.n(), sys.m()) {
        return Err(SimError::InvalidSetup("dimension mismatch among system, reference and x0".into()));
    }
    let steps = (t_final / dt).round() as usize;
    let check_times: Vec<f64> = {
        let count = (t_final / 0.1).ceil() as usize;
        (0..=count).map(|k| (k as f64 * 0.1).min(t_final)).collect()
    };
    let (res, at) = reference.dynamics_residual(sys, &check_times);
    if !(res <= opts.reference_tolerance) {
        return Err(SimError::InfeasibleReference { residual: res, time: at });
    }
    let dist_every = opts
        .distance
        .as_ref()
        .map(|d| ((d.interval / dt).round() as usize).max(1));

    let mut r = SimResult {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        ref_states: Vec::with_capacity(steps + 1),
        ref_controls: Vec::with_capacity(steps + 1),
        tracking_error: Vec::with_capacity(steps + 1),
        distance: Vec::new(),
        flags: SimFlags::default(),
    };
    let mut x = DVector::from_column_slice(x0);
    let mut flags = SimFlags::default();
    for step in 0..=steps {
        let t = step as f64 * dt;
        let (xs, us) = reference.sample(t);
        let (k1, u) = rhs(sys, ctl, reference, t, &x, &mut flags)?;
        let err = (&x - &xs).norm();
        if let Some(d) = &opts.domain {
            flags.left_domain |= !d.contains(x.as_slice());
        }
        if let (Some(ds), Some(every)) = (&opts.distance, dist_every) {
            if step % every == 0 {
                let d = geometry::riemann_distance(xs.as_slice(), x.as_slice(), &ds.metric, &ds.geodesic)
                    .unwrap_or(f64::NAN);
                r.distance.push((t, d));
            }
        }
        r.times.push(t);
        r.states.push(x.clone());
        r.controls.push(u);
        r.ref_states.push(xs);
        r.ref_controls.push(us);
        r.tracking_error.push(err);
        if step == steps {
            break;
        }
        if opts.stop_below_error.is_some_and(|tol| err < tol) {
            flags.stopped_early = true;
            break;
        }
        let (k2, _) = rhs(sys, ctl, reference, t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)), &mut flags)?;
        let (k3, _) = rhs(sys, ctl, reference, t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)), &mut flags)?;
        let (k4, _) = rhs(sys, ctl, reference, t + dt, &(&x + &k3 * dt), &mut flags)?;
        let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            flags.blew_up = true;
            log::warn!("state became non-finite after t = {t}; result truncated");
            break;
        }
        x = next;
    }
    r.flags = flags;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Smallest `K` with `|e(t)| ≤ K e^{−λt} |e(0)|` at every sample.
    pub k_fit: f64,
    pub k_max: f64,
    pub passes: bool,
}

/// Default bound `10·√(α₂/α₁)`.
pub fn default_k_max(alpha1: f64, alpha2: f64) -> f64 {
    10.0 * (alpha2 / alpha1).sqrt()
}

pub fn check_exponential_envelope(result: &SimResult, lambda: f64, k_max: f64) -> EnvelopeFit {
    let e0 = result.tracking_error.first().copied().unwrap_or(0.0);
    if e0 == 0.0 {
        return EnvelopeFit {
            k_fit: 0.0,
            k_max,
            passes: true,
        };
    }
    let k_fit = result
        .times
        .iter()
        .zip(&result.tracking_error)
        .map(|(t, e)| e * (lambda * t).exp() / e0)
        .fold(0.0, f64::max);
    EnvelopeFit {
        k_fit,
        k_max,
        passes: k_fit <= k_max && !result.flags.blew_up,
    }
}

/// Whether consecutive distance samples never grow by more than a factor
/// `1 + slack` (plus `abs_slack`).
pub fn distance_nonincreasing(result: &SimResult, slack: f64, abs_slack: f64) -> bool {
    result
        .distance
        .windows(2)
        .all(|w| w[1].1.is_finite() && w[1].1 <= w[0].1 * (1.0 + slack) + abs_slack)
}

/// Trapezoid rule for `∫ (x−x⋆)ᵀQ(x−x⋆) + (u−u⋆)ᵀR(u−u⋆) dt`. Rejected
/// when the run blew up or the final error exceeds `tail_tol`.
pub fn accumulated_cost(
    result: &SimResult,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tail_tol: f64,
) -> Result<f64, SimError> {
    if result.flags.blew_up {
        return Err(SimError::CostRejected("the run blew up".into()));
    }
    if result.is_empty() {
        return Err(SimError::CostRejected("empty run".into()));
    }
    let last = *result.tracking_error.last().expect("non-empty");
    if last > tail_tol {
        return Err(SimError::CostRejected(format!(
            "final tracking error {last:.3e} exceeds {tail_tol:.1e}; the tail is not negligible"
        )));
    }
    let rate: Vec<f64> = (0..result.len())
        .map(|k| {
            let e = &result.states[k] - &result.ref_states[k];
            let du = &result.controls[k] - &result.ref_controls[k];
            e.dot(&(q * &e)) + du.dot(&(r * &du))
        })
        .collect();
    Ok(result
        .times
        .windows(2)
        .zip(rate.windows(2))
        .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
        .sum())
}

/// Scalar diagnostics of a run, for the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub steps: usize,
    pub t_end: f64,
    pub final_error: f64,
    pub initial_error: f64,
    pub flags: SimFlags,
    pub envelope: Option<EnvelopeFit>,
    pub distance_nonincreasing: Option<bool>,
    pub cost: Option<f64>,
    pub cost_bound: Option<f64>,
}

impl SimSummary {
    pub fn from_result(r: &SimResult) -> Self {
        SimSummary {
            steps: r.len().saturating_sub(1),
            t_end: r.times.last().copied().unwrap_or(0.0),
            final_error: r.tracking_error.last().copied().unwrap_or(0.0),
            initial_error: r.tracking_error.first().copied().unwrap_or(0.0),
            flags: r.flags,
            envelope: None,
            distance_nonincreasing: None,
            cost: None,
            cost_bound: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_scalar() -> ControlAffineSystem {
        ControlAffineSystem::from_strings(&["-x1"], DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn origin(n: usize, m: usize) -> Reference {
        Reference::Equilibrium {
            x: vec![0.0; n],
            u: vec![0.0; m],
        }
    }

    #[test]
    fn free_decay_matches_exponential() {
        let sys = stable_scalar();
        let r = simulate_closed_loop(&sys, &ZeroInput { m: 1 }, &origin(1, 1), &[1.0], &SimOptions::new(1.0, 1e-3))
            .unwrap();
        assert_eq!(r.len(), 1001);
        assert!((r.final_state()[0] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn starting_on_reference_stays_there() {
        let sys = ControlAffineSystem::from_strings(&["x2", "0"], DMatrix::from_column_slice(2, 1, &[0.0, 1.0]))
            .unwrap();
        let reference = Reference::Harmonic {
            omega: 1.0,
            x_offset: vec![0.0, 0.0],
            x_sin: vec![1.0, 0.0],
            x_cos: vec![0.0, 1.0],
            u_offset: vec![0.0],
            u_sin: vec![-1.0],
            u_cos: vec![0.0],
        };
        let ctl = LinearFeedback {
            k: DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]),
        };
        let r = simulate_closed_loop(&sys, &ctl, &reference, &[0.0, 1.0], &SimOptions::new(5.0, 1e-3)).unwrap();
        assert!(r.tracking_error.iter().all(|&e| e <= 1e-6));
    }

    #[test]
    fn infeasible_reference_rejected() {
        let sys = stable_scalar();
        let bad = Reference::Equilibrium { x: vec![1.0], u: vec![0.0] };
        assert!(matches!(
            simulate_closed_loop(&sys, &ZeroInput { m: 1 }, &bad, &[1.0], &SimOptions::new(1.0, 0.01)),
            Err(SimError::InfeasibleReference { .. })
        ));
    }

    #[test]
    fn blow_up_is_truncated() {
        let sys = ControlAffineSystem::from_strings(&["x1^2"], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let r = simulate_closed_loop(&sys, &ZeroInput { m: 1 }, &origin(1, 1), &[1.0], &SimOptions::new(3.0, 1e-2))
            .unwrap();
        assert!(r.flags.blew_up);
        assert!(r.len() < 301);
    }

    #[test]
    fn envelope_fits() {
        let lambda = 0.7;
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let mut r = SimResult {
            tracking_error: times.iter().map(|t| (-lambda * t).exp()).collect(),
            times: times.clone(),
            states: vec![],
            controls: vec![],
            ref_states: vec![],
            ref_controls: vec![],
            distance: vec![],
            flags: SimFlags::default(),
        };
        let fit = check_exponential_envelope(&r, lambda, 2.0);
        assert!((fit.k_fit - 1.0).abs() < 1e-12 && fit.passes);
        r.tracking_error = times.iter().map(|t| (-2.0 * lambda * t).exp()).collect();
        assert!(check_exponential_envelope(&r, lambda, 2.0).k_fit <= 1.0);
        r.tracking_error = vec![0.0; times.len()];
        assert!(check_exponential_envelope(&r, lambda, 2.0).passes);
    }

    #[test]
    fn scalar_lqr_cost() {
        // ẋ = u, u = −x: J = ∫ 2x² = x₀².
        let sys = ControlAffineSystem::from_strings(&["0"], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let ctl = LinearFeedback {
            k: DMatrix::from_element(1, 1, -1.0),
        };
        let mut opts = SimOptions::new(50.0, 1e-3);
        opts.stop_below_error = Some(1e-7);
        let r = simulate_closed_loop(&sys, &ctl, &origin(1, 1), &[1.0], &opts).unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        let j = accumulated_cost(&r, &one, &one, 1e-6).unwrap();
        assert!((j - 1.0).abs() < 1e-3, "{j}");

        let r0 = simulate_closed_loop(&sys, &ctl, &origin(1, 1), &[0.0], &opts).unwrap();
        assert!(accumulated_cost(&r0, &one, &one, 1e-6).unwrap() <= 1e-8);

        let short = simulate_closed_loop(&sys, &ctl, &origin(1, 1), &[1.0], &SimOptions::new(1.0, 1e-2)).unwrap();
        assert!(accumulated_cost(&short, &one, &one, 1e-6).is_err());
    }

    #[test]
    fn tabulated_reference_interpolates_solution() {
        let sys = stable_scalar();
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let states = times.iter().map(|t| vec![(-t).exp()]).collect();
        let controls = times.iter().map(|_| vec![0.0]).collect();
        let r = Reference::tabulated(&sys, times, states, controls).unwrap();
        let (x, _) = r.sample(0.505);
        assert!((x[0] - (-0.505f64).exp()).abs() < 1e-9);
        let (res, _) = r.dynamics_residual(&sys, &[0.5, 1.0, 1.5]);
        assert!(res < 1e-6);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sys = stable_scalar();
        let r = simulate_closed_loop(&sys, &ZeroInput { m: 1 }, &origin(1, 1), &[1.0], &SimOptions::new(0.02, 0.01))
            .unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,u1,xref1,uref1,error,distance"));
        assert_eq!(lines.count(), 3);
    }
}
