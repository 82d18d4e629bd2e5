//! Config-driven closed-loop runs with the standard checks.

use thiserror::Error;

use crate::config::{ConfigError, ControllerKind, RunConfig};
use crate::controller::{self, ControllerError, FeedbackContext};
use crate::geometry::{GeodesicOptions, MetricField};
use crate::simulate::{
    self, DistanceSampling, LinearFeedback, SimError, SimOptions, SimResult, SimSummary,
};
use crate::synthesis::{CcmCertificate, Mode};
use crate::system::ControlAffineSystem;

/// Guaranteed-cost runs stop once the error is below this and are capped
/// at `GCC_MAX_HORIZON`.
pub const GCC_TAIL: f64 = 1e-6;
pub const GCC_MAX_HORIZON: f64 = 50.0;
/// Relative slack allowed between consecutive distance samples.
pub const DISTANCE_SLACK: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config has no simulation block")]
    NoSimulation,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub result: SimResult,
    pub summary: SimSummary,
    /// All checks passed.
    pub pass: bool,
    /// Blow-up, domain exit, or a degraded controller evaluation.
    pub degraded: bool,
}

pub fn run_simulation(
    cfg: &RunConfig,
    sys: &ControlAffineSystem,
    cert: &CcmCertificate,
) -> Result<ScenarioOutcome, ScenarioError> {
    let sim = cfg.simulation.as_ref().ok_or(ScenarioError::NoSimulation)?;
    let reference = cfg.reference(sys)?;
    let geo = GeodesicOptions {
        segments: sim.geodesic_segments.max(2),
        ..Default::default()
    };
    let ctx = FeedbackContext::new(sys.clone(), cert.clone())?.with_geodesic_options(geo.clone());
    let linear;
    let ctl: &dyn simulate::Controller = match sim.controller {
        ControllerKind::Geodesic => &ctx,
        ControllerKind::Linear => {
            linear = LinearFeedback {
                k: controller::linear_gain(sys, cert)?,
            };
            &linear
        }
    };
    let gcc = cert.mode == Mode::GuaranteedCost;
    let mut opts = SimOptions::new(sim.t_final, sim.dt);
    opts.domain = Some(cert.domain.clone());
    opts.stop_below_error = sim.stop_below_error;
    if gcc {
        opts.t_final = opts.t_final.min(GCC_MAX_HORIZON);
        opts.stop_below_error.get_or_insert(GCC_TAIL);
    }
    if sim.distance_interval > 0.0 {
        opts.distance = Some(DistanceSampling {
            metric: MetricField::from_certificate(cert).map_err(ControllerError::from)?,
            geodesic: geo,
            interval: sim.distance_interval,
        });
    }
    let result = simulate::simulate_closed_loop(sys, ctl, &reference, &sim.x0, &opts)?;
    let mut summary = SimSummary::from_result(&result);
    let k_max = simulate::default_k_max(cert.alpha1, cert.alpha2);
    let envelope = simulate::check_exponential_envelope(&result, cert.lambda, k_max);
    summary.envelope = Some(envelope);
    let mut pass = envelope.passes;
    if opts.distance.is_some() {
        let ok = simulate::distance_nonincreasing(&result, DISTANCE_SLACK, 1e-9);
        summary.distance_nonincreasing = Some(ok);
        pass &= ok;
    }
    if gcc {
        let (q, r) = (cert.q.as_ref(), cert.r.as_ref());
        let (xs0, _) = reference.sample(0.0);
        let bound = controller::cost_bound(&ctx, &sim.x0, xs0.as_slice()).ok();
        let cost = match (q, r) {
            (Some(q), Some(r)) => simulate::accumulated_cost(&result, q, r, GCC_TAIL).ok(),
            _ => None,
        };
        summary.cost = cost;
        summary.cost_bound = bound;
        pass &= matches!((cost, bound), (Some(j), Some(b)) if j <= b);
    }
    let f = result.flags;
    Ok(ScenarioOutcome {
        degraded: f.degraded || f.left_domain || f.blew_up,
        pass,
        summary,
        result,
    })
}
