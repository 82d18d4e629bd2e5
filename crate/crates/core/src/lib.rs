//! Control contraction metrics for polynomial control-affine systems.
//!
//! The pipeline: describe a system ([`system`]), synthesize a dual metric
//! `W(x)` and multiplier `ρ(x)` from pointwise LMIs on a state-space grid
//! ([`synthesis`], solved by [`sdp`]), then use `M(x) = W(x)⁻¹` to compute
//! geodesics ([`geometry`]) and integrate the differential feedback along
//! them ([`controller`]). [`simulate`] closes the loop.

// `!(a < b)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod config;
pub mod controller;
pub mod document;
pub mod geometry;
pub mod linalg;
pub mod poly;
pub mod sampling;
pub mod scenario;
pub mod sdp;
pub mod simulate;
pub mod synthesis;
pub mod system;

pub use poly::{Monomial, PolyError, PolyMatrix, Polynomial};
pub use system::{ControlAffineSystem, DifferentialDynamics, SystemError};
pub use synthesis::{synthesize, verify_certificate, CcmCertificate, Domain, Mode, SynthesisConfig, SynthesisError};
pub use geometry::{geodesic, riemann_distance, DiscretePath, GeodesicOptions, MetricField};
pub use controller::{FeedbackContext, linear_gain};
pub use simulate::{simulate_closed_loop, Reference, SimOptions, SimResult};
