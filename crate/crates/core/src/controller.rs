//! Feedback laws built from a certificate: the geodesic path integral of
//! the differential gain, its constant-metric linear special case, the
//! open-loop path-image schedule, the guaranteed-cost bound, and an
//! optional search for an integrable explicit gain.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{self, DiscretePath, GeodesicOptions, GeometryError, MetricField};
use crate::linalg::nullspace_rref;
use crate::poly::{PolyMatrix, Polynomial};
use crate::sdp::{self, LmiBlock, SdpError, SdpOptions, SdpOutcome, SdpProblem};
use crate::synthesis::{monomial_basis, CcmCertificate, Mode};
use crate::system::ControlAffineSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("the certificate is not constant (basis degree > 0)")]
    NonConstantCertificate,
    #[error("operation needs a guaranteed_cost certificate, got {0}")]
    WrongMode(&'static str),
    #[error("certificate has {cert} states, system has {sys}")]
    DimensionMismatch { cert: usize, sys: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no integrable gain found in the given basis")]
    NotFound,
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Everything needed to evaluate the geodesic feedback.
#[derive(Debug, Clone)]
pub struct FeedbackContext {
    pub sys: ControlAffineSystem,
    pub cert: CcmCertificate,
    pub mf: MetricField,
    pub geodesic: GeodesicOptions,
    /// `R⁻¹Bᵀ` in guaranteed-cost mode, else `Bᵀ`.
    gain_factor: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackOutput {
    pub u: DVector<f64>,
    /// The straight segment replaced a geodesic that failed or did not
    /// converge, or the metric was evaluated at projected points.
    pub degraded: bool,
    pub out_of_domain: bool,
    /// Riemannian length of the path used.
    pub path_length: f64,
}

impl FeedbackContext {
    pub fn new(sys: ControlAffineSystem, cert: CcmCertificate) -> Result<Self, ControllerError> {
        if sys.n() != cert.n() {
            return Err(ControllerError::DimensionMismatch {
                cert: cert.n(),
                sys: sys.n(),
            });
        }
        let bt = sys.input_matrix().transpose();
        let gain_factor = match (cert.mode, &cert.r) {
            (Mode::GuaranteedCost, Some(r)) => {
                let rinv = r
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| ControllerError::InvalidArgument("R is singular".into()))?;
                rinv * bt
            }
            (Mode::GuaranteedCost, None) => {
                return Err(ControllerError::InvalidArgument(
                    "guaranteed_cost certificate lacks R".into(),
                ))
            }
            _ => bt,
        };
        let mf = MetricField::from_certificate(&cert)?;
        Ok(FeedbackContext {
            sys,
            cert,
            mf,
            geodesic: GeodesicOptions::default(),
            gain_factor,
        })
    }

    pub fn with_geodesic_options(mut self, opts: GeodesicOptions) -> Self {
        self.geodesic = opts;
        self
    }

    /// Differential gain `K(x)` given the metric there: `−½ρ(x)BᵀM` or,
    /// in guaranteed-cost mode, `−R⁻¹BᵀM`.
    pub fn gain_with_metric(&self, x: &[f64], m: &DMatrix<f64>) -> DMatrix<f64> {
        let scale = match self.cert.mode {
            Mode::GuaranteedCost => -1.0,
            _ => -0.5 * self.cert.rho_at(x),
        };
        &self.gain_factor * m * scale
    }

    pub fn gain_at(&self, x: &[f64]) -> Result<DMatrix<f64>, ControllerError> {
        let m = self.mf.metric_at(x)?;
        Ok(self.gain_with_metric(x, &m))
    }

    /// `Σₖ K(mₖ) Δₖ`, the midpoint rule for `∫₀¹ K(γ) γ_s ds`. Points outside
    /// the domain are projected for evaluation.
    pub fn path_integral(&self, path: &DiscretePath) -> Result<(DVector<f64>, bool), ControllerError> {
        let mut acc = DVector::zeros(self.sys.m());
        let mut projected = false;
        for k in 0..path.segments() {
            let mid = path.midpoint(k);
            let (m, p) = self.mf.metric_projected(mid.as_slice())?;
            projected |= p;
            let at = if p { self.mf.domain().clamp(mid.as_slice()) } else { mid.as_slice().to_vec() };
            acc += self.gain_with_metric(&at, &m) * path.delta(k);
        }
        Ok((acc, projected))
    }

    /// `u = u⋆ + ∫₀¹ K(γ) γ_s ds` along the geodesic from `x_star` to `x`.
    pub fn feedback(
        &self,
        x_star: &[f64],
        u_star: &[f64],
        x: &[f64],
    ) -> Result<FeedbackOutput, ControllerError> {
        let n = self.sys.n();
        if x.len() != n || x_star.len() != n || u_star.len() != self.sys.m() {
            return Err(ControllerError::InvalidArgument(format!(
                "expected states of length {n} and input of length {}",
                self.sys.m()
            )));
        }
        let u_star = DVector::from_column_slice(u_star);
        if x == x_star {
            return Ok(FeedbackOutput {
                u: u_star,
                degraded: false,
                out_of_domain: false,
                path_length: 0.0,
            });
        }
        let domain = self.mf.domain();
        let inside = domain.contains(x) && domain.contains(x_star);
        let mut degraded = false;
        let path = if inside && !self.mf.is_constant() {
            match geometry::geodesic(x_star, x, &self.mf, &self.geodesic) {
                Ok(g) if g.converged => g.path,
                Ok(g) => {
                    log::debug!("geodesic did not converge (gradient norm {:.3e})", g.gradient_norm);
                    degraded = true;
                    DiscretePath::straight(x_star, x, self.geodesic.segments)?
                }
                Err(e) => {
                    log::debug!("geodesic failed: {e}");
                    degraded = true;
                    DiscretePath::straight(x_star, x, self.geodesic.segments)?
                }
            }
        } else {
            DiscretePath::straight(x_star, x, self.geodesic.segments)?
        };
        let (du, projected) = self.path_integral(&path)?;
        let out_of_domain = !inside;
        let path_length = if projected {
            f64::NAN
        } else {
            geometry::path_length(&path, &self.mf)?
        };
        Ok(FeedbackOutput {
            u: u_star + du,
            degraded: degraded || projected,
            out_of_domain,
            path_length,
        })
    }

    /// `δᵀ(Ṁ + AᵀM + MA + MBK + KᵀBᵀM)δ` at `x` with the certificate's
    /// differential gain; `Ṁ` is the derivative along the drift.
    pub fn differential_decrease(&self, x: &[f64], delta: &[f64]) -> Result<f64, ControllerError> {
        let n = self.sys.n();
        let m = self.mf.metric_at(x)?;
        let f = self.sys.drift_at(x).map_err(|e| ControllerError::InvalidArgument(e.to_string()))?;
        let mut mdot = DMatrix::zeros(n, n);
        for i in 0..n {
            if f[i] != 0.0 {
                mdot += self.mf.metric_partial(x, i)? * f[i];
            }
        }
        let a = self.sys.jacobian().a.eval_unchecked(x);
        let bk = self.sys.input_matrix() * self.gain_with_metric(x, &m);
        let acl = a + bk;
        let q = mdot + acl.transpose() * &m + &m * acl;
        let d = DVector::from_column_slice(delta);
        Ok(d.dot(&(q * &d)))
    }
}

/// The constant-metric gain `K = −½ρBᵀW⁻¹` (or `−R⁻¹BᵀW⁻¹`), so that
/// `u = u⋆ + K(x − x⋆)`.
pub fn linear_gain(
    sys: &ControlAffineSystem,
    cert: &CcmCertificate,
) -> Result<DMatrix<f64>, ControllerError> {
    if !cert.is_constant() {
        return Err(ControllerError::NonConstantCertificate);
    }
    let ctx = FeedbackContext::new(sys.clone(), cert.clone())?;
    ctx.gain_at(&cert.domain.center())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleSource {
    PathImage,
    Recorded,
}

/// Open-loop input samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub times: Vec<f64>,
    pub controls: Vec<DVector<f64>>,
    pub source: ScheduleSource,
    /// `max_s |γ(s,t) − γ(0,t)|` at each time (path-image schedules).
    pub spread: Vec<f64>,
    /// The horizon was cut short because a path point left the domain or
    /// became non-finite.
    pub truncated: bool,
}

impl ControlSchedule {
    pub fn to_csv(&self) -> String {
        let m = self.controls.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for i in 1..=m {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for (t, u) in self.times.iter().zip(&self.controls) {
            let _ = write!(out, "{t}");
            for v in u.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Per-point controls `u(s_k) = u⋆ + Σ_{j<k} K(m_j)Δ_j` for a path family.
fn family_controls(
    ctx: &FeedbackContext,
    pts: &[DVector<f64>],
    u_star: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, ControllerError> {
    let mut out = Vec::with_capacity(pts.len());
    let mut acc = u_star.clone();
    out.push(acc.clone());
    for k in 0..pts.len() - 1 {
        let mid = (&pts[k + 1] + &pts[k]) * 0.5;
        let m = ctx.mf.metric_at(mid.as_slice())?;
        acc += ctx.gain_with_metric(mid.as_slice(), &m) * (&pts[k + 1] - &pts[k]);
        out.push(acc.clone());
    }
    Ok(out)
}

/// Per-point state derivatives and controls.
type FamilyRhs = (Vec<DVector<f64>>, Vec<DVector<f64>>);

fn family_rhs(
    ctx: &FeedbackContext,
    pts: &[DVector<f64>],
    u_star: &DVector<f64>,
) -> Result<FamilyRhs, ControllerError> {
    let us = family_controls(ctx, pts, u_star)?;
    let b = ctx.sys.input_matrix();
    let dx = pts
        .iter()
        .zip(&us)
        .map(|(p, u)| {
            ctx.sys
                .drift_at(p.as_slice())
                .map(|f| f + b * u)
                .map_err(|e| ControllerError::InvalidArgument(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((dx, us))
}

/// Flows every point of `initial_path` forward under its own path-integral
/// control (RK4, the family re-integrated at every stage) and returns the
/// control applied at `s = 1`.
pub fn path_image_openloop(
    ctx: &FeedbackContext,
    initial_path: &DiscretePath,
    u_star: &dyn Fn(f64) -> DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<ControlSchedule, ControllerError> {
    if !(dt > 0.0 && horizon >= dt) {
        return Err(ControllerError::InvalidArgument(format!(
            "need dt > 0 and horizon >= dt, got dt = {dt}, horizon = {horizon}"
        )));
    }
    let steps = (horizon / dt).round() as usize;
    let mut pts = initial_path.points().to_vec();
    let spread = |p: &[DVector<f64>]| p.iter().map(|q| (q - &p[0]).norm()).fold(0.0, f64::max);
    let mut sched = ControlSchedule {
        times: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        source: ScheduleSource::PathImage,
        spread: Vec::with_capacity(steps + 1),
        truncated: false,
    };
    let domain = ctx.mf.domain().clone();
    let axpy = |p: &[DVector<f64>], k: &[DVector<f64>], h: f64| -> Vec<DVector<f64>> {
        p.iter().zip(k).map(|(a, b)| a + b * h).collect()
    };
    for step in 0..=steps {
        let t = step as f64 * dt;
        let (k1, us) = family_rhs(ctx, &pts, &u_star(t))?;
        sched.times.push(t);
        sched.controls.push(us[us.len() - 1].clone());
        sched.spread.push(spread(&pts));
        if step == steps {
            break;
        }
        let (k2, _) = family_rhs(ctx, &axpy(&pts, &k1, 0.5 * dt), &u_star(t + 0.5 * dt))?;
        let (k3, _) = family_rhs(ctx, &axpy(&pts, &k2, 0.5 * dt), &u_star(t + 0.5 * dt))?;
        let (k4, _) = family_rhs(ctx, &axpy(&pts, &k3, dt), &u_star(t + dt))?;
        let next: Vec<DVector<f64>> = (0..pts.len())
            .map(|i| &pts[i] + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (dt / 6.0))
            .collect();
        if next
            .iter()
            .any(|p| p.iter().any(|v| !v.is_finite()) || !domain.contains(p.as_slice()))
        {
            sched.truncated = true;
            break;
        }
        pts = next;
    }
    Ok(sched)
}

/// Geodesic energy from `x_star0` to `x0`: the guaranteed-cost bound on
/// `∫ (x−x⋆)ᵀQ(x−x⋆) + (u−u⋆)ᵀR(u−u⋆) dt`.
pub fn cost_bound(ctx: &FeedbackContext, x0: &[f64], x_star0: &[f64]) -> Result<f64, ControllerError> {
    if ctx.cert.mode != Mode::GuaranteedCost {
        return Err(ControllerError::WrongMode(ctx.cert.mode.as_str()));
    }
    Ok(geometry::geodesic(x_star0, x0, &ctx.mf, &ctx.geodesic)?.energy)
}

/// A gain field `K(x) = ∂k/∂x` with its integral `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitGain {
    /// `K(x)`, m×n.
    pub gain: PolyMatrix,
    /// `k(x)` with `∂k/∂x = K`, m entries.
    pub k: Vec<Polynomial>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitGainOptions {
    /// Total degree of the entries of `K(x)`.
    pub degree: u32,
    pub grid: usize,
    pub margin: f64,
    pub coefficient_bound: f64,
    /// Impose `0 = f(x⋆) + B k(x⋆)` at this equilibrium.
    pub pin_equilibrium: Option<Vec<f64>>,
}

impl Default for ExplicitGainOptions {
    fn default() -> Self {
        ExplicitGainOptions {
            degree: 0,
            grid: 9,
            margin: 1e-6,
            coefficient_bound: 1e3,
            pin_equilibrium: None,
        }
    }
}

/// `∫₀¹ c (tx)^α x_j dt = c x^α x_j / (|α| + 1)`, summed over the row.
fn radial_integral(row: &[Polynomial]) -> Polynomial {
    let n = row.len();
    let mut out = Polynomial::zero(n);
    for (j, p) in row.iter().enumerate() {
        let xj = Polynomial::var(n, j).expect("in range");
        for (e, c) in p.terms() {
            let deg: u32 = e.iter().sum();
            let term = Polynomial::monomial(e.to_vec(), c / (deg as f64 + 1.0));
            out = &out + &(&term * &xj);
        }
    }
    out
}

/// Searches for `K(x)` in a polynomial basis with symmetric row Jacobians
/// (so each row is a gradient) and `Ṁ + (A+BK)ᵀM + M(A+BK) ⪯ −εI` on a grid.
pub fn explicit_gain_synthesis(
    sys: &ControlAffineSystem,
    cert: &CcmCertificate,
    opts: &ExplicitGainOptions,
) -> Result<ExplicitGain, ControllerError> {
    let n = sys.n();
    let m_in = sys.m();
    let mf = MetricField::from_certificate(cert)?;
    let basis = monomial_basis(n, opts.degree);
    let kb = basis.len();
    let nraw = m_in * n * kb;
    let var = |i: usize, j: usize, k: usize| (i * n + j) * kb + k;

    // Exact equalities ∂K_ij/∂x_l = ∂K_il/∂x_j by coefficient matching.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut row_index = std::collections::BTreeMap::new();
    for i in 0..m_in {
        for j in 0..n {
            for l in (j + 1)..n {
                for (k, phi) in basis.iter().enumerate() {
                    for (sign, (a, b)) in [(1.0, (j, l)), (-1.0, (l, j))] {
                        for (e, c) in phi.diff(b).expect("in range").terms() {
                            let key = (i, j, l, e.to_vec());
                            let next = row_index.len();
                            let r = *row_index.entry(key).or_insert(next);
                            if r == rows.len() {
                                rows.push(Vec::new());
                            }
                            rows[r].push((var(i, a, k), sign * c));
                        }
                    }
                }
            }
        }
    }
    let free: Vec<DVector<f64>> = if rows.is_empty() {
        (0..nraw)
            .map(|c| {
                let mut v = DVector::zeros(nraw);
                v[c] = 1.0;
                v
            })
            .collect()
    } else {
        let mut a = DMatrix::zeros(rows.len(), nraw);
        for (r, entries) in rows.iter().enumerate() {
            for &(c, v) in entries {
                a[(r, c)] += v;
            }
        }
        nullspace_rref(&a, 1e-12)
    };
    if free.is_empty() {
        return Err(ControllerError::NotFound);
    }
    let gain_of = |z: &[f64]| -> PolyMatrix {
        let mut coeffs = DVector::zeros(nraw);
        for (v, &zk) in free.iter().zip(z) {
            coeffs += v * zk;
        }
        let mut g = PolyMatrix::zeros(m_in, n, n);
        for i in 0..m_in {
            for j in 0..n {
                let mut p = Polynomial::zero(n);
                for (k, phi) in basis.iter().enumerate() {
                    let c = coeffs[var(i, j, k)];
                    if c != 0.0 {
                        p = &p + &phi.scale(c);
                    }
                }
                g.set(i, j, p);
            }
        }
        g
    };

    let b = sys.input_matrix();
    let a_poly = sys.jacobian().a;
    let mut prob = SdpProblem::new(free.len());
    for x in cert.domain.grid(opts.grid) {
        let m = mf.metric_at(&x)?;
        let f = sys.drift_at(&x).map_err(|e| ControllerError::InvalidArgument(e.to_string()))?;
        let mut mdot = DMatrix::zeros(n, n);
        for i in 0..n {
            if f[i] != 0.0 {
                mdot += mf.metric_partial(&x, i)? * f[i];
            }
        }
        let a = a_poly.eval_unchecked(&x);
        let mut c0 = -(mdot + a.transpose() * &m + &m * &a);
        for d in 0..n {
            c0[(d, d)] -= opts.margin;
        }
        let phi: Vec<f64> = basis.iter().map(|p| p.eval_unchecked(&x)).collect();
        let coeffs = free
            .iter()
            .enumerate()
            .map(|(z, v)| {
                let mut kx = DMatrix::zeros(m_in, n);
                for i in 0..m_in {
                    for j in 0..n {
                        for k in 0..kb {
                            kx[(i, j)] += v[var(i, j, k)] * phi[k];
                        }
                    }
                }
                let mbk = &m * b * kx;
                (z, -(&mbk + mbk.transpose()))
            })
            .collect();
        prob.add_block(LmiBlock::new(c0, coeffs)?)?;
    }
    for z in 0..free.len() {
        prob.set_bounds(z, Some(-opts.coefficient_bound), Some(opts.coefficient_bound))?;
    }
    let point = match sdp::solve_feasibility(&prob, &SdpOptions::default())? {
        SdpOutcome::Feasible(p) => p,
        SdpOutcome::Infeasible(_) => return Err(ControllerError::NotFound),
    };
    let gain = gain_of(&point.y);
    let mut k: Vec<Polynomial> = (0..m_in)
        .map(|i| {
            let row: Vec<Polynomial> = (0..n).map(|j| gain.get(i, j).clone()).collect();
            radial_integral(&row)
        })
        .collect();
    if let Some(xs) = &opts.pin_equilibrium {
        if xs.len() != n {
            return Err(ControllerError::InvalidArgument("equilibrium has wrong length".into()));
        }
        let f = sys.drift_at(xs).map_err(|e| ControllerError::InvalidArgument(e.to_string()))?;
        let kx = DVector::from_iterator(m_in, k.iter().map(|p| p.eval_unchecked(xs)));
        // Constant offset c with B(k(x⋆) + c) = −f(x⋆), least squares.
        let rhs = -(f + b * &kx);
        let svd = b.clone().svd(true, true);
        let c = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| ControllerError::InvalidArgument(e.to_string()))?;
        if (b * &c - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            return Err(ControllerError::InvalidArgument(
                "f(x*) is not in the range of B; no input holds this equilibrium".into(),
            ));
        }
        for (p, ci) in k.iter_mut().zip(c.iter()) {
            *p = &*p + &Polynomial::constant(n, *ci);
        }
    }
    Ok(ExplicitGain {
        gain,
        k,
        margin: point.min_margin,
    })
}
