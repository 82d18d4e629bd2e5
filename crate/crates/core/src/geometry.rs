//! Riemannian quantities for the metric `M(x) = W(x)⁻¹`: pointwise
//! evaluation, discrete path energy and length, and geodesics by direct
//! energy minimization.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::linalg::symmetrize;
use crate::poly::PolyMatrix;
use crate::synthesis::{CcmCertificate, Domain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("W(x) is not positive definite at {point:?}; the point is likely outside the certified domain")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("endpoint {point:?} lies outside the certified domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("a path needs at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("non-finite value in path or metric")]
    NonFinite,
}

/// Evaluator for `M(x) = W(x)⁻¹` and its partial derivatives.
#[derive(Debug, Clone)]
pub struct MetricField {
    w: PolyMatrix,
    dw: Vec<PolyMatrix>,
    domain: Domain,
    constant: Option<DMatrix<f64>>,
}

impl MetricField {
    pub fn new(w: PolyMatrix, domain: Domain) -> Result<Self, GeometryError> {
        let n = w.rows();
        if w.cols() != n || w.nvars() != n || domain.dim() != n {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: domain.dim(),
            });
        }
        let dw = (0..n).map(|i| w.diff(i).expect("index in range")).collect();
        let mut mf = MetricField {
            w,
            dw,
            domain,
            constant: None,
        };
        if mf.w.is_constant() {
            let c = mf.domain.center();
            mf.constant = Some(mf.invert(&c)?);
        }
        Ok(mf)
    }

    pub fn from_certificate(cert: &CcmCertificate) -> Result<Self, GeometryError> {
        Self::new(cert.w.clone(), cert.domain.clone())
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn w_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.w.eval_unchecked(x)
    }

    fn invert(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let w = symmetrize(&self.w.eval_unchecked(x));
        if w.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        match Cholesky::new(w) {
            Some(ch) => Ok(symmetrize(&ch.inverse())),
            None => Err(GeometryError::NotPositiveDefinite { point: x.to_vec() }),
        }
    }

    /// `M(x)`, symmetric, via a Cholesky factorization of `W(x)`.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match &self.constant {
            Some(m) => Ok(m.clone()),
            None => self.invert(x),
        }
    }

    /// `M` at the projection of `x` onto the domain, and whether a projection
    /// took place.
    pub fn metric_projected(&self, x: &[f64]) -> Result<(DMatrix<f64>, bool), GeometryError> {
        if self.domain.contains(x) {
            Ok((self.metric_at(x)?, false))
        } else {
            Ok((self.metric_at(&self.domain.clamp(x))?, true))
        }
    }

    /// `∂M/∂xᵢ = −M (∂W/∂xᵢ) M`.
    pub fn metric_partial(&self, x: &[f64], i: usize) -> Result<DMatrix<f64>, GeometryError> {
        let m = self.metric_at(x)?;
        if self.dw[i].is_zero() {
            return Ok(DMatrix::zeros(self.dim(), self.dim()));
        }
        Ok(symmetrize(&(-(&m * self.dw[i].eval_unchecked(x) * &m))))
    }

    /// `∂M/∂xᵢ` by central differences with step `h`.
    pub fn metric_partial_fd(&self, x: &[f64], i: usize, h: f64) -> Result<DMatrix<f64>, GeometryError> {
        if self.dw[i].is_zero() {
            return Ok(DMatrix::zeros(self.dim(), self.dim()));
        }
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        Ok((self.metric_at(&xp)? - self.metric_at(&xm)?) / (2.0 * h))
    }
}

/// Samples `γ(s_k)`, `s_k = k/N`, of a path with fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    points: Vec<DVector<f64>>,
}

impl DiscretePath {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self, GeometryError> {
        if points.len() < 3 {
            return Err(GeometryError::TooFewSegments(points.len().saturating_sub(1)));
        }
        let n = points[0].len();
        for p in &points {
            if p.len() != n {
                return Err(GeometryError::DimensionMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
        }
        Ok(DiscretePath { points })
    }

    /// The straight segment from `x1` to `x2` with `segments` pieces. Its end
    /// point is `x2` exactly.
    pub fn straight(x1: &[f64], x2: &[f64], segments: usize) -> Result<Self, GeometryError> {
        if x1.len() != x2.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: x1.len(),
                got: x2.len(),
            });
        }
        if segments < 2 {
            return Err(GeometryError::TooFewSegments(segments));
        }
        let a = DVector::from_column_slice(x1);
        let b = DVector::from_column_slice(x2);
        let mut pts: Vec<DVector<f64>> = (0..segments)
            .map(|k| &a + (&b - &a) * (k as f64 / segments as f64))
            .collect();
        pts.push(b);
        Self::new(pts)
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.points[self.points.len() - 1]
    }

    pub fn delta(&self, k: usize) -> DVector<f64> {
        &self.points[k + 1] - &self.points[k]
    }

    pub fn midpoint(&self, k: usize) -> DVector<f64> {
        (&self.points[k + 1] + &self.points[k]) * 0.5
    }

    pub fn reversed(&self) -> Self {
        let mut pts = self.points.clone();
        pts.reverse();
        DiscretePath { points: pts }
    }

    /// CSV with header `s,x1,...,xn`.
    pub fn to_csv(&self) -> String {
        let n = self.points[0].len();
        let nseg = self.segments() as f64;
        let mut out = String::from("s");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        for (k, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{}", k as f64 / nseg);
            for v in p.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn segment_quadratic(path: &DiscretePath, mf: &MetricField, k: usize) -> Result<f64, GeometryError> {
    let d = path.delta(k);
    let m = mf.metric_at(path.midpoint(k).as_slice())?;
    Ok(d.dot(&(&m * &d)))
}

/// `Σ_k N ΔₖᵀM(mₖ)Δₖ` with `mₖ` the segment midpoint.
pub fn path_energy(path: &DiscretePath, mf: &MetricField) -> Result<f64, GeometryError> {
    let n = path.segments() as f64;
    let mut e = 0.0;
    for k in 0..path.segments() {
        e += n * segment_quadratic(path, mf, k)?;
    }
    Ok(e)
}

/// `Σ_k √(ΔₖᵀM(mₖ)Δₖ)`.
pub fn path_length(path: &DiscretePath, mf: &MetricField) -> Result<f64, GeometryError> {
    let mut l = 0.0;
    for k in 0..path.segments() {
        l += segment_quadratic(path, mf, k)?.max(0.0).sqrt();
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicOptions {
    pub segments: usize,
    pub max_iter: usize,
    /// Stop when the energy gradient norm is at most `tol · (1 + E)`.
    pub tol: f64,
    /// Finite-difference step for metric derivatives; defaults to
    /// `1e-5 ×` the domain's largest half-width.
    pub fd_step: Option<f64>,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            segments: 32,
            max_iter: 200,
            tol: 1e-9,
            fd_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub path: DiscretePath,
    pub energy: f64,
    pub length: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// An iterate was projected back onto the domain box.
    pub projected: bool,
}

fn check_endpoint(mf: &MetricField, x: &[f64]) -> Result<(), GeometryError> {
    if x.len() != mf.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: mf.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if !mf.domain().contains(x) {
        return Err(GeometryError::OutsideDomain { point: x.to_vec() });
    }
    Ok(())
}

/// Energy and its gradient with respect to the interior points.
/// Energy, its gradient in the interior points, and the midpoint metrics.
type EnergyEval = (f64, DVector<f64>, Vec<DMatrix<f64>>);

fn energy_and_gradient(
    pts: &[DVector<f64>],
    mf: &MetricField,
    h: f64,
) -> Result<EnergyEval, GeometryError> {
    let nseg = pts.len() - 1;
    let n = mf.dim();
    let nf = nseg as f64;
    let mut energy = 0.0;
    let mut grad = DVector::zeros(n * (nseg - 1));
    let mut metrics = Vec::with_capacity(nseg);
    for k in 0..nseg {
        let d = &pts[k + 1] - &pts[k];
        let mid = (&pts[k + 1] + &pts[k]) * 0.5;
        let m = mf.metric_at(mid.as_slice())?;
        let md = &m * &d;
        energy += nf * d.dot(&md);
        // ∂/∂mid of N dᵀM(mid)d, shared half-and-half by both endpoints.
        let mut dmid = DVector::zeros(n);
        if !mf.is_constant() {
            for i in 0..n {
                let dm = mf.metric_partial_fd(mid.as_slice(), i, h)?;
                dmid[i] = nf * d.dot(&(&dm * &d));
            }
        }
        if k >= 1 {
            let mut g = grad.rows_mut((k - 1) * n, n);
            g -= &md * (2.0 * nf);
            g += &dmid * 0.5;
        }
        if k + 1 < nseg {
            let mut g = grad.rows_mut(k * n, n);
            g += &md * (2.0 * nf);
            g += &dmid * 0.5;
        }
        metrics.push(m);
    }
    if !energy.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    Ok((energy, grad, metrics))
}

fn gauss_newton_hessian(metrics: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let nseg = metrics.len();
    let nf = nseg as f64;
    let dim = n * (nseg - 1);
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..nseg - 1 {
        let diag = (&metrics[j] + &metrics[j + 1]) * (2.0 * nf);
        h.view_mut((j * n, j * n), (n, n)).copy_from(&diag);
        if j + 1 < nseg - 1 {
            let off = &metrics[j + 1] * (-2.0 * nf);
            h.view_mut((j * n, (j + 1) * n), (n, n)).copy_from(&off);
            h.view_mut(((j + 1) * n, j * n), (n, n)).copy_from(&off);
        }
    }
    h
}

/// Minimizes the discrete energy over interior points, starting from the
/// straight segment. The result never has more energy than that segment.
pub fn geodesic(
    x1: &[f64],
    x2: &[f64],
    mf: &MetricField,
    opts: &GeodesicOptions,
) -> Result<Geodesic, GeometryError> {
    check_endpoint(mf, x1)?;
    check_endpoint(mf, x2)?;
    let mut path = DiscretePath::straight(x1, x2, opts.segments)?;
    let n = mf.dim();
    let h = opts.fd_step.unwrap_or(1e-5 * mf.domain().scale());
    if x1 == x2 || mf.is_constant() {
        let energy = path_energy(&path, mf)?;
        let length = path_length(&path, mf)?;
        return Ok(Geodesic {
            path,
            energy,
            length,
            iterations: 0,
            gradient_norm: 0.0,
            converged: true,
            projected: false,
        });
    }

    let nseg = opts.segments;
    let mut pts = path.points.clone();
    let (mut energy, mut grad, mut metrics) = energy_and_gradient(&pts, mf, h)?;
    let mut converged = false;
    let mut projected = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if grad.norm() <= opts.tol * (1.0 + energy) {
            converged = true;
            break;
        }
        iterations += 1;
        let hess = gauss_newton_hessian(&metrics, n);
        let step = match Cholesky::new(hess) {
            Some(ch) => -ch.solve(&grad),
            None => -&grad,
        };
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-10 {
            let mut trial = pts.clone();
            let mut was_projected = false;
            for j in 1..nseg {
                let p = &pts[j] + step.rows((j - 1) * n, n) * alpha;
                let c = mf.domain().clamp(p.as_slice());
                if c.as_slice() != p.as_slice() {
                    was_projected = true;
                }
                trial[j] = DVector::from_vec(c);
            }
            if let Ok((e, g, m)) = energy_and_gradient(&trial, mf, h) {
                if e < energy && e <= energy + 1e-4 * alpha * slope {
                    accepted = Some((trial, e, g, m, was_projected));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((p, e, g, m, pr)) => {
                pts = p;
                energy = e;
                grad = g;
                metrics = m;
                projected |= pr;
            }
            None => {
                // No descent available at working precision.
                converged = grad.norm() <= 1e3 * opts.tol * (1.0 + energy);
                break;
            }
        }
    }
    path = DiscretePath { points: pts };
    let length = path_length(&path, mf)?;
    Ok(Geodesic {
        path,
        energy,
        length,
        iterations,
        gradient_norm: grad.norm(),
        converged,
        projected,
    })
}

/// Length of the computed geodesic.
pub fn riemann_distance(
    x1: &[f64],
    x2: &[f64],
    mf: &MetricField,
    opts: &GeodesicOptions,
) -> Result<f64, GeometryError> {
    Ok(geodesic(x1, x2, mf, opts)?.length)
}
