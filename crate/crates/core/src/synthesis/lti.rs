//! Constant-metric special cases for linear systems `ẋ = Ax + Bu`.

use nalgebra::{Cholesky, DMatrix};

use super::SynthesisError;
use crate::linalg::{solve_lyapunov, symmetrize};
use crate::sdp::{self, LmiBlock, SdpOptions, SdpOutcome, SdpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct LtiCertificate {
    pub w: DMatrix<f64>,
    pub rho: f64,
    /// Smallest eigenvalue over `W` and `BBᵀ − AW − WAᵀ − εI` at the solution.
    pub margin: f64,
}

/// Strictness used by [`lti_stabilizability_check`].
pub const LTI_EPSILON: f64 = 1e-6;

/// Searches for `W ≻ 0` with `AW + WAᵀ − BBᵀ ⪯ −εI`. The multiplier `ρ` is
/// absorbed into the scale of `W` and reported as 1.
pub fn lti_stabilizability_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<LtiCertificate, SynthesisError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(SynthesisError::InvalidConfig(format!(
            "A must be square and B conformable, got A {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut pos = Vec::new();
    let mut lyap = Vec::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let mut e = DMatrix::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        lyap.push((k, -(a * &e + &e * a.transpose())));
        pos.push((k, e));
    }
    let mut prob = SdpProblem::new(pairs.len());
    prob.add_block(LmiBlock::new(DMatrix::zeros(n, n), pos)?)?;
    let c0 = b * b.transpose() - DMatrix::identity(n, n) * LTI_EPSILON;
    prob.add_block(LmiBlock::new(c0, lyap)?)?;
    for k in 0..pairs.len() {
        prob.set_bounds(k, Some(-1e3), Some(1e3))?;
    }
    let opts = SdpOptions::default();
    match sdp::solve_feasibility(&prob, &opts)? {
        SdpOutcome::Feasible(p) if p.min_margin > 0.0 => {
            let mut w = DMatrix::zeros(n, n);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                w[(i, j)] = p.y[k];
                w[(j, i)] = p.y[k];
            }
            Ok(LtiCertificate {
                w,
                rho: 1.0,
                margin: p.min_margin,
            })
        }
        other => {
            let (margin, inconclusive) = match &other {
                SdpOutcome::Infeasible(r) => (r.max_margin, r.inconclusive),
                SdpOutcome::Feasible(p) => (p.min_margin, false),
            };
            Err(SynthesisError::Infeasible(super::InfeasibleDiagnostics {
                max_margin: margin,
                worst_point: Vec::new(),
                worst_constraint: "A W + W A^T - B B^T < 0".into(),
                inconclusive,
            }))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// Stabilizing solution of `AᵀM + MA − MBR⁻¹BᵀM + Q = 0`.
    pub m: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Max-abs residual of the Riccati equation in `M`.
    pub residual: f64,
    /// Max-abs residual of `AW + WAᵀ − BR⁻¹Bᵀ + WQW = 0`.
    pub residual_w: f64,
}

fn care_residual(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * m + m * a - m * s * m + q
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Stabilizing Riccati solution from the stable invariant subspace of the
/// Hamiltonian `[[A, −S], [−Q, −Aᵀ]]`, `S = BR⁻¹Bᵀ`, polished by Newton
/// (Kleinman) iterations.
pub fn lti_gcc_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution, SynthesisError> {
    let n = a.nrows();
    let fail = |m: &str| Err(SynthesisError::InvalidConfig(m.to_string()));
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return fail("dimension mismatch among A, B, Q, R");
    }
    if Cholesky::new(symmetrize(q)).is_none() || Cholesky::new(symmetrize(r)).is_none() {
        return fail("Q and R must be positive definite");
    }
    let rinv = r.clone().try_inverse().expect("R positive definite");
    let s = b * rinv * b.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let eig = h.complex_eigenvalues();
    let stable: Vec<_> = eig.iter().filter(|l| l.re < 0.0).collect();
    if stable.len() != n {
        return fail("Hamiltonian has eigenvalues on the imaginary axis; no stabilizing solution");
    }
    // p(H) = Π (H − λI) over stable λ annihilates the stable invariant subspace.
    let id = DMatrix::<f64>::identity(2 * n, 2 * n);
    let mut p = id.clone();
    for l in &stable {
        let factor = if l.im.abs() < 1e-12 * (1.0 + l.norm()) {
            &h - &id * l.re
        } else if l.im > 0.0 {
            &h * &h - &h * (2.0 * l.re) + &id * l.norm_sqr()
        } else {
            continue;
        };
        p = factor * p;
        let s = p.amax();
        if s > 0.0 {
            p /= s;
        }
    }
    let svd = p.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut u = DMatrix::zeros(2 * n, n);
    for (c, &k) in order.iter().take(n).enumerate() {
        u.set_column(c, &vt.row(k).transpose());
    }
    let u1 = u.rows(0, n).into_owned();
    let u2 = u.rows(n, n).into_owned();
    let Some(u1inv) = u1.try_inverse() else {
        return fail("stable invariant subspace is not a graph; no stabilizing solution");
    };
    let mut m = symmetrize(&(u2 * u1inv));

    for _ in 0..20 {
        let res = care_residual(a, &s, q, &m);
        if res.amax() <= 1e-13 * m.amax().max(1.0) {
            break;
        }
        let acl = a - &s * &m;
        let rhs = -(q + &m * &s * &m);
        let Some(next) = solve_lyapunov(&acl, &rhs) else {
            break;
        };
        if care_residual(a, &s, q, &next).amax() >= res.amax() {
            break;
        }
        m = next;
    }
    if !is_hurwitz(&(a - &s * &m)) {
        return fail("Riccati solution is not stabilizing");
    }
    let Some(w) = m.clone().try_inverse().map(|w| symmetrize(&w)) else {
        return fail("Riccati solution is singular");
    };
    let residual = care_residual(a, &s, q, &m).amax();
    let residual_w = (a * &w + &w * a.transpose() - &s + &w * q * &w).amax();
    Ok(RiccatiSolution {
        m,
        w,
        residual,
        residual_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn di() -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
    }

    #[test]
    fn scalar_stabilizability() {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        assert!(lti_stabilizability_check(&one(-1.0), &one(0.0)).is_ok());
        assert!(matches!(
            lti_stabilizability_check(&one(1.0), &one(0.0)),
            Err(SynthesisError::Infeasible(_))
        ));
    }

    #[test]
    fn double_integrator_stabilizable() {
        let (a, b) = di();
        let c = lti_stabilizability_check(&a, &b).unwrap();
        let lhs = &a * &c.w + &c.w * a.transpose() - &b * b.transpose();
        assert!(sdp::min_eig(&(-lhs)).unwrap() >= LTI_EPSILON * 0.99);
        assert!(sdp::min_eig(&c.w).unwrap() > 0.0);
    }

    #[test]
    fn scalar_riccati() {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let s = lti_gcc_riccati(&one(0.0), &one(1.0), &one(1.0), &one(1.0)).unwrap();
        assert!((s.m[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.w[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_riccati() {
        let (a, b) = di();
        let s = lti_gcc_riccati(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        let r3 = 3f64.sqrt();
        let p = DMatrix::from_row_slice(2, 2, &[r3, 1.0, 1.0, r3]);
        assert!((&s.m - p).amax() < 1e-10, "{}", s.m);
        assert!(s.residual <= 1e-8);
        assert!(s.residual_w <= 1e-8);
    }

    #[test]
    fn riccati_rejects_indefinite_q() {
        let (a, b) = di();
        let q = DMatrix::from_diagonal_element(2, 2, -1.0);
        assert!(lti_gcc_riccati(&a, &b, &q, &DMatrix::identity(1, 1)).is_err());
    }
}
