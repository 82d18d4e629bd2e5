//! Restriction of the metric basis so that `∂W/∂x · B ≡ 0`.
//!
//! `Ẇ` contains the term `Σ_j ∂W/∂x_j (B u)_j`, which is affine in `u`; the
//! pointwise LMI can only hold for every `u` if that term vanishes, i.e. if
//! every entry of `W` is constant along `range(B)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::linalg::nullspace_rref;
use crate::poly::{PolyMatrix, Polynomial};

/// All monomials of total degree ≤ `degree`, in ascending graded-lex order.
pub fn monomial_basis(nvars: usize, degree: u32) -> Vec<Polynomial> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut level = Vec::new();
        let mut exps = vec![0u32; nvars];
        compositions(d, 0, &mut exps, &mut level);
        level.sort();
        out.extend(level.into_iter().map(|e| Polynomial::monomial(e, 1.0)));
    }
    out
}

fn compositions(remaining: u32, idx: usize, exps: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = exps.len();
    if n == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if idx == n - 1 {
        exps[idx] = remaining;
        out.push(exps.clone());
        exps[idx] = 0;
        return;
    }
    for k in 0..=remaining {
        exps[idx] = k;
        compositions(remaining - k, idx + 1, exps, out);
    }
    exps[idx] = 0;
}

/// `Σ_j direction_j ∂p/∂x_j`.
pub fn directional_derivative(p: &Polynomial, direction: &[f64]) -> Polynomial {
    let mut out = Polynomial::zero(p.nvars());
    for (j, &b) in direction.iter().enumerate() {
        if b != 0.0 {
            out = &out + &p.diff(j).expect("direction length equals nvars").scale(b);
        }
    }
    out
}

/// Largest linear subspace of `span(basis)` whose members are constant
/// along every column of `b`, by coefficient matching on the polynomial
/// identity `∂w/∂x · b_l ≡ 0`.
///
/// When the columns of `b` are scaled coordinate directions this reduces
/// to dropping every monomial that involves an actuated coordinate.
pub fn annihilator_constraint(b: &DMatrix<f64>, basis: &[Polynomial]) -> Vec<Polynomial> {
    if basis.is_empty() {
        return Vec::new();
    }
    let nvars = basis[0].nvars();
    let mut rows: BTreeMap<(usize, Vec<u32>), usize> = BTreeMap::new();
    let mut derivs: Vec<Vec<(usize, Vec<u32>, f64)>> = Vec::with_capacity(basis.len());
    for phi in basis {
        let mut entries = Vec::new();
        for l in 0..b.ncols() {
            let col: Vec<f64> = b.column(l).iter().copied().collect();
            let d = directional_derivative(phi, &col);
            for (e, c) in d.terms() {
                let key = (l, e.to_vec());
                let next = rows.len();
                rows.entry(key).or_insert(next);
                entries.push((l, e.to_vec(), c));
            }
        }
        derivs.push(entries);
    }
    if rows.is_empty() {
        return basis.to_vec();
    }
    let mut mat = DMatrix::zeros(rows.len(), basis.len());
    for (k, entries) in derivs.into_iter().enumerate() {
        for (l, e, c) in entries {
            mat[(rows[&(l, e)], k)] += c;
        }
    }
    nullspace_rref(&mat, 1e-12)
        .into_iter()
        .map(|v| {
            let mut acc = Polynomial::zero(nvars);
            for (k, &c) in v.iter().enumerate() {
                if c != 0.0 {
                    acc = &acc + &basis[k].scale(c);
                }
            }
            acc
        })
        .collect()
}

/// The polynomials `Σ_j ∂W_ik/∂x_j B_jl`, one matrix per input column.
pub fn annihilator_residual(w: &PolyMatrix, b: &DMatrix<f64>) -> Vec<PolyMatrix> {
    (0..b.ncols())
        .map(|l| {
            let col: Vec<f64> = b.column(l).iter().copied().collect();
            w.map(|p| directional_derivative(p, &col))
        })
        .collect()
}

/// Coefficient-exact check that `W` is constant along `range(B)`.
pub fn is_annihilated(w: &PolyMatrix, b: &DMatrix<f64>) -> bool {
    annihilator_residual(w, b).iter().all(PolyMatrix::is_zero)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    #[test]
    fn monomial_basis_is_graded_lex() {
        let b = monomial_basis(2, 2);
        let s: Vec<String> = b.iter().map(|q| q.to_string()).collect();
        assert_eq!(s, ["1", "x2", "x1", "x2^2", "x1*x2", "x1^2"]);
        assert_eq!(monomial_basis(3, 3).len(), 20);
    }

    #[test]
    fn coordinate_input_removes_actuated_variable() {
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let r = annihilator_constraint(&b, &monomial_basis(2, 2));
        assert_eq!(r, vec![p("1", 2), p("x1", 2), p("x1^2", 2)]);
    }

    #[test]
    fn full_actuation_leaves_constants() {
        let b = DMatrix::identity(2, 2);
        let r = annihilator_constraint(&b, &monomial_basis(2, 3));
        assert_eq!(r, vec![p("1", 2)]);
    }

    #[test]
    fn diagonal_input_gives_difference_coordinate() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let r = annihilator_constraint(&b, &monomial_basis(2, 1));
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], p("1", 2));
        // span{x1 - x2}
        assert_eq!(r[1], p("x1 - x2", 2));
        for q in &r {
            assert!(directional_derivative(q, &[1.0, 1.0]).is_zero());
        }
    }

    #[test]
    fn quadratic_diagonal_input() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let r = annihilator_constraint(&b, &monomial_basis(2, 2));
        // span{1, x1 - x2, (x1 - x2)^2}
        assert_eq!(r.len(), 3);
        for q in &r {
            assert!(directional_derivative(q, &[1.0, 1.0]).is_zero(), "{q}");
        }
    }

    #[test]
    fn residual_detects_violation() {
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let mut w = PolyMatrix::identity(2, 2);
        assert!(is_annihilated(&w, &b));
        w.set(0, 0, p("1 + x2^2", 2));
        assert!(!is_annihilated(&w, &b));
    }
}
