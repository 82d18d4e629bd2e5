//! Small dense helpers not covered by nalgebra.

use nalgebra::{DMatrix, DVector};

/// Basis of the null space of `a` from its reduced row echelon form.
///
/// Each basis vector has a 1 in one free column and the negated pivot-row
/// entries elsewhere, so integer-structured constraints yield integer
/// basis vectors. Entries below `tol` (relative to the largest entry) are
/// treated as zero.
pub fn nullspace_rref(a: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let (rows, cols) = a.shape();
    let mut m = a.clone();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let eps = tol * scale;
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= eps {
            for i in r..rows {
                m[(i, c)] = 0.0;
            }
            continue;
        }
        m.swap_rows(r, best);
        let p = m[(r, c)];
        for j in c..cols {
            m[(r, j)] /= p;
        }
        m[(r, c)] = 1.0;
        for i in 0..rows {
            if i != r {
                let factor = m[(i, c)];
                if factor != 0.0 {
                    for j in c..cols {
                        m[(i, j)] -= factor * m[(r, j)];
                    }
                    m[(i, c)] = 0.0;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    for v in m.iter_mut() {
        if v.abs() <= eps {
            *v = 0.0;
        }
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = DVector::zeros(cols);
            v[f] = 1.0;
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[(row, f)];
            }
            v
        })
        .collect()
}

/// Solves `Aᵀ X + X A = C` for symmetric `C` by the Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) for column-major vec.
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = k.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
