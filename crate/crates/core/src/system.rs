//! Control-affine systems `ẋ = f(x) + B u` with polynomial drift and
//! constant input matrix, and their differential dynamics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::poly::{PolyError, PolyMatrix, Polynomial};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid polynomial for f[{index}]: {source}")]
    Polynomial {
        index: usize,
        #[source]
        source: PolyError,
    },
    #[error("non-finite entry in input matrix B")]
    NonFiniteInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    f: PolyMatrix,
    b: DMatrix<f64>,
}

impl ControlAffineSystem {
    /// `f` is an n×1 polynomial matrix in n variables, `b` is n×m.
    ///
    /// A rank-deficient `b` is accepted (uncontrollable examples are
    /// legitimate inputs) but logged as a warning.
    pub fn new(f: PolyMatrix, b: DMatrix<f64>) -> Result<Self, SystemError> {
        let n = f.rows();
        if f.cols() != 1 {
            return Err(SystemError::DimensionMismatch {
                what: "drift columns",
                expected: 1,
                got: f.cols(),
            });
        }
        if f.nvars() != n {
            return Err(SystemError::DimensionMismatch {
                what: "drift variables",
                expected: n,
                got: f.nvars(),
            });
        }
        if b.nrows() != n {
            return Err(SystemError::DimensionMismatch {
                what: "input matrix rows",
                expected: n,
                got: b.nrows(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::NonFiniteInput);
        }
        let sys = ControlAffineSystem {
            n,
            m: b.ncols(),
            f,
            b,
        };
        if !sys.has_full_column_rank() {
            log::warn!(
                "input matrix B ({}x{}) does not have full column rank",
                sys.n,
                sys.m
            );
        }
        Ok(sys)
    }

    /// Parses drift entries in the polynomial text grammar.
    pub fn from_strings(f: &[&str], b: DMatrix<f64>) -> Result<Self, SystemError> {
        let n = f.len();
        let entries = f
            .iter()
            .enumerate()
            .map(|(index, s)| {
                Polynomial::parse(s, n).map_err(|source| SystemError::Polynomial { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let f = PolyMatrix::from_entries(n, 1, entries).map_err(|source| {
            SystemError::Polynomial { index: 0, source }
        })?;
        Self::new(f, b)
    }

    /// `ẋ = Ā x + B u`.
    pub fn linear(a: &DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, SystemError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SystemError::DimensionMismatch {
                what: "state matrix columns",
                expected: n,
                got: a.ncols(),
            });
        }
        let mut f = PolyMatrix::zeros(n, 1, n);
        for i in 0..n {
            let mut row = Polynomial::zero(n);
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    row = &row + &Polynomial::var(n, j).expect("in range").scale(a[(i, j)]);
                }
            }
            f.set(i, 0, row);
        }
        Self::new(f, b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn drift(&self) -> &PolyMatrix {
        &self.f
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn has_full_column_rank(&self) -> bool {
        if self.m > self.n {
            return false;
        }
        let scale = self.b.amax().max(1.0);
        self.b.rank(1e-10 * scale) == self.m
    }

    pub fn drift_at(&self, x: &[f64]) -> Result<DVector<f64>, SystemError> {
        self.check_state(x)?;
        Ok(DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| self.f.get(i, 0).eval_unchecked(x)),
        ))
    }

    /// `f(x) + B u`.
    pub fn eval_dynamics(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>, SystemError> {
        if u.len() != self.m {
            return Err(SystemError::DimensionMismatch {
                what: "input",
                expected: self.m,
                got: u.len(),
            });
        }
        let mut dx = self.drift_at(x)?;
        dx.gemv(1.0, &self.b, &DVector::from_column_slice(u), 1.0);
        Ok(dx)
    }

    pub fn jacobian(&self) -> DifferentialDynamics {
        let mut a = PolyMatrix::zeros(self.n, self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                a.set(i, j, self.f.get(i, 0).diff(j).expect("index in range"));
            }
        }
        DifferentialDynamics {
            a,
            b: self.b.clone(),
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<(), SystemError> {
        if x.len() != self.n {
            return Err(SystemError::DimensionMismatch {
                what: "state",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// `δ̇ = A(x) δ + B δ_u` with `A = ∂f/∂x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialDynamics {
    pub a: PolyMatrix,
    pub b: DMatrix<f64>,
}

impl DifferentialDynamics {
    pub fn a_at(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        self.a.eval(x)
    }
}
