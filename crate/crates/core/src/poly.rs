//! Multivariate polynomials with real coefficients.
//!
//! Terms are kept in canonical form: one coefficient per exponent vector,
//! no explicit zeros, ordered graded-lexicographically. The text grammar
//! (`2.5*x1^2*x3 - x2 + 1`) is used by configuration files and certificate
//! documents, and printing followed by parsing reproduces a polynomial
//! exactly.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// Exponent vector ordered graded-lexicographically: total degree first,
/// then lexicographic with `x1` most significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exponents(Vec<u32>);

impl Exponents {
    pub fn new(exps: Vec<u32>) -> Self {
        Exponents(exps)
    }

    pub fn zeros(n: usize) -> Self {
        Exponents(vec![0; n])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }
}

impl Ord for Exponents {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Exponents {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A single term `coefficient * x^exponents`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

impl Monomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.coefficient, |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Exponents::zeros(nvars), c);
        p
    }

    /// The coordinate polynomial `x_{index+1}` (indices are zero-based).
    pub fn var(nvars: usize, index: usize) -> Result<Self, PolyError> {
        if index >= nvars {
            return Err(PolyError::IndexOutOfRange { index, nvars });
        }
        let mut e = vec![0; nvars];
        e[index] = 1;
        Ok(Self::monomial(e, 1.0))
    }

    pub fn monomial(exponents: Vec<u32>, coefficient: f64) -> Self {
        let nvars = exponents.len();
        let mut p = Self::zero(nvars);
        p.add_term(Exponents(exponents), coefficient);
        p
    }

    pub fn from_monomials<I>(nvars: usize, monomials: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = Monomial>,
    {
        let mut p = Self::zero(nvars);
        for m in monomials {
            if m.exponents.len() != nvars {
                return Err(PolyError::DimensionMismatch {
                    expected: nvars,
                    got: m.exponents.len(),
                });
            }
            p.add_term(Exponents(m.exponents), m.coefficient);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Exponents, c: f64) {
        debug_assert_eq!(e.0.len(), self.nvars);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(e);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponents::degree).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Exponents::is_constant)
    }

    /// Coefficient of the constant term.
    pub fn constant_term(&self) -> f64 {
        self.coefficient(&vec![0; self.nvars])
    }

    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms
            .get(&Exponents(exponents.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&[u32], f64)> + '_ {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms()
            .map(|(e, c)| Monomial {
                exponents: e.to_vec(),
                coefficient: c,
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| {
                e.0.iter()
                    .zip(x)
                    .fold(c, |acc, (&k, &xi)| acc * xi.powi(k as i32))
            })
            .sum()
    }

    /// Formal partial derivative with respect to `x_{index+1}`.
    pub fn diff(&self, index: usize) -> Result<Polynomial, PolyError> {
        if index >= self.nvars {
            return Err(PolyError::IndexOutOfRange {
                index,
                nvars: self.nvars,
            });
        }
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            let k = e.0[index];
            if k == 0 {
                continue;
            }
            let mut de = e.0.clone();
            de[index] = k - 1;
            out.add_term(Exponents(de), c * k as f64);
        }
        Ok(out)
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars)
            .map(|i| self.diff(i).expect("index in range"))
            .collect()
    }

    pub fn scale(&self, a: f64) -> Polynomial {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), a * c);
        }
        out
    }

    /// Largest absolute coefficient; zero for the zero polynomial.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_same(&self, other: &Polynomial) {
        assert_eq!(
            self.nvars, other.nvars,
            "polynomials over different numbers of variables"
        );
    }

    /// Parses the text grammar, e.g. `2.5*x1^2*x3 - x2 + 1`.
    pub fn parse(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
        Parser::new(text, nvars).parse()
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut out = Polynomial::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &rhs.terms {
                let e = ea.0.iter().zip(&eb.0).map(|(a, b)| a + b).collect();
                out.add_term(Exponents(e), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned_binop {
    ($tr:ident, $method:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, &c)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            match (k, c < 0.0) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mut factors = Vec::new();
            if e.is_constant() || mag != 1.0 {
                factors.push(format!("{mag}"));
            }
            for (i, &p) in e.0.iter().enumerate() {
                match p {
                    0 => {}
                    1 => factors.push(format!("x{}", i + 1)),
                    _ => factors.push(format!("x{}^{}", i + 1, p)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, nvars: usize) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            nvars,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse {
            column: self.pos + 1,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Polynomial, PolyError> {
        let mut out = Polynomial::zero(self.nvars);
        self.skip_ws();
        if self.peek().is_none() {
            return self.err("empty polynomial");
        }
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            _ => {}
        }
        loop {
            self.skip_ws();
            let (e, c) = self.term()?;
            out.add_term(e, sign * c);
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(ch) => return self.err(format!("unexpected character '{}'", ch as char)),
            }
            self.pos += 1;
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Exponents, f64), PolyError> {
        let mut exps = vec![0u32; self.nvars];
        let mut coef = 1.0;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'x') => {
                    let (i, p) = self.variable()?;
                    exps[i] += p;
                }
                Some(ch) if ch.is_ascii_digit() || ch == b'.' => coef *= self.number()?,
                Some(ch) => return self.err(format!("expected a number or variable, found '{}'", ch as char)),
                None => return self.err("expected a number or variable, found end of input"),
            }
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok((Exponents(exps), coef))
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> Result<f64, PolyError> {
        let start = self.pos;
        let mut nd = self.digits();
        if self.peek() == Some(b'.') {
            self.pos += 1;
            nd += self.digits();
        }
        if nd == 0 {
            self.pos = start;
            return self.err("malformed number");
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                self.pos = save;
                return self.err("malformed exponent in number");
            }
        }
        match self.src[start..self.pos].parse::<f64>() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err("malformed number")
            }
        }
    }

    fn variable(&mut self) -> Result<(usize, u32), PolyError> {
        let start = self.pos;
        self.pos += 1; // 'x'
        let dstart = self.pos;
        if self.digits() == 0 {
            return self.err("expected variable index after 'x'");
        }
        let idx: usize = match self.src[dstart..self.pos].parse() {
            Ok(v) => v,
            Err(_) => {
                self.pos = start;
                return self.err("variable index too large");
            }
        };
        if idx == 0 || idx > self.nvars {
            self.pos = start;
            return self.err(format!(
                "variable x{idx} out of range (variables are x1..x{})",
                self.nvars
            ));
        }
        let mut power = 1;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let pstart = self.pos;
            if self.digits() == 0 {
                return self.err("expected a non-negative integer exponent");
            }
            power = match self.src[pstart..self.pos].parse() {
                Ok(p) => p,
                Err(_) => {
                    self.pos = pstart;
                    return self.err("exponent too large");
                }
            };
        }
        Ok((idx - 1, power))
    }
}

/// Dense matrix of polynomials, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            nvars,
            entries: vec![Polynomial::zero(nvars); rows * cols],
        }
    }

    pub fn identity(n: usize, nvars: usize) -> Self {
        let mut m = Self::zeros(n, n, nvars);
        for i in 0..n {
            m.set(i, i, Polynomial::constant(nvars, 1.0));
        }
        m
    }

    /// Builds from row-major entries; all entries must share `nvars`.
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: Vec<Polynomial>,
    ) -> Result<Self, PolyError> {
        if entries.len() != rows * cols || entries.is_empty() {
            return Err(PolyError::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let nvars = entries[0].nvars();
        if let Some(bad) = entries.iter().find(|p| p.nvars() != nvars) {
            return Err(PolyError::DimensionMismatch {
                expected: nvars,
                got: bad.nvars(),
            });
        }
        Ok(PolyMatrix {
            rows,
            cols,
            nvars,
            entries,
        })
    }

    /// Constant polynomial matrix from a real matrix.
    pub fn from_constant(m: &DMatrix<f64>, nvars: usize) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols(), nvars);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, Polynomial::constant(nvars, m[(i, j)]));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.nvars(), self.nvars);
        self.entries[i * self.cols + j] = p;
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    /// Exact structural symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(Polynomial::is_constant)
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval_unchecked(x))
    }

    pub fn diff(&self, index: usize) -> Result<PolyMatrix, PolyError> {
        let entries = self
            .entries
            .iter()
            .map(|p| p.diff(index))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries,
        })
    }

    pub fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    /// Matrix product with a constant real matrix on the right.
    pub fn mul_constant(&self, m: &DMatrix<f64>) -> PolyMatrix {
        assert_eq!(self.cols, m.nrows());
        let mut out = Self::zeros(self.rows, m.ncols(), self.nvars);
        for i in 0..self.rows {
            for j in 0..m.ncols() {
                let mut acc = Polynomial::zero(self.nvars);
                for k in 0..self.cols {
                    if m[(k, j)] != 0.0 {
                        acc = &acc + &self.get(i, k).scale(m[(k, j)]);
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }
}
