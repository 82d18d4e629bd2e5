//! Synthesis of a dual metric `W(x)` and multiplier `ρ(x)` by pointwise
//! LMIs on a state-space grid, with falsification by dense sampling.
//!
//! Per grid point `x_g` the assembled problem demands
//!
//! ```text
//!   W(x_g) − α₁I ⪰ 0,    α₂I − W(x_g) ⪰ 0,    ρ(x_g) ≥ 0,
//!   Ẇ − WAᵀ − AW + ρBBᵀ − 2λW ⪰ εI
//! ```
//!
//! or, for guaranteed-cost synthesis, the Schur-complement block
//! `[[Ẇ − WAᵀ − AW + BR⁻¹Bᵀ, W], [W, Q⁻¹]] ⪰ εI`. Here
//! `Ẇ = Σᵢ ∂W/∂xᵢ fᵢ(x)`; the `u`-dependent part of `Ẇ` is removed by
//! restricting the basis of `W` (see [`annihilator`]).

pub mod annihilator;
pub mod lti;

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{PolyMatrix, Polynomial};
use crate::sampling::halton_box;
use crate::sdp::{self, LmiBlock, SdpError, SdpOptions, SdpOutcome, SdpProblem};
use crate::system::ControlAffineSystem;

pub use annihilator::{annihilator_constraint, is_annihilated, monomial_basis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stabilize,
    Exponential,
    GuaranteedCost,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Stabilize => "stabilize",
            Mode::Exponential => "exponential",
            Mode::GuaranteedCost => "guaranteed_cost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Feasibility,
    /// After a feasible point is found, maximize `λ_min(W)` at the domain
    /// center.
    MaxMinEigCenter,
}

/// Axis-aligned box in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SynthesisError> {
        let d = Domain { lower, upper };
        d.validate()?;
        Ok(d)
    }

    /// The cube `[-half_width, half_width]^n`.
    pub fn symmetric(n: usize, half_width: f64) -> Self {
        Domain {
            lower: vec![-half_width; n],
            upper: vec![half_width; n],
        }
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(SynthesisError::InvalidConfig(
                "domain bounds must be non-empty and of equal length".into(),
            ));
        }
        for (k, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(SynthesisError::InvalidConfig(format!(
                    "domain axis {k} is empty or unbounded: [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Largest half-width.
    pub fn scale(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    /// Tensor grid with `per_axis` evenly spaced points per axis, endpoints
    /// included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                (0..per_axis)
                    .map(|i| {
                        if per_axis == 1 {
                            0.5 * (l + u)
                        } else {
                            l + (u - l) * i as f64 / (per_axis - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub domain: Domain,
    /// Grid points per axis.
    pub grid: usize,
    /// Maximum total degree of the entries of `W` and of `ρ`.
    pub basis_degree: u32,
    pub lambda: f64,
    pub mode: Mode,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Strictness margin ε on the contraction block.
    pub margin: f64,
    pub q: Option<DMatrix<f64>>,
    pub r: Option<DMatrix<f64>>,
    /// Restrict `W` to block-diagonal form with these block sizes.
    pub block_diagonal: Option<Vec<usize>>,
    /// Box bound on the coefficients of `ρ`.
    pub rho_max: f64,
    pub objective: Objective,
    pub verify_samples: usize,
    pub solver: SdpOptions,
}

impl SynthesisConfig {
    pub fn new(domain: Domain) -> Self {
        SynthesisConfig {
            domain,
            grid: 9,
            basis_degree: 2,
            lambda: 0.0,
            mode: Mode::Stabilize,
            alpha1: 0.1,
            alpha2: 10.0,
            margin: 1e-6,
            q: None,
            r: None,
            block_diagonal: None,
            rho_max: 100.0,
            objective: Objective::Feasibility,
            verify_samples: 4096,
            solver: SdpOptions::default(),
        }
    }

    pub fn validate(&self, sys: &ControlAffineSystem) -> Result<(), SynthesisError> {
        let bad = |m: String| Err(SynthesisError::InvalidConfig(m));
        self.domain.validate()?;
        if self.domain.dim() != sys.n() {
            return bad(format!(
                "domain has {} axes but the system has {} states",
                self.domain.dim(),
                sys.n()
            ));
        }
        if self.grid < 2 {
            return bad(format!("grid must have at least 2 points per axis, got {}", self.grid));
        }
        if !(self.alpha1 > 0.0 && self.alpha2 >= self.alpha1) {
            return bad(format!(
                "need alpha2 >= alpha1 > 0, got alpha1 = {}, alpha2 = {}",
                self.alpha1, self.alpha2
            ));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.margin >= 0.0) || !(self.rho_max > 0.0) {
            return bad("margin must be >= 0 and rho_max > 0".into());
        }
        match self.mode {
            Mode::Exponential if self.lambda == 0.0 => {
                return bad("exponential mode needs lambda > 0".into())
            }
            Mode::GuaranteedCost => {
                if self.lambda != 0.0 {
                    return bad("guaranteed_cost mode does not use lambda; set it to 0".into());
                }
                let q = self.q.as_ref();
                let r = self.r.as_ref();
                match (q, r) {
                    (Some(q), Some(r)) => {
                        check_spd(q, sys.n(), "Q")?;
                        check_spd(r, sys.m(), "R")?;
                    }
                    _ => return bad("guaranteed_cost mode needs Q and R".into()),
                }
            }
            _ => {}
        }
        if let Some(blocks) = &self.block_diagonal {
            if blocks.contains(&0) || blocks.iter().sum::<usize>() != sys.n() {
                return bad(format!(
                    "block_diagonal sizes {blocks:?} must be positive and sum to {}",
                    sys.n()
                ));
            }
        }
        Ok(())
    }
}

fn check_spd(m: &DMatrix<f64>, n: usize, name: &str) -> Result<(), SynthesisError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(SynthesisError::InvalidConfig(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) || Cholesky::new(m.clone()).is_none() {
        return Err(SynthesisError::InvalidConfig(format!(
            "{name} must be symmetric positive definite"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub num_samples: usize,
    /// Smallest eigenvalue of the contraction block over all samples.
    pub worst_margin_contraction: f64,
    /// Smallest of `λ_min(W − α₁I)`, `λ_min(α₂I − W)` and `ρ` over all samples.
    pub worst_margin_bounds: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisDiagnostics {
    pub num_vars: usize,
    pub num_blocks: usize,
    pub grid_points: usize,
    pub newton_steps: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcmCertificate {
    pub w: PolyMatrix,
    /// Zero in guaranteed-cost mode, where the gain uses `R⁻¹` instead.
    pub rho: Polynomial,
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    pub domain: Domain,
    pub mode: Mode,
    pub q: Option<DMatrix<f64>>,
    pub r: Option<DMatrix<f64>>,
    pub solver_margin: f64,
    pub verification: Option<VerificationReport>,
    pub diagnostics: Option<SynthesisDiagnostics>,
}

impl CcmCertificate {
    /// A certificate with a constant metric and multiplier, e.g. from an
    /// LTI design.
    pub fn constant(
        w: &DMatrix<f64>,
        rho: f64,
        mode: Mode,
        lambda: f64,
        domain: Domain,
    ) -> Self {
        let n = w.nrows();
        let eig = nalgebra::SymmetricEigen::new(crate::linalg::symmetrize(w)).eigenvalues;
        CcmCertificate {
            w: PolyMatrix::from_constant(w, n),
            rho: Polynomial::constant(n, rho),
            lambda,
            alpha1: eig.min(),
            alpha2: eig.max(),
            epsilon: 0.0,
            domain,
            mode,
            q: None,
            r: None,
            solver_margin: 0.0,
            verification: None,
            diagnostics: None,
        }
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    pub fn is_constant(&self) -> bool {
        self.w.is_constant() && self.rho.is_constant()
    }

    pub fn w_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.w.eval_unchecked(x)
    }

    pub fn rho_at(&self, x: &[f64]) -> f64 {
        self.rho.eval_unchecked(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleDiagnostics {
    /// Best achievable common margin (negative).
    pub max_margin: f64,
    pub worst_point: Vec<f64>,
    pub worst_constraint: String,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
    #[error("metric basis is empty after imposing the input-direction constraint")]
    EmptyBasis,
    #[error("grid LMIs are infeasible (best margin {:.3e}, worst at {:?}, {})", .0.max_margin, .0.worst_point, .0.worst_constraint)]
    Infeasible(InfeasibleDiagnostics),
    #[error("grid solution fails verification at {:?} (contraction margin {:.3e}, bounds margin {:.3e}); refine the grid", .report.worst_point, .report.worst_margin_contraction, .report.worst_margin_bounds)]
    VerificationFailed {
        certificate: Box<CcmCertificate>,
        report: VerificationReport,
    },
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    LowerBound,
    UpperBound,
    Contraction,
    RhoNonnegative,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::LowerBound => "W - alpha1 I >= 0",
            ConstraintKind::UpperBound => "alpha2 I - W >= 0",
            ConstraintKind::Contraction => "contraction block",
            ConstraintKind::RhoNonnegative => "rho >= 0",
        }
    }
}

/// Which grid point and condition produced an SDP block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTag {
    pub kind: ConstraintKind,
    pub point: Vec<f64>,
}

/// Decision-variable layout: entry `e` of `W` uses variables
/// `e*K .. (e+1)*K` against the restricted basis, `ρ` uses the trailing `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub basis: Vec<Polynomial>,
    pub w_entries: Vec<(usize, usize)>,
    pub rho_offset: Option<usize>,
    pub num_vars: usize,
}

impl VariableLayout {
    fn w_var(&self, entry: usize, k: usize) -> usize {
        entry * self.basis.len() + k
    }

    pub fn w_from(&self, y: &[f64], n: usize) -> PolyMatrix {
        let mut w = PolyMatrix::zeros(n, n, n);
        for (e, &(i, j)) in self.w_entries.iter().enumerate() {
            let mut p = Polynomial::zero(n);
            for (k, phi) in self.basis.iter().enumerate() {
                p = &p + &phi.scale(y[self.w_var(e, k)]);
            }
            w.set(i, j, p.clone());
            w.set(j, i, p);
        }
        w
    }

    pub fn rho_from(&self, y: &[f64], n: usize) -> Polynomial {
        let mut p = Polynomial::zero(n);
        if let Some(off) = self.rho_offset {
            for (k, phi) in self.basis.iter().enumerate() {
                p = &p + &phi.scale(y[off + k]);
            }
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct AssembledProblem {
    pub problem: SdpProblem,
    pub layout: VariableLayout,
    pub tags: Vec<BlockTag>,
    pub grid_points: usize,
}

fn unit_sym(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, n);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

/// Scales `p` by a power of two so that its largest magnitude over `pts`
/// lies in (1/2, 1]. Power-of-two scaling keeps coefficients exact.
fn normalize_on(p: &Polynomial, pts: &[Vec<f64>]) -> Polynomial {
    let m = pts
        .iter()
        .map(|x| p.eval_unchecked(x).abs())
        .fold(0.0, f64::max);
    if m == 0.0 || !m.is_finite() {
        return p.clone();
    }
    let e = m.log2().ceil() as i32;
    p.scale(2f64.powi(-e))
}

fn strictness(margin: f64, a: &DMatrix<f64>) -> f64 {
    margin * a.norm().max(1.0)
}

/// Builds the grid LMI problem for `sys` under `cfg`.
pub fn assemble_constraints(
    sys: &ControlAffineSystem,
    cfg: &SynthesisConfig,
) -> Result<AssembledProblem, SynthesisError> {
    cfg.validate(sys)?;
    let n = sys.n();
    let dd = sys.jacobian();
    let b = sys.input_matrix();
    let grid = cfg.domain.grid(cfg.grid);
    if grid.is_empty() {
        return Err(SynthesisError::InvalidConfig("empty grid".into()));
    }

    let raw = monomial_basis(n, cfg.basis_degree);
    let restricted = annihilator_constraint(b, &raw);
    if restricted.is_empty() {
        return Err(SynthesisError::EmptyBasis);
    }
    let basis: Vec<Polynomial> = restricted.iter().map(|p| normalize_on(p, &grid)).collect();
    let kb = basis.len();

    let block_of: Vec<usize> = match &cfg.block_diagonal {
        Some(sizes) => sizes
            .iter()
            .enumerate()
            .flat_map(|(bi, &s)| std::iter::repeat_n(bi, s))
            .collect(),
        None => vec![0; n],
    };
    let w_entries: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .filter(|&(i, j)| block_of[i] == block_of[j])
        .collect();
    let gcc = cfg.mode == Mode::GuaranteedCost;
    let num_w = w_entries.len() * kb;
    let rho_offset = (!gcc).then_some(num_w);
    let num_vars = num_w + if gcc { 0 } else { kb };
    let layout = VariableLayout {
        basis: basis.clone(),
        w_entries,
        rho_offset,
        num_vars,
    };

    let bbt = b * b.transpose();
    let gcc_consts = if gcc {
        let q = cfg.q.as_ref().expect("validated");
        let r = cfg.r.as_ref().expect("validated");
        let rinv = r.clone().try_inverse().expect("R is positive definite");
        let qinv = q.clone().try_inverse().expect("Q is positive definite");
        Some((b * rinv * b.transpose(), qinv))
    } else {
        None
    };
    let basis_grad: Vec<Vec<Polynomial>> = basis.iter().map(Polynomial::gradient).collect();

    let per_point: Vec<Vec<(ConstraintKind, LmiBlock)>> = grid
        .par_iter()
        .map(|x| -> Result<Vec<(ConstraintKind, LmiBlock)>, SdpError> {
            let a = dd.a.eval_unchecked(x);
            let fx: Vec<f64> = (0..n).map(|i| sys.drift().get(i, 0).eval_unchecked(x)).collect();
            let phi: Vec<f64> = basis.iter().map(|p| p.eval_unchecked(x)).collect();
            let phidot: Vec<f64> = basis_grad
                .iter()
                .map(|g| g.iter().zip(&fx).map(|(d, f)| d.eval_unchecked(x) * f).sum())
                .collect();
            let eps = strictness(cfg.margin, &a);

            let mut lower = Vec::new();
            let mut upper = Vec::new();
            let mut contraction = Vec::new();
            for (e, &(i, j)) in layout.w_entries.iter().enumerate() {
                let em = unit_sym(n, i, j);
                let lie = &em * a.transpose() + &a * &em;
                for k in 0..kb {
                    let v = layout.w_var(e, k);
                    lower.push((v, &em * phi[k]));
                    upper.push((v, &em * (-phi[k])));
                    let top = &em * phidot[k] - &lie * phi[k];
                    let c = if gcc {
                        let mut blk = DMatrix::zeros(2 * n, 2 * n);
                        blk.view_mut((0, 0), (n, n)).copy_from(&top);
                        blk.view_mut((0, n), (n, n)).copy_from(&(&em * phi[k]));
                        blk.view_mut((n, 0), (n, n)).copy_from(&(&em * phi[k]));
                        blk
                    } else {
                        top - &em * (2.0 * cfg.lambda * phi[k])
                    };
                    contraction.push((v, c));
                }
            }
            let mut out = Vec::with_capacity(4);
            out.push((
                ConstraintKind::LowerBound,
                LmiBlock::new(DMatrix::identity(n, n) * (-cfg.alpha1), lower)?,
            ));
            out.push((
                ConstraintKind::UpperBound,
                LmiBlock::new(DMatrix::identity(n, n) * cfg.alpha2, upper)?,
            ));
            match (&gcc_consts, layout.rho_offset) {
                (Some((brb, qinv)), _) => {
                    let mut c0 = DMatrix::zeros(2 * n, 2 * n);
                    c0.view_mut((0, 0), (n, n)).copy_from(brb);
                    c0.view_mut((n, n), (n, n)).copy_from(qinv);
                    for d in 0..2 * n {
                        c0[(d, d)] -= eps;
                    }
                    out.push((ConstraintKind::Contraction, LmiBlock::new(c0, contraction)?));
                }
                (None, Some(off)) => {
                    let mut rho_terms = Vec::with_capacity(kb);
                    for (k, &p) in phi.iter().enumerate().take(kb) {
                        contraction.push((off + k, &bbt * p));
                        rho_terms.push((off + k, p));
                    }
                    out.push((
                        ConstraintKind::Contraction,
                        LmiBlock::new(DMatrix::identity(n, n) * (-eps), contraction)?,
                    ));
                    out.push((ConstraintKind::RhoNonnegative, LmiBlock::scalar(0.0, &rho_terms)?));
                }
                (None, None) => unreachable!("non-GCC layouts carry rho"),
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut problem = SdpProblem::new(num_vars);
    let mut tags = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (x, blocks) in grid.iter().zip(per_point) {
        for (kind, blk) in blocks {
            let key = block_key(&blk);
            if seen.contains_key(&key) {
                continue;
            }
            let idx = problem.add_block(blk)?;
            seen.insert(key, idx);
            tags.push(BlockTag {
                kind,
                point: x.clone(),
            });
        }
    }
    let w_bound = 100.0 * cfg.alpha2;
    for v in 0..num_w {
        problem.set_bounds(v, Some(-w_bound), Some(w_bound))?;
    }
    if let Some(off) = layout.rho_offset {
        for k in 0..kb {
            problem.set_bounds(off + k, Some(-cfg.rho_max), Some(cfg.rho_max))?;
        }
    }
    Ok(AssembledProblem {
        problem,
        layout,
        tags,
        grid_points: grid.len(),
    })
}

fn block_key(b: &LmiBlock) -> Vec<u64> {
    let mut key: Vec<u64> = b.constant().iter().map(|v| v.to_bits()).collect();
    for (k, f) in b.coefficients() {
        key.push(u64::MAX - *k as u64);
        key.extend(f.iter().map(|v| v.to_bits()));
    }
    key
}

/// Grid synthesis followed by sampling verification. The certificate is
/// returned only if verification passes.
pub fn synthesize(
    sys: &ControlAffineSystem,
    cfg: &SynthesisConfig,
) -> Result<CcmCertificate, SynthesisError> {
    let started = Instant::now();
    let assembled = assemble_constraints(sys, cfg)?;
    let opts = SdpOptions {
        margin: 0.0,
        ..cfg.solver.clone()
    };
    let outcome = sdp::solve_feasibility(&assembled.problem, &opts)?;
    let (mut y, margin, mut steps) = match outcome {
        SdpOutcome::Feasible(p) => (p.y, p.min_margin, p.info.newton_steps),
        SdpOutcome::Infeasible(r) => {
            let tag = &assembled.tags[r.worst_block];
            return Err(SynthesisError::Infeasible(InfeasibleDiagnostics {
                max_margin: r.max_margin,
                worst_point: tag.point.clone(),
                worst_constraint: tag.kind.as_str().to_string(),
                inconclusive: r.inconclusive,
            }));
        }
    };
    let mut solver_margin = margin;
    if cfg.objective == Objective::MaxMinEigCenter && margin > 1e-12 {
        let n = sys.n();
        let center = cfg.domain.center();
        let center = &center;
        let coeffs = assembled
            .layout
            .w_entries
            .iter()
            .enumerate()
            .flat_map(|(e, &(i, j))| {
                let layout = &assembled.layout;
                let em = unit_sym(n, i, j);
                layout
                    .basis
                    .iter()
                    .enumerate()
                    .map(move |(k, phi)| (layout.w_var(e, k), &em * phi.eval_unchecked(center)))
            })
            .collect();
        let obj = LmiBlock::new(DMatrix::zeros(n, n), coeffs)?;
        let (y2, _, info) = sdp::maximize_min_eig(&assembled.problem, &obj, 0.0, y.clone(), &opts)?;
        let (m2, _) = assembled.problem.min_margin(&y2)?;
        if m2 >= 0.0 {
            y = y2;
            solver_margin = m2;
            steps += info.newton_steps;
        }
    }

    let n = sys.n();
    let mut cert = CcmCertificate {
        w: assembled.layout.w_from(&y, n),
        rho: assembled.layout.rho_from(&y, n),
        lambda: cfg.lambda,
        alpha1: cfg.alpha1,
        alpha2: cfg.alpha2,
        epsilon: cfg.margin,
        domain: cfg.domain.clone(),
        mode: cfg.mode,
        q: cfg.q.clone(),
        r: cfg.r.clone(),
        solver_margin,
        verification: None,
        diagnostics: None,
    };
    let report = verify_certificate(sys, &cert, cfg.verify_samples);
    cert.diagnostics = Some(SynthesisDiagnostics {
        num_vars: assembled.problem.num_vars(),
        num_blocks: assembled.problem.blocks().len(),
        grid_points: assembled.grid_points,
        newton_steps: steps,
        solve_seconds: started.elapsed().as_secs_f64(),
    });
    if !report.pass {
        return Err(SynthesisError::VerificationFailed {
            certificate: Box::new(cert),
            report,
        });
    }
    cert.verification = Some(report);
    Ok(cert)
}

/// Margins of every certificate condition at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMargins {
    pub contraction: f64,
    pub lower: f64,
    pub upper: f64,
    pub rho: f64,
}

impl PointMargins {
    pub fn bounds(&self) -> f64 {
        self.lower.min(self.upper).min(self.rho)
    }
}

/// Evaluates certificate conditions pointwise.
pub struct CertificateEvaluator<'a> {
    sys: &'a ControlAffineSystem,
    cert: &'a CcmCertificate,
    a: PolyMatrix,
    dw: Vec<PolyMatrix>,
    bbt: DMatrix<f64>,
    gcc: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl<'a> CertificateEvaluator<'a> {
    pub fn new(sys: &'a ControlAffineSystem, cert: &'a CcmCertificate) -> Self {
        assert_eq!(sys.n(), cert.n(), "certificate and system dimensions differ");
        let n = sys.n();
        let b = sys.input_matrix();
        let gcc = match (cert.mode, &cert.q, &cert.r) {
            (Mode::GuaranteedCost, Some(q), Some(r)) => {
                let rinv = r.clone().try_inverse().expect("R invertible");
                let qinv = q.clone().try_inverse().expect("Q invertible");
                Some((b * rinv * b.transpose(), qinv))
            }
            _ => None,
        };
        CertificateEvaluator {
            sys,
            cert,
            a: sys.jacobian().a,
            dw: (0..n).map(|i| cert.w.diff(i).expect("in range")).collect(),
            bbt: b * b.transpose(),
            gcc,
        }
    }

    /// `Ẇ(x) = Σᵢ ∂W/∂xᵢ(x) fᵢ(x)`.
    pub fn w_dot(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.sys.n();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            if self.dw[i].is_zero() {
                continue;
            }
            let fi = self.sys.drift().get(i, 0).eval_unchecked(x);
            out += self.dw[i].eval_unchecked(x) * fi;
        }
        out
    }

    /// The contraction block without the strictness margin.
    pub fn contraction_block(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.sys.n();
        let w = self.cert.w_at(x);
        let a = self.a.eval_unchecked(x);
        let top = self.w_dot(x) - &w * a.transpose() - &a * &w;
        match &self.gcc {
            Some((brb, qinv)) => {
                let mut blk = DMatrix::zeros(2 * n, 2 * n);
                blk.view_mut((0, 0), (n, n)).copy_from(&(top + brb));
                blk.view_mut((0, n), (n, n)).copy_from(&w);
                blk.view_mut((n, 0), (n, n)).copy_from(&w);
                blk.view_mut((n, n), (n, n)).copy_from(qinv);
                blk
            }
            None => top + &self.bbt * self.cert.rho_at(x) - &w * (2.0 * self.cert.lambda),
        }
    }

    pub fn margins(&self, x: &[f64]) -> PointMargins {
        let n = self.sys.n();
        let w = self.cert.w_at(x);
        let id = DMatrix::<f64>::identity(n, n);
        let nan_to_neg = |r: Result<f64, SdpError>| r.unwrap_or(f64::NEG_INFINITY);
        PointMargins {
            contraction: nan_to_neg(sdp::min_eig(&self.contraction_block(x))),
            lower: nan_to_neg(sdp::min_eig(&(&w - &id * self.cert.alpha1))),
            upper: nan_to_neg(sdp::min_eig(&(&id * self.cert.alpha2 - &w))),
            rho: if self.gcc.is_some() {
                f64::INFINITY
            } else {
                self.cert.rho_at(x)
            },
        }
    }
}

pub fn verify_certificate(
    sys: &ControlAffineSystem,
    cert: &CcmCertificate,
    num_samples: usize,
) -> VerificationReport {
    verify_certificate_seeded(sys, cert, num_samples, 0)
}

/// Falsification by `num_samples` Halton points in the certified domain.
pub fn verify_certificate_seeded(
    sys: &ControlAffineSystem,
    cert: &CcmCertificate,
    num_samples: usize,
    seed: u64,
) -> VerificationReport {
    let pts = halton_box(&cert.domain.lower, &cert.domain.upper, num_samples, seed);
    verify_at_points(sys, cert, &pts)
}

pub fn verify_at_points(
    sys: &ControlAffineSystem,
    cert: &CcmCertificate,
    pts: &[Vec<f64>],
) -> VerificationReport {
    let ev = CertificateEvaluator::new(sys, cert);
    let margins: Vec<PointMargins> = pts.par_iter().map(|x| ev.margins(x)).collect();
    let mut worst_c = f64::INFINITY;
    let mut worst_b = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut worst_any = f64::INFINITY;
    for (x, m) in pts.iter().zip(&margins) {
        worst_c = worst_c.min(m.contraction);
        worst_b = worst_b.min(m.bounds());
        let any = m.contraction.min(m.bounds());
        if any < worst_any || worst_point.is_empty() {
            worst_any = any;
            worst_point = x.clone();
        }
    }
    VerificationReport {
        num_samples: pts.len(),
        worst_margin_contraction: worst_c,
        worst_margin_bounds: worst_b,
        worst_point,
        pass: worst_c >= 0.0 && worst_b >= 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> ControlAffineSystem {
        ControlAffineSystem::from_strings(&["-x1^3"], DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn double_integrator() -> ControlAffineSystem {
        ControlAffineSystem::from_strings(&["x2", "0"], DMatrix::from_column_slice(2, 1, &[0.0, 1.0]))
            .unwrap()
    }

    #[test]
    fn domain_grid_and_clamp() {
        let d = Domain::symmetric(2, 1.0);
        let g = d.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
        assert_eq!(d.clamp(&[3.0, -0.5]), vec![1.0, -0.5]);
        assert!(Domain::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let sys = cubic();
        let mut cfg = SynthesisConfig::new(Domain::symmetric(1, 3.0));
        assert!(cfg.validate(&sys).is_ok());
        cfg.alpha2 = 0.01;
        assert!(cfg.validate(&sys).is_err());
        cfg.alpha2 = 10.0;
        cfg.mode = Mode::Exponential;
        assert!(cfg.validate(&sys).is_err());
        cfg.mode = Mode::GuaranteedCost;
        assert!(cfg.validate(&sys).is_err());
        cfg.grid = 1;
        cfg.mode = Mode::Stabilize;
        assert!(cfg.validate(&sys).is_err());
    }

    #[test]
    fn lti_degree_zero_blocks_are_deduplicated() {
        let sys = double_integrator();
        let mut cfg = SynthesisConfig::new(Domain::symmetric(2, 5.0));
        cfg.basis_degree = 0;
        let asm = assemble_constraints(&sys, &cfg).unwrap();
        assert_eq!(asm.grid_points, 81);
        assert_eq!(asm.problem.blocks().len(), 4);
    }

    #[test]
    fn cubic_contraction_block_matches_hand_evaluation() {
        // Block (iii) at x is 6x²w + ρ − ε for constant w, ρ.
        let sys = cubic();
        let mut cfg = SynthesisConfig::new(Domain::symmetric(1, 3.0));
        cfg.basis_degree = 0;
        cfg.grid = 3;
        let asm = assemble_constraints(&sys, &cfg).unwrap();
        let y = [1.0, 1.0]; // w = 1, ρ = 1 (basis is the constant 1)
        for (blk, tag) in asm.problem.blocks().iter().zip(&asm.tags) {
            if tag.kind == ConstraintKind::Contraction {
                let x = tag.point[0];
                let eps = strictness(cfg.margin, &DMatrix::from_element(1, 1, -3.0 * x * x));
                let v = blk.eval(&y)[(0, 0)];
                assert!((v - (6.0 * x * x + 1.0 - eps)).abs() < 1e-12, "{x} {v}");
            }
        }
    }

    #[test]
    fn hand_certificate_double_integrator() {
        // W = [[2,-1],[-1,2]], ρ = 5: AW + WAᵀ − ρBBᵀ = [[-2,2],[2,-5]].
        let sys = double_integrator();
        let w = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let cert = CcmCertificate::constant(&w, 5.0, Mode::Stabilize, 0.0, Domain::symmetric(2, 5.0));
        let ev = CertificateEvaluator::new(&sys, &cert);
        let blk = ev.contraction_block(&[0.3, -1.0]);
        assert_eq!(blk, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 5.0]));
        assert!(verify_certificate(&sys, &cert, 100).pass);
    }

    #[test]
    fn invalid_certificate_fails_everywhere() {
        let sys = double_integrator();
        let cert = CcmCertificate::constant(
            &DMatrix::identity(2, 2),
            5.0,
            Mode::Stabilize,
            0.0,
            Domain::symmetric(2, 5.0),
        );
        let ev = CertificateEvaluator::new(&sys, &cert);
        for x in halton_box(&[-5.0, -5.0], &[5.0, 5.0], 50, 0) {
            assert!(ev.margins(&x).contraction < 0.0);
        }
        assert!(!verify_certificate(&sys, &cert, 100).pass);
    }

    #[test]
    fn uncontrollable_unstable_scalar_is_infeasible() {
        let sys = ControlAffineSystem::from_strings(&["x1"], DMatrix::zeros(1, 1)).unwrap();
        let mut cfg = SynthesisConfig::new(Domain::symmetric(1, 2.0));
        cfg.basis_degree = 0;
        match synthesize(&sys, &cfg) {
            Err(SynthesisError::Infeasible(d)) => {
                assert!(d.max_margin < 0.0);
                assert_eq!(d.worst_point.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }
}
