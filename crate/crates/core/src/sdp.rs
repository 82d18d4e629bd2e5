//! Dense maximum-margin LMI feasibility.
//!
//! Given blocks `F_j(y) = F0_j + Σ_k y_k F_jk`, finds `y` maximizing the
//! common margin `t` in `F_j(y) ⪰ t·I` for every block, optionally under
//! box bounds on `y`. The problem is solved along the central path of the
//! log-det barrier with damped Newton steps. A starting point is always
//! available (take `t` below every block's smallest eigenvalue), so there
//! is no separate phase-one problem.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// Smallest eigenvalue of a (nearly) symmetric matrix.
pub fn min_eig(s: &DMatrix<f64>) -> Result<f64, SdpError> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SdpError::NonFinite);
    }
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(SdpError::Malformed(format!(
            "min_eig needs a non-empty square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.nrows() == 1 {
        return Ok(s[(0, 0)]);
    }
    let sym = (s + s.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym).eigenvalues.min())
}

/// One constraint `constant + Σ y_k F_k ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    constant: DMatrix<f64>,
    coefficients: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    /// Coefficients for the same variable are summed; all-zero coefficient
    /// matrices are dropped.
    pub fn new(
        constant: DMatrix<f64>,
        coefficients: Vec<(usize, DMatrix<f64>)>,
    ) -> Result<Self, SdpError> {
        let q = constant.nrows();
        if q == 0 || constant.ncols() != q {
            return Err(SdpError::Malformed("block constant must be square".into()));
        }
        check_symmetric(&constant)?;
        let mut merged: Vec<(usize, DMatrix<f64>)> = Vec::with_capacity(coefficients.len());
        for (k, f) in coefficients {
            if f.nrows() != q || f.ncols() != q {
                return Err(SdpError::Malformed(format!(
                    "coefficient for y{k} is {}x{}, block is {q}x{q}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            check_symmetric(&f)?;
            match merged.iter_mut().find(|(j, _)| *j == k) {
                Some((_, g)) => *g += f,
                None => merged.push((k, f)),
            }
        }
        merged.retain(|(_, f)| f.iter().any(|&v| v != 0.0));
        merged.sort_by_key(|(k, _)| *k);
        Ok(LmiBlock {
            constant,
            coefficients: merged,
        })
    }

    /// Scalar constraint `c + Σ a_k y_k ≥ 0`.
    pub fn scalar(c: f64, coefficients: &[(usize, f64)]) -> Result<Self, SdpError> {
        Self::new(
            DMatrix::from_element(1, 1, c),
            coefficients
                .iter()
                .map(|&(k, a)| (k, DMatrix::from_element(1, 1, a)))
                .collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn coefficients(&self) -> &[(usize, DMatrix<f64>)] {
        &self.coefficients
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (k, f) in &self.coefficients {
            s += f * y[*k];
        }
        s
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), SdpError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SdpError::NonFinite);
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(SdpError::Malformed(format!(
                    "matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    num_vars: usize,
    blocks: Vec<LmiBlock>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        SdpProblem {
            num_vars,
            blocks: Vec::new(),
            lower: vec![None; num_vars],
            upper: vec![None; num_vars],
        }
    }

    pub fn add_block(&mut self, block: LmiBlock) -> Result<usize, SdpError> {
        if let Some((k, _)) = block.coefficients.iter().find(|(k, _)| *k >= self.num_vars) {
            return Err(SdpError::Malformed(format!(
                "variable index {k} out of range for {} variables",
                self.num_vars
            )));
        }
        self.blocks.push(block);
        Ok(self.blocks.len() - 1)
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<f64>, upper: Option<f64>) -> Result<(), SdpError> {
        if var >= self.num_vars {
            return Err(SdpError::Malformed(format!("bound on unknown variable {var}")));
        }
        if let (Some(l), Some(u)) = (lower, upper) {
            if !(l < u) {
                return Err(SdpError::Malformed(format!(
                    "empty box for variable {var}: [{l}, {u}]"
                )));
            }
        }
        self.lower[var] = lower;
        self.upper[var] = upper;
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn remove_block(&mut self, index: usize) -> LmiBlock {
        self.blocks.remove(index)
    }

    pub fn bounds(&self, var: usize) -> (Option<f64>, Option<f64>) {
        (self.lower[var], self.upper[var])
    }

    /// Smallest eigenvalue over all blocks at `y`, with the index of the
    /// block attaining it.
    pub fn min_margin(&self, y: &[f64]) -> Result<(f64, usize), SdpError> {
        let mut worst = (f64::INFINITY, 0);
        for (j, b) in self.blocks.iter().enumerate() {
            let e = min_eig(&b.eval(y))?;
            if e < worst.0 {
                worst = (e, j);
            }
        }
        Ok(worst)
    }

    /// JSON dump for reproducing a solve outside the pipeline.
    pub fn to_json(&self) -> serde_json::Value {
        let mat = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        json!({
            "num_vars": self.num_vars,
            "lower": self.lower,
            "upper": self.upper,
            "blocks": self.blocks.iter().map(|b| json!({
                "size": b.size(),
                "constant": mat(&b.constant),
                "coefficients": b.coefficients.iter().map(|(k, f)| json!({
                    "var": k,
                    "matrix": mat(f),
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions {
    /// Required margin for a feasible verdict.
    pub margin: f64,
    pub max_newton: usize,
    /// Target gap on the optimal margin.
    pub tol: f64,
    /// Barrier weight growth factor between centerings.
    pub mu: f64,
    /// Margins above this are treated as unbounded.
    pub margin_cap: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            margin: 0.0,
            max_newton: 200,
            tol: 1e-9,
            mu: 10.0,
            margin_cap: 1e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveInfo {
    pub newton_steps: usize,
    pub converged: bool,
    pub hit_iteration_limit: bool,
    pub regularized: bool,
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    pub y: Vec<f64>,
    /// Smallest block eigenvalue at `y`, recomputed independently of the
    /// barrier iterates.
    pub min_margin: f64,
    pub info: SolveInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleReport {
    /// Best (maximum-margin) point found.
    pub y: Vec<f64>,
    pub max_margin: f64,
    pub worst_block: usize,
    /// Iteration limit hit before the gap closed.
    pub inconclusive: bool,
    pub info: SolveInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdpOutcome {
    Feasible(FeasiblePoint),
    Infeasible(InfeasibleReport),
}

impl SdpOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SdpOutcome::Feasible(_))
    }

    pub fn point(&self) -> &[f64] {
        match self {
            SdpOutcome::Feasible(p) => &p.y,
            SdpOutcome::Infeasible(r) => &r.y,
        }
    }

    pub fn margin(&self) -> f64 {
        match self {
            SdpOutcome::Feasible(p) => p.min_margin,
            SdpOutcome::Infeasible(r) => r.max_margin,
        }
    }

    pub fn info(&self) -> &SolveInfo {
        match self {
            SdpOutcome::Feasible(p) => &p.info,
            SdpOutcome::Infeasible(r) => &r.info,
        }
    }
}

/// Maximizes the common margin over all blocks and reports feasibility
/// against `opts.margin`.
pub fn solve_feasibility(prob: &SdpProblem, opts: &SdpOptions) -> Result<SdpOutcome, SdpError> {
    if prob.blocks.is_empty() {
        return Err(SdpError::Malformed("problem has no blocks".into()));
    }
    let y0 = interior_start(prob);
    let roles = vec![BlockRole { margin_coef: 1.0, shift: 0.0 }; prob.blocks.len()];
    let run = central_path(prob, &[], &roles, y0, opts)?;
    let (min_margin, worst_block) = prob.min_margin(&run.y)?;
    if min_margin >= opts.margin || run.info.unbounded {
        Ok(SdpOutcome::Feasible(FeasiblePoint {
            y: run.y,
            min_margin,
            info: run.info,
        }))
    } else {
        Ok(SdpOutcome::Infeasible(InfeasibleReport {
            y: run.y,
            max_margin: min_margin,
            worst_block,
            inconclusive: run.info.hit_iteration_limit,
            info: run.info,
        }))
    }
}

/// Maximizes the smallest eigenvalue of `objective(y)` subject to every
/// block of `prob` holding with margin `floor`, starting from `y0`, which
/// must satisfy all blocks with margin strictly above `floor`.
pub fn maximize_min_eig(
    prob: &SdpProblem,
    objective: &LmiBlock,
    floor: f64,
    y0: Vec<f64>,
    opts: &SdpOptions,
) -> Result<(Vec<f64>, f64, SolveInfo), SdpError> {
    let (m0, _) = prob.min_margin(&y0)?;
    if !(m0 > floor) {
        return Err(SdpError::Malformed(format!(
            "start point margin {m0} does not exceed floor {floor}"
        )));
    }
    let roles = vec![BlockRole { margin_coef: 0.0, shift: floor }; prob.blocks.len()];
    let extra = [objective.clone()];
    let extra_roles = [BlockRole { margin_coef: 1.0, shift: 0.0 }];
    let all_roles: Vec<BlockRole> = roles.into_iter().chain(extra_roles).collect();
    let run = central_path(prob, &extra, &all_roles, y0, opts)?;
    let value = min_eig(&objective.eval(&run.y))?;
    Ok((run.y, value, run.info))
}

#[derive(Debug, Clone, Copy)]
struct BlockRole {
    /// 1 if the block carries the maximized margin `t`, 0 otherwise.
    margin_coef: f64,
    shift: f64,
}

struct PathResult {
    y: Vec<f64>,
    info: SolveInfo,
}

fn interior_start(prob: &SdpProblem) -> Vec<f64> {
    (0..prob.num_vars)
        .map(|k| match (prob.lower[k], prob.upper[k]) {
            (Some(l), Some(u)) => 0.5 * (l + u),
            (Some(l), None) => l.max(0.0) + 1.0,
            (None, Some(u)) => u.min(0.0) - 1.0,
            (None, None) => 0.0,
        })
        .collect()
}

struct Barrier<'a> {
    blocks: Vec<&'a LmiBlock>,
    roles: &'a [BlockRole],
    lower: &'a [Option<f64>],
    upper: &'a [Option<f64>],
    p: usize,
}

impl<'a> Barrier<'a> {
    fn slack(&self, j: usize, y: &[f64], t: f64) -> DMatrix<f64> {
        let b = self.blocks[j];
        let r = self.roles[j];
        let mut s = b.eval(y);
        let d = r.margin_coef * t + r.shift;
        for i in 0..s.nrows() {
            s[(i, i)] -= d;
        }
        s
    }

    /// Barrier value, or None outside the domain.
    fn value(&self, z: &[f64], tau: f64) -> Option<f64> {
        let (y, t) = z.split_at(self.p);
        let t = t[0];
        let mut v = -tau * t;
        for ((&yk, upper), lower) in y.iter().zip(self.upper.iter()).zip(self.lower.iter()) {
            if let Some(u) = *upper {
                let s = u - yk;
                if !(s > 0.0) {
                    return None;
                }
                v -= s.ln();
            }
            if let Some(l) = *lower {
                let s = yk - l;
                if !(s > 0.0) {
                    return None;
                }
                v -= s.ln();
            }
        }
        for j in 0..self.blocks.len() {
            let s = self.slack(j, y, t);
            let chol = Cholesky::new(s)?;
            let l = chol.l_dirty();
            for i in 0..l.nrows() {
                v -= 2.0 * l[(i, i)].ln();
            }
        }
        v.is_finite().then_some(v)
    }

    /// Gradient and Hessian of the barrier objective at an interior `z`.
    fn derivatives(&self, z: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.p;
        let (y, t) = z.split_at(p);
        let t = t[0];
        let mut g = DVector::zeros(p + 1);
        let mut h = DMatrix::zeros(p + 1, p + 1);
        g[p] = -tau;
        for k in 0..p {
            if let Some(u) = self.upper[k] {
                let s = u - y[k];
                g[k] += 1.0 / s;
                h[(k, k)] += 1.0 / (s * s);
            }
            if let Some(l) = self.lower[k] {
                let s = y[k] - l;
                g[k] -= 1.0 / s;
                h[(k, k)] += 1.0 / (s * s);
            }
        }
        let mut prods: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for (j, block) in self.blocks.iter().enumerate() {
            let s = self.slack(j, y, t);
            let sinv = match Cholesky::new(s) {
                Some(c) => c.inverse(),
                None => continue,
            };
            prods.clear();
            for (k, f) in block.coefficients() {
                prods.push((*k, &sinv * f));
            }
            let c = self.roles[j].margin_coef;
            if c != 0.0 {
                prods.push((p, &sinv * (-c)));
            }
            for (a, pa) in &prods {
                g[*a] -= pa.trace();
                for (b, pb) in &prods {
                    if b < a {
                        continue;
                    }
                    let v = trace_of_product(pa, pb);
                    h[(*a, *b)] += v;
                    if a != b {
                        h[(*b, *a)] += v;
                    }
                }
            }
        }
        (g, h)
    }
}

fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let q = a.nrows();
    let mut s = 0.0;
    for i in 0..q {
        for j in 0..q {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>, info: &mut SolveInfo) -> DVector<f64> {
    if let Some(c) = Cholesky::<f64, Dyn>::new(h.clone()) {
        return -c.solve(g);
    }
    let mut delta = 1e-12 * h.diagonal().amax().max(1e-300);
    loop {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::<f64, Dyn>::new(hr) {
            info.regularized = true;
            return -c.solve(g);
        }
        delta *= 10.0;
    }
}

fn central_path(
    prob: &SdpProblem,
    extra: &[LmiBlock],
    roles: &[BlockRole],
    y0: Vec<f64>,
    opts: &SdpOptions,
) -> Result<PathResult, SdpError> {
    let blocks: Vec<&LmiBlock> = prob.blocks.iter().chain(extra.iter()).collect();
    debug_assert_eq!(blocks.len(), roles.len());
    let p = prob.num_vars;
    let bar = Barrier {
        blocks,
        roles,
        lower: &prob.lower,
        upper: &prob.upper,
        p,
    };

    // Start with t strictly below every margin-carrying block.
    let mut t0 = f64::INFINITY;
    for (j, r) in roles.iter().enumerate() {
        if r.margin_coef != 0.0 {
            let e = min_eig(&bar.slack(j, &y0, 0.0))?;
            t0 = t0.min(e / r.margin_coef);
        }
    }
    if !t0.is_finite() {
        return Err(SdpError::Malformed("no block carries the margin".into()));
    }
    let scale = bar
        .blocks
        .iter()
        .map(|b| b.constant().amax())
        .fold(1.0, f64::max);
    let mut z: Vec<f64> = y0;
    z.push(t0 - scale.max(t0.abs()) * 0.5 - 1.0);

    let nu: f64 = bar.blocks.iter().map(|b| b.size() as f64).sum::<f64>()
        + prob.lower.iter().filter(|b| b.is_some()).count() as f64
        + prob.upper.iter().filter(|b| b.is_some()).count() as f64;

    let mut info = SolveInfo::default();
    let mut tau = 1.0 / scale;
    let mut value = bar
        .value(&z, tau)
        .ok_or_else(|| SdpError::Malformed("start point is not interior".into()))?;
    'outer: loop {
        loop {
            let (g, h) = bar.derivatives(&z, tau);
            let d = newton_direction(&g, &h, &mut info);
            let dec2 = -g.dot(&d);
            if !(dec2 > 2e-9) {
                break;
            }
            if info.newton_steps >= opts.max_newton {
                info.hit_iteration_limit = true;
                break 'outer;
            }
            let mut alpha = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = z.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
                if let Some(v) = bar.value(&trial, tau) {
                    if v < value && v <= value - 0.25 * alpha * dec2 {
                        break Some((trial, v));
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break None;
                }
            };
            info.newton_steps += 1;
            match accepted {
                Some((trial, v)) => {
                    z = trial;
                    value = v;
                }
                // Numerical floor of the centering problem.
                None => break,
            }
            if z[p] > opts.margin_cap {
                info.unbounded = true;
                break 'outer;
            }
        }
        if nu / tau <= opts.tol {
            info.converged = true;
            break;
        }
        tau *= opts.mu;
        value = match bar.value(&z, tau) {
            Some(v) => v,
            None => break,
        };
    }
    z.truncate(p);
    Ok(PathResult { y: z, info })
}
