//! Standard-form semidefinite programs and a primal-dual interior-point solver.
//!
//! The primal problem is
//!
//! ```text
//! minimize    sum_b <C_b, X_b> + c_f^T u
//! subject to  sum_b <A_ib, X_b> + B_i^T u = b_i     i = 1..m
//!             X_b PSD for every block b, u free
//! ```
//!
//! and its dual is `maximize b^T y` subject to `C_b - sum_i y_i A_ib = S_b`
//! PSD and `B^T y = c_f`.
//!
//! Coefficient matrices are stored as lists of [`BlockEntry`] values. An entry
//! at `(row, col)` with `row != col` denotes the symmetric pair, so it
//! contributes `2 * value * X[row, col]` to the inner product.

pub mod dense;
mod ipm;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
pub use dense::Mat;
pub use ipm::solve;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("problem has no constraints")]
    NoConstraints,
    #[error("problem has no variables")]
    NoVariables,
    #[error("entry ({row}, {col}) does not fit block {block} of size {size}")]
    EntryOutOfRange {
        block: usize,
        row: usize,
        col: usize,
        size: usize,
    },
    #[error("block index {0} out of range")]
    NoSuchBlock(usize),
    #[error("free variable index {index} out of range ({count} free variables)")]
    NoSuchFree { index: usize, count: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed dump at line {line}: {msg}")]
    Dump { line: usize, msg: String },
}

/// One nonzero of a symmetric block coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry<T> {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: T,
}

/// A linear functional `sum_b <A_b, X_b> + a_f^T u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm<T> {
    pub entries: Vec<BlockEntry<T>>,
    pub free: Vec<(usize, T)>,
}

impl<T> Default for LinearForm<T> {
    fn default() -> Self {
        LinearForm {
            entries: Vec::new(),
            free: Vec::new(),
        }
    }
}

impl<T: Scalar> LinearForm<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` at the symmetric position `(row, col)` of `block`.
    pub fn entry(mut self, block: usize, row: usize, col: usize, value: T) -> Self {
        self.push_entry(block, row, col, value);
        self
    }

    pub fn free_coef(mut self, index: usize, value: T) -> Self {
        self.free.push((index, value));
        self
    }

    pub fn push_entry(&mut self, block: usize, row: usize, col: usize, value: T) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(BlockEntry {
            block,
            row,
            col,
            value,
        });
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.value == T::zero()) && self.free.iter().all(|f| f.1 == T::zero())
    }

    /// Merges duplicate positions and drops zeros.
    fn normalize(&mut self) {
        self.entries.sort_by_key(|e| (e.block, e.row, e.col));
        let mut out: Vec<BlockEntry<T>> = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            match out.last_mut() {
                Some(l) if (l.block, l.row, l.col) == (e.block, e.row, e.col) => {
                    l.value = l.value + e.value
                }
                _ => out.push(e),
            }
        }
        out.retain(|e| e.value != T::zero());
        self.entries = out;
        self.free.sort_by_key(|f| f.0);
        let mut free: Vec<(usize, T)> = Vec::with_capacity(self.free.len());
        for (i, v) in self.free.drain(..) {
            match free.last_mut() {
                Some(l) if l.0 == i => l.1 = l.1 + v,
                _ => free.push((i, v)),
            }
        }
        free.retain(|f| f.1 != T::zero());
        self.free = free;
    }

    /// Evaluates the functional at `(X, u)`.
    pub fn apply(&self, x: &[Mat<T>], u: &[T]) -> T {
        let two = T::lit(2.0);
        let mut s = T::zero();
        for e in &self.entries {
            let v = x[e.block][(e.row, e.col)];
            s = s + if e.row == e.col { e.value * v } else { two * e.value * v };
        }
        for &(i, v) in &self.free {
            s = s + v * u[i];
        }
        s
    }

    /// Adds `k * A` into dense symmetric block matrices.
    pub fn add_adjoint(&self, k: T, out: &mut [Mat<T>]) {
        for e in &self.entries {
            let v = k * e.value;
            out[e.block][(e.row, e.col)] = out[e.block][(e.row, e.col)] + v;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] = out[e.block][(e.col, e.row)] + v;
            }
        }
    }

    fn norm_sq(&self) -> T {
        let two = T::lit(2.0);
        let mut s = T::zero();
        for e in &self.entries {
            let v2 = e.value * e.value;
            s = s + if e.row == e.col { v2 } else { two * v2 };
        }
        self.free.iter().fold(s, |acc, &(_, v)| acc + v * v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint<T> {
    pub form: LinearForm<T>,
    pub rhs: T,
}

/// A validated standard-form SDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem<T> {
    block_sizes: Vec<usize>,
    free_count: usize,
    constraints: Vec<SdpConstraint<T>>,
    objective: LinearForm<T>,
}

impl<T: Scalar> SdpProblem<T> {
    pub fn new(
        block_sizes: Vec<usize>,
        free_count: usize,
        constraints: Vec<SdpConstraint<T>>,
        objective: LinearForm<T>,
    ) -> Result<Self, SdpError> {
        if constraints.is_empty() {
            return Err(SdpError::NoConstraints);
        }
        if block_sizes.iter().sum::<usize>() + free_count == 0 {
            return Err(SdpError::NoVariables);
        }
        let mut constraints = constraints;
        let mut objective = objective;
        for form in constraints
            .iter_mut()
            .map(|c| &mut c.form)
            .chain(std::iter::once(&mut objective))
        {
            for e in &form.entries {
                let size = *block_sizes.get(e.block).ok_or(SdpError::NoSuchBlock(e.block))?;
                if e.row.max(e.col) >= size {
                    return Err(SdpError::EntryOutOfRange {
                        block: e.block,
                        row: e.row,
                        col: e.col,
                        size,
                    });
                }
            }
            for &(i, _) in &form.free {
                if i >= free_count {
                    return Err(SdpError::NoSuchFree {
                        index: i,
                        count: free_count,
                    });
                }
            }
            for e in &mut form.entries {
                if e.row > e.col {
                    std::mem::swap(&mut e.row, &mut e.col);
                }
            }
            form.normalize();
        }
        Ok(SdpProblem {
            block_sizes,
            free_count,
            constraints,
            objective,
        })
    }

    /// Subproblem with `X_b` restricted to the rows and columns `keep[b]`;
    /// blocks left empty are removed. Returns the problem and, per new
    /// block, the index of the original block.
    pub fn restrict(&self, keep: &[Vec<usize>]) -> Result<(SdpProblem<T>, Vec<usize>), SdpError> {
        let mut origin = Vec::new();
        let mut index: Vec<Option<(usize, Vec<Option<usize>>)>> = Vec::with_capacity(keep.len());
        for (b, k) in keep.iter().enumerate() {
            if k.is_empty() {
                index.push(None);
                continue;
            }
            let mut map = vec![None; self.block_sizes[b]];
            for (new, &old) in k.iter().enumerate() {
                map[old] = Some(new);
            }
            index.push(Some((origin.len(), map)));
            origin.push(b);
        }
        let project = |form: &LinearForm<T>| LinearForm {
            entries: form
                .entries
                .iter()
                .filter_map(|e| {
                    let (nb, map) = index[e.block].as_ref()?;
                    Some(BlockEntry {
                        block: *nb,
                        row: map[e.row]?,
                        col: map[e.col]?,
                        value: e.value,
                    })
                })
                .collect(),
            free: form.free.clone(),
        };
        let constraints = self
            .constraints
            .iter()
            .map(|c| SdpConstraint {
                form: project(&c.form),
                rhs: c.rhs,
            })
            .collect();
        let sizes = keep.iter().filter(|k| !k.is_empty()).map(|k| k.len()).collect();
        let prob = SdpProblem::new(sizes, self.free_count, constraints, project(&self.objective))?;
        Ok((prob, origin))
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn constraints(&self) -> &[SdpConstraint<T>] {
        &self.constraints
    }

    pub fn objective(&self) -> &LinearForm<T> {
        &self.objective
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Sum of block dimensions (the barrier parameter denominator).
    pub fn psd_dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn rhs(&self) -> Vec<T> {
        self.constraints.iter().map(|c| c.rhs).collect()
    }

    /// Applies the constraint operator: `(A(X) + B u)_i`.
    pub fn apply_constraints(&self, x: &[Mat<T>], u: &[T]) -> Vec<T> {
        self.constraints.iter().map(|c| c.form.apply(x, u)).collect()
    }

    /// Dense blocks of `sum_i y_i A_i` and the free part `B^T y`.
    pub fn adjoint(&self, y: &[T]) -> (Vec<Mat<T>>, Vec<T>) {
        let mut blocks = self.zero_blocks();
        let mut free = vec![T::zero(); self.free_count];
        for (c, &yi) in self.constraints.iter().zip(y) {
            if yi == T::zero() {
                continue;
            }
            c.form.add_adjoint(yi, &mut blocks);
            for &(j, v) in &c.form.free {
                free[j] = free[j] + yi * v;
            }
        }
        (blocks, free)
    }

    /// Dense objective blocks and free costs.
    pub fn objective_dense(&self) -> (Vec<Mat<T>>, Vec<T>) {
        let mut blocks = self.zero_blocks();
        self.objective.add_adjoint(T::one(), &mut blocks);
        let mut free = vec![T::zero(); self.free_count];
        for &(j, v) in &self.objective.free {
            free[j] = free[j] + v;
        }
        (blocks, free)
    }

    pub fn zero_blocks(&self) -> Vec<Mat<T>> {
        self.block_sizes.iter().map(|&n| Mat::zeros(n, n)).collect()
    }

    /// Multiplies constraint `i` (both sides) by `k`.
    pub fn scale_row(&mut self, i: usize, k: T) {
        let c = &mut self.constraints[i];
        for e in &mut c.form.entries {
            e.value = e.value * k;
        }
        for f in &mut c.form.free {
            f.1 = f.1 * k;
        }
        c.rhs = c.rhs * k;
    }

    pub(crate) fn row_norm(&self, i: usize) -> T {
        self.constraints[i].form.norm_sq().sqrt()
    }

    /// Writes the problem in the sparse text format read by [`SdpProblem::from_dump`].
    ///
    /// ```text
    /// blocks <n_1> <n_2> ...
    /// free <count>
    /// rhs <b_1> <b_2> ... <b_m>
    /// <constraint> <block> <row> <col> <value>     one line per nonzero
    /// ```
    ///
    /// Constraint index 0 is the objective and constraints are numbered
    /// from 1. Blocks, rows and columns are 1-based; block 0 addresses free
    /// variables, with the free index in both the row and column fields.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.block_sizes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "blocks {}", sizes.join(" "));
        let _ = writeln!(s, "free {}", self.free_count);
        let rhs: Vec<String> = self.constraints.iter().map(|c| format!("{}", c.rhs)).collect();
        let _ = writeln!(s, "rhs {}", rhs.join(" "));
        let forms = std::iter::once(&self.objective).chain(self.constraints.iter().map(|c| &c.form));
        for (k, form) in forms.enumerate() {
            for e in &form.entries {
                let _ = writeln!(s, "{} {} {} {} {}", k, e.block + 1, e.row + 1, e.col + 1, e.value);
            }
            for &(j, v) in &form.free {
                let _ = writeln!(s, "{} 0 {} {} {}", k, j + 1, j + 1, v);
            }
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self, SdpError> {
        let err = |line: usize, msg: &str| SdpError::Dump {
            line,
            msg: msg.to_string(),
        };
        let num = |line: usize, t: &str| -> Result<f64, SdpError> {
            t.parse::<f64>().map_err(|_| err(line, "bad number"))
        };
        let idx = |line: usize, t: &str| -> Result<usize, SdpError> {
            t.parse::<usize>().map_err(|_| err(line, "bad index"))
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<(usize, Vec<String>), SdpError> {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated header"))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(err(ln, &format!("expected `{key}`")));
            }
            Ok((ln, it.map(str::to_string).collect()))
        };
        let (ln, b) = header("blocks")?;
        let block_sizes = b.iter().map(|t| idx(ln, t)).collect::<Result<Vec<_>, _>>()?;
        let (ln, f) = header("free")?;
        let free_count = idx(ln, f.first().ok_or_else(|| err(ln, "missing count"))?)?;
        let (ln, r) = header("rhs")?;
        let rhs = r.iter().map(|t| num(ln, t)).collect::<Result<Vec<_>, _>>()?;
        let mut forms: Vec<LinearForm<T>> = vec![LinearForm::new(); rhs.len() + 1];
        for (ln, l) in lines {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 5 {
                return Err(err(ln, "expected 5 fields"));
            }
            let k = idx(ln, t[0])?;
            let blk = idx(ln, t[1])?;
            let (r, c) = (idx(ln, t[2])?, idx(ln, t[3])?);
            let v = T::lit(num(ln, t[4])?);
            let form = forms.get_mut(k).ok_or_else(|| err(ln, "constraint index out of range"))?;
            if r == 0 || c == 0 {
                return Err(err(ln, "indices are 1-based"));
            }
            if blk == 0 {
                form.free.push((r - 1, v));
            } else {
                form.push_entry(blk - 1, r - 1, c - 1, v);
            }
        }
        let objective = forms.remove(0);
        let constraints = forms
            .into_iter()
            .zip(rhs)
            .map(|(form, b)| SdpConstraint {
                form,
                rhs: T::lit(b),
            })
            .collect();
        SdpProblem::new(block_sizes, free_count, constraints, objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    InfeasibleCertificate,
    NumericalFailure,
    IterationLimit,
    /// Dual side converged while the primal residual stopped decreasing.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SdpOptions<T> {
    pub feas_tol: T,
    pub gap_tol: T,
    pub eig_tol: T,
    pub max_iter: usize,
    /// Weight of the `trace(X)` term used when the objective is identically zero.
    pub feasibility_trace_weight: T,
    /// Regularization added to the Schur complement on a failed factorization.
    pub schur_regularization: T,
}

impl<T: Scalar> Default for SdpOptions<T> {
    fn default() -> Self {
        SdpOptions {
            feas_tol: T::lit(1e-8),
            gap_tol: T::lit(1e-8),
            eig_tol: T::lit(1e-9),
            max_iter: 200,
            feasibility_trace_weight: T::lit(1e-9),
            schur_regularization: T::lit(1e-12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution<T> {
    pub status: SdpStatus,
    /// Primal blocks `X_b`.
    pub x: Vec<Mat<T>>,
    /// Free primal variables `u`.
    pub free: Vec<T>,
    /// Dual multipliers. For an infeasibility certificate this is the
    /// normalized improving ray with `b^T y = 1`.
    pub y: Vec<T>,
    /// Dual slack blocks `S_b`.
    pub s: Vec<Mat<T>>,
    /// `||b - A(X) - B u||_2`
    pub primal_residual: T,
    /// `||C - A^T y - S||` combined with `||c_f - B^T y||`
    pub dual_residual: T,
    /// Complementarity `sum_b <X_b, S_b>`.
    pub gap: T,
    pub primal_objective: T,
    pub dual_objective: T,
    pub iterations: usize,
}

/// Diagonal entries of `X` below this fraction of the largest one are taken
/// to be forced to zero.
const COLLAPSE_RATIO: f64 = 1e-4;
const REDUCTION_ROUNDS: usize = 3;

/// [`solve`] followed, when it ends without a verdict, by rounds of numerical
/// facial reduction: rows of `X` whose diagonal collapsed are fixed to zero
/// and the smaller problem is solved again. Only an optimal solution of a
/// reduced problem is reported, padded back to the original blocks, since
/// infeasibility of a restriction says nothing about the original problem.
pub fn solve_with_reduction<T: Scalar>(prob: &SdpProblem<T>, opts: &SdpOptions<T>) -> SdpSolution<T> {
    let first = solve(prob, opts);
    let stuck = |s: SdpStatus| matches!(s, SdpStatus::NumericalFailure | SdpStatus::Stalled | SdpStatus::IterationLimit);
    if !stuck(first.status) {
        return first;
    }
    let mut keep: Vec<Vec<usize>> = prob.block_sizes.iter().map(|&n| (0..n).collect()).collect();
    let mut x = first.x.clone();
    let mut iterations = first.iterations;
    for _ in 0..REDUCTION_ROUNDS {
        let top = x
            .iter()
            .flat_map(|b| (0..b.rows()).map(move |i| b[(i, i)]))
            .fold(T::zero(), |a, v| a.max(v));
        let cut = T::lit(COLLAPSE_RATIO) * top;
        let next: Vec<Vec<usize>> = keep
            .iter()
            .enumerate()
            .map(|(b, k)| k.iter().copied().filter(|&i| x[b][(i, i)] > cut).collect())
            .collect();
        if next == keep {
            break;
        }
        keep = next;
        let dropped: usize = prob.block_sizes.iter().sum::<usize>() - keep.iter().map(Vec::len).sum::<usize>();
        log::debug!("facial reduction: {dropped} Gram rows fixed to zero");
        let Ok((sub, origin)) = prob.restrict(&keep) else { break };
        let sol = solve(&sub, opts);
        iterations += sol.iterations;
        x = prob.zero_blocks();
        for (nb, &b) in origin.iter().enumerate() {
            for (i, &ri) in keep[b].iter().enumerate() {
                for (j, &rj) in keep[b].iter().enumerate() {
                    x[b][(ri, rj)] = sol.x[nb][(i, j)];
                }
            }
        }
        if sol.status == SdpStatus::Optimal {
            let (aty, _) = prob.adjoint(&sol.y);
            let (cb, _) = prob.objective_dense();
            let s: Vec<Mat<T>> = cb.iter().zip(&aty).map(|(c, a)| c.sub(a)).collect();
            let (primal_residual, dual_residual, gap) =
                residuals(prob, &x, &sol.free, &sol.y, &s).expect("padded to the original dimensions");
            return SdpSolution {
                status: SdpStatus::Optimal,
                primal_objective: prob.objective().apply(&x, &sol.free),
                x,
                s,
                primal_residual,
                dual_residual,
                gap,
                iterations,
                ..sol
            };
        }
        if !stuck(sol.status) {
            break;
        }
    }
    SdpSolution { iterations, ..first }
}

/// Recomputes the residual triple `(primal, dual, gap)` from the problem
/// data, independent of any solver state.
pub fn residuals<T: Scalar>(
    prob: &SdpProblem<T>,
    x: &[Mat<T>],
    free: &[T],
    y: &[T],
    s: &[Mat<T>],
) -> Result<(T, T, T), SdpError> {
    check_dims(prob, x, free, y, s)?;
    let ax = prob.apply_constraints(x, free);
    let rp = prob
        .constraints
        .iter()
        .zip(&ax)
        .fold(T::zero(), |acc, (c, &v)| acc + (c.rhs - v) * (c.rhs - v))
        .sqrt();
    let (aty, bty) = prob.adjoint(y);
    let (cb, cf) = prob.objective_dense();
    let mut rd2 = T::zero();
    for b in 0..x.len() {
        let r = cb[b].sub(&aty[b]).sub(&s[b]);
        rd2 = rd2 + r.dot(&r);
    }
    for j in 0..free.len() {
        let r = cf[j] - bty[j];
        rd2 = rd2 + r * r;
    }
    let gap = x.iter().zip(s).fold(T::zero(), |acc, (a, b)| acc + a.dot(b));
    Ok((rp, rd2.sqrt(), gap))
}

fn check_dims<T: Scalar>(
    prob: &SdpProblem<T>,
    x: &[Mat<T>],
    free: &[T],
    y: &[T],
    s: &[Mat<T>],
) -> Result<(), SdpError> {
    if x.len() != prob.block_sizes.len() || s.len() != prob.block_sizes.len() {
        return Err(SdpError::Dimension("block count".into()));
    }
    for (b, &n) in prob.block_sizes.iter().enumerate() {
        for m in [&x[b], &s[b]] {
            if m.rows() != n || m.cols() != n {
                return Err(SdpError::Dimension(format!("block {b} must be {n}x{n}")));
            }
        }
    }
    if free.len() != prob.free_count {
        return Err(SdpError::Dimension("free variable count".into()));
    }
    if y.len() != prob.constraints.len() {
        return Err(SdpError::Dimension("dual vector length".into()));
    }
    Ok(())
}

/// Checks that `y` is an improving ray proving primal infeasibility: after
/// normalizing to `b^T y = 1`, `sum_i y_i A_i` has no eigenvalue above `tol`
/// and `|B^T y| <= tol`. Any primal feasible point then has
/// `trace(X) >= 1 / tol`, so the ray rules out every solution of moderate size.
pub fn verify_infeasibility_ray<T: Scalar>(prob: &SdpProblem<T>, y: &[T], tol: T) -> bool {
    if y.len() != prob.constraints.len() {
        return false;
    }
    let by = prob
        .constraints
        .iter()
        .zip(y)
        .fold(T::zero(), |acc, (c, &v)| acc + c.rhs * v);
    if !(by > T::zero()) {
        return false;
    }
    let ybar: Vec<T> = y.iter().map(|&v| v / by).collect();
    let (aty, bty) = prob.adjoint(&ybar);
    for m in &aty {
        if m.rows() == 0 {
            continue;
        }
        let lmax = dense::sym_eigenvalues(m).last().copied().unwrap_or_else(T::zero);
        if !(lmax <= tol) {
            return false;
        }
    }
    bty.iter().all(|&v| v.abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one() -> SdpProblem<f64> {
        SdpProblem::new(
            vec![1],
            0,
            vec![SdpConstraint {
                form: LinearForm::new().entry(0, 0, 0, 1.0),
                rhs: 1.0,
            }],
            LinearForm::new().entry(0, 0, 0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn validation_errors() {
        let e = SdpProblem::<f64>::new(vec![2], 0, vec![], LinearForm::new());
        assert_eq!(e.unwrap_err(), SdpError::NoConstraints);
        let e = SdpProblem::<f64>::new(
            vec![2],
            0,
            vec![SdpConstraint {
                form: LinearForm::new().entry(0, 2, 0, 1.0),
                rhs: 0.0,
            }],
            LinearForm::new(),
        );
        assert!(matches!(e, Err(SdpError::EntryOutOfRange { .. })));
        let e = SdpProblem::<f64>::new(
            vec![],
            0,
            vec![SdpConstraint {
                form: LinearForm::new(),
                rhs: 0.0,
            }],
            LinearForm::new(),
        );
        assert_eq!(e.unwrap_err(), SdpError::NoVariables);
    }

    #[test]
    fn zero_primal_residual_is_norm_of_rhs() {
        let p = SdpProblem::new(
            vec![2],
            0,
            vec![
                SdpConstraint {
                    form: LinearForm::new().entry(0, 0, 0, 1.0),
                    rhs: 3.0,
                },
                SdpConstraint {
                    form: LinearForm::new().entry(0, 0, 1, 1.0),
                    rhs: 4.0,
                },
            ],
            LinearForm::new(),
        )
        .unwrap();
        let (rp, _, gap) = residuals(
            &p,
            &[Mat::zeros(2, 2)],
            &[],
            &[0.0, 0.0],
            &[Mat::identity(2)],
        )
        .unwrap();
        assert_eq!(rp, 5.0);
        assert_eq!(gap, 0.0);
        assert!(residuals(&p, &[Mat::zeros(3, 3)], &[], &[0.0, 0.0], &[Mat::identity(2)]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let p = SdpProblem::new(
            vec![2, 1],
            1,
            vec![
                SdpConstraint {
                    form: LinearForm::new().entry(0, 1, 0, 0.5).entry(1, 0, 0, -2.0).free_coef(0, 3.0),
                    rhs: 1.25,
                },
                SdpConstraint {
                    form: LinearForm::new().entry(0, 1, 1, 1.0),
                    rhs: 0.0,
                },
            ],
            LinearForm::new().entry(0, 0, 0, 1.0).free_coef(0, -1.0),
        )
        .unwrap();
        let text = p.to_dump();
        assert!(text.starts_with("blocks 2 1\nfree 1\nrhs 1.25 0\n"));
        let q = SdpProblem::<f64>::from_dump(&text).unwrap();
        assert_eq!(p, q);
        assert!(SdpProblem::<f64>::from_dump("blocks 1\nfree 0\nrhs 1\n1 1 1 1").is_err());
    }

    #[test]
    fn trivial_problem_solves() {
        let sol = solve(&one_by_one(), &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.x[0][(0, 0)] - 1.0).abs() < 1e-7);
    }
}
