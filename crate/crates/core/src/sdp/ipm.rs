//! Infeasible primal-dual path-following method with the HKM direction and
//! Mehrotra predictor-corrector steps.
//!
//! Free variables are kept in the Newton system through the augmented
//! Schur complement `K = M + rho B B^T`, which stays positive definite when
//! the constraint rows are independent, followed by a small `f x f` system
//! for the free step.

use log::debug;

use super::dense::{sym_eigenvalues, Cholesky, Mat};
use super::{residuals, verify_infeasibility_ray, SdpOptions, SdpProblem, SdpSolution, SdpStatus};
use crate::scalar::Scalar;

/// Iterations over which the primal residual must at least halve once the
/// dual side has converged.
const STALL_WINDOW: usize = 15;

type Entries<T> = Vec<(usize, usize, T)>;

/// Row-normalized copy of the problem with zero rows and unused free
/// variables removed.
struct Work<T> {
    sizes: Vec<usize>,
    /// kept constraint index -> original index
    rows: Vec<usize>,
    /// kept free index -> original index
    frees: Vec<usize>,
    /// per original row
    row_scale: Vec<T>,
    b: Vec<T>,
    cb: Vec<Mat<T>>,
    cf: Vec<T>,
    cscale: T,
    /// per block: (kept row, entries) with rows ascending
    per_block: Vec<Vec<(usize, Entries<T>)>>,
    /// per kept row: free coefficients over kept free indices
    free_rows: Vec<Vec<(usize, T)>>,
    bmat: Mat<T>,
}

impl<T: Scalar> Work<T> {
    fn new(prob: &SdpProblem<T>, opts: &SdpOptions<T>) -> Result<Self, Vec<T>> {
        let m0 = prob.num_constraints();
        let mut row_scale = vec![T::zero(); m0];
        let mut rows = Vec::new();
        for i in 0..m0 {
            let nrm = prob.row_norm(i);
            let rhs = prob.constraints()[i].rhs;
            if nrm == T::zero() {
                if rhs != T::zero() {
                    // 0 = b_i with b_i != 0: unit ray on that row
                    let mut y = vec![T::zero(); m0];
                    y[i] = T::one() / rhs;
                    return Err(y);
                }
                continue;
            }
            row_scale[i] = T::one() / nrm;
            rows.push(i);
        }
        let mut used = vec![false; prob.free_count()];
        for &i in &rows {
            for &(j, _) in &prob.constraints()[i].form.free {
                used[j] = true;
            }
        }
        let frees: Vec<usize> = (0..prob.free_count()).filter(|&j| used[j]).collect();
        let mut free_pos = vec![usize::MAX; prob.free_count()];
        for (k, &j) in frees.iter().enumerate() {
            free_pos[j] = k;
        }

        let sizes = prob.block_sizes().to_vec();
        let mut per_block: Vec<Vec<(usize, Entries<T>)>> = vec![Vec::new(); sizes.len()];
        let mut free_rows = Vec::with_capacity(rows.len());
        let mut b = Vec::with_capacity(rows.len());
        let mut bmat = Mat::zeros(rows.len(), frees.len());
        for (k, &i) in rows.iter().enumerate() {
            let c = &prob.constraints()[i];
            let d = row_scale[i];
            b.push(c.rhs * d);
            let mut last_block = usize::MAX;
            for e in &c.form.entries {
                if e.block != last_block {
                    per_block[e.block].push((k, Vec::new()));
                    last_block = e.block;
                }
                let slot = per_block[e.block].last_mut().expect("pushed above");
                slot.1.push((e.row, e.col, e.value * d));
            }
            let fr: Vec<(usize, T)> = c
                .form
                .free
                .iter()
                .map(|&(j, v)| (free_pos[j], v * d))
                .collect();
            for &(j, v) in &fr {
                bmat[(k, j)] = v;
            }
            free_rows.push(fr);
        }

        let (mut cb, cf_full) = if prob.objective().is_zero() {
            let w = opts.feasibility_trace_weight;
            (
                sizes.iter().map(|&n| Mat::identity(n).scale(w)).collect(),
                vec![T::zero(); prob.free_count()],
            )
        } else {
            prob.objective_dense()
        };
        let mut cf: Vec<T> = frees.iter().map(|&j| cf_full[j]).collect();
        let cnorm = (cb.iter().map(|m| m.dot(m)).sum::<T>()
            + cf.iter().map(|&v| v * v).sum::<T>())
        .sqrt();
        let cscale = cnorm.max(T::one());
        for m in &mut cb {
            *m = m.scale(T::one() / cscale);
        }
        for v in &mut cf {
            *v = *v / cscale;
        }
        Ok(Work {
            sizes,
            rows,
            frees,
            row_scale,
            b,
            cb,
            cf,
            cscale,
            per_block,
            free_rows,
            bmat,
        })
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn f(&self) -> usize {
        self.frees.len()
    }

    /// `A(W)` for blocks that need not be symmetric.
    fn apply(&self, w: &[Mat<T>]) -> Vec<T> {
        let mut out = vec![T::zero(); self.m()];
        for (blk, list) in self.per_block.iter().enumerate() {
            let wb = &w[blk];
            for (k, ent) in list {
                let mut s = T::zero();
                for &(r, c, v) in ent {
                    s = s + if r == c {
                        v * wb[(r, r)]
                    } else {
                        v * (wb[(r, c)] + wb[(c, r)])
                    };
                }
                out[*k] = out[*k] + s;
            }
        }
        out
    }

    fn adjoint(&self, y: &[T]) -> Vec<Mat<T>> {
        let mut out: Vec<Mat<T>> = self.sizes.iter().map(|&n| Mat::zeros(n, n)).collect();
        for (blk, list) in self.per_block.iter().enumerate() {
            let o = &mut out[blk];
            for (k, ent) in list {
                let yk = y[*k];
                if yk == T::zero() {
                    continue;
                }
                for &(r, c, v) in ent {
                    o[(r, c)] = o[(r, c)] + yk * v;
                    if r != c {
                        o[(c, r)] = o[(c, r)] + yk * v;
                    }
                }
            }
        }
        out
    }

    fn b_mul(&self, u: &[T]) -> Vec<T> {
        self.free_rows
            .iter()
            .map(|fr| fr.iter().fold(T::zero(), |acc, &(j, v)| acc + v * u[j]))
            .collect()
    }

    fn bt_mul(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.f()];
        for (fr, &yk) in self.free_rows.iter().zip(y) {
            for &(j, v) in fr {
                out[j] = out[j] + v * yk;
            }
        }
        out
    }

    /// Schur complement `M_ij = tr(A_i X A_j S^{-1})`, lower triangle filled.
    fn schur(&self, x: &[Mat<T>], sinv: &[Mat<T>]) -> Mat<T> {
        let m = self.m();
        let mut out = Mat::zeros(m, m);
        for (blk, list) in self.per_block.iter().enumerate() {
            let n = self.sizes[blk];
            let xs = x[blk].as_slice();
            let si = sinv[blk].as_slice();
            let mut g = vec![T::zero(); n * n];
            for (pi, (i, ei)) in list.iter().enumerate() {
                if ei.len() > n {
                    let mut a = Mat::zeros(n, n);
                    for &(r, c, v) in ei {
                        a[(r, c)] = a[(r, c)] + v;
                        if r != c {
                            a[(c, r)] = a[(c, r)] + v;
                        }
                    }
                    let prod = x[blk].matmul(&a.matmul(&sinv[blk]));
                    g.copy_from_slice(prod.as_slice());
                } else {
                    g.iter_mut().for_each(|v| *v = T::zero());
                    for &(r, c, v) in ei {
                        add_outer(&mut g, n, &xs[r * n..(r + 1) * n], &si[c * n..(c + 1) * n], v);
                        if r != c {
                            add_outer(&mut g, n, &xs[c * n..(c + 1) * n], &si[r * n..(r + 1) * n], v);
                        }
                    }
                }
                let col = out.col_mut(*i);
                for (j, ej) in &list[pi..] {
                    let mut s = T::zero();
                    for &(r, c, v) in ej {
                        s = s + if r == c {
                            v * g[r * n + r]
                        } else {
                            v * (g[c * n + r] + g[r * n + c])
                        };
                    }
                    col[*j] = col[*j] + s;
                }
            }
        }
        out
    }

    /// Ray check on the scaled rows; the same test as
    /// [`verify_infeasibility_ray`] since row scaling leaves `b^T y` and
    /// `sum_i y_i A_i` unchanged.
    fn ray_ok(&self, y: &[T], tol: T) -> bool {
        let by = dotv(&self.b, y);
        if !(by > T::zero()) {
            return false;
        }
        let ybar: Vec<T> = y.iter().map(|&v| v / by).collect();
        for m in self.adjoint(&ybar) {
            if m.rows() == 0 {
                continue;
            }
            let lmax = sym_eigenvalues(&m).last().copied().unwrap_or_else(T::zero);
            if !(lmax <= tol) {
                return false;
            }
        }
        self.bt_mul(&ybar).iter().all(|&v| v.abs() <= tol)
    }
}

fn add_outer<T: Scalar>(g: &mut [T], n: usize, xcol: &[T], scol: &[T], v: T) {
    for q in 0..n {
        let w = v * scol[q];
        if w == T::zero() {
            continue;
        }
        let dst = &mut g[q * n..(q + 1) * n];
        for (d, &a) in dst.iter_mut().zip(xcol) {
            *d = *d + w * a;
        }
    }
}

fn dotv<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm2<T: Scalar>(a: &[T]) -> T {
    dotv(a, a).sqrt()
}

fn blocks_dot<T: Scalar>(a: &[Mat<T>], b: &[Mat<T>]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.dot(y))
}

/// Largest step in `[0, 1]` keeping `X + a dX` PSD, given `chol(X)`.
fn max_step<T: Scalar>(chol: &[Cholesky<T>], dx: &[Mat<T>]) -> T {
    let mut a = T::one();
    for (c, d) in chol.iter().zip(dx) {
        if c.dim() == 0 {
            continue;
        }
        let lam = sym_eigenvalues(&c.congruence_inv(d))[0];
        if lam < T::zero() {
            a = a.min(-T::one() / lam);
        }
    }
    a
}

/// Factors `a`, retrying once with a small diagonal shift.
fn factor_regularized<T: Scalar>(a: Mat<T>, reg: T) -> Option<Cholesky<T>> {
    let n = a.rows();
    if n == 0 {
        return Cholesky::new(a);
    }
    let scale = (0..n).fold(T::zero(), |acc, i| acc.max(a[(i, i)].abs())).max(T::one());
    let mut shifted = a.clone();
    match Cholesky::new(a) {
        Some(c) => Some(c),
        None => {
            debug!("schur factorization failed; regularizing");
            for i in 0..n {
                shifted[(i, i)] = shifted[(i, i)] + reg * scale;
            }
            Cholesky::new(shifted)
        }
    }
}

#[derive(Clone)]
struct Iterate<T> {
    x: Vec<Mat<T>>,
    u: Vec<T>,
    y: Vec<T>,
    s: Vec<Mat<T>>,
}

struct Direction<T> {
    dx: Vec<Mat<T>>,
    du: Vec<T>,
    dy: Vec<T>,
    ds: Vec<Mat<T>>,
}

/// Solves `prob` and reports the final iterate in the original scaling.
pub fn solve<T: Scalar>(prob: &SdpProblem<T>, opts: &SdpOptions<T>) -> SdpSolution<T> {
    let work = match Work::new(prob, opts) {
        Ok(w) => w,
        Err(ray) => {
            return finish(
                prob,
                SdpStatus::InfeasibleCertificate,
                prob.zero_blocks(),
                vec![T::zero(); prob.free_count()],
                ray,
                prob.zero_blocks(),
                0,
            )
        }
    };
    let (mut status, it, iters) = run(&work, opts);

    let m0 = prob.num_constraints();
    let mut y = vec![T::zero(); m0];
    if status == SdpStatus::InfeasibleCertificate {
        for (k, &i) in work.rows.iter().enumerate() {
            y[i] = it.y[k] * work.row_scale[i];
        }
        let by = prob
            .constraints()
            .iter()
            .zip(&y)
            .fold(T::zero(), |acc, (c, &v)| acc + c.rhs * v);
        y.iter_mut().for_each(|v| *v = *v / by);
        if !verify_infeasibility_ray(prob, &y, opts.feas_tol) {
            debug!("ray failed independent verification");
            status = SdpStatus::IterationLimit;
        }
    } else {
        for (k, &i) in work.rows.iter().enumerate() {
            y[i] = it.y[k] * work.row_scale[i] * work.cscale;
        }
    }
    let mut u = vec![T::zero(); prob.free_count()];
    for (k, &j) in work.frees.iter().enumerate() {
        u[j] = it.u[k];
    }
    let s = it.s.iter().map(|m| m.scale(work.cscale)).collect();
    finish(prob, status, it.x, u, y, s, iters)
}

fn finish<T: Scalar>(
    prob: &SdpProblem<T>,
    status: SdpStatus,
    x: Vec<Mat<T>>,
    free: Vec<T>,
    y: Vec<T>,
    s: Vec<Mat<T>>,
    iterations: usize,
) -> SdpSolution<T> {
    let (primal_residual, dual_residual, gap) =
        residuals(prob, &x, &free, &y, &s).expect("solver keeps dimensions consistent");
    let primal_objective = prob.objective().apply(&x, &free);
    let dual_objective = prob
        .constraints()
        .iter()
        .zip(&y)
        .fold(T::zero(), |acc, (c, &v)| acc + c.rhs * v);
    SdpSolution {
        status,
        x,
        free,
        y,
        s,
        primal_residual,
        dual_residual,
        gap,
        primal_objective,
        dual_objective,
        iterations,
    }
}

fn run<T: Scalar>(w: &Work<T>, opts: &SdpOptions<T>) -> (SdpStatus, Iterate<T>, usize) {
    let m = w.m();
    let f = w.f();
    let ntot = T::from_usize(w.sizes.iter().sum::<usize>().max(1)).expect("size");
    let one = T::one();
    let ten = T::lit(10.0);

    let bnorm = norm2(&w.b);
    let cnorm = (blocks_dot(&w.cb, &w.cb) + dotv(&w.cf, &w.cf)).sqrt();

    let mut it = Iterate {
        x: Vec::new(),
        u: vec![T::zero(); f],
        y: vec![T::zero(); m],
        s: Vec::new(),
    };
    for (blk, &n) in w.sizes.iter().enumerate() {
        let nf = T::from_usize(n).expect("size");
        let mut xi = ten.max(nf.sqrt());
        for (k, _) in &w.per_block[blk] {
            xi = xi.max(nf * (one + w.b[*k].abs()) / (one + one));
        }
        let eta = ten.max(nf.sqrt()).max(w.cb[blk].frob_norm());
        it.x.push(Mat::identity(n).scale(xi));
        it.s.push(Mat::identity(n).scale(eta));
    }

    let mut gamma = T::lit(0.9);
    let mut stalls = 0;
    let mut iter = 0;
    let mut relp_hist: Vec<T> = Vec::new();
    let mut best_relp = T::infinity();
    // iterate with the smallest primal residual, reported on failure
    let mut best: Option<Iterate<T>> = None;
    macro_rules! give_up {
        ($status:expr) => {
            return ($status, best.unwrap_or(it), iter)
        };
    }
    loop {
        // residuals
        let ax = w.apply(&it.x);
        let bu = w.b_mul(&it.u);
        let rp: Vec<T> = (0..m).map(|i| w.b[i] - ax[i] - bu[i]).collect();
        let aty = w.adjoint(&it.y);
        let rd: Vec<Mat<T>> = (0..w.sizes.len())
            .map(|b| w.cb[b].sub(&aty[b]).sub(&it.s[b]))
            .collect();
        let bty = w.bt_mul(&it.y);
        let rf: Vec<T> = (0..f).map(|j| w.cf[j] - bty[j]).collect();

        let pobj = blocks_dot(&w.cb, &it.x) + dotv(&w.cf, &it.u);
        let dobj = dotv(&w.b, &it.y);
        let gap = blocks_dot(&it.x, &it.s);
        let mu = gap / ntot;
        let relp = norm2(&rp) / (one + bnorm);
        let reld = (blocks_dot(&rd, &rd) + dotv(&rf, &rf)).sqrt() / (one + cnorm);
        let relgap = gap / (one + pobj.abs() + dobj.abs());
        debug!(
            "iter {iter}: pobj {pobj:e} dobj {dobj:e} relp {relp:e} reld {reld:e} relgap {relgap:e}"
        );

        if !(relp.is_finite() && reld.is_finite() && relgap.is_finite()) {
            give_up!(SdpStatus::NumericalFailure);
        }
        if relp <= opts.feas_tol && reld <= opts.feas_tol && gap * w.cscale <= opts.gap_tol {
            return (SdpStatus::Optimal, it, iter);
        }
        if dobj > T::zero() && w.ray_ok(&it.y, opts.feas_tol) {
            return (SdpStatus::InfeasibleCertificate, it, iter);
        }
        if relp < best_relp {
            best_relp = relp;
            best = Some(it.clone());
        }
        if relp > T::lit(1e4) * best_relp.max(opts.feas_tol) {
            debug!("primal residual diverged from {best_relp:e}");
            give_up!(SdpStatus::NumericalFailure);
        }
        if reld <= opts.feas_tol && relgap <= opts.gap_tol.sqrt() {
            relp_hist.push(relp);
            let n = relp_hist.len();
            if n > STALL_WINDOW && relp > T::lit(0.5) * relp_hist[n - 1 - STALL_WINDOW] {
                give_up!(SdpStatus::Stalled);
            }
        } else {
            relp_hist.clear();
        }
        if iter >= opts.max_iter {
            give_up!(SdpStatus::IterationLimit);
        }
        iter += 1;

        let chol_x: Option<Vec<Cholesky<T>>> = it.x.iter().map(|x| Cholesky::new(x.clone())).collect();
        let chol_s: Option<Vec<Cholesky<T>>> = it.s.iter().map(|s| Cholesky::new(s.clone())).collect();
        let (Some(chol_x), Some(chol_s)) = (chol_x, chol_s) else {
            give_up!(SdpStatus::NumericalFailure);
        };
        let sinv: Vec<Mat<T>> = chol_s.iter().map(|c| c.inverse()).collect();

        let mut k = w.schur(&it.x, &sinv);
        let rho = if f > 0 {
            let tr = (0..m).fold(T::zero(), |a, i| a + k[(i, i)]);
            let bb = w.bmat.dot(&w.bmat);
            (tr / bb.max(T::min_positive_value())).max(T::lit(1e-8))
        } else {
            T::zero()
        };
        if f > 0 {
            for (fr_i, i) in w.free_rows.iter().zip(0..m) {
                for (fr_j, j) in w.free_rows[i..].iter().zip(i..m) {
                    let mut s = T::zero();
                    // sparse dot of two free rows
                    for &(a, va) in fr_i {
                        for &(b, vb) in fr_j {
                            if a == b {
                                s = s + va * vb;
                            }
                        }
                    }
                    if s != T::zero() {
                        k[(j, i)] = k[(j, i)] + rho * s;
                    }
                }
            }
        }
        let Some(kc) = factor_regularized(k, opts.schur_regularization) else {
            give_up!(SdpStatus::NumericalFailure);
        };
        let (ymat, fc) = if f > 0 {
            let ymat = kc.forward_mat(&w.bmat);
            let fm = ymat.transpose().matmul(&ymat);
            match factor_regularized(fm, opts.schur_regularization) {
                Some(fc) => (ymat, Some(fc)),
                None => give_up!(SdpStatus::NumericalFailure),
            }
        } else {
            (Mat::zeros(m, 0), None)
        };

        let direction = |g: &[Mat<T>]| -> Direction<T> {
            let wmat: Vec<Mat<T>> = (0..g.len())
                .map(|b| g[b].sub(&it.x[b].matmul(&rd[b]).matmul(&sinv[b])))
                .collect();
            let aw = w.apply(&wmat);
            let bf = w.b_mul(&rf);
            let r1: Vec<T> = (0..m).map(|i| rp[i] - aw[i] + rho * bf[i]).collect();
            let du = match &fc {
                Some(fc) => {
                    let mut t = r1.clone();
                    kc.forward(&mut t);
                    let z: Vec<T> = (0..f)
                        .map(|j| dotv(ymat.col(j), &t) - rf[j])
                        .collect();
                    fc.solve(&z)
                }
                None => Vec::new(),
            };
            let bdu = w.b_mul(&du);
            let rhs: Vec<T> = (0..m).map(|i| r1[i] - bdu[i]).collect();
            let dy = kc.solve(&rhs);
            let atdy = w.adjoint(&dy);
            let ds: Vec<Mat<T>> = (0..rd.len()).map(|b| rd[b].sub(&atdy[b])).collect();
            let dx: Vec<Mat<T>> = (0..g.len())
                .map(|b| {
                    let mut d = g[b].sub(&it.x[b].matmul(&ds[b]).matmul(&sinv[b]));
                    d.symmetrize();
                    d
                })
                .collect();
            Direction { dx, du, dy, ds }
        };

        // predictor
        let g_aff: Vec<Mat<T>> = it.x.iter().map(|x| x.scale(-one)).collect();
        let aff = direction(&g_aff);
        let ap = max_step(&chol_x, &aff.dx);
        let ad = max_step(&chol_s, &aff.ds);
        let mut mu_aff = T::zero();
        for b in 0..it.x.len() {
            let mut xa = it.x[b].clone();
            xa.axpy(ap, &aff.dx[b]);
            let mut sa = it.s[b].clone();
            sa.axpy(ad, &aff.ds[b]);
            mu_aff = mu_aff + xa.dot(&sa);
        }
        mu_aff = mu_aff / ntot;
        let expon = if mu > T::lit(1e-6) {
            one.max(T::lit(3.0) * ap.min(ad) * ap.min(ad))
        } else {
            T::lit(3.0)
        };
        let sigma = if mu > T::zero() {
            (mu_aff / mu).max(T::zero()).powf(expon).min(one)
        } else {
            T::zero()
        };

        // corrector
        let g_cor: Vec<Mat<T>> = (0..it.x.len())
            .map(|b| {
                let corr = aff.dx[b].matmul(&aff.ds[b]).matmul(&sinv[b]);
                sinv[b].scale(sigma * mu).sub(&it.x[b]).sub(&corr)
            })
            .collect();
        let dir = direction(&g_cor);
        let ap = (gamma * max_step(&chol_x, &dir.dx)).min(one);
        let ad = (gamma * max_step(&chol_s, &dir.ds)).min(one);
        gamma = T::lit(0.9) + T::lit(0.09) * ap.min(ad);

        for b in 0..it.x.len() {
            it.x[b].axpy(ap, &dir.dx[b]);
            it.x[b].symmetrize();
            it.s[b].axpy(ad, &dir.ds[b]);
            it.s[b].symmetrize();
        }
        for j in 0..f {
            it.u[j] = it.u[j] + ap * dir.du[j];
        }
        for i in 0..m {
            it.y[i] = it.y[i] + ad * dir.dy[i];
        }

        if ap.max(ad) < T::lit(1e-10) {
            stalls += 1;
            if stalls >= 3 {
                give_up!(SdpStatus::IterationLimit);
            }
        } else {
            stalls = 0;
        }
    }
}
