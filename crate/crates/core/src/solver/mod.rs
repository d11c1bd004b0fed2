//! Sparse convex quadratic programs
//!
//! ```text
//! minimize ½ xᵀPx + qᵀx   subject to   l ≤ Ax ≤ u
//! ```
//!
//! Two methods share the sparse LDLᵀ kernel. The operator-splitting (ADMM)
//! path follows OSQP: Ruiz equilibration, one quasi-definite KKT
//! factorization reused across iterations, over-relaxation, residual-balancing
//! step-size updates, and an optional active-set polish. The interior-point
//! path refactors every iteration but needs only a few dozen of them.

mod ipm;
mod ldl;

pub use ldl::{Ldl, PermutedLdl, UpperCsc};

use std::time::Instant;

use crate::{Error, Result};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Duplicates are summed; rows sorted within columns.
    pub fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Self {
        let mut sorted = t.to_vec();
        sorted.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowind = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "entry ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                rowind.push(r);
                values.push(v);
                colptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowind[k]] += self.values[k] * xc;
            }
        }
        y
    }

    pub fn tmul(&self, y: &[f64]) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| (self.colptr[c]..self.colptr[c + 1]).map(|k| self.values[k] * y[self.rowind[k]]).sum())
            .collect()
    }

    /// `y = S x` for a symmetric matrix stored as its upper triangle.
    pub fn sym_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowind[k];
                let v = self.values[k];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    /// `diag(rows) · M · diag(cols)` in place.
    fn scale(&mut self, rows: &[f64], cols: &[f64]) {
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                self.values[k] *= rows[self.rowind[k]] * cols[c];
            }
        }
    }

    fn col_norms_inf(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| (self.colptr[c]..self.colptr[c + 1]).map(|k| self.values[k].abs()).fold(0.0, f64::max))
            .collect()
    }

    fn row_norms_inf(&self) -> Vec<f64> {
        let mut r = vec![0.0f64; self.nrows];
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                r[self.rowind[k]] = r[self.rowind[k]].max(self.values[k].abs());
            }
        }
        r
    }

    /// Column ∞-norms of a symmetric matrix stored as its upper triangle.
    fn sym_col_norms_inf(&self) -> Vec<f64> {
        let mut r = vec![0.0f64; self.ncols];
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                let v = self.values[k].abs();
                r[c] = r[c].max(v);
                r[self.rowind[k]] = r[self.rowind[k]].max(v);
            }
        }
        r
    }
}

/// `½ xᵀPx + qᵀx` s.t. `l ≤ Ax ≤ u`; `p` holds the upper triangle.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.sym_mul(x);
        0.5 * dot(x, &px) + dot(&self.q, x)
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.p.nrows != n || self.p.ncols != n || self.a.ncols != n || self.a.nrows != m || self.u.len() != m {
            return Err(Error::Dimension(format!(
                "QP with n = {n}, m = {m} has P {}x{}, A {}x{}, |u| = {}",
                self.p.nrows,
                self.p.ncols,
                self.a.nrows,
                self.a.ncols,
                self.u.len()
            )));
        }
        for c in 0..n {
            for k in self.p.colptr[c]..self.p.colptr[c + 1] {
                if self.p.rowind[k] > c {
                    return Err(Error::Dimension("P must be upper triangular".into()));
                }
            }
        }
        if let Some(i) = (0..m).find(|&i| !(self.l[i] <= self.u[i])) {
            return Err(Error::InvalidParameter(format!("bounds l[{i}] > u[{i}]")));
        }
        Ok(())
    }

    /// Unscaled primal and dual residuals (∞-norm) of a point.
    pub fn residuals(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let ax = self.a.mul(x);
        let prim = ax
            .iter()
            .zip(self.l.iter().zip(&self.u))
            .map(|(v, (l, u))| (v - v.clamp(*l, *u)).abs())
            .fold(0.0, f64::max);
        let px = self.p.sym_mul(x);
        let aty = self.a.tmul(y);
        let dual = (0..self.n()).map(|j| (px[j] + self.q[j] + aty[j]).abs()).fold(0.0, f64::max);
        (prim, dual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Admm,
    InteriorPoint,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub method: Method,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    /// Iterations between step-size reviews.
    pub adaptive_rho_interval: usize,
    /// Refactor only when rho changes by more than this factor.
    pub adaptive_rho_tolerance: f64,
    pub check_interval: usize,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
    /// Interior point: tolerance on scaled residuals and mean complementarity.
    pub ipm_eps: f64,
    pub ipm_max_iter: usize,
    pub verbose: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: Method::InteriorPoint,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 200_000,
            scaling_iters: 10,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            check_interval: 10,
            polish: true,
            polish_delta: 1e-7,
            polish_refine_iters: 10,
            ipm_eps: 1e-10,
            ipm_max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho_updates: usize,
    pub polished: bool,
    pub factor_nnz: usize,
    pub seconds: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn clamp_scale(v: f64) -> f64 {
    if v < SCALE_MIN {
        1.0
    } else {
        v.clamp(SCALE_MIN, SCALE_MAX)
    }
}

/// Ruiz-equilibrated copy of the problem.
struct Scaled {
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn equilibrate(prob: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (prob.n(), prob.m());
    let mut s = Scaled {
        p: prob.p.clone(),
        q: prob.q.clone(),
        a: prob.a.clone(),
        l: prob.l.clone(),
        u: prob.u.clone(),
        d: vec![1.0; n],
        e: vec![1.0; m],
        c: 1.0,
    };
    for _ in 0..iters {
        let pn = s.p.sym_col_norms_inf();
        let an = s.a.col_norms_inf();
        let dt: Vec<f64> = (0..n).map(|j| 1.0 / clamp_scale(pn[j].max(an[j])).sqrt()).collect();
        let et: Vec<f64> = s.a.row_norms_inf().into_iter().map(|v| 1.0 / clamp_scale(v).sqrt()).collect();
        s.p.scale(&dt, &dt);
        s.a.scale(&et, &dt);
        for j in 0..n {
            s.q[j] *= dt[j];
            s.d[j] *= dt[j];
        }
        for i in 0..m {
            s.e[i] *= et[i];
        }
        // Cost scaling.
        let pn = s.p.sym_col_norms_inf();
        let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let ct = 1.0 / clamp_scale(mean.max(norm_inf(&s.q)));
        s.p.values.iter_mut().for_each(|v| *v *= ct);
        s.q.iter_mut().for_each(|v| *v *= ct);
        s.c *= ct;
    }
    for i in 0..m {
        s.l[i] = prob.l[i] * s.e[i];
        s.u[i] = prob.u[i] * s.e[i];
    }
    s
}

/// KKT `[P + σI, Aᵀ; A, −diag(1/ρ)]` in upper-triangular form.
fn kkt_triplets(p: &CscMatrix, a: &CscMatrix, sigma: f64, rho: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = p.ncols;
    let mut t = Vec::with_capacity(p.nnz() + a.nnz() + n + rho.len());
    for c in 0..n {
        for k in p.colptr[c]..p.colptr[c + 1] {
            t.push((p.rowind[k], c, p.values[k]));
        }
        t.push((c, c, sigma));
        for k in a.colptr[c]..a.colptr[c + 1] {
            t.push((c, n + a.rowind[k], a.values[k]));
        }
    }
    for (i, r) in rho.iter().enumerate() {
        t.push((n + i, n + i, -1.0 / r));
    }
    t
}

fn rho_vector(l: &[f64], u: &[f64], rho: f64) -> Vec<f64> {
    l.iter()
        .zip(u)
        .map(|(lo, hi)| if lo == hi { RHO_EQ_FACTOR * rho } else { rho })
        .collect()
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

fn residuals(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], set: &Settings) -> Residuals {
    let ax = s.a.mul(x);
    let px = s.p.sym_mul(x);
    let aty = s.a.tmul(y);
    let mut prim = 0.0f64;
    let mut ax_n = 0.0f64;
    let mut z_n = 0.0f64;
    for i in 0..ax.len() {
        let einv = 1.0 / s.e[i];
        prim = prim.max(((ax[i] - z[i]) * einv).abs());
        ax_n = ax_n.max((ax[i] * einv).abs());
        z_n = z_n.max((z[i] * einv).abs());
    }
    let cinv = 1.0 / s.c;
    let mut dual = 0.0f64;
    let (mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..x.len() {
        let dinv = cinv / s.d[j];
        dual = dual.max(((px[j] + s.q[j] + aty[j]) * dinv).abs());
        px_n = px_n.max((px[j] * dinv).abs());
        aty_n = aty_n.max((aty[j] * dinv).abs());
        q_n = q_n.max((s.q[j] * dinv).abs());
    }
    let prim_scale = ax_n.max(z_n);
    let dual_scale = px_n.max(aty_n).max(q_n);
    Residuals {
        prim,
        dual,
        eps_prim: set.eps_abs + set.eps_rel * prim_scale,
        eps_dual: set.eps_abs + set.eps_rel * dual_scale,
        prim_scale,
        dual_scale,
    }
}

/// Solves the QP with the configured method. `warm` is an optional
/// unscaled (x, y) starting point; only ADMM uses it.
pub fn solve(prob: &QpProblem, set: &Settings, warm: Option<(&[f64], &[f64])>) -> Result<Solution> {
    prob.validate()?;
    match set.method {
        Method::Admm => solve_admm(prob, set, warm),
        Method::InteriorPoint => ipm::solve(prob, set),
    }
}

fn solve_admm(prob: &QpProblem, set: &Settings, warm: Option<(&[f64], &[f64])>) -> Result<Solution> {
    let start = Instant::now();
    let (n, m) = (prob.n(), prob.m());
    let s = equilibrate(prob, set.scaling_iters);

    let mut rho_scalar = set.rho;
    let mut rho = rho_vector(&s.l, &s.u, rho_scalar);
    let kkt = UpperCsc::from_triplets(n + m, &kkt_triplets(&s.p, &s.a, set.sigma, &rho));
    let mut fact = PermutedLdl::new(&kkt)?;
    let diag_pos: Vec<usize> = (0..m).map(|i| fact.diag_position(n + i)).collect();

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut z = vec![0.0; m];
    if let Some((x0, y0)) = warm {
        for j in 0..n {
            x[j] = x0[j] / s.d[j];
        }
        for i in 0..m {
            y[i] = y0[i] * s.c / s.e[i];
        }
        let ax = s.a.mul(&x);
        for i in 0..m {
            z[i] = ax[i].clamp(s.l[i], s.u[i]);
        }
    }

    let mut rhs = vec![0.0; n + m];
    let mut rho_updates = 0;
    let mut last: Option<Residuals> = None;
    let mut iter = 0;
    let mut converged = false;
    while iter < set.max_iter {
        iter += 1;
        for j in 0..n {
            rhs[j] = set.sigma * x[j] - s.q[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho[i];
        }
        let sol = fact.solve(&rhs);
        for j in 0..n {
            x[j] = set.alpha * sol[j] + (1.0 - set.alpha) * x[j];
        }
        for i in 0..m {
            let zt = z[i] + (sol[n + i] - y[i]) / rho[i];
            let relaxed = set.alpha * zt + (1.0 - set.alpha) * z[i];
            let znew = (relaxed + y[i] / rho[i]).clamp(s.l[i], s.u[i]);
            y[i] += rho[i] * (relaxed - znew);
            z[i] = znew;
        }

        let check = iter % set.check_interval == 0 || iter == set.max_iter;
        if !check {
            continue;
        }
        let r = residuals(&s, &x, &z, &y, set);
        if set.verbose && iter % (set.check_interval * 100) == 0 {
            eprintln!(
                "iter {iter:>7}  prim {:.3e} (eps {:.1e})  dual {:.3e} (eps {:.1e})  rho {rho_scalar:.2e}",
                r.prim, r.eps_prim, r.dual, r.eps_dual
            );
        }
        if r.prim <= r.eps_prim && r.dual <= r.eps_dual {
            converged = true;
            last = Some(r);
            break;
        }
        if set.adaptive_rho && iter % set.adaptive_rho_interval == 0 {
            let pr = r.prim / (r.prim_scale + 1e-30);
            let du = r.dual / (r.dual_scale + 1e-30);
            let proposed = (rho_scalar * (pr / (du + 1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if proposed > rho_scalar * set.adaptive_rho_tolerance || proposed < rho_scalar / set.adaptive_rho_tolerance {
                rho_scalar = proposed;
                rho = rho_vector(&s.l, &s.u, rho_scalar);
                for i in 0..m {
                    fact.permuted.values[diag_pos[i]] = -1.0 / rho[i];
                }
                fact.refactor()?;
                rho_updates += 1;
            }
        }
        last = Some(r);
    }
    let r = last.expect("at least one residual check");

    let unscale_x = |xs: &[f64]| -> Vec<f64> { xs.iter().zip(&s.d).map(|(v, d)| v * d).collect() };
    let unscale_y = |ys: &[f64]| -> Vec<f64> { ys.iter().zip(&s.e).map(|(v, e)| v * e / s.c).collect() };

    if !converged {
        return Err(Error::MaxIterations {
            iterations: iter,
            primal: r.prim,
            dual: r.dual,
            best: Box::new(unscale_x(&x)),
        });
    }

    let mut out = Solution {
        x: unscale_x(&x),
        y: unscale_y(&y),
        objective: 0.0,
        iterations: iter,
        primal_residual: r.prim,
        dual_residual: r.dual,
        rho_updates,
        polished: false,
        factor_nnz: fact.ldl.nnz(),
        seconds: 0.0,
    };
    if set.polish {
        if let Some((xp, yp)) = polish(&s, &x, &z, &y, set) {
            let (xu, yu) = (unscale_x(&xp), unscale_y(&yp));
            let (pp, pd) = prob.residuals(&xu, &yu);
            let (ap, ad) = prob.residuals(&out.x, &out.y);
            if (pp <= ap && pd <= ad) || (pp < 1e-10 && pd < 1e-10) {
                out.x = xu;
                out.y = yu;
                out.primal_residual = pp;
                out.dual_residual = pd;
                out.polished = true;
            } else if set.verbose {
                eprintln!("polish rejected: prim {pp:.2e} vs {ap:.2e}, dual {pd:.2e} vs {ad:.2e}");
            }
        }
    }
    out.objective = prob.objective(&out.x);
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Solves the equality-constrained problem on the guessed active set.
fn polish(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], set: &Settings) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let m = z.len();
    // (row, bound value) of every active constraint.
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        if s.l[i] == s.u[i] || z[i] - s.l[i] < -y[i] {
            active.push((i, s.l[i]));
        } else if s.u[i] - z[i] < y[i] {
            active.push((i, s.u[i]));
        }
    }
    let ma = active.len();
    let mut pos = vec![usize::MAX; m];
    for (k, &(i, _)) in active.iter().enumerate() {
        pos[i] = k;
    }
    let mut exact = Vec::with_capacity(s.p.nnz() + s.a.nnz());
    for c in 0..n {
        for k in s.p.colptr[c]..s.p.colptr[c + 1] {
            exact.push((s.p.rowind[k], c, s.p.values[k]));
        }
        for k in s.a.colptr[c]..s.a.colptr[c + 1] {
            let r = pos[s.a.rowind[k]];
            if r != usize::MAX {
                exact.push((c, n + r, s.a.values[k]));
            }
        }
    }
    let mut reg = exact.clone();
    reg.extend((0..n).map(|j| (j, j, set.polish_delta)));
    reg.extend((0..ma).map(|k| (n + k, n + k, -set.polish_delta)));
    let k_exact = UpperCsc::from_triplets(n + ma, &exact);
    let k_reg = UpperCsc::from_triplets(n + ma, &reg);
    let f = PermutedLdl::new(&k_reg).ok()?;
    let mut b = vec![0.0; n + ma];
    for j in 0..n {
        b[j] = -s.q[j];
    }
    for (k, &(_, v)) in active.iter().enumerate() {
        b[n + k] = v;
    }
    let mut sol = f.solve(&b);
    for _ in 0..set.polish_refine_iters {
        let ks = k_exact.sym_mul(&sol);
        let res: Vec<f64> = b.iter().zip(&ks).map(|(bi, ki)| bi - ki).collect();
        if norm_inf(&res) < 1e-14 {
            break;
        }
        let corr = f.solve(&res);
        for (a, c) in sol.iter_mut().zip(corr) {
            *a += c;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let xp = sol[..n].to_vec();
    let mut yp = vec![0.0; m];
    for (k, &(i, _)) in active.iter().enumerate() {
        yp[i] = sol[n + k];
    }
    Some((xp, yp))
}
