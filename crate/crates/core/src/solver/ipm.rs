//! Primal-dual interior-point method (Mehrotra predictor-corrector).
//!
//! The two-sided rows of `l ≤ Ax ≤ u` are rewritten first: rows with
//! `l = u` become equalities, single-entry rows become variable bounds and
//! the rest get a slack `w = aᵀx` carrying the bounds. What remains is
//!
//! ```text
//! minimize ½ zᵀQz + cᵀz   subject to   Ez = b,   lb ≤ z ≤ ub
//! ```
//!
//! and every Newton step solves one regularized quasi-definite KKT system.

use std::time::Instant;

use super::{norm_inf, CscMatrix, PermutedLdl, QpProblem, Settings, Solution, UpperCsc};
use crate::{Error, Result};

/// Bound ranges narrower than this are treated as a fixed value.
const THIN_RANGE: f64 = 1e-11;
const REG_PRIMAL: f64 = 1e-10;
const REG_DUAL: f64 = 1e-10;
/// Pivots below `PIVOT_EPS` (or of the wrong sign) become `±PIVOT_DELTA`.
const PIVOT_EPS: f64 = 1e-13;
const PIVOT_DELTA: f64 = 2e-7;
const STEP_FRACTION: f64 = 0.995;
const SLACK_FLOOR: f64 = 1e-200;
const SIGMA_CAP: f64 = 1e30;
/// After a numerical breakdown or stall the best iterate is returned if its
/// merit is within this factor of the tolerance.
const ACCEPT_FACTOR: f64 = 1e3;
/// Iterations without a 10% merit improvement before declaring a stall.
const STALL_ITERS: usize = 5;

/// Where the multiplier of an original row ends up.
#[derive(Debug, Clone, Copy)]
enum RowRole {
    Equality(usize),
    /// Bound on variable `var` through coefficient `coef`.
    Bound { var: usize, coef: f64 },
    Slack(usize),
    Inactive,
}

struct Standard {
    nz: usize,
    q: CscMatrix,
    c: Vec<f64>,
    /// `me × nz`.
    e: CscMatrix,
    b: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    roles: Vec<RowRole>,
}

fn standardize(prob: &QpProblem) -> Standard {
    let (n, m) = (prob.n(), prob.m());
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for j in 0..n {
        for k in prob.a.colptr[j]..prob.a.colptr[j + 1] {
            if prob.a.values[k] != 0.0 {
                rows[prob.a.rowind[k]].push((j, prob.a.values[k]));
            }
        }
    }
    let mut lb = vec![f64::NEG_INFINITY; n];
    let mut ub = vec![f64::INFINITY; n];
    let mut e_t = Vec::new();
    let mut b = Vec::new();
    let mut roles = vec![RowRole::Inactive; m];
    let mut bound_owner: Vec<Option<usize>> = vec![None; n];
    let mut n_slack = 0;
    let mut slack_rows = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let (l, u) = (prob.l[i], prob.u[i]);
        if row.is_empty() {
            continue;
        }
        if u - l <= THIN_RANGE {
            let r = b.len();
            for &(j, v) in row {
                e_t.push((r, j, v));
            }
            b.push(if l == u { l } else { 0.5 * (l + u) });
            roles[i] = RowRole::Equality(r);
        } else if row.len() == 1 {
            let (j, a) = row[0];
            let (lo, hi) = if a > 0.0 { (l / a, u / a) } else { (u / a, l / a) };
            lb[j] = lb[j].max(lo);
            ub[j] = ub[j].min(hi);
            if bound_owner[j].is_none() {
                bound_owner[j] = Some(i);
                roles[i] = RowRole::Bound { var: j, coef: a };
            }
        } else {
            slack_rows.push(i);
            roles[i] = RowRole::Slack(n_slack);
            n_slack += 1;
        }
    }
    let nz = n + n_slack;
    for (s, &i) in slack_rows.iter().enumerate() {
        let r = b.len();
        for &(j, v) in &rows[i] {
            e_t.push((r, j, v));
        }
        e_t.push((r, n + s, -1.0));
        b.push(0.0);
        lb.push(prob.l[i]);
        ub.push(prob.u[i]);
        roles[i] = RowRole::Slack(r);
    }
    // Variables whose bounds collapsed are pinned by an equality instead.
    for j in 0..n {
        if lb[j].is_finite() && ub[j].is_finite() && ub[j] - lb[j] <= THIN_RANGE {
            let r = b.len();
            e_t.push((r, j, 1.0));
            b.push(0.5 * (lb[j] + ub[j]));
            lb[j] = f64::NEG_INFINITY;
            ub[j] = f64::INFINITY;
        }
    }
    let mut q_t = Vec::with_capacity(prob.p.nnz());
    for j in 0..n {
        for k in prob.p.colptr[j]..prob.p.colptr[j + 1] {
            q_t.push((prob.p.rowind[k], j, prob.p.values[k]));
        }
    }
    let mut c = prob.q.clone();
    c.resize(nz, 0.0);
    Standard {
        nz,
        q: CscMatrix::from_triplets(nz, nz, &q_t),
        c,
        e: CscMatrix::from_triplets(b.len(), nz, &e_t),
        b,
        lb,
        ub,
        roles,
    }
}

fn initial_point(st: &Standard) -> Vec<f64> {
    (0..st.nz)
        .map(|j| match (st.lb[j].is_finite(), st.ub[j].is_finite()) {
            (true, true) => 0.5 * (st.lb[j] + st.ub[j]),
            (true, false) => st.lb[j] + 1.0,
            (false, true) => st.ub[j] - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

/// Largest step in (0, 1] keeping `v + α·dv ≥ 0` on the masked entries.
fn max_step(v: &[f64], dv: &[f64], mask: &[bool]) -> f64 {
    let mut a: f64 = 1.0;
    for j in 0..v.len() {
        if mask[j] && dv[j] < 0.0 {
            a = a.min(-v[j] / dv[j]);
        }
    }
    a
}

pub(super) fn solve(prob: &QpProblem, set: &Settings) -> Result<Solution> {
    let start = Instant::now();
    let st = standardize(prob);
    let nz = st.nz;
    let me = st.b.len();
    let has_l: Vec<bool> = st.lb.iter().map(|v| v.is_finite()).collect();
    let has_u: Vec<bool> = st.ub.iter().map(|v| v.is_finite()).collect();
    let n_comp = has_l.iter().chain(&has_u).filter(|&&h| h).count().max(1);

    let mut z = initial_point(&st);
    let mut zl: Vec<f64> = has_l.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = has_u.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let mut y = vec![0.0; me];

    // KKT pattern: [[Q + Σ + δ, Eᵀ], [E, -δ]], diagonal present everywhere.
    let mut k_t = Vec::with_capacity(st.q.nnz() + st.e.nnz() + nz + me);
    let mut q_diag = vec![0.0; nz];
    for j in 0..nz {
        for k in st.q.colptr[j]..st.q.colptr[j + 1] {
            let r = st.q.rowind[k];
            if r == j {
                q_diag[j] += st.q.values[k];
            } else {
                k_t.push((r, j, st.q.values[k]));
            }
        }
        for k in st.e.colptr[j]..st.e.colptr[j + 1] {
            k_t.push((j, nz + st.e.rowind[k], st.e.values[k]));
        }
    }
    for j in 0..nz {
        k_t.push((j, j, q_diag[j] + 1.0 + REG_PRIMAL));
    }
    for i in 0..me {
        k_t.push((nz + i, nz + i, -REG_DUAL));
    }
    let kkt = UpperCsc::from_triplets(nz + me, &k_t);
    let mut fact = PermutedLdl::new(&kkt)?;
    let diag_pos: Vec<usize> = (0..nz).map(|j| fact.diag_position(j)).collect();
    let signs: Vec<f64> = (0..nz + me).map(|i| if i < nz { 1.0 } else { -1.0 }).collect();

    let b_scale = 1.0 + norm_inf(&st.b);
    let c_scale = 1.0 + norm_inf(&st.c);
    let mut sigma_diag = vec![0.0; nz];
    let mut best = Best {
        merit: f64::INFINITY,
        iter: 0,
        z: z.clone(),
        y: y.clone(),
        zl: zl.clone(),
        zu: zu.clone(),
    };
    let mut iter = 0;
    let mut breakdown: Option<Error> = None;
    loop {
        let qz = st.q.sym_mul(&z);
        let ety = st.e.tmul(&y);
        let rd: Vec<f64> = (0..nz).map(|j| qz[j] + st.c[j] - ety[j] - zl[j] + zu[j]).collect();
        let ez = st.e.mul(&z);
        let rp: Vec<f64> = (0..me).map(|i| ez[i] - st.b[i]).collect();
        // Slacks can round to zero next to a bound.
        let sl: Vec<f64> = (0..nz).map(|j| if has_l[j] { (z[j] - st.lb[j]).max(SLACK_FLOOR) } else { 1.0 }).collect();
        let su: Vec<f64> = (0..nz).map(|j| if has_u[j] { (st.ub[j] - z[j]).max(SLACK_FLOOR) } else { 1.0 }).collect();
        let comp: f64 = (0..nz).map(|j| sl[j] * zl[j] + su[j] * zu[j]).sum();
        let mu = comp / n_comp as f64;
        let rp_norm = norm_inf(&rp);
        let rd_norm = norm_inf(&rd);
        let merit = (rp_norm / b_scale).max(rd_norm / c_scale).max(mu);
        if merit < 0.9 * best.merit {
            best = Best {
                merit,
                iter,
                z: z.clone(),
                y: y.clone(),
                zl: zl.clone(),
                zu: zu.clone(),
            };
        }
        if set.verbose {
            let s_min = (0..nz)
                .map(|j| if has_l[j] { sl[j] } else { f64::INFINITY }.min(if has_u[j] { su[j] } else { f64::INFINITY }))
                .fold(f64::INFINITY, f64::min);
            eprintln!("ipm {iter:>3}  rp {rp_norm:.2e}  rd {rd_norm:.2e}  mu {mu:.2e}  min slack {s_min:.1e}");
        }
        if rp_norm <= set.ipm_eps * b_scale && rd_norm <= set.ipm_eps * c_scale && mu <= set.ipm_eps {
            break;
        }
        if iter >= set.ipm_max_iter {
            return Err(Error::MaxIterations {
                iterations: iter,
                primal: rp_norm,
                dual: rd_norm,
                best: Box::new(best.z[..prob.n()].to_vec()),
            });
        }
        if iter >= best.iter + STALL_ITERS {
            breakdown = Some(Error::Numerical(format!("no progress after iteration {}", best.iter)));
            break;
        }
        iter += 1;

        for j in 0..nz {
            sigma_diag[j] = (zl[j] / sl[j] + zu[j] / su[j]).min(SIGMA_CAP);
            fact.permuted.values[diag_pos[j]] = q_diag[j] + sigma_diag[j] + REG_PRIMAL;
        }
        if let Err(e) = fact.refactor_signed(&signs, PIVOT_EPS, PIVOT_DELTA) {
            breakdown = Some(e);
            break;
        }

        let newton = |rcl: &[f64], rcu: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            let mut rhs = vec![0.0; nz + me];
            for j in 0..nz {
                rhs[j] = -rd[j];
                if has_l[j] {
                    rhs[j] += rcl[j] / sl[j];
                }
                if has_u[j] {
                    rhs[j] -= rcu[j] / su[j];
                }
            }
            for i in 0..me {
                rhs[nz + i] = -rp[i];
            }
            let sol = refined_solve(&fact, &st, &sigma_diag, &rhs, set.polish_refine_iters);
            let dz = sol[..nz].to_vec();
            let dy: Vec<f64> = sol[nz..].iter().map(|v| -v).collect();
            let dzl: Vec<f64> = (0..nz).map(|j| if has_l[j] { (rcl[j] - zl[j] * dz[j]) / sl[j] } else { 0.0 }).collect();
            let dzu: Vec<f64> = (0..nz).map(|j| if has_u[j] { (rcu[j] + zu[j] * dz[j]) / su[j] } else { 0.0 }).collect();
            (dz, dy, dzl, dzu)
        };

        // Predictor.
        let rcl: Vec<f64> = (0..nz).map(|j| -sl[j] * zl[j]).collect();
        let rcu: Vec<f64> = (0..nz).map(|j| -su[j] * zu[j]).collect();
        let (dz, _, dzl, dzu) = newton(&rcl, &rcu);
        let neg_dz: Vec<f64> = dz.iter().map(|v| -v).collect();
        let a_aff = max_step(&sl, &dz, &has_l)
            .min(max_step(&su, &neg_dz, &has_u))
            .min(max_step(&zl, &dzl, &has_l))
            .min(max_step(&zu, &dzu, &has_u));
        let mu_aff: f64 = (0..nz)
            .map(|j| {
                let mut v = 0.0;
                if has_l[j] {
                    v += (sl[j] + a_aff * dz[j]) * (zl[j] + a_aff * dzl[j]);
                }
                if has_u[j] {
                    v += (su[j] - a_aff * dz[j]) * (zu[j] + a_aff * dzu[j]);
                }
                v
            })
            .sum::<f64>()
            / n_comp as f64;
        let centering = (mu_aff / mu).powi(3).min(1.0);

        // Corrector.
        let rcl: Vec<f64> = (0..nz)
            .map(|j| centering * mu - sl[j] * zl[j] - dz[j] * dzl[j])
            .collect();
        let rcu: Vec<f64> = (0..nz)
            .map(|j| centering * mu - su[j] * zu[j] + dz[j] * dzu[j])
            .collect();
        let (dz, dy, dzl, dzu) = newton(&rcl, &rcu);
        if dz.iter().chain(&dy).chain(&dzl).chain(&dzu).any(|v| !v.is_finite()) {
            breakdown = Some(Error::Numerical(format!("non-finite Newton direction at iteration {iter}")));
            break;
        }
        let neg_dz: Vec<f64> = dz.iter().map(|v| -v).collect();
        let a = (STEP_FRACTION
            * max_step(&sl, &dz, &has_l)
                .min(max_step(&su, &neg_dz, &has_u))
                .min(max_step(&zl, &dzl, &has_l))
                .min(max_step(&zu, &dzu, &has_u))
                .min(1.0 / STEP_FRACTION))
        .min(1.0);
        for j in 0..nz {
            z[j] += a * dz[j];
            zl[j] += a * dzl[j];
            zu[j] += a * dzu[j];
        }
        for i in 0..me {
            y[i] += a * dy[i];
        }
    }

    if let Some(e) = breakdown {
        if best.merit > ACCEPT_FACTOR * set.ipm_eps {
            return Err(e);
        }
        if set.verbose {
            eprintln!("ipm: {e}; returning iterate {} (merit {:.2e})", best.iter, best.merit);
        }
        z = best.z;
        y = best.y;
        zl = best.zl;
        zu = best.zu;
    }
    let x = z[..prob.n()].to_vec();
    // Multipliers in the `Px + q + Aᵀy = 0` convention of the original rows.
    let mut yo = vec![0.0; prob.m()];
    for (i, role) in st.roles.iter().enumerate() {
        yo[i] = match *role {
            RowRole::Equality(r) | RowRole::Slack(r) => -y[r],
            RowRole::Bound { var, coef } => (zu[var] - zl[var]) / coef,
            RowRole::Inactive => 0.0,
        };
    }
    let (primal, dual) = prob.residuals(&x, &yo);
    Ok(Solution {
        objective: prob.objective(&x),
        x,
        y: yo,
        iterations: iter,
        primal_residual: primal,
        dual_residual: dual,
        rho_updates: 0,
        polished: false,
        factor_nnz: fact.ldl.nnz(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

struct Best {
    merit: f64,
    iter: usize,
    z: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

/// Solves with the regularized factor, then refines against the
/// unregularized KKT operator, keeping a correction only if it helps.
fn refined_solve(fact: &PermutedLdl, st: &Standard, sigma: &[f64], rhs: &[f64], iters: usize) -> Vec<f64> {
    let nz = st.nz;
    let residual = |x: &[f64]| -> Vec<f64> {
        let (xz, xy) = x.split_at(nz);
        let mut kx = st.q.sym_mul(xz);
        let ety = st.e.tmul(xy);
        for j in 0..nz {
            kx[j] += sigma[j] * xz[j] + ety[j];
        }
        kx.extend(st.e.mul(xz));
        rhs.iter().zip(&kx).map(|(a, b)| a - b).collect()
    };
    let mut x = fact.solve(rhs);
    let mut r = residual(&x);
    let mut r_norm = norm_inf(&r);
    let target = 1e-14 * (1.0 + norm_inf(rhs));
    for _ in 0..iters {
        if !(r_norm > target) {
            break;
        }
        let d = fact.solve(&r);
        let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let tr = residual(&trial);
        let tn = norm_inf(&tr);
        if !(tn < r_norm) {
            break;
        }
        x = trial;
        r = tr;
        r_norm = tn;
    }
    x
}
