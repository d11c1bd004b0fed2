//! Up-looking sparse LDLᵀ for quasi-definite matrices (no pivoting), with a
//! fill-reducing symmetric permutation.

use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// Upper triangle of a symmetric matrix in compressed-column form.
#[derive(Debug, Clone)]
pub struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl UpperCsc {
    /// From (row, col, value) with row <= col; duplicates are summed. Row
    /// indices end up sorted within each column, so the diagonal is last.
    pub fn from_triplets(n: usize, t: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in t {
            debug_assert!(r <= c && c < n);
            counts[c + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; t.len()];
        let mut vals = vec![0.0; t.len()];
        for &(r, c, v) in t {
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        let mut colptr = vec![0usize; n + 1];
        let mut rowind = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut order: Vec<usize> = Vec::new();
        for c in 0..n {
            order.clear();
            order.extend(counts[c]..counts[c + 1]);
            order.sort_unstable_by_key(|&k| rows[k]);
            let start = rowind.len();
            for &k in &order {
                if rowind.len() > start && *rowind.last().unwrap() == rows[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    rowind.push(rows[k]);
                    values.push(vals[k]);
                }
            }
            colptr[c + 1] = rowind.len();
        }
        Self { n, colptr, rowind, values }
    }

    /// `y = K x` using the symmetric expansion of the stored triangle.
    pub fn sym_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
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
}

/// Symmetric permutation `p` (new -> old) applied to the triangle `k`.
pub fn permute_upper(k: &UpperCsc, pinv: &[usize]) -> UpperCsc {
    let mut t = Vec::with_capacity(k.values.len());
    for c in 0..k.n {
        for idx in k.colptr[c]..k.colptr[c + 1] {
            let (a, b) = (pinv[k.rowind[idx]], pinv[c]);
            t.push((a.min(b), a.max(b), k.values[idx]));
        }
    }
    UpperCsc::from_triplets(k.n, &t)
}

/// Approximate-minimum-degree ordering; returns (p, pinv).
pub fn amd_order(k: &UpperCsc) -> Result<(Vec<usize>, Vec<usize>)> {
    let control = amd::Control::default();
    let (p, pinv, _info) = amd::order(k.n, &k.colptr, &k.rowind, &control)
        .map_err(|s| Error::Numerical(format!("AMD ordering failed: {s:?}")))?;
    Ok((p, pinv))
}

/// Symbolic analysis plus numeric factor `K = L D Lᵀ` of a (permuted) matrix.
#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    pub fn analyse(k: &UpperCsc) -> Result<Self> {
        let n = k.n;
        let mut work = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in k.colptr[j]..k.colptr[j + 1] {
                let mut i = k.rowind[p];
                if i > j {
                    return Err(Error::Numerical("matrix is not upper triangular".into()));
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ok(Self {
            n,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        })
    }

    pub fn nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization; the sparsity pattern of `k` must match the analysed one.
    pub fn factor(&mut self, k: &UpperCsc) -> Result<()> {
        self.factor_impl(k, None).map(|_| ())
    }

    /// Like [`Ldl::factor`], but a pivot whose sign disagrees with `signs`
    /// (or whose magnitude is below `eps`) is replaced by `sign·delta`.
    /// Returns the number of replaced pivots.
    pub fn factor_signed(&mut self, k: &UpperCsc, signs: &[f64], eps: f64, delta: f64) -> Result<usize> {
        self.factor_impl(k, Some((signs, eps, delta)))
    }

    fn factor_impl(&mut self, k: &UpperCsc, guard: Option<(&[f64], f64, f64)>) -> Result<usize> {
        let mut replaced = 0;
        let n = self.n;
        let mut y_markers = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        for kk in 0..n {
            let mut nnz_y = 0;
            self.d[kk] = 0.0;
            for idx in k.colptr[kk]..k.colptr[kk + 1] {
                let b = k.rowind[idx];
                if b == kk {
                    self.d[kk] = k.values[idx];
                    continue;
                }
                y_vals[b] = k.values[idx];
                if !y_markers[b] {
                    y_markers[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < kk {
                        if y_markers[nx] {
                            break;
                        }
                        y_markers[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = kk;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[kk] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_markers[c] = false;
            }
            if let Some((signs, eps, delta)) = guard {
                if self.d[kk] * signs[kk] < eps {
                    self.d[kk] = signs[kk] * delta;
                    replaced += 1;
                }
            }
            if self.d[kk] == 0.0 || !self.d[kk].is_finite() {
                return Err(Error::Numerical(format!("zero pivot at column {kk}")));
            }
            self.dinv[kk] = 1.0 / self.d[kk];
        }
        debug_assert!((0..n).all(|c| next_space[c] == self.lp[c] + self.lnz[c]));
        Ok(replaced)
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[j] * x[self.li[j]];
            }
            x[i] = s;
        }
    }

    /// Number of negative pivots (the inertia check for quasi-definite systems).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }
}

/// A factorization together with its ordering, solving in original coordinates.
#[derive(Debug, Clone)]
pub struct PermutedLdl {
    pub p: Vec<usize>,
    pub pinv: Vec<usize>,
    pub permuted: UpperCsc,
    pub ldl: Ldl,
}

impl PermutedLdl {
    pub fn new(k: &UpperCsc) -> Result<Self> {
        let (p, pinv) = amd_order(k)?;
        let permuted = permute_upper(k, &pinv);
        let mut ldl = Ldl::analyse(&permuted)?;
        ldl.factor(&permuted)?;
        Ok(Self { p, pinv, permuted, ldl })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.p.iter().map(|&o| b[o]).collect();
        self.ldl.solve_in_place(&mut x);
        let mut out = vec![0.0; b.len()];
        for (newi, &o) in self.p.iter().enumerate() {
            out[o] = x[newi];
        }
        out
    }

    /// Index into `permuted.values` of the diagonal entry for original index `i`.
    pub fn diag_position(&self, i: usize) -> usize {
        let c = self.pinv[i];
        let pos = self.permuted.colptr[c + 1] - 1;
        debug_assert_eq!(self.permuted.rowind[pos], c);
        pos
    }

    pub fn refactor(&mut self) -> Result<()> {
        self.ldl.factor(&self.permuted)
    }

    /// Refactor with pivot signs given in original coordinates.
    pub fn refactor_signed(&mut self, signs: &[f64], eps: f64, delta: f64) -> Result<usize> {
        let permuted: Vec<f64> = self.p.iter().map(|&o| signs[o]).collect();
        self.ldl.factor_signed(&self.permuted, &permuted, eps, delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_quasidefinite_system() {
        // [[4, 1, 2], [1, 3, 0], [2, 0, -1]]
        let k = UpperCsc::from_triplets(3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 1, 3.0), (0, 2, 2.0), (2, 2, -1.0)]);
        let f = PermutedLdl::new(&k).unwrap();
        let x = [1.0, -2.0, 0.5];
        let b = k.sym_mul(&x);
        let got = f.solve(&b);
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-12);
        }
        assert_eq!(f.ldl.negative_pivots(), 1);
    }

    #[test]
    fn duplicates_are_summed() {
        let k = UpperCsc::from_triplets(2, &[(0, 0, 1.0), (0, 0, 1.0), (1, 1, 5.0)]);
        assert_eq!(k.values, vec![2.0, 5.0]);
    }
}
