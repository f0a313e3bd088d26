//! Dense primal simplex for `min c'x  s.t.  Ax = b, x >= 0`.
//!
//! The caller supplies a starting basis whose columns form an identity block
//! and whose values `b` are non-negative, so no phase one is needed. The
//! entering column is the most negative reduced cost (lowest index on ties);
//! after a run of degenerate pivots the solver switches to Bland's rule
//! (smallest eligible index enters, smallest basic index leaves) until the
//! objective moves again, which rules out cycling. The tableau is rebuilt
//! from the original data at a fixed pivot interval and before optimality is
//! accepted, so rounding error does not accumulate. The pivot sequence, and
//! therefore every returned value, is a pure function of the input.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const PIVOT_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-10;
const RATIO_TOL: f64 = 1e-12;
const SINGULAR_TOL: f64 = 1e-12;
/// Consecutive degenerate pivots before falling back to Bland's rule.
const DEGENERATE_RUN: usize = 50;
const REFRESH_EVERY: usize = 100;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `y = c_B B^-1`.
    pub duals: Vec<f64>,
    /// Reduced costs `c - y'A` at the optimum.
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

/// `B^-1 [A | b]` (row-major, width `n + 1`) and reduced costs.
struct Tableau {
    n: usize,
    t: Vec<f64>,
    d: Vec<f64>,
}

impl Tableau {
    /// Builds the tableau for `basis` from the original data; `None` if the
    /// basis matrix is numerically singular.
    fn build(c: &[f64], a: &Matrix, b: &[f64], basis: &[usize]) -> Option<Tableau> {
        let m = a.rows();
        let n = a.cols();
        let binv = invert_basis(a, basis)?;
        let width = n + 1;
        let mut t = vec![0.0; m * width];
        for i in 0..m {
            let dst = &mut t[i * width..(i + 1) * width];
            for k in 0..m {
                let f = binv[i * m + k];
                if f == 0.0 {
                    continue;
                }
                for (dv, sv) in dst[..n].iter_mut().zip(a.row(k)) {
                    if *sv != 0.0 {
                        *dv += f * sv;
                    }
                }
                dst[n] += f * b[k];
            }
            dst[n] = dst[n].max(0.0);
        }
        for (r, &col) in basis.iter().enumerate() {
            for i in 0..m {
                t[i * width + col] = if i == r { 1.0 } else { 0.0 };
            }
        }
        let mut d = c.to_vec();
        for (i, &col) in basis.iter().enumerate() {
            let cb = c[col];
            if cb != 0.0 {
                for (dj, tj) in d.iter_mut().zip(&t[i * width..i * width + n]) {
                    *dj -= cb * tj;
                }
            }
        }
        for &col in basis {
            d[col] = 0.0;
        }
        Some(Tableau { n, t, d })
    }

    fn pivot(&mut self, r: usize, enter: usize) {
        let width = self.n + 1;
        let piv = self.t[r * width + enter];
        for v in &mut self.t[r * width..(r + 1) * width] {
            *v /= piv;
        }
        self.t[r * width + enter] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * width);
        let (prow, after) = rest.split_at_mut(width);
        for row in before.chunks_mut(width).chain(after.chunks_mut(width)) {
            let f = row[enter];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[enter] = 0.0;
                if row[self.n] < 0.0 {
                    row[self.n] = 0.0;
                }
            }
        }
        let f = self.d[enter];
        for (dj, pj) in self.d.iter_mut().zip(&prow[..self.n]) {
            *dj -= f * pj;
        }
        self.d[enter] = 0.0;
    }
}

/// Gauss-Jordan inverse of the basis columns with partial pivoting,
/// row-major `m × m`.
fn invert_basis(a: &Matrix, basis: &[usize]) -> Option<Vec<f64>> {
    let m = a.rows();
    // augmented [B | I], width 2m
    let w = 2 * m;
    let mut g = vec![0.0; m * w];
    for (r, &col) in basis.iter().enumerate() {
        for i in 0..m {
            g[i * w + r] = a.get(i, col);
        }
    }
    for i in 0..m {
        g[i * w + m + i] = 1.0;
    }
    for col in 0..m {
        let mut p = col;
        for i in col + 1..m {
            if g[i * w + col].abs() > g[p * w + col].abs() {
                p = i;
            }
        }
        if g[p * w + col].abs() < SINGULAR_TOL {
            return None;
        }
        if p != col {
            for j in 0..w {
                g.swap(p * w + j, col * w + j);
            }
        }
        let piv = g[col * w + col];
        for v in &mut g[col * w..(col + 1) * w] {
            *v /= piv;
        }
        let prow: Vec<f64> = g[col * w..(col + 1) * w].to_vec();
        for i in 0..m {
            if i == col {
                continue;
            }
            let f = g[i * w + col];
            if f != 0.0 {
                for (v, p) in g[i * w..(i + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
            }
        }
    }
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m..(i + 1) * m].copy_from_slice(&g[i * w + m..(i + 1) * w]);
    }
    Some(inv)
}

/// Solves the LP starting from `basis` (one column index per row).
///
/// Panics if `basis` is not an identity block of `a` or `b` has a negative
/// entry; those are programming errors in the caller.
pub fn solve(c: &[f64], a: &Matrix, b: &[f64], basis: &[usize], max_pivots: usize) -> Result<LpSolution> {
    let m = a.rows();
    let n = a.cols();
    assert_eq!(c.len(), n);
    assert_eq!(b.len(), m);
    assert_eq!(basis.len(), m);
    for (r, &col) in basis.iter().enumerate() {
        for i in 0..m {
            let expect = if i == r { 1.0 } else { 0.0 };
            assert!(a.get(i, col) == expect, "starting basis is not an identity block");
        }
        assert!(b[r] >= 0.0, "starting basis is infeasible");
    }
    let initial_basis = basis.to_vec();
    let mut basis = basis.to_vec();
    let mut tab = Tableau::build(c, a, b, &basis).expect("identity basis is invertible");
    let width = n + 1;

    let mut pivots = 0;
    let mut degenerate = 0;
    let mut since_build = 0;
    loop {
        let bland = degenerate >= DEGENERATE_RUN;
        let enter = if bland {
            (0..n).find(|&j| tab.d[j] < -RC_TOL)
        } else {
            let mut best: Option<usize> = None;
            for j in 0..n {
                if tab.d[j] < -RC_TOL && best.is_none_or(|k| tab.d[j] < tab.d[k]) {
                    best = Some(j);
                }
            }
            best
        };
        let Some(enter) = enter else {
            if since_build == 0 {
                break;
            }
            // confirm optimality on a freshly built tableau
            if let Some(fresh) = Tableau::build(c, a, b, &basis) {
                tab = fresh;
            }
            since_build = 0;
            continue;
        };
        if pivots >= max_pivots {
            return Err(Error::IterationLimit(max_pivots));
        }

        let mut min_ratio = f64::INFINITY;
        for i in 0..m {
            let aij = tab.t[i * width + enter];
            if aij > PIVOT_TOL {
                min_ratio = min_ratio.min(tab.t[i * width + n] / aij);
            }
        }
        if !min_ratio.is_finite() {
            return Err(Error::Unbounded);
        }
        let cutoff = min_ratio + RATIO_TOL * (1.0 + min_ratio.abs());
        let mut leave: Option<usize> = None;
        for i in 0..m {
            let aij = tab.t[i * width + enter];
            if aij <= PIVOT_TOL || tab.t[i * width + n] / aij > cutoff {
                continue;
            }
            leave = match leave {
                None => Some(i),
                Some(r) => {
                    let ar = tab.t[r * width + enter];
                    let take = if bland {
                        basis[i] < basis[r]
                    } else {
                        aij > ar || (aij == ar && basis[i] < basis[r])
                    };
                    Some(if take { i } else { r })
                }
            };
        }
        let r = leave.expect("a row attains the minimum ratio");
        let step = tab.t[r * width + n] / tab.t[r * width + enter];
        if step > 0.0 {
            degenerate = 0;
        } else {
            degenerate += 1;
        }
        tab.pivot(r, enter);
        basis[r] = enter;
        pivots += 1;
        since_build += 1;
        if since_build >= REFRESH_EVERY {
            if let Some(fresh) = Tableau::build(c, a, b, &basis) {
                tab = fresh;
            }
            since_build = 0;
        }
    }

    let mut x = vec![0.0; n];
    for (i, &col) in basis.iter().enumerate() {
        x[col] = tab.t[i * width + n];
    }
    // the starting identity columns carry B^-1, so y_i = c_k - d_k for k = initial_basis[i]
    let duals = initial_basis.iter().map(|&k| c[k] - tab.d[k]).collect();
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum::<f64>();
    Ok(LpSolution {
        x,
        objective,
        duals,
        reduced_costs: tab.d,
        pivots,
    })
}
