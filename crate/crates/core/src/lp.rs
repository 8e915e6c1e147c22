//! The exceptional-vertex assignment linear program and its dual.
//!
//! Variables `a_0..a_k, z`; constraints `sum a_j = 1` and
//! `sum j*a_j - z = k(2k-3)/(2k-2) + gamma2`; objective
//! `min a_{k-1}/k + a_k`. The primal is solved by a small dense two-phase
//! simplex; the dual (two free variables, k+2 inequality rows) is solved
//! independently by vertex enumeration, and the classical dual point
//! `(2-k, (k-1)/k)` is evaluated componentwise. Both routes must agree —
//! strong duality is an explicit check, not an assumption.

use serde::Serialize;

use crate::error::{Error, Result};

/// Coefficient data laid out exactly as the operations consume it.
#[derive(Clone, Debug, Serialize)]
pub struct LpInstance {
    pub k: usize,
    pub gamma2: f64,
    /// 2 x (k+2): row 0 = (1,...,1,0), row 1 = (0,1,2,...,k,-1).
    pub a: Vec<Vec<f64>>,
    /// (1, k(2k-3)/(2k-2) + gamma2)
    pub b: [f64; 2],
    /// (0,...,0, 1/k, 1, 0)
    pub c: Vec<f64>,
}

impl LpInstance {
    pub fn new(k: usize, gamma2: f64) -> Result<LpInstance> {
        if k < 2 {
            return Err(Error::InvalidArgument("LP needs k >= 2".into()));
        }
        if gamma2 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma2={gamma2} must be nonnegative"
            )));
        }
        let cols = k + 2;
        let mut a = vec![vec![0.0; cols]; 2];
        for j in 0..=k {
            a[0][j] = 1.0;
            a[1][j] = j as f64;
        }
        a[1][k + 1] = -1.0;
        let rhs = k as f64 * (2.0 * k as f64 - 3.0) / (2.0 * k as f64 - 2.0) + gamma2;
        let mut c = vec![0.0; cols];
        c[k - 1] = 1.0 / k as f64;
        c[k] = 1.0;
        Ok(LpInstance {
            k,
            gamma2,
            a,
            b: [1.0, rhs],
            c,
        })
    }
}

/// Everything the duality check produces.
#[derive(Clone, Debug, Serialize)]
pub struct LpSolution {
    pub instance: LpInstance,
    /// Optimal `(a_0..a_k, z)`.
    pub primal: Vec<f64>,
    pub optimum: f64,
    /// Dual optimum from independent 2-variable vertex enumeration.
    pub dual_optimum: f64,
    pub dual_vertex: (f64, f64),
    /// The classical dual point `(2-k, (k-1)/k)` and its data.
    pub classical_dual_point: (f64, f64),
    pub classical_dual_value: f64,
    /// `max(0, (A^T u - c)_j)` per column; all ~0 iff the point is feasible.
    pub classical_dual_residuals: Vec<f64>,
    /// The bound `1/2 + gamma2` sometimes quoted for the dual value; the
    /// actual value is `1/2 + gamma2 (k-1)/k`, smaller by `gamma2 / k`.
    pub quoted_bound: f64,
    pub duality_gap: f64,
}

const TOL: f64 = 1e-10;

/// Solves the assignment LP, the dual, and evaluates the classical dual
/// point. Errors when the right-hand side exceeds `k` (then even `a_k = 1`
/// cannot reach it).
pub fn solve_assignment_lp(k: usize, gamma2: f64) -> Result<LpSolution> {
    let inst = LpInstance::new(k, gamma2)?;
    if inst.b[1] > k as f64 + TOL {
        return Err(Error::Infeasible(format!(
            "rhs {} exceeds k={k}: sum j*a_j cannot reach it",
            inst.b[1]
        )));
    }
    let (primal, optimum) = simplex_min(&inst.a, &inst.b, &inst.c)?;

    let (dual_vertex, dual_optimum) = dual_by_enumeration(&inst)?;

    let u = (2.0 - k as f64, (k as f64 - 1.0) / k as f64);
    let mut residuals = Vec::with_capacity(k + 2);
    for j in 0..k + 2 {
        let atu = inst.a[0][j] * u.0 + inst.a[1][j] * u.1;
        residuals.push((atu - inst.c[j]).max(0.0));
    }
    let classical_dual_value = inst.b[0] * u.0 + inst.b[1] * u.1;

    Ok(LpSolution {
        duality_gap: (optimum - dual_optimum).abs(),
        quoted_bound: 0.5 + gamma2,
        classical_dual_residuals: residuals,
        classical_dual_value,
        classical_dual_point: u,
        dual_vertex,
        dual_optimum,
        optimum,
        primal,
        instance: inst,
    })
}

/// Dense two-phase tableau simplex with Bland's rule for
/// `min c^T x, A x = b, x >= 0`. Sized for a handful of rows and columns.
fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = a.len();
    let n = c.len();
    // Phase 1 tableau with artificial columns n..n+m.
    let width = n + m + 1;
    let mut tab = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            tab[i][j] = flip * a[i][j];
        }
        tab[i][n + i] = 1.0;
        tab[i][width - 1] = flip * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Phase-1 costs: sum of artificials, canonicalized.
    for j in 0..width {
        let mut v = 0.0;
        for i in 0..m {
            v -= tab[i][j];
        }
        tab[m][j] = v;
    }
    for i in 0..m {
        tab[m][n + i] += 1.0;
    }
    pivot_until_optimal(&mut tab, &mut basis, width)?;
    let phase1 = -tab[m][width - 1];
    if phase1 > 1e-8 {
        return Err(Error::Infeasible(format!(
            "phase-1 residual {phase1:.3e}"
        )));
    }
    // Drive any artificial still in the basis out of it.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab[i][j].abs() > TOL) {
                pivot(&mut tab, i, j);
                basis[i] = j;
            }
        }
    }
    // Phase 2: original costs over structural columns only.
    for j in 0..width {
        tab[m][j] = if j < n { c[j] } else { 0.0 };
    }
    for i in 0..m {
        if basis[i] < n {
            let cb = c[basis[i]];
            if cb != 0.0 {
                for j in 0..width {
                    tab[m][j] -= cb * tab[i][j];
                }
            }
        }
    }
    // Forbid artificials from re-entering.
    for i in 0..m {
        for row in tab.iter_mut().take(m + 1) {
            if basis.contains(&(n + i)) {
                continue;
            }
            row[n + i] = f64::NAN; // quarantined column
        }
    }
    pivot_until_optimal_structural(&mut tab, &mut basis, n, width)?;
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = tab[i][width - 1];
        }
    }
    let obj: f64 = (0..n).map(|j| c[j] * x[j]).sum();
    Ok((x, obj))
}

fn pivot_until_optimal(tab: &mut [Vec<f64>], basis: &mut [usize], width: usize) -> Result<()> {
    let m = basis.len();
    for _ in 0..10_000 {
        // Bland: smallest-index column with negative reduced cost.
        let Some(enter) = (0..width - 1).find(|&j| tab[m][j] < -TOL) else {
            return Ok(());
        };
        let Some(leave) = ratio_test(tab, basis, enter, width) else {
            return Err(Error::Infeasible("unbounded pivot in phase 1".into()));
        };
        pivot(tab, leave, enter);
        basis[leave] = enter;
    }
    Err(Error::Infeasible("simplex cycling".into()))
}

fn pivot_until_optimal_structural(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    n: usize,
    width: usize,
) -> Result<()> {
    let m = basis.len();
    for _ in 0..10_000 {
        let Some(enter) = (0..n).find(|&j| tab[m][j] < -TOL) else {
            return Ok(());
        };
        let Some(leave) = ratio_test(tab, basis, enter, width) else {
            return Err(Error::Infeasible(
                "objective unbounded below — malformed instance".into(),
            ));
        };
        pivot(tab, leave, enter);
        basis[leave] = enter;
    }
    Err(Error::Infeasible("simplex cycling".into()))
}

fn ratio_test(tab: &[Vec<f64>], basis: &[usize], enter: usize, width: usize) -> Option<usize> {
    let m = basis.len();
    let mut best: Option<(f64, usize, usize)> = None; // ratio, basis var, row
    for i in 0..m {
        let aij = tab[i][enter];
        if aij > TOL {
            let ratio = tab[i][width - 1] / aij;
            let key = (ratio, basis[i], i);
            best = match best {
                None => Some(key),
                Some(cur) if ratio < cur.0 - TOL || (ratio < cur.0 + TOL && basis[i] < cur.1) => {
                    Some(key)
                }
                Some(cur) => Some(cur),
            };
        }
    }
    best.map(|(_, _, row)| row)
}

fn pivot(tab: &mut [Vec<f64>], row: usize, col: usize) {
    let width = tab[row].len();
    let p = tab[row][col];
    for j in 0..width {
        if tab[row][j].is_nan() {
            continue;
        }
        tab[row][j] /= p;
    }
    let nrows = tab.len();
    for i in 0..nrows {
        if i == row {
            continue;
        }
        let f = tab[i][col];
        if f.is_nan() || f == 0.0 {
            continue;
        }
        for j in 0..width {
            if tab[i][j].is_nan() || tab[row][j].is_nan() {
                continue;
            }
            tab[i][j] -= f * tab[row][j];
        }
    }
}

/// Maximizes `b^T u` over `A^T u <= c` (two free variables) by enumerating
/// constraint-pair intersections. Independent of the simplex path.
fn dual_by_enumeration(inst: &LpInstance) -> Result<((f64, f64), f64)> {
    let k = inst.k;
    // Constraint list: (p, q, r) meaning p*u1 + q*u2 <= r.
    let mut cons: Vec<(f64, f64, f64)> = (0..=k)
        .map(|j| (1.0, j as f64, inst.c[j]))
        .collect();
    cons.push((0.0, -1.0, 0.0)); // z column: -u2 <= 0
    let feasible = |u: (f64, f64)| {
        cons.iter()
            .all(|&(p, q, r)| p * u.0 + q * u.1 <= r + 1e-9)
    };
    let mut best: Option<((f64, f64), f64)> = None;
    for i in 0..cons.len() {
        for j in (i + 1)..cons.len() {
            let (p1, q1, r1) = cons[i];
            let (p2, q2, r2) = cons[j];
            let det = p1 * q2 - p2 * q1;
            if det.abs() < 1e-12 {
                continue;
            }
            let u1 = (r1 * q2 - r2 * q1) / det;
            let u2 = (p1 * r2 - p2 * r1) / det;
            if !feasible((u1, u2)) {
                continue;
            }
            let val = inst.b[0] * u1 + inst.b[1] * u2;
            if best.map_or(true, |(_, bv)| val > bv) {
                best = Some(((u1, u2), val));
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible("dual polygon has no vertex".into()))
}
