//! Transportation simplex on a dense cost matrix.
//!
//! North-west-corner start, Dantzig pricing, and Bland's rule while a run
//! of degenerate pivots lasts. Every solve ends with a dual certificate:
//! `u_i + v_j ≤ c_ij` everywhere and equality on the basis.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("supply total {supply} and demand total {demand} differ")]
    Infeasible { supply: f64, demand: f64 },
    #[error("cost matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("no optimal basis after {0} pivots")]
    NoConvergence(usize),
    #[error("dual certificate failed: {0}")]
    CertificateFailure(String),
}

/// An optimal basic solution with its dual potentials.
#[derive(Debug, Clone)]
pub struct Solution {
    pub cost: f64,
    /// Basic cells `(i, j, x_ij)`, including degenerate zeros.
    pub basis: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

/// Minimizes `Σ c_ij x_ij` subject to row sums `supply` and column sums
/// `demand`. Both must be positive and have equal totals within `1e-9`.
pub fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &DMatrix<f64>,
) -> Result<Solution, SimplexError> {
    let (m, n) = (supply.len(), demand.len());
    if cost.nrows() != m || cost.ncols() != n {
        return Err(SimplexError::ShapeMismatch {
            rows: cost.nrows(),
            cols: cost.ncols(),
            expected_rows: m,
            expected_cols: n,
        });
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if m == 0 || n == 0 || (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(SimplexError::Infeasible {
            supply: sa,
            demand: sb,
        });
    }
    let mut b: Vec<f64> = demand.iter().map(|d| d * sa / sb).collect();
    let mut a = supply.to_vec();

    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = a[i].min(b[j]);
        basis.push((i, j, x));
        a[i] -= x;
        b[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = cost.iter().fold(1.0_f64, |acc, c| acc.max(c.abs()));
    let price_tol = 1e-12 * scale;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    let degenerate_limit = m + n;
    let mut degenerate_run = 0;
    let mut pivots = 0;
    let (mut u, mut v) = (vec![0.0; m], vec![0.0; n]);
    loop {
        potentials(&basis, cost, &mut u, &mut v, m, n);
        let bland = degenerate_run >= degenerate_limit;
        let mut entering: Option<(usize, usize, f64)> = None;
        'scan: for r in 0..m {
            for c in 0..n {
                let red = cost[(r, c)] - u[r] - v[c];
                if red < -price_tol {
                    if bland {
                        entering = Some((r, c, red));
                        break 'scan;
                    }
                    if entering.is_none_or(|(_, _, best)| red < best) {
                        entering = Some((r, c, red));
                    }
                }
            }
        }
        let Some((er, ec, _)) = entering else { break };
        if pivots >= max_pivots {
            return Err(SimplexError::NoConvergence(pivots));
        }
        pivots += 1;

        let cycle = tree_path(&basis, er, ec, m, n);
        // cycle[k] are basis indices; signs alternate starting with `-`
        let (mut theta, mut leave) = (f64::INFINITY, usize::MAX);
        for (k, &bi) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                let (r, c, x) = basis[bi];
                let better = x < theta
                    || (x == theta
                        && leave != usize::MAX
                        && (r, c) < (basis[leave].0, basis[leave].1));
                if better {
                    theta = x;
                    leave = bi;
                }
            }
        }
        for (k, &bi) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                basis[bi].2 -= theta;
            } else {
                basis[bi].2 += theta;
            }
        }
        basis[leave] = (er, ec, theta);
        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
    }
    for cell in basis.iter_mut() {
        cell.2 = cell.2.max(0.0);
    }
    potentials(&basis, cost, &mut u, &mut v, m, n);
    certify(&basis, cost, &u, &v, scale)?;
    let total = basis.iter().map(|&(r, c, x)| x * cost[(r, c)]).sum();
    Ok(Solution {
        cost: total,
        basis,
        u,
        v,
        pivots,
    })
}

/// Solves `u_r + v_c = c_rc` on the basis tree by breadth-first search from `u_0 = 0`.
fn potentials(
    basis: &[(usize, usize, f64)],
    cost: &DMatrix<f64>,
    u: &mut [f64],
    v: &mut [f64],
    m: usize,
    n: usize,
) {
    let adj = adjacency(basis, m, n);
    let mut seen = vec![false; m + n];
    let mut queue = VecDeque::from([0]);
    u[0] = 0.0;
    seen[0] = true;
    while let Some(node) = queue.pop_front() {
        for &bi in &adj[node] {
            let (r, c, _) = basis[bi];
            let other = if node < m { m + c } else { r };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            if other >= m {
                v[c] = cost[(r, c)] - u[r];
            } else {
                u[r] = cost[(r, c)] - v[c];
            }
            queue.push_back(other);
        }
    }
}

/// Node ids: rows `0..m`, columns `m..m+n`; values are basis indices.
fn adjacency(basis: &[(usize, usize, f64)], m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, &(r, c, _)) in basis.iter().enumerate() {
        adj[r].push(k);
        adj[m + c].push(k);
    }
    adj
}

/// Basis cells on the tree path from column `ec` to row `er`, in order.
fn tree_path(
    basis: &[(usize, usize, f64)],
    er: usize,
    ec: usize,
    m: usize,
    n: usize,
) -> Vec<usize> {
    let adj = adjacency(basis, m, n);
    let start = m + ec;
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == er {
            break;
        }
        for &bi in &adj[node] {
            let (r, c, _) = basis[bi];
            let other = if node < m { m + c } else { r };
            if !seen[other] {
                seen[other] = true;
                parent[other] = Some((node, bi));
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = er;
    while node != start {
        let (prev, bi) = parent[node].expect("basis is a spanning tree");
        path.push(bi);
        node = prev;
    }
    path.reverse();
    path
}

fn certify(
    basis: &[(usize, usize, f64)],
    cost: &DMatrix<f64>,
    u: &[f64],
    v: &[f64],
    scale: f64,
) -> Result<(), SimplexError> {
    let tol = 1e-9 * scale;
    for r in 0..u.len() {
        for c in 0..v.len() {
            let red = cost[(r, c)] - u[r] - v[c];
            if red < -tol {
                return Err(SimplexError::CertificateFailure(format!(
                    "reduced cost {red:e} at ({r}, {c})"
                )));
            }
        }
    }
    for &(r, c, _) in basis {
        let red = cost[(r, c)] - u[r] - v[c];
        if red.abs() > tol {
            return Err(SimplexError::CertificateFailure(format!(
                "basic cell ({r}, {c}) has reduced cost {red:e}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_instance() {
        // supplies 20, 30, 25; demands 10, 25, 40
        let cost = DMatrix::from_row_slice(3, 3, &[8., 6., 10., 9., 12., 13., 14., 9., 16.]);
        let s = solve(&[20., 30., 25.], &[10., 25., 40.], &cost).unwrap();
        assert_eq!(s.basis.len(), 5);
        // brute force over the two free cells x00, x01 of the 3x3 polytope
        let mut best = f64::INFINITY;
        for x00 in 0..=10 {
            for x01 in 0..=20 - x00 {
                for x10 in 0..=10 - x00 {
                    let x20 = 10 - x00 - x10;
                    let x02 = 20 - x00 - x01;
                    for x11 in 0..=(25 - x01).min(30 - x10) {
                        let x21 = 25 - x01 - x11;
                        let x12 = 30 - x10 - x11;
                        let x22 = 25 - x20 - x21;
                        if x21 < 0 || x12 < 0 || x22 < 0 || x02 + x12 + x22 != 40 {
                            continue;
                        }
                        let xs = [x00, x01, x02, x10, x11, x12, x20, x21, x22];
                        let c: f64 = xs
                            .iter()
                            .enumerate()
                            .map(|(k, x)| *x as f64 * cost[(k / 3, k % 3)])
                            .sum();
                        best = best.min(c);
                    }
                }
            }
        }
        assert!((s.cost - best).abs() < 1e-9, "{} vs {best}", s.cost);
    }

    #[test]
    fn degenerate_identity_problem() {
        let n = 6;
        let cost = DMatrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs());
        let w = vec![1.0 / n as f64; n];
        let s = solve(&w, &w, &cost).unwrap();
        assert!(s.cost.abs() < 1e-14);
        assert_eq!(s.basis.len(), 2 * n - 1);
    }

    #[test]
    fn unbalanced_is_rejected() {
        let cost = DMatrix::zeros(1, 1);
        assert!(matches!(
            solve(&[1.0], &[2.0], &cost),
            Err(SimplexError::Infeasible { .. })
        ));
    }

    proptest! {
        #[test]
        fn marginals_and_certificate(
            a in prop::collection::vec(0.01f64..1.0, 1..8),
            b in prop::collection::vec(0.01f64..1.0, 1..8),
            seed in prop::collection::vec(0.0f64..5.0, 64),
        ) {
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            let a: Vec<f64> = a.iter().map(|x| x / sa).collect();
            let b: Vec<f64> = b.iter().map(|x| x / sb).collect();
            let cost = DMatrix::from_fn(a.len(), b.len(), |i, j| seed[(i * 8 + j) % 64]);
            let s = solve(&a, &b, &cost).unwrap();
            prop_assert_eq!(s.basis.len(), a.len() + b.len() - 1);
            let mut rows = vec![0.0; a.len()];
            let mut cols = vec![0.0; b.len()];
            for &(r, c, x) in &s.basis {
                rows[r] += x;
                cols[c] += x;
            }
            for (x, y) in rows.iter().zip(&a) { prop_assert!((x - y).abs() < 1e-9); }
            for (x, y) in cols.iter().zip(&b) { prop_assert!((x - y).abs() < 1e-9); }
            // weak duality: the potentials bound the optimum from below
            let dual: f64 = s.u.iter().zip(&a).map(|(u, x)| u * x).sum::<f64>()
                + s.v.iter().zip(&b).map(|(v, y)| v * y).sum::<f64>();
            prop_assert!((dual - s.cost).abs() < 1e-9);
        }
    }
}
