//! Independent brute-force oracles for the integration tests.
#![allow(dead_code)]

use milp_decomp::milp::MixedSet;
use milp_decomp::Matrix;

const TOL: f64 = 1e-9;

/// Solves the square system `a x = rhs` by Gaussian elimination with
/// partial pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Minimum of `c'x` over `{G x <= h, lb <= x <= ub}` by visiting every
/// basic solution. `None` when the polyhedron is empty.
pub fn vertex_min(c: &[f64], g: &Matrix, h: &[f64], lb: &[f64], ub: &[f64]) -> Option<f64> {
    let n = c.len();
    if n == 0 {
        return (0..g.rows()).all(|i| h[i] >= -TOL).then_some(0.0);
    }
    // Hyperplanes: rows of G, then x_j = lb_j, then x_j = ub_j.
    let mut planes: Vec<(Vec<f64>, f64)> =
        (0..g.rows()).map(|i| (g.row(i).to_vec(), h[i])).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lb[j]));
        planes.push((e, ub[j]));
    }
    let feasible = |x: &[f64]| {
        (0..g.rows()).all(|i| {
            let lhs: f64 = g.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            lhs <= h[i] + TOL * (1.0 + h[i].abs())
        }) && x
            .iter()
            .zip(lb.iter().zip(ub))
            .all(|(v, (l, u))| *v >= l - TOL && *v <= u + TOL)
    };
    let mut best: Option<f64> = None;
    combinations(planes.len(), n, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let r: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, r) {
            if feasible(&x) {
                let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    best
}

/// Minimum of `objective'x` over a bounded mixed-integer set: every integer
/// assignment, then [`vertex_min`] over the continuous remainder.
pub fn brute_milp(set: &impl MixedSet, objective: &[f64]) -> Option<f64> {
    let n = set.dim();
    let int_idx: Vec<usize> = (0..n).filter(|&j| set.integer()[j]).collect();
    let cont_idx: Vec<usize> = (0..n).filter(|&j| !set.integer()[j]).collect();
    let lo: Vec<i64> = int_idx
        .iter()
        .map(|&j| set.lower()[j].ceil() as i64)
        .collect();
    let hi: Vec<i64> = int_idx
        .iter()
        .map(|&j| set.upper()[j].floor() as i64)
        .collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return None;
    }
    let g = set.constraints();
    let mut assign = lo.clone();
    let mut best: Option<f64> = None;
    loop {
        let fixed: f64 = int_idx
            .iter()
            .zip(&assign)
            .map(|(&j, &v)| objective[j] * v as f64)
            .sum();
        let rhs: Vec<f64> = (0..g.rows())
            .map(|i| {
                set.rhs()[i]
                    - int_idx
                        .iter()
                        .zip(&assign)
                        .map(|(&j, &v)| g.get(i, j) * v as f64)
                        .sum::<f64>()
            })
            .collect();
        let sub = Matrix::from_flat(
            g.rows(),
            cont_idx.len(),
            (0..g.rows())
                .flat_map(|i| cont_idx.iter().map(move |&j| g.get(i, j)))
                .collect(),
        );
        let c: Vec<f64> = cont_idx.iter().map(|&j| objective[j]).collect();
        let lb: Vec<f64> = cont_idx.iter().map(|&j| set.lower()[j]).collect();
        let ub: Vec<f64> = cont_idx.iter().map(|&j| set.upper()[j]).collect();
        if let Some(v) = vertex_min(&c, &sub, &rhs, &lb, &ub) {
            let total = fixed + v;
            best = Some(best.map_or(total, |b: f64| b.min(total)));
        }
        let mut advanced = false;
        for t in 0..assign.len() {
            if assign[t] < hi[t] {
                assign[t] += 1;
                advanced = true;
                break;
            }
            assign[t] = lo[t];
        }
        if !advanced {
            return best;
        }
    }
}
