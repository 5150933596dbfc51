//! Dense two-phase simplex (Bland's rule) for `min c·x  s.t.  A x = b, x >= 0`.

const EPS: f64 = 1e-11;

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Solves an equality-form LP. Returns `None` when infeasible or unbounded.
pub fn solve_equality_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<LpSolution> {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m);
    // Tableau columns: n structural, m artificial, 1 rhs.
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for r in 0..m {
        assert_eq!(a[r].len(), n);
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for col in 0..n {
            t[r][col] = sign * a[r][col];
        }
        t[r][n + r] = 1.0;
        t[r][width - 1] = sign * b[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase one: minimise the sum of artificials.
    let mut phase1 = vec![0.0; n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    run_simplex(&mut t, &mut basis, &phase1, n + m)?;
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= n)
        .map(|(r, _)| t[r][width - 1])
        .sum();
    if infeasibility > 1e-8 {
        return None;
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.len() {
        if basis[r] >= n {
            match (0..n).find(|&col| t[r][col].abs() > 1e-9) {
                Some(col) => {
                    pivot(&mut t, r, col);
                    basis[r] = col;
                    r += 1;
                }
                None => {
                    t.remove(r);
                    basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // Phase two on structural columns only.
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat(f64::INFINITY).take(m));
    run_simplex(&mut t, &mut basis, &phase2, n)?;

    let mut x = vec![0.0; n];
    for (row, &var) in basis.iter().enumerate() {
        if var < n {
            x[var] = t[row][width - 1];
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Some(LpSolution { x, objective })
}

fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Option<()> {
    let width = t.first().map_or(0, Vec::len);
    let rhs = width - 1;
    for _ in 0..100_000 {
        // Reduced costs: c_j - c_B B^-1 A_j, read off the tableau directly.
        let entering = (0..allowed).find(|&col| {
            if basis.contains(&col) {
                return false;
            }
            let mut reduced = cost[col];
            for (row, &var) in basis.iter().enumerate() {
                reduced -= cost[var] * t[row][col];
            }
            reduced < -EPS
        });
        let Some(col) = entering else {
            return Some(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for row in 0..t.len() {
            if t[row][col] > EPS {
                let ratio = t[row][rhs] / t[row][col];
                let better = match leave {
                    None => true,
                    Some((best_row, best)) => {
                        ratio < best - EPS || (ratio <= best + EPS && basis[row] < basis[best_row])
                    }
                };
                if better {
                    leave = Some((row, ratio));
                }
            }
        }
        let (row, _) = leave?;
        pivot(t, row, col);
        basis[row] = col;
    }
    None
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (r, line) in t.iter_mut().enumerate() {
        if r == row {
            continue;
        }
        let factor = line[col];
        if factor != 0.0 {
            for (v, pv) in line.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
    }
}

/// Exact optimum of a balanced transportation problem with the given row and
/// column supplies. Returns the optimal cost and the plan (row-major).
pub fn transport_optimum(cost: &[Vec<f64>], rows: &[f64], cols: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = rows.len();
    let m = cols.len();
    let vars = n * m;
    let mut c = Vec::with_capacity(vars);
    for line in cost {
        assert_eq!(line.len(), m);
        c.extend_from_slice(line);
    }
    let mut a = Vec::with_capacity(n + m);
    let mut b = Vec::with_capacity(n + m);
    for i in 0..n {
        let mut line = vec![0.0; vars];
        for j in 0..m {
            line[i * m + j] = 1.0;
        }
        a.push(line);
        b.push(rows[i]);
    }
    for j in 0..m {
        let mut line = vec![0.0; vars];
        for i in 0..n {
            line[i * m + j] = 1.0;
        }
        a.push(line);
        b.push(cols[j]);
    }
    solve_equality_lp(&c, &a, &b).map(|s| (s.objective, s.x))
}
