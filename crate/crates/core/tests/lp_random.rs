use proptest::prelude::*;
use riskmdp_core::lp::{solve_lp_with, LpOptions, Route, RowSense, VarKind};
use riskmdp_core::{LinearProgram, LpStatus};

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        let (top, rest) = a.split_at_mut(k + 1);
        for (i, row) in rest.iter_mut().enumerate() {
            let f = row[k] / top[k][k];
            for (x, y) in row[k..].iter_mut().zip(&top[k][k..]) {
                *x -= f * y;
            }
            b[k + 1 + i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Minimum of `c·x` over `{x ≥ 0, a x ≤ b}` by enumerating every vertex.
fn vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    // All constraints as `g x ≤ h`, including `-x_j ≤ 0`.
    let mut g: Vec<Vec<f64>> = a.to_vec();
    let mut h: Vec<f64> = b.to_vec();
    for j in 0..n {
        let mut row = vec![0.0; n];
        row[j] = -1.0;
        g.push(row);
        h.push(0.0);
    }
    let m = g.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let idx: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let sys = idx.iter().map(|&i| g[i].clone()).collect();
        let rhs = idx.iter().map(|&i| h[i]).collect();
        let Some(x) = solve_square(sys, rhs) else { continue };
        let feasible = (0..m).all(|i| g[i].iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= h[i] + 1e-9);
        if feasible {
            let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn program() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..=3, 2usize..=5).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), m),
            prop::collection::vec(0.1f64..10.0, m),
        )
    })
}

fn build(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LinearProgram {
    let n = c.len();
    let mut lp = LinearProgram::new(c.to_vec(), vec![VarKind::NonNegative; n]);
    for (row, &rhs) in a.iter().zip(b) {
        lp.add_row(row.iter().copied().enumerate().collect(), RowSense::Le, rhs);
    }
    // A box keeps every instance bounded.
    for j in 0..n {
        lp.add_row(vec![(j, 1.0)], RowSense::Le, 20.0);
    }
    lp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn both_routes_match_vertex_enumeration((c, a, b) in program()) {
        let lp = build(&c, &a, &b);
        let mut boxed_a = a.clone();
        let mut boxed_b = b.clone();
        for j in 0..c.len() {
            let mut row = vec![0.0; c.len()];
            row[j] = 1.0;
            boxed_a.push(row);
            boxed_b.push(20.0);
        }
        // The origin is feasible since b > 0.
        let oracle = vertex_oracle(&c, &boxed_a, &boxed_b).unwrap();
        for route in [Route::Primal, Route::Dual] {
            let sol = solve_lp_with(&lp, &LpOptions { route, ..Default::default() }).unwrap();
            prop_assert_eq!(sol.status, LpStatus::Optimal);
            prop_assert!((sol.objective - oracle).abs() < 1e-7 * (1.0 + oracle.abs()), "{:?}: {} vs {}", route, sol.objective, oracle);
            prop_assert!(lp.max_violation(&sol.x) < 1e-8);
            // Strong duality through the row multipliers (≤ rows: y ≤ 0).
            prop_assert!(sol.duals.iter().all(|&y| y <= 1e-9));
            let dual_obj: f64 = sol.duals.iter().zip(&lp.rows).map(|(y, r)| y * r.rhs).sum();
            prop_assert!((dual_obj - oracle).abs() < 1e-6 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn infeasible_programs_carry_a_farkas_certificate((c, a, b) in program()) {
        // Add x_0 ≥ 30 against the box x_0 ≤ 20.
        let mut lp = build(&c, &a, &b);
        lp.add_row(vec![(0, 1.0)], RowSense::Ge, 30.0);
        for route in [Route::Primal, Route::Dual] {
            let sol = solve_lp_with(&lp, &LpOptions { route, ..Default::default() }).unwrap();
            prop_assert_eq!(sol.status, LpStatus::Infeasible);
        }
        let sol = solve_lp_with(&lp, &LpOptions { route: Route::Primal, ..Default::default() }).unwrap();
        if let Some(u) = sol.certificate {
            // uᵀA ≤ 0 on non-negative columns and uᵀb > 0 with the sign rules
            // of the rows proves emptiness.
            for (y, r) in u.iter().zip(&lp.rows) {
                match r.sense {
                    RowSense::Le => prop_assert!(*y <= 1e-9),
                    RowSense::Ge => prop_assert!(*y >= -1e-9),
                    RowSense::Eq => {}
                }
            }
            let mut ua = vec![0.0; c.len()];
            for (y, r) in u.iter().zip(&lp.rows) {
                for &(j, v) in &r.coeffs {
                    ua[j] += y * v;
                }
            }
            let ub: f64 = u.iter().zip(&lp.rows).map(|(y, r)| y * r.rhs).sum();
            prop_assert!(ua.iter().all(|&v| v <= 1e-8), "{:?}", ua);
            prop_assert!(ub > 1e-9);
        }
    }
}
