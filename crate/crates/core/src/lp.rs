//! Dense revised simplex for small linear programs.
//!
//! [`LinearProgram`] is a general minimization with `≤`/`≥`/`=` rows and free
//! or non-negative variables. It is converted to standard form
//! `min cᵀz, Az = b, z ≥ 0` either directly (the *primal route*) or through its
//! LP dual (the *dual route*), whichever gives fewer standard-form rows; the
//! Bellman-inequality programs of the planner have `|S||Act|` rows but only
//! `|S| + n_c` columns, so they go through the dual route.
//!
//! The standard-form engine is a two-phase revised simplex with an explicit
//! dense basis inverse, Dantzig pricing and a fallback to Bland's rule after a
//! run of degenerate pivots. Every optimal answer is re-checked against the
//! original program (primal feasibility, dual feasibility, duality gap,
//! complementary slackness) before it is returned.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Free,
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// `min ⟨objective, x⟩` subject to `rows`, with per-variable sign kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub var_kinds: Vec<VarKind>,
    pub rows: Vec<LpRow>,
    /// A point known to satisfy every row. Lets the dual route report
    /// `Unbounded` without a second, primal feasibility solve.
    #[serde(default)]
    pub feasible_hint: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, var_kinds: Vec<VarKind>) -> Self {
        Self {
            objective,
            var_kinds,
            rows: Vec::new(),
            feasible_hint: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.rows.push(LpRow { coeffs, sense, rhs });
    }

    /// Largest violation of any row or sign restriction at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.sense {
                RowSense::Le => lhs - row.rhs,
                RowSense::Ge => row.rhs - lhs,
                RowSense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (k, &xj) in self.var_kinds.iter().zip(x) {
            if *k == VarKind::NonNegative {
                worst = worst.max(-xj);
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.var_kinds.len() != n {
            return Err(LpError::Shape("var_kinds length differs from objective"));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite);
        }
        for row in &self.rows {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(LpError::NonFinite);
            }
            if row.coeffs.iter().any(|&(j, _)| j >= n) {
                return Err(LpError::Shape("row references an unknown variable"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Auto,
    Primal,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    pub route: Route,
    /// Iteration cap per phase; `0` picks a size-dependent default.
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            route: Route::Auto,
            max_iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpDiagnostics {
    pub iterations: usize,
    pub used_dual_route: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status == Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `∂objective/∂rhs`: `≤ 0` on `≤` rows, `≥ 0` on `≥`
    /// rows. Empty unless optimal.
    pub duals: Vec<f64>,
    /// `Unbounded`: an improving ray `d` in `x`-space. `Infeasible`: Farkas
    /// row multipliers. Best effort; may be absent.
    pub certificate: Option<Vec<f64>>,
    pub diagnostics: LpDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Shape(&'static str),
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error("optimality certificate failed: residual {residual:e} exceeds {tolerance:e} ({what})")]
    Certificate {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },
}

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 40;
/// Pivot candidates below this fraction of the column's largest entry are
/// treated as zero.
const REL_PIVOT_TOL: f64 = 1e-11;
/// A pivot below this fraction of its column is retried with another column.
const POOR_PIVOT: f64 = 1e-8;
const MAX_REJECTED: usize = 8;
/// Relative size of the anti-degeneracy shift.
const PERTURBATION: f64 = 1e-7;

/// Certification thresholds on an `Optimal` answer.
pub const PRIMAL_TOL: f64 = 1e-7;
pub const GAP_TOL: f64 = 1e-7;
pub const COMPLEMENTARITY_TOL: f64 = 1e-6;

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &LpOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let dual = match opts.route {
        Route::Primal => false,
        Route::Dual => true,
        Route::Auto => lp.n_vars() < lp.rows.len(),
    };
    let mut sol = if dual {
        solve_via_dual(lp, opts)?
    } else {
        solve_via_primal(lp, opts)?
    };
    if sol.status == LpStatus::Optimal {
        certify(lp, &mut sol)?;
    }
    Ok(sol)
}

fn infeasible(certificate: Option<Vec<f64>>, iterations: usize, dual: bool) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: Vec::new(),
        objective: f64::INFINITY,
        duals: Vec::new(),
        certificate,
        diagnostics: LpDiagnostics {
            iterations,
            used_dual_route: dual,
            ..Default::default()
        },
    }
}

fn unbounded(certificate: Option<Vec<f64>>, iterations: usize, dual: bool) -> LpSolution {
    LpSolution {
        status: LpStatus::Unbounded,
        objective: f64::NEG_INFINITY,
        ..infeasible(certificate, iterations, dual)
    }
}

fn solve_via_primal(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution, LpError> {
    let m = lp.rows.len();
    let n = lp.n_vars();
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut cost = Vec::new();
    // (plus column, optional minus column) per variable.
    let mut map = Vec::with_capacity(n);
    for j in 0..n {
        let plus = cols.len();
        cols.push(Vec::new());
        cost.push(lp.objective[j]);
        let minus = if lp.var_kinds[j] == VarKind::Free {
            cols.push(Vec::new());
            cost.push(-lp.objective[j]);
            Some(plus + 1)
        } else {
            None
        };
        map.push((plus, minus));
    }
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            let (plus, minus) = map[j];
            cols[plus].push((i, a));
            if let Some(mi) = minus {
                cols[mi].push((i, -a));
            }
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        match row.sense {
            RowSense::Le => cols.push(vec![(i, 1.0)]),
            RowSense::Ge => cols.push(vec![(i, -1.0)]),
            RowSense::Eq => continue,
        }
        cost.push(0.0);
    }
    let b: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
    let sf = StandardForm { m, cols, b, c: cost };
    let res = solve_standard(&sf, opts)?;
    let split = |z: &[f64]| -> Vec<f64> {
        map.iter()
            .map(|&(p, mi)| z[p] - mi.map_or(0.0, |k| z[k]))
            .collect()
    };
    Ok(match res.status {
        StdStatus::Optimal => {
            let x = split(&res.x);
            LpSolution {
                status: LpStatus::Optimal,
                objective: lp.objective_value(&x),
                x,
                duals: res.y,
                certificate: None,
                diagnostics: LpDiagnostics {
                    iterations: res.iterations,
                    ..Default::default()
                },
            }
        }
        StdStatus::Infeasible => infeasible(res.farkas, res.iterations, false),
        StdStatus::Unbounded => unbounded(res.ray.map(|r| split(&r)), res.iterations, false),
    })
}

fn solve_via_dual(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution, LpError> {
    let n = lp.n_vars();
    // Standard-form rows are the primal variables.
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut cost = Vec::new();
    // (primal row, sign of the column in y_i)
    let mut owner: Vec<(usize, f64)> = Vec::new();
    let row_sign: Vec<f64> = lp
        .rows
        .iter()
        .map(|r| if r.sense == RowSense::Le { -1.0 } else { 1.0 })
        .collect();
    for (i, row) in lp.rows.iter().enumerate() {
        let s = row_sign[i];
        let col: Vec<(usize, f64)> = row.coeffs.iter().map(|&(j, a)| (j, s * a)).collect();
        if row.sense == RowSense::Eq {
            cols.push(col.iter().map(|&(j, a)| (j, -a)).collect());
            cost.push(s * row.rhs);
            owner.push((i, -1.0));
        }
        cols.push(col);
        cost.push(-s * row.rhs);
        owner.push((i, 1.0));
    }
    let n_y = cols.len();
    for (j, kind) in lp.var_kinds.iter().enumerate() {
        if *kind == VarKind::NonNegative {
            cols.push(vec![(j, 1.0)]);
            cost.push(0.0);
        }
    }
    let sf = StandardForm {
        m: n,
        cols,
        b: lp.objective.clone(),
        c: cost,
    };
    let res = solve_standard(&sf, opts)?;
    match res.status {
        StdStatus::Optimal => {
            let mut y = vec![0.0; lp.rows.len()];
            for (k, &(i, s)) in owner.iter().enumerate() {
                y[i] += s * res.x[k];
            }
            let duals: Vec<f64> = y.iter().zip(&row_sign).map(|(y, s)| y * s).collect();
            let x: Vec<f64> = res.y.iter().map(|w| -w).collect();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: lp.objective_value(&x),
                x,
                duals,
                certificate: None,
                diagnostics: LpDiagnostics {
                    iterations: res.iterations,
                    used_dual_route: true,
                    ..Default::default()
                },
            })
        }
        StdStatus::Unbounded => {
            let farkas = res.ray.map(|ray| {
                let mut u = vec![0.0; lp.rows.len()];
                for (k, &(i, s)) in owner.iter().enumerate().take(n_y) {
                    u[i] += s * ray[k];
                }
                u.iter().zip(&row_sign).map(|(u, s)| u * s).collect()
            });
            Ok(infeasible(farkas, res.iterations, true))
        }
        StdStatus::Infeasible => {
            // Dual infeasible: the primal is unbounded if it is feasible at all.
            let hint_ok = lp
                .feasible_hint
                .as_ref()
                .is_some_and(|h| h.len() == n && lp.max_violation(h) <= 1e-7);
            if hint_ok {
                let ray = res.farkas.map(|u| u.iter().map(|v| -v).collect());
                Ok(unbounded(ray, res.iterations, true))
            } else {
                solve_via_primal(lp, opts)
            }
        }
    }
}

fn certify(lp: &LinearProgram, sol: &mut LpSolution) -> Result<(), LpError> {
    let x = &sol.x;
    let y = &sol.duals;
    let mut reduced = lp.objective.clone();
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut comp = 0.0f64;
    let mut by = 0.0;
    let mut scale = 1.0f64;
    for (row, &yi) in lp.rows.iter().zip(y) {
        let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
        for &(j, a) in &row.coeffs {
            reduced[j] -= yi * a;
        }
        let slack = lhs - row.rhs;
        let (viol, sign_viol) = match row.sense {
            RowSense::Le => (slack.max(0.0), yi.max(0.0)),
            RowSense::Ge => ((-slack).max(0.0), (-yi).max(0.0)),
            RowSense::Eq => (slack.abs(), 0.0),
        };
        primal = primal.max(viol);
        dual = dual.max(sign_viol);
        if row.sense != RowSense::Eq {
            comp = comp.max((yi * slack).abs());
        }
        by += yi * row.rhs;
        scale = scale.max(row.rhs.abs());
    }
    for ((kind, &r), &xj) in lp.var_kinds.iter().zip(&reduced).zip(x.iter()) {
        match kind {
            VarKind::Free => dual = dual.max(r.abs()),
            VarKind::NonNegative => {
                dual = dual.max((-r).max(0.0));
                primal = primal.max((-xj).max(0.0));
                comp = comp.max((r * xj).abs());
            }
        }
        scale = scale.max(xj.abs());
    }
    let gap = (sol.objective - by).abs();
    sol.diagnostics.primal_residual = primal;
    sol.diagnostics.dual_residual = dual;
    sol.diagnostics.duality_gap = gap;
    sol.diagnostics.complementarity = comp;
    let checks = [
        ("primal feasibility", primal, PRIMAL_TOL * scale),
        ("dual feasibility", dual, PRIMAL_TOL * scale),
        ("duality gap", gap, GAP_TOL * scale),
        ("complementary slackness", comp, COMPLEMENTARITY_TOL * scale),
    ];
    for (what, residual, tolerance) in checks {
        if !(residual <= tolerance) {
            return Err(LpError::Certificate {
                what,
                residual,
                tolerance,
            });
        }
    }
    Ok(())
}

/// `min cᵀz  s.t.  Az = b, z ≥ 0` with `A` stored as sparse columns.
struct StandardForm {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StdStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

struct StdResult {
    status: StdStatus,
    x: Vec<f64>,
    /// Row duals `c_Bᵀ B⁻¹` in the caller's row orientation.
    y: Vec<f64>,
    ray: Option<Vec<f64>>,
    farkas: Option<Vec<f64>>,
    iterations: usize,
}

const NONBASIC: usize = usize::MAX;

struct Tableau<'a> {
    sf: &'a StandardForm,
    m: usize,
    n: usize,
    /// Row orientation flips so that the working right-hand side is `≥ 0`.
    sign: Vec<f64>,
    b: Vec<f64>,
    /// `B·ε` for the current anti-degeneracy shift `ε`; zero when inactive.
    shift: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    max_iterations: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded(usize, Vec<f64>),
}

impl<'a> Tableau<'a> {
    fn new(sf: &'a StandardForm, max_iterations: usize) -> Self {
        let m = sf.m;
        let n = sf.cols.len();
        let sign: Vec<f64> = sf.b.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = sf.b.iter().zip(&sign).map(|(b, s)| b * s).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut pos = vec![NONBASIC; n + m];
        for (i, p) in pos[n..].iter_mut().enumerate() {
            *p = i;
        }
        Self {
            sf,
            m,
            n,
            basis: (n..n + m).collect(),
            pos,
            binv,
            xb: b.clone(),
            shift: vec![0.0; m],
            b,
            sign,
            iterations: 0,
            since_refactor: 0,
            max_iterations,
        }
    }

    /// Column `j` in the working (sign-flipped) orientation, as (row, value).
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.sf.cols[j] {
                f(i, a * self.sign[i]);
            }
        } else {
            f(j - self.n, 1.0);
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_col(j, |r, a| {
            for (i, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[i * m + r] * a;
            }
        });
        alpha
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost(bj);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &r) in y.iter_mut().zip(row) {
                    *yk += cb * r;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: f64, y: &[f64]) -> f64 {
        let mut d = cost;
        self.for_col(j, |r, a| d -= y[r] * a);
        d
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let theta = self.xb[r] / piv;
        for (i, &al) in alpha.iter().enumerate() {
            if i != r && al != 0.0 {
                self.xb[i] -= al * theta;
            }
        }
        self.xb[r] = theta;
        {
            let (head, tail) = self.binv.split_at_mut(r * m);
            let (row_r, rest) = tail.split_at_mut(m);
            row_r.iter_mut().for_each(|v| *v /= piv);
            for (i, &al) in alpha.iter().enumerate() {
                if i == r || al == 0.0 {
                    continue;
                }
                let row_i = if i < r {
                    &mut head[i * m..(i + 1) * m]
                } else {
                    &mut rest[(i - r - 1) * m..(i - r) * m]
                };
                for (v, &w) in row_i.iter_mut().zip(row_r.iter()) {
                    *v -= al * w;
                }
            }
        }
        let leaving = self.basis[r];
        self.pos[leaving] = NONBASIC;
        self.basis[r] = q;
        self.pos[q] = r;
        self.iterations += 1;
        self.since_refactor += 1;
    }

    /// Rebuilds `B⁻¹` by Gauss-Jordan elimination and recomputes `x_B`.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.for_col(j, |r, v| a[r * m + k] = v);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let (mut best, mut best_abs) = (col, 0.0);
            for r in col..m {
                let v = a[r * m + col].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best_abs < 1e-13 {
                return Err(LpError::Numerical("singular basis"));
            }
            if best != col {
                for k in 0..m {
                    a.swap(col * m + k, best * m + k);
                    inv.swap(col * m + k, best * m + k);
                }
            }
            let p = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row
                .iter()
                .zip(self.b.iter().zip(&self.shift))
                .map(|(r, (b, e))| r * (b + e))
                .sum();
            self.xb[i] = if v < 0.0 && v > -FEAS_TOL { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn run_phase(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        allow_artificial: bool,
    ) -> Result<PhaseEnd, LpError> {
        let total = if allow_artificial { self.n + self.m } else { self.n };
        let mut degenerate = 0usize;
        let start = self.iterations;
        // Columns whose best pivot was too small relative to the column; they
        // are skipped until the next successful pivot.
        let mut rejected: Vec<usize> = Vec::new();
        let mut lenient = false;
        loop {
            if self.iterations - start > self.max_iterations {
                return Err(LpError::IterationLimit);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let y = self.duals(cost);
            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..total {
                if self.pos[j] != NONBASIC || rejected.contains(&j) {
                    continue;
                }
                let d = self.reduced_cost(j, cost(j), &y);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                if rejected.is_empty() {
                    return Ok(PhaseEnd::Optimal);
                }
                rejected.clear();
                lenient = true;
                self.refactor()?;
                continue;
            };
            let alpha = self.ftran(q);
            let amax = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let tol = PIVOT_TOL.max(REL_PIVOT_TOL * amax);
            // Harris two-pass ratio test: bound the step with a slightly
            // relaxed feasibility tolerance, then take the largest pivot
            // among the rows that block within that step.
            let mut theta_max = f64::INFINITY;
            for (i, &a) in alpha.iter().enumerate() {
                if a > tol {
                    theta_max = theta_max.min((self.xb[i].max(0.0) + FEAS_TOL) / a);
                }
            }
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for (i, &a) in alpha.iter().enumerate() {
                if a <= tol || self.xb[i].max(0.0) / a > theta_max {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some(l) => a > alpha[l] || (a == alpha[l] && self.basis[i] < self.basis[l]),
                };
                if better {
                    leave = Some(i);
                    ratio = self.xb[i].max(0.0) / a;
                }
            }
            let Some(r) = leave else {
                return Ok(PhaseEnd::Unbounded(q, alpha));
            };
            if !lenient && alpha[r] < POOR_PIVOT * amax && rejected.len() < MAX_REJECTED {
                rejected.push(q);
                continue;
            }
            rejected.clear();
            lenient = false;
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.xb[r] = self.xb[r].max(0.0);
            self.pivot(r, q, &alpha);
        }
    }

    /// Raises every basic value by a small deterministic amount so that no
    /// ratio test ties at zero; basic artificials are left alone outside
    /// phase one.
    fn perturb(&mut self, include_artificials: bool) {
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
        let mut shift = core::mem::take(&mut self.shift);
        for i in 0..self.m {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = self.basis[i];
            if j >= self.n && !include_artificials {
                continue;
            }
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            let eps = PERTURBATION * scale * (1.0 + u);
            self.xb[i] += eps;
            self.for_col(j, |r, a| shift[r] += a * eps);
        }
        self.shift = shift;
    }

    /// Drops the shift and restores primal feasibility with dual simplex
    /// pivots, which keep the reduced costs under `cost` non-negative.
    fn restore(&mut self, cost: &dyn Fn(usize) -> f64, allow_artificial: bool) -> Result<(), LpError> {
        self.shift.iter_mut().for_each(|e| *e = 0.0);
        self.refactor()?;
        let total = if allow_artificial { self.n + self.m } else { self.n };
        let start = self.iterations;
        loop {
            if self.iterations - start > self.max_iterations {
                return Err(LpError::IterationLimit);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let mut leave = None;
            let mut worst = -FEAS_TOL;
            for (i, &x) in self.xb.iter().enumerate() {
                if x < worst {
                    worst = x;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                self.xb.iter_mut().for_each(|x| *x = x.max(0.0));
                return Ok(());
            };
            let y = self.duals(cost);
            let row: Vec<f64> = self.binv[r * self.m..(r + 1) * self.m].to_vec();
            let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..total {
                if self.pos[j] != NONBASIC {
                    continue;
                }
                let mut a = 0.0;
                self.for_col(j, |i, v| a += row[i] * v);
                if a < -PIVOT_TOL {
                    candidates.push((j, a, self.reduced_cost(j, cost(j), &y).max(0.0)));
                }
            }
            let amax = candidates.iter().fold(0.0f64, |m, c| m.max(-c.1));
            let tol = PIVOT_TOL.max(REL_PIVOT_TOL * amax);
            let theta_max = candidates
                .iter()
                .filter(|c| -c.1 > tol)
                .fold(f64::INFINITY, |m, &(_, a, d)| m.min((d + OPT_TOL) / -a));
            let mut entering: Option<(usize, f64, f64)> = None;
            for &(j, a, d) in &candidates {
                if -a <= tol || d / -a > theta_max {
                    continue;
                }
                if entering.is_none_or(|(_, ba, _)| -a > -ba) {
                    entering = Some((j, a, d));
                }
            }
            let Some((q, _, _)) = entering else {
                return Err(LpError::Numerical("no entering column in dual cleanup"));
            };
            let alpha = self.ftran(q);
            self.pivot(r, q, &alpha);
        }
    }

    /// Pivots basic artificials out at zero level where possible.
    fn expel_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.n {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.pos[j] != NONBASIC {
                    continue;
                }
                let mut v = 0.0;
                self.for_col(j, |i, a| v += row[i] * a);
                if v.abs() > 1e-7 && best.is_none_or(|(_, bv)| v.abs() > bv.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                self.xb[r] = 0.0;
                self.pivot(r, j, &alpha);
            }
        }
        self.refactor()
    }
}

fn solve_standard(sf: &StandardForm, opts: &LpOptions) -> Result<StdResult, LpError> {
    let m = sf.m;
    let n = sf.cols.len();
    let max_iterations = if opts.max_iterations == 0 {
        50_000 + 50 * (m + n)
    } else {
        opts.max_iterations
    };
    let mut t = Tableau::new(sf, max_iterations);

    let phase1 = |j: usize| if j >= n { 1.0 } else { 0.0 };
    t.perturb(true);
    match t.run_phase(&phase1, true)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded(..) => return Err(LpError::Numerical("phase one unbounded")),
    }
    t.restore(&phase1, true)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, &x)| x)
        .sum();
    let bscale = 1.0 + t.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if infeasibility > 1e-8 * bscale {
        let y = t.duals(&phase1);
        let farkas = y.iter().zip(&t.sign).map(|(y, s)| y * s).collect();
        return Ok(StdResult {
            status: StdStatus::Infeasible,
            x: Vec::new(),
            y: Vec::new(),
            ray: None,
            farkas: Some(farkas),
            iterations: t.iterations,
        });
    }
    t.expel_artificials()?;

    let phase2 = |j: usize| if j >= n { 0.0 } else { sf.c[j] };
    t.perturb(false);
    match t.run_phase(&phase2, false)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded(q, alpha) => {
            let mut ray = vec![0.0; n];
            ray[q] = 1.0;
            for (i, &j) in t.basis.iter().enumerate() {
                if j < n {
                    ray[j] = -alpha[i];
                }
            }
            return Ok(StdResult {
                status: StdStatus::Unbounded,
                x: Vec::new(),
                y: Vec::new(),
                ray: Some(ray),
                farkas: None,
                iterations: t.iterations,
            });
        }
    }
    t.restore(&phase2, false)?;
    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[i].max(0.0);
        }
    }
    let y = t.duals(&phase2);
    let y = y.iter().zip(&t.sign).map(|(y, s)| y * s).collect();
    Ok(StdResult {
        status: StdStatus::Optimal,
        x,
        y,
        ray: None,
        farkas: None,
        iterations: t.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both_routes(lp: &LinearProgram) -> [LpSolution; 2] {
        [Route::Primal, Route::Dual].map(|route| {
            solve_lp_with(
                lp,
                &LpOptions {
                    route,
                    ..Default::default()
                },
            )
            .unwrap()
        })
    }

    #[test]
    fn single_lower_bound() {
        let mut lp = LinearProgram::new(vec![1.0], vec![VarKind::Free]);
        lp.add_row(vec![(0, 1.0)], RowSense::Ge, 3.0);
        for sol in both_routes(&lp) {
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!((sol.x[0] - 3.0).abs() < 1e-12);
            assert!((sol.duals[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_optimum_of_value_vector() {
        // max ⟨κ0, V⟩ s.t. V(s) ≤ 5, κ0 uniform over four states.
        let mut lp = LinearProgram::new(vec![-0.25; 4], vec![VarKind::Free; 4]);
        for s in 0..4 {
            lp.add_row(vec![(s, 1.0)], RowSense::Le, 5.0);
        }
        for sol in both_routes(&lp) {
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!(sol.x.iter().all(|v| (v - 5.0).abs() < 1e-12));
            assert!((sol.objective + 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_polytope_is_infeasible() {
        let mut lp = LinearProgram::new(vec![0.0], vec![VarKind::Free]);
        lp.add_row(vec![(0, 1.0)], RowSense::Le, 0.0);
        lp.add_row(vec![(0, 1.0)], RowSense::Ge, 1.0);
        for sol in both_routes(&lp) {
            assert_eq!(sol.status, LpStatus::Infeasible);
        }
        let sol = solve_lp_with(
            &lp,
            &LpOptions {
                route: Route::Primal,
                ..Default::default()
            },
        )
        .unwrap();
        // Farkas: u ≤ 0 on the ≤ row, u ≥ 0 on the ≥ row, uᵀA = 0, uᵀb > 0.
        let u = sol.certificate.unwrap();
        assert!(u[0] <= 1e-12 && u[1] >= -1e-12);
        assert!((u[0] + u[1]).abs() < 1e-12);
        assert!(u[1] * 1.0 + u[0] * 0.0 > 0.0);
    }

    #[test]
    fn unbounded_ray_is_reported() {
        // min -x - y, x - y ≤ 1, x, y ≥ 0.
        let mut lp = LinearProgram::new(vec![-1.0, -1.0], vec![VarKind::NonNegative; 2]);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], RowSense::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
        let d = sol.certificate.unwrap();
        assert!(d[0] >= -1e-12 && d[1] >= -1e-12);
        assert!(d[0] - d[1] <= 1e-12);
        assert!(-d[0] - d[1] < 0.0);

        lp.feasible_hint = Some(vec![0.0, 0.0]);
        let sol = solve_lp_with(
            &lp,
            &LpOptions {
                route: Route::Dual,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn mixed_senses_and_equalities() {
        // min 2a + 3b - c
        // a + b + c = 10, a - b ≥ -2, c ≤ 4, a,b ≥ 0, c free
        let mut lp = LinearProgram::new(
            vec![2.0, 3.0, -1.0],
            vec![VarKind::NonNegative, VarKind::NonNegative, VarKind::Free],
        );
        lp.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], RowSense::Eq, 10.0);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], RowSense::Ge, -2.0);
        lp.add_row(vec![(2, 1.0)], RowSense::Le, 4.0);
        for sol in both_routes(&lp) {
            assert_eq!(sol.status, LpStatus::Optimal);
            // c = 4, a + b = 6 with a cheaper: a = 6, b = 0 → 12 - 4 = 8.
            assert!((sol.objective - 8.0).abs() < 1e-10, "{sol:?}");
            assert!((sol.x[0] - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_program_terminates() {
        // Classic cycling example (Beale) under Dantzig's rule.
        let mut lp = LinearProgram::new(
            vec![-0.75, 150.0, -0.02, 6.0],
            vec![VarKind::NonNegative; 4],
        );
        lp.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], RowSense::Le, 0.0);
        lp.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], RowSense::Le, 0.0);
        lp.add_row(vec![(2, 1.0)], RowSense::Le, 1.0);
        for sol in both_routes(&lp) {
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!((sol.objective + 0.05).abs() < 1e-9, "{}", sol.objective);
        }
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0], vec![VarKind::NonNegative; 2]);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], RowSense::Eq, 2.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], RowSense::Eq, 4.0);
        let sol = solve_lp_with(
            &lp,
            &LpOptions {
                route: Route::Primal,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let lp = LinearProgram::new(vec![f64::NAN], vec![VarKind::Free]);
        assert_eq!(solve_lp(&lp), Err(LpError::NonFinite));
    }
}
