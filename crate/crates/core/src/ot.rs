//! Entropic optimal transport of patch areas with dustbins.
//!
//! Partial transport (`P 1 <= a_S`, `P^T 1 <= a_T`) is turned into a balanced
//! problem by appending one dustbin row and one dustbin column. The source
//! dustbin row holds `sum(a_T)` and the target dustbin column holds `sum(a_S)`,
//! so every bit of area always has an escape route and the augmented problem
//! is feasible for any non-negative areas.
//!
//! The solver runs Sinkhorn in the log domain: dual potentials are kept as
//! logarithms and periodically absorbed into a rebuilt kernel, and the scaling
//! iterations in between operate on a kernel whose entries are bounded by the
//! current plan. Rows and columns with zero mass are removed before solving.
//! The regularization is annealed geometrically to the requested value, and
//! the final iterate is rounded onto the constraint set.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::{exp, ln, log_sum_exp};

/// Sinkhorn parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SinkhornConfig {
    /// Entropic regularization strength.
    pub reg: f64,
    pub max_iters: usize,
    /// Stop once every row and column marginal is within this bound.
    pub marginal_tol: f64,
    /// Cost of sending area to (or receiving it from) a dustbin.
    pub dustbin_cost: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            reg: 0.01,
            max_iters: 200,
            marginal_tol: 1e-6,
            dustbin_cost: 0.0,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg > 0.0 && self.reg.is_finite()) {
            return Err(invalid("sinkhorn reg must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("sinkhorn max_iters must be at least 1"));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(invalid("sinkhorn marginal_tol must be positive"));
        }
        if !self.dustbin_cost.is_finite() {
            return Err(invalid("dustbin cost must be finite"));
        }
        Ok(())
    }
}

/// `N x M` matrix of patch-to-patch costs, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "cost matrix entries",
                expected: rows * cols,
                actual: costs.len(),
            });
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("cost entries must be finite"));
        }
        Ok(Self { rows, cols, costs })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }
}

/// Negative inner product of every source/target descriptor pair.
///
/// `source` is `N x source_dim` and `target` is `M x target_dim`, both row-major.
pub fn cost_matrix(source: &[f64], source_dim: usize, target: &[f64], target_dim: usize) -> Result<CostMatrix> {
    if source_dim != target_dim {
        return Err(Error::DimensionMismatch {
            what: "descriptor dimension",
            expected: source_dim,
            actual: target_dim,
        });
    }
    let d = source_dim;
    if d == 0 {
        return Err(invalid("descriptor dimension must be positive"));
    }
    if source.len() % d != 0 || target.len() % d != 0 {
        return Err(invalid("descriptor matrix length is not a multiple of its dimension"));
    }
    let n = source.len() / d;
    let m = target.len() / d;
    let mut costs = Vec::with_capacity(n * m);
    for fi in source.chunks_exact(d) {
        for fj in target.chunks_exact(d) {
            let dot: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
            costs.push(-dot);
        }
    }
    CostMatrix::new(n, m, costs)
}

/// Solution of the augmented transport problem.
///
/// The plan is `(N+1) x (M+1)`; row `N` and column `M` are the dustbins.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    n: usize,
    m: usize,
    plan: Vec<f64>,
    source_areas: Vec<f64>,
    target_areas: Vec<f64>,
    marginal_error: f64,
    sinkhorn_error: f64,
    converged: bool,
    iterations: usize,
}

impl TransportPlan {
    /// Builds a plan from raw entries, recomputing the marginal error. Used to
    /// construct fixtures and to rebuild plans read from elsewhere.
    pub fn from_entries(
        n: usize,
        m: usize,
        plan: Vec<f64>,
        source_areas: Vec<f64>,
        target_areas: Vec<f64>,
    ) -> Result<Self> {
        if plan.len() != (n + 1) * (m + 1) {
            return Err(Error::DimensionMismatch {
                what: "plan entries",
                expected: (n + 1) * (m + 1),
                actual: plan.len(),
            });
        }
        if source_areas.len() != n || target_areas.len() != m {
            return Err(invalid("area vectors do not match plan shape"));
        }
        if plan.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("plan entries must be finite and non-negative"));
        }
        let mut out = Self {
            n,
            m,
            plan,
            source_areas,
            target_areas,
            marginal_error: 0.0,
            sinkhorn_error: 0.0,
            converged: true,
            iterations: 0,
        };
        out.marginal_error = out.compute_marginal_error();
        out.sinkhorn_error = out.marginal_error;
        Ok(out)
    }

    pub fn n_sources(&self) -> usize {
        self.n
    }

    pub fn n_targets(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * (self.m + 1) + j]
    }

    /// Mass from source `i` to real targets (dustbin column excluded).
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (self.m + 1);
        &self.plan[start..start + self.m]
    }

    pub fn to_dustbin(&self, i: usize) -> f64 {
        self.get(i, self.m)
    }

    pub fn from_dustbin(&self, j: usize) -> f64 {
        self.get(self.n, j)
    }

    pub fn entries(&self) -> &[f64] {
        &self.plan
    }

    pub fn source_areas(&self) -> &[f64] {
        &self.source_areas
    }

    pub fn target_areas(&self) -> &[f64] {
        &self.target_areas
    }

    /// Largest violation of a real row or real column marginal.
    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    /// Marginal violation of the last Sinkhorn iterate, before the final
    /// projection onto the constraints.
    pub fn sinkhorn_error(&self) -> f64 {
        self.sinkhorn_error
    }

    /// Whether Sinkhorn itself reached the marginal tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Sweeps spent at the target regularization.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `sum P * C` over the augmented problem, with `dustbin_cost` on every
    /// dustbin entry (including dustbin-to-dustbin).
    pub fn total_cost(&self, costs: &CostMatrix, dustbin_cost: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..=self.n {
            for j in 0..=self.m {
                let c = if i < self.n && j < self.m {
                    costs.get(i, j)
                } else {
                    dustbin_cost
                };
                total += self.get(i, j) * c;
            }
        }
        total
    }

    fn compute_marginal_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..self.n {
            let s: f64 = (0..=self.m).map(|j| self.get(i, j)).sum();
            err = err.max((s - self.source_areas[i]).abs());
        }
        for j in 0..self.m {
            let s: f64 = (0..=self.n).map(|i| self.get(i, j)).sum();
            err = err.max((s - self.target_areas[j]).abs());
        }
        err
    }
}

/// Solves the dustbin-augmented entropic transport problem.
///
/// The regularization is annealed from the cost range down to `reg`, each
/// stage warm-starting the next; `max_iters` bounds the sweeps at the final
/// `reg`. The last iterate is then projected onto the marginal constraints,
/// so the returned plan is feasible to rounding error.
///
/// Non-convergence is not an error: the returned plan carries
/// `converged() == false` and the raw Sinkhorn violation in
/// `sinkhorn_error()`.
pub fn solve_transport(
    costs: &CostMatrix,
    source_areas: &[f64],
    target_areas: &[f64],
    config: &SinkhornConfig,
) -> Result<TransportPlan> {
    config.validate()?;
    let n = costs.rows();
    let m = costs.cols();
    if source_areas.len() != n {
        return Err(Error::DimensionMismatch {
            what: "source areas",
            expected: n,
            actual: source_areas.len(),
        });
    }
    if target_areas.len() != m {
        return Err(Error::DimensionMismatch {
            what: "target areas",
            expected: m,
            actual: target_areas.len(),
        });
    }
    let bad = |a: &f64| !a.is_finite() || *a < 0.0;
    if source_areas.iter().any(bad) || target_areas.iter().any(bad) {
        return Err(invalid("areas must be finite and non-negative"));
    }
    let total_source: f64 = source_areas.iter().sum();
    let total_target: f64 = target_areas.iter().sum();
    if !(total_source > 0.0) || !(total_target > 0.0) {
        return Err(invalid("source and target areas need at least one positive entry each"));
    }

    // Active (positive-mass) rows and columns, dustbins last.
    let rows: Vec<usize> = (0..n).filter(|&i| source_areas[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| target_areas[j] > 0.0).collect();
    let mut row_mass: Vec<f64> = rows.iter().map(|&i| source_areas[i]).collect();
    row_mass.push(total_target);
    let mut col_mass: Vec<f64> = cols.iter().map(|&j| target_areas[j]).collect();
    col_mass.push(total_source);

    let an = row_mass.len();
    let am = col_mass.len();
    let mut reduced_costs = Vec::with_capacity(an * am);
    for ai in 0..an {
        for aj in 0..am {
            let c = match (rows.get(ai), cols.get(aj)) {
                (Some(&i), Some(&j)) => costs.get(i, j),
                _ => config.dustbin_cost,
            };
            reduced_costs.push(c);
        }
    }

    let mut solver = StabilizedSinkhorn::new(an, am, reduced_costs, row_mass, col_mass);
    let iterations = solver.run(config.reg, config.max_iters, config.marginal_tol);
    let mut reduced = solver.plan();
    let sinkhorn_error = marginal_violation(&reduced, &solver.row_mass, &solver.col_mass);
    round_to_marginals(&mut reduced, &solver.row_mass, &solver.col_mass);

    let mut plan = vec![0.0; (n + 1) * (m + 1)];
    let full_row = |ai: usize| rows.get(ai).copied().unwrap_or(n);
    let full_col = |aj: usize| cols.get(aj).copied().unwrap_or(m);
    for ai in 0..an {
        for aj in 0..am {
            plan[full_row(ai) * (m + 1) + full_col(aj)] = reduced[ai * am + aj];
        }
    }
    let mut out = TransportPlan {
        n,
        m,
        plan,
        source_areas: source_areas.to_vec(),
        target_areas: target_areas.to_vec(),
        marginal_error: 0.0,
        sinkhorn_error,
        converged: sinkhorn_error <= config.marginal_tol,
        iterations,
    };
    out.marginal_error = out.compute_marginal_error();
    Ok(out)
}

/// Largest row or column violation of a dense `rows x cols` matrix.
fn marginal_violation(p: &[f64], rows: &[f64], cols: &[f64]) -> f64 {
    let m = cols.len();
    let mut err: f64 = 0.0;
    let mut col_sums = vec![0.0; m];
    for (i, r) in rows.iter().enumerate() {
        let row = &p[i * m..(i + 1) * m];
        err = err.max((row.iter().sum::<f64>() - r).abs());
        for (acc, v) in col_sums.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (s, c) in col_sums.iter().zip(cols) {
        err = err.max((s - c).abs());
    }
    err
}

/// Projects a positive matrix onto the transport polytope of `(rows, cols)`
/// (Altschuler, Weed and Rigollet's rounding): scale down over-full rows,
/// then over-full columns, then spread the remaining deficit as a rank-one
/// update. Entries stay non-negative.
fn round_to_marginals(p: &mut [f64], rows: &[f64], cols: &[f64]) {
    let m = cols.len();
    for (i, &r) in rows.iter().enumerate() {
        let row = &mut p[i * m..(i + 1) * m];
        let s: f64 = row.iter().sum();
        if s > r {
            let f = r / s;
            row.iter_mut().for_each(|v| *v *= f);
        }
    }
    let mut col_sums = vec![0.0; m];
    for row in p.chunks_exact(m) {
        for (acc, v) in col_sums.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let col_scale: Vec<f64> = col_sums
        .iter()
        .zip(cols)
        .map(|(&s, &c)| if s > c { c / s } else { 1.0 })
        .collect();
    for row in p.chunks_exact_mut(m) {
        for (v, f) in row.iter_mut().zip(&col_scale) {
            *v *= f;
        }
    }
    let row_deficit: Vec<f64> = p
        .chunks_exact(m)
        .zip(rows)
        .map(|(row, &r)| (r - row.iter().sum::<f64>()).max(0.0))
        .collect();
    let mut col_deficit = cols.to_vec();
    for row in p.chunks_exact(m) {
        for (d, v) in col_deficit.iter_mut().zip(row) {
            *d -= v;
        }
    }
    col_deficit.iter_mut().for_each(|d| *d = d.max(0.0));
    let total: f64 = col_deficit.iter().sum();
    if total > 0.0 {
        for (row, rd) in p.chunks_exact_mut(m).zip(&row_deficit) {
            for (v, cd) in row.iter_mut().zip(&col_deficit) {
                *v += rd * cd / total;
            }
        }
    }
}

/// Scalings leaving this band get absorbed into the log potentials.
const ABSORB_LIMIT: f64 = 1e30;
/// Sweep cap for each annealing stage above the target regularization.
const STAGE_ITERS: usize = 50;
/// Relative marginal tolerance that ends an annealing stage early.
const STAGE_TOL: f64 = 1e-3;

struct StabilizedSinkhorn {
    n: usize,
    m: usize,
    costs: Vec<f64>,
    row_mass: Vec<f64>,
    col_mass: Vec<f64>,
    eps: f64,
    log_kernel: Vec<f64>,
    // Absorbed log potentials at the current `eps`.
    alpha: Vec<f64>,
    beta: Vec<f64>,
    // Pending scalings on top of the absorbed kernel.
    u: Vec<f64>,
    v: Vec<f64>,
    kernel: Vec<f64>,
}

impl StabilizedSinkhorn {
    fn new(n: usize, m: usize, costs: Vec<f64>, row_mass: Vec<f64>, col_mass: Vec<f64>) -> Self {
        Self {
            n,
            m,
            costs,
            row_mass,
            col_mass,
            eps: 0.0,
            log_kernel: vec![0.0; n * m],
            alpha: vec![0.0; n],
            beta: vec![0.0; m],
            u: vec![1.0; n],
            v: vec![1.0; m],
            kernel: vec![0.0; n * m],
        }
    }

    /// Anneals down to `reg`, then runs up to `max_iters` sweeps at `reg`.
    /// Returns the sweeps spent at `reg`.
    fn run(&mut self, reg: f64, max_iters: usize, tol: f64) -> usize {
        let spread = self.costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let mass = self.row_mass.iter().fold(0.0f64, |a, &r| a.max(r));
        let mut eps = spread.max(reg);
        loop {
            eps = (eps / 2.0).max(reg);
            let last = eps == reg;
            self.set_eps(eps);
            let (budget, stop) = if last { (max_iters, tol) } else { (STAGE_ITERS, STAGE_TOL * mass) };
            let used = self.sweeps(budget, stop);
            if last {
                return used;
            }
        }
    }

    /// Moves the absorbed potentials to a new regularization.
    fn set_eps(&mut self, eps: f64) {
        if self.eps > 0.0 {
            self.absorb();
            let ratio = self.eps / eps;
            self.alpha.iter_mut().for_each(|a| *a *= ratio);
            self.beta.iter_mut().for_each(|b| *b *= ratio);
        }
        self.eps = eps;
        for (lk, c) in self.log_kernel.iter_mut().zip(&self.costs) {
            *lk = -c / eps;
        }
    }

    fn sweeps(&mut self, budget: usize, tol: f64) -> usize {
        // One sweep in pure log form so the kernel starts well scaled.
        self.log_sweep();
        self.rebuild_kernel();
        let mut iters = 1;
        while iters < budget {
            if self.row_error() <= tol {
                break;
            }
            if !self.scaling_sweep() {
                self.absorb();
                self.log_sweep();
                self.rebuild_kernel();
            } else if self.needs_absorb() {
                self.absorb();
                self.rebuild_kernel();
            }
            iters += 1;
        }
        iters
    }

    fn log_sweep(&mut self) {
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            let row = &self.log_kernel[i * m..(i + 1) * m];
            let lse = log_sum_exp(row.iter().zip(&self.beta).map(|(k, b)| k + b));
            self.alpha[i] = ln(self.row_mass[i]) - lse;
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| self.log_kernel[i * m + j] + self.alpha[i]));
            self.beta[j] = ln(self.col_mass[j]) - lse;
        }
    }

    fn rebuild_kernel(&mut self) {
        let m = self.m;
        for i in 0..self.n {
            for j in 0..m {
                let idx = i * m + j;
                self.kernel[idx] = exp(self.log_kernel[idx] + self.alpha[i] + self.beta[j]);
            }
        }
        self.u.iter_mut().for_each(|x| *x = 1.0);
        self.v.iter_mut().for_each(|x| *x = 1.0);
    }

    /// Row marginal violation of the current (column-exact) iterate.
    fn row_error(&self) -> f64 {
        let m = self.m;
        let mut err: f64 = 0.0;
        for i in 0..self.n {
            let row = &self.kernel[i * m..(i + 1) * m];
            let s: f64 = row.iter().zip(&self.v).map(|(k, v)| k * v).sum();
            err = err.max((self.u[i] * s - self.row_mass[i]).abs());
        }
        err
    }

    /// One scaling sweep; false when a scaling under/overflowed.
    fn scaling_sweep(&mut self) -> bool {
        let m = self.m;
        for i in 0..self.n {
            let row = &self.kernel[i * m..(i + 1) * m];
            let s: f64 = row.iter().zip(&self.v).map(|(k, v)| k * v).sum();
            let u = self.row_mass[i] / s;
            if !(u.is_finite() && u > 0.0) {
                return false;
            }
            self.u[i] = u;
        }
        let mut col = vec![0.0; m];
        for i in 0..self.n {
            let ui = self.u[i];
            let row = &self.kernel[i * m..(i + 1) * m];
            for (acc, k) in col.iter_mut().zip(row) {
                *acc += k * ui;
            }
        }
        for j in 0..m {
            let v = self.col_mass[j] / col[j];
            if !(v.is_finite() && v > 0.0) {
                return false;
            }
            self.v[j] = v;
        }
        true
    }

    fn needs_absorb(&self) -> bool {
        let out = |x: &f64| !(*x < ABSORB_LIMIT && *x > 1.0 / ABSORB_LIMIT);
        self.u.iter().any(out) || self.v.iter().any(out)
    }

    fn absorb(&mut self) {
        for (a, u) in self.alpha.iter_mut().zip(&self.u) {
            if u.is_finite() && *u > 0.0 {
                *a += ln(*u);
            }
        }
        for (b, v) in self.beta.iter_mut().zip(&self.v) {
            if v.is_finite() && *v > 0.0 {
                *b += ln(*v);
            }
        }
        self.u.iter_mut().for_each(|x| *x = 1.0);
        self.v.iter_mut().for_each(|x| *x = 1.0);
    }

    fn plan(&self) -> Vec<f64> {
        let m = self.m;
        let mut out = Vec::with_capacity(self.n * m);
        for i in 0..self.n {
            for j in 0..m {
                out.push(self.kernel[i * m + j] * self.u[i] * self.v[j]);
            }
        }
        out
    }
}
