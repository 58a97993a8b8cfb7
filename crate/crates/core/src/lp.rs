//! Self-contained dense linear-program solver.
//!
//! Every LP in this crate (primal sequence-form programs, dual-game programs,
//! their discounted variants) is built as an [`LpProblem`] and handed to
//! [`solve_lp`]. The implementation is a bounded-variable two-phase revised
//! simplex with a dense basis inverse. Pivoting uses Dantzig pricing with
//! lowest-index tie-breaking and falls back to Bland's rule when the
//! objective stalls, so every solve is deterministic: identical input yields
//! a bit-for-bit identical optimum.
//!
//! Infeasibility and unboundedness are reported through [`LpStatus`], never
//! as errors; only malformed input (dimension mismatches, inverted bounds)
//! is an error.

use crate::error::{Error, Result};

#[doc(hidden)]
pub mod stats {
    use std::sync::atomic::{AtomicUsize, Ordering};
    pub static COLD: AtomicUsize = AtomicUsize::new(0);
    pub static WARM_DIRECT: AtomicUsize = AtomicUsize::new(0);
    pub static WARM_REPAIRED: AtomicUsize = AtomicUsize::new(0);
    pub static REPAIR_FAILED: AtomicUsize = AtomicUsize::new(0);
    pub static REPAIR_PIVOTS: AtomicUsize = AtomicUsize::new(0);
    pub static COLD_PIVOTS: AtomicUsize = AtomicUsize::new(0);
    pub static WARM_MICROS: AtomicUsize = AtomicUsize::new(0);
    pub static COLD_MICROS: AtomicUsize = AtomicUsize::new(0);
    #[allow(clippy::type_complexity)]
    pub fn snapshot() -> (usize, usize, usize, usize, usize, usize, usize, usize) {
        (
            COLD.load(Ordering::Relaxed),
            WARM_DIRECT.load(Ordering::Relaxed),
            WARM_REPAIRED.load(Ordering::Relaxed),
            REPAIR_FAILED.load(Ordering::Relaxed),
            REPAIR_PIVOTS.load(Ordering::Relaxed),
            COLD_PIVOTS.load(Ordering::Relaxed),
            WARM_MICROS.load(Ordering::Relaxed),
            COLD_MICROS.load(Ordering::Relaxed),
        )
    }
}

/// Objective direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// A single dense constraint row.
#[derive(Debug, Clone)]
pub struct LpConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A dense linear program.
///
/// `bounds[j]` is the closed interval for variable `j`; either side may be
/// infinite. `names` is optional and used only by [`dump_lp`].
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<LpConstraint>,
    pub bounds: Vec<(f64, f64)>,
    pub names: Option<Vec<String>>,
}

impl LpProblem {
    /// A problem with `nvars` variables, all bounded to `[0, +inf)`.
    pub fn new(sense: Sense, nvars: usize) -> Self {
        LpProblem {
            sense,
            objective: vec![0.0; nvars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); nvars],
            names: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.bounds[var] = (f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn push_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(LpConstraint { coeffs, relation, rhs });
    }

    /// Structural validation; the named-field error messages here are what
    /// callers see for malformed programs.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::input("objective: must have at least one variable"));
        }
        if self.bounds.len() != n {
            return Err(Error::input(format!(
                "variable_bounds: expected {} entries, got {}",
                n,
                self.bounds.len()
            )));
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::input(format!("objective[{j}]: non-finite coefficient")));
            }
        }
        for (j, &(lo, up)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || up.is_nan() || lo > up {
                return Err(Error::input(format!(
                    "variable_bounds[{j}]: lower {lo} must not exceed upper {up}"
                )));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::input(format!(
                    "constraints[{i}]: row length {} does not match objective length {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() {
                return Err(Error::input(format!("constraints[{i}]: non-finite rhs")));
            }
            if row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::input(format!("constraints[{i}]: non-finite coefficient")));
            }
        }
        if let Some(names) = &self.names {
            if names.len() != n {
                return Err(Error::input(format!(
                    "names: expected {} entries, got {}",
                    n,
                    names.len()
                )));
            }
        }
        Ok(())
    }
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of a solve.
///
/// When `status` is `Optimal`, `point` is primal-feasible within the
/// configured tolerance, `value == objective . point`, and `dual_point`
/// carries one multiplier per constraint (signed for the user's objective
/// sense, so `value == dual_point . rhs` for programs whose variables are
/// nonbasic at zero).
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub point: Vec<f64>,
    pub dual_point: Vec<f64>,
}

/// Solver tuning knobs. The defaults are what the rest of the crate uses.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Feasibility and reduced-cost tolerance.
    pub feas_tol: f64,
    /// Minimum magnitude accepted for a pivot element.
    pub pivot_tol: f64,
    /// Hard iteration cap; 0 means derive from problem size.
    pub max_iters: usize,
    /// Basis-inverse refactorization interval.
    pub refactor_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iters: 0,
            refactor_every: 500,
        }
    }
}

/// Reusable state for solving many programs that share one constraint
/// matrix and objective and differ only in right-hand sides (the dual-game
/// strategy programs do exactly this). If the cached basis is still
/// primal-feasible for the new rhs it is also still optimal, and the solve
/// collapses to two matrix-vector products.
#[derive(Clone)]
pub struct WarmCache {
    m: usize,
    ncols: usize,
    basis: Vec<usize>,
    states: Vec<VarState>,
    binv: Vec<f64>,
    /// Rank-one updates applied to `binv` since its last refactorization;
    /// bounds the numerical drift a reused factorization may carry.
    age: usize,
}

/// Solve with default configuration.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    solve_lp_with(problem, &SolverConfig::default())
}

/// Sentinel for recoverable numerical breakdown inside the simplex.
const NUMERIC_BREAKDOWN: &str = "singular basis during refactorization";

/// Solve with explicit configuration.
///
/// On the rare numerical breakdown (a noise pivot corrupting the basis),
/// the solve deterministically retries with tighter refactorization and
/// pivot tolerances before giving up.
pub fn solve_lp_with(problem: &LpProblem, cfg: &SolverConfig) -> Result<LpSolution> {
    problem.validate()?;
    let ladder: [(usize, f64); 3] = [
        (cfg.refactor_every, cfg.pivot_tol),
        (60, cfg.pivot_tol.max(1e-8)),
        (15, cfg.pivot_tol.max(1e-7)),
    ];
    let mut last = None;
    for (refactor_every, pivot_tol) in ladder {
        let attempt = SolverConfig { refactor_every, pivot_tol, ..cfg.clone() };
        let mut simplex = Simplex::new(problem, &attempt);
        match simplex.solve() {
            Err(Error::Solver(msg)) if msg == NUMERIC_BREAKDOWN => {
                last = Some(Error::Solver(msg));
            }
            other => return other,
        }
    }
    Err(last.unwrap())
}

/// Solve, consulting and refreshing a warm-start cache.
///
/// The caller must only share one cache across programs with identical
/// matrices, relations, bounds, and objectives (right-hand sides may vary);
/// this is not re-verified beyond shape checks.
pub fn solve_lp_warm(
    problem: &LpProblem,
    cfg: &SolverConfig,
    cache: &mut Option<WarmCache>,
) -> Result<LpSolution> {
    problem.validate()?;
    let mut simplex = Simplex::new(problem, cfg);
    let t_warm = std::time::Instant::now();
    if let Some(c) = cache.as_ref() {
        if c.m == simplex.m && c.ncols == simplex.ncols {
            if let Some(solution) = simplex.try_warm(c) {
                // Keep the (possibly repaired) basis: consecutive solves
                // tend to sit near each other, so the freshest basis is
                // the best start for the next right-hand side.
                *cache = Some(simplex.capture_cache());
                stats::WARM_MICROS.fetch_add(
                    t_warm.elapsed().as_micros() as usize,
                    std::sync::atomic::Ordering::Relaxed,
                );
                return Ok(solution);
            }
        }
    }
    stats::WARM_MICROS
        .fetch_add(t_warm.elapsed().as_micros() as usize, std::sync::atomic::Ordering::Relaxed);
    let t_cold = std::time::Instant::now();
    let _cold_timer = CountMicros(t_cold, &stats::COLD_MICROS);
    stats::COLD.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    drop(simplex);
    let ladder: [(usize, f64); 3] = [
        (cfg.refactor_every, cfg.pivot_tol),
        (60, cfg.pivot_tol.max(1e-8)),
        (15, cfg.pivot_tol.max(1e-7)),
    ];
    let mut last = None;
    for (refactor_every, pivot_tol) in ladder {
        let attempt = SolverConfig { refactor_every, pivot_tol, ..cfg.clone() };
        let mut simplex = Simplex::new(problem, &attempt);
        match simplex.solve() {
            Err(Error::Solver(msg)) if msg == NUMERIC_BREAKDOWN => {
                last = Some(Error::Solver(msg));
            }
            Ok(solution) => {
                if solution.status == LpStatus::Optimal {
                    *cache = Some(simplex.capture_cache());
                }
                return Ok(solution);
            }
            other => return other,
        }
    }
    Err(last.unwrap())
}

struct CountMicros<'a>(std::time::Instant, &'a std::sync::atomic::AtomicUsize);
impl Drop for CountMicros<'_> {
    fn drop(&mut self) {
        self.1.fetch_add(self.0.elapsed().as_micros() as usize, std::sync::atomic::Ordering::Relaxed);
    }
}

/// Render a problem in a plain-text LP-style format, one constraint per
/// line, suitable for cross-checking against external solvers.
pub fn dump_lp(problem: &LpProblem) -> String {
    let name = |j: usize| -> String {
        match &problem.names {
            Some(names) => names[j].clone(),
            None => format!("x{j}"),
        }
    };
    let term = |coef: f64, j: usize| -> String {
        format!("{:+} {}", coef, name(j))
    };
    let mut out = String::new();
    out.push_str(match problem.sense {
        Sense::Maximize => "maximize:",
        Sense::Minimize => "minimize:",
    });
    for (j, &c) in problem.objective.iter().enumerate() {
        if c != 0.0 {
            out.push(' ');
            out.push_str(&term(c, j));
        }
    }
    out.push('\n');
    out.push_str("subject to:\n");
    for (i, row) in problem.constraints.iter().enumerate() {
        let mut line = format!("r{i}:");
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a != 0.0 {
                line.push(' ');
                line.push_str(&term(a, j));
            }
        }
        line.push_str(&format!(" {} {}\n", row.relation.symbol(), row.rhs));
        out.push_str(&line);
    }
    out.push_str("bounds:\n");
    for (j, &(lo, up)) in problem.bounds.iter().enumerate() {
        if lo == f64::NEG_INFINITY && up == f64::INFINITY {
            out.push_str(&format!("{} free\n", name(j)));
        } else {
            out.push_str(&format!("{} <= {} <= {}\n", lo, name(j), up));
        }
    }
    out.push_str("end\n");
    out
}

// ---------------------------------------------------------------------------
// Internals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    FreeZero,
}

/// Constraint matrix in compressed column form over all internal columns
/// (structural, then one slack per row, then one artificial per row).
struct Columns {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Columns {
    fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let a = self.col_ptr[j];
        let b = self.col_ptr[j + 1];
        (&self.row_idx[a..b], &self.vals[a..b])
    }
}

struct Simplex<'a> {
    problem: &'a LpProblem,
    cfg: SolverConfig,
    m: usize,
    nstruct: usize,
    ncols: usize,
    cols: Columns,
    lo: Vec<f64>,
    up: Vec<f64>,
    /// Internal minimization costs for phase 2.
    cost: Vec<f64>,
    rhs: Vec<f64>,
    state: Vec<VarState>,
    /// Nonbasic resting value per variable (a bound, or 0 for free).
    val: Vec<f64>,
    basis: Vec<usize>,
    /// Basis inverse, column-major: `binv[i * m + p] == B^-1[p][i]`.
    binv: Vec<f64>,
    xb: Vec<f64>,
    max_iters: usize,
    binv_age: usize,
}

impl<'a> Simplex<'a> {
    fn new(problem: &'a LpProblem, cfg: &SolverConfig) -> Self {
        let m = problem.num_constraints();
        let nstruct = problem.num_vars();
        let ncols = nstruct + 2 * m;

        // Column storage: structural columns from the dense rows, then the
        // slack and artificial identity columns.
        let mut count = vec![0usize; ncols + 1];
        for row in &problem.constraints {
            for (j, &a) in row.coeffs.iter().enumerate() {
                if a != 0.0 {
                    count[j + 1] += 1;
                }
            }
        }
        for i in 0..m {
            count[nstruct + i + 1] += 1;
            count[nstruct + m + i + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let nnz = count[ncols];
        let mut row_idx = vec![0usize; nnz];
        let mut vals = vec![0.0f64; nnz];
        let mut cursor = count.clone();
        for (i, row) in problem.constraints.iter().enumerate() {
            for (j, &a) in row.coeffs.iter().enumerate() {
                if a != 0.0 {
                    let p = cursor[j];
                    row_idx[p] = i;
                    vals[p] = a;
                    cursor[j] += 1;
                }
            }
        }
        for i in 0..m {
            let p = cursor[nstruct + i];
            row_idx[p] = i;
            vals[p] = 1.0;
            cursor[nstruct + i] += 1;
            let p = cursor[nstruct + m + i];
            row_idx[p] = i;
            vals[p] = 1.0;
            cursor[nstruct + m + i] += 1;
        }
        let cols = Columns { col_ptr: count, row_idx, vals };

        let mut lo = vec![0.0f64; ncols];
        let mut up = vec![0.0f64; ncols];
        for j in 0..nstruct {
            lo[j] = problem.bounds[j].0;
            up[j] = problem.bounds[j].1;
        }
        let mut rhs = vec![0.0f64; m];
        for (i, row) in problem.constraints.iter().enumerate() {
            rhs[i] = row.rhs;
            let s = nstruct + i;
            match row.relation {
                Relation::Le => {
                    lo[s] = 0.0;
                    up[s] = f64::INFINITY;
                }
                Relation::Ge => {
                    lo[s] = f64::NEG_INFINITY;
                    up[s] = 0.0;
                }
                Relation::Eq => {
                    lo[s] = 0.0;
                    up[s] = 0.0;
                }
            }
        }
        // Artificial bounds are assigned at phase-1 setup.

        let flip = if problem.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0f64; ncols];
        for j in 0..nstruct {
            cost[j] = flip * problem.objective[j];
        }

        let max_iters = if cfg.max_iters > 0 {
            cfg.max_iters
        } else {
            2_000 + 40 * (m + ncols)
        };

        Simplex {
            problem,
            cfg: cfg.clone(),
            m,
            nstruct,
            ncols,
            cols,
            lo,
            up,
            cost,
            rhs,
            state: vec![VarState::AtLower; ncols],
            val: vec![0.0; ncols],
            basis: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            max_iters,
            binv_age: 0,
        }
    }

    fn capture_cache(&self) -> WarmCache {
        WarmCache {
            m: self.m,
            ncols: self.ncols,
            basis: self.basis.clone(),
            states: self.state.clone(),
            binv: self.binv.clone(),
            age: self.binv_age,
        }
    }

    fn artificial(&self, i: usize) -> usize {
        self.nstruct + self.m + i
    }

    /// Resting value for a nonbasic variable.
    fn resting(&self, j: usize) -> (VarState, f64) {
        if self.lo[j].is_finite() {
            (VarState::AtLower, self.lo[j])
        } else if self.up[j].is_finite() {
            (VarState::AtUpper, self.up[j])
        } else {
            (VarState::FreeZero, 0.0)
        }
    }

    fn solve(&mut self) -> Result<LpSolution> {
        if self.m == 0 {
            return Ok(self.solve_unconstrained());
        }

        // Nonbasic rest positions for structural and slack columns.
        for j in 0..self.nstruct + self.m {
            let (st, v) = self.resting(j);
            self.state[j] = st;
            self.val[j] = v;
        }

        // Residual the artificial basis must absorb.
        let mut resid = self.rhs.clone();
        for j in 0..self.nstruct + self.m {
            let v = self.val[j];
            if v != 0.0 {
                let (idx, vals) = self.cols.col(j);
                for (&i, &a) in idx.iter().zip(vals) {
                    resid[i] -= a * v;
                }
            }
        }

        // Crash basis: the identity columns are either the row's slack
        // (when its natural value respects the slack bounds) or an
        // artificial. Only artificial mass shows up in the phase-1
        // objective, so rows coverable by slacks cost nothing to start.
        let mut phase1_cost = vec![0.0f64; self.ncols];
        self.basis = Vec::with_capacity(self.m);
        self.binv = identity(self.m);
        self.xb = resid.clone();
        for i in 0..self.m {
            let s = self.nstruct + i;
            let a = self.artificial(i);
            // resid still contains the slack's resting value; basing the
            // slack re-absorbs it.
            let slack_value = resid[i] + self.val[s];
            if slack_value >= self.lo[s] && slack_value <= self.up[s] {
                self.basis.push(s);
                self.state[s] = VarState::Basic;
                self.xb[i] = slack_value;
                self.lo[a] = 0.0;
                self.up[a] = 0.0;
                self.state[a] = VarState::AtLower;
                self.val[a] = 0.0;
            } else {
                self.basis.push(a);
                self.state[a] = VarState::Basic;
                if resid[i] >= 0.0 {
                    self.lo[a] = 0.0;
                    self.up[a] = f64::INFINITY;
                    phase1_cost[a] = 1.0;
                } else {
                    self.lo[a] = f64::NEG_INFINITY;
                    self.up[a] = 0.0;
                    phase1_cost[a] = -1.0;
                }
            }
        }

        // Phase 1: drive the total artificial mass to zero.
        let p1 = self.run_phase(&phase1_cost)?;
        if p1 == PhaseOutcome::IterationLimit {
            return Err(Error::solver("iteration limit reached in phase 1"));
        }
        let infeas: f64 = (0..self.m)
            .map(|p| {
                let j = self.basis[p];
                if j >= self.nstruct + self.m {
                    self.xb[p].abs()
                } else {
                    0.0
                }
            })
            .sum();
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > self.cfg.feas_tol.max(1e-11) * scale * 10.0 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                point: Vec::new(),
                dual_point: Vec::new(),
            });
        }

        // Phase 2: original costs, artificials pinned at zero.
        for i in 0..self.m {
            let a = self.artificial(i);
            self.lo[a] = 0.0;
            self.up[a] = 0.0;
            if self.state[a] != VarState::Basic {
                self.state[a] = VarState::AtLower;
                self.val[a] = 0.0;
            }
        }
        let cost = self.cost.clone();
        match self.run_phase(&cost)? {
            PhaseOutcome::Optimal => Ok(self.extract()),
            PhaseOutcome::Unbounded => Ok(LpSolution {
                status: LpStatus::Unbounded,
                value: f64::NAN,
                point: Vec::new(),
                dual_point: Vec::new(),
            }),
            PhaseOutcome::IterationLimit => {
                Err(Error::solver("iteration limit reached in phase 2"))
            }
        }
    }

    fn solve_unconstrained(&mut self) -> LpSolution {
        // No constraints: each variable independently runs to its best bound.
        let mut point = vec![0.0; self.nstruct];
        for j in 0..self.nstruct {
            let c = self.cost[j];
            let target = if c > 0.0 {
                self.lo[j]
            } else if c < 0.0 {
                self.up[j]
            } else if self.lo[j].is_finite() {
                self.lo[j]
            } else if self.up[j].is_finite() {
                self.up[j]
            } else {
                0.0
            };
            if !target.is_finite() {
                return LpSolution {
                    status: LpStatus::Unbounded,
                    value: f64::NAN,
                    point: Vec::new(),
                    dual_point: Vec::new(),
                };
            }
            point[j] = target;
        }
        let value = dot(&self.problem.objective, &point);
        LpSolution { status: LpStatus::Optimal, value, point, dual_point: Vec::new() }
    }

    /// Run simplex iterations with the given internal costs until optimal,
    /// unbounded, or out of budget.
    fn run_phase(&mut self, cost: &[f64]) -> Result<PhaseOutcome> {
        let tol = self.cfg.feas_tol.max(1e-12);
        let mut iters_since_refactor = 0usize;
        let mut stalled = 0usize;
        let mut bland = false;
        let mut y = vec![0.0f64; self.m];
        let mut w = vec![0.0f64; self.m];

        for _ in 0..self.max_iters {
            if iters_since_refactor >= self.cfg.refactor_every {
                self.refactorize()?;
                iters_since_refactor = 0;
            }

            // y = c_B B^-1 (column-major pass).
            for i in 0..self.m {
                let col = &self.binv[i * self.m..(i + 1) * self.m];
                let mut acc = 0.0;
                for p in 0..self.m {
                    acc += cost[self.basis[p]] * col[p];
                }
                y[i] = acc;
            }

            // Price nonbasic columns.
            let mut entering: Option<(usize, f64, f64)> = None; // (var, score, direction)
            for j in 0..self.ncols {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let (idx, avals) = self.cols.col(j);
                let mut d = cost[j];
                for (&i, &a) in idx.iter().zip(avals) {
                    d -= y[i] * a;
                }
                let (score, dir) = match st {
                    VarState::AtLower => (-d, 1.0),
                    VarState::AtUpper => (d, -1.0),
                    VarState::FreeZero => (d.abs(), if d < 0.0 { 1.0 } else { -1.0 }),
                    VarState::Basic => unreachable!(),
                };
                if score > tol {
                    if bland {
                        entering = Some((j, score, dir));
                        break;
                    }
                    match entering {
                        Some((_, best, _)) if best >= score => {}
                        _ => entering = Some((j, score, dir)),
                    }
                }
            }

            let (jin, score, dir) = match entering {
                Some(e) => e,
                None => {
                    if iters_since_refactor == 0 {
                        return Ok(PhaseOutcome::Optimal);
                    }
                    // Confirm optimality against a fresh factorization.
                    self.refactorize()?;
                    iters_since_refactor = 0;
                    continue;
                }
            };

            // w = B^-1 A_j.
            w.iter_mut().for_each(|x| *x = 0.0);
            let (idx, avals) = self.cols.col(jin);
            for (&i, &a) in idx.iter().zip(avals) {
                let col = &self.binv[i * self.m..(i + 1) * self.m];
                for p in 0..self.m {
                    w[p] += a * col[p];
                }
            }

            // Two-pass (Harris) ratio test. Moving x_jin by dir*t changes
            // the basics by -dir*t*w; pass 1 finds the tightest limit with
            // bounds relaxed by the feasibility tolerance, pass 2 picks the
            // largest pivot among candidates inside that limit.
            let span = self.up[jin] - self.lo[jin];
            let relax = self.cfg.feas_tol.max(1e-11);
            let mut t_relaxed = if span.is_finite() { span } else { f64::INFINITY };
            for p in 0..self.m {
                let g = dir * w[p];
                let b = self.basis[p];
                let limit = if g > self.cfg.pivot_tol {
                    if self.lo[b].is_finite() {
                        ((self.xb[p] - self.lo[b]).max(0.0) + relax) / g
                    } else {
                        f64::INFINITY
                    }
                } else if g < -self.cfg.pivot_tol {
                    if self.up[b].is_finite() {
                        ((self.up[b] - self.xb[p]).max(0.0) + relax) / (-g)
                    } else {
                        f64::INFINITY
                    }
                } else {
                    f64::INFINITY
                };
                t_relaxed = t_relaxed.min(limit);
            }

            if t_relaxed.is_infinite() {
                return Ok(PhaseOutcome::Unbounded);
            }

            let mut leave: Option<(usize, f64)> = None; // (basis position, exact limit)
            for p in 0..self.m {
                let g = dir * w[p];
                let b = self.basis[p];
                let limit = if g > self.cfg.pivot_tol {
                    if self.lo[b].is_finite() {
                        (self.xb[p] - self.lo[b]).max(0.0) / g
                    } else {
                        continue;
                    }
                } else if g < -self.cfg.pivot_tol {
                    if self.up[b].is_finite() {
                        (self.up[b] - self.xb[p]).max(0.0) / (-g)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                };
                if limit <= t_relaxed {
                    let better = match leave {
                        None => true,
                        Some((q, _)) => {
                            if bland {
                                self.basis[p] < self.basis[q]
                            } else {
                                let gp = w[p].abs();
                                let gq = w[q].abs();
                                gp > gq * (1.0 + 1e-9)
                                    || ((gp - gq).abs() <= gq * 1e-9
                                        && self.basis[p] < self.basis[q])
                            }
                        }
                    };
                    if better {
                        leave = Some((p, limit));
                    }
                }
            }

            let flip_t = if span.is_finite() { span } else { f64::INFINITY };
            let blocking = match leave {
                Some((r, t_exact)) if t_exact <= flip_t => Some((r, t_exact)),
                _ => None,
            };
            // A pivot that is tiny relative to its column is likely noise
            // from a stale factorization; rebuild and redo the iteration.
            if let Some((r, _)) = blocking {
                let wmax = w.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if w[r].abs() < 1e-7 * wmax.max(1.0) && iters_since_refactor > 0 {
                    self.refactorize()?;
                    iters_since_refactor = 0;
                    continue;
                }
            }
            let step = blocking.map(|(_, t)| t).unwrap_or(flip_t);
            let improved = score * step > tol;
            match blocking {
                // Bound flip: the entering variable crosses its own span
                // before any basic variable blocks.
                None => {
                    for p in 0..self.m {
                        self.xb[p] -= dir * span * w[p];
                    }
                    self.state[jin] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
                    self.val[jin] = if dir > 0.0 { self.up[jin] } else { self.lo[jin] };
                }
                Some((r, t_exact)) => {
                    let t = t_exact;
                    for p in 0..self.m {
                        self.xb[p] -= dir * t * w[p];
                    }
                    let out = self.basis[r];
                    let enter_value = self.val[jin] + dir * t;
                    // The leaving variable lands on the bound that blocked.
                    let g = dir * w[r];
                    if g > 0.0 {
                        self.state[out] = VarState::AtLower;
                        self.val[out] = self.lo[out];
                    } else {
                        self.state[out] = VarState::AtUpper;
                        self.val[out] = self.up[out];
                    }
                    self.state[jin] = VarState::Basic;
                    self.basis[r] = jin;
                    self.xb[r] = enter_value;
                    self.update_binv(&w, r);
                    iters_since_refactor += 1;
                    self.binv_age += 1;
                    stats::COLD_PIVOTS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
            }

            if improved {
                stalled = 0;
                bland = false;
            } else {
                stalled += 1;
                if stalled >= 200 {
                    bland = true;
                }
            }
        }
        Ok(PhaseOutcome::IterationLimit)
    }

    /// Rank-one update of the column-major basis inverse after `basis[r]`
    /// was replaced; `w` is the pivot column in the current basis frame.
    fn update_binv(&mut self, w: &[f64], r: usize) {
        let m = self.m;
        let wr = w[r];
        for i in 0..m {
            let col = &mut self.binv[i * m..(i + 1) * m];
            let cr = col[r];
            if cr != 0.0 {
                let f = cr / wr;
                for p in 0..m {
                    col[p] -= f * w[p];
                }
                col[r] = f;
            }
        }
    }

    /// Rebuild the basis inverse from scratch and recompute basic values.
    fn refactorize(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = vec![0.0f64; m * m]; // column-major basis matrix
        for (p, &j) in self.basis.iter().enumerate() {
            let (idx, vals) = self.cols.col(j);
            for (&i, &a) in idx.iter().zip(vals) {
                b[p * m + i] = a;
            }
        }
        let binv = invert(&b, m)
            .ok_or_else(|| Error::solver(NUMERIC_BREAKDOWN))?;
        self.binv = binv;
        self.binv_age = 0;

        // xb = B^-1 (rhs - A_N v_N)
        let mut r = self.rhs.clone();
        for j in 0..self.ncols {
            if self.state[j] != VarState::Basic && self.val[j] != 0.0 {
                let (idx, vals) = self.cols.col(j);
                for (&i, &a) in idx.iter().zip(vals) {
                    r[i] -= a * self.val[j];
                }
            }
        }
        for p in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += self.binv[i * m + p] * r[i];
            }
            self.xb[p] = acc;
        }
        Ok(())
    }

    /// Warm path: adopt a cached basis and test whether it is already
    /// optimal for this right-hand side.
    fn try_warm(&mut self, cache: &WarmCache) -> Option<LpSolution> {
        self.basis = cache.basis.clone();
        self.state = cache.states.clone();
        self.binv = cache.binv.clone();
        self.binv_age = cache.age;
        // Artificials are pinned at zero outside phase 1.
        for i in 0..self.m {
            let a = self.artificial(i);
            self.lo[a] = 0.0;
            self.up[a] = 0.0;
        }
        for j in 0..self.ncols {
            self.val[j] = match self.state[j] {
                VarState::Basic => 0.0,
                VarState::AtLower => self.lo[j],
                VarState::AtUpper => self.up[j],
                VarState::FreeZero => 0.0,
            };
            if !self.val[j].is_finite() {
                return None;
            }
        }
        let m = self.m;
        let mut r = self.rhs.clone();
        for j in 0..self.ncols {
            if self.state[j] != VarState::Basic && self.val[j] != 0.0 {
                let (idx, vals) = self.cols.col(j);
                for (&i, &a) in idx.iter().zip(vals) {
                    r[i] -= a * self.val[j];
                }
            }
        }
        self.xb = vec![0.0; m];
        for p in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += self.binv[i * m + p] * r[i];
            }
            self.xb[p] = acc;
        }
        let tol = self.cfg.feas_tol.max(1e-11);
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let feasible = (0..m).all(|p| {
            let j = self.basis[p];
            self.xb[p] >= self.lo[j] - tol * scale && self.xb[p] <= self.up[j] + tol * scale
        });
        if !feasible {
            // The basis is still dual-feasible (same matrix and costs, new
            // rhs), so a few dual-simplex pivots usually restore primal
            // feasibility far cheaper than a cold solve.
            match self.dual_simplex_repair(tol * scale) {
                Some(true) => {
                    stats::WARM_REPAIRED.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
                _ => {
                    stats::REPAIR_FAILED.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    return None;
                }
            }
        } else {
            stats::WARM_DIRECT.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        // The cached factorization was refreshed when stored, so the point
        // is already exact; skip the O(m^3) refactorization.
        Some(self.extract_with(false))
    }

    /// Dual simplex iterations from a dual-feasible basis until the basic
    /// values respect their bounds. Returns `Some(true)` on success,
    /// `Some(false)` if the program is infeasible for this rhs, and `None`
    /// to signal the caller to fall back to a cold solve.
    fn dual_simplex_repair(&mut self, feas: f64) -> Option<bool> {
        let m = self.m;
        let tol = self.cfg.feas_tol.max(1e-12);
        let cost = self.cost.clone();
        let mut y = vec![0.0f64; m];
        let mut rho = vec![0.0f64; m];
        let mut w = vec![0.0f64; m];
        // Repairs are only worthwhile when the optimal basis moved a
        // little; anything needing a long dual path is better solved cold.
        for _round in 0..150 {
            if self.binv_age >= self.cfg.refactor_every {
                if self.refactorize().is_err() {
                    return None;
                }
            }
            // Most-violated basic variable leaves.
            let mut leave: Option<(usize, f64, f64)> = None; // (pos, violation, target)
            for p in 0..m {
                let j = self.basis[p];
                let viol_lo = self.lo[j] - self.xb[p];
                let viol_up = self.xb[p] - self.up[j];
                let (viol, target) = if viol_lo > viol_up {
                    (viol_lo, self.lo[j])
                } else {
                    (viol_up, self.up[j])
                };
                if viol > feas {
                    match leave {
                        Some((_, best, _)) if best >= viol => {}
                        _ => leave = Some((p, viol, target)),
                    }
                }
            }
            let (r, _, target) = match leave {
                Some(l) => l,
                None => return Some(true),
            };
            let below = self.xb[r] < target;

            // rho = r-th row of B^-1; y = c_B B^-1 for reduced costs.
            for i in 0..m {
                rho[i] = self.binv[i * m + r];
            }
            for i in 0..m {
                let col = &self.binv[i * m..(i + 1) * m];
                let mut acc = 0.0;
                for p in 0..m {
                    acc += cost[self.basis[p]] * col[p];
                }
                y[i] = acc;
            }

            // Entering variable: smallest dual ratio |d_j / alpha_j| among
            // sign-compatible nonbasic columns.
            let mut entering: Option<(usize, f64, f64)> = None; // (var, ratio, alpha)
            for j in 0..self.ncols {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let (idx, avals) = self.cols.col(j);
                let mut alpha = 0.0;
                let mut d = cost[j];
                for (&i, &a) in idx.iter().zip(avals) {
                    alpha += rho[i] * a;
                    d -= y[i] * a;
                }
                if alpha.abs() <= self.cfg.pivot_tol {
                    continue;
                }
                // Raising xb[r] toward a violated lower bound needs the
                // entering variable to push it up, and vice versa; the sign
                // depends on which bound the nonbasic sits at.
                let ok = if below {
                    match st {
                        VarState::AtLower => alpha < 0.0,
                        VarState::AtUpper => alpha > 0.0,
                        VarState::FreeZero => true,
                        VarState::Basic => false,
                    }
                } else {
                    match st {
                        VarState::AtLower => alpha > 0.0,
                        VarState::AtUpper => alpha < 0.0,
                        VarState::FreeZero => true,
                        VarState::Basic => false,
                    }
                };
                if !ok {
                    continue;
                }
                let ratio = (d / alpha).abs();
                let better = match entering {
                    None => true,
                    Some((q, best, _)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && j < q)
                    }
                };
                if better {
                    entering = Some((j, ratio, alpha));
                }
            }
            let (jin, _, alpha_r) = match entering {
                Some(e) => e,
                // No direction can fix the violation: infeasible rhs.
                None => return Some(false),
            };

            // Pivot: the leaving variable lands exactly on its violated
            // bound; recompute the entering column and update the basis.
            w.iter_mut().for_each(|x| *x = 0.0);
            let (idx, avals) = self.cols.col(jin);
            for (&i, &a) in idx.iter().zip(avals) {
                let col = &self.binv[i * m..(i + 1) * m];
                for p in 0..m {
                    w[p] += a * col[p];
                }
            }
            if w[r].abs() <= self.cfg.pivot_tol || (w[r] - alpha_r).abs() > 1e-6 * alpha_r.abs().max(1.0)
            {
                return None; // numerically unreliable; cold solve instead
            }
            let t = (self.xb[r] - target) / w[r];
            let enter_value = self.val[jin] + t;
            let out = self.basis[r];
            self.state[out] =
                if target == self.lo[out] { VarState::AtLower } else { VarState::AtUpper };
            self.val[out] = target;
            for p in 0..m {
                self.xb[p] -= t * w[p];
            }
            self.state[jin] = VarState::Basic;
            self.basis[r] = jin;
            self.xb[r] = enter_value;
            self.update_binv(&w, r);
            self.binv_age += 1;
            stats::REPAIR_PIVOTS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        None
    }

    /// Produce the user-facing solution from the current optimal basis.
    fn extract(&mut self) -> LpSolution {
        self.extract_with(true)
    }

    fn extract_with(&mut self, refresh: bool) -> LpSolution {
        // A final refactorization keeps the reported point exact.
        if refresh && self.refactorize().is_err() {
            // Keep the current (still consistent) factorization.
        }
        let mut point = vec![0.0f64; self.nstruct];
        for j in 0..self.nstruct {
            if self.state[j] != VarState::Basic {
                point[j] = self.val[j];
            }
        }
        for (p, &j) in self.basis.iter().enumerate() {
            if j < self.nstruct {
                let mut v = self.xb[p];
                // Clean up roundoff against the variable's own bounds.
                if v < self.lo[j] {
                    v = self.lo[j];
                }
                if v > self.up[j] {
                    v = self.up[j];
                }
                point[j] = v;
            }
        }
        let value = dot(&self.problem.objective, &point);

        // Duals: y = c_B B^-1 in internal (min) costs, flipped back to the
        // user's sense.
        let m = self.m;
        let flip = if self.problem.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut dual = vec![0.0f64; m];
        for i in 0..m {
            let col = &self.binv[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for p in 0..m {
                acc += self.cost[self.basis[p]] * col[p];
            }
            dual[i] = flip * acc;
        }

        LpSolution { status: LpStatus::Optimal, value, point, dual_point: dual }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

fn identity(m: usize) -> Vec<f64> {
    let mut v = vec![0.0f64; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense column-major inversion by Gauss-Jordan with partial pivoting.
fn invert(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut work = a.to_vec();
    let mut inv = identity(m);
    let at = |buf: &Vec<f64>, row: usize, col: usize| buf[col * m + row];
    for k in 0..m {
        // Partial pivot on column k.
        let mut piv = k;
        let mut best = at(&work, k, k).abs();
        for r in k + 1..m {
            let v = at(&work, r, k).abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-13 {
            return None;
        }
        if piv != k {
            for c in 0..m {
                work.swap(c * m + piv, c * m + k);
                inv.swap(c * m + piv, c * m + k);
            }
        }
        let d = work[k * m + k];
        for c in 0..m {
            work[c * m + k] /= d;
            inv[c * m + k] /= d;
        }
        for r in 0..m {
            if r != k {
                let f = work[k * m + r];
                if f != 0.0 {
                    for c in 0..m {
                        work[c * m + r] -= f * work[c * m + k];
                        inv[c * m + r] -= f * inv[c * m + k];
                    }
                }
            }
        }
    }
    Some(inv)
}
