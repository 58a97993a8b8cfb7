//! Sequence-form machinery: realization plans, the finite-horizon security
//! LPs, and the backward best-response recursion used to certify strategies
//! independently of any LP optimum.
//!
//! One generic builder covers all four LP families in the crate (either
//! player, finite or discounted, primal or dual): the programs differ only
//! in which player's realization weights are the variables, the relation
//! direction, the stage weighting, and an optional regret epigraph on top.

use crate::error::{Error, Result};
use crate::game::{enumerate_histories, GameSpec, HistoryIndex, HorizonCap, Player};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};

/// Threshold below which a parent realization weight is treated as
/// unreachable and the quotient rule is replaced by a uniform row.
pub const UNREACHABLE_WEIGHT: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Role view: one code path for both players
// ---------------------------------------------------------------------------

/// Access to the game from the acting player's point of view. "Own" axes
/// are the acting player's types/actions; "opp" axes the other player's.
#[derive(Clone, Copy)]
pub(crate) struct RoleView<'a> {
    pub game: &'a GameSpec,
    pub role: Player,
}

impl<'a> RoleView<'a> {
    pub fn new(game: &'a GameSpec, role: Player) -> Self {
        RoleView { game, role }
    }

    pub fn n_own_types(&self) -> usize {
        match self.role {
            Player::P1 => self.game.num_k(),
            Player::P2 => self.game.num_l(),
        }
    }

    pub fn n_opp_types(&self) -> usize {
        match self.role {
            Player::P1 => self.game.num_l(),
            Player::P2 => self.game.num_k(),
        }
    }

    pub fn n_own_actions(&self) -> usize {
        match self.role {
            Player::P1 => self.game.num_a(),
            Player::P2 => self.game.num_b(),
        }
    }

    pub fn n_opp_actions(&self) -> usize {
        match self.role {
            Player::P1 => self.game.num_b(),
            Player::P2 => self.game.num_a(),
        }
    }

    pub fn own_prior(&self) -> &'a [f64] {
        match self.role {
            Player::P1 => &self.game.p0,
            Player::P2 => &self.game.q0,
        }
    }

    pub fn opp_prior(&self) -> &'a [f64] {
        match self.role {
            Player::P1 => &self.game.q0,
            Player::P2 => &self.game.p0,
        }
    }

    /// Stage payoff with own/opp axes; always player 1's payoff.
    #[inline]
    pub fn payoff(&self, own_type: usize, opp_type: usize, own_act: usize, opp_act: usize) -> f64 {
        match self.role {
            Player::P1 => self.game.payoff(own_type, opp_type, own_act, opp_act),
            Player::P2 => self.game.payoff(opp_type, own_type, opp_act, own_act),
        }
    }

    /// Global history cell for (own action, opp action); cells are always
    /// ordered with player 1's action major.
    #[inline]
    pub fn cell(&self, nb: usize, own_act: usize, opp_act: usize) -> usize {
        match self.role {
            Player::P1 => own_act * nb + opp_act,
            Player::P2 => opp_act * nb + own_act,
        }
    }

    /// The acting player's own action recorded in a parent decomposition.
    #[inline]
    pub fn own_of(&self, a: usize, b: usize) -> usize {
        match self.role {
            Player::P1 => a,
            Player::P2 => b,
        }
    }
}

// ---------------------------------------------------------------------------
// Plans and behavior strategies
// ---------------------------------------------------------------------------

/// A sequence-form realization plan: per stage, the product of the root
/// weight and the acting player's stage action probabilities along each
/// history. Flow-conserving and nonnegative by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationPlan {
    pub owner: Player,
    pub horizon: usize,
    /// Stage-0 weight per own type (the type prior, or a dual-game root).
    pub root: Vec<f64>,
    /// Stage `t` weights, indexed `(type * count_t + h) * n_own_act + act`.
    pub stages: Vec<Vec<f64>>,
}

impl RealizationPlan {
    #[inline]
    pub fn weight(&self, hist: &HistoryIndex, t: usize, ty: usize, h: usize, act: usize, n_act: usize) -> f64 {
        self.stages[t - 1][(ty * hist.count(t) + h) * n_act + act]
    }

    /// Flow-conservation and nonnegativity check, against the plan's own
    /// root weights.
    pub fn validate(&self, game: &GameSpec, tol: f64) -> Result<()> {
        let view = RoleView::new(game, self.owner);
        let n_act = view.n_own_actions();
        let hist = enumerate_histories(game, self.horizon, HorizonCap::new(self.horizon))?;
        if self.root.len() != view.n_own_types() {
            return Err(Error::input("realization plan: root size mismatch"));
        }
        for t in 1..=self.horizon {
            let stage = &self.stages[t - 1];
            if stage.len() != view.n_own_types() * hist.count(t) * n_act {
                return Err(Error::input(format!("realization plan: stage {t} size mismatch")));
            }
            if stage.iter().any(|&w| w < -tol) {
                return Err(Error::input(format!("realization plan: negative weight at stage {t}")));
            }
            for ty in 0..view.n_own_types() {
                for h in 0..hist.count(t) {
                    let sum: f64 = (0..n_act).map(|a| self.weight(&hist, t, ty, h, a, n_act)).sum();
                    let parent = if t == 1 {
                        self.root[ty]
                    } else {
                        let (ph, pa, pb) = hist.parent(h);
                        self.weight(&hist, t - 1, ty, ph, view.own_of(pa, pb), n_act)
                    };
                    if (sum - parent).abs() > tol {
                        return Err(Error::input(format!(
                            "realization plan: flow violated at stage {t} (type {ty}, history {h}): \
                             children sum {sum} vs parent {parent}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-stage conditional action distributions over the full history tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorStrategy {
    pub owner: Player,
    pub horizon: usize,
    /// Stage `t` rows, indexed `(type * count_t + h) * n_own_act + act`;
    /// each `(type, h)` row is a probability distribution.
    pub stages: Vec<Vec<f64>>,
}

impl BehaviorStrategy {
    #[inline]
    pub fn prob(&self, hist: &HistoryIndex, t: usize, ty: usize, h: usize, act: usize, n_act: usize) -> f64 {
        self.stages[t - 1][(ty * hist.count(t) + h) * n_act + act]
    }

    /// Multiply stage probabilities down the tree into a realization plan
    /// with the given root weights.
    pub fn to_plan(&self, game: &GameSpec, root: &[f64]) -> Result<RealizationPlan> {
        let view = RoleView::new(game, self.owner);
        let n_act = view.n_own_actions();
        let hist = enumerate_histories(game, self.horizon, HorizonCap::new(self.horizon))?;
        let mut stages: Vec<Vec<f64>> = Vec::with_capacity(self.horizon);
        for t in 1..=self.horizon {
            let mut stage = vec![0.0; view.n_own_types() * hist.count(t) * n_act];
            for ty in 0..view.n_own_types() {
                for h in 0..hist.count(t) {
                    let parent = if t == 1 {
                        root[ty]
                    } else {
                        let (ph, pa, pb) = hist.parent(h);
                        stages[t - 2][(ty * hist.count(t - 1) + ph) * n_act + view.own_of(pa, pb)]
                    };
                    for act in 0..n_act {
                        stage[(ty * hist.count(t) + h) * n_act + act] =
                            parent * self.prob(&hist, t, ty, h, act, n_act);
                    }
                }
            }
            stages.push(stage);
        }
        Ok(RealizationPlan {
            owner: self.owner,
            horizon: self.horizon,
            root: root.to_vec(),
            stages,
        })
    }

    /// Recover the behavior strategy from a plan by the quotient rule;
    /// unreachable histories (parent weight below [`UNREACHABLE_WEIGHT`])
    /// get the uniform distribution.
    pub fn from_plan(game: &GameSpec, plan: &RealizationPlan) -> Result<BehaviorStrategy> {
        let view = RoleView::new(game, plan.owner);
        let n_act = view.n_own_actions();
        let hist = enumerate_histories(game, plan.horizon, HorizonCap::new(plan.horizon))?;
        let mut stages: Vec<Vec<f64>> = Vec::with_capacity(plan.horizon);
        for t in 1..=plan.horizon {
            let mut stage = vec![0.0; view.n_own_types() * hist.count(t) * n_act];
            for ty in 0..view.n_own_types() {
                for h in 0..hist.count(t) {
                    let parent = if t == 1 {
                        plan.root[ty]
                    } else {
                        let (ph, pa, pb) = hist.parent(h);
                        plan.weight(&hist, t - 1, ty, ph, view.own_of(pa, pb), n_act)
                    };
                    let row = &mut stage[(ty * hist.count(t) + h) * n_act..][..n_act];
                    if parent <= UNREACHABLE_WEIGHT {
                        row.fill(1.0 / n_act as f64);
                    } else {
                        let mut sum = 0.0;
                        for act in 0..n_act {
                            let w = (plan.weight(&hist, t, ty, h, act, n_act) / parent).max(0.0);
                            row[act] = w;
                            sum += w;
                        }
                        // Clean roundoff so every row is an exact distribution.
                        for v in row.iter_mut() {
                            *v /= sum;
                        }
                    }
                }
            }
            stages.push(stage);
        }
        Ok(BehaviorStrategy { owner: plan.owner, horizon: plan.horizon, stages })
    }
}

// ---------------------------------------------------------------------------
// Generic sequence-form LP builder
// ---------------------------------------------------------------------------

/// Variable layout of a sequence-form LP (shared by the primal, dual, and
/// discounted builders). Variable order is fixed for reproducibility:
/// all realization weights by stage/type/history/action, then all future
/// payoff variables by stage/type/history/cell, then the stage-0 payoffs,
/// then (dual programs only) the scalar epigraph variable.
#[derive(Debug, Clone)]
pub struct SeqLayout {
    pub role: Player,
    pub horizon: usize,
    pub num_vars: usize,
    pub u0_start: usize,
    pub epigraph: Option<usize>,
    x_start: Vec<usize>,
    u_start: Vec<usize>,
    n_own_types: usize,
    n_opp_types: usize,
    n_own_act: usize,
    counts: Vec<usize>,
    cells: usize,
}

impl SeqLayout {
    #[inline]
    pub fn x_index(&self, t: usize, ty: usize, h: usize, act: usize) -> usize {
        self.x_start[t - 1] + (ty * self.counts[t - 1] + h) * self.n_own_act + act
    }

    /// Future-payoff variable at stage `t` (1..=horizon-1) for an opponent
    /// type, a history, and a global `(a, b)` cell.
    #[inline]
    pub fn u_index(&self, t: usize, opp_ty: usize, h: usize, cell: usize) -> usize {
        self.u_start[t - 1] + (opp_ty * self.counts[t - 1] + h) * self.cells + cell
    }

    #[inline]
    pub fn u0_index(&self, opp_ty: usize) -> usize {
        self.u0_start + opp_ty
    }

    /// Extract the realization plan from an LP point.
    pub fn plan_from_point(&self, game: &GameSpec, root: &[f64], point: &[f64]) -> RealizationPlan {
        let hist_counts = &self.counts;
        let mut stages = Vec::with_capacity(self.horizon);
        for t in 1..=self.horizon {
            let len = self.n_own_types * hist_counts[t - 1] * self.n_own_act;
            let start = self.x_start[t - 1];
            let mut stage = Vec::with_capacity(len);
            stage.extend(point[start..start + len].iter().map(|&w| w.max(0.0)));
            stages.push(stage);
        }
        let _ = game;
        RealizationPlan { owner: self.role, horizon: self.horizon, root: root.to_vec(), stages }
    }

    /// Stage-0 payoff vector (one entry per opponent type) from an LP point.
    pub fn u0_from_point(&self, point: &[f64]) -> Vec<f64> {
        point[self.u0_start..self.u0_start + self.n_opp_types].to_vec()
    }

    /// Stage-1 per-type action rows `x[1, ty, root, act] / root[ty]`;
    /// types with vanishing root weight get the uniform row.
    pub fn stage1_rows(&self, root: &[f64], point: &[f64]) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.n_own_types);
        for ty in 0..self.n_own_types {
            let mut row = vec![0.0; self.n_own_act];
            if root[ty] <= UNREACHABLE_WEIGHT {
                row.fill(1.0 / self.n_own_act as f64);
            } else {
                let mut sum = 0.0;
                for act in 0..self.n_own_act {
                    let w = (point[self.x_index(1, ty, 0, act)] / root[ty]).max(0.0);
                    row[act] = w;
                    sum += w;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            rows.push(row);
        }
        rows
    }
}

/// Full specification of one sequence-form LP.
pub(crate) struct SeqLpSpec<'a> {
    pub role: Player,
    pub horizon: usize,
    /// Root realization weights per own type (prior or dual-game belief).
    pub root: &'a [f64],
    /// Stage weighting: `None` for unit weights, `Some(lambda)` for the
    /// anti-discounted weighting (`lambda` on payoffs, `1 - lambda` on
    /// continuation values).
    pub discount: Option<f64>,
    /// `None` builds the primal objective (opponent weights against the
    /// stage-0 payoffs); `Some(regret)` builds the dual epigraph objective.
    pub dual_regret: Option<&'a [f64]>,
    /// Opponent-type weights for the primal objective; defaults to the
    /// opponent's prior. Ignored by dual programs.
    pub opp_weights: Option<&'a [f64]>,
}

/// Build a sequence-form LP over `spec.horizon` stages.
pub(crate) fn build_seq_lp(
    game: &GameSpec,
    spec: &SeqLpSpec<'_>,
    cap: HorizonCap,
) -> Result<(LpProblem, SeqLayout)> {
    let view = RoleView::new(game, spec.role);
    let n = spec.horizon;
    let hist = enumerate_histories(game, n, cap)?;
    let n_own = view.n_own_types();
    let n_opp = view.n_opp_types();
    let n_own_act = view.n_own_actions();
    let n_opp_act = view.n_opp_actions();
    let nb = game.num_b();
    let cells = game.num_a() * game.num_b();
    if spec.root.len() != n_own {
        return Err(Error::input("root weights: size must match own type count"));
    }
    let (alpha_m, alpha_u) = match spec.discount {
        Some(lambda) => {
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(Error::input(format!("discount: {lambda} must lie strictly in (0, 1)")));
            }
            (lambda, 1.0 - lambda)
        }
        None => (1.0, 1.0),
    };

    // Variable layout.
    let mut x_start = Vec::with_capacity(n);
    let mut offset = 0usize;
    for t in 1..=n {
        x_start.push(offset);
        offset += n_own * hist.count(t) * n_own_act;
    }
    let mut u_start = Vec::with_capacity(n.saturating_sub(1));
    for t in 1..n {
        u_start.push(offset);
        offset += n_opp * hist.count(t) * cells;
    }
    let u0_start = offset;
    offset += n_opp;
    let epigraph = if spec.dual_regret.is_some() {
        let idx = offset;
        offset += 1;
        Some(idx)
    } else {
        None
    };
    let layout = SeqLayout {
        role: spec.role,
        horizon: n,
        num_vars: offset,
        u0_start,
        epigraph,
        x_start,
        u_start,
        n_own_types: n_own,
        n_opp_types: n_opp,
        n_own_act,
        counts: (1..=n).map(|t| hist.count(t)).collect(),
        cells,
    };

    let sense = match spec.role {
        Player::P1 => Sense::Maximize,
        Player::P2 => Sense::Minimize,
    };
    let relation = match spec.role {
        Player::P1 => Relation::Ge,
        Player::P2 => Relation::Le,
    };
    let mut lp = LpProblem::new(sense, layout.num_vars);
    for v in layout.u_start.first().copied().unwrap_or(u0_start)..layout.num_vars {
        lp.set_free(v);
    }

    // Objective.
    match spec.dual_regret {
        None => {
            let weights = spec.opp_weights.unwrap_or_else(|| view.opp_prior());
            if weights.len() != n_opp {
                return Err(Error::input("objective weights: size must match opponent type count"));
            }
            for opp in 0..n_opp {
                lp.objective[layout.u0_index(opp)] = weights[opp];
            }
        }
        Some(_) => {
            lp.objective[epigraph.unwrap()] = 1.0;
        }
    }

    // Flow conservation: stage-1 weights sum to the root, later stages to
    // their parent weight.
    for t in 1..=n {
        for ty in 0..n_own {
            for h in 0..hist.count(t) {
                let mut row = vec![0.0; layout.num_vars];
                for act in 0..n_own_act {
                    row[layout.x_index(t, ty, h, act)] = 1.0;
                }
                let rhs = if t == 1 {
                    spec.root[ty]
                } else {
                    let (ph, pa, pb) = hist.parent(h);
                    row[layout.x_index(t - 1, ty, ph, view.own_of(pa, pb))] = -1.0;
                    0.0
                };
                lp.push_row(row, Relation::Eq, rhs);
            }
        }
    }

    // Stage payoff rows: at every boundary t = 0..horizon-1, the value
    // carried by a cell is dominated (>= for player 1, <= for player 2) by
    // the stage payoff plus continuation at every opponent action.
    for t in 0..n {
        for opp in 0..n_opp {
            for h_next in 0..hist.count(t + 1) {
                for opp_act in 0..n_opp_act {
                    let mut row = vec![0.0; layout.num_vars];
                    for ty in 0..n_own {
                        for act in 0..n_own_act {
                            row[layout.x_index(t + 1, ty, h_next, act)] +=
                                alpha_m * view.payoff(ty, opp, act, opp_act);
                        }
                    }
                    if t + 1 < n {
                        for act in 0..n_own_act {
                            row[layout.u_index(t + 1, opp, h_next, view.cell(nb, act, opp_act))] +=
                                alpha_u;
                        }
                    }
                    if t == 0 {
                        row[layout.u0_index(opp)] -= 1.0;
                    } else {
                        let (ph, pa, pb) = hist.parent(h_next);
                        row[layout.u_index(t, opp, ph, pa * nb + pb)] -= 1.0;
                    }
                    lp.push_row(row, relation, 0.0);
                }
            }
        }
    }

    // Dual epigraph: stage-0 payoffs shifted by the regret dominate the
    // scalar objective variable.
    if let Some(regret) = spec.dual_regret {
        if regret.len() != n_opp {
            return Err(Error::input("dual regret: size must match opponent type count"));
        }
        let tilde = epigraph.unwrap();
        for opp in 0..n_opp {
            let mut row = vec![0.0; layout.num_vars];
            row[layout.u0_index(opp)] = 1.0;
            row[tilde] = -1.0;
            lp.push_row(row, relation, -regret[opp]);
        }
    }

    Ok((lp, layout))
}

// ---------------------------------------------------------------------------
// Theorem-level entry points
// ---------------------------------------------------------------------------

/// Player 1's finite-horizon security LP (variables `x`, `u`, `u_{:,0}`).
pub fn build_primal_lp_p1(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<LpProblem> {
    let spec = SeqLpSpec {
        role: Player::P1,
        horizon,
        root: &game.p0,
        discount: None,
        dual_regret: None,
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// Player 2's finite-horizon security LP (variables `y`, `w`, `w_{:,0}`).
pub fn build_primal_lp_p2(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<LpProblem> {
    let spec = SeqLpSpec {
        role: Player::P2,
        horizon,
        root: &game.q0,
        discount: None,
        dual_regret: None,
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// A solved finite-horizon security problem for one player.
#[derive(Debug, Clone)]
pub struct SecuritySolution {
    pub player: Player,
    pub game_value: f64,
    pub plan: RealizationPlan,
    pub strategy: BehaviorStrategy,
    /// Optimal stage-0 future payoffs: `u_{:,0}` (per opponent type `l`)
    /// for player 1, `w_{:,0}` (per `k`) for player 2.
    pub stage0_payoffs: Vec<f64>,
}

pub(crate) fn solve_seq_lp(
    game: &GameSpec,
    spec: &SeqLpSpec<'_>,
    cap: HorizonCap,
) -> Result<(crate::lp::LpSolution, SeqLayout)> {
    let (lp, layout) = build_seq_lp(game, spec, cap)?;
    let solution = solve_lp(&lp)?;
    if solution.status != LpStatus::Optimal {
        return Err(Error::solver(format!(
            "sequence-form LP unexpectedly {:?} ({} horizon {})",
            solution.status, spec.role, spec.horizon
        )));
    }
    Ok((solution, layout))
}

/// Solve the finite-horizon security problem for one player: game value,
/// optimal realization plan, extracted behavior strategy, and the optimal
/// stage-0 payoff vector.
pub fn solve_primal(
    game: &GameSpec,
    horizon: usize,
    player: Player,
    cap: HorizonCap,
) -> Result<SecuritySolution> {
    let root = match player {
        Player::P1 => game.p0.clone(),
        Player::P2 => game.q0.clone(),
    };
    let spec = SeqLpSpec { role: player, horizon, root: &root, discount: None, dual_regret: None, opp_weights: None };
    let (solution, layout) = solve_seq_lp(game, &spec, cap)?;
    let plan = layout.plan_from_point(game, &root, &solution.point);
    let strategy = BehaviorStrategy::from_plan(game, &plan)?;
    Ok(SecuritySolution {
        player,
        game_value: solution.value,
        plan,
        strategy,
        stage0_payoffs: layout.u0_from_point(&solution.point),
    })
}

// ---------------------------------------------------------------------------
// Weighted future security payoffs (backward recursion)
// ---------------------------------------------------------------------------

/// Weighted future security payoffs of a fixed realization plan, computed
/// by backward recursion. For a player-1 plan these are the `u` values
/// (opponent minimizes); for a player-2 plan the `w` values (opponent
/// maximizes). The inner optimization over the opponent's mixed stage
/// response is taken over pure actions, which is exact for a linear
/// objective on a simplex.
#[derive(Debug, Clone)]
pub struct SecurityPayoffs {
    /// One value per opponent type: `u_{l,0}` or `w_{k,0}`.
    pub stage0: Vec<f64>,
    /// Stage `t = 1..horizon-1` values, indexed
    /// `(opp_type * count_t + h) * cells + (a * |B| + b)`.
    pub stages: Vec<Vec<f64>>,
}

impl SecurityPayoffs {
    /// Opponent-prior-weighted stage-0 value: the exact worst-case payoff
    /// of the plan (best case, for a player-2 plan).
    pub fn value_under(&self, opp_prior: &[f64]) -> f64 {
        self.stage0.iter().zip(opp_prior).map(|(u, q)| u * q).sum()
    }
}

/// Compute the weighted future security payoffs of `plan`, with unit stage
/// weights (`discount: None`) or anti-discounted weights (`Some(lambda)`).
pub fn weighted_security_payoffs(
    game: &GameSpec,
    plan: &RealizationPlan,
    discount: Option<f64>,
) -> Result<SecurityPayoffs> {
    let view = RoleView::new(game, plan.owner);
    let n = plan.horizon;
    let hist = enumerate_histories(game, n, HorizonCap::new(n))?;
    let n_own = view.n_own_types();
    let n_opp = view.n_opp_types();
    let n_own_act = view.n_own_actions();
    let n_opp_act = view.n_opp_actions();
    let nb = game.num_b();
    let cells = game.num_a() * game.num_b();
    let (alpha_m, alpha_u) = match discount {
        Some(lambda) => (lambda, 1.0 - lambda),
        None => (1.0, 1.0),
    };
    let minimizing = plan.owner == Player::P1;

    let mut stages: Vec<Vec<f64>> = vec![Vec::new(); n.saturating_sub(1)];
    let mut stage0 = vec![0.0; n_opp];
    // Boundary t computes the values indexed by stage-(t+1) histories.
    for t in (0..n).rev() {
        let mut vals = vec![0.0; n_opp * hist.count(t + 1) * if t == 0 { 1 } else { 1 }];
        // For t >= 1 the (h_t, cell) pair is exactly a stage-(t+1) history.
        let mut out = vec![0.0; n_opp * hist.count(t + 1)];
        for opp in 0..n_opp {
            for h_next in 0..hist.count(t + 1) {
                let mut best = if minimizing { f64::INFINITY } else { f64::NEG_INFINITY };
                for opp_act in 0..n_opp_act {
                    let mut m_part = 0.0;
                    for ty in 0..n_own {
                        for act in 0..n_own_act {
                            m_part += view.payoff(ty, opp, act, opp_act)
                                * plan.weight(&hist, t + 1, ty, h_next, act, n_own_act);
                        }
                    }
                    let mut u_part = 0.0;
                    if t + 1 < n {
                        let next = &stages[t]; // stage t+1 values, filled earlier
                        for act in 0..n_own_act {
                            let cell = view.cell(nb, act, opp_act);
                            u_part += next[(opp * hist.count(t + 1) + h_next) * cells + cell];
                        }
                    }
                    let v = alpha_m * m_part + alpha_u * u_part;
                    if (minimizing && v < best) || (!minimizing && v > best) {
                        best = v;
                    }
                }
                out[opp * hist.count(t + 1) + h_next] = best;
            }
        }
        vals.clear();
        if t == 0 {
            stage0.copy_from_slice(&out);
        } else {
            // Re-index stage-(t+1) histories as (h_t, cell) entries.
            let mut arr = vec![0.0; n_opp * hist.count(t) * cells];
            for opp in 0..n_opp {
                for h_next in 0..hist.count(t + 1) {
                    let (ph, pa, pb) = hist.parent(h_next);
                    arr[(opp * hist.count(t) + ph) * cells + pa * nb + pb] =
                        out[opp * hist.count(t + 1) + h_next];
                }
            }
            stages[t - 1] = arr;
        }
    }
    Ok(SecurityPayoffs { stage0, stages })
}

// ---------------------------------------------------------------------------
// Strategy CSV interchange
// ---------------------------------------------------------------------------

/// Write a behavior strategy as CSV with columns
/// `stage,type,history_a,history_b,action,probability`. History columns
/// are `-`-joined 1-based action indices, empty at the root. A leading
/// comment line records the owning player so the file is self-describing.
pub fn strategy_to_csv(game: &GameSpec, strategy: &BehaviorStrategy) -> Result<String> {
    let view = RoleView::new(game, strategy.owner);
    let n_act = view.n_own_actions();
    let hist = enumerate_histories(game, strategy.horizon, HorizonCap::new(strategy.horizon))?;
    let mut out = String::new();
    out.push_str(&format!(
        "# player: {}\n",
        if strategy.owner == Player::P1 { 1 } else { 2 }
    ));
    out.push_str("stage,type,history_a,history_b,action,probability\n");
    for t in 1..=strategy.horizon {
        for ty in 0..view.n_own_types() {
            for h in 0..hist.count(t) {
                let pair = hist.pair(t, h);
                let ha = join_history(&pair.a_seq);
                let hb = join_history(&pair.b_seq);
                for act in 0..n_act {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        t,
                        ty + 1,
                        ha,
                        hb,
                        act + 1,
                        strategy.prob(&hist, t, ty, h, act, n_act)
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Parse a strategy CSV produced by [`strategy_to_csv`]. The owner is read
/// from the `# player:` comment when present, otherwise inferred from the
/// type/action counts (an error if the game is symmetric enough to make
/// that ambiguous).
pub fn strategy_from_csv(game: &GameSpec, text: &str) -> Result<BehaviorStrategy> {
    let mut owner: Option<Player> = None;
    let mut rows: Vec<(usize, usize, Vec<usize>, Vec<usize>, usize, f64)> = Vec::new();
    let mut max_type = 0usize;
    let mut max_act = 0usize;
    let mut max_stage = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(p) = rest.strip_prefix("player:") {
                owner = match p.trim() {
                    "1" => Some(Player::P1),
                    "2" => Some(Player::P2),
                    other => {
                        return Err(Error::input(format!("strategy csv: unknown player '{other}'")))
                    }
                };
            }
            continue;
        }
        if line.starts_with("stage,") {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::input(format!(
                "strategy csv line {}: expected 6 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::input(format!("strategy csv line {}: bad {what} '{s}'", lineno + 1)))
        };
        let stage = parse_usize(fields[0], "stage")?;
        let ty = parse_usize(fields[1], "type")?;
        let ha = parse_history(fields[2], lineno + 1)?;
        let hb = parse_history(fields[3], lineno + 1)?;
        let act = parse_usize(fields[4], "action")?;
        let prob: f64 = fields[5].trim().parse().map_err(|_| {
            Error::input(format!("strategy csv line {}: bad probability '{}'", lineno + 1, fields[5]))
        })?;
        if stage == 0 || ty == 0 || act == 0 {
            return Err(Error::input(format!(
                "strategy csv line {}: stage/type/action are 1-based",
                lineno + 1
            )));
        }
        max_stage = max_stage.max(stage);
        max_type = max_type.max(ty);
        max_act = max_act.max(act);
        rows.push((stage, ty - 1, ha, hb, act - 1, prob));
    }
    if rows.is_empty() {
        return Err(Error::input("strategy csv: no data rows"));
    }
    let owner = match owner {
        Some(p) => p,
        None => {
            let fits_p1 = max_type <= game.num_k() && max_act <= game.num_a();
            let fits_p2 = max_type <= game.num_l() && max_act <= game.num_b();
            match (fits_p1, fits_p2) {
                (true, false) => Player::P1,
                (false, true) => Player::P2,
                (true, true) => {
                    return Err(Error::input(
                        "strategy csv: owner is ambiguous; add a '# player: 1' or \
                         '# player: 2' comment line",
                    ))
                }
                (false, false) => {
                    return Err(Error::input(
                        "strategy csv: type/action indices fit neither player of this game",
                    ))
                }
            }
        }
    };
    let view = RoleView::new(game, owner);
    let n_act = view.n_own_actions();
    let horizon = max_stage;
    let hist = enumerate_histories(game, horizon, HorizonCap::new(horizon))?;
    let mut stages: Vec<Vec<f64>> = (1..=horizon)
        .map(|t| vec![f64::NAN; view.n_own_types() * hist.count(t) * n_act])
        .collect();
    for (stage, ty, ha, hb, act, prob) in rows {
        if ty >= view.n_own_types() || act >= n_act {
            return Err(Error::input(format!(
                "strategy csv: type {} / action {} out of range for {owner}",
                ty + 1,
                act + 1
            )));
        }
        if ha.len() != stage - 1 || hb.len() != stage - 1 {
            return Err(Error::input(format!(
                "strategy csv: history length must be stage-1 (stage {stage})"
            )));
        }
        if ha.iter().any(|&a| a >= game.num_a()) || hb.iter().any(|&b| b >= game.num_b()) {
            return Err(Error::input("strategy csv: history action out of range".to_string()));
        }
        let mut h = 0usize;
        for s in 0..stage - 1 {
            h = hist.child(h, ha[s], hb[s]);
        }
        stages[stage - 1][(ty * hist.count(stage) + h) * n_act + act] = prob;
    }
    let mut strategy = BehaviorStrategy { owner, horizon, stages };
    // Every row must be complete and a distribution.
    let tol = 1e-6;
    for t in 1..=horizon {
        for ty in 0..view.n_own_types() {
            for h in 0..hist.count(t) {
                let mut sum = 0.0;
                for act in 0..n_act {
                    let v = strategy.prob(&hist, t, ty, h, act, n_act);
                    if v.is_nan() || v < -tol {
                        return Err(Error::input(format!(
                            "strategy csv: missing or negative probability at stage {t}, type {}, \
                             history {h}",
                            ty + 1
                        )));
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > tol {
                    return Err(Error::input(format!(
                        "strategy csv: probabilities at stage {t}, type {}, history {h} sum to {sum}",
                        ty + 1
                    )));
                }
                // Renormalize to machine precision.
                for act in 0..n_act {
                    let idx = (ty * hist.count(t) + h) * n_act + act;
                    strategy.stages[t - 1][idx] = strategy.stages[t - 1][idx].max(0.0) / sum;
                }
            }
        }
    }
    Ok(strategy)
}

fn join_history(seq: &[usize]) -> String {
    seq.iter().map(|a| (a + 1).to_string()).collect::<Vec<_>>().join("-")
}

fn parse_history(field: &str, lineno: usize) -> Result<Vec<usize>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split('-')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .and_then(|v| v.checked_sub(1))
                .ok_or_else(|| Error::input(format!("strategy csv line {lineno}: bad history '{field}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::HorizonCap;

    fn game(
        nk: usize,
        nl: usize,
        na: usize,
        nb: usize,
        payoff: impl Fn(usize, usize, usize, usize) -> f64,
        p0: Vec<f64>,
        q0: Vec<f64>,
    ) -> GameSpec {
        let g = GameSpec {
            k_types: (0..nk).map(|i| format!("k{i}")).collect(),
            l_types: (0..nl).map(|i| format!("l{i}")).collect(),
            a_actions: (0..na).map(|i| format!("a{i}")).collect(),
            b_actions: (0..nb).map(|i| format!("b{i}")).collect(),
            payoff: (0..nk)
                .map(|k| {
                    (0..nl)
                        .map(|l| {
                            (0..na).map(|a| (0..nb).map(|b| payoff(k, l, a, b)).collect()).collect()
                        })
                        .collect()
                })
                .collect(),
            p0,
            q0,
            discount: None,
        };
        g.validate().unwrap();
        g
    }

    /// Deterministic low-state generator for test games.
    struct TestRng(u64);
    impl TestRng {
        fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
        }
    }

    fn random_2222(seed: u64) -> GameSpec {
        let mut rng = TestRng(seed);
        let mut vals = [[[[0.0f64; 2]; 2]; 2]; 2];
        for k in 0..2 {
            for l in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        vals[k][l][a][b] = (rng.next_f64() - 0.5) * 20.0;
                    }
                }
            }
        }
        let p = 0.2 + 0.6 * rng.next_f64();
        let q = 0.2 + 0.6 * rng.next_f64();
        game(2, 2, 2, 2, |k, l, a, b| vals[k][l][a][b], vec![p, 1.0 - p], vec![q, 1.0 - q])
    }

    #[test]
    fn single_action_game_sums_stage_payoffs() {
        let c = 2.75;
        let g = game(1, 1, 1, 1, |_, _, _, _| c, vec![1.0], vec![1.0]);
        for player in [Player::P1, Player::P2] {
            let s = solve_primal(&g, 3, player, HorizonCap::default()).unwrap();
            assert!((s.game_value - 3.0 * c).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_payoff_tensor_gives_zero_value() {
        let g = game(2, 3, 2, 2, |_, _, _, _| 0.0, vec![0.5, 0.5], vec![0.4, 0.3, 0.3]);
        let s = solve_primal(&g, 2, Player::P2, HorizonCap::default()).unwrap();
        assert!(s.game_value.abs() < 1e-9);
        let plan = s.plan.clone();
        let w = weighted_security_payoffs(&g, &plan, None).unwrap();
        assert!(w.stage0.iter().all(|v| v.abs() < 1e-9));
    }

    /// One-stage oracle: enumerate type-contingent pure strategies and
    /// solve the induced matrix game directly.
    fn one_stage_oracle(g: &GameSpec) -> f64 {
        let nk = g.num_k();
        let nl = g.num_l();
        let na = g.num_a();
        let nb = g.num_b();
        let rows = na.pow(nk as u32);
        let cols = nb.pow(nl as u32);
        let mut matrix = vec![vec![0.0f64; cols]; rows];
        for (r, row) in matrix.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                let mut v = 0.0;
                for k in 0..nk {
                    let a = (r / na.pow(k as u32)) % na;
                    for l in 0..nl {
                        let b = (c / nb.pow(l as u32)) % nb;
                        v += g.p0[k] * g.q0[l] * g.payoff(k, l, a, b);
                    }
                }
                *entry = v;
            }
        }
        matrix_game_value(&matrix)
    }

    /// Row player's maxmin value of a matrix game, via a fresh LP.
    pub(crate) fn matrix_game_value(matrix: &[Vec<f64>]) -> f64 {
        let rows = matrix.len();
        let cols = matrix[0].len();
        let mut lp = LpProblem::new(Sense::Maximize, rows + 1);
        lp.objective[rows] = 1.0;
        lp.set_free(rows);
        for c in 0..cols {
            let mut row = vec![0.0; rows + 1];
            for r in 0..rows {
                row[r] = matrix[r][c];
            }
            row[rows] = -1.0;
            lp.push_row(row, Relation::Ge, 0.0);
        }
        lp.push_row(
            (0..rows + 1).map(|j| if j < rows { 1.0 } else { 0.0 }).collect(),
            Relation::Eq,
            1.0,
        );
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        s.value
    }

    #[test]
    fn one_stage_matches_pure_strategy_oracle() {
        for seed in 1..=6u64 {
            let g = random_2222(seed);
            let oracle = one_stage_oracle(&g);
            let v1 = solve_primal(&g, 1, Player::P1, HorizonCap::default()).unwrap().game_value;
            let v2 = solve_primal(&g, 1, Player::P2, HorizonCap::default()).unwrap().game_value;
            assert!((v1 - oracle).abs() < 1e-6, "seed {seed}: {v1} vs oracle {oracle}");
            assert!((v2 - oracle).abs() < 1e-6, "seed {seed}: {v2} vs oracle {oracle}");
        }
    }

    #[test]
    fn both_players_agree_on_value() {
        for seed in 10..15u64 {
            let g = random_2222(seed);
            for t in [1, 2, 3] {
                let v1 = solve_primal(&g, t, Player::P1, HorizonCap::default()).unwrap().game_value;
                let v2 = solve_primal(&g, t, Player::P2, HorizonCap::default()).unwrap().game_value;
                assert!((v1 - v2).abs() < 1e-6, "seed {seed} T={t}: {v1} vs {v2}");
            }
        }
    }

    #[test]
    fn security_certificate_matches_lp_value() {
        for seed in 20..24u64 {
            let g = random_2222(seed);
            let s1 = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap();
            let u = weighted_security_payoffs(&g, &s1.plan, None).unwrap();
            assert!((u.value_under(&g.q0) - s1.game_value).abs() < 1e-6);
            let s2 = solve_primal(&g, 2, Player::P2, HorizonCap::default()).unwrap();
            let w = weighted_security_payoffs(&g, &s2.plan, None).unwrap();
            assert!((w.value_under(&g.p0) - s2.game_value).abs() < 1e-6);
        }
    }

    /// Brute-force best response: minimize over player 2's type-l pure
    /// strategies (maps from every decision point to an action).
    fn brute_force_u0(g: &GameSpec, plan: &RealizationPlan, l: usize, horizon: usize) -> f64 {
        assert!(horizon == 2);
        let na = g.num_a();
        let nb = g.num_b();
        let hist = enumerate_histories(g, 2, HorizonCap::default()).unwrap();
        // Decision points: the root plus every stage-2 history.
        let points = 1 + hist.count(2);
        let combos = nb.pow(points as u32);
        let mut best = f64::INFINITY;
        for combo in 0..combos {
            let choice = |point: usize| (combo / nb.pow(point as u32)) % nb;
            let mut total = 0.0;
            let b1 = choice(0);
            for k in 0..g.num_k() {
                for a1 in 0..na {
                    let x1 = plan.weight(&hist, 1, k, 0, a1, na);
                    total += x1 * g.payoff(k, l, a1, b1);
                    let h2 = hist.child(0, a1, b1);
                    let b2 = choice(1 + h2);
                    for a2 in 0..na {
                        let x2 = plan.weight(&hist, 2, k, h2, a2, na);
                        total += x2 * g.payoff(k, l, a2, b2);
                    }
                }
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn recursion_matches_brute_force_on_random_plans() {
        for seed in 30..34u64 {
            let g = random_2222(seed);
            // A plan from arbitrary (valid) behavior rows.
            let mut rng = TestRng(seed * 77 + 1);
            let hist = enumerate_histories(&g, 2, HorizonCap::default()).unwrap();
            let mut stages = Vec::new();
            for t in 1..=2usize {
                let mut stage = vec![0.0; 2 * hist.count(t) * 2];
                for row in stage.chunks_mut(2) {
                    let p = rng.next_f64();
                    row[0] = p;
                    row[1] = 1.0 - p;
                }
                stages.push(stage);
            }
            let behavior = BehaviorStrategy { owner: Player::P1, horizon: 2, stages };
            let plan = behavior.to_plan(&g, &g.p0).unwrap();
            plan.validate(&g, 1e-9).unwrap();
            let u = weighted_security_payoffs(&g, &plan, None).unwrap();
            for l in 0..2 {
                let brute = brute_force_u0(&g, &plan, l, 2);
                assert!(
                    (u.stage0[l] - brute).abs() < 1e-9,
                    "seed {seed} l={l}: recursion {} vs brute {brute}",
                    u.stage0[l]
                );
            }
        }
    }

    #[test]
    fn quotient_rows_are_distributions_and_off_path_uniform() {
        let g = random_2222(42);
        let s = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap();
        let hist = enumerate_histories(&g, 2, HorizonCap::default()).unwrap();
        for t in 1..=2usize {
            for ty in 0..2 {
                for h in 0..hist.count(t) {
                    let sum: f64 = (0..2).map(|a| s.strategy.prob(&hist, t, ty, h, a, 2)).sum();
                    assert!((sum - 1.0).abs() < 1e-9);
                }
            }
        }
        // Consistency: strategy times parent weight reproduces the plan on
        // reachable histories.
        for ty in 0..2 {
            for h in 0..hist.count(2) {
                let (ph, pa, _) = hist.parent(h);
                let parent = s.plan.weight(&hist, 1, ty, ph, pa, 2);
                if parent > UNREACHABLE_WEIGHT {
                    for a in 0..2 {
                        let lhs = s.strategy.prob(&hist, 2, ty, h, a, 2) * parent;
                        let rhs = s.plan.weight(&hist, 2, ty, h, a, 2);
                        assert!((lhs - rhs).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_plan_in_constant_game_values_ct() {
        let c = -3.25;
        let g = game(2, 2, 2, 2, |_, _, _, _| c, vec![0.5, 0.5], vec![0.5, 0.5]);
        let hist = enumerate_histories(&g, 2, HorizonCap::default()).unwrap();
        let mut stages = Vec::new();
        for t in 1..=2usize {
            stages.push(vec![0.5; 2 * hist.count(t) * 2]);
        }
        let plan = BehaviorStrategy { owner: Player::P1, horizon: 2, stages }
            .to_plan(&g, &g.p0)
            .unwrap();
        let u = weighted_security_payoffs(&g, &plan, None).unwrap();
        assert!((u.value_under(&g.q0) - 2.0 * c).abs() < 1e-9);
    }

    #[test]
    fn strategy_csv_round_trip() {
        let g = random_2222(55);
        let s = solve_primal(&g, 2, Player::P2, HorizonCap::default()).unwrap();
        let text = strategy_to_csv(&g, &s.strategy).unwrap();
        let back = strategy_from_csv(&g, &text).unwrap();
        assert_eq!(back.owner, Player::P2);
        assert_eq!(back.horizon, 2);
        for (a, b) in s.strategy.stages.iter().zip(&back.stages) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
