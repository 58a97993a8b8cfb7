//! Discounted games: truncated anti-discounted security LPs, approximated
//! initial regrets, discounted dual LPs, approximated strategy agents, and
//! certified error bounds.
//!
//! The stage-`t` payoff carries weight `lambda * (1-lambda)^(t-1)` and the
//! game runs forever. Exact computation of the initial regrets is
//! non-convex, so everything here works with the `T`-stage truncation: its
//! value approaches the infinite-horizon value geometrically at rate
//! `1 - lambda`, and the strategies recovered from `T+1`-stage dual
//! programs come with an explicit sup-norm performance bound.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{BeliefVector, GameSpec, HorizonCap, Player, RegretVector};
use crate::lp::LpProblem;
use crate::seqform::{build_seq_lp, solve_seq_lp, RealizationPlan, SeqLpSpec};
use crate::dual::{
    promise_regret_update, regret_step, solve_dual, update_belief, StagePolicy, StageStrategy,
    StrategyCache, SufficientStatisticP1, SufficientStatisticP2,
};

/// Anti-discounted regrets past this magnitude trip the divergence guard.
pub const REGRET_GUARD: f64 = 1e12;

/// Solve parameters for a discounted game.
#[derive(Debug, Clone)]
pub struct DiscountedSolveConfig {
    /// Discount factor, strictly inside (0, 1).
    pub lambda: f64,
    /// Truncation horizon for the approximating LPs.
    pub truncation: usize,
    /// Episode cutoff: play stops once the remaining stage weight times the
    /// largest absolute payoff drops below this (payoff units).
    pub residual_tolerance: f64,
}

impl DiscountedSolveConfig {
    pub fn new(lambda: f64, truncation: usize) -> Result<Self> {
        let cfg = DiscountedSolveConfig { lambda, truncation, residual_tolerance: 1e-3 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.truncation == 0 {
            return Err(Error::input("truncation horizon must be at least 1"));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::input("residual tolerance must be positive"));
        }
        Ok(())
    }

    /// Number of stages to play before the residual payoff mass
    /// `(1-lambda)^t * max|M|` falls below the tolerance.
    pub fn episode_stages(&self, game: &GameSpec) -> usize {
        let max_m = game.max_abs_payoff();
        if max_m == 0.0 {
            return 1;
        }
        let mut t = 1usize;
        let mut tail = 1.0 - self.lambda;
        while tail * max_m >= self.residual_tolerance && t < 10_000 {
            t += 1;
            tail *= 1.0 - self.lambda;
        }
        t
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::input(format!("discount: {lambda} must lie strictly in (0, 1)")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Truncated discounted security LPs
// ---------------------------------------------------------------------------

/// The `T`-stage anti-discounted security LP for one player: constraints
/// carry `lambda` on stage payoffs and `1 - lambda` on continuation values,
/// so the optimum is the truncated discounted game value.
pub fn build_discounted_primal_lp(
    game: &GameSpec,
    lambda: f64,
    horizon: usize,
    player: Player,
    cap: HorizonCap,
) -> Result<LpProblem> {
    check_lambda(lambda)?;
    let root = match player {
        Player::P1 => &game.p0,
        Player::P2 => &game.q0,
    };
    let spec = SeqLpSpec {
        role: player,
        horizon,
        root,
        discount: Some(lambda),
        dual_regret: None,
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// A solved truncated discounted security problem.
#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub player: Player,
    pub value: f64,
    pub plan: RealizationPlan,
    /// Optimal anti-discounted stage-0 payoffs (per opponent type).
    pub stage0_payoffs: Vec<f64>,
}

/// Solve the truncated discounted security LP at arbitrary type weights
/// `(p, q)`. Zero entries are allowed here (unlike in a game prior): the
/// bound search evaluates simplex vertices directly, where the zero-weight
/// types simply carry no realization mass.
pub fn solve_discounted_primal_at(
    game: &GameSpec,
    lambda: f64,
    horizon: usize,
    player: Player,
    p: &[f64],
    q: &[f64],
    cap: HorizonCap,
) -> Result<DiscountedSolution> {
    check_lambda(lambda)?;
    let (root, opp): (&[f64], &[f64]) = match player {
        Player::P1 => (p, q),
        Player::P2 => (q, p),
    };
    let spec = SeqLpSpec {
        role: player,
        horizon,
        root,
        discount: Some(lambda),
        dual_regret: None,
        opp_weights: Some(opp),
    };
    let (solution, layout) = solve_seq_lp(game, &spec, cap)?;
    Ok(DiscountedSolution {
        player,
        value: solution.value,
        plan: layout.plan_from_point(game, root, &solution.point),
        stage0_payoffs: layout.u0_from_point(&solution.point),
    })
}

/// Solve the truncated discounted security LP at the game's priors.
pub fn solve_discounted_primal(
    game: &GameSpec,
    lambda: f64,
    horizon: usize,
    player: Player,
    cap: HorizonCap,
) -> Result<DiscountedSolution> {
    solve_discounted_primal_at(game, lambda, horizon, player, &game.p0, &game.q0, cap)
}

/// Truncated discounted game value `V_{lambda,T}(p, q)`.
pub fn discounted_value_at(
    game: &GameSpec,
    lambda: f64,
    horizon: usize,
    p: &[f64],
    q: &[f64],
    cap: HorizonCap,
) -> Result<f64> {
    Ok(solve_discounted_primal_at(game, lambda, horizon, Player::P1, p, q, cap)?.value)
}

/// Approximated initial regrets `(mu, nu)`: the negated optimal
/// anti-discounted stage-0 payoffs of the two truncated LPs. `mu` has one
/// entry per player-1 type, `nu` one per player-2 type.
pub fn approx_initial_regrets(
    game: &GameSpec,
    lambda: f64,
    horizon: usize,
    cap: HorizonCap,
) -> Result<(RegretVector, RegretVector)> {
    let p2 = solve_discounted_primal(game, lambda, horizon, Player::P2, cap)?;
    let p1 = solve_discounted_primal(game, lambda, horizon, Player::P1, cap)?;
    let mu = RegretVector::new(Player::P1, p2.stage0_payoffs.iter().map(|w| -w).collect())?;
    let nu = RegretVector::new(Player::P2, p1.stage0_payoffs.iter().map(|u| -u).collect())?;
    Ok((mu, nu))
}

// ---------------------------------------------------------------------------
// Discounted dual LPs and approximated strategies
// ---------------------------------------------------------------------------

/// Player 1's `n`-stage discounted dual LP at `(p, nu)`. The approximated
/// strategy pipeline calls this with `n = T + 1`; the zero-dual-value
/// identity at the approximated regrets holds at `n = T`.
pub fn build_discounted_dual_lp_p1(
    game: &GameSpec,
    lambda: f64,
    n: usize,
    belief: &[f64],
    regret: &[f64],
    cap: HorizonCap,
) -> Result<LpProblem> {
    check_lambda(lambda)?;
    let spec = SeqLpSpec {
        role: Player::P1,
        horizon: n,
        root: belief,
        discount: Some(lambda),
        dual_regret: Some(regret),
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// Player 2's `n`-stage discounted dual LP at `(mu, q)`, the mirror.
pub fn build_discounted_dual_lp_p2(
    game: &GameSpec,
    lambda: f64,
    n: usize,
    regret: &[f64],
    belief: &[f64],
    cap: HorizonCap,
) -> Result<LpProblem> {
    check_lambda(lambda)?;
    let spec = SeqLpSpec {
        role: Player::P2,
        horizon: n,
        root: belief,
        discount: Some(lambda),
        dual_regret: Some(regret),
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// Value and stage-1 rows of player 1's `n`-stage discounted dual game.
pub fn discounted_dual_value_p1(
    game: &GameSpec,
    lambda: f64,
    n: usize,
    belief: &[f64],
    regret: &[f64],
    cap: HorizonCap,
) -> Result<(f64, StageStrategy)> {
    check_lambda(lambda)?;
    let out = solve_dual(game, Player::P1, n, belief, regret, Some(lambda), cap, None)?;
    Ok((out.value, (*out.mix).clone()))
}

/// Value and stage-1 rows of player 2's `n`-stage discounted dual game.
pub fn discounted_dual_value_p2(
    game: &GameSpec,
    lambda: f64,
    n: usize,
    regret: &[f64],
    belief: &[f64],
    cap: HorizonCap,
) -> Result<(f64, StageStrategy)> {
    check_lambda(lambda)?;
    let out = solve_dual(game, Player::P2, n, belief, regret, Some(lambda), cap, None)?;
    Ok((out.value, (*out.mix).clone()))
}

/// Player 1's approximated stage strategy at `(p, nu)`: the stage-1
/// behavior of the `T+1`-stage discounted dual LP. Stationary: equal
/// inputs give equal outputs.
pub fn approx_stage_strategy_p1(
    game: &GameSpec,
    lambda: f64,
    truncation: usize,
    belief: &[f64],
    regret: &[f64],
    cap: HorizonCap,
) -> Result<StageStrategy> {
    check_lambda(lambda)?;
    cap.check(truncation)?;
    let out = solve_dual(
        game,
        Player::P1,
        truncation + 1,
        belief,
        regret,
        Some(lambda),
        cap.extended(1),
        None,
    )?;
    Ok((*out.mix).clone())
}

/// Player 2's approximated stage strategy at `(mu, q)`.
pub fn approx_stage_strategy_p2(
    game: &GameSpec,
    lambda: f64,
    truncation: usize,
    regret: &[f64],
    belief: &[f64],
    cap: HorizonCap,
) -> Result<StageStrategy> {
    check_lambda(lambda)?;
    cap.check(truncation)?;
    let out = solve_dual(
        game,
        Player::P2,
        truncation + 1,
        belief,
        regret,
        Some(lambda),
        cap.extended(1),
        None,
    )?;
    Ok((*out.mix).clone())
}

/// Anti-discounted regret update: add `lambda` times the posterior-weighted
/// stage payoff, then divide by `1 - lambda`. The division makes regrets
/// grow like `(1-lambda)^-t`, hence the divergence guard; agents are
/// expected to be truncated by the caller long before it trips.
pub fn update_regret_discounted(
    regret: &RegretVector,
    belief_next: &BeliefVector,
    a: usize,
    b: usize,
    game: &GameSpec,
    lambda: f64,
) -> Result<RegretVector> {
    check_lambda(lambda)?;
    let step = regret_step(regret, belief_next, a, b, game)?;
    let mut values = Vec::with_capacity(regret.values.len());
    for (r, dv) in regret.values.iter().zip(step) {
        let v = (r + lambda * dv) / (1.0 - lambda);
        if v.abs() > REGRET_GUARD {
            return Err(Error::Divergence { value: v, guard: REGRET_GUARD });
        }
        values.push(v);
    }
    RegretVector::new(regret.about, values)
}

// ---------------------------------------------------------------------------
// Approximated-strategy agents (stationary in the sufficient statistic)
// ---------------------------------------------------------------------------

/// Player 1's approximated security strategy agent for the discounted
/// game. Initialization solves the `T`-stage truncated LP for
/// `nu_1 = -u*_{:,0}`; each stage solves the `T+1`-stage dual LP at the
/// current `(p_t, nu_t)` and then applies the belief and anti-discounted
/// regret updates. Runs indefinitely; the caller truncates episodes.
#[derive(Clone)]
pub struct DiscountedAgentP1 {
    game: Arc<GameSpec>,
    lambda: f64,
    truncation: usize,
    cap: HorizonCap,
    t: usize,
    belief: Vec<f64>,
    regret: Vec<f64>,
    pending: Option<Arc<StagePolicy>>,
    cache: Arc<StrategyCache>,
    initial: (Vec<f64>, Vec<f64>),
}

impl DiscountedAgentP1 {
    pub fn new(game: &GameSpec, lambda: f64, truncation: usize, cap: HorizonCap) -> Result<Self> {
        check_lambda(lambda)?;
        cap.check(truncation)?;
        let p1 = solve_discounted_primal(game, lambda, truncation, Player::P1, cap)?;
        let nu: Vec<f64> = p1.stage0_payoffs.iter().map(|u| -u).collect();
        Ok(DiscountedAgentP1 {
            game: Arc::new(game.clone()),
            lambda,
            truncation,
            cap,
            t: 1,
            belief: game.p0.clone(),
            regret: nu.clone(),
            pending: None,
            cache: StrategyCache::new(),
            initial: (game.p0.clone(), nu),
        })
    }

    pub fn statistic(&self) -> SufficientStatisticP1 {
        SufficientStatisticP1 {
            stage: self.t,
            belief: BeliefVector { owner: Player::P1, probs: self.belief.clone() },
            regret: RegretVector { about: Player::P2, values: self.regret.clone() },
        }
    }

    pub fn stage_mix(&mut self) -> Result<Arc<StageStrategy>> {
        Ok(self.policy()?.mix.clone())
    }

    fn policy(&mut self) -> Result<Arc<StagePolicy>> {
        if let Some(policy) = &self.pending {
            return Ok(policy.clone());
        }
        let n = self.truncation + 1;
        let (game, cap, lambda) = (self.game.clone(), self.cap.extended(1), self.lambda);
        let (belief, regret) = (self.belief.clone(), self.regret.clone());
        let policy = self.cache.get_or_solve(n, &belief, &regret, |warm| {
            solve_dual(&game, Player::P1, n, &belief, &regret, Some(lambda), cap, Some(warm))
        })?;
        self.pending = Some(policy.clone());
        Ok(policy)
    }

    pub fn observe(&mut self, a: usize, b: usize) -> Result<()> {
        let policy = self
            .pending
            .take()
            .ok_or_else(|| Error::protocol("player 1 agent: observe before act"))?;
        let belief = BeliefVector { owner: Player::P1, probs: self.belief.clone() };
        let next_belief = update_belief(&belief, &policy.mix, a)?;
        let next_regret = promise_regret_update(
            &self.game,
            Player::P1,
            &policy,
            &belief.probs,
            &self.regret,
            &next_belief.probs,
            a,
            b,
            Some(self.lambda),
            REGRET_GUARD,
        );
        self.belief = next_belief.probs;
        self.regret = next_regret;
        self.t += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.t = 1;
        self.belief = self.initial.0.clone();
        self.regret = self.initial.1.clone();
        self.pending = None;
    }
}

/// Player 2's approximated security strategy agent, tracking `(mu_t, q_t)`.
#[derive(Clone)]
pub struct DiscountedAgentP2 {
    game: Arc<GameSpec>,
    lambda: f64,
    truncation: usize,
    cap: HorizonCap,
    t: usize,
    regret: Vec<f64>,
    belief: Vec<f64>,
    pending: Option<Arc<StagePolicy>>,
    cache: Arc<StrategyCache>,
    initial: (Vec<f64>, Vec<f64>),
}

impl DiscountedAgentP2 {
    pub fn new(game: &GameSpec, lambda: f64, truncation: usize, cap: HorizonCap) -> Result<Self> {
        check_lambda(lambda)?;
        cap.check(truncation)?;
        let p2 = solve_discounted_primal(game, lambda, truncation, Player::P2, cap)?;
        let mu: Vec<f64> = p2.stage0_payoffs.iter().map(|w| -w).collect();
        Ok(DiscountedAgentP2 {
            game: Arc::new(game.clone()),
            lambda,
            truncation,
            cap,
            t: 1,
            regret: mu.clone(),
            belief: game.q0.clone(),
            pending: None,
            cache: StrategyCache::new(),
            initial: (mu, game.q0.clone()),
        })
    }

    pub fn statistic(&self) -> SufficientStatisticP2 {
        SufficientStatisticP2 {
            stage: self.t,
            regret: RegretVector { about: Player::P1, values: self.regret.clone() },
            belief: BeliefVector { owner: Player::P2, probs: self.belief.clone() },
        }
    }

    pub fn stage_mix(&mut self) -> Result<Arc<StageStrategy>> {
        Ok(self.policy()?.mix.clone())
    }

    fn policy(&mut self) -> Result<Arc<StagePolicy>> {
        if let Some(policy) = &self.pending {
            return Ok(policy.clone());
        }
        let n = self.truncation + 1;
        let (game, cap, lambda) = (self.game.clone(), self.cap.extended(1), self.lambda);
        let (belief, regret) = (self.belief.clone(), self.regret.clone());
        let policy = self.cache.get_or_solve(n, &belief, &regret, |warm| {
            solve_dual(&game, Player::P2, n, &belief, &regret, Some(lambda), cap, Some(warm))
        })?;
        self.pending = Some(policy.clone());
        Ok(policy)
    }

    pub fn observe(&mut self, a: usize, b: usize) -> Result<()> {
        let policy = self
            .pending
            .take()
            .ok_or_else(|| Error::protocol("player 2 agent: observe before act"))?;
        let belief = BeliefVector { owner: Player::P2, probs: self.belief.clone() };
        let next_belief = update_belief(&belief, &policy.mix, b)?;
        let next_regret = promise_regret_update(
            &self.game,
            Player::P2,
            &policy,
            &belief.probs,
            &self.regret,
            &next_belief.probs,
            a,
            b,
            Some(self.lambda),
            REGRET_GUARD,
        );
        self.belief = next_belief.probs;
        self.regret = next_regret;
        self.t += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.t = 1;
        self.regret = self.initial.0.clone();
        self.belief = self.initial.1.clone();
        self.pending = None;
    }
}

/// Algorithm-style constructor for player 1's discounted agent.
pub fn make_discounted_agent_p1(
    game: &GameSpec,
    lambda: f64,
    truncation: usize,
    cap: HorizonCap,
) -> Result<DiscountedAgentP1> {
    DiscountedAgentP1::new(game, lambda, truncation, cap)
}

/// Algorithm-style constructor for player 2's discounted agent.
pub fn make_discounted_agent_p2(
    game: &GameSpec,
    lambda: f64,
    truncation: usize,
    cap: HorizonCap,
) -> Result<DiscountedAgentP2> {
    DiscountedAgentP2::new(game, lambda, truncation, cap)
}

// ---------------------------------------------------------------------------
// Error certificates
// ---------------------------------------------------------------------------

/// Certified bounds for a truncated discounted solve at one `(p, q)`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCertificate {
    /// `V_{lambda,T}(p, q)`.
    pub v_trunc: f64,
    /// Bound on the sup norm of the infinite-horizon value:
    /// `max_grid |V_{lambda,T}| / (1 - (1-lambda)^T)`.
    #[serde(rename = "sup_bound")]
    pub sup_bound_v: f64,
    /// Performance gap of the approximated strategies:
    /// `2 (1-lambda)^{T+1} / lambda * sup_bound_v`.
    #[serde(rename = "gap_bound")]
    pub strategy_gap_bound: f64,
    /// Bracket on the worst-case payoff achievable at `(p, q)`.
    #[serde(rename = "interval")]
    pub value_interval: [f64; 2],
}

/// Compute an error certificate at `(p, q)`.
///
/// The sup-norm of the truncated value is estimated over `grid` when
/// given, otherwise over all pairs of simplex vertices (where the highest
/// truncated value of a game of this shape is attained in the worked
/// examples this follows). The value interval applies the geometric tail
/// of the stage weights on the upper side and the strategy gap on both.
pub fn error_certificate(
    game: &GameSpec,
    lambda: f64,
    truncation: usize,
    p: &[f64],
    q: &[f64],
    grid: Option<&[(Vec<f64>, Vec<f64>)]>,
    cap: HorizonCap,
) -> Result<ErrorCertificate> {
    check_lambda(lambda)?;
    let v_trunc = discounted_value_at(game, lambda, truncation, p, q, cap)?;

    let mut grid_max = 0.0f64;
    let mut eval = |pp: &[f64], qq: &[f64]| -> Result<()> {
        let v = discounted_value_at(game, lambda, truncation, pp, qq, cap)?;
        grid_max = grid_max.max(v.abs());
        Ok(())
    };
    match grid {
        Some(points) => {
            for (pp, qq) in points {
                eval(pp, qq)?;
            }
        }
        None => {
            for k in 0..game.num_k() {
                let mut pp = vec![0.0; game.num_k()];
                pp[k] = 1.0;
                for l in 0..game.num_l() {
                    let mut qq = vec![0.0; game.num_l()];
                    qq[l] = 1.0;
                    eval(&pp, &qq)?;
                }
            }
        }
    }

    let shrink = 1.0 - (1.0 - lambda).powi(truncation as i32);
    let sup_bound_v = grid_max / shrink;
    let strategy_gap_bound =
        2.0 * (1.0 - lambda).powi(truncation as i32 + 1) / lambda * sup_bound_v;
    let tail = (1.0 - lambda).powi(truncation as i32) * game.max_abs_payoff();
    let value_interval = [
        v_trunc - strategy_gap_bound,
        v_trunc + tail + strategy_gap_bound,
    ];
    Ok(ErrorCertificate { v_trunc, sup_bound_v, strategy_gap_bound, value_interval })
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

    struct TestRng(u64);
    impl TestRng {
        fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
        }
    }

    fn random_game(seed: u64) -> GameSpec {
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
    fn constant_payoff_value_is_geometric_sum() {
        let c = 7.5;
        let g = game(2, 2, 2, 2, |_, _, _, _| c, vec![0.5, 0.5], vec![0.5, 0.5]);
        for lambda in [0.3f64, 0.7] {
            for horizon in [1, 2, 3] {
                let expect = c * (1.0 - (1.0 - lambda).powi(horizon as i32));
                for player in [Player::P1, Player::P2] {
                    let v = solve_discounted_primal(&g, lambda, horizon, player, HorizonCap::default())
                        .unwrap()
                        .value;
                    assert!((v - expect).abs() < 1e-8, "lambda {lambda} T {horizon}: {v} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn players_agree_and_value_is_bounded() {
        for seed in 1..=4u64 {
            let g = random_game(seed);
            let lambda = 0.6;
            for horizon in [1, 2, 3] {
                let v1 = solve_discounted_primal(&g, lambda, horizon, Player::P1, HorizonCap::default())
                    .unwrap()
                    .value;
                let v2 = solve_discounted_primal(&g, lambda, horizon, Player::P2, HorizonCap::default())
                    .unwrap()
                    .value;
                assert!((v1 - v2).abs() < 1e-6, "seed {seed} T {horizon}");
                let cap = (1.0 - (1.0 - lambda).powi(horizon as i32)) * g.max_abs_payoff();
                assert!(v1.abs() <= cap + 1e-9);
            }
        }
    }

    #[test]
    fn pointwise_geometric_decay() {
        for seed in 5..=8u64 {
            let g = random_game(seed);
            let lambda = 0.55;
            let max_m = g.max_abs_payoff();
            let mut prev =
                discounted_value_at(&g, lambda, 1, &g.p0, &g.q0, HorizonCap::default()).unwrap();
            for horizon in 2..=3usize {
                let v = discounted_value_at(&g, lambda, horizon, &g.p0, &g.q0, HorizonCap::default())
                    .unwrap();
                let bound = (1.0 - lambda).powi(horizon as i32 - 1) * max_m;
                assert!(
                    (v - prev).abs() <= bound + 1e-9,
                    "seed {seed} T {horizon}: |{v} - {prev}| > {bound}"
                );
                prev = v;
            }
        }
    }

    #[test]
    fn fenchel_and_zero_dual_at_approx_regrets() {
        for seed in 9..=12u64 {
            let g = random_game(seed);
            let (lambda, horizon) = (0.7, 3);
            let v = solve_discounted_primal(&g, lambda, horizon, Player::P1, HorizonCap::default())
                .unwrap()
                .value;
            let (mu, nu) = approx_initial_regrets(&g, lambda, horizon, HorizonCap::default()).unwrap();
            let via_mu: f64 = -mu.values.iter().zip(&g.p0).map(|(m, p)| m * p).sum::<f64>();
            let via_nu: f64 = -nu.values.iter().zip(&g.q0).map(|(n, q)| n * q).sum::<f64>();
            assert!((via_mu - v).abs() < 1e-6);
            assert!((via_nu - v).abs() < 1e-6);
            let (v2, _) =
                discounted_dual_value_p1(&g, lambda, horizon, &g.p0, &nu.values, HorizonCap::default())
                    .unwrap();
            let (v1, _) =
                discounted_dual_value_p2(&g, lambda, horizon, &mu.values, &g.q0, HorizonCap::default())
                    .unwrap();
            assert!(v2.abs() < 1e-6, "seed {seed}: {v2}");
            assert!(v1.abs() < 1e-6, "seed {seed}: {v1}");
        }
    }

    #[test]
    fn dual_translation_and_forced_play() {
        let g = random_game(20);
        let nu = vec![1.0, -2.0];
        let c = 3.3;
        let shifted: Vec<f64> = nu.iter().map(|v| v + c).collect();
        let (v, _) =
            discounted_dual_value_p1(&g, 0.7, 3, &g.p0, &nu, HorizonCap::default()).unwrap();
        let (vs, _) =
            discounted_dual_value_p1(&g, 0.7, 3, &g.p0, &shifted, HorizonCap::default()).unwrap();
        assert!((vs - (v + c)).abs() < 1e-8);

        // Forced play: single type and single action per side.
        let c0 = -4.0;
        let forced = game(1, 1, 1, 1, |_, _, _, _| c0, vec![1.0], vec![1.0]);
        let nu0 = 2.5;
        for n in [1usize, 3] {
            let (v, _) =
                discounted_dual_value_p1(&forced, 0.7, n, &[1.0], &[nu0], HorizonCap::default())
                    .unwrap();
            let expect = nu0 + c0 * (1.0 - 0.3f64.powi(n as i32));
            assert!((v - expect).abs() < 1e-9, "n {n}: {v} vs {expect}");
        }
    }

    #[test]
    fn anti_discounted_regret_updates() {
        let lambda = 0.7;
        // Pure anti-discounting under a zero payoff tensor.
        let zero = game(1, 1, 2, 2, |_, _, _, _| 0.0, vec![1.0], vec![1.0]);
        let mu = RegretVector::new(Player::P1, vec![-3.0]).unwrap();
        let q = BeliefVector::new(Player::P2, vec![1.0]).unwrap();
        let next = update_regret_discounted(&mu, &q, 0, 0, &zero, lambda).unwrap();
        assert!((next.values[0] - (-3.0 / 0.3)).abs() < 1e-12);

        // Fixed point: constant payoff 10, mu = -10 stays put.
        let tens = game(1, 1, 2, 2, |_, _, _, _| 10.0, vec![1.0], vec![1.0]);
        let mu = RegretVector::new(Player::P1, vec![-10.0]).unwrap();
        let next = update_regret_discounted(&mu, &q, 1, 0, &tens, lambda).unwrap();
        assert!((next.values[0] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_guard_trips() {
        let g = game(1, 1, 2, 2, |_, _, _, _| 0.0, vec![1.0], vec![1.0]);
        let mu = RegretVector::new(Player::P1, vec![9e11]).unwrap();
        let q = BeliefVector::new(Player::P2, vec![1.0]).unwrap();
        let err = update_regret_discounted(&mu, &q, 0, 0, &g, 0.7, ).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn lambda_is_validated_strictly() {
        let g = random_game(30);
        for bad in [0.0, 1.0, -0.5, 1.5] {
            assert!(matches!(
                build_discounted_primal_lp(&g, bad, 2, Player::P1, HorizonCap::default()),
                Err(Error::Input(_))
            ));
        }
    }

    #[test]
    fn episode_stages_match_residual_rule() {
        let g = game(1, 1, 1, 1, |_, _, _, _| 154.4, vec![1.0], vec![1.0]);
        let cfg = DiscountedSolveConfig::new(0.7, 3).unwrap();
        // (0.3)^10 * 154.4 = 9.1e-4 < 1e-3 <= (0.3)^9 * 154.4.
        assert_eq!(cfg.episode_stages(&g), 10);
    }

    #[test]
    fn certificate_interval_is_ordered_and_contains_v() {
        let g = random_game(40);
        let cert =
            error_certificate(&g, 0.7, 3, &g.p0, &g.q0, None, HorizonCap::default()).unwrap();
        assert!(cert.value_interval[0] <= cert.value_interval[1]);
        assert!(cert.v_trunc >= cert.value_interval[0] - 1e-12);
        assert!(cert.v_trunc <= cert.value_interval[1] + 1e-12);
        assert!(cert.sup_bound_v >= 0.0);
    }

    #[test]
    fn stationary_strategy_is_reproducible() {
        let g = random_game(50);
        let (_, nu) = approx_initial_regrets(&g, 0.7, 2, HorizonCap::default()).unwrap();
        let s1 =
            approx_stage_strategy_p1(&g, 0.7, 2, &g.p0, &nu.values, HorizonCap::default()).unwrap();
        let s2 =
            approx_stage_strategy_p1(&g, 0.7, 2, &g.p0, &nu.values, HorizonCap::default()).unwrap();
        assert_eq!(s1.rows, s2.rows);
    }
}
