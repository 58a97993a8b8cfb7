//! Finite-horizon dual games: initial regrets, the dual security LPs, the
//! belief/regret sufficient-statistic updates, and stateful strategy agents
//! that replay a security strategy from the fixed-size statistic alone.
//!
//! Player 1's statistic is `(t, p_t, nu_t)`: the public belief on his own
//! type and his regret on player 2's type. Player 2 symmetrically tracks
//! `(t, mu_t, q_t)`. Either statistic is computable from the player's own
//! strategy and the announced actions, with no knowledge of the opponent's
//! strategy; the agents here recompute their stage strategy from a dual LP
//! at every stage instead of storing anything indexed by histories.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::game::{BeliefVector, GameSpec, HorizonCap, Player, RegretVector};
use crate::lp::{solve_lp_warm, LpProblem, LpStatus, SolverConfig, WarmCache};
use crate::seqform::{build_seq_lp, solve_seq_lp, SeqLpSpec};

/// Marginal probabilities below this are treated as unreachable
/// observations and leave the belief unchanged.
const UNREACHABLE_OBS: f64 = 1e-12;

/// One stage of play for every own type: a probability row over own actions
/// per type (`r` for player 1, `z` for player 2).
#[derive(Debug, Clone, PartialEq)]
pub struct StageStrategy {
    pub rows: Vec<Vec<f64>>,
}

impl StageStrategy {
    pub fn validate(&self) -> Result<()> {
        for (ty, row) in self.rows.iter().enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !(p.is_finite() && p >= -1e-12) {
                    return Err(Error::input(format!("stage strategy row {ty}: negative entry")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!(
                    "stage strategy row {ty} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Marginal action probability under a belief over types.
    pub fn marginal(&self, belief: &[f64], action: usize) -> f64 {
        self.rows.iter().zip(belief).map(|(row, &p)| p * row[action]).sum()
    }
}

/// Player 1's sufficient statistic at a stage: `(t, p_t, nu_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStatisticP1 {
    pub stage: usize,
    pub belief: BeliefVector,
    pub regret: RegretVector,
}

/// Player 2's sufficient statistic at a stage: `(t, mu_t, q_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStatisticP2 {
    pub stage: usize,
    pub regret: RegretVector,
    pub belief: BeliefVector,
}

// ---------------------------------------------------------------------------
// Initial regrets
// ---------------------------------------------------------------------------

/// Initial regret on player 1's types: the negated optimal stage-0 payoffs
/// `-w_{:,0}` of player 2's finite-horizon security LP. One entry per type
/// in `K`; this is what player 2's agent is initialized with.
pub fn initial_regret_mu(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<RegretVector> {
    let spec = SeqLpSpec {
        role: Player::P2,
        horizon,
        root: &game.q0,
        discount: None,
        dual_regret: None,
        opp_weights: None,
    };
    let (solution, layout) = solve_seq_lp(game, &spec, cap)?;
    let values = layout.u0_from_point(&solution.point).iter().map(|w| -w).collect();
    RegretVector::new(Player::P1, values)
}

/// Initial regret on player 2's types: `-u_{:,0}` of player 1's LP. One
/// entry per type in `L`; player 1's agent is initialized with this.
pub fn initial_regret_nu(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<RegretVector> {
    let spec = SeqLpSpec {
        role: Player::P1,
        horizon,
        root: &game.p0,
        discount: None,
        dual_regret: None,
        opp_weights: None,
    };
    let (solution, layout) = solve_seq_lp(game, &spec, cap)?;
    let values = layout.u0_from_point(&solution.point).iter().map(|u| -u).collect();
    RegretVector::new(Player::P2, values)
}

// ---------------------------------------------------------------------------
// Dual LPs and stage strategies
// ---------------------------------------------------------------------------

/// Player 1's `n`-stage dual LP at `(p_t, nu_t)`: his security program
/// rooted at `p_t`, plus a scalar epigraph variable dominated by the
/// regret-shifted stage-0 payoffs. The optimum is the dual-game value.
pub fn build_dual_lp_p1(
    game: &GameSpec,
    n: usize,
    belief: &[f64],
    regret: &[f64],
    cap: HorizonCap,
) -> Result<LpProblem> {
    let spec = SeqLpSpec {
        role: Player::P1,
        horizon: n,
        root: belief,
        discount: None,
        dual_regret: Some(regret),
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// Player 2's `n`-stage dual LP at `(mu_t, q_t)`, the mirror program.
pub fn build_dual_lp_p2(
    game: &GameSpec,
    n: usize,
    regret: &[f64],
    belief: &[f64],
    cap: HorizonCap,
) -> Result<LpProblem> {
    let spec = SeqLpSpec {
        role: Player::P2,
        horizon: n,
        root: belief,
        discount: None,
        dual_regret: Some(regret),
        opp_weights: None,
    };
    Ok(build_seq_lp(game, &spec, cap)?.0)
}

/// Everything an agent needs from one dual-LP solve: the stage-1 mix plus
/// the optimal continuation variables at the stage-1 history. The latter
/// drive the agents' regret updates: after announcing `(a, b)`, the
/// per-unit-mass continuation promise `u*[opp_type][(a,b)] / marginal`
/// (negated) is the regret the re-rooted dual game must be solved at for
/// the security guarantee to telescope.
pub(crate) struct StagePolicy {
    pub value: f64,
    pub mix: Arc<StageStrategy>,
    /// `u*` (or `w*`) at stage 1, indexed `opp_type * cells + (a*|B| + b)`;
    /// empty when the program has a single stage.
    pub child_promises: Vec<f64>,
}

pub(crate) fn solve_dual(
    game: &GameSpec,
    role: Player,
    n: usize,
    belief: &[f64],
    regret: &[f64],
    discount: Option<f64>,
    cap: HorizonCap,
    warm: Option<&mut Option<WarmCache>>,
) -> Result<StagePolicy> {
    let spec = SeqLpSpec { role, horizon: n, root: belief, discount, dual_regret: Some(regret), opp_weights: None };
    let (lp, layout) = build_seq_lp(game, &spec, cap)?;
    let cfg = SolverConfig::default();
    let mut own_cache: Option<WarmCache> = None;
    let cache = warm.unwrap_or(&mut own_cache);
    let solution = solve_lp_warm(&lp, &cfg, cache)?;
    if solution.status != LpStatus::Optimal {
        return Err(Error::solver(format!(
            "dual LP unexpectedly {:?} ({role} horizon {n})",
            solution.status
        )));
    }
    let rows = layout.stage1_rows(belief, &solution.point);
    let n_opp = match role {
        Player::P1 => game.num_l(),
        Player::P2 => game.num_k(),
    };
    let cells = game.num_a() * game.num_b();
    let mut child_promises = Vec::new();
    if n >= 2 {
        child_promises.reserve(n_opp * cells);
        for opp in 0..n_opp {
            for cell in 0..cells {
                child_promises.push(solution.point[layout.u_index(1, opp, 0, cell)]);
            }
        }
    }
    Ok(StagePolicy { value: solution.value, mix: Arc::new(StageStrategy { rows }), child_promises })
}

/// Value and stage-1 strategy of player 1's `n`-stage dual game at
/// `(p_t, nu_t)`. Types with zero belief weight get the uniform row.
pub fn dual_stage_strategy_p1(
    game: &GameSpec,
    n: usize,
    belief: &[f64],
    regret: &[f64],
    cap: HorizonCap,
) -> Result<(f64, StageStrategy)> {
    let out = solve_dual(game, Player::P1, n, belief, regret, None, cap, None)?;
    Ok((out.value, (*out.mix).clone()))
}

/// Value and stage-1 strategy of player 2's `n`-stage dual game at
/// `(mu_t, q_t)`.
pub fn dual_stage_strategy_p2(
    game: &GameSpec,
    n: usize,
    regret: &[f64],
    belief: &[f64],
    cap: HorizonCap,
) -> Result<(f64, StageStrategy)> {
    let out = solve_dual(game, Player::P2, n, belief, regret, None, cap, None)?;
    Ok((out.value, (*out.mix).clone()))
}

// ---------------------------------------------------------------------------
// Sufficient-statistic updates
// ---------------------------------------------------------------------------

/// Bayes update of a player's belief on his own type after announcing
/// `observed`: `p^k r^k(a) / rbar(a)`. If the marginal is (numerically)
/// zero the observation was unreachable under `stage` and the prior is
/// kept unchanged.
pub fn update_belief(
    belief: &BeliefVector,
    stage: &StageStrategy,
    observed: usize,
) -> Result<BeliefVector> {
    if stage.rows.len() != belief.probs.len() {
        return Err(Error::input(format!(
            "belief update: {} stage rows for {} types",
            stage.rows.len(),
            belief.probs.len()
        )));
    }
    if stage.rows.iter().any(|row| observed >= row.len()) {
        return Err(Error::input("belief update: observed action out of range"));
    }
    let marginal = stage.marginal(&belief.probs, observed);
    if marginal <= UNREACHABLE_OBS {
        return Ok(belief.clone());
    }
    let probs = belief
        .probs
        .iter()
        .zip(&stage.rows)
        .map(|(&p, row)| p * row[observed] / marginal)
        .collect();
    BeliefVector::new(belief.owner, probs)
}

/// Finite-horizon regret update: add the posterior-weighted realized stage
/// payoff per type. A regret about player 1's types pairs with the updated
/// belief on player 2's type (and vice versa).
pub fn update_regret_finite(
    regret: &RegretVector,
    belief_next: &BeliefVector,
    a: usize,
    b: usize,
    game: &GameSpec,
) -> Result<RegretVector> {
    let values = regret_step(regret, belief_next, a, b, game)?;
    let values = regret.values.iter().zip(values).map(|(r, dv)| r + dv).collect();
    RegretVector::new(regret.about, values)
}

/// Per-type expected stage payoff under the posterior on the other side.
pub(crate) fn regret_step(
    regret: &RegretVector,
    belief_next: &BeliefVector,
    a: usize,
    b: usize,
    game: &GameSpec,
) -> Result<Vec<f64>> {
    if a >= game.num_a() || b >= game.num_b() {
        return Err(Error::input("regret update: action out of range"));
    }
    match regret.about {
        Player::P1 => {
            if belief_next.owner != Player::P2
                || belief_next.probs.len() != game.num_l()
                || regret.values.len() != game.num_k()
            {
                return Err(Error::input(
                    "regret update: mu pairs with a belief on player 2's type",
                ));
            }
            Ok((0..game.num_k())
                .map(|k| {
                    (0..game.num_l())
                        .map(|l| belief_next.probs[l] * game.payoff(k, l, a, b))
                        .sum()
                })
                .collect())
        }
        Player::P2 => {
            if belief_next.owner != Player::P1
                || belief_next.probs.len() != game.num_k()
                || regret.values.len() != game.num_l()
            {
                return Err(Error::input(
                    "regret update: nu pairs with a belief on player 1's type",
                ));
            }
            Ok((0..game.num_l())
                .map(|l| {
                    (0..game.num_k())
                        .map(|k| belief_next.probs[k] * game.payoff(k, l, a, b))
                        .sum()
                })
                .collect())
        }
    }
}

/// Statistic transition shared by all agents: after the agent announced
/// its part of `(a, b)` under `policy`, return the next regret vector.
///
/// On-path (positive own-action marginal) the next regret is read off the
/// dual LP's optimal continuation variables, `-u*[opp][(a,b)] / marginal`,
/// which keeps the re-rooted dual game's value nonnegative and thereby
/// preserves the security guarantee stage by stage. Off-path subtrees
/// carry no realization mass, so the regret there is value-irrelevant; the
/// additive posterior-weighted stage payoff is used for determinism,
/// clamped to `clamp`.
pub(crate) fn promise_regret_update(
    game: &GameSpec,
    role: Player,
    policy: &StagePolicy,
    belief_before: &[f64],
    regret: &[f64],
    posterior: &[f64],
    a: usize,
    b: usize,
    discount: Option<f64>,
    clamp: f64,
) -> Vec<f64> {
    let own_action = match role {
        Player::P1 => a,
        Player::P2 => b,
    };
    let marginal = policy.mix.marginal(belief_before, own_action);
    let cells = game.num_a() * game.num_b();
    let cell = a * game.num_b() + b;
    let n_opp = regret.len();
    if marginal > crate::seqform::UNREACHABLE_WEIGHT && !policy.child_promises.is_empty() {
        return (0..n_opp)
            .map(|opp| -policy.child_promises[opp * cells + cell] / marginal)
            .collect();
    }
    let step = |opp: usize| -> f64 {
        match role {
            Player::P1 => {
                (0..game.num_k()).map(|k| posterior[k] * game.payoff(k, opp, a, b)).sum()
            }
            Player::P2 => {
                (0..game.num_l()).map(|l| posterior[l] * game.payoff(opp, l, a, b)).sum()
            }
        }
    };
    (0..n_opp)
        .map(|opp| {
            let v = match discount {
                None => regret[opp] + step(opp),
                Some(lambda) => (regret[opp] + lambda * step(opp)) / (1.0 - lambda),
            };
            v.clamp(-clamp, clamp)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Strategy caches shared by agent clones
// ---------------------------------------------------------------------------

#[derive(PartialEq, Eq, Hash)]
struct StatKey {
    n: usize,
    bits: Vec<u64>,
}

impl StatKey {
    fn new(n: usize, belief: &[f64], regret: &[f64]) -> Self {
        let bits = belief.iter().chain(regret).map(|v| v.to_bits()).collect();
        StatKey { n, bits }
    }
}

/// Memo of statistic -> stage policy, shared across the clones of one
/// agent so that repeated and parallel episodes never re-solve the same
/// dual LP. Also keeps one warm-start basis per LP horizon, which makes
/// nearby statistics (same matrix, new right-hand side) nearly free.
pub(crate) struct StrategyCache {
    map: Mutex<HashMap<StatKey, Arc<StagePolicy>>>,
    warm: Mutex<HashMap<usize, WarmCache>>,
}

impl StrategyCache {
    pub fn new() -> Arc<Self> {
        Arc::new(StrategyCache { map: Mutex::new(HashMap::new()), warm: Mutex::new(HashMap::new()) })
    }

    pub fn get_or_solve(
        &self,
        n: usize,
        belief: &[f64],
        regret: &[f64],
        solve: impl FnOnce(&mut Option<WarmCache>) -> Result<StagePolicy>,
    ) -> Result<Arc<StagePolicy>> {
        let key = StatKey::new(n, belief, regret);
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let mut warm = self.warm.lock().unwrap().get(&n).cloned();
        let policy = Arc::new(solve(&mut warm)?);
        if let Some(w) = warm {
            self.warm.lock().unwrap().insert(n, w);
        }
        self.map.lock().unwrap().insert(key, policy.clone());
        Ok(policy)
    }
}

// ---------------------------------------------------------------------------
// Finite-horizon agents
// ---------------------------------------------------------------------------

/// Player 1's finite-horizon security strategy agent. Holds `(t, p_t,
/// nu_t)`, recomputes the dual stage strategy with horizon `T+1-t` each
/// stage, and updates the statistic from the announced actions.
#[derive(Clone)]
pub struct FiniteAgentP1 {
    game: Arc<GameSpec>,
    horizon: usize,
    cap: HorizonCap,
    t: usize,
    belief: Vec<f64>,
    regret: Vec<f64>,
    pending: Option<Arc<StagePolicy>>,
    cache: Arc<StrategyCache>,
    initial: (Vec<f64>, Vec<f64>),
}

impl FiniteAgentP1 {
    pub fn new(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<Self> {
        cap.check(horizon)?;
        let nu = initial_regret_nu(game, horizon, cap)?;
        Ok(FiniteAgentP1 {
            game: Arc::new(game.clone()),
            horizon,
            cap,
            t: 1,
            belief: game.p0.clone(),
            regret: nu.values.clone(),
            pending: None,
            cache: StrategyCache::new(),
            initial: (game.p0.clone(), nu.values),
        })
    }

    pub fn statistic(&self) -> SufficientStatisticP1 {
        SufficientStatisticP1 {
            stage: self.t,
            belief: BeliefVector { owner: Player::P1, probs: self.belief.clone() },
            regret: RegretVector { about: Player::P2, values: self.regret.clone() },
        }
    }

    pub fn is_done(&self) -> bool {
        self.t > self.horizon
    }

    /// Current stage strategy (all types), from the `T+1-t`-stage dual LP
    /// at the current statistic.
    pub fn stage_mix(&mut self) -> Result<Arc<StageStrategy>> {
        Ok(self.policy()?.mix.clone())
    }

    fn policy(&mut self) -> Result<Arc<StagePolicy>> {
        if self.is_done() {
            return Err(Error::protocol(format!(
                "player 1 agent is terminal after stage {}",
                self.horizon
            )));
        }
        if let Some(policy) = &self.pending {
            return Ok(policy.clone());
        }
        let n = self.horizon + 1 - self.t;
        let (game, cap) = (self.game.clone(), self.cap);
        let (belief, regret) = (self.belief.clone(), self.regret.clone());
        let policy = self.cache.get_or_solve(n, &belief, &regret, |warm| {
            solve_dual(&game, Player::P1, n, &belief, &regret, None, cap, Some(warm))
        })?;
        self.pending = Some(policy.clone());
        Ok(policy)
    }

    /// Record the announced actions, updating belief then regret.
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
            None,
            f64::INFINITY,
        );
        self.belief = next_belief.probs;
        self.regret = next_regret;
        self.t += 1;
        Ok(())
    }

    /// Back to stage 1; the memoized strategies survive.
    pub fn reset(&mut self) {
        self.t = 1;
        self.belief = self.initial.0.clone();
        self.regret = self.initial.1.clone();
        self.pending = None;
    }
}

/// Player 2's finite-horizon security strategy agent, tracking
/// `(t, mu_t, q_t)`.
#[derive(Clone)]
pub struct FiniteAgentP2 {
    game: Arc<GameSpec>,
    horizon: usize,
    cap: HorizonCap,
    t: usize,
    regret: Vec<f64>,
    belief: Vec<f64>,
    pending: Option<Arc<StagePolicy>>,
    cache: Arc<StrategyCache>,
    initial: (Vec<f64>, Vec<f64>),
}

impl FiniteAgentP2 {
    pub fn new(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<Self> {
        cap.check(horizon)?;
        let mu = initial_regret_mu(game, horizon, cap)?;
        Ok(FiniteAgentP2 {
            game: Arc::new(game.clone()),
            horizon,
            cap,
            t: 1,
            regret: mu.values.clone(),
            belief: game.q0.clone(),
            pending: None,
            cache: StrategyCache::new(),
            initial: (mu.values, game.q0.clone()),
        })
    }

    pub fn statistic(&self) -> SufficientStatisticP2 {
        SufficientStatisticP2 {
            stage: self.t,
            regret: RegretVector { about: Player::P1, values: self.regret.clone() },
            belief: BeliefVector { owner: Player::P2, probs: self.belief.clone() },
        }
    }

    pub fn is_done(&self) -> bool {
        self.t > self.horizon
    }

    pub fn stage_mix(&mut self) -> Result<Arc<StageStrategy>> {
        Ok(self.policy()?.mix.clone())
    }

    fn policy(&mut self) -> Result<Arc<StagePolicy>> {
        if self.is_done() {
            return Err(Error::protocol(format!(
                "player 2 agent is terminal after stage {}",
                self.horizon
            )));
        }
        if let Some(policy) = &self.pending {
            return Ok(policy.clone());
        }
        let n = self.horizon + 1 - self.t;
        let (game, cap) = (self.game.clone(), self.cap);
        let (belief, regret) = (self.belief.clone(), self.regret.clone());
        let policy = self.cache.get_or_solve(n, &belief, &regret, |warm| {
            solve_dual(&game, Player::P2, n, &belief, &regret, None, cap, Some(warm))
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
            None,
            f64::INFINITY,
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

/// Algorithm-style constructor for player 1's sufficient-statistic agent.
pub fn make_agent_p1(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<FiniteAgentP1> {
    FiniteAgentP1::new(game, horizon, cap)
}

/// Algorithm-style constructor for player 2's sufficient-statistic agent.
pub fn make_agent_p2(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<FiniteAgentP2> {
    FiniteAgentP2::new(game, horizon, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqform::solve_primal;

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

    fn random_game(seed: u64, nk: usize, nl: usize, na: usize, nb: usize) -> GameSpec {
        let mut rng = TestRng(seed);
        let mut vals = vec![0.0; nk * nl * na * nb];
        for v in vals.iter_mut() {
            *v = (rng.next_f64() - 0.5) * 20.0;
        }
        let mut p0: Vec<f64> = (0..nk).map(|_| 0.1 + rng.next_f64()).collect();
        let mut q0: Vec<f64> = (0..nl).map(|_| 0.1 + rng.next_f64()).collect();
        let ps: f64 = p0.iter().sum();
        let qs: f64 = q0.iter().sum();
        p0.iter_mut().for_each(|v| *v /= ps);
        q0.iter_mut().for_each(|v| *v /= qs);
        game(nk, nl, na, nb, |k, l, a, b| vals[((k * nl + l) * na + a) * nb + b], p0, q0)
    }

    #[test]
    fn zero_tensor_gives_zero_regrets() {
        let g = game(2, 2, 2, 2, |_, _, _, _| 0.0, vec![0.5, 0.5], vec![0.5, 0.5]);
        let mu = initial_regret_mu(&g, 2, HorizonCap::default()).unwrap();
        let nu = initial_regret_nu(&g, 2, HorizonCap::default()).unwrap();
        assert!(mu.values.iter().all(|v| v.abs() < 1e-9));
        assert!(nu.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn fenchel_identities_on_random_games() {
        for seed in 1..=5u64 {
            let g = random_game(seed, 2, 2, 2, 2);
            let v = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap().game_value;
            let mu = initial_regret_mu(&g, 2, HorizonCap::default()).unwrap();
            let nu = initial_regret_nu(&g, 2, HorizonCap::default()).unwrap();
            let via_mu: f64 = -mu.values.iter().zip(&g.p0).map(|(m, p)| m * p).sum::<f64>();
            let via_nu: f64 = -nu.values.iter().zip(&g.q0).map(|(n, q)| n * q).sum::<f64>();
            assert!((via_mu - v).abs() < 1e-6, "seed {seed}: {via_mu} vs {v}");
            assert!((via_nu - v).abs() < 1e-6, "seed {seed}: {via_nu} vs {v}");
        }
    }

    #[test]
    fn zero_dual_value_at_star_regrets() {
        for seed in 11..=14u64 {
            let g = random_game(seed, 2, 3, 2, 2);
            let mu = initial_regret_mu(&g, 2, HorizonCap::default()).unwrap();
            let nu = initial_regret_nu(&g, 2, HorizonCap::default()).unwrap();
            let (v2, _) =
                dual_stage_strategy_p1(&g, 2, &g.p0, &nu.values, HorizonCap::default()).unwrap();
            let (v1, _) =
                dual_stage_strategy_p2(&g, 2, &mu.values, &g.q0, HorizonCap::default()).unwrap();
            assert!(v2.abs() < 1e-6, "seed {seed}: V~2 = {v2}");
            assert!(v1.abs() < 1e-6, "seed {seed}: V~1 = {v1}");
        }
    }

    #[test]
    fn dual_value_translation_equivariance() {
        let g = random_game(21, 2, 2, 2, 2);
        let nu = vec![-1.5, 2.25];
        let c = 13.7;
        let shifted: Vec<f64> = nu.iter().map(|v| v + c).collect();
        let (v, _) = dual_stage_strategy_p1(&g, 2, &g.p0, &nu, HorizonCap::default()).unwrap();
        let (vs, _) = dual_stage_strategy_p1(&g, 2, &g.p0, &shifted, HorizonCap::default()).unwrap();
        assert!((vs - (v + c)).abs() < 1e-8, "{vs} vs {}", v + c);
        let mu = vec![0.5, -0.75];
        let shifted: Vec<f64> = mu.iter().map(|v| v + c).collect();
        let (v, _) = dual_stage_strategy_p2(&g, 2, &mu, &g.q0, HorizonCap::default()).unwrap();
        let (vs, _) = dual_stage_strategy_p2(&g, 2, &shifted, &g.q0, HorizonCap::default()).unwrap();
        assert!((vs - (v + c)).abs() < 1e-8);
    }

    #[test]
    fn one_stage_single_type_dual_matches_analytic_oracle() {
        // |K| = 1: the dual value at nu = 0 is the maxmin of the matrix
        // whose columns are (l, b) pairs. With |A| = 2 this is a 1-D
        // piecewise-linear maximization, solved here from candidate
        // crossing points.
        let g = game(
            1,
            2,
            2,
            2,
            |_, l, a, b| [[3.0, -1.0], [0.0, 2.0], [1.0, 1.5], [-2.0, 4.0]][l * 2 + b][a],
            vec![1.0],
            vec![0.5, 0.5],
        );
        let cols: Vec<[f64; 2]> = (0..4)
            .map(|c| [[3.0, -1.0], [0.0, 2.0], [1.0, 1.5], [-2.0, 4.0]][c])
            .collect();
        let eval = |x: f64| -> f64 {
            cols.iter().map(|col| x * col[0] + (1.0 - x) * col[1]).fold(f64::INFINITY, f64::min)
        };
        let mut candidates = vec![0.0, 1.0];
        for i in 0..4 {
            for j in i + 1..4 {
                let denom = (cols[i][0] - cols[i][1]) - (cols[j][0] - cols[j][1]);
                if denom.abs() > 1e-12 {
                    let x = (cols[j][1] - cols[i][1]) / denom;
                    if (0.0..=1.0).contains(&x) {
                        candidates.push(x);
                    }
                }
            }
        }
        let oracle = candidates.iter().map(|&x| eval(x)).fold(f64::NEG_INFINITY, f64::max);
        let (v, _) =
            dual_stage_strategy_p1(&g, 1, &[1.0], &[0.0, 0.0], HorizonCap::default()).unwrap();
        assert!((v - oracle).abs() < 1e-9, "dual {v} vs oracle {oracle}");
    }

    #[test]
    fn single_own_action_forces_point_mass() {
        let g = game(2, 2, 1, 2, |k, l, _, b| (k + l + b) as f64, vec![0.5, 0.5], vec![0.5, 0.5]);
        let (_, stage) =
            dual_stage_strategy_p1(&g, 2, &g.p0, &[0.0, 0.0], HorizonCap::default()).unwrap();
        for row in &stage.rows {
            assert_eq!(row, &vec![1.0]);
        }
    }

    #[test]
    fn bayes_update_examples() {
        let q = BeliefVector::new(Player::P2, vec![0.5, 0.5]).unwrap();
        // Identical mixes: posterior equals prior.
        let same = StageStrategy { rows: vec![vec![0.3, 0.7], vec![0.3, 0.7]] };
        let post = update_belief(&q, &same, 1).unwrap();
        assert!((post.probs[0] - 0.5).abs() < 1e-12);
        // Perfectly revealing.
        let revealing = StageStrategy { rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        let post = update_belief(&q, &revealing, 0).unwrap();
        assert_eq!(post.probs, vec![1.0, 0.0]);
        // Direct Bayes: [0.5*0.8, 0.5*0.4] normalized = [2/3, 1/3].
        let mixed = StageStrategy { rows: vec![vec![0.8, 0.2], vec![0.4, 0.6]] };
        let post = update_belief(&q, &mixed, 0).unwrap();
        assert!((post.probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((post.probs[1] - 1.0 / 3.0).abs() < 1e-12);
        // Unreachable observation keeps the prior.
        let degenerate = StageStrategy { rows: vec![vec![1.0, 0.0], vec![1.0, 0.0]] };
        let post = update_belief(&q, &degenerate, 1).unwrap();
        assert_eq!(post.probs, q.probs);
    }

    #[test]
    fn regret_update_examples() {
        let g = game(2, 1, 2, 2, |_, _, _, _| 4.5, vec![0.5, 0.5], vec![1.0]);
        let mu = RegretVector::new(Player::P1, vec![-1.0, 2.0]).unwrap();
        let q_next = BeliefVector::new(Player::P2, vec![1.0]).unwrap();
        let next = update_regret_finite(&mu, &q_next, 0, 1, &g).unwrap();
        assert!((next.values[0] - 3.5).abs() < 1e-12);
        assert!((next.values[1] - 6.5).abs() < 1e-12);

        let zero = game(2, 2, 2, 2, |_, _, _, _| 0.0, vec![0.5, 0.5], vec![0.5, 0.5]);
        let nu = RegretVector::new(Player::P2, vec![1.25, -0.5]).unwrap();
        let p_next = BeliefVector::new(Player::P1, vec![0.25, 0.75]).unwrap();
        let next = update_regret_finite(&nu, &p_next, 1, 0, &zero).unwrap();
        assert_eq!(next.values, nu.values);
    }

    #[test]
    fn agent_protocol_errors() {
        let g = random_game(31, 2, 2, 2, 2);
        let mut agent = make_agent_p1(&g, 2, HorizonCap::default()).unwrap();
        // Observe before any act.
        assert!(matches!(agent.observe(0, 0), Err(Error::Protocol(_))));
        for _ in 0..2 {
            agent.stage_mix().unwrap();
            agent.observe(0, 0).unwrap();
        }
        assert!(agent.is_done());
        assert!(matches!(agent.stage_mix(), Err(Error::Protocol(_))));
    }

    #[test]
    fn one_stage_agent_plays_the_dual_strategy() {
        let g = random_game(37, 2, 2, 2, 2);
        let nu = initial_regret_nu(&g, 1, HorizonCap::default()).unwrap();
        let (_, direct) =
            dual_stage_strategy_p1(&g, 1, &g.p0, &nu.values, HorizonCap::default()).unwrap();
        let mut agent = make_agent_p1(&g, 1, HorizonCap::default()).unwrap();
        let mix = agent.stage_mix().unwrap();
        assert_eq!(mix.rows, direct.rows);
    }
}
