//! Monte-Carlo play of strategy agents, exact best-response evaluation of
//! fixed plans, and materialization of sufficient-statistic agents into
//! full behavior strategies.
//!
//! Episodes are reproducible: the per-episode generator is SplitMix64
//! seeded with the base seed XOR the episode index, and all draws happen
//! in a fixed order (player 1's type, player 2's type, then `a_t` before
//! `b_t` at every stage). Episodes are independent, so the harness runs
//! them on multiple threads; records are collected by episode index and
//! reduced with compensated summation, making every summary independent
//! of scheduling.

use std::sync::Arc;
use std::thread;

use serde::Serialize;

use crate::discounted::{DiscountedAgentP1, DiscountedAgentP2};
use crate::dual::{FiniteAgentP1, FiniteAgentP2, StageStrategy};
use crate::error::{Error, Result};
use crate::game::{enumerate_histories, GameSpec, HistoryIndex, HorizonCap, Player};
use crate::rng::SplitMix64;
use crate::seqform::{weighted_security_payoffs, BehaviorStrategy, RealizationPlan};

// ---------------------------------------------------------------------------
// Payoff weighting and episode records
// ---------------------------------------------------------------------------

/// How stage payoffs aggregate into an episode total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffWeights {
    /// Plain sum over stages.
    Finite,
    /// `lambda * (1-lambda)^(t-1)` per stage.
    Discounted { lambda: f64 },
}

impl PayoffWeights {
    pub fn weight(&self, stage: usize) -> f64 {
        match *self {
            PayoffWeights::Finite => 1.0,
            PayoffWeights::Discounted { lambda } => {
                lambda * (1.0 - lambda).powi(stage as i32 - 1)
            }
        }
    }
}

/// One played stage: the announced actions and the raw stage payoff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub a: usize,
    pub b: usize,
    pub payoff: f64,
}

/// One full episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub k: usize,
    pub l: usize,
    pub stages: Vec<StageOutcome>,
    /// Weighted total of the stage payoffs.
    pub total: f64,
}

/// Aggregate statistics over the episode totals.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub episodes: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub batch_means: Vec<f64>,
}

impl SimulationSummary {
    pub fn standard_error(&self) -> f64 {
        if self.episodes > 1 {
            self.std_dev / (self.episodes as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Compensated (Neumaier) summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

fn summarize(totals: &[f64], batches: usize) -> SimulationSummary {
    let n = totals.len();
    let mean = compensated_sum(totals.iter().copied()) / n as f64;
    let var = if n > 1 {
        compensated_sum(totals.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let batches = batches.max(1).min(n);
    let chunk = n.div_ceil(batches);
    let batch_means = totals
        .chunks(chunk)
        .map(|c| compensated_sum(c.iter().copied()) / c.len() as f64)
        .collect();
    SimulationSummary { episodes: n, mean, std_dev: var.sqrt(), min, max, batch_means }
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

/// A per-episode player: told its own type once per stage when asked to
/// act, then shown both announced actions.
pub trait Agent: Send {
    /// Return to the initial state for a fresh episode.
    fn reset(&mut self);
    /// Sample an action for the given own type.
    fn act(&mut self, own_type: usize, rng: &mut SplitMix64) -> Result<usize>;
    /// Record the pair of announced actions.
    fn observe(&mut self, a: usize, b: usize) -> Result<()>;
    fn clone_box(&self) -> Box<dyn Agent>;
}

impl Clone for Box<dyn Agent> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

fn sample_row(row: &[f64], rng: &mut SplitMix64) -> usize {
    rng.sample(row)
}

/// Plays a fixed sequence-form behavior strategy by tracking the current
/// history node.
#[derive(Clone)]
pub struct SeqFormAgent {
    strategy: Arc<BehaviorStrategy>,
    hist: HistoryIndex,
    n_act: usize,
    t: usize,
    h: usize,
}

impl SeqFormAgent {
    pub fn new(game: &GameSpec, strategy: BehaviorStrategy) -> Result<Self> {
        let n_act = match strategy.owner {
            Player::P1 => game.num_a(),
            Player::P2 => game.num_b(),
        };
        let hist = enumerate_histories(game, strategy.horizon, HorizonCap::new(strategy.horizon))?;
        Ok(SeqFormAgent { strategy: Arc::new(strategy), hist, n_act, t: 1, h: 0 })
    }
}

impl Agent for SeqFormAgent {
    fn reset(&mut self) {
        self.t = 1;
        self.h = 0;
    }

    fn act(&mut self, own_type: usize, rng: &mut SplitMix64) -> Result<usize> {
        if self.t > self.strategy.horizon {
            return Err(Error::protocol(format!(
                "sequence-form agent past its horizon {}",
                self.strategy.horizon
            )));
        }
        let base = (own_type * self.hist.count(self.t) + self.h) * self.n_act;
        let row = &self.strategy.stages[self.t - 1][base..base + self.n_act];
        Ok(sample_row(row, rng))
    }

    fn observe(&mut self, a: usize, b: usize) -> Result<()> {
        self.h = self.hist.child(self.h, a, b);
        self.t += 1;
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Uniform play over own actions; useful as an adversarial baseline.
#[derive(Clone)]
pub struct UniformAgent {
    pub n_actions: usize,
}

impl Agent for UniformAgent {
    fn reset(&mut self) {}

    fn act(&mut self, _own_type: usize, rng: &mut SplitMix64) -> Result<usize> {
        Ok((rng.next_f64() * self.n_actions as f64) as usize % self.n_actions)
    }

    fn observe(&mut self, _a: usize, _b: usize) -> Result<()> {
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Optimizes the current-stage expected payoff against the opponent's
/// prior and a uniform opponent mix; deterministic, ignores history.
#[derive(Clone)]
pub struct GreedyMyopicAgent {
    game: Arc<GameSpec>,
    role: Player,
}

impl GreedyMyopicAgent {
    pub fn new(game: &GameSpec, role: Player) -> Self {
        GreedyMyopicAgent { game: Arc::new(game.clone()), role }
    }
}

impl Agent for GreedyMyopicAgent {
    fn reset(&mut self) {}

    fn act(&mut self, own_type: usize, _rng: &mut SplitMix64) -> Result<usize> {
        let g = &self.game;
        match self.role {
            Player::P1 => {
                let k = own_type;
                let mut best = (0usize, f64::NEG_INFINITY);
                for a in 0..g.num_a() {
                    let mut v = 0.0;
                    for l in 0..g.num_l() {
                        for b in 0..g.num_b() {
                            v += g.q0[l] * g.payoff(k, l, a, b) / g.num_b() as f64;
                        }
                    }
                    if v > best.1 {
                        best = (a, v);
                    }
                }
                Ok(best.0)
            }
            Player::P2 => {
                let l = own_type;
                let mut best = (0usize, f64::INFINITY);
                for b in 0..g.num_b() {
                    let mut v = 0.0;
                    for k in 0..g.num_k() {
                        for a in 0..g.num_a() {
                            v += g.p0[k] * g.payoff(k, l, a, b) / g.num_a() as f64;
                        }
                    }
                    if v < best.1 {
                        best = (b, v);
                    }
                }
                Ok(best.0)
            }
        }
    }

    fn observe(&mut self, _a: usize, _b: usize) -> Result<()> {
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Announces its own type through its first action, then plays uniformly;
/// the worst case for belief-based exploitation.
#[derive(Clone)]
pub struct TypeRevealingAgent {
    pub n_actions: usize,
    t: usize,
}

impl TypeRevealingAgent {
    pub fn new(n_actions: usize) -> Self {
        TypeRevealingAgent { n_actions, t: 1 }
    }
}

impl Agent for TypeRevealingAgent {
    fn reset(&mut self) {
        self.t = 1;
    }

    fn act(&mut self, own_type: usize, rng: &mut SplitMix64) -> Result<usize> {
        if self.t == 1 {
            Ok(own_type % self.n_actions)
        } else {
            Ok((rng.next_f64() * self.n_actions as f64) as usize % self.n_actions)
        }
    }

    fn observe(&mut self, _a: usize, _b: usize) -> Result<()> {
        self.t += 1;
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

macro_rules! impl_agent_for_statistic_agent {
    ($ty:ty) => {
        impl Agent for $ty {
            fn reset(&mut self) {
                <$ty>::reset(self)
            }

            fn act(&mut self, own_type: usize, rng: &mut SplitMix64) -> Result<usize> {
                let mix = self.stage_mix()?;
                Ok(sample_row(&mix.rows[own_type], rng))
            }

            fn observe(&mut self, a: usize, b: usize) -> Result<()> {
                <$ty>::observe(self, a, b)
            }

            fn clone_box(&self) -> Box<dyn Agent> {
                Box::new(self.clone())
            }
        }
    };
}

impl_agent_for_statistic_agent!(FiniteAgentP1);
impl_agent_for_statistic_agent!(FiniteAgentP2);
impl_agent_for_statistic_agent!(DiscountedAgentP1);
impl_agent_for_statistic_agent!(DiscountedAgentP2);

// ---------------------------------------------------------------------------
// Episode harness
// ---------------------------------------------------------------------------

/// Simulation shape: how many episodes, how many stages each, how stage
/// payoffs are weighted, and how many batches the summary reports.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub episodes: usize,
    pub stages: usize,
    pub weights: PayoffWeights,
    pub batches: usize,
}

/// Play `spec.episodes` independent episodes of `agent1` vs `agent2`.
///
/// Deterministic given the seed: episode `i` draws from
/// `SplitMix64(seed ^ i)` only. Thread-level parallelism never changes
/// the records or the summary.
pub fn run_episodes(
    game: &GameSpec,
    agent1: &dyn Agent,
    agent2: &dyn Agent,
    spec: &EpisodeSpec,
    seed: u64,
) -> Result<(SimulationSummary, Vec<EpisodeRecord>)> {
    if spec.episodes == 0 {
        return Err(Error::input("episodes must be at least 1"));
    }
    if spec.stages == 0 {
        return Err(Error::input("stages must be at least 1"));
    }
    let threads = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let threads = threads.min(spec.episodes);
    let mut records: Vec<Option<EpisodeRecord>> = vec![None; spec.episodes];

    if threads <= 1 {
        let mut a1 = agent1.clone_box();
        let mut a2 = agent2.clone_box();
        for (ep, slot) in records.iter_mut().enumerate() {
            *slot = Some(play_episode(game, a1.as_mut(), a2.as_mut(), spec, seed, ep as u64)?);
        }
    } else {
        let chunk = spec.episodes.div_ceil(threads);
        let results: Vec<Result<Vec<(usize, EpisodeRecord)>>> = thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..threads {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(spec.episodes);
                if lo >= hi {
                    break;
                }
                let mut a1 = agent1.clone_box();
                let mut a2 = agent2.clone_box();
                let spec = spec.clone();
                handles.push(scope.spawn(move || {
                    let mut out = Vec::with_capacity(hi - lo);
                    for ep in lo..hi {
                        let rec =
                            play_episode(game, a1.as_mut(), a2.as_mut(), &spec, seed, ep as u64)?;
                        out.push((ep, rec));
                    }
                    Ok(out)
                }));
            }
            handles.into_iter().map(|h| h.join().expect("episode worker panicked")).collect()
        });
        for chunk in results {
            for (ep, rec) in chunk? {
                records[ep] = Some(rec);
            }
        }
    }

    let records: Vec<EpisodeRecord> = records.into_iter().map(|r| r.unwrap()).collect();
    let totals: Vec<f64> = records.iter().map(|r| r.total).collect();
    Ok((summarize(&totals, spec.batches), records))
}

fn play_episode(
    game: &GameSpec,
    agent1: &mut dyn Agent,
    agent2: &mut dyn Agent,
    spec: &EpisodeSpec,
    seed: u64,
    episode: u64,
) -> Result<EpisodeRecord> {
    let mut rng = SplitMix64::for_episode(seed, episode);
    agent1.reset();
    agent2.reset();
    let k = rng.sample(&game.p0);
    let l = rng.sample(&game.q0);
    let mut stages = Vec::with_capacity(spec.stages);
    let mut total = 0.0;
    let context = |what: Error, stage: usize| -> Error {
        Error::protocol(format!("episode {episode}, stage {stage}: {what}"))
    };
    for t in 1..=spec.stages {
        let a = agent1.act(k, &mut rng).map_err(|e| context(e, t))?;
        let b = agent2.act(l, &mut rng).map_err(|e| context(e, t))?;
        if a >= game.num_a() || b >= game.num_b() {
            return Err(context(Error::protocol("agent returned an out-of-range action"), t));
        }
        agent1.observe(a, b).map_err(|e| context(e, t))?;
        agent2.observe(a, b).map_err(|e| context(e, t))?;
        let payoff = game.payoff(k, l, a, b);
        total += spec.weights.weight(t) * payoff;
        stages.push(StageOutcome { a, b, payoff });
    }
    Ok(EpisodeRecord { episode, seed: seed ^ episode, k, l, stages, total })
}

/// Episode log CSV: one row per stage with the weighted running total.
pub fn episodes_to_csv(records: &[EpisodeRecord], weights: PayoffWeights) -> String {
    let mut out = String::from("episode,seed,k,l,stage,a,b,stage_payoff,cumulative\n");
    for rec in records {
        let mut cumulative = 0.0;
        for (i, stage) in rec.stages.iter().enumerate() {
            cumulative += weights.weight(i + 1) * stage.payoff;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                rec.episode,
                rec.seed,
                rec.k + 1,
                rec.l + 1,
                i + 1,
                stage.a + 1,
                stage.b + 1,
                stage.payoff,
                cumulative
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Exact best-response evaluation
// ---------------------------------------------------------------------------

/// Horizon under which a fixed plan is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum EvalHorizon {
    Finite,
    Discounted { lambda: f64 },
}

/// Exact best-response value against a fixed realization plan: the
/// opponent's prior-weighted per-type best responses from the backward
/// recursion. For a player-1 plan this is the worst-case (minimized)
/// payoff and certifies a security level; for a player-2 plan the
/// best-case (maximized) payoff. Also returns the per-type stage-0 vector.
pub fn best_response_value(
    game: &GameSpec,
    horizon: EvalHorizon,
    plan: &RealizationPlan,
) -> Result<(f64, Vec<f64>)> {
    let discount = match horizon {
        EvalHorizon::Finite => None,
        EvalHorizon::Discounted { lambda } => Some(lambda),
    };
    let payoffs = weighted_security_payoffs(game, plan, discount)?;
    let opp_prior = match plan.owner {
        Player::P1 => &game.q0,
        Player::P2 => &game.p0,
    };
    Ok((payoffs.value_under(opp_prior), payoffs.stage0))
}

// ---------------------------------------------------------------------------
// Unrolling sufficient-statistic agents
// ---------------------------------------------------------------------------

/// Agents that expose their full per-type stage mix and can be forked,
/// letting the tree walker materialize them over every history.
pub trait StatisticAgent: Clone {
    fn owner(&self) -> Player;
    fn stage_mix(&mut self) -> Result<Arc<StageStrategy>>;
    fn observe(&mut self, a: usize, b: usize) -> Result<()>;
}

macro_rules! impl_statistic_agent {
    ($ty:ty, $player:expr) => {
        impl StatisticAgent for $ty {
            fn owner(&self) -> Player {
                $player
            }

            fn stage_mix(&mut self) -> Result<Arc<StageStrategy>> {
                <$ty>::stage_mix(self)
            }

            fn observe(&mut self, a: usize, b: usize) -> Result<()> {
                <$ty>::observe(self, a, b)
            }
        }
    };
}

impl_statistic_agent!(FiniteAgentP1, Player::P1);
impl_statistic_agent!(FiniteAgentP2, Player::P2);
impl_statistic_agent!(DiscountedAgentP1, Player::P1);
impl_statistic_agent!(DiscountedAgentP2, Player::P2);

/// Materialize a sufficient-statistic agent into a full behavior strategy
/// across every `(type, history)` node up to `horizon` stages, by
/// exhaustively branching the agent over all announced action pairs.
pub fn unroll_agent<A: StatisticAgent>(
    game: &GameSpec,
    agent: &A,
    horizon: usize,
    cap: HorizonCap,
) -> Result<BehaviorStrategy> {
    cap.check(horizon)?;
    let hist = enumerate_histories(game, horizon, cap)?;
    let owner = agent.owner();
    let (n_types, n_act) = match owner {
        Player::P1 => (game.num_k(), game.num_a()),
        Player::P2 => (game.num_l(), game.num_b()),
    };
    let mut stages: Vec<Vec<f64>> = (1..=horizon)
        .map(|t| vec![0.0; n_types * hist.count(t) * n_act])
        .collect();

    // Iterative DFS over histories; the agent state is a function of the
    // announced actions only, so one fork per history node suffices.
    let mut stack: Vec<(usize, usize, A)> = vec![(1, 0, agent.clone())];
    while let Some((t, h, mut node)) = stack.pop() {
        let mix = node.stage_mix()?;
        for ty in 0..n_types {
            for act in 0..n_act {
                stages[t - 1][(ty * hist.count(t) + h) * n_act + act] = mix.rows[ty][act];
            }
        }
        if t < horizon {
            for a in 0..game.num_a() {
                for b in 0..game.num_b() {
                    let mut child = node.clone();
                    child.observe(a, b)?;
                    stack.push((t + 1, hist.child(h, a, b), child));
                }
            }
        }
    }
    Ok(BehaviorStrategy { owner, horizon, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::make_agent_p1;
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
    fn identical_seeds_identical_records() {
        let g = random_game(3);
        let s = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap();
        let a1 = SeqFormAgent::new(&g, s.strategy).unwrap();
        let a2 = UniformAgent { n_actions: 2 };
        let spec = EpisodeSpec {
            episodes: 64,
            stages: 2,
            weights: PayoffWeights::Finite,
            batches: 4,
        };
        let (sum1, rec1) = run_episodes(&g, &a1, &a2, &spec, 99).unwrap();
        let (sum2, rec2) = run_episodes(&g, &a1, &a2, &spec, 99).unwrap();
        assert_eq!(rec1, rec2);
        assert_eq!(sum1.mean.to_bits(), sum2.mean.to_bits());
        assert_eq!(sum1.batch_means.len(), 4);
        let (_, rec3) = run_episodes(&g, &a1, &a2, &spec, 100).unwrap();
        assert_ne!(rec1, rec3);
    }

    #[test]
    fn deterministic_agents_give_exact_totals() {
        // Single types, single accessible action each: totals are forced.
        let g = game(1, 1, 1, 1, |_, _, _, _| 3.5, vec![1.0], vec![1.0]);
        let a1 = UniformAgent { n_actions: 1 };
        let a2 = UniformAgent { n_actions: 1 };
        let spec = EpisodeSpec {
            episodes: 16,
            stages: 2,
            weights: PayoffWeights::Finite,
            batches: 1,
        };
        let (summary, _) = run_episodes(&g, &a1, &a2, &spec, 7).unwrap();
        assert_eq!(summary.mean, 7.0);
        assert_eq!(summary.std_dev, 0.0);
        assert_eq!(summary.min, 7.0);
        assert_eq!(summary.max, 7.0);
    }

    #[test]
    fn episode_totals_rebuild_from_stage_payoffs() {
        let g = random_game(8);
        let a = UniformAgent { n_actions: 2 };
        let spec = EpisodeSpec {
            episodes: 32,
            stages: 5,
            weights: PayoffWeights::Discounted { lambda: 0.7 },
            batches: 1,
        };
        let (_, records) = run_episodes(&g, &a, &a, &spec, 11).unwrap();
        for rec in &records {
            let rebuilt: f64 = rec
                .stages
                .iter()
                .enumerate()
                .map(|(i, s)| spec.weights.weight(i + 1) * s.payoff)
                .sum();
            assert!((rebuilt - rec.total).abs() < 1e-9);
        }
    }

    #[test]
    fn best_response_equals_lp_value_at_the_optimum() {
        for seed in 60..64u64 {
            let g = random_game(seed);
            let s = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap();
            let (v, _) = best_response_value(&g, EvalHorizon::Finite, &s.plan).unwrap();
            assert!((v - s.game_value).abs() < 1e-6, "seed {seed}: {v} vs {}", s.game_value);
        }
    }

    #[test]
    fn unrolled_agent_achieves_the_game_value() {
        let g = random_game(70);
        let v = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap().game_value;
        let agent = make_agent_p1(&g, 2, HorizonCap::default()).unwrap();
        let unrolled = unroll_agent(&g, &agent, 2, HorizonCap::default()).unwrap();
        let plan = unrolled.to_plan(&g, &g.p0).unwrap();
        plan.validate(&g, 1e-9).unwrap();
        let (brv, _) = best_response_value(&g, EvalHorizon::Finite, &plan).unwrap();
        assert!((brv - v).abs() < 1e-4, "{brv} vs {v}");
    }

    #[test]
    fn unroll_depth_one_is_the_stage_mix() {
        let g = random_game(71);
        let mut agent = make_agent_p1(&g, 1, HorizonCap::default()).unwrap();
        let mix = agent.stage_mix().unwrap();
        let unrolled = unroll_agent(&g, &agent, 1, HorizonCap::default()).unwrap();
        for ty in 0..2 {
            for act in 0..2 {
                assert_eq!(unrolled.stages[0][ty * 2 + act], mix.rows[ty][act]);
            }
        }
    }

    #[test]
    fn security_holds_against_adversarial_suite() {
        let g = random_game(80);
        let s = solve_primal(&g, 2, Player::P1, HorizonCap::default()).unwrap();
        let v = s.game_value;
        let p1 = SeqFormAgent::new(&g, s.strategy).unwrap();
        let spec = EpisodeSpec {
            episodes: 600,
            stages: 2,
            weights: PayoffWeights::Finite,
            batches: 1,
        };
        let opponents: Vec<Box<dyn Agent>> = vec![
            Box::new(UniformAgent { n_actions: 2 }),
            Box::new(GreedyMyopicAgent::new(&g, Player::P2)),
            Box::new(TypeRevealingAgent::new(2)),
        ];
        for opp in &opponents {
            let (summary, _) = run_episodes(&g, &p1, opp.as_ref(), &spec, 5).unwrap();
            let guard = v - 4.0 * summary.standard_error();
            assert!(
                summary.mean >= guard,
                "mean {} below security level {v} (4 SE guard {guard})",
                summary.mean
            );
        }
    }

    #[test]
    fn csv_log_has_weighted_cumulative() {
        let g = game(1, 1, 2, 2, |_, _, a, b| (a + b) as f64, vec![1.0], vec![1.0]);
        let a = UniformAgent { n_actions: 2 };
        let spec = EpisodeSpec {
            episodes: 2,
            stages: 2,
            weights: PayoffWeights::Finite,
            batches: 1,
        };
        let (_, records) = run_episodes(&g, &a, &a, &spec, 1).unwrap();
        let csv = episodes_to_csv(&records, spec.weights);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "episode,seed,k,l,stage,a,b,stage_payoff,cumulative");
        assert_eq!(lines.len(), 1 + 4);
    }
}
