//! Game data model: the seven-tuple specification, history indexing, and
//! the belief/regret vectors that make up sufficient statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which player a strategy, plan, or belief belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    P1,
    P2,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::P1 => Player::P2,
            Player::P2 => Player::P1,
        }
    }
}

impl std::fmt::Display for Player {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Player::P1 => write!(f, "player 1"),
            Player::P2 => write!(f, "player 2"),
        }
    }
}

/// A two-player zero-sum repeated Bayesian game.
///
/// Player 1 (the maximizer) has one type per entry of `k_types`, player 2
/// one per entry of `l_types`. `payoff[k][l][a][b]` is the stage payoff to
/// player 1 when the types are `(k, l)` and the simultaneous actions are
/// `(a, b)`. `p0` and `q0` are the public priors the types are drawn from.
/// Payoff units are opaque scalars and never converted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub k_types: Vec<String>,
    pub l_types: Vec<String>,
    pub a_actions: Vec<String>,
    pub b_actions: Vec<String>,
    pub payoff: Vec<Vec<Vec<Vec<f64>>>>,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
}

const PROB_SUM_TOL: f64 = 1e-12;

impl GameSpec {
    pub fn num_k(&self) -> usize {
        self.k_types.len()
    }

    pub fn num_l(&self) -> usize {
        self.l_types.len()
    }

    pub fn num_a(&self) -> usize {
        self.a_actions.len()
    }

    pub fn num_b(&self) -> usize {
        self.b_actions.len()
    }

    /// Unchecked payoff lookup; indices must be in range.
    #[inline]
    pub fn payoff(&self, k: usize, l: usize, a: usize, b: usize) -> f64 {
        self.payoff[k][l][a][b]
    }

    /// Checked payoff lookup.
    pub fn payoff_at(&self, k: usize, l: usize, a: usize, b: usize) -> Result<f64> {
        if k >= self.num_k() || l >= self.num_l() || a >= self.num_a() || b >= self.num_b() {
            return Err(Error::input(format!(
                "payoff index (k={k}, l={l}, a={a}, b={b}) out of range for \
                 ({}, {}, {}, {})",
                self.num_k(),
                self.num_l(),
                self.num_a(),
                self.num_b()
            )));
        }
        Ok(self.payoff(k, l, a, b))
    }

    /// Largest absolute stage payoff, used by truncation and bound logic.
    pub fn max_abs_payoff(&self) -> f64 {
        let mut m = 0.0f64;
        for kk in &self.payoff {
            for ll in kk {
                for aa in ll {
                    for &v in aa {
                        m = m.max(v.abs());
                    }
                }
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_types.is_empty() || self.l_types.is_empty() {
            return Err(Error::input("k_types/l_types must be non-empty"));
        }
        if self.a_actions.is_empty() || self.b_actions.is_empty() {
            return Err(Error::input("a_actions/b_actions must be non-empty"));
        }
        check_prior("p0", &self.p0, self.num_k())?;
        check_prior("q0", &self.q0, self.num_l())?;
        if self.payoff.len() != self.num_k() {
            return Err(Error::input(format!(
                "payoff: expected {} k-slices, got {}",
                self.num_k(),
                self.payoff.len()
            )));
        }
        for (k, kk) in self.payoff.iter().enumerate() {
            if kk.len() != self.num_l() {
                return Err(Error::input(format!(
                    "payoff[{k}]: expected {} l-slices, got {}",
                    self.num_l(),
                    kk.len()
                )));
            }
            for (l, ll) in kk.iter().enumerate() {
                if ll.len() != self.num_a() {
                    return Err(Error::input(format!(
                        "payoff[{k}][{l}]: expected {} rows, got {}",
                        self.num_a(),
                        ll.len()
                    )));
                }
                for (a, row) in ll.iter().enumerate() {
                    if row.len() != self.num_b() {
                        return Err(Error::input(format!(
                            "payoff[{k}][{l}][{a}]: expected {} entries, got {}",
                            self.num_b(),
                            row.len()
                        )));
                    }
                    for (b, &v) in row.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(Error::input(format!(
                                "payoff[{k}][{l}][{a}][{b}]: must be finite"
                            )));
                        }
                    }
                }
            }
        }
        if let Some(d) = self.discount {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::input(format!("discount: {d} must lie strictly in (0, 1)")));
            }
        }
        Ok(())
    }
}

fn check_prior(name: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::input(format!(
            "{name}: expected {len} entries, got {}",
            p.len()
        )));
    }
    for (i, &v) in p.iter().enumerate() {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::input(format!("{name} entries must be positive ({name}[{i}] = {v})")));
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::input(format!("{name} must sum to 1 (got {sum})")));
    }
    Ok(())
}

/// Parse and validate a game-spec JSON document.
pub fn load_game(text: &str) -> Result<GameSpec> {
    let game: GameSpec =
        serde_json::from_str(text).map_err(|e| Error::input(format!("game spec parse error: {e}")))?;
    game.validate()?;
    Ok(game)
}

/// Serialize a game spec back to JSON.
pub fn game_to_json(game: &GameSpec) -> String {
    serde_json::to_string_pretty(game).expect("game spec is always serializable")
}

/// One pair of action histories `(a_1..a_{t-1}, b_1..b_{t-1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryPair {
    pub a_seq: Vec<usize>,
    pub b_seq: Vec<usize>,
}

impl HistoryPair {
    pub fn stage(&self) -> usize {
        self.a_seq.len() + 1
    }
}

/// Safety cap on LP horizons; the history count grows as `(|A||B|)^T`.
#[derive(Debug, Clone, Copy)]
pub struct HorizonCap {
    pub max_horizon: usize,
}

impl Default for HorizonCap {
    fn default() -> Self {
        HorizonCap { max_horizon: 6 }
    }
}

impl HorizonCap {
    pub fn new(max_horizon: usize) -> Self {
        HorizonCap { max_horizon }
    }

    /// A cap widened by `extra` stages; dual-game programs run one stage
    /// longer than the game horizon they serve.
    pub fn extended(self, extra: usize) -> Self {
        HorizonCap { max_horizon: self.max_horizon + extra }
    }

    pub fn check(self, horizon: usize) -> Result<()> {
        if horizon == 0 {
            return Err(Error::input("horizon must be at least 1"));
        }
        if horizon > self.max_horizon {
            return Err(Error::Capacity { requested: horizon, cap: self.max_horizon });
        }
        Ok(())
    }
}

/// Canonical enumeration of all history pairs up to a horizon.
///
/// Stage `t` holds `(|A||B|)^{t-1}` pairs, ordered lexicographically in
/// `(a_1, b_1, a_2, b_2, ...)` with the a-index major. Indices are
/// arithmetic: the children of history `h` are `h * |A||B| + a * |B| + b`.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    horizon: usize,
    na: usize,
    nb: usize,
    counts: Vec<usize>,
}

impl HistoryIndex {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of history pairs at stage `t` (1-based).
    pub fn count(&self, t: usize) -> usize {
        self.counts[t - 1]
    }

    /// Total pairs across stages `1..=horizon`.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Index of the stage-`t+1` history reached from stage-`t` history `h`
    /// by the action pair `(a, b)`.
    pub fn child(&self, h: usize, a: usize, b: usize) -> usize {
        h * self.na * self.nb + a * self.nb + b
    }

    /// Parent of a stage-`t` history (`t >= 2`): the stage-`t-1` index plus
    /// the action pair taken at stage `t-1`.
    pub fn parent(&self, h: usize) -> (usize, usize, usize) {
        let cell = h % (self.na * self.nb);
        (h / (self.na * self.nb), cell / self.nb, cell % self.nb)
    }

    /// Materialize the actual action sequences of a stage-`t` history.
    pub fn pair(&self, t: usize, mut h: usize) -> HistoryPair {
        let mut a_seq = vec![0usize; t - 1];
        let mut b_seq = vec![0usize; t - 1];
        for s in (0..t - 1).rev() {
            let cell = h % (self.na * self.nb);
            a_seq[s] = cell / self.nb;
            b_seq[s] = cell % self.nb;
            h /= self.na * self.nb;
        }
        HistoryPair { a_seq, b_seq }
    }
}

/// Build the canonical history index for a game up to `horizon` stages.
pub fn enumerate_histories(game: &GameSpec, horizon: usize, cap: HorizonCap) -> Result<HistoryIndex> {
    cap.check(horizon)?;
    let na = game.num_a();
    let nb = game.num_b();
    let mut counts = Vec::with_capacity(horizon);
    let mut c = 1usize;
    for _ in 0..horizon {
        counts.push(c);
        c = c.checked_mul(na * nb).ok_or(Error::Capacity {
            requested: horizon,
            cap: cap.max_horizon,
        })?;
    }
    Ok(HistoryIndex { horizon, na, nb, counts })
}

/// A probability vector over the owner's own type set (`p_t` or `q_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    pub owner: Player,
    pub probs: Vec<f64>,
}

impl BeliefVector {
    pub fn new(owner: Player, probs: Vec<f64>) -> Result<Self> {
        let belief = BeliefVector { owner, probs };
        belief.validate()?;
        Ok(belief)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::input("belief: must be non-empty"));
        }
        let mut sum = 0.0;
        for (i, &v) in self.probs.iter().enumerate() {
            if !(v.is_finite() && v >= -1e-12) {
                return Err(Error::input(format!("belief[{i}] = {v} must be nonnegative")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("belief must sum to 1 (got {sum})")));
        }
        Ok(())
    }
}

/// A real vector of per-type regrets, in payoff units.
///
/// `about` names whose type set the vector ranges over: a regret about
/// player 1's types has `|K|` entries and is what player 2 tracks, and
/// symmetrically for player 2's types.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretVector {
    pub about: Player,
    pub values: Vec<f64>,
}

impl RegretVector {
    pub fn new(about: Player, values: Vec<f64>) -> Result<Self> {
        let regret = RegretVector { about, values };
        regret.validate()?;
        Ok(regret)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::input(format!("regret[{i}] = {v} must be finite")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_game() -> GameSpec {
        GameSpec {
            k_types: vec!["k0".into(), "k1".into()],
            l_types: vec!["l0".into()],
            a_actions: vec!["a0".into(), "a1".into(), "a2".into()],
            b_actions: vec!["b0".into(), "b1".into()],
            payoff: vec![
                vec![vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]],
                vec![vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]],
            ],
            p0: vec![0.5, 0.5],
            q0: vec![1.0],
            discount: None,
        }
    }

    #[test]
    fn rejects_unnormalized_prior() {
        let mut g = tiny_game();
        g.q0 = vec![0.6];
        g.p0 = vec![0.5, 0.5];
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("q0 must sum to 1"));
    }

    #[test]
    fn rejects_zero_prior_entry() {
        let mut g = tiny_game();
        g.p0 = vec![1.0, 0.0];
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("p0 entries must be positive"));
    }

    #[test]
    fn json_round_trip() {
        let g = tiny_game();
        let text = game_to_json(&g);
        let back = load_game(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn history_counts() {
        let mut g = tiny_game();
        g.a_actions = vec!["a0".into(), "a1".into()];
        g.payoff = vec![
            vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
        ];
        let idx = enumerate_histories(&g, 3, HorizonCap::default()).unwrap();
        assert_eq!(idx.count(1), 1);
        assert_eq!(idx.count(2), 4);
        assert_eq!(idx.count(3), 16);
        assert_eq!(idx.total(), 21);
        // Single empty pair at stage 1.
        assert_eq!(idx.pair(1, 0), HistoryPair { a_seq: vec![], b_seq: vec![] });
    }

    #[test]
    fn history_ordering_golden() {
        // |A| = 3, |B| = 2 at stage 2: pairs enumerate in a-major order.
        let g = tiny_game();
        let idx = enumerate_histories(&g, 2, HorizonCap::default()).unwrap();
        assert_eq!(idx.count(2), 6);
        let got: Vec<(usize, usize)> = (0..6)
            .map(|h| {
                let p = idx.pair(2, h);
                (p.a_seq[0], p.b_seq[0])
            })
            .collect();
        assert_eq!(got, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]);
    }

    #[test]
    fn parent_child_round_trip() {
        let g = tiny_game();
        let idx = enumerate_histories(&g, 3, HorizonCap::default()).unwrap();
        for h in 0..idx.count(2) {
            for a in 0..3 {
                for b in 0..2 {
                    let c = idx.child(h, a, b);
                    assert_eq!(idx.parent(c), (h, a, b));
                }
            }
        }
    }

    #[test]
    fn capacity_cap() {
        let g = tiny_game();
        let err = enumerate_histories(&g, 7, HorizonCap::default()).unwrap_err();
        assert!(matches!(err, Error::Capacity { requested: 7, cap: 6 }));
        assert!(enumerate_histories(&g, 7, HorizonCap::new(8)).is_ok());
    }
}
