//! Solver and simulator for two-player zero-sum repeated Bayesian games.
//!
//! Both players privately know their own type, drawn once from public
//! priors, and play simultaneous actions over repeated stages. The crate
//! computes:
//!
//! - exact security strategies and the game value for finite-horizon games,
//!   via sequence-form linear programs ([`seqform`]);
//! - security strategies driven by fixed-size sufficient statistics (own-type
//!   belief, opponent-type regret, stage), via dual-game linear programs
//!   ([`dual`]);
//! - approximated security strategies for discounted infinite-horizon games,
//!   with certified error bounds ([`discounted`]);
//! - Monte-Carlo play of any of the above against each other or against
//!   exact best responses ([`sim`]).
//!
//! Everything rests on a small dense LP solver ([`lp`]) and a game/history
//! data model ([`game`]).

pub mod discounted;
pub mod rng;
pub mod dual;
pub mod error;
pub mod game;
pub mod lp;
pub mod seqform;
pub mod sim;

pub use error::{Error, Result};
pub use game::{BeliefVector, GameSpec, HistoryIndex, HistoryPair, HorizonCap, Player, RegretVector};
pub use lp::{solve_lp, LpProblem, LpSolution, LpStatus};
