//! Shapley-value credit assignment over agent coalitions.
//!
//! Coalitions are [`AgentSet`] bitmasks over players `0..n`. Exact values
//! enumerate all `2^n` subsets once and weight marginal contributions with
//! `|S|! (n - |S| - 1)! / n!`; the sampled estimator averages marginal
//! contributions along uniformly random orderings.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{run_episode, AgentSet, ArenaError, EpisodeResult, Faction, CAST_SIZE};

/// Largest player count accepted by [`shapley_exact`].
pub const MAX_EXACT_PLAYERS: usize = 12;
/// Largest player count representable by a coalition mask.
pub const MAX_PLAYERS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum CreditError {
    #[error("{n} players exceeds the limit of {max}")]
    TooManyAgents { n: usize, max: usize },
    #[error("counterfactual replay of the full coalition diverged from the logged episode (expected {expected}, got {got})")]
    ReplayMismatch { expected: String, got: String },
    #[error(transparent)]
    Arena(#[from] ArenaError),
}

/// A characteristic function over coalitions of players `0..players()`.
pub trait CoalitionValue {
    fn players(&self) -> usize;
    fn value(&self, coalition: AgentSet) -> f64;
}

/// Wraps a closure as a coalition game.
pub struct FnGame<F> {
    n: usize,
    f: F,
}

impl<F: Fn(AgentSet) -> f64> FnGame<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnGame { n, f }
    }
}

impl<F: Fn(AgentSet) -> f64> CoalitionValue for FnGame<F> {
    fn players(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: AgentSet) -> f64 {
        (self.f)(coalition)
    }
}

/// A game stored as a full table indexed by coalition bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    /// Evaluates `game` once on every subset.
    pub fn tabulate(game: &impl CoalitionValue) -> Result<Self, CreditError> {
        let n = game.players();
        if n > MAX_EXACT_PLAYERS {
            return Err(CreditError::TooManyAgents {
                n,
                max: MAX_EXACT_PLAYERS,
            });
        }
        let values = (0..1u32 << n)
            .map(|bits| game.value(AgentSet::from_bits(bits as u16)))
            .collect();
        Ok(TableGame { n, values })
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 1 << n, "table must cover every subset");
        TableGame { n, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl CoalitionValue for TableGame {
    fn players(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: AgentSet) -> f64 {
        self.values[coalition.bits() as usize]
    }
}

/// Exact Shapley values by subset enumeration.
pub fn shapley_exact(game: &impl CoalitionValue) -> Result<Vec<f64>, CreditError> {
    let n = game.players();
    let table = TableGame::tabulate(game)?;
    let fact: Vec<f64> = (0..=n)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    let weight: Vec<f64> = (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect();
    let mut phi = vec![0.0; n];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for s in 0..(1usize << n) {
            if s & bit == 0 {
                let size = s.count_ones() as usize;
                acc += weight[size] * (table.values[s | bit] - table.values[s]);
            }
        }
        *slot = acc;
    }
    Ok(phi)
}

/// Monte Carlo Shapley estimate from `permutations` random orderings.
pub fn shapley_sampled(
    game: &impl CoalitionValue,
    permutations: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, CreditError> {
    let n = game.players();
    if n > MAX_PLAYERS {
        return Err(CreditError::TooManyAgents {
            n,
            max: MAX_PLAYERS,
        });
    }
    let permutations = permutations.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    for _ in 0..permutations {
        order.shuffle(rng);
        let mut s = AgentSet::EMPTY;
        let mut prev = game.value(s);
        for &i in &order {
            s.insert(i);
            let next = game.value(s);
            phi[i] += next - prev;
            prev = next;
        }
    }
    for p in phi.iter_mut() {
        *p /= permutations as f64;
    }
    Ok(phi)
}

/// Weight of the energy term relative to a win.
pub const ENERGY_WEIGHT: f64 = 0.01;

/// A faction's outcome score for one episode, crediting only the energy
/// moved by `members`: deposits for villagers, sabotage for heretics.
pub fn outcome_score(result: &EpisodeResult, faction: Faction, members: AgentSet) -> f64 {
    let win = (result.winner.faction() == faction) as u8 as f64;
    let energy: u32 = members
        .iter()
        .filter(|&i| i < result.ledger.len())
        .map(|i| match faction {
            Faction::Villagers => result.ledger[i].deposited,
            Faction::Heretics => result.ledger[i].sabotaged,
        })
        .sum();
    win + ENERGY_WEIGHT * energy as f64
}

/// Counterfactual-replay values for both factions over all coalitions of
/// the nine-agent cast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeGames {
    pub villagers: TableGame,
    pub heretics: TableGame,
}

impl EpisodeGames {
    pub fn game(&self, faction: Faction) -> &TableGame {
        match faction {
            Faction::Villagers => &self.villagers,
            Faction::Heretics => &self.heretics,
        }
    }
}

/// Replays `base` once per coalition with every agent outside the
/// coalition idling, and scores each replay for both factions. Values are
/// shifted so the empty coalition is worth zero.
pub fn episode_games(base: &EpisodeResult) -> Result<EpisodeGames, CreditError> {
    let header = &base.header;
    let n = CAST_SIZE;
    let full = AgentSet::from_bits(((1u32 << n) - 1) as u16);
    let replays: Vec<Result<(f64, f64), CreditError>> = (0..1u32 << n)
        .into_par_iter()
        .map(|bits| {
            let s = AgentSet::from_bits(bits as u16);
            let idle = AgentSet::from_bits(header.lineup.idle.bits() | (full.bits() & !s.bits()));
            let lineup = header.lineup.with_idle(idle);
            let r = run_episode(&header.config, &lineup, &header.params)?;
            if s == full && r.event_hash != base.event_hash {
                return Err(CreditError::ReplayMismatch {
                    expected: base.event_hash.clone(),
                    got: r.event_hash,
                });
            }
            Ok((
                outcome_score(&r, Faction::Villagers, s),
                outcome_score(&r, Faction::Heretics, s),
            ))
        })
        .collect();
    let mut v = Vec::with_capacity(replays.len());
    let mut h = Vec::with_capacity(replays.len());
    for r in replays {
        let (a, b) = r?;
        v.push(a);
        h.push(b);
    }
    let (v0, h0) = (v[0], h[0]);
    Ok(EpisodeGames {
        villagers: TableGame::from_values(n, v.into_iter().map(|x| x - v0).collect()),
        heretics: TableGame::from_values(n, h.into_iter().map(|x| x - h0).collect()),
    })
}

/// Per-agent credits: each agent's Shapley value in its own faction's game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCredits {
    pub villagers: Vec<f64>,
    pub heretics: Vec<f64>,
    pub own_faction: Vec<f64>,
}

pub fn episode_credits(base: &EpisodeResult) -> Result<EpisodeCredits, CreditError> {
    let games = episode_games(base)?;
    let villagers = shapley_exact(&games.villagers)?;
    let heretics = shapley_exact(&games.heretics)?;
    let own_faction = base
        .roles()
        .iter()
        .enumerate()
        .map(|(i, r)| match r.faction() {
            Faction::Villagers => villagers[i],
            Faction::Heretics => heretics[i],
        })
        .collect();
    Ok(EpisodeCredits {
        villagers,
        heretics,
        own_faction,
    })
}
