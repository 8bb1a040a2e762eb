//! Parametric agent policies for the arena.
//!
//! Villagers route greedily between energy sites and the totem; heretics
//! alternate between mimicking work at a site and lurking at the totem,
//! sabotaging when nobody appears to be watching. Attribution variants run
//! the covariation/Bayes pipeline on everything they witness: villagers use
//! it to accuse and vote, heretics use a mirror of it to estimate how
//! suspicious each agent looks to the villagers, hide behavior that would
//! read as dispositional, and coordinate votes on the most exposed villager.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{
    Action, ActionKind, AgentId, AgentSet, Cell, Event, Heading, LocationClass, Observation, Role,
};
use crate::attribution::{
    attribute, posterior, BeliefMatrix, CovariationTracker, JudgmentKind, LikelihoodTable,
    Observed, Thresholds, HERETIC_BASE_RATE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Does nothing and abstains; used for counterfactual replays.
    Idle,
    BaselineVillager,
    AttributionVillager,
    BaselineHeretic,
    AttributionHeretic,
}

impl PolicyKind {
    pub fn uses_beliefs(self) -> bool {
        matches!(
            self,
            PolicyKind::AttributionVillager | PolicyKind::AttributionHeretic
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Overlay {
    None,
    Prophet,
    Hunter,
}

impl Overlay {
    pub fn for_role(role: Role) -> Self {
        match role {
            Role::Prophet => Overlay::Prophet,
            Role::Hunter => Overlay::Hunter,
            _ => Overlay::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    /// Minimum belief needed to accuse or vote for a target.
    pub accusation_threshold: f64,
    /// Most recent evidence items kept for covariation; `None` keeps all.
    pub suspicion_memory: Option<usize>,
    /// Per-tick sabotage propensity for a heretic at the totem.
    pub heretic_sabotage_rate: f64,
    /// Fraction of that propensity suppressed when anyone is in view.
    pub heretic_caution: f64,
    /// Chance of a random step instead of the planned one.
    pub movement_noise: f64,
    /// Ticks a heretic spends faking work at a site between totem visits.
    pub heretic_mimic_ticks: u32,
    /// Ticks a heretic lingers at the totem per visit.
    pub heretic_lurk_ticks: u32,
    /// Self-suspicion above which an attribution heretic stops lurking.
    pub heretic_exposure_limit: f64,
    /// Villager-side suspicion a target needs before attribution heretics
    /// pile on it.
    pub heretic_frame_threshold: f64,
    pub thresholds: Thresholds,
    pub likelihoods: LikelihoodTable,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            accusation_threshold: 0.824,
            suspicion_memory: None,
            heretic_sabotage_rate: 0.15,
            heretic_caution: 0.9,
            movement_noise: 0.165,
            heretic_mimic_ticks: 53,
            heretic_lurk_ticks: 49,
            heretic_exposure_limit: 0.555,
            heretic_frame_threshold: 0.108,
            thresholds: Thresholds::default(),
            likelihoods: LikelihoodTable::CALIBRATED,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if unit(self.accusation_threshold)
            && unit(self.heretic_sabotage_rate)
            && unit(self.heretic_caution)
            && unit(self.movement_noise)
            && unit(self.heretic_exposure_limit)
            && unit(self.heretic_frame_threshold)
            && self.thresholds.low <= self.thresholds.high
        {
            Ok(())
        } else {
            Err(PolicyError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("attribution policy for agent {0} was given no belief matrix")]
    MissingBeliefs(AgentId),
    #[error("invalid policy parameters: {0}")]
    InvalidParams(String),
}

/// Argmax-belief living target other than `observer`, if it clears
/// `threshold`. Ties go to the lowest id.
pub fn cast_vote(
    beliefs: &BeliefMatrix,
    observer: AgentId,
    living: AgentSet,
    threshold: f64,
) -> Option<AgentId> {
    let mut best: Option<(AgentId, f64)> = None;
    for t in living
        .iter()
        .filter(|&t| t != observer && t < beliefs.size())
    {
        let b = beliefs.get(observer, t);
        if best.is_none_or(|(_, bb)| b > bb) {
            best = Some((t, b));
        }
    }
    best.filter(|&(_, b)| b >= threshold).map(|(t, _)| t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum HereticMode {
    Mimic { site: usize, remaining: u32 },
    Lurk { remaining: u32 },
}

/// A per-agent policy state machine.
#[derive(Clone, Debug)]
pub struct Agent {
    pub id: AgentId,
    pub role: Role,
    pub kind: PolicyKind,
    pub overlay: Overlay,
    params: PolicyParams,
    rng: ChaCha8Rng,
    trips: usize,
    witnessed_sabotage: AgentSet,
    tracker: CovariationTracker,
    window: VecDeque<Observed>,
    /// Attribution heretics: estimated villager-side suspicion per agent.
    exposure: Vec<f64>,
    mode: HereticMode,
    teammates: AgentSet,
    known: Vec<(AgentId, Role)>,
    /// Ballots of the latest vote: `(tick, voter, target)`.
    ballots: Vec<(u64, AgentId, AgentId)>,
    /// Accusers of a heretic in the latest discussion: `(tick, accuser)`.
    threats: Vec<(u64, AgentId)>,
}

impl Agent {
    pub fn new(
        id: AgentId,
        role: Role,
        kind: PolicyKind,
        params: PolicyParams,
        rng: ChaCha8Rng,
        cast_size: usize,
    ) -> Self {
        let mode = HereticMode::Mimic {
            site: id,
            remaining: params.heretic_mimic_ticks,
        };
        Agent {
            id,
            role,
            kind,
            overlay: Overlay::for_role(role),
            rng,
            trips: id,
            witnessed_sabotage: AgentSet::EMPTY,
            tracker: CovariationTracker::default(),
            window: VecDeque::new(),
            exposure: vec![HERETIC_BASE_RATE; cast_size],
            mode,
            teammates: AgentSet::EMPTY,
            known: Vec::new(),
            ballots: Vec::new(),
            threats: Vec::new(),
            params,
        }
    }

    pub fn set_teammates(&mut self, team: AgentSet) {
        self.teammates = team;
    }

    fn require<'a>(
        &self,
        beliefs: Option<&'a mut BeliefMatrix>,
    ) -> Result<&'a mut BeliefMatrix, PolicyError> {
        beliefs.ok_or(PolicyError::MissingBeliefs(self.id))
    }

    fn step_toward(&mut self, from: Cell, to: Cell, grid: (i32, i32)) -> Action {
        if self.rng.random::<f64>() < self.params.movement_noise {
            let h = Heading::ALL[self.rng.random_range(0..8)];
            let next = from.step(h);
            if next.x >= 0 && next.y >= 0 && next.x < grid.0 && next.y < grid.1 {
                return Action::Move(h);
            }
        }
        match Heading::toward(from, to) {
            Some(h) => Action::Move(h),
            None => Action::Idle,
        }
    }

    fn record_evidence(&mut self, o: Observed) -> crate::attribution::CovariationStats {
        match self.params.suspicion_memory {
            None => self.tracker.observe(o),
            Some(limit) => {
                self.window.push_back(o);
                while self.window.len() > limit.max(1) {
                    self.window.pop_front();
                }
                let mut t = CovariationTracker::default();
                for &w in &self.window {
                    t.record(w);
                }
                self.tracker = t;
                self.tracker.stats(o)
            }
        }
    }

    /// Feeds events this agent witnessed (in observed form) into its
    /// evidence pipeline. `classify` maps cells to location classes.
    pub fn perceive(
        &mut self,
        events: &[Event],
        classify: impl Fn(Cell) -> LocationClass + Copy,
        beliefs: Option<&mut BeliefMatrix>,
    ) -> Result<(), PolicyError> {
        if self.kind == PolicyKind::Idle {
            return Ok(());
        }
        for e in events {
            if e.action == ActionKind::Sabotage && e.actor != self.id {
                self.witnessed_sabotage.insert(e.actor);
            }
        }
        match self.kind {
            PolicyKind::AttributionVillager => {
                let beliefs = self.require(beliefs)?;
                for e in events {
                    self.villager_update(e, classify, beliefs);
                }
                self.pin_known(beliefs);
            }
            PolicyKind::AttributionHeretic => {
                for e in events {
                    if e.action == ActionKind::Accuse {
                        if self.threats.first().is_some_and(|t| t.0 != e.tick) {
                            self.threats.clear();
                        }
                        if e.target.is_some_and(|t| self.teammates.contains(t)) {
                            self.threats.push((e.tick, e.actor));
                        }
                    }
                    self.exposure_update(e, classify);
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Public discussion evidence shared by both attribution variants:
    /// accusations shift the accused by trust in the accuser, accusing a
    /// known innocent implicates the accuser, and a revealed elimination
    /// implicates or clears the agents who voted for it.
    /// `me` is the listener's own id when it knows itself to be innocent.
    fn public_evidence(
        &mut self,
        e: &Event,
        me: Option<AgentId>,
        belief: &mut dyn FnMut(AgentId, Option<(f64, f64)>) -> f64,
    ) {
        let table = self.params.likelihoods;
        match e.action {
            ActionKind::Vote => {
                if let Some(t) = e.target {
                    if self.ballots.first().is_some_and(|b| b.0 != e.tick) {
                        self.ballots.clear();
                    }
                    self.ballots.push((e.tick, e.actor, t));
                }
            }
            ActionKind::Accuse => {
                let Some(accused) = e.target else { return };
                if Some(e.actor) == me {
                    return;
                }
                let innocent = Some(accused) == me
                    || self
                        .known
                        .iter()
                        .any(|&(k, r)| k == accused && !r.is_heretic())
                    || belief(accused, None) == 0.0;
                if innocent {
                    belief(e.actor, Some(table.false_accusation_pair()));
                } else {
                    let trust = belief(e.actor, None);
                    belief(accused, Some(table.accusation_pair(trust)));
                }
            }
            ActionKind::Eliminate => {
                let Some(role) = e.revealed else { return };
                self.known.retain(|&(t, _)| t != e.actor);
                self.known.push((e.actor, role));
                if e.target.is_some() {
                    // a hunter's shot, not a vote
                    return;
                }
                let voters: Vec<AgentId> = self
                    .ballots
                    .iter()
                    .filter(|b| b.0 == e.tick && b.2 == e.actor && Some(b.1) != me)
                    .map(|b| b.1)
                    .collect();
                for v in voters {
                    belief(v, Some(table.ballot_pair(role.is_heretic())));
                }
            }
            _ => {}
        }
    }

    fn villager_update(
        &mut self,
        e: &Event,
        classify: impl Fn(Cell) -> LocationClass + Copy,
        beliefs: &mut BeliefMatrix,
    ) {
        let me = self.id;
        if e.action.is_public() {
            let mut belief = |t: AgentId, lik: Option<(f64, f64)>| match lik {
                Some((lh, lv)) if t != me => beliefs.update(me, t, lh, lv),
                _ => beliefs.get(me, t),
            };
            self.public_evidence(e, Some(me), &mut belief);
            return;
        }
        if let Some(o) = Observed::from_event(e, classify) {
            let stats = self.record_evidence(o);
            if e.actor != me {
                let judgment = attribute(&stats, self.params.thresholds);
                let (lh, lv) = self.params.likelihoods.pair(o.action, &judgment);
                if (lh, lv) != (0.5, 0.5) {
                    beliefs.update(me, e.actor, lh, lv);
                }
            }
        }
    }

    fn exposure_update(&mut self, e: &Event, classify: impl Fn(Cell) -> LocationClass + Copy) {
        if e.action.is_public() {
            let mut exposure = std::mem::take(&mut self.exposure);
            let mut belief = |t: AgentId, lik: Option<(f64, f64)>| match lik {
                Some((lh, lv)) => {
                    exposure[t] = posterior(exposure[t], lh, lv);
                    exposure[t]
                }
                None => exposure[t],
            };
            // judged from a generic villager's standpoint
            self.public_evidence(e, None, &mut belief);
            self.exposure = exposure;
            return;
        }
        // the heretic sees its own actions as a villager would
        let mut seen = e.clone();
        seen.action = e.action.observed();
        if let Some(o) = Observed::from_event(&seen, classify) {
            let stats = self.record_evidence(o);
            let judgment = attribute(&stats, self.params.thresholds);
            let (lh, lv) = self.params.likelihoods.pair(o.action, &judgment);
            let slot = &mut self.exposure[e.actor];
            *slot = posterior(*slot, lh, lv);
        }
    }

    fn pin_known(&self, beliefs: &mut BeliefMatrix) {
        for &(t, role) in &self.known {
            beliefs.set(self.id, t, if role.is_heretic() { 1.0 } else { 0.0 });
        }
    }

    /// Chooses a task-phase action.
    pub fn decide(
        &mut self,
        obs: &Observation,
        beliefs: Option<&mut BeliefMatrix>,
    ) -> Result<Action, PolicyError> {
        if self.kind == PolicyKind::AttributionVillager {
            let b = self.require(beliefs)?;
            for &k in &obs.known_roles {
                if !self.known.contains(&k) {
                    self.known.push(k);
                }
            }
            self.pin_known(b);
            return Ok(self.villager_action(obs, Some(b)));
        }
        Ok(match self.kind {
            PolicyKind::Idle => Action::Idle,
            PolicyKind::BaselineVillager => self.villager_action(obs, None),
            PolicyKind::AttributionVillager => unreachable!(),
            PolicyKind::BaselineHeretic | PolicyKind::AttributionHeretic => {
                self.heretic_action(obs)
            }
        })
    }

    fn villager_action(&mut self, obs: &Observation, beliefs: Option<&mut BeliefMatrix>) -> Action {
        if self.overlay == Overlay::Prophet && obs.can_inspect {
            let known: AgentSet = obs.known_roles.iter().map(|&(t, _)| t).collect();
            let candidates: Vec<AgentId> = obs
                .visible_agents
                .iter()
                .map(|a| a.id)
                .filter(|&t| !known.contains(t))
                .collect();
            let pick = match beliefs {
                Some(b) => candidates.iter().copied().max_by(|&x, &y| {
                    b.get(self.id, x)
                        .total_cmp(&b.get(self.id, y))
                        .then(y.cmp(&x))
                }),
                None => candidates.first().copied(),
            };
            if let Some(t) = pick {
                return Action::Inspect(t);
            }
        }

        let at_totem = obs.position == obs.totem;
        let finishing = obs.carrying > 0 && obs.totem_energy + obs.carrying >= obs.totem_target;
        if obs.carrying >= obs.carry_cap || finishing {
            return if at_totem {
                Action::Deposit
            } else {
                self.step_toward(obs.position, obs.totem, obs.grid)
            };
        }
        if at_totem && obs.carrying > 0 {
            return Action::Deposit;
        }
        let site = obs.sites[self.trips % obs.sites.len()];
        if obs.position == site {
            if obs.carrying + 1 >= obs.carry_cap && obs.harvest_progress + 1 >= obs.harvest_ticks {
                // this harvest fills the load; next trip goes elsewhere
                self.trips += 1;
            }
            return Action::Harvest;
        }
        self.step_toward(obs.position, site, obs.grid)
    }

    fn watchers(&self, obs: &Observation) -> usize {
        obs.visible_agents
            .iter()
            .filter(|a| !self.teammates.contains(a.id))
            .count()
    }

    fn heretic_action(&mut self, obs: &Observation) -> Action {
        let exposed = self.kind == PolicyKind::AttributionHeretic
            && self.exposure[self.id] > self.params.heretic_exposure_limit;
        match self.mode {
            HereticMode::Mimic { site, remaining } => {
                let cell = obs.sites[site % obs.sites.len()];
                if obs.position != cell {
                    return self.step_toward(obs.position, cell, obs.grid);
                }
                if remaining == 0 && !exposed {
                    self.mode = HereticMode::Lurk {
                        remaining: self.params.heretic_lurk_ticks,
                    };
                } else {
                    self.mode = HereticMode::Mimic {
                        site,
                        remaining: remaining.saturating_sub(1),
                    };
                    if remaining == 0 {
                        self.mode = HereticMode::Mimic {
                            site: site + 1 + self.rng.random_range(0..obs.sites.len()),
                            remaining: self.params.heretic_mimic_ticks,
                        };
                    }
                }
                Action::FakeTask
            }
            HereticMode::Lurk { remaining } => {
                if obs.position != obs.totem {
                    return self.step_toward(obs.position, obs.totem, obs.grid);
                }
                if remaining == 0 {
                    self.mode = HereticMode::Mimic {
                        site: self.rng.random_range(0..obs.sites.len()),
                        remaining: self.params.heretic_mimic_ticks,
                    };
                    return Action::Idle;
                }
                self.mode = HereticMode::Lurk {
                    remaining: remaining - 1,
                };
                let watchers = self.watchers(obs);
                if obs.totem_energy > 0 {
                    let mut p = self.params.heretic_sabotage_rate;
                    if watchers > 0 {
                        p *= 1.0 - self.params.heretic_caution;
                    }
                    if self.rng.random::<f64>() < p {
                        return Action::Sabotage;
                    }
                }
                if self.kind == PolicyKind::AttributionHeretic
                    && watchers > 0
                    && self.would_look_internal(obs)
                {
                    // an empty-handed deposit looks like any villager's deposit
                    return Action::Deposit;
                }
                Action::Idle
            }
        }
    }

    fn would_look_internal(&self, obs: &Observation) -> bool {
        let probe = Observed {
            actor: self.id,
            action: ActionKind::Idle,
            class: obs.location_class(obs.position),
        };
        let mut t = self.tracker.clone();
        let stats = t.observe(probe);
        attribute(&stats, self.params.thresholds).kind == JudgmentKind::Internal
    }

    /// Accusation to voice during discussion.
    pub fn accuse(
        &mut self,
        obs: &Observation,
        beliefs: Option<&mut BeliefMatrix>,
    ) -> Result<Option<AgentId>, PolicyError> {
        Ok(match self.kind {
            PolicyKind::Idle | PolicyKind::BaselineHeretic => None,
            PolicyKind::BaselineVillager => self.evidence_target(obs),
            PolicyKind::AttributionVillager => {
                let b = self.require(beliefs)?;
                cast_vote(b, self.id, obs.living, self.params.accusation_threshold)
            }
            PolicyKind::AttributionHeretic => self.frame_target(obs),
        })
    }

    /// Ballot for the vote.
    pub fn vote(
        &mut self,
        obs: &Observation,
        beliefs: Option<&mut BeliefMatrix>,
    ) -> Result<Option<AgentId>, PolicyError> {
        Ok(match self.kind {
            PolicyKind::Idle => None,
            PolicyKind::BaselineVillager => self.evidence_target(obs),
            PolicyKind::AttributionVillager => {
                let b = self.require(beliefs)?;
                cast_vote(b, self.id, obs.living, self.params.accusation_threshold)
            }
            PolicyKind::BaselineHeretic => {
                let others: Vec<AgentId> = obs
                    .living
                    .iter()
                    .filter(|&t| t != self.id && !self.teammates.contains(t))
                    .collect();
                others.choose(&mut self.rng).copied()
            }
            PolicyKind::AttributionHeretic => self.frame_target(obs),
        })
    }

    /// Agent an eliminated Hunter takes down with it.
    pub fn hunter_shot(
        &mut self,
        living: AgentSet,
        beliefs: Option<&mut BeliefMatrix>,
    ) -> Result<Option<AgentId>, PolicyError> {
        if self.overlay != Overlay::Hunter {
            return Ok(None);
        }
        Ok(match self.kind {
            PolicyKind::Idle => None,
            PolicyKind::AttributionVillager => {
                let b = self.require(beliefs)?;
                cast_vote(b, self.id, living, 0.0)
            }
            _ => {
                let seen = self
                    .witnessed_sabotage
                    .iter()
                    .find(|&t| living.contains(t) && t != self.id);
                seen.or_else(|| {
                    let others: Vec<AgentId> = living.iter().filter(|&t| t != self.id).collect();
                    others.choose(&mut self.rng).copied()
                })
            }
        })
    }

    fn evidence_target(&self, obs: &Observation) -> Option<AgentId> {
        obs.known_roles
            .iter()
            .find(|(t, r)| r.is_heretic() && obs.living.contains(*t))
            .map(|&(t, _)| t)
            .or_else(|| {
                self.witnessed_sabotage
                    .iter()
                    .find(|&t| obs.living.contains(t) && t != self.id)
            })
    }

    /// The loudest living accuser of a heretic this round; otherwise the
    /// living non-teammate that looks most suspicious to the villagers.
    fn frame_target(&self, obs: &Observation) -> Option<AgentId> {
        let mut counts = [0usize; 16];
        for &(tick, a) in &self.threats {
            if tick == obs.tick && obs.living.contains(a) && !self.teammates.contains(a) {
                counts[a] += 1;
            }
        }
        if let Some(a) = (0..16)
            .filter(|&a| counts[a] > 0)
            .max_by(|&x, &y| counts[x].cmp(&counts[y]).then(y.cmp(&x)))
        {
            return Some(a);
        }
        obs.living
            .iter()
            .filter(|&t| t != self.id && !self.teammates.contains(t))
            .max_by(|&a, &b| {
                self.exposure[a]
                    .total_cmp(&self.exposure[b])
                    .then(b.cmp(&a))
            })
            .filter(|&t| self.exposure[t] >= self.params.heretic_frame_threshold)
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }
}
