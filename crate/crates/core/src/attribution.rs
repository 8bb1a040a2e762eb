//! Covariation-based attribution and the per-target Bayesian belief update.
//!
//! For an observed action `a` by target `i` in location class `l`, an
//! observer computes, over its own episodic memory:
//!
//! * consensus `Con(a, l)`: share of other agents it has seen doing `a` at `l`;
//! * distinctiveness `Dis(i, a)`: `1 -` share of `i`'s actions that are `a`;
//! * consistency `Cons(i, a, l)`: share of `i`'s actions at `l` that are `a`.
//!
//! Low/low/high reads as disposition (internal), high/high/high as
//! circumstance (external). Only interaction-bearing task actions count as
//! evidence; moves and discussion events are excluded. Statistics with no
//! support default to 0.5.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{ActionKind, AgentId, AgentSet, Event, LocationClass};

const ACTIONS: usize = 10;
const CLASSES: usize = 3;
const MAX_AGENTS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("observer {observer} did not witness the event at tick {tick}")]
    UnwitnessedEvent { observer: AgentId, tick: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    pub support: u32,
}

impl Statistic {
    fn ratio(num: u32, den: u32) -> Self {
        if den == 0 {
            Statistic {
                value: 0.5,
                support: 0,
            }
        } else {
            Statistic {
                value: num as f64 / den as f64,
                support: den,
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariationStats {
    pub consensus: Statistic,
    pub distinctiveness: Statistic,
    pub consistency: Statistic,
}

impl CovariationStats {
    pub fn new(consensus: f64, distinctiveness: f64, consistency: f64) -> Self {
        let s = |value: f64| Statistic {
            value: value.clamp(0.0, 1.0),
            support: 1,
        };
        CovariationStats {
            consensus: s(consensus),
            distinctiveness: s(distinctiveness),
            consistency: s(consistency),
        }
    }

    pub fn values(&self) -> (f64, f64, f64) {
        (
            self.consensus.value,
            self.distinctiveness.value,
            self.consistency.value,
        )
    }
}

/// One piece of evidence as the observer perceived it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observed {
    pub actor: AgentId,
    pub action: ActionKind,
    pub class: LocationClass,
}

impl Observed {
    /// Observed form of `event`, or `None` when it carries no covariation
    /// evidence.
    pub fn from_event(
        event: &Event,
        classify: impl Fn(crate::arena::Cell) -> LocationClass,
    ) -> Option<Self> {
        let action = event.action.observed();
        action.is_interaction().then(|| Observed {
            actor: event.actor,
            action,
            class: classify(event.location),
        })
    }
}

/// Recomputes the statistics for `event` from scratch over `history`, which
/// must be the observer's witnessed events up to and including `event`.
pub fn covariation(
    observer: AgentId,
    event: &Event,
    history: &[&Event],
    classify: impl Fn(crate::arena::Cell) -> LocationClass + Copy,
) -> Result<CovariationStats, AttributionError> {
    let unwitnessed = |e: &Event| AttributionError::UnwitnessedEvent {
        observer,
        tick: e.tick,
    };
    if !event.witnesses.contains(observer) {
        return Err(unwitnessed(event));
    }
    if let Some(e) = history.iter().find(|e| !e.witnesses.contains(observer)) {
        return Err(unwitnessed(e));
    }
    let evidence: Vec<Observed> = history
        .iter()
        .filter_map(|e| Observed::from_event(e, classify))
        .collect();
    let target = match Observed::from_event(event, classify) {
        Some(t) => t,
        None => {
            return Ok(CovariationStats {
                consensus: Statistic::ratio(0, 0),
                distinctiveness: Statistic::ratio(0, 0),
                consistency: Statistic::ratio(0, 0),
            })
        }
    };
    Ok(stats_over(&evidence, target))
}

fn stats_over(evidence: &[Observed], t: Observed) -> CovariationStats {
    let mut others = Vec::new();
    let mut doers = Vec::new();
    for o in evidence.iter().filter(|o| o.actor != t.actor) {
        if !others.contains(&o.actor) {
            others.push(o.actor);
        }
        if o.action == t.action && o.class == t.class && !doers.contains(&o.actor) {
            doers.push(o.actor);
        }
    }
    let mine: Vec<&Observed> = evidence.iter().filter(|o| o.actor == t.actor).collect();
    let same_action = mine.iter().filter(|o| o.action == t.action).count() as u32;
    let at_class: Vec<&&Observed> = mine.iter().filter(|o| o.class == t.class).collect();
    let same_at_class = at_class.iter().filter(|o| o.action == t.action).count() as u32;

    let share = Statistic::ratio(same_action, mine.len() as u32);
    CovariationStats {
        consensus: Statistic::ratio(doers.len() as u32, others.len() as u32),
        distinctiveness: Statistic {
            value: if share.support == 0 {
                0.5
            } else {
                1.0 - share.value
            },
            support: share.support,
        },
        consistency: Statistic::ratio(same_at_class, at_class.len() as u32),
    }
}

/// Running counts behind the covariation statistics for one observer.
/// Feeding it the observer's evidence in order gives exactly the values
/// [`covariation`] recomputes from the full history.
#[derive(Clone, Debug)]
pub struct CovariationTracker {
    seen: AgentSet,
    doers: [[AgentSet; CLASSES]; ACTIONS],
    per_actor: Vec<ActorCounts>,
}

#[derive(Clone, Debug, Default)]
struct ActorCounts {
    total: u32,
    by_action: [u32; ACTIONS],
    by_class: [u32; CLASSES],
    by_action_class: [[u32; CLASSES]; ACTIONS],
}

impl Default for CovariationTracker {
    fn default() -> Self {
        CovariationTracker {
            seen: AgentSet::EMPTY,
            doers: [[AgentSet::EMPTY; CLASSES]; ACTIONS],
            per_actor: vec![ActorCounts::default(); MAX_AGENTS],
        }
    }
}

impl CovariationTracker {
    pub fn record(&mut self, o: Observed) {
        let (a, l) = (o.action as usize, o.class.index());
        self.seen.insert(o.actor);
        self.doers[a][l].insert(o.actor);
        let c = &mut self.per_actor[o.actor];
        c.total += 1;
        c.by_action[a] += 1;
        c.by_class[l] += 1;
        c.by_action_class[a][l] += 1;
    }

    pub fn stats(&self, t: Observed) -> CovariationStats {
        let (a, l) = (t.action as usize, t.class.index());
        let mut others = self.seen;
        others.remove(t.actor);
        let mut doers = self.doers[a][l];
        doers.remove(t.actor);
        let c = &self.per_actor[t.actor];
        let share = Statistic::ratio(c.by_action[a], c.total);
        CovariationStats {
            consensus: Statistic::ratio(doers.len() as u32, others.len() as u32),
            distinctiveness: Statistic {
                value: if share.support == 0 {
                    0.5
                } else {
                    1.0 - share.value
                },
                support: share.support,
            },
            consistency: Statistic::ratio(c.by_action_class[a][l], c.by_class[l]),
        }
    }

    /// Records `o` and returns its statistics.
    pub fn observe(&mut self, o: Observed) -> CovariationStats {
        self.record(o);
        self.stats(o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum JudgmentKind {
    Internal,
    External,
    Ambiguous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionJudgment {
    pub kind: JudgmentKind,
    pub strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            low: 1.0 / 3.0,
            high: 2.0 / 3.0,
        }
    }
}

pub fn attribute(stats: &CovariationStats, th: Thresholds) -> AttributionJudgment {
    let (con, dis, cons) = stats.values();
    if con < th.low && dis < th.low && cons > th.high {
        let margin = ((th.low - con) / th.low
            + (th.low - dis) / th.low
            + (cons - th.high) / (1.0 - th.high))
            / 3.0;
        AttributionJudgment {
            kind: JudgmentKind::Internal,
            strength: margin.clamp(0.0, 1.0),
        }
    } else if con > th.high && dis > th.high && cons > th.high {
        let span = 1.0 - th.high;
        let margin =
            ((con - th.high) / span + (dis - th.high) / span + (cons - th.high) / span) / 3.0;
        AttributionJudgment {
            kind: JudgmentKind::External,
            strength: margin.clamp(0.0, 1.0),
        }
    } else {
        AttributionJudgment {
            kind: JudgmentKind::Ambiguous,
            strength: 0.0,
        }
    }
}

/// Likelihood of an observed action under the heretic and villager
/// hypotheses. All values are clamped to `[0.01, 0.99]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodTable {
    /// `P(sabotage | heretic)`; the villager side is `1 -` this.
    pub sabotage: f64,
    /// Shift away from 0.5 for an internally attributed action, per unit
    /// strength.
    pub internal_scale: f64,
    /// Shift away from 0.5 on the accused for a public accusation, scaled
    /// by how much the listener trusts the accuser.
    pub accusation_scale: f64,
    /// Shift on a voter once the agent it voted out is revealed.
    pub ballot_scale: f64,
}

impl LikelihoodTable {
    /// Values fitted with the arena tuning sweep; the default policy uses
    /// these.
    pub const CALIBRATED: LikelihoodTable = LikelihoodTable {
        sabotage: 0.874,
        internal_scale: 0.4,
        accusation_scale: 0.239,
        ballot_scale: 0.115,
    };
}

impl Default for LikelihoodTable {
    fn default() -> Self {
        LikelihoodTable {
            sabotage: 0.95,
            internal_scale: 0.3,
            accusation_scale: 0.2,
            ballot_scale: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    Heretic,
    Villager,
}

fn clamp_lik(p: f64) -> f64 {
    p.clamp(0.01, 0.99)
}

impl LikelihoodTable {
    /// `(P(E | heretic), P(E | villager))` for an observed action.
    pub fn pair(&self, action: ActionKind, judgment: &AttributionJudgment) -> (f64, f64) {
        match action.observed() {
            ActionKind::Sabotage => (clamp_lik(self.sabotage), clamp_lik(1.0 - self.sabotage)),
            _ => match judgment.kind {
                JudgmentKind::Internal => {
                    let d = self.internal_scale * judgment.strength;
                    (clamp_lik(0.5 + d), clamp_lik(0.5 - d))
                }
                JudgmentKind::External | JudgmentKind::Ambiguous => (0.5, 0.5),
            },
        }
    }

    pub fn likelihood(
        &self,
        action: ActionKind,
        judgment: &AttributionJudgment,
        h: Hypothesis,
    ) -> f64 {
        let (heretic, villager) = self.pair(action, judgment);
        match h {
            Hypothesis::Heretic => heretic,
            Hypothesis::Villager => villager,
        }
    }

    /// Evidence on the accused from an accusation by a speaker the listener
    /// believes is a heretic with probability `accuser_belief`.
    pub fn accusation_pair(&self, accuser_belief: f64) -> (f64, f64) {
        let d = self.accusation_scale * (1.0 - 2.0 * accuser_belief.clamp(0.0, 1.0));
        (clamp_lik(0.5 + d), clamp_lik(0.5 - d))
    }

    /// Evidence on an accuser whose target the listener knows is innocent.
    pub fn false_accusation_pair(&self) -> (f64, f64) {
        let d = self.accusation_scale / 2.0;
        (clamp_lik(0.5 + d), clamp_lik(0.5 - d))
    }

    /// Evidence on a voter after the agent it helped eliminate is revealed.
    pub fn ballot_pair(&self, revealed_heretic: bool) -> (f64, f64) {
        let d = if revealed_heretic {
            -self.ballot_scale
        } else {
            self.ballot_scale
        };
        (clamp_lik(0.5 + d), clamp_lik(0.5 - d))
    }
}

/// Per-observer, per-target probability that the target is a heretic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefMatrix {
    n: usize,
    prior: f64,
    beliefs: Vec<f64>,
    #[serde(skip)]
    touches: Vec<u64>,
}

pub const HERETIC_BASE_RATE: f64 = 2.0 / 9.0;

impl BeliefMatrix {
    pub fn new(n: usize, prior: f64) -> Self {
        let prior = prior.clamp(0.0, 1.0);
        BeliefMatrix {
            n,
            prior,
            beliefs: vec![prior; n * n],
            touches: vec![0; n],
        }
    }

    pub fn with_base_rate(n: usize) -> Self {
        Self::new(n, HERETIC_BASE_RATE)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// Pins the observer's belief about itself to its known role.
    pub fn know_self(&mut self, observer: AgentId, is_heretic: bool) {
        self.set(observer, observer, if is_heretic { 1.0 } else { 0.0 });
    }

    pub fn get(&self, observer: AgentId, target: AgentId) -> f64 {
        self.beliefs[observer * self.n + target]
    }

    pub fn set(&mut self, observer: AgentId, target: AgentId, p: f64) {
        self.touches[observer] += 1;
        self.beliefs[observer * self.n + target] = p.clamp(0.0, 1.0);
    }

    pub fn row(&self, observer: AgentId) -> &[f64] {
        &self.beliefs[observer * self.n..(observer + 1) * self.n]
    }

    /// Number of writes made to `observer`'s row.
    pub fn touches(&self, observer: AgentId) -> u64 {
        self.touches.get(observer).copied().unwrap_or(0)
    }

    /// Two-hypothesis normalized Bayes step on one entry.
    pub fn update(
        &mut self,
        observer: AgentId,
        target: AgentId,
        lik_heretic: f64,
        lik_villager: f64,
    ) -> f64 {
        let b = self.get(observer, target);
        let post = posterior(b, lik_heretic, lik_villager);
        self.set(observer, target, post);
        post
    }
}

/// `b * lh / (b * lh + (1 - b) * lv)`.
pub fn posterior(b: f64, lik_heretic: f64, lik_villager: f64) -> f64 {
    if lik_heretic == lik_villager {
        return b;
    }
    let num = b * lik_heretic;
    let den = num + (1.0 - b) * lik_villager;
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::Cell;
    use proptest::prelude::*;

    const SITE: Cell = Cell::new(1, 1);
    const TOTEM: Cell = Cell::new(5, 5);

    fn classify(c: Cell) -> LocationClass {
        if c == TOTEM {
            LocationClass::Totem
        } else if c == SITE {
            LocationClass::Site
        } else {
            LocationClass::Open
        }
    }

    fn ev(
        tick: u64,
        actor: AgentId,
        action: ActionKind,
        location: Cell,
        witnesses: &[AgentId],
    ) -> Event {
        Event {
            tick,
            actor,
            action,
            location,
            target: None,
            heading: None,
            amount: 0,
            revealed: None,
            witnesses: witnesses.iter().copied().collect(),
        }
    }

    #[test]
    fn lone_event_uses_default_consensus() {
        let e = ev(0, 3, ActionKind::Harvest, SITE, &[0, 3]);
        let s = covariation(0, &e, &[&e], classify).unwrap();
        assert_eq!(s.consensus.value, 0.5);
        assert_eq!(s.consensus.support, 0);
        assert_eq!(s.consistency.value, 1.0);
        assert_eq!(s.consistency.support, 1);
    }

    #[test]
    fn unanimous_consensus() {
        let mut hist: Vec<Event> = (4..8)
            .map(|a| ev(0, a, ActionKind::Harvest, SITE, &[0]))
            .collect();
        hist.push(ev(1, 3, ActionKind::Harvest, SITE, &[0]));
        let refs: Vec<&Event> = hist.iter().collect();
        let s = covariation(0, hist.last().unwrap(), &refs, classify).unwrap();
        assert_eq!(s.consensus.value, 1.0);
        assert_eq!(s.consensus.support, 4);
    }

    #[test]
    fn fake_task_counts_as_observed_harvest() {
        let hist = [
            ev(0, 4, ActionKind::Harvest, SITE, &[0]),
            ev(1, 7, ActionKind::FakeTask, SITE, &[0]),
        ];
        let refs: Vec<&Event> = hist.iter().collect();
        let s = covariation(0, &hist[1], &refs, classify).unwrap();
        assert_eq!(s.consensus.value, 1.0);
    }

    #[test]
    fn unwitnessed_event_is_rejected() {
        let e = ev(4, 3, ActionKind::Harvest, SITE, &[1]);
        assert_eq!(
            covariation(0, &e, &[], classify),
            Err(AttributionError::UnwitnessedEvent {
                observer: 0,
                tick: 4
            })
        );
    }

    /// Independent recount over the raw list, written longhand.
    fn recount(observer_history: &[Event], target: &Event) -> (f64, f64, f64) {
        let obs = |e: &Event| e.action.observed();
        let ev_list: Vec<&Event> = observer_history
            .iter()
            .filter(|e| obs(e).is_interaction())
            .collect();
        let a = obs(target);
        let l = classify(target.location);
        let i = target.actor;
        let mut other_agents = std::collections::BTreeSet::new();
        let mut doing = std::collections::BTreeSet::new();
        let (mut n_i, mut n_ia, mut n_il, mut n_ial) = (0, 0, 0, 0);
        for e in &ev_list {
            if e.actor != i {
                other_agents.insert(e.actor);
                if obs(e) == a && classify(e.location) == l {
                    doing.insert(e.actor);
                }
            } else {
                n_i += 1;
                if obs(e) == a {
                    n_ia += 1;
                }
                if classify(e.location) == l {
                    n_il += 1;
                    if obs(e) == a {
                        n_ial += 1;
                    }
                }
            }
        }
        let con = if other_agents.is_empty() {
            0.5
        } else {
            doing.len() as f64 / other_agents.len() as f64
        };
        let dis = if n_i == 0 {
            0.5
        } else {
            1.0 - n_ia as f64 / n_i as f64
        };
        let cons = if n_il == 0 {
            0.5
        } else {
            n_ial as f64 / n_il as f64
        };
        (con, dis, cons)
    }

    #[test]
    fn scripted_history_matches_recount() {
        // three agents (1, 2, 3) at two locations, observer 0
        use ActionKind::*;
        let script = [
            (1, Harvest, SITE),
            (2, Harvest, SITE),
            (3, Idle, TOTEM),
            (1, Deposit, TOTEM),
            (3, Idle, TOTEM),
            (2, Move, TOTEM),
            (3, FakeTask, SITE),
            (2, Deposit, TOTEM),
            (3, Idle, TOTEM),
            (1, Harvest, SITE),
        ];
        let hist: Vec<Event> = script
            .iter()
            .enumerate()
            .map(|(t, &(a, k, l))| ev(t as u64, a, k, l, &[0, a]))
            .collect();
        let mut tracker = CovariationTracker::default();
        for (k, e) in hist.iter().enumerate() {
            let refs: Vec<&Event> = hist[..=k].iter().collect();
            let fresh = covariation(0, e, &refs, classify).unwrap();
            if let Some(o) = Observed::from_event(e, classify) {
                let inc = tracker.observe(o);
                assert_eq!(inc, fresh, "event {k}");
                let (con, dis, cons) = recount(&hist[..=k], e);
                assert_eq!(fresh.values(), (con, dis, cons), "event {k}");
            }
        }
        // heretic 3 idling at the totem: nobody else does, mostly idle, always idle there
        let last_idle = &hist[8];
        let refs: Vec<&Event> = hist.iter().collect();
        let s = covariation(0, last_idle, &refs, classify).unwrap();
        assert_eq!(s.consensus.value, 0.0);
        assert!((s.distinctiveness.value - 0.25).abs() < 1e-12);
        assert_eq!(s.consistency.value, 1.0);
        assert_eq!(
            attribute(&s, Thresholds::default()).kind,
            JudgmentKind::Internal
        );
    }

    #[test]
    fn attribution_patterns() {
        let th = Thresholds::default();
        let j = attribute(&CovariationStats::new(0.1, 0.1, 0.9), th);
        assert_eq!(j.kind, JudgmentKind::Internal);
        assert!(j.strength > 0.0 && j.strength <= 1.0);
        assert_eq!(
            attribute(&CovariationStats::new(0.9, 0.9, 0.9), th).kind,
            JudgmentKind::External
        );
        let j = attribute(&CovariationStats::new(0.5, 0.5, 0.5), th);
        assert_eq!(j.kind, JudgmentKind::Ambiguous);
        assert_eq!(j.strength, 0.0);
        let full = attribute(&CovariationStats::new(0.0, 0.0, 1.0), th);
        assert!((full.strength - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_table_entries() {
        let t = LikelihoodTable::default();
        let amb = AttributionJudgment {
            kind: JudgmentKind::Ambiguous,
            strength: 0.0,
        };
        let (h, v) = t.pair(ActionKind::Sabotage, &amb);
        assert!((h - 0.95).abs() < 1e-12 && (v - 0.05).abs() < 1e-12);
        assert_eq!(t.pair(ActionKind::Harvest, &amb), (0.5, 0.5));
        let strong = AttributionJudgment {
            kind: JudgmentKind::Internal,
            strength: 1.0,
        };
        let (h, v) = t.pair(ActionKind::Harvest, &strong);
        assert!((h - 0.8).abs() < 1e-12 && (v - 0.2).abs() < 1e-12);
        assert_eq!(
            t.likelihood(ActionKind::Idle, &strong, Hypothesis::Heretic),
            h
        );
        let ext = AttributionJudgment {
            kind: JudgmentKind::External,
            strength: 0.9,
        };
        assert_eq!(t.pair(ActionKind::Deposit, &ext), (0.5, 0.5));
        assert_eq!(t.accusation_pair(0.5), (0.5, 0.5));
        let (h, _) = t.accusation_pair(0.0);
        assert!((h - 0.7).abs() < 1e-12);
    }

    #[test]
    fn update_examples() {
        let mut m = BeliefMatrix::new(9, 0.222);
        assert_eq!(m.update(0, 1, 0.5, 0.5), 0.222);
        let p = m.update(0, 2, 0.95, 0.05);
        let oracle = 0.222 * 0.95 / (0.222 * 0.95 + 0.778 * 0.05);
        assert!((p - oracle).abs() < 1e-15);
        assert!((p - 0.8443).abs() < 1e-4);
        assert_eq!(m.get(1, 2), 0.222, "other entries untouched");
        m.know_self(3, true);
        assert_eq!(m.get(3, 3), 1.0);
        assert!((m.prior() - 0.222).abs() < 1e-15);
        assert!((BeliefMatrix::with_base_rate(9).prior() - 2.0 / 9.0).abs() < 1e-15);
    }

    /// Batch posterior from the product of likelihood ratios.
    fn batch(prior: f64, evidence: &[(f64, f64)]) -> f64 {
        let (ph, pv) = evidence
            .iter()
            .fold((prior, 1.0 - prior), |(h, v), &(lh, lv)| (h * lh, v * lv));
        ph / (ph + pv)
    }

    proptest! {
        #[test]
        fn sequential_equals_batch(
            prior in 0.01f64..0.99,
            evidence in prop::collection::vec((0.01f64..0.99, 0.01f64..0.99), 0..20),
        ) {
            let mut b = prior;
            for &(lh, lv) in &evidence {
                b = posterior(b, lh, lv);
                prop_assert!((0.0..=1.0).contains(&b));
            }
            prop_assert!((b - batch(prior, &evidence)).abs() < 1e-9);
        }

        #[test]
        fn uninformative_is_fixed_point(b in 0.0f64..=1.0, c in 0.01f64..0.99) {
            prop_assert_eq!(posterior(b, c, c), b);
        }

        #[test]
        fn favourable_evidence_raises_belief(b in 0.001f64..0.999, lv in 0.01f64..0.98, bump in 0.001f64..0.5) {
            let lh = (lv + bump).min(0.99);
            prop_assume!(lh > lv);
            prop_assert!(posterior(b, lh, lv) > b);
        }

        #[test]
        fn tracker_matches_recompute(script in prop::collection::vec((1usize..6, 0usize..6, 0usize..3), 1..40)) {
            use ActionKind::*;
            let kinds = [Harvest, FakeTask, Deposit, Idle, Move, Sabotage];
            let cells = [SITE, TOTEM, Cell::new(9, 9)];
            let hist: Vec<Event> = script
                .iter()
                .enumerate()
                .map(|(t, &(a, k, l))| ev(t as u64, a, kinds[k], cells[l], &[0]))
                .collect();
            let mut tracker = CovariationTracker::default();
            for (k, e) in hist.iter().enumerate() {
                if let Some(o) = Observed::from_event(e, classify) {
                    let refs: Vec<&Event> = hist[..=k].iter().collect();
                    prop_assert_eq!(tracker.observe(o), covariation(0, e, &refs, classify).unwrap());
                }
            }
        }
    }
}
