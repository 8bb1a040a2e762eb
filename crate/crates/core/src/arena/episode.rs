use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    world::observed_form, ActionKind, AgentId, AgentSet, ArenaError, Cell, Event, Faction,
    GameConfig, Heading, Phase, Role, Winner, WorldState, CAST_SIZE,
};
use crate::attribution::BeliefMatrix;
use crate::csma::sha256_hex;
use crate::policy::{Agent, PolicyError, PolicyKind, PolicyParams};

pub const LOG_FORMAT_VERSION: u32 = 1;

/// Which policy family each faction runs, plus agents forced to idle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lineup {
    pub villager_attribution: bool,
    pub heretic_attribution: bool,
    /// Agents that idle and abstain for the whole episode.
    #[serde(default)]
    pub idle: AgentSet,
}

impl Lineup {
    pub fn new(villager_attribution: bool, heretic_attribution: bool) -> Self {
        Lineup {
            villager_attribution,
            heretic_attribution,
            idle: AgentSet::EMPTY,
        }
    }

    pub fn with_idle(mut self, idle: AgentSet) -> Self {
        self.idle = idle;
        self
    }

    pub fn kind_for(&self, id: AgentId, role: Role) -> PolicyKind {
        if self.idle.contains(id) {
            return PolicyKind::Idle;
        }
        match (
            role.is_heretic(),
            self.villager_attribution,
            self.heretic_attribution,
        ) {
            (false, true, _) => PolicyKind::AttributionVillager,
            (false, false, _) => PolicyKind::BaselineVillager,
            (true, _, true) => PolicyKind::AttributionHeretic,
            (true, _, false) => PolicyKind::BaselineHeretic,
        }
    }
}

/// An attribution villager's beliefs about the living agents at the start of
/// a discussion phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub tick: u64,
    pub observer: AgentId,
    pub beliefs: Vec<(AgentId, f64)>,
}

/// Energy each agent moved over the episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLedger {
    pub deposited: u32,
    pub sabotaged: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub config: GameConfig,
    pub lineup: Lineup,
    pub params: PolicyParams,
    pub roles: Vec<Role>,
    pub initial: Vec<(Cell, Heading)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub winner: Winner,
    pub duration: u64,
    pub totem_energy: u32,
    pub first_elimination: Option<u64>,
    pub event_hash: String,
}

/// One line of an exported episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Event(Event),
    Beliefs(BeliefSnapshot),
    Summary(LogSummary),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub header: LogHeader,
    pub winner: Winner,
    /// Ticks played.
    pub duration: u64,
    pub totem_energy: u32,
    pub first_elimination: Option<u64>,
    pub events: Vec<Event>,
    pub snapshots: Vec<BeliefSnapshot>,
    pub ledger: Vec<AgentLedger>,
    /// Belief updates applied by each observer.
    pub belief_touches: Vec<u64>,
    pub event_hash: String,
}

impl EpisodeResult {
    pub fn seed(&self) -> u64 {
        self.header.config.seed
    }

    pub fn roles(&self) -> &[Role] {
        &self.header.roles
    }

    pub fn villagers_won(&self) -> bool {
        self.winner.faction() == Faction::Villagers
    }

    /// Tick of the first elimination, or the episode length if nobody died.
    pub fn survival_ticks(&self) -> u64 {
        self.first_elimination.unwrap_or(self.duration)
    }

    pub fn summary(&self) -> LogSummary {
        LogSummary {
            winner: self.winner,
            duration: self.duration,
            totem_energy: self.totem_energy,
            first_elimination: self.first_elimination,
            event_hash: self.event_hash.clone(),
        }
    }

    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = Vec::with_capacity(self.events.len() + self.snapshots.len() + 2);
        out.push(LogRecord::Header(self.header.clone()));
        let mut snaps = self.snapshots.iter().peekable();
        for e in &self.events {
            while let Some(s) = snaps.next_if(|s| s.tick <= e.tick && e.action.is_public()) {
                out.push(LogRecord::Beliefs(s.clone()));
            }
            out.push(LogRecord::Event(e.clone()));
        }
        out.extend(snaps.map(|s| LogRecord::Beliefs(s.clone())));
        out.push(LogRecord::Summary(self.summary()));
        out
    }
}

/// SHA-256 over the canonical JSON lines of an event sequence.
pub fn event_hash(events: &[Event]) -> String {
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e).expect("events serialize");
        buf.push(b'\n');
    }
    sha256_hex(&buf)
}

fn agent_rng(seed: u64, id: AgentId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + id as u64);
    rng
}

struct Cast {
    agents: Vec<Agent>,
    beliefs: BeliefMatrix,
}

impl Cast {
    fn split(&mut self, id: AgentId) -> (&mut Agent, Option<&mut BeliefMatrix>) {
        let agent = &mut self.agents[id];
        let b = agent.kind.uses_beliefs().then_some(&mut self.beliefs);
        (agent, b)
    }

    fn perceive(&mut self, world: &WorldState) -> Result<(), PolicyError> {
        let classify = |c: Cell| world.location_class(c);
        for id in world.living().iter() {
            let seen: Vec<Event> = world
                .latest_events()
                .iter()
                .filter(|e| e.witnesses.contains(id))
                .map(|e| observed_form(e, id))
                .collect();
            if seen.is_empty() {
                continue;
            }
            let (agents, beliefs) = (&mut self.agents, &mut self.beliefs);
            let b = agents[id].kind.uses_beliefs().then_some(beliefs);
            agents[id].perceive(&seen, classify, b)?;
        }
        Ok(())
    }
}

/// Plays one episode to completion. Roles and starting poses come from
/// `config.seed`; each agent draws from its own random stream so that
/// idling one agent leaves the others' randomness untouched.
pub fn run_episode(
    config: &GameConfig,
    lineup: &Lineup,
    params: &PolicyParams,
) -> Result<EpisodeResult, ArenaError> {
    config.validate()?;
    params.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut roles = Role::standard_cast().to_vec();
    roles.shuffle(&mut master);
    let mut world = WorldState::new(config.clone(), &roles, &mut master)?;
    let initial = world
        .agents
        .iter()
        .map(|a| (a.position, a.heading))
        .collect();

    let heretics: AgentSet = (0..CAST_SIZE).filter(|&i| roles[i].is_heretic()).collect();
    let mut beliefs = BeliefMatrix::with_base_rate(CAST_SIZE);
    let agents = (0..CAST_SIZE)
        .map(|id| {
            beliefs.know_self(id, roles[id].is_heretic());
            let mut a = Agent::new(
                id,
                roles[id],
                lineup.kind_for(id, roles[id]),
                params.clone(),
                agent_rng(config.seed, id),
                CAST_SIZE,
            );
            if roles[id].is_heretic() {
                a.set_teammates(heretics);
            }
            a
        })
        .collect();
    let mut cast = Cast { agents, beliefs };

    let mut snapshots = Vec::new();
    let mut first_elimination = None;
    let winner = loop {
        if let Some(w) = world.check_win() {
            break w;
        }
        match world.phase {
            Phase::TaskPhase => {
                let mut actions = BTreeMap::new();
                for id in world.living().iter() {
                    let obs = world.observe(id)?;
                    let (agent, b) = cast.split(id);
                    let action = agent.decide(&obs, b)?;
                    actions.insert(id, action);
                }
                world.step(&actions)?;
                cast.perceive(&world)?;
            }
            Phase::DiscussionVote => {
                let living = world.living();
                for id in living.iter() {
                    if cast.agents[id].kind == PolicyKind::AttributionVillager {
                        snapshots.push(BeliefSnapshot {
                            tick: world.tick,
                            observer: id,
                            beliefs: living
                                .iter()
                                .filter(|&t| t != id)
                                .map(|t| (t, cast.beliefs.get(id, t)))
                                .collect(),
                        });
                    }
                }

                let mut accusations = Vec::new();
                for id in living.iter() {
                    let obs = world.observe(id)?;
                    let (agent, b) = cast.split(id);
                    if let Some(t) = agent.accuse(&obs, b)? {
                        accusations.push((id, t));
                    }
                }
                world.discuss(&accusations)?;
                cast.perceive(&world)?;

                let mut ballots = BTreeMap::new();
                for id in living.iter() {
                    let obs = world.observe(id)?;
                    let (agent, b) = cast.split(id);
                    ballots.insert(id, agent.vote(&obs, b)?);
                }
                let mut shot_error = None;
                let (_, eliminated) = world.resolve_vote(&ballots, |w, hunter| {
                    let (agent, b) = cast.split(hunter);
                    match agent.hunter_shot(w.living(), b) {
                        Ok(t) => t,
                        Err(e) => {
                            shot_error = Some(e);
                            None
                        }
                    }
                })?;
                if let Some(e) = shot_error {
                    return Err(e.into());
                }
                if !eliminated.is_empty() && first_elimination.is_none() {
                    first_elimination = Some(world.tick);
                }
                cast.perceive(&world)?;
            }
        }
    };

    let mut ledger = vec![AgentLedger::default(); CAST_SIZE];
    for e in &world.event_log {
        match e.action {
            ActionKind::Deposit => ledger[e.actor].deposited += e.amount,
            ActionKind::Sabotage => ledger[e.actor].sabotaged += e.amount,
            _ => {}
        }
    }
    let belief_touches = (0..CAST_SIZE).map(|i| cast.beliefs.touches(i)).collect();
    let event_hash = event_hash(&world.event_log);
    Ok(EpisodeResult {
        header: LogHeader {
            format_version: LOG_FORMAT_VERSION,
            config: config.clone(),
            lineup: *lineup,
            params: params.clone(),
            roles,
            initial,
        },
        winner,
        duration: world.tick,
        totem_energy: world.totem_energy,
        first_elimination,
        events: world.event_log,
        snapshots,
        ledger,
        belief_touches,
        event_hash,
    })
}
