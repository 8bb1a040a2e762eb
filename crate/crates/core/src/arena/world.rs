use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    in_field_of_view, Action, ActionKind, AgentId, AgentSet, ArenaError, Cell, Event, Faction,
    GameConfig, Heading, LocationClass, Role, Winner,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    TaskPhase,
    DiscussionVote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub role: Role,
    pub position: Cell,
    pub heading: Heading,
    pub alive: bool,
    pub carrying_energy: u32,
    pub harvest_progress: u32,
    /// Indices into the world event log, in order.
    pub episodic_memory: Vec<usize>,
    /// Roles learned through private inspection.
    pub known_roles: Vec<(AgentId, Role)>,
    pub eliminated_at: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibleAgent {
    pub id: AgentId,
    pub position: Cell,
    pub heading: Heading,
}

/// What one living agent perceives at the current tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub agent: AgentId,
    pub role: Role,
    pub tick: u64,
    pub phase: Phase,
    pub position: Cell,
    pub heading: Heading,
    pub carrying: u32,
    pub harvest_progress: u32,
    pub carry_cap: u32,
    pub harvest_ticks: u32,
    pub totem: Cell,
    pub totem_energy: u32,
    pub totem_target: u32,
    pub sites: Vec<Cell>,
    pub grid: (i32, i32),
    pub visible_agents: Vec<VisibleAgent>,
    /// Latest tick's events within view, in their observed form.
    pub visible_events: Vec<Event>,
    pub living: AgentSet,
    pub known_roles: Vec<(AgentId, Role)>,
    pub can_inspect: bool,
}

impl Observation {
    pub fn location_class(&self, c: Cell) -> LocationClass {
        if c == self.totem {
            LocationClass::Totem
        } else if self.sites.contains(&c) {
            LocationClass::Site
        } else {
            LocationClass::Open
        }
    }

    pub fn sees(&self, id: AgentId) -> bool {
        self.visible_agents.iter().any(|a| a.id == id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub config: GameConfig,
    pub agents: Vec<AgentState>,
    pub totem_energy: u32,
    pub tick: u64,
    pub phase: Phase,
    pub event_log: Vec<Event>,
    pub eliminated_this_round: Option<AgentId>,
    sites: Vec<Cell>,
    totem: Cell,
    inspected_this_round: bool,
    latest_step: std::ops::Range<usize>,
    pub harvested_total: u64,
    pub sabotaged_total: u64,
}

impl WorldState {
    /// Builds a world with the given roles, placing agents on random cells
    /// with random headings drawn from `rng`.
    pub fn new(config: GameConfig, roles: &[Role], rng: &mut impl Rng) -> Result<Self, ArenaError> {
        config.validate()?;
        let agents = roles
            .iter()
            .enumerate()
            .map(|(id, &role)| AgentState {
                id,
                role,
                position: Cell::new(
                    rng.random_range(0..config.grid_width),
                    rng.random_range(0..config.grid_height),
                ),
                heading: Heading::ALL[rng.random_range(0..8)],
                alive: true,
                carrying_energy: 0,
                harvest_progress: 0,
                episodic_memory: Vec::new(),
                known_roles: Vec::new(),
                eliminated_at: None,
            })
            .collect();
        Ok(Self::from_agents(config, agents))
    }

    pub fn from_agents(config: GameConfig, agents: Vec<AgentState>) -> Self {
        WorldState {
            sites: config.site_cells(),
            totem: config.totem_cell(),
            config,
            agents,
            totem_energy: 0,
            tick: 0,
            phase: Phase::TaskPhase,
            event_log: Vec::new(),
            eliminated_this_round: None,
            inspected_this_round: false,
            latest_step: 0..0,
            harvested_total: 0,
            sabotaged_total: 0,
        }
    }

    pub fn sites(&self) -> &[Cell] {
        &self.sites
    }

    pub fn totem(&self) -> Cell {
        self.totem
    }

    pub fn location_class(&self, c: Cell) -> LocationClass {
        if c == self.totem {
            LocationClass::Totem
        } else if self.sites.contains(&c) {
            LocationClass::Site
        } else {
            LocationClass::Open
        }
    }

    pub fn living(&self) -> AgentSet {
        self.agents
            .iter()
            .filter(|a| a.alive)
            .map(|a| a.id)
            .collect()
    }

    pub fn living_count(&self, faction: Faction) -> usize {
        self.agents
            .iter()
            .filter(|a| a.alive && a.role.faction() == faction)
            .count()
    }

    fn agent(&self, id: AgentId) -> Result<&AgentState, ArenaError> {
        self.agents.get(id).ok_or(ArenaError::UnknownAgent(id))
    }

    /// Whether living agent `observer` can see `target` right now.
    pub fn can_see(&self, observer: AgentId, target: Cell) -> bool {
        let a = &self.agents[observer];
        a.alive && in_field_of_view(a.position, a.heading, self.config.fov_range, target)
    }

    fn witnesses_of(&self, location: Cell) -> AgentSet {
        self.agents
            .iter()
            .filter(|a| {
                a.alive && in_field_of_view(a.position, a.heading, self.config.fov_range, location)
            })
            .map(|a| a.id)
            .collect()
    }

    pub fn latest_events(&self) -> &[Event] {
        &self.event_log[self.latest_step.clone()]
    }

    pub fn observe(&self, id: AgentId) -> Result<Observation, ArenaError> {
        let me = self.agent(id)?;
        if !me.alive {
            return Err(ArenaError::ObservingDeadAgent(id));
        }
        let visible_agents = self
            .agents
            .iter()
            .filter(|a| a.id != id && a.alive && self.can_see(id, a.position))
            .map(|a| VisibleAgent {
                id: a.id,
                position: a.position,
                heading: a.heading,
            })
            .collect();
        let visible_events = self
            .latest_events()
            .iter()
            .filter(|e| e.witnesses.contains(id))
            .map(|e| observed_form(e, id))
            .collect();
        Ok(Observation {
            agent: id,
            role: me.role,
            tick: self.tick,
            phase: self.phase,
            position: me.position,
            heading: me.heading,
            carrying: me.carrying_energy,
            harvest_progress: me.harvest_progress,
            carry_cap: self.config.carry_cap,
            harvest_ticks: self.config.harvest_ticks,
            totem: self.totem,
            totem_energy: self.totem_energy,
            totem_target: self.config.totem_target,
            sites: self.sites.clone(),
            grid: (self.config.grid_width, self.config.grid_height),
            visible_agents,
            visible_events,
            living: self.living(),
            known_roles: me.known_roles.clone(),
            can_inspect: me.role == Role::Prophet && !self.inspected_this_round,
        })
    }

    fn check_action(&self, id: AgentId, action: Action) -> Result<(), ArenaError> {
        let a = self.agent(id)?;
        let illegal = |reason: &str| {
            Err(ArenaError::IllegalAction {
                agent: id,
                reason: reason.to_string(),
            })
        };
        if !a.alive {
            return illegal("agent is dead");
        }
        match action {
            Action::Sabotage if a.role != Role::Heretic => illegal("only heretics sabotage"),
            Action::FakeTask if a.role != Role::Heretic => illegal("only heretics fake tasks"),
            Action::Inspect(_) if a.role != Role::Prophet => illegal("only the prophet inspects"),
            Action::Inspect(_) if self.inspected_this_round => {
                illegal("inspection already used this round")
            }
            Action::Inspect(t) if t == id || t >= self.agents.len() || !self.agents[t].alive => {
                illegal("inspection target must be another living agent")
            }
            _ => Ok(()),
        }
    }

    /// Advances one task-phase tick. Every living agent without an entry in
    /// `actions` idles. Moves resolve first; all other actions then resolve
    /// at the post-move positions, deposits before sabotage. The whole tick
    /// is rejected if any action is illegal.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, Action>) -> Result<Vec<Event>, ArenaError> {
        if self.phase != Phase::TaskPhase {
            return Err(ArenaError::WrongPhase(Phase::TaskPhase));
        }
        for (&id, &action) in actions {
            self.check_action(id, action)?;
        }
        let tick = self.tick;
        let act = |id: AgentId| actions.get(&id).copied().unwrap_or(Action::Idle);
        let living: Vec<AgentId> = self.living().iter().collect();

        // post-move poses, validated before anything is committed
        let mut poses: Vec<(Cell, Heading)> = self
            .agents
            .iter()
            .map(|a| (a.position, a.heading))
            .collect();
        for &id in &living {
            if let Action::Move(h) = act(id) {
                let next = poses[id].0.step(h);
                if self.config.in_bounds(next) {
                    poses[id].0 = next;
                }
                poses[id].1 = h;
            }
        }
        for &id in &living {
            let pos = poses[id].0;
            let reason = match act(id) {
                Action::Harvest if !self.sites.contains(&pos) => {
                    Some("harvest requires an energy site".to_string())
                }
                Action::Deposit if pos != self.totem => Some("deposit requires the totem".into()),
                Action::Sabotage if pos != self.totem => Some("sabotage requires the totem".into()),
                // the prophet picks from what it saw before anyone moved
                Action::Inspect(t) if !self.can_see(id, self.agents[t].position) => {
                    Some(format!("inspection target {t} not in view"))
                }
                _ => None,
            };
            if let Some(reason) = reason {
                return Err(ArenaError::IllegalAction { agent: id, reason });
            }
        }
        for &id in &living {
            let a = &mut self.agents[id];
            if matches!(act(id), Action::Move(_)) {
                a.harvest_progress = 0;
            }
            (a.position, a.heading) = poses[id];
        }

        let mut events = Vec::with_capacity(living.len());
        let mut deposits = Vec::new();
        let mut sabotages = Vec::new();
        for &id in &living {
            let action = act(id);
            let a = &mut self.agents[id];
            let mut ev = Event {
                tick,
                actor: id,
                action: action.kind(),
                location: a.position,
                target: None,
                heading: None,
                amount: 0,
                revealed: None,
                witnesses: AgentSet::EMPTY,
            };
            match action {
                Action::Move(h) => ev.heading = Some(h),
                Action::Harvest => {
                    a.harvest_progress = (a.harvest_progress + 1).min(self.config.harvest_ticks);
                    if a.harvest_progress >= self.config.harvest_ticks
                        && a.carrying_energy < self.config.carry_cap
                    {
                        a.carrying_energy += 1;
                        a.harvest_progress = 0;
                        ev.amount = 1;
                        self.harvested_total += 1;
                    }
                }
                Action::FakeTask | Action::Idle => a.harvest_progress = 0,
                Action::Inspect(t) => {
                    a.harvest_progress = 0;
                    ev.target = Some(t);
                }
                Action::Deposit => {
                    a.harvest_progress = 0;
                    deposits.push(events.len());
                }
                Action::Sabotage => {
                    a.harvest_progress = 0;
                    sabotages.push(events.len());
                }
            }
            events.push(ev);
        }

        for idx in deposits {
            let id = events[idx].actor;
            let room = self.config.totem_target.saturating_sub(self.totem_energy);
            let amt = self.agents[id].carrying_energy.min(room);
            self.agents[id].carrying_energy -= amt;
            self.totem_energy += amt;
            events[idx].amount = amt;
        }
        for idx in sabotages {
            if self.totem_energy > 0 {
                self.totem_energy -= 1;
                self.sabotaged_total += 1;
                events[idx].amount = 1;
            }
        }
        for ev in events.iter() {
            if let (ActionKind::Inspect, Some(t)) = (ev.action, ev.target) {
                let role = self.agents[t].role;
                self.agents[ev.actor].known_roles.push((t, role));
                self.inspected_this_round = true;
            }
        }

        for ev in events.iter_mut() {
            ev.witnesses = self.witnesses_of(ev.location);
        }
        let start = self.event_log.len();
        self.record(&events);
        self.latest_step = start..self.event_log.len();

        self.tick += 1;
        if self.tick.is_multiple_of(self.config.ticks_per_round) {
            self.phase = Phase::DiscussionVote;
        }
        Ok(events)
    }

    fn record(&mut self, events: &[Event]) {
        for ev in events {
            let idx = self.event_log.len();
            for w in ev.witnesses.iter() {
                self.agents[w].episodic_memory.push(idx);
            }
            self.event_log.push(ev.clone());
        }
    }

    fn public_event(&self, actor: AgentId, action: ActionKind, target: Option<AgentId>) -> Event {
        Event {
            tick: self.tick,
            actor,
            action,
            location: self.agents[actor].position,
            target,
            heading: None,
            amount: 0,
            revealed: None,
            witnesses: self.living(),
        }
    }

    /// Records public accusations `(accuser, accused)` during discussion.
    pub fn discuss(
        &mut self,
        accusations: &[(AgentId, AgentId)],
    ) -> Result<Vec<Event>, ArenaError> {
        if self.phase != Phase::DiscussionVote {
            return Err(ArenaError::WrongPhase(Phase::DiscussionVote));
        }
        for &(from, to) in accusations {
            if !self.agent(from)?.alive {
                return Err(ArenaError::IllegalAction {
                    agent: from,
                    reason: "dead agents cannot accuse".into(),
                });
            }
            if !self.agent(to)?.alive {
                return Err(ArenaError::DeadTarget(to));
            }
        }
        let events: Vec<Event> = accusations
            .iter()
            .map(|&(from, to)| self.public_event(from, ActionKind::Accuse, Some(to)))
            .collect();
        let start = self.event_log.len();
        self.record(&events);
        self.latest_step = start..self.event_log.len();
        Ok(events)
    }

    fn eliminate(&mut self, id: AgentId, by_hunter: Option<AgentId>) -> Event {
        let mut ev = self.public_event(id, ActionKind::Eliminate, by_hunter);
        ev.revealed = Some(self.agents[id].role);
        let a = &mut self.agents[id];
        a.alive = false;
        a.eliminated_at = Some(self.tick);
        ev
    }

    /// Tallies ballots; a strict plurality among non-abstaining ballots
    /// eliminates its target. An eliminated Hunter immediately fires at the
    /// agent chosen by `hunter_shot`. Returns the events and the eliminated
    /// agents in order, and returns the world to the task phase.
    pub fn resolve_vote<F>(
        &mut self,
        ballots: &BTreeMap<AgentId, Option<AgentId>>,
        mut hunter_shot: F,
    ) -> Result<(Vec<Event>, Vec<AgentId>), ArenaError>
    where
        F: FnMut(&WorldState, AgentId) -> Option<AgentId>,
    {
        if self.phase != Phase::DiscussionVote {
            return Err(ArenaError::WrongPhase(Phase::DiscussionVote));
        }
        for (&voter, &target) in ballots {
            if !self.agent(voter)?.alive {
                return Err(ArenaError::DeadVoter(voter));
            }
            if let Some(t) = target {
                if !self.agent(t)?.alive {
                    return Err(ArenaError::DeadTarget(t));
                }
            }
        }

        let mut events: Vec<Event> = ballots
            .iter()
            .map(|(&v, &t)| self.public_event(v, ActionKind::Vote, t))
            .collect();
        let mut tally: BTreeMap<AgentId, usize> = BTreeMap::new();
        for t in ballots.values().flatten() {
            *tally.entry(*t).or_insert(0) += 1;
        }
        let top = tally.values().copied().max().unwrap_or(0);
        let leaders: Vec<AgentId> = tally
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&t, _)| t)
            .collect();

        let mut eliminated = Vec::new();
        if top > 0 && leaders.len() == 1 {
            let out = leaders[0];
            events.push(self.eliminate(out, None));
            eliminated.push(out);
            if self.agents[out].role == Role::Hunter {
                if let Some(shot) = hunter_shot(self, out) {
                    if shot != out && shot < self.agents.len() && self.agents[shot].alive {
                        events.push(self.eliminate(shot, Some(out)));
                        eliminated.push(shot);
                    }
                }
            }
        }
        // eliminations happen after ballots, so only the living hear them
        let living = self.living();
        for ev in events.iter_mut() {
            if ev.action == ActionKind::Eliminate {
                ev.witnesses = living;
            }
        }

        let start = self.event_log.len();
        self.record(&events);
        self.latest_step = start..self.event_log.len();
        self.eliminated_this_round = eliminated.first().copied();
        self.inspected_this_round = false;
        self.phase = Phase::TaskPhase;
        Ok((events, eliminated))
    }

    pub fn check_win(&self) -> Option<Winner> {
        let heretics = self.living_count(Faction::Heretics);
        let villagers = self.living_count(Faction::Villagers);
        if self.totem_energy >= self.config.totem_target {
            Some(Winner::VillagersByTasks)
        } else if heretics == 0 {
            Some(Winner::VillagersByElimination)
        } else if heretics >= villagers {
            Some(Winner::HereticsByParity)
        } else if self.tick >= self.config.max_ticks {
            Some(Winner::HereticsByTimer)
        } else {
            None
        }
    }
}

/// The event as `observer` perceives it: disguised actions are rewritten and
/// private details stripped unless the observer is the actor.
pub fn observed_form(e: &Event, observer: AgentId) -> Event {
    if e.actor == observer {
        return e.clone();
    }
    let mut seen = e.clone();
    seen.action = e.action.observed();
    if matches!(e.action, ActionKind::Inspect) {
        seen.target = None;
    }
    if !e.action.is_public() {
        seen.amount = 0;
    }
    seen
}
