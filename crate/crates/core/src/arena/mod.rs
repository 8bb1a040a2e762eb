//! Hidden-role arena: nine agents on a 2D grid, a central totem, energy
//! sites, and alternating task / discussion-vote phases.
//!
//! Villagers (including one Prophet and one Hunter) win by depositing
//! `totem_target` energy or eliminating both Heretics. Heretics win by
//! reaching parity or running out the clock.

mod episode;
mod replay;
mod world;

pub use episode::{
    run_episode, AgentLedger, BeliefSnapshot, EpisodeResult, Lineup, LogHeader, LogRecord,
};
pub use replay::{read_log, verify_log, write_log, ReplayError, VerifySummary};
pub use world::{AgentState, Observation, Phase, VisibleAgent, WorldState};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type AgentId = usize;

pub const CAST_SIZE: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn dist2(self, other: Cell) -> i64 {
        let dx = (other.x - self.x) as i64;
        let dy = (other.y - self.y) as i64;
        dx * dx + dy * dy
    }

    pub fn step(self, heading: Heading) -> Cell {
        let (dx, dy) = heading.vector();
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Eight compass headings; `y` grows southward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Heading {
    pub const ALL: [Heading; 8] = [
        Heading::N,
        Heading::NE,
        Heading::E,
        Heading::SE,
        Heading::S,
        Heading::SW,
        Heading::W,
        Heading::NW,
    ];

    pub fn vector(self) -> (i32, i32) {
        match self {
            Heading::N => (0, -1),
            Heading::NE => (1, -1),
            Heading::E => (1, 0),
            Heading::SE => (1, 1),
            Heading::S => (0, 1),
            Heading::SW => (-1, 1),
            Heading::W => (-1, 0),
            Heading::NW => (-1, -1),
        }
    }

    /// Heading whose vector best approximates the direction `from -> to`.
    pub fn toward(from: Cell, to: Cell) -> Option<Heading> {
        let dx = (to.x - from.x).signum();
        let dy = (to.y - from.y).signum();
        Heading::ALL.into_iter().find(|h| h.vector() == (dx, dy))
    }
}

/// Whether an observer at `pos` facing `heading` can see `target`: within
/// `range` (Euclidean) and in the forward half-plane, boundary inclusive.
pub fn in_field_of_view(pos: Cell, heading: Heading, range: u32, target: Cell) -> bool {
    if pos == target {
        return true;
    }
    if pos.dist2(target) > (range as i64) * (range as i64) {
        return false;
    }
    let (hx, hy) = heading.vector();
    let dot = hx as i64 * (target.x - pos.x) as i64 + hy as i64 * (target.y - pos.y) as i64;
    dot >= 0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Villager,
    Prophet,
    Hunter,
    Heretic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Faction {
    Villagers,
    Heretics,
}

impl Role {
    pub fn faction(self) -> Faction {
        match self {
            Role::Heretic => Faction::Heretics,
            _ => Faction::Villagers,
        }
    }

    pub fn is_heretic(self) -> bool {
        self == Role::Heretic
    }

    /// 5 villagers, prophet, hunter, 2 heretics.
    pub fn standard_cast() -> [Role; CAST_SIZE] {
        [
            Role::Villager,
            Role::Villager,
            Role::Villager,
            Role::Villager,
            Role::Villager,
            Role::Prophet,
            Role::Hunter,
            Role::Heretic,
            Role::Heretic,
        ]
    }
}

/// Kind of a logged event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Move,
    Harvest,
    Deposit,
    Sabotage,
    FakeTask,
    Inspect,
    Eliminate,
    Vote,
    Accuse,
    Idle,
}

impl ActionKind {
    /// How the action looks to a witness: fake tasks are indistinguishable
    /// from harvesting and inspections from idling.
    pub fn observed(self) -> ActionKind {
        match self {
            ActionKind::FakeTask => ActionKind::Harvest,
            ActionKind::Inspect => ActionKind::Idle,
            other => other,
        }
    }

    /// Task-phase actions that carry behavioral evidence.
    pub fn is_interaction(self) -> bool {
        matches!(
            self,
            ActionKind::Harvest
                | ActionKind::FakeTask
                | ActionKind::Deposit
                | ActionKind::Sabotage
                | ActionKind::Inspect
                | ActionKind::Idle
        )
    }

    /// Discussion-phase events are announced to every living agent rather
    /// than filtered by field of view.
    pub fn is_public(self) -> bool {
        matches!(
            self,
            ActionKind::Vote | ActionKind::Accuse | ActionKind::Eliminate
        )
    }
}

/// A task-phase action chosen by a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Move(Heading),
    Harvest,
    Deposit,
    Sabotage,
    FakeTask,
    Inspect(AgentId),
    Idle,
}

impl Action {
    pub fn kind(self) -> ActionKind {
        match self {
            Action::Move(_) => ActionKind::Move,
            Action::Harvest => ActionKind::Harvest,
            Action::Deposit => ActionKind::Deposit,
            Action::Sabotage => ActionKind::Sabotage,
            Action::FakeTask => ActionKind::FakeTask,
            Action::Inspect(_) => ActionKind::Inspect,
            Action::Idle => ActionKind::Idle,
        }
    }
}

/// Set of agent ids `< 16`, serialized as a sorted list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<AgentId>", into = "Vec<AgentId>")]
pub struct AgentSet(u16);

impl AgentSet {
    pub const EMPTY: AgentSet = AgentSet(0);

    pub fn from_bits(bits: u16) -> Self {
        AgentSet(bits)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, id: AgentId) -> bool {
        id < 16 && self.0 & (1 << id) != 0
    }

    pub fn insert(&mut self, id: AgentId) {
        debug_assert!(id < 16);
        self.0 |= 1 << id;
    }

    pub fn remove(&mut self, id: AgentId) {
        self.0 &= !(1 << id);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = AgentId> {
        (0..16).filter(move |&i| self.0 & (1 << i) != 0)
    }
}

impl From<Vec<AgentId>> for AgentSet {
    fn from(ids: Vec<AgentId>) -> Self {
        let mut s = AgentSet::EMPTY;
        for id in ids.into_iter().filter(|&i| i < 16) {
            s.insert(id);
        }
        s
    }
}

impl From<AgentSet> for Vec<AgentId> {
    fn from(s: AgentSet) -> Self {
        s.iter().collect()
    }
}

impl FromIterator<AgentId> for AgentSet {
    fn from_iter<T: IntoIterator<Item = AgentId>>(iter: T) -> Self {
        let mut s = AgentSet::EMPTY;
        for id in iter {
            s.insert(id);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub actor: AgentId,
    pub action: ActionKind,
    pub location: Cell,
    /// Vote/accuse/inspect target; for eliminations, the hunter who fired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<AgentId>,
    /// Heading after a move.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Heading>,
    /// Energy actually moved: harvested, deposited or sabotaged.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub amount: u32,
    /// Role announced when an agent is eliminated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revealed: Option<Role>,
    pub witnesses: AgentSet,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

/// Coarse spatial context used for covariation statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocationClass {
    Site,
    Totem,
    Open,
}

impl LocationClass {
    pub const ALL: [LocationClass; 3] = [
        LocationClass::Site,
        LocationClass::Totem,
        LocationClass::Open,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    VillagersByTasks,
    VillagersByElimination,
    HereticsByParity,
    HereticsByTimer,
}

impl Winner {
    pub fn faction(self) -> Faction {
        match self {
            Winner::VillagersByTasks | Winner::VillagersByElimination => Faction::Villagers,
            Winner::HereticsByParity | Winner::HereticsByTimer => Faction::Heretics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub grid_width: i32,
    pub grid_height: i32,
    pub totem_target: u32,
    pub energy_sites: usize,
    /// Distance of the energy sites from the totem.
    pub site_radius: f64,
    pub max_ticks: u64,
    pub ticks_per_round: u64,
    pub fov_degrees: u32,
    pub fov_range: u32,
    pub carry_cap: u32,
    /// Consecutive harvest actions needed to extract one energy.
    pub harvest_ticks: u32,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            grid_width: 20,
            grid_height: 20,
            totem_target: 45,
            energy_sites: 6,
            site_radius: 7.0,
            max_ticks: 900,
            ticks_per_round: 120,
            fov_degrees: 180,
            fov_range: 6,
            carry_cap: 3,
            harvest_ticks: 48,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        let bad = |msg: &str| Err(ArenaError::InvalidConfig(msg.to_string()));
        if self.totem_target < 1 {
            return bad("totem_target must be >= 1");
        }
        if self.ticks_per_round == 0 || self.max_ticks < self.ticks_per_round {
            return bad("max_ticks must be >= ticks_per_round > 0");
        }
        if self.fov_degrees != 180 {
            return bad("fov_degrees is fixed at 180");
        }
        if self.grid_width < 3 || self.grid_height < 3 {
            return bad("grid too small");
        }
        if self.energy_sites == 0 || self.carry_cap == 0 || self.harvest_ticks == 0 {
            return bad("energy_sites, carry_cap and harvest_ticks must be >= 1");
        }
        let sites = self.site_cells();
        for (i, s) in sites.iter().enumerate() {
            if !self.in_bounds(*s) || *s == self.totem_cell() || sites[..i].contains(s) {
                return bad("energy sites must be distinct in-bounds cells away from the totem");
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.grid_width && c.y < self.grid_height
    }

    pub fn totem_cell(&self) -> Cell {
        Cell::new(self.grid_width / 2, self.grid_height / 2)
    }

    /// Sites evenly spaced on a ring around the totem.
    pub fn site_cells(&self) -> Vec<Cell> {
        let t = self.totem_cell();
        (0..self.energy_sites)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / self.energy_sites as f64;
                let c = Cell::new(
                    t.x + (self.site_radius * a.cos()).round() as i32,
                    t.y + (self.site_radius * a.sin()).round() as i32,
                );
                Cell::new(
                    c.x.clamp(0, self.grid_width - 1),
                    c.y.clamp(0, self.grid_height - 1),
                )
            })
            .collect()
    }

    pub fn location_class(&self, c: Cell) -> LocationClass {
        if c == self.totem_cell() {
            LocationClass::Totem
        } else if self.site_cells().contains(&c) {
            LocationClass::Site
        } else {
            LocationClass::Open
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ArenaError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("agent {0} is dead and cannot observe")]
    ObservingDeadAgent(AgentId),
    #[error("illegal action by agent {agent}: {reason}")]
    IllegalAction { agent: AgentId, reason: String },
    #[error("operation requires the {0:?} phase")]
    WrongPhase(Phase),
    #[error("dead agent {0} cannot vote")]
    DeadVoter(AgentId),
    #[error("dead agent {0} cannot be voted for")]
    DeadTarget(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}
