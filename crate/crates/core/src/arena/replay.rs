//! Episode log export and independent verification.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::episode::{event_hash, LogHeader, LogRecord, LogSummary};
use super::{in_field_of_view, run_episode, ActionKind, AgentSet, EpisodeResult, Event, Winner};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed log: {0}")]
    Malformed(String),
    #[error("event {index} (tick {tick}): {message}")]
    Inconsistent {
        index: usize,
        tick: u64,
        message: String,
    },
    #[error("re-simulation diverged: {0}")]
    Diverged(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub events: usize,
    pub duration: u64,
    pub winner: Winner,
    pub eliminations: usize,
    pub totem_energy: u32,
    pub resimulated: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReplayError + '_ {
    move |source| ReplayError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_log(path: &Path, result: &EpisodeResult) -> Result<(), ReplayError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for rec in result.records() {
        serde_json::to_writer(&mut w, &rec).map_err(|e| ReplayError::Malformed(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, ReplayError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| ReplayError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Checks a log for internal consistency: every task event's witness set is
/// exactly the living agents whose field of view held the event, public
/// events reach only living agents, dead agents never act, and energy is
/// conserved between sites, carriers and the totem. With `resimulate`, the
/// episode is also re-run from its header and must reproduce the log.
pub fn verify_log(records: &[LogRecord], resimulate: bool) -> Result<VerifySummary, ReplayError> {
    let (header, summary) = match (records.first(), records.last()) {
        (Some(LogRecord::Header(h)), Some(LogRecord::Summary(s))) if records.len() >= 2 => (h, s),
        _ => {
            return Err(ReplayError::Malformed(
                "log must start with a header and end with a summary".into(),
            ))
        }
    };
    let events: Vec<Event> = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Event(e) => Some(e.clone()),
            _ => None,
        })
        .collect();
    let eliminations = check_events(header, summary, &events)?;
    let hash = event_hash(&events);
    if hash != summary.event_hash {
        return Err(ReplayError::Malformed(
            "event hash does not match the summary".into(),
        ));
    }
    if resimulate {
        let again = run_episode(&header.config, &header.lineup, &header.params)
            .map_err(|e| ReplayError::Diverged(e.to_string()))?;
        if again.header != *header {
            return Err(ReplayError::Diverged(
                "roles or starting poses differ".into(),
            ));
        }
        if again.event_hash != hash || again.summary() != *summary {
            return Err(ReplayError::Diverged("event stream differs".into()));
        }
    }
    Ok(VerifySummary {
        events: events.len(),
        duration: summary.duration,
        winner: summary.winner,
        eliminations,
        totem_energy: summary.totem_energy,
        resimulated: resimulate,
    })
}

fn check_events(
    header: &LogHeader,
    summary: &LogSummary,
    events: &[Event],
) -> Result<usize, ReplayError> {
    let cfg = &header.config;
    let n = header.roles.len();
    if header.initial.len() != n {
        return Err(ReplayError::Malformed(
            "initial poses do not match the cast".into(),
        ));
    }
    let mut poses = header.initial.clone();
    let mut alive = vec![true; n];
    let mut carrying = vec![0u32; n];
    let mut totem: u32 = 0;
    let mut eliminations = 0;
    let mut first_elim = None;
    let totem_cell = cfg.totem_cell();
    let sites = cfg.site_cells();

    let mut i = 0;
    while i < events.len() {
        let bad = |index: usize, message: String| ReplayError::Inconsistent {
            index,
            tick: events[index].tick,
            message,
        };
        if events[i].action.is_public() {
            let e = &events[i];
            if e.actor >= n || !alive[e.actor] {
                return Err(bad(i, format!("agent {} acts while dead", e.actor)));
            }
            if let Some(t) = e.target {
                if t >= n || (!alive[t] && e.action != ActionKind::Eliminate) {
                    return Err(bad(i, format!("target {t} is not a living agent")));
                }
            }
            if e.action == ActionKind::Eliminate {
                alive[e.actor] = false;
                eliminations += 1;
                first_elim.get_or_insert(e.tick);
            }
            // eliminations in a vote are announced after all of them apply
            let mut j = i + 1;
            while j < events.len()
                && events[j].action == ActionKind::Eliminate
                && e.action == ActionKind::Eliminate
            {
                let f = &events[j];
                if f.actor >= n || !alive[f.actor] {
                    return Err(bad(j, format!("agent {} eliminated twice", f.actor)));
                }
                alive[f.actor] = false;
                eliminations += 1;
                j += 1;
            }
            let living: AgentSet = (0..n).filter(|&a| alive[a]).collect();
            for (k, ev) in events.iter().enumerate().take(j).skip(i) {
                if ev.witnesses.bits() & !living.bits() != 0 && ev.action == ActionKind::Eliminate {
                    return Err(bad(k, "a dead agent witnessed an elimination".into()));
                }
                let reveal_ok = match ev.action {
                    ActionKind::Eliminate => ev.revealed == Some(header.roles[ev.actor]),
                    _ => ev.revealed.is_none(),
                };
                if !reveal_ok {
                    return Err(bad(k, "revealed role does not match the header".into()));
                }
                if ev.action != ActionKind::Eliminate {
                    let before: AgentSet = (0..n).filter(|&a| alive[a]).collect();
                    if ev.witnesses != before {
                        return Err(bad(
                            k,
                            "public event not announced to exactly the living".into(),
                        ));
                    }
                } else if ev.witnesses != living {
                    return Err(bad(
                        k,
                        "elimination not announced to exactly the survivors".into(),
                    ));
                }
            }
            i = j;
            continue;
        }

        // one task tick: a contiguous run of non-public events sharing a tick
        let tick = events[i].tick;
        let mut j = i;
        while j < events.len() && events[j].tick == tick && !events[j].action.is_public() {
            j += 1;
        }
        let group = &events[i..j];
        let living: AgentSet = (0..n).filter(|&a| alive[a]).collect();
        let actors: AgentSet = group.iter().map(|e| e.actor).collect();
        if actors != living || group.len() != living.len() {
            return Err(bad(
                i,
                "task tick must hold exactly one event per living agent".into(),
            ));
        }
        if tick >= cfg.max_ticks {
            return Err(bad(i, "event after the tick limit".into()));
        }
        for e in group {
            if e.action == ActionKind::Move {
                let h = e
                    .heading
                    .ok_or_else(|| bad(i, "move without heading".into()))?;
                let next = poses[e.actor].0.step(h);
                if cfg.in_bounds(next) {
                    poses[e.actor].0 = next;
                }
                poses[e.actor].1 = h;
            }
        }
        for (k, e) in group.iter().enumerate() {
            let idx = i + k;
            if e.location != poses[e.actor].0 {
                return Err(bad(
                    idx,
                    format!(
                        "agent {} logged at {} but replay puts it at {}",
                        e.actor, e.location, poses[e.actor].0
                    ),
                ));
            }
            let expected: AgentSet = living
                .iter()
                .filter(|&w| in_field_of_view(poses[w].0, poses[w].1, cfg.fov_range, e.location))
                .collect();
            if e.witnesses != expected {
                return Err(bad(
                    idx,
                    format!(
                        "witnesses {:?} differ from field-of-view set {:?}",
                        Vec::<usize>::from(e.witnesses),
                        Vec::<usize>::from(expected)
                    ),
                ));
            }
            let role = header.roles[e.actor];
            match e.action {
                ActionKind::Harvest => {
                    if !sites.contains(&e.location) {
                        return Err(bad(idx, "harvest away from a site".into()));
                    }
                    carrying[e.actor] += e.amount;
                    if carrying[e.actor] > cfg.carry_cap {
                        return Err(bad(idx, "carry cap exceeded".into()));
                    }
                }
                ActionKind::Sabotage | ActionKind::FakeTask if !role.is_heretic() => {
                    return Err(bad(idx, "heretic-only action by a villager".into()));
                }
                ActionKind::Deposit | ActionKind::Sabotage if e.location != totem_cell => {
                    return Err(bad(idx, "totem action away from the totem".into()));
                }
                _ => {}
            }
        }
        for (k, e) in group.iter().enumerate() {
            if e.action == ActionKind::Deposit {
                if e.amount > carrying[e.actor] {
                    return Err(bad(i + k, "deposit exceeds carried energy".into()));
                }
                carrying[e.actor] -= e.amount;
                totem += e.amount;
                if totem > cfg.totem_target {
                    return Err(bad(i + k, "totem above target".into()));
                }
            }
        }
        for (k, e) in group.iter().enumerate() {
            if e.action == ActionKind::Sabotage {
                totem = totem
                    .checked_sub(e.amount)
                    .ok_or_else(|| bad(i + k, "totem below zero".into()))?;
            }
        }
        i = j;
    }

    if totem != summary.totem_energy {
        return Err(ReplayError::Malformed(format!(
            "replayed totem energy {totem} differs from summary {}",
            summary.totem_energy
        )));
    }
    if first_elim != summary.first_elimination {
        return Err(ReplayError::Malformed(
            "first elimination tick differs from summary".into(),
        ));
    }
    Ok(eliminations)
}
