//! Condition grids, metrics and report files.
//!
//! Arena grids run seeded episodes per condition (seed = `seed_base + i`)
//! and ASAT grids run the four training conditions per seed. Both reduce
//! in a fixed order, so a rerun reproduces every number, and both emit
//! compact per-run records from which [`reaggregate`] rebuilds the summary
//! exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{
    run_episode, write_log, ArenaError, BeliefSnapshot, EpisodeResult, GameConfig, Lineup, Role,
    Winner,
};
use crate::asat::{
    run_training, run_training_in_memory, AsatError, GrowthModel, SchedulerPolicy, TrainingConfig,
    TrainingTrajectory,
};
use crate::attribution::HERETIC_BASE_RATE;
use crate::csma::{AxiomSet, MemoryStore, SkillProfile, StoreError};
use crate::cultivation::{assess_level, calibration_quality, CultivationRecord, LevelThresholds};
use crate::policy::PolicyParams;
use crate::tldt::CapabilityVector;

pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const ASAT_RUNS_FILE: &str = "asat_runs.jsonl";
pub const LOG_DIR: &str = "logs";

/// Gain multiplier for the low-intensity maintenance block that follows
/// weakest-first training.
pub const MAINTENANCE_INTENSITY: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Asat(#[from] AsatError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Replay(#[from] crate::arena::ReplayError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AsatGrid,
    ArenaGrid,
}

/// One arena condition: a game config plus per-faction attribution flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaCondition {
    pub name: String,
    #[serde(default)]
    pub villager_attribution: bool,
    #[serde(default)]
    pub heretic_attribution: bool,
    #[serde(default)]
    pub config: GameConfig,
    #[serde(default)]
    pub params: PolicyParams,
}

impl ArenaCondition {
    pub fn new(name: &str, villager_attribution: bool, heretic_attribution: bool) -> Self {
        ArenaCondition {
            name: name.to_string(),
            villager_attribution,
            heretic_attribution,
            config: GameConfig::default(),
            params: PolicyParams::default(),
        }
    }

    pub fn lineup(&self) -> Lineup {
        Lineup::new(self.villager_attribution, self.heretic_attribution)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsatSettings {
    pub growth: GrowthModel,
    pub initial_score: f64,
    pub weakest_first_sessions: u64,
    pub uniform_sessions: u64,
    pub maintenance_sessions: u64,
    pub cold_start_sessions: u64,
}

impl Default for AsatSettings {
    fn default() -> Self {
        AsatSettings {
            growth: GrowthModel::CALIBRATED,
            initial_score: 80.9,
            weakest_first_sessions: 16,
            uniform_sessions: 16,
            maintenance_sessions: 5,
            cold_start_sessions: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub episodes_per_condition: u64,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Arena conditions; ignored by ASAT grids.
    #[serde(default)]
    pub conditions: Vec<ArenaCondition>,
    #[serde(default)]
    pub asat: AsatSettings,
    /// Also write every arena episode's full event log.
    #[serde(default)]
    pub full_logs: bool,
    /// Evaluate the embedded assertions after the grid completes.
    #[serde(default)]
    pub acceptance: bool,
}

impl ExperimentConfig {
    /// The four arena conditions: baseline, villagers-only, heretics-only
    /// and both-faction attribution.
    pub fn arena_grid(
        episodes: u64,
        seed_base: u64,
        config: GameConfig,
        params: PolicyParams,
    ) -> Self {
        let conditions = [
            ("baseline", false, false),
            ("villagers_only", true, false),
            ("heretics_only", false, true),
            ("both_factions", true, true),
        ]
        .into_iter()
        .map(|(name, v, h)| ArenaCondition {
            name: name.to_string(),
            villager_attribution: v,
            heretic_attribution: h,
            config: config.clone(),
            params: params.clone(),
        })
        .collect();
        ExperimentConfig {
            kind: ExperimentKind::ArenaGrid,
            episodes_per_condition: episodes,
            seed_base,
            output_dir: None,
            conditions,
            asat: AsatSettings::default(),
            full_logs: false,
            acceptance: false,
        }
    }

    pub fn asat_grid(seeds: u64, seed_base: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::AsatGrid,
            episodes_per_condition: seeds,
            seed_base,
            output_dir: None,
            conditions: Vec::new(),
            asat: AsatSettings::default(),
            full_logs: false,
            acceptance: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.episodes_per_condition < 1 {
            return Err(ExperimentError::Config(
                "episodes_per_condition must be >= 1".into(),
            ));
        }
        let mut names = BTreeSet::new();
        for c in &self.conditions {
            if !names.insert(c.name.as_str()) {
                return Err(ExperimentError::Config(format!(
                    "duplicate condition name {:?}",
                    c.name
                )));
            }
            c.config.validate()?;
            c.params.validate().map_err(ArenaError::from)?;
        }
        if self.kind == ExperimentKind::ArenaGrid && self.conditions.is_empty() {
            return Err(ExperimentError::Config(
                "arena grid needs at least one condition".into(),
            ));
        }
        self.asat.growth.validate()?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| ExperimentError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }
}

/// `(sum of squared errors, pair count)` over every snapshot's
/// `(observer, living target)` pairs.
pub fn brier_parts(
    snapshots: &[BeliefSnapshot],
    roles: &[Role],
    belief: impl Fn(f64) -> f64,
) -> (f64, u64) {
    let mut sum = 0.0;
    let mut count = 0;
    for s in snapshots {
        for &(t, b) in &s.beliefs {
            let truth = if roles[t].is_heretic() { 1.0 } else { 0.0 };
            sum += (belief(b) - truth).powi(2);
            count += 1;
        }
    }
    (sum, count)
}

/// Mean squared error of beliefs against true roles; `None` for an empty
/// trace.
pub fn brier_score(snapshots: &[BeliefSnapshot], roles: &[Role]) -> Option<f64> {
    let (sum, count) = brier_parts(snapshots, roles, |b| b);
    (count > 0).then(|| sum / count as f64)
}

/// Brier score of the base-rate prior on the same pairs.
pub fn static_prior_brier(snapshots: &[BeliefSnapshot], roles: &[Role]) -> Option<f64> {
    let (sum, count) = brier_parts(snapshots, roles, |_| HERETIC_BASE_RATE);
    (count > 0).then(|| sum / count as f64)
}

/// The per-episode facts every arena metric is computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub condition: String,
    pub seed: u64,
    pub roles: Vec<Role>,
    pub winner: Winner,
    pub duration: u64,
    pub first_elimination: Option<u64>,
    pub totem_energy: u32,
    pub event_hash: String,
    pub snapshots: Vec<BeliefSnapshot>,
}

impl EpisodeRecord {
    pub fn from_result(condition: &str, r: &EpisodeResult) -> Self {
        EpisodeRecord {
            condition: condition.to_string(),
            seed: r.seed(),
            roles: r.roles().to_vec(),
            winner: r.winner,
            duration: r.duration,
            first_elimination: r.first_elimination,
            totem_energy: r.totem_energy,
            event_hash: r.event_hash.clone(),
            snapshots: r.snapshots.clone(),
        }
    }

    pub fn survival_ticks(&self) -> u64 {
        self.first_elimination.unwrap_or(self.duration)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaMetrics {
    pub name: String,
    pub episodes: u64,
    pub failed: u64,
    pub villager_wins: u64,
    pub win_rate: f64,
    pub win_rate_se: f64,
    /// Mean tick of the first elimination, counting the full duration for
    /// episodes without one.
    pub mean_first_elimination: f64,
    pub mean_duration: f64,
    pub brier: Option<f64>,
    pub static_prior_brier: Option<f64>,
    pub outcomes: BTreeMap<String, u64>,
    pub seeds: Vec<u64>,
}

impl ArenaMetrics {
    pub fn from_records(name: &str, records: &[EpisodeRecord], failed: u64) -> Self {
        let n = records.len() as u64;
        let nf = n.max(1) as f64;
        let wins = records
            .iter()
            .filter(|r| r.winner.faction() == crate::arena::Faction::Villagers)
            .count() as u64;
        let p = wins as f64 / nf;
        let mut outcomes = BTreeMap::new();
        for r in records {
            *outcomes.entry(format!("{:?}", r.winner)).or_insert(0) += 1;
        }
        let (mut sum, mut prior_sum, mut count) = (0.0, 0.0, 0u64);
        for r in records {
            let (s, c) = brier_parts(&r.snapshots, &r.roles, |b| b);
            let (ps, _) = brier_parts(&r.snapshots, &r.roles, |_| HERETIC_BASE_RATE);
            sum += s;
            prior_sum += ps;
            count += c;
        }
        ArenaMetrics {
            name: name.to_string(),
            episodes: n,
            failed,
            villager_wins: wins,
            win_rate: p,
            win_rate_se: (p * (1.0 - p) / nf).sqrt(),
            mean_first_elimination: records
                .iter()
                .map(|r| r.survival_ticks() as f64)
                .sum::<f64>()
                / nf,
            mean_duration: records.iter().map(|r| r.duration as f64).sum::<f64>() / nf,
            brier: (count > 0).then(|| sum / count as f64),
            static_prior_brier: (count > 0).then(|| prior_sum / count as f64),
            outcomes,
            seeds: records.iter().map(|r| r.seed).collect(),
        }
    }
}

/// One training run in an ASAT grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsatRunRecord {
    pub condition: String,
    pub seed: u64,
    pub sessions: u64,
    pub initial_mean: f64,
    pub final_mean: f64,
    pub proficient_count: usize,
    pub dimensions_trained: usize,
    /// Whether the store's rebuilt profile matched after the run; `None`
    /// when the run kept no store.
    pub store_consistent: Option<bool>,
}

impl AsatRunRecord {
    fn from_trajectory(
        condition: &str,
        seed: u64,
        t: &TrainingTrajectory,
        store_consistent: Option<bool>,
    ) -> Self {
        let dims: BTreeSet<_> = t.snapshots.iter().map(|s| s.dimension).collect();
        AsatRunRecord {
            condition: condition.to_string(),
            seed,
            sessions: t.snapshots.len() as u64,
            initial_mean: t.initial_mean(),
            final_mean: t.final_mean(),
            proficient_count: t.final_profile.capabilities.proficient_count(),
            dimensions_trained: dims.len(),
            store_consistent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsatMetrics {
    pub name: String,
    pub runs: u64,
    pub sessions: u64,
    pub initial_mean: f64,
    pub final_mean: f64,
    pub delta: f64,
    /// Median over runs.
    pub proficient_count: f64,
    pub proficient_counts: Vec<usize>,
    pub final_means: Vec<f64>,
    pub seeds: Vec<u64>,
    pub store_consistent: Option<bool>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl AsatMetrics {
    pub fn from_records(name: &str, records: &[AsatRunRecord]) -> Self {
        let nf = records.len().max(1) as f64;
        let initial = records.iter().map(|r| r.initial_mean).sum::<f64>() / nf;
        let fin = records.iter().map(|r| r.final_mean).sum::<f64>() / nf;
        let consistency: Vec<bool> = records.iter().filter_map(|r| r.store_consistent).collect();
        AsatMetrics {
            name: name.to_string(),
            runs: records.len() as u64,
            sessions: records.first().map_or(0, |r| r.sessions),
            initial_mean: initial,
            final_mean: fin,
            delta: fin - initial,
            proficient_count: median(records.iter().map(|r| r.proficient_count as f64).collect()),
            proficient_counts: records.iter().map(|r| r.proficient_count).collect(),
            final_means: records.iter().map(|r| r.final_mean).collect(),
            seeds: records.iter().map(|r| r.seed).collect(),
            store_consistent: (!consistency.is_empty()).then(|| consistency.iter().all(|&c| c)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Sorted by condition name.
    pub arena: Vec<ArenaMetrics>,
    /// Sorted by condition name.
    pub asat: Vec<AsatMetrics>,
    pub cultivation: Option<CultivationRecord>,
}

impl MetricsReport {
    pub fn arena_condition(&self, name: &str) -> Option<&ArenaMetrics> {
        self.arena.iter().find(|m| m.name == name)
    }

    pub fn asat_condition(&self, name: &str) -> Option<&AsatMetrics> {
        self.asat.iter().find(|m| m.name == name)
    }

    /// Builds a report from raw records, grouping by condition name.
    pub fn from_records(
        episodes: &[EpisodeRecord],
        failed: &BTreeMap<String, u64>,
        runs: &[AsatRunRecord],
    ) -> Self {
        let mut by_cond: BTreeMap<&str, Vec<EpisodeRecord>> = BTreeMap::new();
        for name in failed.keys() {
            by_cond.entry(name.as_str()).or_default();
        }
        for e in episodes {
            by_cond
                .entry(e.condition.as_str())
                .or_default()
                .push(e.clone());
        }
        let arena = by_cond
            .into_iter()
            .map(|(name, mut recs)| {
                recs.sort_by_key(|r| r.seed);
                ArenaMetrics::from_records(name, &recs, failed.get(name).copied().unwrap_or(0))
            })
            .collect();
        let mut by_run: BTreeMap<&str, Vec<AsatRunRecord>> = BTreeMap::new();
        for r in runs {
            by_run
                .entry(r.condition.as_str())
                .or_default()
                .push(r.clone());
        }
        let asat = by_run
            .into_iter()
            .map(|(name, mut recs)| {
                recs.sort_by_key(|r| r.seed);
                AsatMetrics::from_records(name, &recs)
            })
            .collect();
        let mut report = MetricsReport {
            arena,
            asat,
            cultivation: None,
        };
        report.cultivation = report.assess_cultivation();
        report
    }

    /// Level from the weakest-first training endpoint and the best
    /// attribution calibration in the report, when both are present.
    pub fn assess_cultivation(&self) -> Option<CultivationRecord> {
        let d1 = self.asat_condition("weakest_first")?.final_mean;
        let brier = self
            .arena
            .iter()
            .filter_map(|m| m.brier)
            .min_by(f64::total_cmp)?;
        assess_level(
            d1.clamp(0.0, 100.0),
            calibration_quality(brier),
            &LevelThresholds::default(),
        )
        .ok()
    }
}

/// Everything a grid run produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridRun {
    pub report: MetricsReport,
    pub episodes: Vec<EpisodeRecord>,
    pub failed: BTreeMap<String, u64>,
    pub asat_runs: Vec<AsatRunRecord>,
}

/// Runs every arena condition for `episodes_per_condition` seeds. Episodes
/// run in parallel; failures are counted and excluded.
pub fn run_arena_grid(config: &ExperimentConfig) -> Result<GridRun, ExperimentError> {
    config.validate()?;
    let log_root = match (&config.output_dir, config.full_logs) {
        (Some(dir), true) => Some(dir.join(LOG_DIR)),
        _ => None,
    };
    let mut episodes = Vec::new();
    let mut failed = BTreeMap::new();
    for cond in &config.conditions {
        if let Some(root) = &log_root {
            let d = root.join(&cond.name);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let lineup = cond.lineup();
        let outcomes: Vec<Result<EpisodeRecord, ExperimentError>> = (0..config
            .episodes_per_condition)
            .into_par_iter()
            .map(|i| {
                let game = cond.config.clone().with_seed(config.seed_base + i);
                let r = run_episode(&game, &lineup, &cond.params)?;
                if let Some(root) = &log_root {
                    write_log(
                        &root.join(&cond.name).join(format!("{}.jsonl", game.seed)),
                        &r,
                    )?;
                }
                Ok(EpisodeRecord::from_result(&cond.name, &r))
            })
            .collect();
        let mut bad = 0;
        for o in outcomes {
            match o {
                Ok(rec) => episodes.push(rec),
                Err(ExperimentError::Arena(_)) => bad += 1,
                Err(e) => return Err(e),
            }
        }
        failed.insert(cond.name.clone(), bad);
    }
    let report = MetricsReport::from_records(&episodes, &failed, &[]);
    Ok(GridRun {
        report,
        episodes,
        failed,
        asat_runs: Vec::new(),
    })
}

fn asat_config(
    settings: &AsatSettings,
    sessions: u64,
    policy: SchedulerPolicy,
    csma: bool,
    seed: u64,
) -> TrainingConfig {
    let mut c = TrainingConfig::new(sessions, policy, csma, seed);
    c.growth = settings.growth;
    c
}

fn store_matches(store: &MemoryStore, t: &TrainingTrajectory) -> Result<bool, ExperimentError> {
    let rebuilt = store.rebuild_profile()?;
    Ok(rebuilt == *store.profile() && rebuilt == t.final_profile)
}

/// The four training conditions for one seed. With `store_root`, the CSMA
/// conditions persist to stores under it and the maintenance block reopens
/// the weakest-first store.
pub fn run_asat_seed(
    settings: &AsatSettings,
    seed: u64,
    store_root: Option<&Path>,
) -> Result<Vec<AsatRunRecord>, ExperimentError> {
    let start = SkillProfile::new(
        CapabilityVector::uniform(settings.initial_score)
            .map_err(|e| ExperimentError::Config(e.to_string()))?,
    );
    let wf_cfg = asat_config(
        settings,
        settings.weakest_first_sessions,
        SchedulerPolicy::WeakestFirst,
        true,
        seed,
    );
    let ur_cfg = asat_config(
        settings,
        settings.uniform_sessions,
        SchedulerPolicy::UniformRandom,
        true,
        seed,
    );
    let mut mp_cfg = asat_config(
        settings,
        settings.maintenance_sessions,
        SchedulerPolicy::WeakestFirst,
        true,
        seed.wrapping_add(1),
    );
    mp_cfg.growth.gain_rate *= MAINTENANCE_INTENSITY;
    let cs_cfg = asat_config(
        settings,
        settings.cold_start_sessions,
        SchedulerPolicy::WeakestFirst,
        false,
        seed,
    );

    let mut out = Vec::with_capacity(4);
    match store_root {
        Some(root) => {
            let wf_dir = root.join(format!("weakest_first-{seed}"));
            let mut store = MemoryStore::init(&wf_dir, AxiomSet::default(), start.clone())?;
            let wf = run_training(&wf_cfg, &mut store)?;
            let ok = store_matches(&store, &wf)?;
            out.push(AsatRunRecord::from_trajectory(
                "weakest_first",
                seed,
                &wf,
                Some(ok),
            ));
            drop(store);

            let mut store = MemoryStore::open(&wf_dir)?;
            let mp = run_training(&mp_cfg, &mut store)?;
            let ok = store_matches(&store, &mp)?;
            out.push(AsatRunRecord::from_trajectory(
                "memory_preserving",
                seed,
                &mp,
                Some(ok),
            ));
            drop(store);

            let ur_dir = root.join(format!("uniform_random-{seed}"));
            let mut store = MemoryStore::init(&ur_dir, AxiomSet::default(), start.clone())?;
            let ur = run_training(&ur_cfg, &mut store)?;
            let ok = store_matches(&store, &ur)?;
            out.push(AsatRunRecord::from_trajectory(
                "uniform_random",
                seed,
                &ur,
                Some(ok),
            ));
        }
        None => {
            let wf = run_training_in_memory(&wf_cfg, start.clone())?;
            out.push(AsatRunRecord::from_trajectory(
                "weakest_first",
                seed,
                &wf,
                None,
            ));
            let mp = run_training_in_memory(&mp_cfg, wf.final_profile.clone())?;
            out.push(AsatRunRecord::from_trajectory(
                "memory_preserving",
                seed,
                &mp,
                None,
            ));
            let ur = run_training_in_memory(&ur_cfg, start.clone())?;
            out.push(AsatRunRecord::from_trajectory(
                "uniform_random",
                seed,
                &ur,
                None,
            ));
        }
    }
    let cs = run_training_in_memory(&cs_cfg, start)?;
    out.push(AsatRunRecord::from_trajectory(
        "cold_start",
        seed,
        &cs,
        None,
    ));
    Ok(out)
}

/// Runs the training conditions over `episodes_per_condition` seeds.
/// Stores go under `output_dir/stores` when an output directory is set.
pub fn run_asat_grid(config: &ExperimentConfig) -> Result<GridRun, ExperimentError> {
    config.validate()?;
    let store_root = config.output_dir.as_ref().map(|d| d.join("stores"));
    if let Some(root) = &store_root {
        fs::create_dir_all(root).map_err(io_err(root))?;
    }
    let per_seed: Vec<Result<Vec<AsatRunRecord>, ExperimentError>> = (0..config
        .episodes_per_condition)
        .into_par_iter()
        .map(|i| run_asat_seed(&config.asat, config.seed_base + i, store_root.as_deref()))
        .collect();
    let mut runs = Vec::new();
    for r in per_seed {
        runs.extend(r?);
    }
    let report = MetricsReport::from_records(&[], &BTreeMap::new(), &runs);
    Ok(GridRun {
        report,
        episodes: Vec::new(),
        failed: BTreeMap::new(),
        asat_runs: runs,
    })
}

pub fn run_grid(config: &ExperimentConfig) -> Result<GridRun, ExperimentError> {
    match config.kind {
        ExperimentKind::ArenaGrid => run_arena_grid(config),
        ExperimentKind::AsatGrid => run_asat_grid(config),
    }
}

/// One embedded assertion and its outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Minimum villagers-only lift over baseline, in win-rate units.
pub const MIN_ATTRIBUTION_LIFT: f64 = 0.05;
/// Largest allowed ratio of both-faction to baseline first-elimination time.
pub const MAX_PACE_RATIO: f64 = 0.70;

/// Assertions over the standard arena conditions present in the report.
pub fn arena_checks(report: &MetricsReport) -> Vec<Check> {
    let mut out = Vec::new();
    let base = report.arena_condition("baseline");
    let villagers = report.arena_condition("villagers_only");
    let both = report.arena_condition("both_factions");
    if let (Some(b), Some(v)) = (base, villagers) {
        out.push(Check::new(
            "attribution_lift",
            v.win_rate - b.win_rate >= MIN_ATTRIBUTION_LIFT,
            format!(
                "villagers_only {:.3} vs baseline {:.3}",
                v.win_rate, b.win_rate
            ),
        ));
    }
    if let (Some(b), Some(v), Some(x)) = (base, villagers, both) {
        out.push(Check::new(
            "win_rate_ordering",
            b.win_rate <= x.win_rate && x.win_rate <= v.win_rate,
            format!(
                "baseline {:.3} <= both {:.3} <= villagers_only {:.3}",
                b.win_rate, x.win_rate, v.win_rate
            ),
        ));
    }
    if let (Some(b), Some(x)) = (base, both) {
        let ratio = x.mean_first_elimination / b.mean_first_elimination;
        out.push(Check::new(
            "pace_acceleration",
            ratio <= MAX_PACE_RATIO,
            format!(
                "first elimination {:.1} vs {:.1} (ratio {ratio:.3})",
                x.mean_first_elimination, b.mean_first_elimination
            ),
        ));
    }
    if let Some(v) = villagers {
        if let (Some(brier), Some(prior)) = (v.brier, v.static_prior_brier) {
            out.push(Check::new(
                "attribution_calibration",
                brier < prior,
                format!("brier {brier:.4} vs static prior {prior:.4}"),
            ));
        }
    }
    for m in &report.arena {
        if m.failed > 0 {
            out.push(Check::new(
                &format!("{}_episodes_completed", m.name),
                false,
                format!("{} episodes failed", m.failed),
            ));
        }
    }
    out
}

fn seeds_where(a: &AsatMetrics, b: &AsatMetrics, cmp: impl Fn(f64, f64) -> bool) -> usize {
    a.seeds
        .iter()
        .zip(&a.final_means)
        .filter(|(seed, &x)| {
            b.seeds
                .iter()
                .position(|s| s == *seed)
                .is_some_and(|k| cmp(x, b.final_means[k]))
        })
        .count()
}

/// Assertions over the ASAT conditions: per-seed ordering in at least 95%
/// of seeds, median proficient-dimension bands and store consistency.
pub fn asat_checks(report: &MetricsReport) -> Vec<Check> {
    let mut out = Vec::new();
    let wf = report.asat_condition("weakest_first");
    let ur = report.asat_condition("uniform_random");
    let cs = report.asat_condition("cold_start");
    let need = |runs: u64| (runs * 19).div_ceil(20) as usize;
    if let (Some(w), Some(u), Some(c)) = (wf, ur, cs) {
        let wu = seeds_where(w, u, |a, b| a > b);
        out.push(Check::new(
            "weakest_first_beats_uniform",
            wu >= need(w.runs),
            format!("{wu}/{} seeds", w.runs),
        ));
        let uc = seeds_where(u, c, |a, b| a > b);
        out.push(Check::new(
            "uniform_beats_cold_start",
            uc >= need(u.runs),
            format!("{uc}/{} seeds", u.runs),
        ));
        out.push(Check::new(
            "proficient_counts",
            w.proficient_count >= 10.0
                && u.proficient_count <= 9.0
                && c.proficient_count <= 6.0
                && w.proficient_count >= u.proficient_count
                && u.proficient_count >= c.proficient_count,
            format!(
                "median weakest_first {} uniform_random {} cold_start {}",
                w.proficient_count, u.proficient_count, c.proficient_count
            ),
        ));
    }
    for m in &report.asat {
        if m.store_consistent == Some(false) {
            out.push(Check::new(
                &format!("{}_store_consistent", m.name),
                false,
                "rebuilt profile differs from the stored profile".into(),
            ));
        }
    }
    out
}

pub fn checks(report: &MetricsReport) -> Vec<Check> {
    let mut out = arena_checks(report);
    out.extend(asat_checks(report));
    out
}

#[derive(Serialize, Deserialize)]
struct FailedRecord {
    condition: String,
    failed: u64,
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| ExperimentError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| ExperimentError::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `summary.json`, `metrics.csv` and the raw per-run records.
pub fn emit_report(run: &GridRun, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&run.report).map_err(|e| ExperimentError::Format {
        path: summary.clone(),
        message: e.to_string(),
    })?;
    fs::write(&summary, text + "\n").map_err(io_err(&summary))?;

    let csv_path = dir.join(METRICS_CSV);
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| ExperimentError::Format {
        path: csv_path.clone(),
        message: e.to_string(),
    };
    w.write_record([
        "kind",
        "condition",
        "n",
        "win_rate",
        "win_rate_se",
        "mean_first_elimination",
        "mean_duration",
        "brier",
        "static_prior_brier",
        "initial_mean",
        "final_mean",
        "delta",
        "proficient_count",
    ])
    .map_err(csv_err)?;
    for m in &run.report.arena {
        w.write_record([
            "arena".to_string(),
            m.name.clone(),
            m.episodes.to_string(),
            m.win_rate.to_string(),
            m.win_rate_se.to_string(),
            m.mean_first_elimination.to_string(),
            m.mean_duration.to_string(),
            fmt_opt(m.brier),
            fmt_opt(m.static_prior_brier),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    for m in &run.report.asat {
        w.write_record([
            "asat".to_string(),
            m.name.clone(),
            m.runs.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            m.initial_mean.to_string(),
            m.final_mean.to_string(),
            m.delta.to_string(),
            m.proficient_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&csv_path))?;

    write_jsonl(&dir.join(EPISODES_FILE), &run.episodes)?;
    write_jsonl(
        &dir.join("failed.jsonl"),
        run.failed.iter().map(|(c, &f)| FailedRecord {
            condition: c.clone(),
            failed: f,
        }),
    )?;
    write_jsonl(&dir.join(ASAT_RUNS_FILE), &run.asat_runs)
}

/// Rebuilds the metrics report from the raw records in `dir`.
pub fn reaggregate(dir: &Path) -> Result<MetricsReport, ExperimentError> {
    let episodes: Vec<EpisodeRecord> = read_jsonl(&dir.join(EPISODES_FILE))?;
    let failed: BTreeMap<String, u64> = read_jsonl::<FailedRecord>(&dir.join("failed.jsonl"))?
        .into_iter()
        .map(|f| (f.condition, f.failed))
        .collect();
    let runs: Vec<AsatRunRecord> = read_jsonl(&dir.join(ASAT_RUNS_FILE))?;
    Ok(MetricsReport::from_records(&episodes, &failed, &runs))
}

pub fn read_summary(dir: &Path) -> Result<MetricsReport, ExperimentError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Format {
        path,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roles() -> Vec<Role> {
        let mut r = vec![Role::Villager; 9];
        r[7] = Role::Heretic;
        r[8] = Role::Heretic;
        r
    }

    fn snap(beliefs: Vec<(usize, f64)>) -> BeliefSnapshot {
        BeliefSnapshot {
            tick: 120,
            observer: 0,
            beliefs,
        }
    }

    #[test]
    fn brier_examples() {
        let roles = roles();
        let truth = snap(
            (1..9)
                .map(|t| (t, if t >= 7 { 1.0 } else { 0.0 }))
                .collect(),
        );
        assert_eq!(brier_score(&[truth], &roles), Some(0.0));
        assert_eq!(brier_score(&[], &roles), None);

        // observer 0 sees 6 villagers and 2 heretics; the closed form is per
        // target over the whole cast
        let prior = snap((1..9).map(|t| (t, HERETIC_BASE_RATE)).collect());
        let p = HERETIC_BASE_RATE;
        let expected = (6.0 * p * p + 2.0 * (1.0 - p) * (1.0 - p)) / 8.0;
        let got = brier_score(std::slice::from_ref(&prior), &roles).unwrap();
        assert!((got - expected).abs() < 1e-15);
        let closed = 7.0 / 9.0 * p * p + 2.0 / 9.0 * (1.0 - p) * (1.0 - p);
        assert!((closed - 0.1728).abs() < 1e-4);
        assert_eq!(static_prior_brier(&[prior], &roles), Some(got));
    }

    #[test]
    fn uniform_random_beliefs_score_one_third() {
        let roles = roles();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let snaps: Vec<_> = (0..20_000)
            .map(|_| snap((1..9).map(|t| (t, rng.random::<f64>())).collect()))
            .collect();
        let b = brier_score(&snaps, &roles).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 0.005, "{b}");
    }

    #[test]
    fn config_validation() {
        let mut c =
            ExperimentConfig::arena_grid(1, 0, GameConfig::default(), PolicyParams::default());
        c.validate().unwrap();
        c.conditions[1].name = "baseline".into();
        assert!(matches!(c.validate(), Err(ExperimentError::Config(_))));
        let mut c = ExperimentConfig::asat_grid(0, 0);
        assert!(c.validate().is_err());
        c.episodes_per_condition = 1;
        c.validate().unwrap();
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
