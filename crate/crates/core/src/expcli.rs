//! Experiment runner: TOML configs, sweep expansion, result files.
//!
//! `run` writes into the output directory:
//!
//! | file                  | contents                                                  |
//! |-----------------------|-----------------------------------------------------------|
//! | `results.csv`         | one row per (sweep point, seed); see [`ResultRecord`]     |
//! | `learning_curves.csv` | per-episode training metrics of MPDQN points              |
//! | `ga_progress.csv`     | per-generation fitness of GA points                       |
//! | `timings.csv`         | wall-clock seconds per (sweep point, seed)                |
//! | `manifest.json`       | resolved config, its SHA-256, seeds, crate version        |
//!
//! Everything except `timings.csv` is a pure function of the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ga_optimize_env, ChromosomePolicy, GaConfig, RandomPolicy};
use crate::channel::ChannelParams;
use crate::env::{run_episode, AccessMode, Env, EnvConfig, EnvParams, EpisodeReport, Policy, TrafficParams};
use crate::error::{Error, Result};
use crate::mpdqn::{self, AgentParams};
use crate::scenario::ScenarioConfig;
use crate::sps::{RadioMode, SpsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PolicyKind {
    Mpdqn,
    Ga,
    Random,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            PolicyKind::Mpdqn => "MPDQN",
            PolicyKind::Ga => "GA",
            PolicyKind::Random => "RANDOM",
        })
    }
}

/// Sweep axes; the run covers their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub n_vehicles: Vec<usize>,
    pub message_size_bits: Vec<f64>,
    pub access: Vec<AccessMode>,
    pub radio: Vec<RadioMode>,
    pub policy: Vec<PolicyKind>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            n_vehicles: vec![20],
            message_size_bits: vec![2400.0],
            access: vec![AccessMode::Noma],
            radio: vec![RadioMode::Nr],
            policy: vec![PolicyKind::Random],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub id: usize,
    pub n_vehicles: usize,
    pub message_size_bits: f64,
    pub access: AccessMode,
    pub radio: RadioMode,
    pub policy: PolicyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Greedy evaluation episodes per (sweep point, seed).
    pub eval_episodes: usize,
    pub scenario: ScenarioConfig,
    pub channel: ChannelParams,
    pub sps: SpsParams,
    pub traffic: TrafficParams,
    pub env: EnvParams,
    pub agent: AgentParams,
    pub ga: GaConfig,
    pub sweep: Sweep,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            output_dir: PathBuf::from("results"),
            seeds: vec![0],
            eval_episodes: 1,
            scenario: ScenarioConfig::default(),
            channel: ChannelParams::default(),
            sps: SpsParams::default(),
            traffic: TrafficParams::default(),
            env: EnvParams::default(),
            agent: AgentParams::default(),
            ga: GaConfig::default(),
            sweep: Sweep::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {}", e.message())))
    }

    /// Reads a TOML config, or the resolved config out of a `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text)?;
            if m.config_sha256 != m.config.sha256()? {
                return Err(Error::Invalid(format!("{}: config hash mismatch", path.display())));
            }
            return Ok(m.config);
        }
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(format!("config serialization: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn base_env(&self) -> EnvConfig {
        EnvConfig {
            scenario: self.scenario.clone(),
            channel: self.channel.clone(),
            sps: self.sps.clone(),
            traffic: self.traffic.clone(),
            env: self.env.clone(),
        }
    }

    /// Sweep points in row-major order over
    /// `n_vehicles, message_size_bits, access, radio, policy`.
    pub fn points(&self) -> Vec<SweepPoint> {
        let s = &self.sweep;
        let mut out = Vec::new();
        for &n_vehicles in &s.n_vehicles {
            for &message_size_bits in &s.message_size_bits {
                for &access in &s.access {
                    for &radio in &s.radio {
                        for &policy in &s.policy {
                            out.push(SweepPoint { id: out.len(), n_vehicles, message_size_bits, access, radio, policy });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn env_for(&self, p: &SweepPoint) -> EnvConfig {
        let mut cfg = self.base_env();
        cfg.scenario.n_vehicles = p.n_vehicles;
        cfg.traffic.message_size_bits = p.message_size_bits;
        cfg.env.access = p.access;
        cfg.sps.mode = p.radio;
        cfg
    }

    /// Cross-field checks on the parsed config; one entry per violation.
    pub fn check(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut push = |r: Result<()>, location: &str| {
            if let Err(e) = r {
                let location = match &e {
                    Error::Config { field, .. } => field.clone(),
                    _ => location.to_string(),
                };
                issues.push(Issue { location, message: e.to_string() });
            }
        };
        push(self.base_env().validate(), "env");
        push(self.agent.validate(), "agent");
        push(self.ga.validate(), "ga");
        if self.seeds.is_empty() {
            push(Err(Error::config("seeds", "must list at least one seed")), "seeds");
        }
        if self.eval_episodes == 0 {
            push(Err(Error::config("eval_episodes", "must be >= 1")), "eval_episodes");
        }
        let s = &self.sweep;
        for (name, empty) in [
            ("sweep.n_vehicles", s.n_vehicles.is_empty()),
            ("sweep.message_size_bits", s.message_size_bits.is_empty()),
            ("sweep.access", s.access.is_empty()),
            ("sweep.radio", s.radio.is_empty()),
            ("sweep.policy", s.policy.is_empty()),
        ] {
            if empty {
                push(Err(Error::config(name, "must not be empty")), name);
            }
        }
        for p in self.points() {
            if let Err(e) = self.env_for(&p).validate() {
                push(Err(Error::config(format!("sweep point {}", p.id), e.to_string())), "sweep");
            }
        }
        issues
    }
}

/// A single validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    /// Dotted key path, or `line N` for syntax errors.
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn walk_unknown(value: &toml::Value, reference: &toml::Value, path: &str, out: &mut Vec<Issue>) {
    let (Some(table), Some(known)) = (value.as_table(), reference.as_table()) else {
        return;
    };
    for (key, v) in table {
        let here = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        match known.get(key) {
            Some(r) => walk_unknown(v, r, &here, out),
            None => out.push(Issue { location: here, message: "unknown key".into() }),
        }
    }
}

/// Schema and cross-field validation of config text. Empty means valid.
pub fn validate_str(text: &str) -> Vec<Issue> {
    let value: toml::Value = match toml::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            let location = e.span().map_or("config".into(), |s| format!("line {}", line_of(text, s.start)));
            return vec![Issue { location, message: e.message().to_string() }];
        }
    };
    let reference = toml::Value::try_from(ExperimentConfig::default()).expect("default config serializes");
    let mut issues = Vec::new();
    walk_unknown(&value, &reference, "", &mut issues);
    if !issues.is_empty() {
        return issues;
    }
    match toml::from_str::<ExperimentConfig>(text) {
        Ok(cfg) => cfg.check(),
        Err(e) => {
            let location = e.span().map_or("config".into(), |s| format!("line {}", line_of(text, s.start)));
            vec![Issue { location, message: e.message().to_string() }]
        }
    }
}

pub fn validate(path: &Path) -> Result<Vec<Issue>> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(match ExperimentConfig::load(path) {
            Ok(cfg) => cfg.check(),
            Err(e) => vec![Issue { location: path.display().to_string(), message: e.to_string() }],
        });
    }
    Ok(validate_str(&text))
}

/// One row of `results.csv`. AoI in slots, energy in joules per vehicle-slot,
/// reward and objective dimensionless; metrics are means over the
/// evaluation episodes and empty when `status` is `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub point: usize,
    pub n_vehicles: usize,
    pub message_size_bits: f64,
    pub access: AccessMode,
    pub radio: RadioMode,
    pub policy: PolicyKind,
    pub seed: u64,
    pub status: String,
    pub avg_aoi_slots: Option<f64>,
    pub avg_energy_j: Option<f64>,
    pub mean_reward: Option<f64>,
    pub objective: Option<f64>,
    pub error: String,
}

pub const RESULT_COLUMNS: [&str; 13] = [
    "point",
    "n_vehicles",
    "message_size_bits",
    "access",
    "radio",
    "policy",
    "seed",
    "status",
    "avg_aoi_slots",
    "avg_energy_j",
    "mean_reward",
    "objective",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub point: usize,
    pub seed: u64,
    pub episode: usize,
    pub p_ran: f64,
    pub mean_reward: f64,
    pub avg_aoi_slots: f64,
    pub avg_energy_j: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaRow {
    pub point: usize,
    pub seed: u64,
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub point: usize,
    pub seed: u64,
    pub wallclock_s: f64,
}

/// Everything produced for one (sweep point, seed).
#[derive(Debug, Clone, Default)]
pub struct PointOutput {
    pub reports: Vec<EpisodeReport>,
    pub curve: Vec<CurveRow>,
    pub ga: Vec<GaRow>,
}

/// Seed of evaluation episode `i`; episode 0 uses the run seed itself.
pub fn eval_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64) << 32)
}

fn eval_with<P: Policy>(env_cfg: &EnvConfig, policy: &mut P, seed: u64, episodes: usize) -> Result<Vec<EpisodeReport>> {
    let mut env = Env::new(env_cfg.clone())?;
    (0..episodes).map(|i| run_episode(&mut env, policy, eval_seed(seed, i))).collect()
}

/// Runs one (sweep point, seed): MPDQN trains then evaluates greedily, GA
/// evolves on a training seed then evaluates, RANDOM evaluates directly.
pub fn run_point(cfg: &ExperimentConfig, p: &SweepPoint, seed: u64) -> Result<PointOutput> {
    let env_cfg = cfg.env_for(p);
    env_cfg.validate()?;
    let episodes = cfg.eval_episodes;
    let mut out = PointOutput::default();
    match p.policy {
        PolicyKind::Random => {
            let mut policy = RandomPolicy::new(seed, p.n_vehicles, env_cfg.p_max_w());
            out.reports = eval_with(&env_cfg, &mut policy, seed, episodes)?;
        }
        PolicyKind::Mpdqn => {
            let (agent, curve) = mpdqn::train(&env_cfg, &cfg.agent, seed)?;
            out.curve = curve
                .iter()
                .map(|c| CurveRow {
                    point: p.id,
                    seed,
                    episode: c.episode,
                    p_ran: c.p_ran,
                    mean_reward: c.mean_reward,
                    avg_aoi_slots: c.avg_aoi_slots,
                    avg_energy_j: c.avg_energy_j,
                    objective: c.objective,
                })
                .collect();
            let seeds: Vec<u64> = (0..episodes).map(|i| eval_seed(seed, i)).collect();
            out.reports = mpdqn::evaluate(&env_cfg, &agent, &seeds)?;
        }
        PolicyKind::Ga => {
            let ga = ga_optimize_env(&env_cfg, &cfg.ga, seed, mpdqn::episode_seed(seed, 0))?;
            out.ga = ga
                .history
                .iter()
                .map(|g| GaRow {
                    point: p.id,
                    seed,
                    generation: g.generation,
                    best_fitness: g.best_fitness,
                    mean_fitness: g.mean_fitness,
                })
                .collect();
            out.reports = eval_with(&env_cfg, &mut ChromosomePolicy(ga.best), seed, episodes)?;
        }
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn record(p: &SweepPoint, seed: u64, out: &Result<PointOutput>) -> ResultRecord {
    let mut r = ResultRecord {
        point: p.id,
        n_vehicles: p.n_vehicles,
        message_size_bits: p.message_size_bits,
        access: p.access,
        radio: p.radio,
        policy: p.policy,
        seed,
        status: "ok".into(),
        avg_aoi_slots: None,
        avg_energy_j: None,
        mean_reward: None,
        objective: None,
        error: String::new(),
    };
    match out {
        Ok(o) => {
            let reps = &o.reports;
            let vals = [
                mean(reps.iter().map(|x| x.avg_aoi_slots)),
                mean(reps.iter().map(|x| x.avg_energy_j)),
                mean(reps.iter().map(|x| x.mean_reward)),
                mean(reps.iter().map(|x| x.objective)),
            ];
            if vals.iter().all(|v| v.is_finite()) {
                r.avg_aoi_slots = Some(vals[0]);
                r.avg_energy_j = Some(vals[1]);
                r.mean_reward = Some(vals[2]);
                r.objective = Some(vals[3]);
            } else {
                r.status = "error".into();
                r.error = "non-finite metric".into();
            }
        }
        Err(e) => {
            r.status = "error".into();
            r.error = e.to_string();
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub n_points: usize,
    pub n_records: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub records: Vec<ResultRecord>,
    pub failures: usize,
}

/// Runs every (sweep point, seed) with `point_fn` on `jobs` workers and
/// writes the result files. Rows come out in (point, seed) order
/// regardless of scheduling.
pub fn execute<F>(cfg: &ExperimentConfig, out_dir: &Path, jobs: usize, point_fn: F) -> Result<RunSummary>
where
    F: Fn(&ExperimentConfig, &SweepPoint, u64) -> Result<PointOutput> + Sync,
{
    let issues = cfg.check();
    if let Some(first) = issues.first() {
        return Err(Error::config(first.location.clone(), first.message.clone()));
    }
    fs::create_dir_all(out_dir)?;
    let tasks: Vec<(SweepPoint, u64)> =
        cfg.points().into_iter().flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let outputs: Vec<(SweepPoint, u64, Result<PointOutput>, f64)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, seed)| {
                let t = Instant::now();
                let out = point_fn(cfg, &p, seed);
                if let Err(e) = &out {
                    log::error!("point {} seed {seed}: {e}", p.id);
                } else {
                    log::info!("point {} ({} N={} {} {}) seed {seed} done", p.id, p.policy, p.n_vehicles, p.access, p.radio);
                }
                (p, seed, out, t.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut results = csv::Writer::from_path(out_dir.join("results.csv"))?;
    let mut curves = csv::Writer::from_path(out_dir.join("learning_curves.csv"))?;
    let mut ga = csv::Writer::from_path(out_dir.join("ga_progress.csv"))?;
    let mut timings = csv::Writer::from_path(out_dir.join("timings.csv"))?;
    let mut records = Vec::with_capacity(outputs.len());
    for (p, seed, out, secs) in &outputs {
        let r = record(p, *seed, out);
        results.serialize(&r)?;
        records.push(r);
        if let Ok(o) = out {
            for row in &o.curve {
                curves.serialize(row)?;
            }
            for row in &o.ga {
                ga.serialize(row)?;
            }
        }
        timings.serialize(TimingRow { point: p.id, seed: *seed, wallclock_s: *secs })?;
    }
    for w in [&mut results, &mut curves, &mut ga, &mut timings] {
        w.flush()?;
    }
    let manifest = Manifest {
        tool: "sidelink-exp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.sha256()?,
        seeds: cfg.seeds.clone(),
        n_points: cfg.points().len(),
        n_records: records.len(),
        config: cfg.clone(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let failures = records.iter().filter(|r| r.status != "ok").count();
    Ok(RunSummary { out_dir: out_dir.to_path_buf(), records, failures })
}

/// [`execute`] with the real point runner.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<RunSummary> {
    execute(cfg, out_dir, jobs, run_point)
}

/// One row of `summary.csv`: mean and sample standard deviation over the
/// successful seeds of a sweep point (std is 0 for a single seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: usize,
    pub n_vehicles: usize,
    pub message_size_bits: f64,
    pub access: AccessMode,
    pub radio: RadioMode,
    pub policy: PolicyKind,
    pub n_seeds: usize,
    pub avg_aoi_mean: f64,
    pub avg_aoi_std: f64,
    pub avg_energy_mean: f64,
    pub avg_energy_std: f64,
    pub mean_reward_mean: f64,
    pub mean_reward_std: f64,
    pub objective_mean: f64,
    pub objective_std: f64,
}

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "point",
    "n_vehicles",
    "message_size_bits",
    "access",
    "radio",
    "policy",
    "n_seeds",
    "avg_aoi_mean",
    "avg_aoi_std",
    "avg_energy_mean",
    "avg_energy_std",
    "mean_reward_mean",
    "mean_reward_std",
    "objective_mean",
    "objective_std",
];

/// Per-episode learning curve averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummaryRow {
    pub point: usize,
    pub episode: usize,
    pub n_seeds: usize,
    pub mean_reward_mean: f64,
    pub mean_reward_std: f64,
    pub objective_mean: f64,
    pub objective_std: f64,
}

/// `(mean, sample std)`; std is 0 for fewer than two values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::Parse { path: path.to_path_buf(), line, reason: e.to_string() });
            }
        }
    }
    Ok(rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    read_rows(path)
}

pub fn summarize_records(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut points: Vec<usize> = records.iter().map(|r| r.point).collect();
    points.sort_unstable();
    points.dedup();
    let mut out = Vec::new();
    for id in points {
        let rows: Vec<&ResultRecord> = records.iter().filter(|r| r.point == id && r.status == "ok").collect();
        let Some(first) = rows.first() else { continue };
        let col = |f: fn(&ResultRecord) -> Option<f64>| mean_std(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        let (aoi_m, aoi_s) = col(|r| r.avg_aoi_slots);
        let (e_m, e_s) = col(|r| r.avg_energy_j);
        let (r_m, r_s) = col(|r| r.mean_reward);
        let (o_m, o_s) = col(|r| r.objective);
        out.push(SummaryRow {
            point: id,
            n_vehicles: first.n_vehicles,
            message_size_bits: first.message_size_bits,
            access: first.access,
            radio: first.radio,
            policy: first.policy,
            n_seeds: rows.len(),
            avg_aoi_mean: aoi_m,
            avg_aoi_std: aoi_s,
            avg_energy_mean: e_m,
            avg_energy_std: e_s,
            mean_reward_mean: r_m,
            mean_reward_std: r_s,
            objective_mean: o_m,
            objective_std: o_s,
        });
    }
    out
}

fn summarize_curves(rows: &[CurveRow]) -> Vec<CurveSummaryRow> {
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.point, r.episode)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(point, episode)| {
            let sel: Vec<&CurveRow> = rows.iter().filter(|r| r.point == point && r.episode == episode).collect();
            let (rm, rs) = mean_std(&sel.iter().map(|r| r.mean_reward).collect::<Vec<_>>());
            let (om, os) = mean_std(&sel.iter().map(|r| r.objective).collect::<Vec<_>>());
            CurveSummaryRow {
                point,
                episode,
                n_seeds: sel.len(),
                mean_reward_mean: rm,
                mean_reward_std: rs,
                objective_mean: om,
                objective_std: os,
            }
        })
        .collect()
}

/// Reads `<dir>/results.csv` (and `learning_curves.csv` when present) and
/// writes `summary.csv` (and `learning_summary.csv`) into `out_dir`.
pub fn summarize(dir: &Path, out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let results = if dir.is_dir() { dir.join("results.csv") } else { dir.to_path_buf() };
    let rows = summarize_records(&read_results(&results)?);
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    if rows.is_empty() {
        w.write_record(SUMMARY_COLUMNS)?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let curves = results.with_file_name("learning_curves.csv");
    if curves.exists() {
        let c: Vec<CurveRow> = read_rows(&curves)?;
        if c.is_empty() {
            return Ok(rows);
        }
        let mut w = csv::Writer::from_path(out_dir.join("learning_summary.csv"))?;
        for r in summarize_curves(&c) {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.horizon_slots = 300;
        cfg.seeds = vec![1, 2];
        cfg.sweep.n_vehicles = vec![3, 4];
        cfg
    }

    #[test]
    fn cartesian_count() {
        let mut cfg = tiny();
        cfg.sweep.n_vehicles = vec![20, 30, 40, 50];
        cfg.sweep.policy = vec![PolicyKind::Mpdqn, PolicyKind::Ga, PolicyKind::Random];
        cfg.seeds = (0..5).collect();
        assert_eq!(cfg.points().len() * cfg.seeds.len(), 60);
        let ids: Vec<usize> = cfg.points().iter().map(|p| p.id).collect();
        assert_eq!(ids, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert!(validate_str(&text).is_empty());
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(validate_str("").is_empty());
    }

    #[test]
    fn unknown_key_is_located() {
        let issues = validate_str("[agent]\nhidden = 64\nlearning_rate = 0.1\n[sweep]\npolicies = [\"GA\"]\n");
        let locs: Vec<&str> = issues.iter().map(|i| i.location.as_str()).collect();
        assert_eq!(locs, vec!["agent.learning_rate", "sweep.policies"]);
    }

    #[test]
    fn batch_larger_than_buffer_is_flagged() {
        let issues = validate_str("[agent]\nbatch_size = 256\nbuffer_capacity = 100\n");
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].location, "agent.batch_size");
    }

    #[test]
    fn bad_values_are_flagged() {
        let issues = validate_str("seeds = []\n[sps]\nt1_slots = 25\n[sweep]\nn_vehicles = [0]\n");
        let locs: Vec<&str> = issues.iter().map(|i| i.location.as_str()).collect();
        assert!(locs.contains(&"sps.t1_slots"));
        assert!(locs.contains(&"seeds"));
        assert!(locs.iter().any(|l| l.starts_with("sweep point 0")));
    }

    #[test]
    fn syntax_and_type_errors_carry_lines() {
        let issues = validate_str("name = \"x\"\n[agent\n");
        assert_eq!(issues[0].location, "line 2");
        let issues = validate_str("name = \"x\"\n\n[sweep]\naccess = [\"FDMA\"]\n");
        assert_eq!(issues[0].location, "line 4");
    }

    #[test]
    fn run_writes_files_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.sweep.access = vec![AccessMode::Oma, AccessMode::Noma];
        let a = dir.path().join("a");
        let s = run(&cfg, &a, 2).unwrap();
        assert_eq!((s.records.len(), s.failures), (8, 0));
        for f in ["results.csv", "learning_curves.csv", "ga_progress.csv", "timings.csv", "manifest.json"] {
            assert!(a.join(f).exists(), "{f}");
        }
        let header = fs::read_to_string(a.join("results.csv")).unwrap();
        assert_eq!(header.lines().next().unwrap(), RESULT_COLUMNS.join(","));
        let again = ExperimentConfig::load(&a.join("manifest.json")).unwrap();
        assert_eq!(again, cfg);
        let b = dir.path().join("b");
        run(&again, &b, 1).unwrap();
        assert_eq!(fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
    }

    #[test]
    fn tampered_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.seeds = vec![1];
        cfg.sweep.n_vehicles = vec![2];
        run(&cfg, dir.path(), 1).unwrap();
        let path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"horizon_slots\": 300", "\"horizon_slots\": 301");
        fs::write(&path, text).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
    }

    #[test]
    fn failing_point_is_recorded_and_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let s = execute(&tiny(), dir.path(), 1, |cfg, p, seed| {
            if p.id == 1 && seed == 2 {
                Err(Error::Invalid("boom".into()))
            } else {
                run_point(cfg, p, seed)
            }
        })
        .unwrap();
        assert_eq!(s.failures, 1);
        let bad: Vec<_> = s.records.iter().filter(|r| r.status == "error").collect();
        assert_eq!((bad[0].point, bad[0].seed, bad[0].error.as_str(), bad[0].avg_aoi_slots), (1, 2, "boom", None));
        let back = read_results(&dir.path().join("results.csv")).unwrap();
        assert_eq!(back, s.records);
    }

    #[test]
    fn mean_std_hand_values() {
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 6.0]);
        assert!((m - 3.0).abs() < 1e-15);
        assert!((s - 7.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn summary_columns_are_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.seeds = vec![3];
        run(&cfg, dir.path(), 1).unwrap();
        let rows = summarize(dir.path(), dir.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.n_seeds == 1 && r.avg_aoi_std == 0.0));
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_COLUMNS.join(","));
    }

    #[test]
    fn malformed_results_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let good = "1,3,2400.0,NOMA,NR,RANDOM,1,ok,100.0,1e-6,-0.3,0.4,";
        fs::write(&path, format!("{}\n{good}\n{good}\n1,3,2400.0,NOMA,NR,RANDOM,x,ok,1,1,1,1,\n", RESULT_COLUMNS.join(","))).unwrap();
        match summarize(dir.path(), dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn policy_points_run() {
        let mut cfg = tiny();
        cfg.seeds = vec![5];
        cfg.sweep.n_vehicles = vec![3];
        cfg.agent = AgentParams { hidden: 8, batch_size: 4, buffer_capacity: 16, episodes: 3, ..Default::default() };
        cfg.ga = GaConfig { population: 4, generations: 2, fitness_horizon_slots: 200, ..Default::default() };
        cfg.sweep.policy = vec![PolicyKind::Mpdqn, PolicyKind::Ga, PolicyKind::Random];
        let dir = tempfile::tempdir().unwrap();
        let s = run(&cfg, dir.path(), 1).unwrap();
        assert_eq!(s.failures, 0);
        let curves: Vec<CurveRow> = read_rows(&dir.path().join("learning_curves.csv")).unwrap();
        assert_eq!(curves.len(), 3);
        let ga: Vec<GaRow> = read_rows(&dir.path().join("ga_progress.csv")).unwrap();
        assert!(!ga.is_empty() && ga.iter().all(|g| g.point == 1));
        summarize(dir.path(), dir.path()).unwrap();
        assert!(dir.path().join("learning_summary.csv").exists());
    }
}
