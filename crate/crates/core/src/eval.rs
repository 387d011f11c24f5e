//! Greedy evaluation, driving metrics and trajectory logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, EpisodeHooks, StepRecord};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::numerics::Checkpoint;
use crate::policies::LowTransition;
use crate::sim::{Command, Simulator};
use crate::trainer::build_agent;

/// Offset mixed into evaluation seeds so they never coincide with training episodes.
const EVAL_SALT: u64 = 0xE7A1_5EED;

pub fn eval_seed(seed: u64, episode: usize) -> u64 {
    crate::trainer::episode_seed(seed ^ EVAL_SALT, episode)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Per-episode driving metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub total_reward: f64,
    pub mean_speed: f64,
    pub lane_changes: f64,
    pub mean_abs_steer: f64,
    pub mean_abs_accel: f64,
    pub centerline_deviation: f64,
    pub collided: f64,
    pub ttc_current: f64,
    pub ttc_target: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub tr: Stat,
    pub ds: Stat,
    pub tlc: Stat,
    pub as_: Stat,
    pub aa: Stat,
    pub cdd: Stat,
    pub cr: Stat,
    pub ttc_c: Stat,
    pub ttc_t: Stat,
}

impl MetricsReport {
    pub fn from_episodes(eps: &[EpisodeMetrics]) -> Self {
        let col = |f: fn(&EpisodeMetrics) -> f64| Stat::of(&eps.iter().map(f).collect::<Vec<_>>());
        Self {
            episodes: eps.len(),
            tr: col(|e| e.total_reward),
            ds: col(|e| e.mean_speed),
            tlc: col(|e| e.lane_changes),
            as_: col(|e| e.mean_abs_steer),
            aa: col(|e| e.mean_abs_accel),
            cdd: col(|e| e.centerline_deviation),
            cr: col(|e| e.collided),
            ttc_c: col(|e| e.ttc_current),
            ttc_t: col(|e| e.ttc_target),
        }
    }

    pub fn rows(&self) -> [(&'static str, Stat); 9] {
        [
            ("TR", self.tr),
            ("DS", self.ds),
            ("TLC", self.tlc),
            ("AS", self.as_),
            ("AA", self.aa),
            ("CDD", self.cdd),
            ("CR", self.cr),
            ("TTC-C", self.ttc_c),
            ("TTC-T", self.ttc_t),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,mean,std\n");
        for (name, st) in self.rows() {
            let _ = writeln!(s, "{name},{},{}", st.mean, st.std);
        }
        s
    }
}

/// Metrics of one episode's step records.
pub fn episode_metrics(steps: &[&StepRecord], lane_width: f64) -> EpisodeMetrics {
    if steps.is_empty() {
        return EpisodeMetrics::default();
    }
    let n = steps.len() as f64;
    let mean = |f: &dyn Fn(&StepRecord) -> f64| steps.iter().map(|s| f(s)).sum::<f64>() / n;
    EpisodeMetrics {
        total_reward: steps.iter().map(|s| s.reward).sum(),
        mean_speed: mean(&|s| s.speed),
        lane_changes: steps.iter().filter(|s| s.lane != s.prev_lane).count() as f64,
        mean_abs_steer: mean(&|s| s.steer.abs()),
        mean_abs_accel: mean(&|s| s.accel.abs()),
        centerline_deviation: mean(&|s| (s.y - (s.lane as f64 + 0.5) * lane_width).abs()),
        collided: if steps.iter().any(|s| s.violation) { 1.0 } else { 0.0 },
        ttc_current: mean(&|s| s.ttc_current),
        ttc_target: mean(&|s| s.ttc_target),
    }
}

/// Metrics over every episode present in `records`, ordered by episode index.
pub fn metrics_from_records(records: &[StepRecord], lane_width: f64) -> MetricsReport {
    let mut by_episode: BTreeMap<usize, Vec<&StepRecord>> = BTreeMap::new();
    for r in records {
        by_episode.entry(r.episode).or_default().push(r);
    }
    let eps: Vec<EpisodeMetrics> = by_episode.values().map(|s| episode_metrics(s, lane_width)).collect();
    MetricsReport::from_episodes(&eps)
}

struct Recorder {
    records: Vec<StepRecord>,
    svs: bool,
}

impl EpisodeHooks for Recorder {
    fn record_svs(&self) -> bool {
        self.svs
    }

    fn low_step(&mut self, _agent: &mut Agent, _t: LowTransition, rec: StepRecord) -> Result<()> {
        self.records.push(rec);
        Ok(())
    }
}

/// Greedy episodes with the agent's current networks.
pub fn run_greedy(agent: &mut Agent, episodes: usize, seed: u64, with_svs: bool) -> Result<Vec<StepRecord>> {
    let eta = agent.safety.eta_final;
    let mut rec = Recorder {
        records: Vec::new(),
        svs: with_svs,
    };
    for ep in 0..episodes {
        agent.run_episode(ep, eval_seed(seed, ep), eta, &mut rec)?;
    }
    Ok(rec.records)
}

pub fn agent_from_checkpoint(cfg: &Config, ck: &Checkpoint, safety: bool) -> Result<Agent> {
    let mut agent = build_agent(cfg, cfg.train.seed)?;
    agent.load_checkpoint(ck, &cfg.net)?;
    agent.safety.enabled = safety;
    Ok(agent)
}

/// Evaluate a checkpoint over `episodes` greedy episodes.
pub fn evaluate(cfg: &Config, ck: &Checkpoint, episodes: usize, seed: u64, safety: bool) -> Result<MetricsReport> {
    let mut agent = agent_from_checkpoint(cfg, ck, safety)?;
    evaluate_agent(&mut agent, episodes, seed)
}

pub fn evaluate_agent(agent: &mut Agent, episodes: usize, seed: u64) -> Result<MetricsReport> {
    let records = run_greedy(agent, episodes, seed, false)?;
    let mut report = metrics_from_records(&records, agent.sim.cfg.road.lane_width);
    report.episodes = episodes;
    Ok(report)
}

pub fn write_trajectory(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Trajectory(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<StepRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Trajectory(format!("line {}: {e}", n + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// Re-simulate one episode from its seed with the logged commands and return
/// the largest deviation of the ego pose and speed from the log.
pub fn replay_deviation(sim: &Simulator, records: &[StepRecord]) -> Result<f64> {
    let Some(first) = records.first() else {
        return Err(Error::Trajectory("no records to replay".into()));
    };
    let mut state = sim.reset(first.seed);
    let mut worst: f64 = 0.0;
    for r in records {
        if r.episode != first.episode {
            return Err(Error::Trajectory("records span several episodes".into()));
        }
        sim.step(&mut state, Command::new(r.steer, r.accel));
        let e = &state.ego;
        for (a, b) in [(e.x, r.x), (e.y, r.y), (e.heading, r.heading), (e.speed, r.speed)] {
            worst = worst.max((a - b).abs());
        }
        if state.violation != r.violation {
            return Ok(f64::INFINITY);
        }
    }
    Ok(worst)
}
