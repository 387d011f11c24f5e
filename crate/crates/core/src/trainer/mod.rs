//! The nested two-timescale training loop.

mod replay;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use replay::ReplayBuffer;

use crate::agent::{Agent, EpisodeHooks, EpisodeSummary, SegmentRecord, StepRecord};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::policies::{Exploration, HighTransition, LowTransition};
use crate::sim::Simulator;

/// Attention weight η after `episode` of `total` episodes: a linear ramp over
/// the first `ramp` fraction of training, then held at `final_value`.
pub fn eta_schedule(episode: usize, total: usize, ramp: f64, final_value: f64) -> f64 {
    let span = ramp * total as f64;
    if span <= 0.0 {
        return final_value;
    }
    (episode as f64 / span).min(1.0) * final_value
}

/// Linear decay from `start` to `end` over the first `fraction` of training.
pub fn linear_decay(episode: usize, total: usize, fraction: f64, start: f64, end: f64) -> f64 {
    let span = fraction * total as f64;
    if span <= 0.0 {
        return end;
    }
    let t = (episode as f64 / span).min(1.0);
    start + (end - start) * t
}

/// Environment seed of a training episode.
pub fn episode_seed(base: u64, episode: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(episode as u64 + 1)
}

/// Event-log entries; one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Low(Box<StepRecord>),
    High(SegmentRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub summary: EpisodeSummary,
    pub epsilon: f64,
}

pub fn csv_header() -> &'static str {
    "episode,total_reward,steps,collisions,mean_k,eta,epsilon"
}

pub fn csv_line(e: &EpisodeLog) -> String {
    let s = &e.summary;
    format!(
        "{},{},{},{},{},{},{}",
        s.episode, s.total_reward, s.steps, s.collisions, s.mean_k, s.eta, e.epsilon
    )
}

/// Where training writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub dir: Option<PathBuf>,
    /// Also write the per-step event log used by the log replayer.
    pub events: bool,
}

pub struct TrainResult {
    pub agent: Agent,
    pub log: Vec<EpisodeLog>,
}

struct TrainHooks {
    low_buffer: ReplayBuffer<LowTransition>,
    high_buffer: ReplayBuffer<HighTransition>,
    explore: Exploration,
    batch: usize,
    low_warmup: usize,
    high_warmup: usize,
    events: Option<BufWriter<File>>,
}

impl TrainHooks {
    fn write_event(&mut self, e: &Event) -> Result<()> {
        if let Some(w) = &mut self.events {
            serde_json::to_writer(&mut *w, e).map_err(|err| Error::Trajectory(err.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl EpisodeHooks for TrainHooks {
    fn exploration(&mut self) -> Option<&mut Exploration> {
        Some(&mut self.explore)
    }

    fn low_step(&mut self, agent: &mut Agent, t: LowTransition, rec: StepRecord) -> Result<()> {
        self.write_event(&Event::Low(Box::new(rec)))?;
        self.low_buffer.push(t);
        if self.low_buffer.len() >= self.low_warmup.max(self.batch) {
            if let Some(batch) = self.low_buffer.sample(self.batch) {
                let Agent { low, high, .. } = agent;
                low.update(&batch, high)?;
            }
        }
        Ok(())
    }

    fn high_step(&mut self, agent: &mut Agent, t: HighTransition, rec: SegmentRecord) -> Result<()> {
        self.write_event(&Event::High(rec))?;
        self.high_buffer.push(t);
        if self.high_buffer.len() >= self.high_warmup.max(self.batch) {
            if let Some(batch) = self.high_buffer.sample(self.batch) {
                agent.high.update(&batch)?;
            }
        }
        Ok(())
    }
}

pub fn build_agent(cfg: &Config, seed: u64) -> Result<Agent> {
    cfg.validate()?;
    let sim = Simulator::new(cfg.env)?;
    Agent::new(sim, cfg.guidance, cfg.safety, cfg.reward, &cfg.net, seed)
}

/// Train one agent with seed `seed`.
pub fn train(cfg: &Config, seed: u64, out: &TrainOutputs) -> Result<TrainResult> {
    let mut agent = build_agent(cfg, seed)?;
    let t = &cfg.train;
    let mut hooks = TrainHooks {
        low_buffer: ReplayBuffer::new(t.low_capacity, seed ^ 0x10),
        high_buffer: ReplayBuffer::new(t.high_capacity, seed ^ 0x20),
        explore: Exploration::new(t.epsilon_start, t.sigma_start, seed ^ 0x30),
        batch: t.batch_size,
        low_warmup: t.low_warmup,
        high_warmup: t.high_warmup,
        events: None,
    };
    let mut csv = None;
    if let Some(dir) = &out.dir {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("train_log.csv"))?);
        writeln!(w, "{}", csv_header())?;
        csv = Some(w);
        if out.events {
            hooks.events = Some(BufWriter::new(File::create(dir.join("events.jsonl"))?));
        }
        agent.checkpoint().save(&dir.join("checkpoint.txt"))?;
    }

    let mut log = Vec::with_capacity(t.episodes);
    for episode in 0..t.episodes {
        let eta = eta_schedule(episode, t.episodes, cfg.safety.eta_ramp, cfg.safety.eta_final);
        let epsilon = linear_decay(episode, t.episodes, t.explore_fraction, t.epsilon_start, t.epsilon_end);
        hooks.explore.epsilon = epsilon;
        hooks.explore.sigma = linear_decay(episode, t.episodes, t.explore_fraction, t.sigma_start, t.sigma_end);
        let summary = match agent.run_episode(episode, episode_seed(seed, episode), eta, &mut hooks) {
            Ok(s) => s,
            Err(e) => {
                log::error!("training aborted in episode {episode}: {e}");
                if let Some(w) = &mut csv {
                    w.flush()?;
                }
                if let Some(w) = &mut hooks.events {
                    w.flush()?;
                }
                return Err(e);
            }
        };
        let entry = EpisodeLog { summary, epsilon };
        log::info!(
            "episode {episode}: reward {:.3} steps {} collision {} eta {:.3}",
            summary.total_reward,
            summary.steps,
            summary.collisions,
            summary.eta
        );
        if let Some(w) = &mut csv {
            writeln!(w, "{}", csv_line(&entry))?;
        }
        log.push(entry);
        if let Some(dir) = &out.dir {
            if t.checkpoint_every > 0 && (episode + 1) % t.checkpoint_every == 0 {
                save_checkpoint_atomically(&agent, dir)?;
            }
        }
    }
    if let Some(dir) = &out.dir {
        save_checkpoint_atomically(&agent, dir)?;
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    if let Some(mut w) = hooks.events.take() {
        w.flush()?;
    }
    Ok(TrainResult { agent, log })
}

/// Write `checkpoint.txt` through a temporary file so an interrupted write
/// never replaces the last good checkpoint.
fn save_checkpoint_atomically(agent: &Agent, dir: &Path) -> Result<()> {
    let ck = agent.checkpoint();
    if !ck.networks.iter().all(|(_, n)| n.all_finite()) {
        return Err(Error::NonFinite("network parameters at checkpoint time".into()));
    }
    let tmp = dir.join("checkpoint.txt.tmp");
    ck.save(&tmp)?;
    std::fs::rename(&tmp, dir.join("checkpoint.txt"))?;
    Ok(())
}
