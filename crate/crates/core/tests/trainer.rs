mod common;

use hwydrive_core::config::Config;
use hwydrive_core::trainer::{build_agent, train, ReplayBuffer, TrainOutputs};
use common::replay_log;
use serde_json::Value;

#[test]
fn replay_ring_semantics() {
    let mut b = ReplayBuffer::new(4, 0);
    assert!(b.sample(1).is_none());
    for i in 0..5 {
        b.push(i);
    }
    assert_eq!(b.len(), 4);
    assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    let mut all: Vec<i32> = b.sample(4).unwrap().into_iter().copied().collect();
    all.sort();
    assert_eq!(all, vec![1, 2, 3, 4]);
    assert!(b.sample(5).is_none());
}

#[test]
fn replay_sampling_is_uniform() {
    let n = 50;
    let mut b = ReplayBuffer::new(n, 17);
    for i in 0..n {
        b.push(i);
    }
    let mut counts = vec![0usize; n];
    let draws = 100_000;
    for _ in 0..draws / 10 {
        let batch = b.sample(10).unwrap();
        let mut seen: Vec<usize> = batch.iter().map(|&&i| i).collect();
        for &i in &seen {
            counts[i] += 1;
        }
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10, "duplicates within a batch");
    }
    let p = 1.0 / n as f64;
    let e = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in &counts {
        assert!((c as f64 - e).abs() <= 3.0 * sd, "count {c} vs {e}");
        chi2 += (c as f64 - e).powi(2) / e;
    }
    // 49 degrees of freedom, p = 0.001
    assert!(chi2 < 85.35, "chi2 {chi2}");
}

fn quick(episodes: usize) -> Config {
    let mut c = Config::default();
    c.train.episodes = episodes;
    c.train.low_warmup = 64;
    c.train.high_warmup = 16;
    c.net.hidden = vec![32, 32];
    c
}

#[test]
fn zero_episodes_keeps_initialization() {
    let cfg = quick(0);
    let dir = tempfile::tempdir().unwrap();
    let res = train(&cfg, 3, &TrainOutputs { dir: Some(dir.path().into()), events: false }).unwrap();
    assert!(res.log.is_empty());
    let init = build_agent(&cfg, 3).unwrap().checkpoint().to_text();
    assert_eq!(std::fs::read_to_string(dir.path().join("checkpoint.txt")).unwrap(), init);
    let csv = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn training_is_bit_reproducible() {
    let cfg = quick(5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        train(&cfg, 11, &TrainOutputs { dir: Some(d.path().into()), events: true }).unwrap();
    }
    for f in ["train_log.csv", "checkpoint.txt", "events.jsonl"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let c = tempfile::tempdir().unwrap();
    train(&cfg, 12, &TrainOutputs { dir: Some(c.path().into()), events: false }).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("checkpoint.txt")).unwrap(),
        std::fs::read(c.path().join("checkpoint.txt")).unwrap()
    );
}

#[test]
fn event_log_has_one_high_transition_per_segment() {
    let mut cfg = quick(12);
    cfg.safety.eta_ramp = 0.2;
    let dir = tempfile::tempdir().unwrap();
    let res = train(&cfg, 5, &TrainOutputs { dir: Some(dir.path().into()), events: true }).unwrap();
    let text = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    let segments = replay_log(&text, cfg.safety.n_max as u64);
    assert_eq!(segments, res.log.iter().map(|e| e.summary.segments).sum::<usize>());
    // ratio of the two timesteps
    assert!(cfg.safety.n_max as f64 * cfg.env.dt <= 1.0 + 1e-12);
}

#[test]
fn without_safety_nothing_fires() {
    let mut cfg = quick(8);
    cfg.safety.enabled = false;
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, 6, &TrainOutputs { dir: Some(dir.path().into()), events: true }).unwrap();
    let text = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    replay_log(&text, cfg.safety.n_max as u64);
    let lows: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["kind"] == "low")
        .collect();
    for (k, v) in lows.iter().enumerate() {
        assert_eq!(v["high_fired"], false);
        assert_eq!(v["low_fired"], false);
        assert_eq!(v["eta"].as_f64().unwrap(), 0.0);
        if v["beta"].as_bool().unwrap() {
            let last_of_episode = lows.get(k + 1).is_none_or(|n| n["episode"] != v["episode"]);
            let exhausted = v["guidance"].as_array().unwrap().is_empty();
            assert!(
                v["violation"].as_bool().unwrap() || v["i"].as_u64().unwrap() == cfg.safety.n_max as u64 || exhausted || last_of_episode,
                "unexpected beta at {v}"
            );
        }
    }
}
