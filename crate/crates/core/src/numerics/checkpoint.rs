//! Portable text checkpoints.
//!
//! ```text
//! hwydrive-checkpoint 1
//! network high_actor
//! output tanh
//! layers 42 128 128 3
//! weights 0
//! <one row per line, space separated>
//! bias 0
//! <values>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! reload reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &str = "hwydrive-checkpoint 1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub networks: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, net: Mlp) {
        self.networks.push((name.into(), net));
    }

    pub fn get(&self, name: &str) -> Result<&Mlp> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Checkpoint(format!("missing network '{name}'")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        for (name, net) in &self.networks {
            let _ = writeln!(s, "network {name}");
            let _ = writeln!(s, "output {}", net.output.name());
            let sizes: Vec<String> = net.layer_sizes().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "layers {}", sizes.join(" "));
            for (k, layer) in net.layers.iter().enumerate() {
                let _ = writeln!(s, "weights {k}");
                for row in layer.weights.rows() {
                    let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                    let _ = writeln!(s, "{}", vals.join(" "));
                }
                let _ = writeln!(s, "bias {k}");
                let vals: Vec<String> = layer.bias.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
            s.push_str("end\n");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |n: usize, msg: &str| Error::Checkpoint(format!("line {}: {msg}", n + 1));
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(Error::Checkpoint("missing header".into())),
        }
        let mut out = Checkpoint::new();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Checkpoint(format!("unexpected end of file, expected {what}")));
        while let Ok((n, line)) = next("network") {
            let name = line
                .strip_prefix("network ")
                .ok_or_else(|| bad(n, "expected 'network <name>'"))?
                .trim()
                .to_string();
            let (n, line) = next("output")?;
            let output = line
                .strip_prefix("output ")
                .and_then(|a| Activation::from_name(a.trim()))
                .ok_or_else(|| bad(n, "expected 'output <activation>'"))?;
            let (n, line) = next("layers")?;
            let sizes: Vec<usize> = line
                .strip_prefix("layers ")
                .ok_or_else(|| bad(n, "expected 'layers ...'"))?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(n, "bad layer size")))
                .collect::<Result<_>>()?;
            if sizes.len() < 2 {
                return Err(bad(n, "need at least two layer sizes"));
            }
            let mut layers = Vec::new();
            for (k, w) in sizes.windows(2).enumerate() {
                let (inp, outp) = (w[0], w[1]);
                let (n, line) = next("weights")?;
                if line.trim() != format!("weights {k}") {
                    return Err(bad(n, "expected weights header"));
                }
                let mut flat = Vec::with_capacity(inp * outp);
                for _ in 0..outp {
                    let (n, row) = next("weight row")?;
                    let vals = parse_row(row, inp).map_err(|m| bad(n, &m))?;
                    flat.extend(vals);
                }
                let (n, line) = next("bias")?;
                if line.trim() != format!("bias {k}") {
                    return Err(bad(n, "expected bias header"));
                }
                let (n, row) = next("bias row")?;
                let bias = parse_row(row, outp).map_err(|m| bad(n, &m))?;
                layers.push(Dense {
                    weights: Array2::from_shape_vec((outp, inp), flat).expect("sized above"),
                    bias: Array1::from_vec(bias),
                });
            }
            let (n, line) = next("end")?;
            if line.trim() != "end" {
                return Err(bad(n, "expected 'end'"));
            }
            out.push(name, Mlp { layers, output });
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_row(row: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let vals: Vec<f64> = row
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != expected {
        return Err(format!("expected {expected} values, found {}", vals.len()));
    }
    Ok(vals)
}
