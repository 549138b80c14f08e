//! Synthetic temporal networks with planted block structure.
//!
//! Each snapshot is a stochastic block model draw; edges persist with a
//! configurable probability, and an optional recency boost raises the
//! re-formation odds of recently seen pairs so history carries signal.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{DhprepError, Result};
use crate::graph::DynamicNetwork;

/// How past edges influence future re-formation probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayMode {
    /// Snapshots are independent given the block probabilities.
    None,
    /// Each past occurrence of a pair adds `exp(-rate * age)` to its boost.
    Exponential { rate: f64 },
}

/// Recipe for a planted-community temporal network.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub vertices: usize,
    /// Community sizes; must sum to `vertices`.
    pub block_sizes: Vec<usize>,
    pub snapshots: usize,
    /// Within-community edge probability.
    pub p_in: f64,
    /// Cross-community edge probability; at most `p_in`.
    pub p_out: f64,
    /// Probability an existing edge survives to the next snapshot.
    pub persistence: f64,
    pub decay: DecayMode,
    pub seed: u64,
    /// Bucket width stamped on the generated network.
    pub interval: u64,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vertices < 2 {
            return Err(DhprepError::Validation(
                "need at least two vertices".into(),
            ));
        }
        if self.block_sizes.is_empty() || self.block_sizes.iter().any(|&s| s == 0) {
            return Err(DhprepError::Validation(
                "block sizes must be non-empty and positive".into(),
            ));
        }
        if self.block_sizes.iter().sum::<usize>() != self.vertices {
            return Err(DhprepError::Validation(format!(
                "block sizes sum to {}, expected {}",
                self.block_sizes.iter().sum::<usize>(),
                self.vertices
            )));
        }
        if self.snapshots == 0 {
            return Err(DhprepError::Validation("need at least one snapshot".into()));
        }
        for (name, p) in [("p-in", self.p_in), ("p-out", self.p_out), ("persistence", self.persistence)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DhprepError::Validation(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.p_out > self.p_in {
            return Err(DhprepError::Validation(format!(
                "p-out ({}) must not exceed p-in ({})",
                self.p_out, self.p_in
            )));
        }
        if let DecayMode::Exponential { rate } = self.decay {
            if !rate.is_finite() || rate <= 0.0 {
                return Err(DhprepError::Validation(format!(
                    "decay rate must be positive, got {rate}"
                )));
            }
        }
        if self.interval == 0 {
            return Err(DhprepError::Validation("interval must be positive".into()));
        }
        Ok(())
    }
}

/// A generated network together with its planted community labels.
#[derive(Debug, Clone)]
pub struct Planted {
    pub net: DynamicNetwork,
    /// Community index per vertex.
    pub labels: Vec<usize>,
}

/// Generate a planted network. Identical specs produce identical networks.
pub fn generate(spec: &PlantedSpec) -> Result<Planted> {
    spec.validate()?;
    let mut labels = Vec::with_capacity(spec.vertices);
    for (block, &size) in spec.block_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(block, size));
    }

    let n = spec.vertices;
    let pair_count = n * (n - 1) / 2;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    // Per-pair state in (i, j) lexicographic order.
    let mut present = vec![false; pair_count];
    let mut boost = vec![0.0f64; pair_count];
    let decay_factor = match spec.decay {
        DecayMode::None => 0.0,
        DecayMode::Exponential { rate } => (-rate).exp(),
    };

    let mut sets = Vec::with_capacity(spec.snapshots);
    for t in 0..spec.snapshots {
        let mut edges = BTreeMap::new();
        let mut idx = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let p_base = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
                let now = if t > 0 && present[idx] && rng.random::<f64>() < spec.persistence {
                    true
                } else {
                    // Fresh draw; past occurrences shift the odds upward.
                    let p = 1.0 - (1.0 - p_base) * (-boost[idx]).exp();
                    rng.random::<f64>() < p
                };
                if now {
                    edges.insert((i, j), 1.0);
                }
                present[idx] = now;
                boost[idx] = (boost[idx] + if now { 1.0 } else { 0.0 }) * decay_factor;
                idx += 1;
            }
        }
        sets.push(edges);
    }

    let net = DynamicNetwork::from_snapshot_edge_sets(n, spec.interval, sets)?;
    Ok(Planted { net, labels })
}

/// Write one `vertex <TAB> block` line per vertex.
pub fn write_labels<W: Write>(mut w: W, labels: &[usize]) -> Result<()> {
    for (vertex, block) in labels.iter().enumerate() {
        writeln!(w, "{vertex}\t{block}")?;
    }
    Ok(())
}
