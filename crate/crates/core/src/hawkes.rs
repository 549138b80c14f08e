//! Conditional intensity of edge formation.
//!
//! The raw intensity of `(i, j)` at snapshot `t` is a proximity base rate
//! plus attention-weighted excitation from `i`'s historical neighbors, each
//! discounted by a per-source decay kernel over the snapshot gap.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::embedding::{squared_distance, EmbeddingSequence};
use crate::error::{DhprepError, Result};
use crate::graph::{DynamicNetwork, HistoryEntry, VertexId};

/// Shape of the temporal decay applied to historical interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `exp(-delta * dt)`
    Exponential,
    /// `1 / (1 + delta * dt)`
    PowerLaw,
    /// `exp(-delta * dt^2 / 2)`
    Rayleigh,
    /// Constant 1: history never fades.
    Flat,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Exponential,
        KernelKind::PowerLaw,
        KernelKind::Rayleigh,
        KernelKind::Flat,
    ];

    /// Stable one-byte tag used in checkpoints.
    pub fn as_byte(self) -> u8 {
        match self {
            KernelKind::Exponential => 0,
            KernelKind::PowerLaw => 1,
            KernelKind::Rayleigh => 2,
            KernelKind::Flat => 3,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(KernelKind::Exponential),
            1 => Ok(KernelKind::PowerLaw),
            2 => Ok(KernelKind::Rayleigh),
            3 => Ok(KernelKind::Flat),
            other => Err(DhprepError::Checkpoint(format!(
                "unknown kernel tag {other}"
            ))),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KernelKind::Exponential => "exponential",
            KernelKind::PowerLaw => "power-law",
            KernelKind::Rayleigh => "rayleigh",
            KernelKind::Flat => "flat",
        };
        f.write_str(name)
    }
}

impl FromStr for KernelKind {
    type Err = DhprepError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" => Ok(KernelKind::Exponential),
            "power-law" | "powerlaw" => Ok(KernelKind::PowerLaw),
            "rayleigh" => Ok(KernelKind::Rayleigh),
            "flat" => Ok(KernelKind::Flat),
            other => Err(DhprepError::Validation(format!(
                "unknown kernel {other:?}; expected exponential, power-law, rayleigh, or flat"
            ))),
        }
    }
}

/// Kernel value at snapshot gap `dt` with decay rate `delta > 0`.
pub fn kernel_value(kind: KernelKind, delta: f64, dt: f64) -> f64 {
    match kind {
        KernelKind::Exponential => (-delta * dt).exp(),
        KernelKind::PowerLaw => 1.0 / (1.0 + delta * dt),
        KernelKind::Rayleigh => (-delta * dt * dt / 2.0).exp(),
        KernelKind::Flat => 1.0,
    }
}

/// Partial derivative of [`kernel_value`] with respect to `delta`.
pub fn kernel_delta_derivative(kind: KernelKind, delta: f64, dt: f64) -> f64 {
    match kind {
        KernelKind::Exponential => -dt * (-delta * dt).exp(),
        KernelKind::PowerLaw => {
            let denom = 1.0 + delta * dt;
            -dt / (denom * denom)
        }
        KernelKind::Rayleigh => {
            let half_sq = dt * dt / 2.0;
            -half_sq * (-delta * half_sq).exp()
        }
        KernelKind::Flat => 0.0,
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Shared model parameters besides the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    dim: usize,
    /// Attention projection, `dim x dim` row-major.
    pub w: Vec<f64>,
    /// Attention readout, length `dim`.
    pub z: Vec<f64>,
    /// Per-vertex log decay rate; `delta_i = exp(theta_i)`.
    pub theta: Vec<f64>,
    pub kernel: KernelKind,
}

impl HawkesParams {
    pub fn new(dim: usize, vertices: usize, kernel: KernelKind) -> Result<Self> {
        if dim == 0 || vertices == 0 {
            return Err(DhprepError::Validation(
                "parameter dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            w: vec![0.0; dim * dim],
            z: vec![0.0; dim],
            theta: vec![0.0; vertices],
            kernel,
        })
    }

    /// Attention weights drawn uniform in `[-1/sqrt(dim), 1/sqrt(dim))`,
    /// decay rates started at `exp(0) = 1`.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        vertices: usize,
        kernel: KernelKind,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::new(dim, vertices, kernel)?;
        let half = 1.0 / (dim as f64).sqrt();
        for x in p.w.iter_mut().chain(p.z.iter_mut()) {
            *x = rng.random_range(-half..half);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.theta.len()
    }

    /// Decay rate of source vertex `v`.
    pub fn delta(&self, v: VertexId) -> f64 {
        self.theta[v].exp()
    }
}

/// Forward pass of the history attention for one source vertex.
///
/// Each score is `max(0, z . relu(W |u_i - u_h|))`; weights are the scores
/// divided by their sum, or uniform when every score clamps to zero.
#[derive(Debug, Clone)]
pub struct AttentionDetail {
    /// `relu(W |u_i - u_h|)` per history entry; doubles as the relu mask.
    pub hidden: Vec<Vec<f64>>,
    /// Readout before the outer clamp.
    pub pre: Vec<f64>,
    /// Clamped scores `max(0, pre)`.
    pub score: Vec<f64>,
    /// Normalized weights; sum to 1 whenever the history is non-empty.
    pub weights: Vec<f64>,
    /// Sum of clamped scores; zero switches the weights to uniform.
    pub score_sum: f64,
}

/// Run the attention forward pass over `(u_i, u_h)` embedding pairs.
pub fn attention_detail(pairs: &[(&[f64], &[f64])], params: &HawkesParams) -> AttentionDetail {
    let d = params.dim;
    let n = pairs.len();
    let mut hidden = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut score = Vec::with_capacity(n);
    for &(ui, uh) in pairs {
        let mut h = vec![0.0; d];
        for (r, h_r) in h.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..d {
                acc += params.w[r * d + c] * (ui[c] - uh[c]).abs();
            }
            *h_r = acc.max(0.0);
        }
        let p: f64 = params.z.iter().zip(&h).map(|(z, h)| z * h).sum();
        hidden.push(h);
        pre.push(p);
        score.push(p.max(0.0));
    }
    let score_sum: f64 = score.iter().sum();
    let weights = if n == 0 {
        Vec::new()
    } else if score_sum > 0.0 {
        score.iter().map(|s| s / score_sum).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    AttentionDetail {
        hidden,
        pre,
        score,
        weights,
        score_sum,
    }
}

/// Normalized attention weights only.
pub fn attention_weights(pairs: &[(&[f64], &[f64])], params: &HawkesParams) -> Vec<f64> {
    attention_detail(pairs, params).weights
}

/// Decomposed conditional intensity of a candidate edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityBreakdown {
    /// Negative squared distance at the previous snapshot.
    pub base: f64,
    /// Attention- and kernel-weighted historical influence.
    pub excitation: f64,
    /// `base + excitation`; never positive.
    pub raw: f64,
    /// `exp(raw)`, the intensity on the positive scale.
    pub transferred: f64,
}

/// Conditional intensity of edge `(i, j)` forming at snapshot `t >= 2`,
/// driven by `i`'s history over the last `window` snapshots.
pub fn conditional_intensity(
    i: VertexId,
    j: VertexId,
    t: usize,
    emb: &EmbeddingSequence,
    net: &DynamicNetwork,
    params: &HawkesParams,
    window: usize,
) -> Result<IntensityBreakdown> {
    if t < 2 {
        return Err(DhprepError::Validation(
            "intensity needs a previous snapshot; t must be at least 2".into(),
        ));
    }
    if i == j {
        return Err(DhprepError::Validation(
            "intensity of a self-pair is undefined".into(),
        ));
    }
    let history = net.history_neighbors(i, t, window)?;
    Ok(intensity_from_history(i, j, t, &history, emb, params))
}

/// Intensity given an already collected history (shared with training).
pub(crate) fn intensity_from_history(
    i: VertexId,
    j: VertexId,
    t: usize,
    history: &[HistoryEntry],
    emb: &EmbeddingSequence,
    params: &HawkesParams,
) -> IntensityBreakdown {
    let base = -squared_distance(emb.get(t - 1, i), emb.get(t - 1, j));
    let pairs: Vec<(&[f64], &[f64])> = history
        .iter()
        .map(|h| (emb.get(h.snapshot, i), emb.get(h.snapshot, h.neighbor)))
        .collect();
    let att = attention_detail(&pairs, params);
    let delta = params.delta(i);
    let mut excitation = 0.0;
    for (h, &alpha) in history.iter().zip(&att.weights) {
        let influence = -squared_distance(emb.get(h.snapshot, h.neighbor), emb.get(h.snapshot, j));
        let decay = kernel_value(params.kernel, delta, (t - h.snapshot) as f64);
        excitation += alpha * influence * decay;
    }
    let raw = base + excitation;
    IntensityBreakdown {
        base,
        excitation,
        raw,
        transferred: raw.exp(),
    }
}

/// Probability that the edge forms, as the logistic link of the raw intensity.
pub fn edge_probability(
    i: VertexId,
    j: VertexId,
    t: usize,
    emb: &EmbeddingSequence,
    net: &DynamicNetwork,
    params: &HawkesParams,
    window: usize,
) -> Result<f64> {
    Ok(sigmoid(conditional_intensity(i, j, t, emb, net, params, window)?.raw))
}
