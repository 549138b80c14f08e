//! Hand-derived gradients of the training objective.
//!
//! All parameters train jointly: per-snapshot embeddings, the attention
//! projection and readout, and per-vertex log decay rates. Subgradients at
//! the relu, clamp, and absolute-value kinks are taken as zero, matching the
//! forward pass exactly.

use crate::embedding::{squared_distance, EmbeddingSequence};
use crate::graph::{DynamicNetwork, HistoryEntry, VertexId};
use crate::hawkes::{
    attention_detail, kernel_delta_derivative, kernel_value, sigmoid, softplus, AttentionDetail,
    HawkesParams,
};

/// Dense gradient buffers mirroring the trainable parameter layout.
#[derive(Debug, Clone)]
pub struct GradientSet {
    /// Same snapshot-major layout as [`EmbeddingSequence::data`].
    pub emb: Vec<f64>,
    /// Row-major `dim x dim` attention projection.
    pub w: Vec<f64>,
    /// Attention readout, length `dim`.
    pub z: Vec<f64>,
    /// Per-vertex log decay rate.
    pub theta: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(emb: &EmbeddingSequence, params: &HawkesParams) -> Self {
        Self {
            emb: vec![0.0; emb.data().len()],
            w: vec![0.0; params.w.len()],
            z: vec![0.0; params.z.len()],
            theta: vec![0.0; params.theta.len()],
        }
    }

    pub fn reset(&mut self) {
        for buf in [&mut self.emb, &mut self.w, &mut self.z, &mut self.theta] {
            buf.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Attention and kernel state for one event source, shared by the positive
/// candidate and every sampled negative.
pub(crate) struct EventForward {
    pub att: AttentionDetail,
    pub kappa: Vec<f64>,
    pub dkappa: Vec<f64>,
    pub delta: f64,
}

pub(crate) fn event_forward(
    i: VertexId,
    t: usize,
    history: &[HistoryEntry],
    emb: &EmbeddingSequence,
    params: &HawkesParams,
) -> EventForward {
    let pairs: Vec<(&[f64], &[f64])> = history
        .iter()
        .map(|h| (emb.get(h.snapshot, i), emb.get(h.snapshot, h.neighbor)))
        .collect();
    let att = attention_detail(&pairs, params);
    let delta = params.delta(i);
    let mut kappa = Vec::with_capacity(history.len());
    let mut dkappa = Vec::with_capacity(history.len());
    for h in history {
        let dt = (t - h.snapshot) as f64;
        kappa.push(kernel_value(params.kernel, delta, dt));
        dkappa.push(kernel_delta_derivative(params.kernel, delta, dt));
    }
    EventForward {
        att,
        kappa,
        dkappa,
        delta,
    }
}

impl EventForward {
    /// Raw intensity of candidate `c` for the event source at snapshot `t`.
    pub(crate) fn raw_intensity(
        &self,
        i: VertexId,
        c: VertexId,
        t: usize,
        history: &[HistoryEntry],
        emb: &EmbeddingSequence,
    ) -> f64 {
        let mut raw = -squared_distance(emb.get(t - 1, i), emb.get(t - 1, c));
        for (m, h) in history.iter().enumerate() {
            let g = -squared_distance(emb.get(h.snapshot, h.neighbor), emb.get(h.snapshot, c));
            raw += self.att.weights[m] * g * self.kappa[m];
        }
        raw
    }
}

/// Accumulate `scale` times the gradient of one event's sampling loss:
/// `softplus(-raw_pos) + sum_k softplus(raw_neg_k)`. Returns the unscaled
/// loss value.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_event_grad(
    i: VertexId,
    j: VertexId,
    t: usize,
    negatives: &[VertexId],
    history: &[HistoryEntry],
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    scale: f64,
    grads: &mut GradientSet,
) -> f64 {
    let d = emb.dim();
    let m_len = history.len();
    let fwd = event_forward(i, t, history, emb, params);
    let prev = t - 1;
    let off_i_prev = emb.offset(prev, i);

    // a_sum[m] collects sum_c s_c * g_{m,c} for the kernel and attention
    // chains; s_c is the scaled loss derivative at candidate c's intensity.
    let mut a_sum = vec![0.0; m_len];
    let mut loss = 0.0;

    for (c_idx, &c) in std::iter::once(&j).chain(negatives.iter()).enumerate() {
        let is_positive = c_idx == 0;
        let ui_prev = emb.get(prev, i);
        let uc_prev = emb.get(prev, c);
        let mut raw = -squared_distance(ui_prev, uc_prev);
        let mut g = vec![0.0; m_len];
        for (m, h) in history.iter().enumerate() {
            g[m] = -squared_distance(emb.get(h.snapshot, h.neighbor), emb.get(h.snapshot, c));
            raw += fwd.att.weights[m] * g[m] * fwd.kappa[m];
        }
        let s = if is_positive {
            loss += softplus(-raw);
            scale * -sigmoid(-raw)
        } else {
            loss += softplus(raw);
            scale * sigmoid(raw)
        };

        // Proximity base: d(-|ui - uc|^2)/dui = -2 (ui - uc).
        let off_c_prev = emb.offset(prev, c);
        for k in 0..d {
            let diff = emb.data()[off_i_prev + k] - emb.data()[off_c_prev + k];
            grads.emb[off_i_prev + k] += s * -2.0 * diff;
            grads.emb[off_c_prev + k] += s * 2.0 * diff;
        }

        // Historical influence terms and the per-entry sums.
        for (m, h) in history.iter().enumerate() {
            a_sum[m] += s * g[m];
            let q = s * fwd.att.weights[m] * fwd.kappa[m];
            if q == 0.0 {
                continue;
            }
            let off_h = emb.offset(h.snapshot, h.neighbor);
            let off_c = emb.offset(h.snapshot, c);
            for k in 0..d {
                let diff = emb.data()[off_h + k] - emb.data()[off_c + k];
                grads.emb[off_h + k] += q * -2.0 * diff;
                grads.emb[off_c + k] += q * 2.0 * diff;
            }
        }
    }

    // Decay rate of the source vertex, through every kernel evaluation.
    let mut dtheta = 0.0;
    for m in 0..m_len {
        dtheta += fwd.att.weights[m] * a_sum[m] * fwd.dkappa[m];
    }
    grads.theta[i] += dtheta * fwd.delta;

    // Attention backward. A zero score sum used the uniform fallback, whose
    // subgradient is zero everywhere.
    if fwd.att.score_sum > 0.0 {
        let dalpha: Vec<f64> = (0..m_len).map(|m| a_sum[m] * fwd.kappa[m]).collect();
        let weighted: f64 = dalpha
            .iter()
            .zip(&fwd.att.weights)
            .map(|(c, a)| c * a)
            .sum();
        for (n, h) in history.iter().enumerate() {
            if fwd.att.pre[n] <= 0.0 {
                continue;
            }
            let dpre = (dalpha[n] - weighted) / fwd.att.score_sum;
            if dpre == 0.0 {
                continue;
            }
            let hidden = &fwd.att.hidden[n];
            let off_i_h = emb.offset(h.snapshot, i);
            let off_n_h = emb.offset(h.snapshot, h.neighbor);
            for r in 0..d {
                grads.z[r] += dpre * hidden[r];
                if hidden[r] <= 0.0 {
                    continue;
                }
                let dh = dpre * params.z[r];
                for c in 0..d {
                    let diff = emb.data()[off_i_h + c] - emb.data()[off_n_h + c];
                    grads.w[r * d + c] += dh * diff.abs();
                    let sg = sign(diff);
                    if sg != 0.0 {
                        let dv = dh * params.w[r * d + c] * sg;
                        grads.emb[off_i_h + c] += dv;
                        grads.emb[off_n_h + c] -= dv;
                    }
                }
            }
        }
    }

    loss
}

/// Accumulate `scale` times the gradient of the snapshot proximity loss
/// `sum_{(a,b,w) in E_t} w |u_a^t - u_b^t|^2`; returns the unscaled loss.
pub(crate) fn accumulate_structural(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    t: usize,
    scale: f64,
    grads: &mut GradientSet,
) -> f64 {
    let d = emb.dim();
    let mut loss = 0.0;
    for ((a, b), w) in net.snapshot(t).edges() {
        let off_a = emb.offset(t, a);
        let off_b = emb.offset(t, b);
        let mut sq = 0.0;
        for k in 0..d {
            let diff = emb.data()[off_a + k] - emb.data()[off_b + k];
            sq += diff * diff;
            let g = scale * w * 2.0 * diff;
            grads.emb[off_a + k] += g;
            grads.emb[off_b + k] -= g;
        }
        loss += w * sq;
    }
    loss
}

/// Accumulate `scale` times the gradient of the drift penalty
/// `sum_i |u_i^t - u_i^{t-1}|^2`; zero at the first snapshot. Returns the
/// unscaled loss.
pub(crate) fn accumulate_smooth(
    emb: &EmbeddingSequence,
    t: usize,
    scale: f64,
    grads: &mut GradientSet,
) -> f64 {
    if t == 1 {
        return 0.0;
    }
    let d = emb.dim();
    let mut loss = 0.0;
    for i in 0..emb.vertex_count() {
        let off_t = emb.offset(t, i);
        let off_p = emb.offset(t - 1, i);
        for k in 0..d {
            let diff = emb.data()[off_t + k] - emb.data()[off_p + k];
            loss += diff * diff;
            let g = scale * 2.0 * diff;
            grads.emb[off_t + k] += g;
            grads.emb[off_p + k] -= g;
        }
    }
    loss
}

/// Apply one plain gradient step to every trainable parameter.
pub(crate) fn apply_sgd(
    emb: &mut EmbeddingSequence,
    params: &mut HawkesParams,
    grads: &GradientSet,
    lr: f64,
) {
    for (x, g) in emb.data_mut().iter_mut().zip(&grads.emb) {
        *x -= lr * g;
    }
    for (x, g) in params.w.iter_mut().zip(&grads.w) {
        *x -= lr * g;
    }
    for (x, g) in params.z.iter_mut().zip(&grads.z) {
        *x -= lr * g;
    }
    for (x, g) in params.theta.iter_mut().zip(&grads.theta) {
        *x -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::{conditional_intensity, KernelKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::BTreeMap;

    /// The batched candidate forward must agree with the public single-pair
    /// intensity.
    #[test]
    fn event_forward_matches_public_intensity() {
        let sets = vec![
            BTreeMap::from([((0, 1), 1.0), ((1, 2), 2.0), ((0, 3), 1.0)]),
            BTreeMap::from([((0, 2), 1.0), ((2, 3), 1.0)]),
            BTreeMap::from([((0, 1), 1.0)]),
        ];
        let net = DynamicNetwork::from_snapshot_edge_sets(4, 1, sets).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let emb = EmbeddingSequence::random(3, 4, 3, &mut rng).unwrap();
        let params = HawkesParams::random(3, 4, KernelKind::PowerLaw, &mut rng).unwrap();
        for (i, j, t) in [(0, 2, 3), (2, 1, 2), (1, 3, 3)] {
            let history = net.history_neighbors(i, t, 5).unwrap();
            let fwd = event_forward(i, t, &history, &emb, &params);
            let batched = fwd.raw_intensity(i, j, t, &history, &emb);
            let public = conditional_intensity(i, j, t, &emb, &net, &params, 5)
                .unwrap()
                .raw;
            assert!((batched - public).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_subgradient_is_zero_at_origin() {
        assert_eq!(sign(3.5), 1.0);
        assert_eq!(sign(-0.1), -1.0);
        assert_eq!(sign(0.0), 0.0);
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut emb = EmbeddingSequence::zeros(1, 2, 2).unwrap();
        let mut params = HawkesParams::new(2, 2, KernelKind::Flat).unwrap();
        let mut grads = GradientSet::zeros(&emb, &params);
        grads.emb[1] = 2.0;
        grads.theta[0] = -1.0;
        apply_sgd(&mut emb, &mut params, &grads, 0.5);
        assert_eq!(emb.data()[1], -1.0);
        assert_eq!(params.theta[0], 0.5);
        grads.reset();
        assert!(grads.emb.iter().all(|&g| g == 0.0));
    }
}
