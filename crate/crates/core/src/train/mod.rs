//! Joint training of embeddings and intensity parameters.
//!
//! The objective per snapshot is the proximity loss on observed edges, plus
//! a weighted negative-sampling loss over edge events driven by the
//! conditional intensity, plus a weighted drift penalty between consecutive
//! snapshots. Minibatch SGD shuffles edge events each epoch; the
//! snapshot-level terms are split evenly across the batches that touch them
//! so each epoch descends the full objective exactly once.

mod check;
mod grad;
mod parallel;

pub use check::{check_gradient_against_fd, gradient_check, CoordinateError, GradCheckReport};
pub use grad::GradientSet;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::embedding::{squared_distance, EmbeddingSequence};
use crate::error::{DhprepError, Result};
use crate::graph::{DynamicNetwork, HistoryEntry, NegativeTable, Snapshot, VertexId};
use crate::hawkes::{softplus, HawkesParams, KernelKind};

use grad::{accumulate_event_grad, accumulate_smooth, accumulate_structural, apply_sgd};

/// Maximum rejection-sampling attempts for one negative draw.
const MAX_SAMPLE_ATTEMPTS: usize = 10_000;

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Embedding dimensionality.
    pub dim: usize,
    pub epochs: usize,
    /// Events per minibatch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the event sampling loss.
    pub beta0: f64,
    /// Weight of the drift penalty.
    pub beta1: f64,
    /// Negatives drawn per event.
    pub negatives: usize,
    /// History window in snapshots.
    pub window: usize,
    pub kernel: KernelKind,
    pub seed: u64,
    /// Exponent on degree in the negative-sampling distribution.
    pub neg_exponent: f64,
    /// Lock-free multi-threaded updates; trades reproducibility for speed.
    pub parallel: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 100,
            batch_size: 256,
            learning_rate: 0.01,
            beta0: 1.0,
            beta1: 0.01,
            negatives: 5,
            window: 5,
            kernel: KernelKind::Exponential,
            seed: 42,
            neg_exponent: 1.0,
            parallel: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(DhprepError::Validation("dim must be at least 1".into()));
        }
        if self.negatives == 0 {
            return Err(DhprepError::Validation(
                "negatives must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(DhprepError::Validation("batch-size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(DhprepError::Validation(format!(
                "learning-rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !v.is_finite() || v < 0.0 {
                return Err(DhprepError::Validation(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.window == 0 {
            return Err(DhprepError::Validation("window must be at least 1".into()));
        }
        if !self.neg_exponent.is_finite() || self.neg_exponent < 0.0 {
            return Err(DhprepError::Validation(format!(
                "neg-exponent must be non-negative, got {}",
                self.neg_exponent
            )));
        }
        Ok(())
    }
}

/// One directed edge occurrence: `src`'s history excites the link to `dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub src: VertexId,
    pub dst: VertexId,
    /// Snapshot ordinal, always at least 2.
    pub snapshot: usize,
    /// Aggregated edge weight in that snapshot.
    pub weight: f64,
}

/// Every undirected edge from the second snapshot on, in both directions,
/// ordered by snapshot then edge then direction.
pub fn collect_events(net: &DynamicNetwork) -> Vec<Event> {
    let mut events = Vec::new();
    for t in 2..=net.snapshot_count() {
        for ((a, b), weight) in net.snapshot(t).edges() {
            events.push(Event { src: a, dst: b, snapshot: t, weight });
            events.push(Event { src: b, dst: a, snapshot: t, weight });
        }
    }
    events
}

/// Loss contribution of an observed event with raw intensity `raw`.
pub fn event_positive_loss(raw: f64) -> f64 {
    softplus(-raw)
}

/// Loss contribution of a sampled non-event with raw intensity `raw`.
pub fn event_negative_loss(raw: f64) -> f64 {
    softplus(raw)
}

/// Weighted squared-distance loss over the edges of snapshot `t`.
pub fn loss_structural(net: &DynamicNetwork, emb: &EmbeddingSequence, t: usize) -> Result<f64> {
    check_snapshot_bounds(net, emb, t)?;
    Ok(net
        .snapshot(t)
        .edges()
        .map(|((a, b), w)| w * squared_distance(emb.get(t, a), emb.get(t, b)))
        .sum())
}

/// Drift penalty between snapshot `t` and its predecessor; exactly zero at
/// the first snapshot.
pub fn loss_smooth(emb: &EmbeddingSequence, t: usize) -> Result<f64> {
    if t < 1 || t > emb.snapshot_count() {
        return Err(DhprepError::Validation(format!(
            "snapshot ordinal {t} out of range 1..={}",
            emb.snapshot_count()
        )));
    }
    if t == 1 {
        return Ok(0.0);
    }
    Ok((0..emb.vertex_count())
        .map(|i| squared_distance(emb.get(t, i), emb.get(t - 1, i)))
        .sum())
}

fn check_snapshot_bounds(net: &DynamicNetwork, emb: &EmbeddingSequence, t: usize) -> Result<()> {
    if emb.snapshot_count() != net.snapshot_count() || emb.vertex_count() != net.vertex_count() {
        return Err(DhprepError::Validation(format!(
            "embedding shape ({} snapshots, {} vertices) does not match network ({}, {})",
            emb.snapshot_count(),
            emb.vertex_count(),
            net.snapshot_count(),
            net.vertex_count()
        )));
    }
    if t < 1 || t > net.snapshot_count() {
        return Err(DhprepError::Validation(format!(
            "snapshot ordinal {t} out of range 1..={}",
            net.snapshot_count()
        )));
    }
    Ok(())
}

/// Draw `k` negatives for source `i` from the degree table, rejecting `i`
/// itself and its current neighbors. Draws are independent, so repeats are
/// possible.
pub fn sample_negatives<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    table: &NegativeTable,
    i: VertexId,
    k: usize,
    rng: &mut R,
) -> Result<Vec<VertexId>> {
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > MAX_SAMPLE_ATTEMPTS {
                return Err(DhprepError::SamplingExhausted {
                    vertex: i,
                    snapshot: snapshot.index(),
                    attempts: MAX_SAMPLE_ATTEMPTS,
                });
            }
            let v = table.draw(rng);
            if v != i && !snapshot.has_edge(i, v) {
                out.push(v);
                break;
            }
        }
    }
    Ok(out)
}

/// Fixed negative draws, one list per event, aligned with the event order.
///
/// Freezing the draws makes the mixed loss a deterministic function of the
/// parameters, which the finite-difference gradient check relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativePlan {
    pub negatives: Vec<Vec<VertexId>>,
}

/// Sample a [`NegativePlan`] for `events` with `k` negatives each.
pub fn plan_negatives(
    net: &DynamicNetwork,
    events: &[Event],
    k: usize,
    exponent: f64,
    seed: u64,
) -> Result<NegativePlan> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut tables = NegativeTables::new(net, exponent);
    let mut negatives = Vec::with_capacity(events.len());
    for ev in events {
        let snap = net.snapshot(ev.snapshot);
        let negs = if k == 0 {
            Vec::new()
        } else {
            sample_negatives(snap, tables.get(ev.snapshot)?, ev.src, k, &mut rng)?
        };
        negatives.push(negs);
    }
    Ok(NegativePlan { negatives })
}

/// Lazily built per-snapshot degree tables.
struct NegativeTables<'a> {
    net: &'a DynamicNetwork,
    exponent: f64,
    tables: Vec<Option<NegativeTable>>,
}

impl<'a> NegativeTables<'a> {
    fn new(net: &'a DynamicNetwork, exponent: f64) -> Self {
        Self {
            net,
            exponent,
            tables: vec![None; net.snapshot_count() + 1],
        }
    }

    fn get(&mut self, t: usize) -> Result<&NegativeTable> {
        if self.tables[t].is_none() {
            self.tables[t] = Some(self.net.negative_distribution_pow(t, self.exponent)?);
        }
        Ok(self.tables[t].as_ref().unwrap())
    }
}

/// History lookups cached per distinct `(source, snapshot)` pair.
pub(crate) struct HistoryCache {
    map: HashMap<(VertexId, usize), Vec<HistoryEntry>>,
}

impl HistoryCache {
    pub(crate) fn build(
        net: &DynamicNetwork,
        events: &[Event],
        window: usize,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for ev in events {
            let key = (ev.src, ev.snapshot);
            if !map.contains_key(&key) {
                map.insert(key, net.history_neighbors(ev.src, ev.snapshot, window)?);
            }
        }
        Ok(Self { map })
    }

    pub(crate) fn get(&self, src: VertexId, snapshot: usize) -> &[HistoryEntry] {
        self.map
            .get(&(src, snapshot))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Event sampling loss summed over `events` with the planned negatives.
pub fn loss_dhp_ns(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    window: usize,
    events: &[Event],
    plan: &NegativePlan,
) -> Result<f64> {
    if plan.negatives.len() != events.len() {
        return Err(DhprepError::Validation(format!(
            "plan covers {} events, got {}",
            plan.negatives.len(),
            events.len()
        )));
    }
    let histories = HistoryCache::build(net, events, window)?;
    let mut total = 0.0;
    for (ev, negs) in events.iter().zip(&plan.negatives) {
        let history = histories.get(ev.src, ev.snapshot);
        let fwd = grad::event_forward(ev.src, ev.snapshot, history, emb, params);
        total += event_positive_loss(fwd.raw_intensity(ev.src, ev.dst, ev.snapshot, history, emb));
        for &v in negs {
            total += event_negative_loss(fwd.raw_intensity(ev.src, v, ev.snapshot, history, emb));
        }
    }
    Ok(total)
}

/// The three raw loss terms and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Proximity loss summed over snapshots.
    pub structural: f64,
    /// Event sampling loss summed over events, unweighted.
    pub dhp: f64,
    /// Drift penalty summed over snapshots, unweighted.
    pub smooth: f64,
    /// `structural + beta0 * dhp + beta1 * smooth`.
    pub total: f64,
}

/// Full objective under a fixed negative plan.
pub fn loss_mix_with_plan(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    config: &TrainingConfig,
    events: &[Event],
    plan: &NegativePlan,
) -> Result<LossBreakdown> {
    config.validate()?;
    check_snapshot_bounds(net, emb, 1)?;
    let mut structural = 0.0;
    let mut smooth = 0.0;
    for t in 1..=net.snapshot_count() {
        structural += loss_structural(net, emb, t)?;
        smooth += loss_smooth(emb, t)?;
    }
    let dhp = loss_dhp_ns(net, emb, params, config.window, events, plan)?;
    Ok(LossBreakdown {
        structural,
        dhp,
        smooth,
        total: structural + config.beta0 * dhp + config.beta1 * smooth,
    })
}

/// Full objective with negatives drawn from the config seed.
pub fn loss_mix(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    config: &TrainingConfig,
) -> Result<LossBreakdown> {
    let events = collect_events(net);
    let plan = plan_negatives(net, &events, config.negatives, config.neg_exponent, config.seed)?;
    loss_mix_with_plan(net, emb, params, config, &events, &plan)
}

/// Gradient of the full objective under a fixed plan, for verification.
pub fn loss_and_grad_mix(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    config: &TrainingConfig,
    events: &[Event],
    plan: &NegativePlan,
) -> Result<(LossBreakdown, GradientSet)> {
    config.validate()?;
    check_snapshot_bounds(net, emb, 1)?;
    if plan.negatives.len() != events.len() {
        return Err(DhprepError::Validation(format!(
            "plan covers {} events, got {}",
            plan.negatives.len(),
            events.len()
        )));
    }
    let histories = HistoryCache::build(net, events, config.window)?;
    let mut grads = GradientSet::zeros(emb, params);
    let mut structural = 0.0;
    let mut smooth = 0.0;
    for t in 1..=net.snapshot_count() {
        structural += accumulate_structural(net, emb, t, 1.0, &mut grads);
        smooth += accumulate_smooth(emb, t, config.beta1, &mut grads);
    }
    let mut dhp = 0.0;
    for (ev, negs) in events.iter().zip(&plan.negatives) {
        dhp += accumulate_event_grad(
            ev.src,
            ev.dst,
            ev.snapshot,
            negs,
            histories.get(ev.src, ev.snapshot),
            emb,
            params,
            config.beta0,
            &mut grads,
        );
    }
    let breakdown = LossBreakdown {
        structural,
        dhp,
        smooth,
        total: structural + config.beta0 * dhp + config.beta1 * smooth,
    };
    Ok((breakdown, grads))
}

/// Loss trace row for one epoch, accumulated from the batch passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub structural: f64,
    pub dhp: f64,
    pub smooth: f64,
    pub total: f64,
}

/// Trained model state and the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub embeddings: EmbeddingSequence,
    pub params: HawkesParams,
    pub trace: Vec<EpochLoss>,
}

/// Batch layout for one epoch: event index ranges into the shuffled order,
/// plus the snapshot-level terms each batch must apply and their scales.
pub(crate) struct EpochPlan {
    pub batches: Vec<std::ops::Range<usize>>,
    pub snapshot_terms: Vec<Vec<(usize, f64)>>,
}

/// Split the shuffled events into batches and spread each snapshot's
/// proximity and drift terms evenly over the batches containing its events.
/// Snapshots with no events this epoch (always including the first) ride
/// along with the first batch at full weight.
pub(crate) fn plan_epoch(
    events: &[Event],
    order: &[usize],
    batch_size: usize,
    snapshot_count: usize,
) -> EpochPlan {
    let batch_count = order.len().div_ceil(batch_size).max(1);
    let mut batches = Vec::with_capacity(batch_count);
    let mut touched: Vec<Vec<usize>> = Vec::with_capacity(batch_count);
    let mut per_snapshot = vec![0usize; snapshot_count + 1];
    for k in 0..batch_count {
        let lo = k * batch_size;
        let hi = ((k + 1) * batch_size).min(order.len());
        batches.push(lo..hi);
        let mut seen = Vec::new();
        for &ei in &order[lo..hi] {
            let t = events[ei].snapshot;
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        for &t in &seen {
            per_snapshot[t] += 1;
        }
        touched.push(seen);
    }
    let mut snapshot_terms: Vec<Vec<(usize, f64)>> = touched
        .into_iter()
        .map(|seen| {
            seen.into_iter()
                .map(|t| (t, 1.0 / per_snapshot[t] as f64))
                .collect()
        })
        .collect();
    for t in 1..=snapshot_count {
        if per_snapshot[t] == 0 {
            snapshot_terms[0].push((t, 1.0));
        }
    }
    EpochPlan {
        batches,
        snapshot_terms,
    }
}

/// Train embeddings and intensity parameters from scratch.
pub fn train(net: &DynamicNetwork, config: &TrainingConfig) -> Result<TrainOutput> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut emb = EmbeddingSequence::random(
        net.snapshot_count(),
        net.vertex_count(),
        config.dim,
        &mut rng,
    )?;
    let mut params =
        HawkesParams::random(config.dim, net.vertex_count(), config.kernel, &mut rng)?;
    let events = collect_events(net);
    let histories = HistoryCache::build(net, &events, config.window)?;
    let mut tables = NegativeTables::new(net, config.neg_exponent);
    for ev in &events {
        tables.get(ev.snapshot)?;
    }

    let trace = if config.parallel {
        parallel::run_epochs(
            net, config, &mut emb, &mut params, &events, &histories, &tables.tables, &mut rng,
        )?
    } else {
        run_epochs_sequential(
            net, config, &mut emb, &mut params, &events, &histories, &tables.tables, &mut rng,
        )?
    };

    Ok(TrainOutput {
        embeddings: emb,
        params,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_epochs_sequential(
    net: &DynamicNetwork,
    config: &TrainingConfig,
    emb: &mut EmbeddingSequence,
    params: &mut HawkesParams,
    events: &[Event],
    histories: &HistoryCache,
    tables: &[Option<NegativeTable>],
    rng: &mut ChaCha12Rng,
) -> Result<Vec<EpochLoss>> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut grads = GradientSet::zeros(emb, params);
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let plan = plan_epoch(events, &order, config.batch_size, net.snapshot_count());
        let mut sums = (0.0, 0.0, 0.0);
        for (k, range) in plan.batches.iter().enumerate() {
            grads.reset();
            let mut batch = BatchSums::default();
            for &ei in &order[range.clone()] {
                let ev = &events[ei];
                let table = tables[ev.snapshot]
                    .as_ref()
                    .expect("tables prebuilt for every event snapshot");
                let negs = sample_negatives(
                    net.snapshot(ev.snapshot),
                    table,
                    ev.src,
                    config.negatives,
                    rng,
                )?;
                batch.dhp += accumulate_event_grad(
                    ev.src,
                    ev.dst,
                    ev.snapshot,
                    &negs,
                    histories.get(ev.src, ev.snapshot),
                    emb,
                    params,
                    config.beta0,
                    &mut grads,
                );
            }
            for &(t, sc) in &plan.snapshot_terms[k] {
                batch.structural += sc * accumulate_structural(net, emb, t, sc, &mut grads);
                batch.smooth += sc * accumulate_smooth(emb, t, config.beta1 * sc, &mut grads);
            }
            batch.check_finite(epoch, k)?;
            apply_sgd(emb, params, &grads, config.learning_rate);
            sums.0 += batch.structural;
            sums.1 += batch.dhp;
            sums.2 += batch.smooth;
        }
        trace.push(EpochLoss {
            epoch,
            structural: sums.0,
            dhp: sums.1,
            smooth: sums.2,
            total: sums.0 + config.beta0 * sums.1 + config.beta1 * sums.2,
        });
    }
    Ok(trace)
}

/// Scaled loss sums for one batch, checked before the parameters move.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct BatchSums {
    pub structural: f64,
    pub dhp: f64,
    pub smooth: f64,
}

impl BatchSums {
    pub(crate) fn check_finite(&self, epoch: usize, batch: usize) -> Result<()> {
        for (term, value) in [
            ("structural", self.structural),
            ("dhp", self.dhp),
            ("smooth", self.smooth),
        ] {
            if !value.is_finite() {
                return Err(DhprepError::Divergence {
                    epoch,
                    batch,
                    term,
                    value,
                });
            }
        }
        Ok(())
    }
}
