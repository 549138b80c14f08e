//! Evaluation: link prediction, new-link prediction, and top-k
//! recommendation over trained embeddings.
//!
//! Link tasks build balanced labeled pairs per snapshot transition, featurize
//! them as absolute embedding differences, and score a freshly fit logistic
//! classifier under repeated stratified cross-validation.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::embedding::{squared_distance, EmbeddingSequence};
use crate::error::{DhprepError, Result};
use crate::graph::{DynamicNetwork, VertexId};
use crate::hawkes::{intensity_from_history, sigmoid, HawkesParams};

/// Gradient iterations for the evaluation classifier.
const FIT_ITERS: usize = 500;
/// Learning rate for the evaluation classifier.
const FIT_LR: f64 = 0.1;
/// Ridge penalty on the classifier weights (not the bias).
const FIT_L2: f64 = 1e-4;

/// Which pairs count as positives when predicting the next snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// All edges of the next snapshot.
    Link,
    /// Only edges absent from the current snapshot.
    NewLink,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Link => "link",
            Task::NewLink => "newlink",
        })
    }
}

impl FromStr for Task {
    type Err = DhprepError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "link" => Ok(Task::Link),
            "newlink" | "new-link" => Ok(Task::NewLink),
            other => Err(DhprepError::Validation(format!(
                "unknown task {other:?}; expected link or newlink"
            ))),
        }
    }
}

/// A candidate pair featurized at `feature_snapshot` and labeled by edge
/// presence at the following snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPair {
    pub i: VertexId,
    pub j: VertexId,
    pub feature_snapshot: usize,
    pub label: bool,
}

/// Build labeled pairs for every snapshot transition with `ratio` negatives
/// per positive. Negatives are uniform distinct non-links of the coming
/// snapshot (for new-link, pairs absent from the current snapshot too); when
/// fewer non-links exist than requested the count is clamped and a warning
/// recorded.
pub fn build_pairs(
    net: &DynamicNetwork,
    task: Task,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledPair>, Vec<String>)> {
    let t_count = net.snapshot_count();
    if t_count < 2 {
        return Err(DhprepError::Validation(
            "prediction needs at least two snapshots".into(),
        ));
    }
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(DhprepError::Validation(format!(
            "negative ratio must be positive, got {ratio}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();

    for t in 1..t_count {
        let next = net.snapshot(t + 1);
        let positives: Vec<(VertexId, VertexId)> = next
            .edges()
            .map(|(p, _)| p)
            .filter(|&(a, b)| match task {
                Task::Link => true,
                Task::NewLink => !net.snapshot(t).has_edge(a, b),
            })
            .collect();
        if positives.is_empty() {
            continue;
        }
        let pool = non_link_pool(net, t, task);
        let mut need = ((positives.len() as f64 * ratio).round() as usize).max(1);
        if need > pool {
            warnings.push(format!(
                "snapshot {}: only {pool} non-links for {need} requested; using {pool} negatives",
                t + 1
            ));
            need = pool;
        }
        let negatives = sample_non_links(net, t, task, need, &mut rng);
        for &(a, b) in &positives {
            pairs.push(LabeledPair { i: a, j: b, feature_snapshot: t, label: true });
        }
        for (a, b) in negatives {
            pairs.push(LabeledPair { i: a, j: b, feature_snapshot: t, label: false });
        }
    }

    if pairs.iter().filter(|p| p.label).count() == 0 {
        return Err(DhprepError::Validation(format!(
            "task {task} yields no positive pairs"
        )));
    }
    Ok((pairs, warnings))
}

/// True when `(a, b)` is eligible as a negative for the `t -> t + 1`
/// transition: unlinked at `t + 1`, and for new-link unlinked at `t` too.
fn is_non_link(net: &DynamicNetwork, t: usize, task: Task, a: VertexId, b: VertexId) -> bool {
    !net.snapshot(t + 1).has_edge(a, b)
        && (task == Task::Link || !net.snapshot(t).has_edge(a, b))
}

/// Number of pairs eligible as negatives for the `t -> t + 1` transition.
fn non_link_pool(net: &DynamicNetwork, t: usize, task: Task) -> usize {
    let n = net.vertex_count();
    let all_pairs = n * (n - 1) / 2;
    let next = net.snapshot(t + 1);
    match task {
        Task::Link => all_pairs - next.edge_count(),
        Task::NewLink => {
            let overlap = next
                .edges()
                .filter(|&((a, b), _)| net.snapshot(t).has_edge(a, b))
                .count();
            let union = net.snapshot(t).edge_count() + next.edge_count() - overlap;
            all_pairs - union
        }
    }
}

/// `need` distinct uniform eligible negatives for the `t -> t + 1`
/// transition; `need` never exceeds the eligible count.
fn sample_non_links(
    net: &DynamicNetwork,
    t: usize,
    task: Task,
    need: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<(VertexId, VertexId)> {
    let n = net.vertex_count();
    let pool = non_link_pool(net, t, task);
    if need == 0 {
        return Vec::new();
    }
    if need * 2 >= pool {
        // Dense request: enumerate and shuffle.
        let mut all: Vec<(VertexId, VertexId)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .filter(|&(a, b)| is_non_link(net, t, task, a, b))
            .collect();
        let (chosen, _) = all.partial_shuffle(rng, need);
        return chosen.to_vec();
    }
    let mut seen = HashSet::with_capacity(need);
    let mut out = Vec::with_capacity(need);
    while out.len() < need {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !is_non_link(net, t, task, key.0, key.1) || !seen.insert(key) {
            continue;
        }
        out.push(key);
    }
    out
}

/// Absolute per-coordinate embedding difference at the pair's feature
/// snapshot.
pub fn feature_vector(emb: &EmbeddingSequence, pair: &LabeledPair) -> Vec<f64> {
    let a = emb.get(pair.feature_snapshot, pair.i);
    let b = emb.get(pair.feature_snapshot, pair.j);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

/// Logistic classifier fit from scratch for each evaluation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    /// Predicted probability of the positive class.
    pub fn score(&self, x: &[f64]) -> f64 {
        let dot: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
        sigmoid(dot + self.bias)
    }
}

/// Full-batch gradient descent on the mean logistic loss with a small ridge
/// penalty, from zero initialization.
pub fn fit_classifier(features: &[Vec<f64>], labels: &[bool]) -> Result<LogisticModel> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(DhprepError::Validation(format!(
            "need matching non-empty features and labels, got {} and {}",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(DhprepError::Validation(
            "feature vectors have inconsistent lengths".into(),
        ));
    }
    let n = features.len() as f64;
    let mut model = LogisticModel {
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    let mut grad_w = vec![0.0; dim];
    for _ in 0..FIT_ITERS {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let err = model.score(x) - if y { 1.0 } else { 0.0 };
            for (g, v) in grad_w.iter_mut().zip(x) {
                *g += err * v;
            }
            grad_b += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= FIT_LR * (g / n + FIT_L2 * *w);
        }
        model.bias -= FIT_LR * grad_b / n;
    }
    Ok(model)
}

/// Threshold and ranking quality of a scored binary sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    /// F1 at the 0.5 threshold; scores at exactly 0.5 count as positive.
    pub f1: f64,
    /// Area under the ROC curve via tie-averaged ranks.
    pub auc: f64,
}

/// Compute F1 at threshold 0.5 and rank-based AUC. Errors when either class
/// is absent.
pub fn binary_metrics(scores: &[f64], labels: &[bool]) -> Result<BinaryMetrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(DhprepError::Validation(
            "scores and labels must be non-empty and aligned".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DhprepError::Validation(
            "both classes must be present to compute metrics".into(),
        ));
    }

    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        let predicted = s >= 0.5;
        match (predicted, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    // Tie-averaged ranks over ascending scores.
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; scores.len()];
    let mut pos = 0;
    while pos < idx.len() {
        let mut end = pos + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[pos]] {
            end += 1;
        }
        // Positions pos..end share the average 1-based rank.
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &orig in &idx[pos..end] {
            ranks[orig] = avg;
        }
        pos = end;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter_map(|(&y, &r)| y.then_some(r))
        .sum();
    let auc =
        (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);

    Ok(BinaryMetrics { f1, auc })
}

/// Mean and population standard deviation of a score set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(scores: &[f64]) -> MetricSummary {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    MetricSummary {
        mean,
        std: var.sqrt(),
    }
}

/// Metrics from one held-out fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub f1: f64,
    pub auc: f64,
}

/// Aggregated cross-validation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub f1: MetricSummary,
    pub auc: MetricSummary,
    pub folds: Vec<FoldScore>,
}

/// Repeated stratified k-fold cross-validation; folds are filled round-robin
/// from per-class shuffles, fit in parallel, and reported in order.
pub fn cross_validate(
    features: &[Vec<f64>],
    labels: &[bool],
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(DhprepError::Validation("need at least 2 folds".into()));
    }
    if repeats == 0 {
        return Err(DhprepError::Validation("need at least 1 repeat".into()));
    }
    if features.len() != labels.len() {
        return Err(DhprepError::Validation(
            "features and labels must be aligned".into(),
        ));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < folds || neg.len() < folds {
        return Err(DhprepError::Validation(format!(
            "stratified {folds}-fold needs {folds} of each class, got {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }

    // Fold assignment per repeat, decided up front so the parallel fits are
    // order-independent.
    let mut jobs = Vec::with_capacity(repeats * folds);
    for r in 0..repeats {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut pos_order = pos.clone();
        let mut neg_order = neg.clone();
        pos_order.shuffle(&mut rng);
        neg_order.shuffle(&mut rng);
        let mut fold_of = vec![0usize; labels.len()];
        for (slot, &sample) in pos_order.iter().enumerate() {
            fold_of[sample] = slot % folds;
        }
        for (slot, &sample) in neg_order.iter().enumerate() {
            fold_of[sample] = slot % folds;
        }
        for f in 0..folds {
            jobs.push((r, f, fold_of.clone()));
        }
    }

    let folds_out: Vec<FoldScore> = jobs
        .par_iter()
        .map(|(r, f, fold_of)| -> Result<FoldScore> {
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut test_x = Vec::new();
            let mut test_y = Vec::new();
            for i in 0..labels.len() {
                if fold_of[i] == *f {
                    test_x.push(features[i].clone());
                    test_y.push(labels[i]);
                } else {
                    train_x.push(features[i].clone());
                    train_y.push(labels[i]);
                }
            }
            let model = fit_classifier(&train_x, &train_y)?;
            let scores: Vec<f64> = test_x.iter().map(|x| model.score(x)).collect();
            let m = binary_metrics(&scores, &test_y)?;
            Ok(FoldScore {
                repeat: *r,
                fold: *f,
                f1: m.f1,
                auc: m.auc,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let f1s: Vec<f64> = folds_out.iter().map(|s| s.f1).collect();
    let aucs: Vec<f64> = folds_out.iter().map(|s| s.auc).collect();
    Ok(CvReport {
        f1: summarize(&f1s),
        auc: summarize(&aucs),
        folds: folds_out,
    })
}

/// Rank candidates for `i` by embedding proximity at snapshot `t`: score is
/// the negated squared distance, ties broken by ascending id. Returns at
/// most `k` entries.
pub fn recommend_topk(
    emb: &EmbeddingSequence,
    t: usize,
    i: VertexId,
    candidates: &[VertexId],
    k: usize,
) -> Result<Vec<(VertexId, f64)>> {
    if k == 0 {
        return Err(DhprepError::Validation("k must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(DhprepError::Validation("candidate set is empty".into()));
    }
    if candidates.contains(&i) {
        return Err(DhprepError::Validation(format!(
            "candidate set must not contain the query vertex {i}"
        )));
    }
    let mut distinct: Vec<VertexId> = candidates.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let anchor = emb.get(t, i);
    let mut scored: Vec<(VertexId, f64)> = distinct
        .into_iter()
        .map(|c| (c, -squared_distance(anchor, emb.get(t, c))))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Precision and recall at `k` over a batch of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingMetrics {
    pub precision: MetricSummary,
    pub recall: MetricSummary,
}

/// Average hits-at-k over queries; queries with empty truth are skipped.
pub fn ranking_metrics(
    recommended: &[Vec<VertexId>],
    truth: &[Vec<VertexId>],
    k: usize,
) -> Result<RankingMetrics> {
    if recommended.len() != truth.len() {
        return Err(DhprepError::Validation(
            "recommendation and truth lists must be aligned".into(),
        ));
    }
    if k == 0 {
        return Err(DhprepError::Validation("k must be at least 1".into()));
    }
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for (rec, tr) in recommended.iter().zip(truth) {
        if tr.is_empty() {
            continue;
        }
        let truth_set: HashSet<VertexId> = tr.iter().copied().collect();
        let hits = rec
            .iter()
            .take(k)
            .filter(|v| truth_set.contains(v))
            .count();
        precisions.push(hits as f64 / k as f64);
        recalls.push(hits as f64 / truth_set.len() as f64);
    }
    if precisions.is_empty() {
        return Err(DhprepError::Validation(
            "every query had empty ground truth".into(),
        ));
    }
    Ok(RankingMetrics {
        precision: summarize(&precisions),
        recall: summarize(&recalls),
    })
}

/// One reported metric row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub k: Option<usize>,
    pub mean: f64,
    pub std: f64,
}

/// Evaluation results plus any data warnings, serializable as TSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Tab-separated table with a header line; `k` is `-` for threshold
    /// metrics.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("task\tmetric\tk\tmean\tstd\n");
        for row in &self.rows {
            let k = row.k.map_or_else(|| "-".to_string(), |k| k.to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\n",
                self.task, row.metric, k, row.mean, row.std
            ));
        }
        out
    }
}

/// Cross-validated link or new-link prediction from trained embeddings.
pub fn evaluate_link(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    task: Task,
    ratio: f64,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport> {
    check_eval_shapes(net, emb)?;
    let (pairs, warnings) = build_pairs(net, task, ratio, seed)?;
    let features: Vec<Vec<f64>> = pairs.iter().map(|p| feature_vector(emb, p)).collect();
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    let cv = cross_validate(&features, &labels, folds, repeats, seed)?;
    Ok(EvalReport {
        task: task.to_string(),
        rows: vec![
            ReportRow { metric: "f1".into(), k: None, mean: cv.f1.mean, std: cv.f1.std },
            ReportRow { metric: "auc".into(), k: None, mean: cv.auc.mean, std: cv.auc.std },
        ],
        warnings,
    })
}

/// Top-k recommendation against each following snapshot: every vertex with
/// upcoming edges queries its nearest candidates at the current snapshot.
pub fn evaluate_recommend(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    ks: &[usize],
) -> Result<EvalReport> {
    check_eval_shapes(net, emb)?;
    if ks.is_empty() {
        return Err(DhprepError::Validation("need at least one k".into()));
    }
    if net.snapshot_count() < 2 {
        return Err(DhprepError::Validation(
            "recommendation needs at least two snapshots".into(),
        ));
    }
    let max_k = *ks.iter().max().unwrap();
    let n = net.vertex_count();
    let mut recommended = Vec::new();
    let mut truth = Vec::new();
    for t in 1..net.snapshot_count() {
        let next = net.snapshot(t + 1);
        for i in 0..n {
            let upcoming: Vec<VertexId> =
                next.neighbors(i).iter().map(|&(j, _)| j).collect();
            if upcoming.is_empty() {
                continue;
            }
            let candidates: Vec<VertexId> = (0..n).filter(|&c| c != i).collect();
            let top = recommend_topk(emb, t, i, &candidates, max_k)?;
            recommended.push(top.into_iter().map(|(v, _)| v).collect());
            truth.push(upcoming);
        }
    }
    let mut rows = Vec::new();
    for &k in ks {
        let m = ranking_metrics(&recommended, &truth, k)?;
        rows.push(ReportRow {
            metric: "precision".into(),
            k: Some(k),
            mean: m.precision.mean,
            std: m.precision.std,
        });
        rows.push(ReportRow {
            metric: "recall".into(),
            k: Some(k),
            mean: m.recall.mean,
            std: m.recall.std,
        });
    }
    Ok(EvalReport {
        task: "recommend".into(),
        rows,
        warnings: Vec::new(),
    })
}

fn check_eval_shapes(net: &DynamicNetwork, emb: &EmbeddingSequence) -> Result<()> {
    if emb.snapshot_count() != net.snapshot_count() || emb.vertex_count() != net.vertex_count() {
        return Err(DhprepError::Validation(format!(
            "embedding shape ({} snapshots, {} vertices) does not match network ({}, {})",
            emb.snapshot_count(),
            emb.vertex_count(),
            net.snapshot_count(),
            net.vertex_count()
        )));
    }
    Ok(())
}

/// Normalized edge scores for `i` against every other vertex at snapshot
/// `t`, as a softmax over raw intensities; the query's own slot is zero.
pub fn exact_softmax_score(
    i: VertexId,
    t: usize,
    emb: &EmbeddingSequence,
    net: &DynamicNetwork,
    params: &HawkesParams,
    window: usize,
) -> Result<Vec<f64>> {
    check_eval_shapes(net, emb)?;
    if t < 2 {
        return Err(DhprepError::Validation(
            "intensity scores need a previous snapshot; t must be at least 2".into(),
        ));
    }
    let n = net.vertex_count();
    if n < 2 {
        return Err(DhprepError::Validation(
            "softmax scores need at least two vertices".into(),
        ));
    }
    let history = net.history_neighbors(i, t, window)?;
    let raws: Vec<(VertexId, f64)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| (j, intensity_from_history(i, j, t, &history, emb, params).raw))
        .collect();
    let max_raw = raws
        .iter()
        .map(|&(_, r)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; n];
    let mut denom = 0.0;
    for &(j, r) in &raws {
        let e = (r - max_raw).exp();
        out[j] = e;
        denom += e;
    }
    for x in &mut out {
        *x /= denom;
    }
    Ok(out)
}
