//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::embedding::EmbeddingSequence;
use crate::error::Result;
use crate::graph::DynamicNetwork;
use crate::hawkes::HawkesParams;

use super::grad::GradientSet;
use super::{
    collect_events, loss_and_grad_mix, loss_mix_with_plan, plan_negatives, Event, NegativePlan,
    TrainingConfig,
};

/// Parameter blocks named for reporting.
const BLOCKS: [&str; 4] = ["embedding", "attention-projection", "attention-readout", "decay"];

/// The coordinate with the largest relative error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateError {
    pub block: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Coordinates compared.
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordinateError>,
    pub tolerance: f64,
    pub passed: bool,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Check the analytic gradient of the full objective against central finite
/// differences at `coords` randomly chosen coordinates (all of them when the
/// parameter count is smaller). Every parameter block gets at least one
/// coordinate.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    config: &TrainingConfig,
    coords: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let events = collect_events(net);
    let plan = plan_negatives(net, &events, config.negatives, config.neg_exponent, seed)?;
    let (_, grads) = loss_and_grad_mix(net, emb, params, config, &events, &plan)?;
    check_gradient_against_fd(
        net, emb, params, config, &events, &plan, &grads, coords, step, tolerance, seed,
    )
}

/// Compare a provided gradient against finite differences of the mixed loss
/// under the same fixed negative plan.
#[allow(clippy::too_many_arguments)]
pub fn check_gradient_against_fd(
    net: &DynamicNetwork,
    emb: &EmbeddingSequence,
    params: &HawkesParams,
    config: &TrainingConfig,
    events: &[Event],
    plan: &NegativePlan,
    grads: &GradientSet,
    coords: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let block_lens = [
        grads.emb.len(),
        grads.w.len(),
        grads.z.len(),
        grads.theta.len(),
    ];
    let total: usize = block_lens.iter().sum();

    // Flat indices into the concatenated blocks.
    let mut chosen: Vec<usize> = if coords >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        sample_indices(&mut rng, total, coords).into_vec()
    };
    // Force one coordinate from any block the sample missed.
    let mut offsets = [0usize; 4];
    let mut acc = 0;
    for (b, len) in block_lens.iter().enumerate() {
        offsets[b] = acc;
        acc += len;
    }
    for (b, len) in block_lens.iter().enumerate() {
        if *len > 0 && !chosen.iter().any(|&c| c >= offsets[b] && c < offsets[b] + len) {
            chosen.push(offsets[b]);
        }
    }
    chosen.sort_unstable();

    let mut emb_work = emb.clone();
    let mut params_work = params.clone();
    let mut worst: Option<CoordinateError> = None;
    let mut max_rel_err = 0.0_f64;
    for &flat in &chosen {
        let (block, index) = locate(flat, &offsets, &block_lens);
        let analytic = match block {
            0 => grads.emb[index],
            1 => grads.w[index],
            2 => grads.z[index],
            _ => grads.theta[index],
        };
        let original = read_coord(&emb_work, &params_work, block, index);
        write_coord(&mut emb_work, &mut params_work, block, index, original + step);
        let plus = loss_mix_with_plan(net, &emb_work, &params_work, config, events, plan)?.total;
        write_coord(&mut emb_work, &mut params_work, block, index, original - step);
        let minus = loss_mix_with_plan(net, &emb_work, &params_work, config, events, plan)?.total;
        write_coord(&mut emb_work, &mut params_work, block, index, original);
        let numeric = (plus - minus) / (2.0 * step);
        let rel_err = relative_error(analytic, numeric);
        if rel_err > max_rel_err {
            max_rel_err = rel_err;
            worst = Some(CoordinateError {
                block: BLOCKS[block],
                index,
                analytic,
                numeric,
                rel_err,
            });
        }
    }

    Ok(GradCheckReport {
        checked: chosen.len(),
        max_rel_err,
        worst,
        tolerance,
        passed: max_rel_err <= tolerance,
    })
}

fn locate(flat: usize, offsets: &[usize; 4], lens: &[usize; 4]) -> (usize, usize) {
    for b in (0..4).rev() {
        if flat >= offsets[b] && flat < offsets[b] + lens[b] {
            return (b, flat - offsets[b]);
        }
    }
    unreachable!("flat index {flat} outside every block");
}

fn read_coord(emb: &EmbeddingSequence, params: &HawkesParams, block: usize, index: usize) -> f64 {
    match block {
        0 => emb.data()[index],
        1 => params.w[index],
        2 => params.z[index],
        _ => params.theta[index],
    }
}

fn write_coord(
    emb: &mut EmbeddingSequence,
    params: &mut HawkesParams,
    block: usize,
    index: usize,
    value: f64,
) {
    match block {
        0 => emb.data_mut()[index] = value,
        1 => params.w[index] = value,
        2 => params.z[index] = value,
        _ => params.theta[index] = value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::KernelKind;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn random_instance(
        seed: u64,
        kernel: KernelKind,
    ) -> (DynamicNetwork, EmbeddingSequence, HawkesParams, TrainingConfig) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = 6;
        let t_count = 3;
        let mut sets = Vec::new();
        for _ in 0..t_count {
            let mut set = BTreeMap::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.random::<f64>() < 0.45 {
                        set.insert((a, b), 1.0 + rng.random::<f64>());
                    }
                }
            }
            sets.push(set);
        }
        let net = DynamicNetwork::from_snapshot_edge_sets(n, 1, sets).unwrap();
        let emb = EmbeddingSequence::random(t_count, n, 3, &mut rng).unwrap();
        let params = HawkesParams::random(3, n, kernel, &mut rng).unwrap();
        let config = TrainingConfig {
            dim: 3,
            negatives: 2,
            window: 2,
            kernel,
            ..TrainingConfig::default()
        };
        (net, emb, params, config)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for kernel in KernelKind::ALL {
            let (net, emb, params, config) = random_instance(21, kernel);
            let report =
                gradient_check(&net, &emb, &params, &config, usize::MAX, 1e-5, 1e-4, 77).unwrap();
            assert!(
                report.passed,
                "{kernel}: max rel err {:.3e} at {:?}",
                report.max_rel_err, report.worst
            );
            // Every trainable coordinate was compared.
            assert_eq!(report.checked, emb.data().len() + 9 + 3 + 6);
        }
    }

    #[test]
    fn corrupted_gradient_fails_the_check() {
        let (net, emb, params, config) = random_instance(21, KernelKind::Exponential);
        let events = collect_events(&net);
        let plan = plan_negatives(&net, &events, config.negatives, config.neg_exponent, 77).unwrap();
        let (_, mut grads) =
            loss_and_grad_mix(&net, &emb, &params, &config, &events, &plan).unwrap();
        grads.z[0] += 0.25;
        let report = check_gradient_against_fd(
            &net, &emb, &params, &config, &events, &plan, &grads, usize::MAX, 1e-5, 1e-4, 77,
        )
        .unwrap();
        assert!(!report.passed);
        let worst = report.worst.unwrap();
        assert_eq!(worst.block, "attention-readout");
        assert_eq!(worst.index, 0);
    }

    #[test]
    fn subsampled_check_touches_every_block() {
        let (net, emb, params, config) = random_instance(4, KernelKind::Rayleigh);
        let report = gradient_check(&net, &emb, &params, &config, 10, 1e-5, 1e-4, 13).unwrap();
        assert!(report.checked >= 10);
        assert!(report.passed, "max rel err {:.3e}", report.max_rel_err);
    }
}
