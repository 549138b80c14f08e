//! Command implementations: each returns the process exit code on success
//! and a [`DhprepError`] on failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use dhprep_core::eval::{evaluate_link, evaluate_recommend, EvalReport};
use dhprep_core::hawkes::sigmoid;
use dhprep_core::synth::{generate, write_labels, PlantedSpec};
use dhprep_core::train::{gradient_check, train, EpochLoss};
use dhprep_core::{
    bucket_snapshots, conditional_intensity, ingest_edges, read_checkpoint, write_checkpoint,
    DhprepError, DynamicNetwork, EmbeddingSequence, HawkesParams, Result,
};

use crate::config::RunConfig;

/// Fail early with a clear message when an input path is absent.
fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(DhprepError::Validation(format!(
            "{what} file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn require_path<'a>(opt: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    opt.as_deref().ok_or_else(|| {
        DhprepError::Validation(format!("missing required {key} path (--{key} or {key}= in config)"))
    })
}

/// Ingest a tab-separated edge list and bucket it into snapshots.
fn load_network(path: &Path, interval: u64) -> Result<DynamicNetwork> {
    require_file(path, "network")?;
    let edges = ingest_edges(BufReader::new(File::open(path)?))?;
    bucket_snapshots(&edges, interval)
}

fn load_model(path: &Path) -> Result<(EmbeddingSequence, HawkesParams, String)> {
    require_file(path, "checkpoint")?;
    let ckpt = read_checkpoint(BufReader::new(File::open(path)?))?;
    Ok((ckpt.embeddings, ckpt.params, ckpt.config_text))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn trace_tsv(trace: &[EpochLoss]) -> String {
    let mut out = String::from("epoch\tstructural\tdhp\tsmooth\ttotal\n");
    for row in trace {
        out.push_str(&format!(
            "{}\t{:.9}\t{:.9}\t{:.9}\t{:.9}\n",
            row.epoch, row.structural, row.dhp, row.smooth, row.total
        ));
    }
    out
}

/// Train on an ingested network; write checkpoint, loss trace, and summary.
pub fn cmd_train(cfg: &RunConfig) -> Result<i32> {
    let net_path = require_path(&cfg.network, "network")?;
    let net = load_network(net_path, cfg.interval)?;
    let edge_total: usize = net.snapshots().iter().map(|s| s.edge_count()).sum();
    println!(
        "network: {} vertices, {} snapshots, {} edges",
        net.vertex_count(),
        net.snapshot_count(),
        edge_total
    );
    fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("network_summary.tsv"), &net.summary_tsv())?;

    let out = train(&net, &cfg.training())?;
    write_text(&cfg.out.join("loss_trace.tsv"), &trace_tsv(&out.trace))?;

    // Write-then-rename so a failed run never leaves a partial checkpoint.
    let ckpt_path = cfg.out.join("checkpoint.dhp");
    let mut tmp = tempfile::NamedTempFile::new_in(&cfg.out)?;
    write_checkpoint(&mut tmp, &out.embeddings, &out.params, &cfg.to_text())?;
    tmp.flush()?;
    tmp.persist(&ckpt_path).map_err(|e| e.error)?;

    match out.trace.last() {
        Some(last) => println!(
            "final losses: structural {:.6}, dhp {:.6}, smooth {:.6}, total {:.6}",
            last.structural, last.dhp, last.smooth, last.total
        ),
        None => println!("no epochs run; checkpoint holds the initialized state"),
    }
    println!("checkpoint: {}", ckpt_path.display());
    Ok(0)
}

fn print_report(report: &EvalReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.to_tsv());
}

/// Evaluate a checkpoint on link, new-link, or recommendation tasks.
pub fn cmd_eval(cfg: &RunConfig) -> Result<i32> {
    let net_path = require_path(&cfg.network, "network")?;
    let ckpt_path = require_path(&cfg.checkpoint, "checkpoint")?;
    let net = load_network(net_path, cfg.interval)?;
    let (emb, _params, _config_text) = load_model(ckpt_path)?;
    if cfg.is_set("dim") && cfg.dim != emb.dim() {
        return Err(DhprepError::Checkpoint(format!(
            "configured dim {} does not match checkpoint dim {}",
            cfg.dim,
            emb.dim()
        )));
    }
    let report = match cfg.task.as_link_task() {
        Some(task) => evaluate_link(
            &net, &emb, task, cfg.ratio, cfg.folds, cfg.repeats, cfg.seed,
        )?,
        None => evaluate_recommend(&net, &emb, &cfg.k)?,
    };
    fs::create_dir_all(&cfg.out)?;
    let out_path = cfg.out.join(format!("eval_{}.tsv", cfg.task));
    write_text(&out_path, &report.to_tsv())?;
    print_report(&report);
    println!("report: {}", out_path.display());
    Ok(0)
}

/// Generate a planted two-phase network and its block labels.
pub fn cmd_generate(cfg: &RunConfig) -> Result<i32> {
    let spec = PlantedSpec {
        vertices: cfg.vertices,
        block_sizes: cfg.blocks.clone(),
        snapshots: cfg.snapshots,
        p_in: cfg.p_in,
        p_out: cfg.p_out,
        persistence: cfg.persistence,
        decay: cfg.decay_mode(),
        seed: cfg.seed,
        interval: cfg.interval,
    };
    let planted = generate(&spec)?;
    fs::create_dir_all(&cfg.out)?;
    let edges_path = cfg.out.join("edges.tsv");
    let labels_path = cfg.out.join("labels.tsv");
    let mut edges_file = BufWriter::new(File::create(&edges_path)?);
    planted.net.write_edge_list(&mut edges_file)?;
    edges_file.flush()?;
    let mut labels_file = BufWriter::new(File::create(&labels_path)?);
    write_labels(&mut labels_file, &planted.labels)?;
    labels_file.flush()?;
    print!("{}", planted.net.summary_tsv());
    println!("edges: {}", edges_path.display());
    println!("labels: {}", labels_path.display());
    Ok(0)
}

/// Check analytic gradients against finite differences on a small random
/// instance; the exit code reflects the verdict.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<i32> {
    let spec = PlantedSpec {
        vertices: 10,
        block_sizes: vec![10],
        snapshots: 3,
        p_in: 0.35,
        p_out: 0.0,
        persistence: 0.3,
        decay: dhprep_core::synth::DecayMode::None,
        seed: cfg.seed,
        interval: 1,
    };
    let planted = generate(&spec)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let emb = EmbeddingSequence::random(
        planted.net.snapshot_count(),
        planted.net.vertex_count(),
        cfg.dim,
        &mut rng,
    )?;
    let params = HawkesParams::random(
        cfg.dim,
        planted.net.vertex_count(),
        cfg.kernel,
        &mut rng,
    )?;
    let report = gradient_check(
        &planted.net,
        &emb,
        &params,
        &cfg.training(),
        cfg.coords,
        cfg.step,
        cfg.tolerance,
        cfg.seed,
    )?;
    println!("coordinates checked: {}", report.checked);
    println!("max relative error: {:.3e}", report.max_rel_err);
    if let Some(worst) = &report.worst {
        println!(
            "worst coordinate: {}[{}] analytic {:.6e} numeric {:.6e}",
            worst.block, worst.index, worst.analytic, worst.numeric
        );
    }
    println!("tolerance: {:.3e}", report.tolerance);
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
    Ok(if report.passed { 0 } else { 1 })
}

/// Train and evaluate every kernel x window combination, concatenating the
/// per-run reports with kernel and window columns.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    let task = cfg.task.as_link_task().ok_or_else(|| {
        DhprepError::Validation("sweep supports task=link or task=newlink".into())
    })?;
    let net_path = require_path(&cfg.network, "network")?;
    let net = load_network(net_path, cfg.interval)?;
    let mut out = String::from("kernel\twindow\ttask\tmetric\tk\tmean\tstd\n");
    for &kernel in &cfg.kernels {
        for &window in &cfg.windows {
            let tc = dhprep_core::train::TrainingConfig {
                kernel,
                window,
                ..cfg.training()
            };
            let trained = train(&net, &tc)?;
            let report = evaluate_link(
                &net,
                &trained.embeddings,
                task,
                cfg.ratio,
                cfg.folds,
                cfg.repeats,
                cfg.seed,
            )?;
            for w in &report.warnings {
                eprintln!("warning: kernel={kernel} window={window}: {w}");
            }
            for row in &report.rows {
                let k = row.k.map_or("-".to_string(), |k| k.to_string());
                out.push_str(&format!(
                    "{kernel}\t{window}\t{}\t{}\t{k}\t{:.6}\t{:.6}\n",
                    report.task, row.metric, row.mean, row.std
                ));
            }
        }
    }
    fs::create_dir_all(&cfg.out)?;
    let out_path = cfg.out.join("sweep.tsv");
    write_text(&out_path, &out)?;
    print!("{out}");
    println!("report: {}", out_path.display());
    Ok(0)
}

/// Print the intensity breakdown for one vertex pair at one snapshot.
pub fn cmd_inspect(cfg: &RunConfig) -> Result<i32> {
    let net_path = require_path(&cfg.network, "network")?;
    let ckpt_path = require_path(&cfg.checkpoint, "checkpoint")?;
    let raw_src = cfg
        .src
        .ok_or_else(|| DhprepError::Validation("missing required --src vertex id".into()))?;
    let raw_dst = cfg
        .dst
        .ok_or_else(|| DhprepError::Validation("missing required --dst vertex id".into()))?;
    let t = cfg.snapshot.ok_or_else(|| {
        DhprepError::Validation("missing required --snapshot index".into())
    })?;
    let net = load_network(net_path, cfg.interval)?;
    let (emb, params, _) = load_model(ckpt_path)?;
    let lookup = |raw: u64| {
        net.compact_id(raw).ok_or_else(|| {
            DhprepError::Validation(format!("vertex id {raw} not present in the network"))
        })
    };
    let i = lookup(raw_src)?;
    let j = lookup(raw_dst)?;
    if t > net.snapshot_count() {
        return Err(DhprepError::Validation(format!(
            "snapshot {t} out of range; network has {}",
            net.snapshot_count()
        )));
    }
    let detail = conditional_intensity(i, j, t, &emb, &net, &params, cfg.window)?;
    println!("pair: {raw_src} -> {raw_dst} at snapshot {t}");
    println!("base intensity: {:.9}", detail.base);
    println!("excitation: {:.9}", detail.excitation);
    println!("raw intensity: {:.9}", detail.raw);
    println!("transferred intensity: {:.9}", detail.transferred);
    println!("edge probability: {:.9}", sigmoid(detail.raw));
    Ok(0)
}
