//! Flat key = value run configuration with defaults, file loading, and flag
//! overrides. Precedence: built-in default, then config file, then flag.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use dhprep_core::synth::DecayMode;
use dhprep_core::train::TrainingConfig;
use dhprep_core::{DhprepError, KernelKind, Result, Task};

/// Evaluation task selector; `recommend` has no train/test classifier split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTask {
    Link,
    NewLink,
    Recommend,
}

impl EvalTask {
    /// The classifier-based task this selector maps to, if any.
    pub fn as_link_task(self) -> Option<Task> {
        match self {
            EvalTask::Link => Some(Task::Link),
            EvalTask::NewLink => Some(Task::NewLink),
            EvalTask::Recommend => None,
        }
    }
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalTask::Link => "link",
            EvalTask::NewLink => "newlink",
            EvalTask::Recommend => "recommend",
        })
    }
}

impl FromStr for EvalTask {
    type Err = DhprepError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "link" => Ok(EvalTask::Link),
            "newlink" | "new-link" => Ok(EvalTask::NewLink),
            "recommend" => Ok(EvalTask::Recommend),
            other => Err(DhprepError::Validation(format!(
                "unknown task {other:?}; expected link, newlink, or recommend"
            ))),
        }
    }
}

/// How generated pairs regain connection probability from past edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayChoice {
    None,
    Exponential,
}

impl fmt::Display for DecayChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayChoice::None => "none",
            DecayChoice::Exponential => "exponential",
        })
    }
}

impl FromStr for DecayChoice {
    type Err = DhprepError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(DecayChoice::None),
            "exponential" | "exp" => Ok(DecayChoice::Exponential),
            other => Err(DhprepError::Validation(format!(
                "unknown decay mode {other:?}; expected none or exponential"
            ))),
        }
    }
}

/// Resolved settings for every command, recording which keys were set
/// explicitly (by file or flag) rather than left at their defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    // Paths and data.
    pub network: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub interval: u64,
    // Training.
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub negatives: usize,
    pub window: usize,
    pub kernel: KernelKind,
    pub seed: u64,
    pub neg_exponent: f64,
    pub parallel: bool,
    // Evaluation.
    pub task: EvalTask,
    pub ratio: f64,
    pub k: Vec<usize>,
    pub folds: usize,
    pub repeats: usize,
    // Generation.
    pub vertices: usize,
    pub blocks: Vec<usize>,
    pub snapshots: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub persistence: f64,
    pub decay: DecayChoice,
    pub decay_rate: f64,
    // Sweep.
    pub kernels: Vec<KernelKind>,
    pub windows: Vec<usize>,
    // Gradient check.
    pub coords: usize,
    pub step: f64,
    pub tolerance: f64,
    // Inspect.
    pub src: Option<u64>,
    pub dst: Option<u64>,
    pub snapshot: Option<usize>,

    explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: None,
            checkpoint: None,
            out: PathBuf::from("."),
            interval: 1,
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
            task: EvalTask::Link,
            ratio: 1.0,
            k: vec![10, 20],
            folds: 5,
            repeats: 10,
            vertices: 100,
            blocks: vec![50, 50],
            snapshots: 6,
            p_in: 0.1,
            p_out: 0.01,
            persistence: 0.5,
            decay: DecayChoice::None,
            decay_rate: 1.0,
            kernels: KernelKind::ALL.to_vec(),
            windows: vec![1, 5],
            coords: 120,
            step: 1e-5,
            tolerance: 1e-4,
            src: None,
            dst: None,
            snapshot: None,
            explicit: BTreeSet::new(),
        }
    }
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| {
        DhprepError::Validation(format!("config key {key}: cannot parse {value:?}: {e}"))
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let items: Result<Vec<T>> = value
        .split(',')
        .map(|part| parse_scalar(key, part))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(DhprepError::Validation(format!(
            "config key {key}: empty list"
        )));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(DhprepError::Validation(format!(
            "config key {key}: expected true or false, got {other:?}"
        ))),
    }
}

impl RunConfig {
    /// Apply one key = value assignment from a file or a flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "network" => self.network = Some(PathBuf::from(value.trim())),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value.trim())),
            "out" => self.out = PathBuf::from(value.trim()),
            "interval" => self.interval = parse_scalar(key, value)?,
            "dim" => self.dim = parse_scalar(key, value)?,
            "epochs" => self.epochs = parse_scalar(key, value)?,
            "batch_size" => self.batch_size = parse_scalar(key, value)?,
            "learning_rate" => self.learning_rate = parse_scalar(key, value)?,
            "beta0" => self.beta0 = parse_scalar(key, value)?,
            "beta1" => self.beta1 = parse_scalar(key, value)?,
            "negatives" => self.negatives = parse_scalar(key, value)?,
            "window" => self.window = parse_scalar(key, value)?,
            "kernel" => self.kernel = value.trim().parse()?,
            "seed" => self.seed = parse_scalar(key, value)?,
            "neg_exponent" => self.neg_exponent = parse_scalar(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            "task" => self.task = value.trim().parse()?,
            "ratio" => self.ratio = parse_scalar(key, value)?,
            "k" => self.k = parse_list(key, value)?,
            "folds" => self.folds = parse_scalar(key, value)?,
            "repeats" => self.repeats = parse_scalar(key, value)?,
            "vertices" => self.vertices = parse_scalar(key, value)?,
            "blocks" => self.blocks = parse_list(key, value)?,
            "snapshots" => self.snapshots = parse_scalar(key, value)?,
            "p_in" => self.p_in = parse_scalar(key, value)?,
            "p_out" => self.p_out = parse_scalar(key, value)?,
            "persistence" => self.persistence = parse_scalar(key, value)?,
            "decay" => self.decay = value.trim().parse()?,
            "decay_rate" => self.decay_rate = parse_scalar(key, value)?,
            "kernels" => self.kernels = parse_list(key, value)?,
            "windows" => self.windows = parse_list(key, value)?,
            "coords" => self.coords = parse_scalar(key, value)?,
            "step" => self.step = parse_scalar(key, value)?,
            "tolerance" => self.tolerance = parse_scalar(key, value)?,
            "src" => self.src = Some(parse_scalar(key, value)?),
            "dst" => self.dst = Some(parse_scalar(key, value)?),
            "snapshot" => self.snapshot = Some(parse_scalar(key, value)?),
            other => {
                return Err(DhprepError::Validation(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        // Every arm above corresponds to a fixed key literal.
        self.explicit.insert(KEY_NAMES
            .iter()
            .copied()
            .find(|&k| k == key)
            .expect("matched key must be listed"));
        Ok(())
    }

    /// Parse a flat key = value file; `#` starts a comment line.
    pub fn load_file(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DhprepError::Validation(format!(
                    "config line {}: expected key = value, got {line:?}",
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// True when the key was assigned by file or flag rather than default.
    pub fn is_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// The training portion of this configuration.
    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            dim: self.dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta0: self.beta0,
            beta1: self.beta1,
            negatives: self.negatives,
            window: self.window,
            kernel: self.kernel,
            seed: self.seed,
            neg_exponent: self.neg_exponent,
            parallel: self.parallel,
        }
    }

    /// The generation portion of this configuration.
    pub fn decay_mode(&self) -> DecayMode {
        match self.decay {
            DecayChoice::None => DecayMode::None,
            DecayChoice::Exponential => DecayMode::Exponential {
                rate: self.decay_rate,
            },
        }
    }

    /// Serialize every key in a stable order, parseable by [`load_file`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        if let Some(p) = &self.network {
            push("network", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint {
            push("checkpoint", p.display().to_string());
        }
        push("out", self.out.display().to_string());
        push("interval", self.interval.to_string());
        push("dim", self.dim.to_string());
        push("epochs", self.epochs.to_string());
        push("batch_size", self.batch_size.to_string());
        push("learning_rate", self.learning_rate.to_string());
        push("beta0", self.beta0.to_string());
        push("beta1", self.beta1.to_string());
        push("negatives", self.negatives.to_string());
        push("window", self.window.to_string());
        push("kernel", self.kernel.to_string());
        push("seed", self.seed.to_string());
        push("neg_exponent", self.neg_exponent.to_string());
        push("parallel", self.parallel.to_string());
        push("task", self.task.to_string());
        push("ratio", self.ratio.to_string());
        push("k", join(&self.k));
        push("folds", self.folds.to_string());
        push("repeats", self.repeats.to_string());
        push("vertices", self.vertices.to_string());
        push("blocks", join(&self.blocks));
        push("snapshots", self.snapshots.to_string());
        push("p_in", self.p_in.to_string());
        push("p_out", self.p_out.to_string());
        push("persistence", self.persistence.to_string());
        push("decay", self.decay.to_string());
        push("decay_rate", self.decay_rate.to_string());
        push("kernels", join(&self.kernels));
        push("windows", join(&self.windows));
        push("coords", self.coords.to_string());
        push("step", self.step.to_string());
        push("tolerance", self.tolerance.to_string());
        if let Some(v) = self.src {
            push("src", v.to_string());
        }
        if let Some(v) = self.dst {
            push("dst", v.to_string());
        }
        if let Some(v) = self.snapshot {
            push("snapshot", v.to_string());
        }
        out
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Every recognized configuration key.
pub const KEY_NAMES: &[&str] = &[
    "network",
    "checkpoint",
    "out",
    "interval",
    "dim",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta0",
    "beta1",
    "negatives",
    "window",
    "kernel",
    "seed",
    "neg_exponent",
    "parallel",
    "task",
    "ratio",
    "k",
    "folds",
    "repeats",
    "vertices",
    "blocks",
    "snapshots",
    "p_in",
    "p_out",
    "persistence",
    "decay",
    "decay_rate",
    "kernels",
    "windows",
    "coords",
    "step",
    "tolerance",
    "src",
    "dst",
    "snapshot",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        let mut reparsed = RunConfig::default();
        reparsed.load_file(&cfg.to_text()).unwrap();
        assert_eq!(reparsed.to_text(), cfg.to_text());
    }

    #[test]
    fn file_assignments_override_defaults() {
        let mut cfg = RunConfig::default();
        cfg.load_file("# comment\n\ndim = 8\nkernel = power-law\nk = 5,15\n")
            .unwrap();
        assert_eq!(cfg.dim, 8);
        assert_eq!(cfg.kernel, KernelKind::PowerLaw);
        assert_eq!(cfg.k, vec![5, 15]);
        assert!(cfg.is_set("dim"));
        assert!(!cfg.is_set("epochs"));
    }

    #[test]
    fn bad_lines_are_rejected_with_context() {
        let mut cfg = RunConfig::default();
        let err = cfg.load_file("dim 8\n").unwrap_err().to_string();
        assert!(err.contains("key = value"), "{err}");
        let err = cfg.load_file("mystery = 1\n").unwrap_err().to_string();
        assert!(err.contains("mystery"), "{err}");
        let err = cfg.load_file("dim = fast\n").unwrap_err().to_string();
        assert!(err.contains("dim"), "{err}");
    }

    #[test]
    fn every_matchable_key_is_listed() {
        let mut cfg = RunConfig::default();
        for key in KEY_NAMES {
            let value = match *key {
                "network" | "checkpoint" | "out" => "path",
                "kernel" => "rayleigh",
                "kernels" => "flat,rayleigh",
                "task" => "newlink",
                "decay" => "exponential",
                "parallel" => "true",
                "k" | "blocks" | "windows" => "1,2",
                _ => "1",
            };
            cfg.set(key, value).unwrap();
            assert!(cfg.is_set(key), "{key} not recorded");
        }
    }
}
