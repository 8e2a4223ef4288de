//! Plain-text run configuration.
//!
//! One `key = value` pair per line; blank lines and lines starting with `#`
//! are ignored. Every key must appear in [`SCHEMA`]; unknown and repeated
//! keys are rejected.

use std::path::{Path, PathBuf};

use crate::causal::{SignificanceConfig, SignificanceMode};
use crate::data::{load_dataset, load_idx_dataset, synth_blobs, synth_segmentation, Dataset, PhaseTwo};
use crate::error::{Error, Result};
use crate::eval::default_grid;
use crate::pruners::{Method, NeuronOrder, PrunerConfig};
use crate::train::{Loss, TrainConfig};

pub struct KeySpec {
    pub key: &'static str,
    pub value: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(key: &'static str, value: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, value, default, help }
}

pub const SCHEMA: &[KeySpec] = &[
    key("method", "cswap|cbp|amp|omp|random", "cswap", "pruning method"),
    key("model", "path", "-", "model manifest (.json, blob alongside)"),
    key("dataset", "dataset spec", "-", "training / analysis data"),
    key("eval_dataset", "dataset spec", "-", "held-out evaluation data"),
    key("schedule", "path", "-", "existing schedule to evaluate or report on"),
    key("causal", "path", "-", "causal CSV to report on"),
    key("architecture", "blob_mlp|mlp:D0,D1,..|segmenter:W", "blob_mlp", "network trained by `train`"),
    key("samples_per_class", "integer >= 2", "128", "manifold size per class"),
    key("alpha", "real in [0, 1)", "0.05", "significance level"),
    key("mode", "per_class_vote|general_inference", "per_class_vote", "significance testing mode"),
    key("neuron_order", "ascending_magnitude|random_permutation", "ascending_magnitude", "within-layer analysis order"),
    key("tau", "real >= 0 or inf", "0.0575", "AMP KL threshold"),
    key("grid", "default|comma-separated fractions", "default", "pruning budgets, must start at 0"),
    key("seeds", "comma-separated integers", "run seed", "seeds for multi-seed evaluation"),
    key("learning_rate", "real > 0", "0.05", "SGD step size"),
    key("epochs", "integer", "50", "training epochs"),
    key("batch_size", "integer >= 1", "16", "SGD batch size"),
    key("coverage_threshold", "integer >= 1", "ceil(0.8 C)", "initial class-coverage threshold for image selection"),
    key("phase_two", "guarded|unguarded", "guarded", "image selection post-filter"),
];

/// Where a dataset comes from.
///
/// - `blobs:C:PER_CLASS:SPREAD[:SEED]`
/// - `segmentation:C:COUNT:SIZE[:SEED]`
/// - `idx:IMAGES:LABELS:C`
/// - `file:MANIFEST`
///
/// Synthetic specs without a seed use the run seed.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs { classes: usize, per_class: usize, spread: f64, seed: Option<u64> },
    Segmentation { classes: usize, count: usize, size: usize, seed: Option<u64> },
    Idx { images: PathBuf, labels: PathBuf, classes: usize },
    File(PathBuf),
}

impl DatasetSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("dataset spec {text:?}: {why}"));
        let parts: Vec<&str> = text.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts[i].parse().map_err(|_| bad(&format!("{:?} is not an integer", parts[i])))
        };
        let seed = |i: usize| -> Result<Option<u64>> {
            parts.get(i).map(|s| s.parse().map_err(|_| bad(&format!("{s:?} is not a seed")))).transpose()
        };
        match parts[0] {
            "blobs" if (4..=5).contains(&parts.len()) => {
                let spread: f64 = parts[3].parse().map_err(|_| bad("spread is not a number"))?;
                if !spread.is_finite() || spread < 0.0 {
                    return Err(bad("spread must be finite and non-negative"));
                }
                Ok(DatasetSpec::Blobs { classes: num(1)?, per_class: num(2)?, spread, seed: seed(4)? })
            }
            "segmentation" if (4..=5).contains(&parts.len()) => {
                Ok(DatasetSpec::Segmentation { classes: num(1)?, count: num(2)?, size: num(3)?, seed: seed(4)? })
            }
            "idx" if parts.len() == 4 => {
                Ok(DatasetSpec::Idx { images: parts[1].into(), labels: parts[2].into(), classes: num(3)? })
            }
            "file" if parts.len() == 2 => Ok(DatasetSpec::File(parts[1].into())),
            "blobs" | "segmentation" | "idx" | "file" => Err(bad("wrong number of fields")),
            other => Err(bad(&format!("unknown source {other:?}"))),
        }
    }

    fn resolve(mut self, base: &Path) -> Self {
        match &mut self {
            DatasetSpec::Idx { images, labels, .. } => {
                *images = base.join(&*images);
                *labels = base.join(&*labels);
            }
            DatasetSpec::File(p) => *p = base.join(&*p),
            _ => {}
        }
        self
    }

    pub fn load(&self, run_seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::Blobs { classes, per_class, spread, seed } => {
                synth_blobs(*classes, *per_class, *spread, seed.unwrap_or(run_seed))
            }
            DatasetSpec::Segmentation { classes, count, size, seed } => {
                synth_segmentation(*classes, *count, *size, seed.unwrap_or(run_seed))
            }
            DatasetSpec::Idx { images, labels, classes } => load_idx_dataset(images, labels, *classes),
            DatasetSpec::File(path) => load_dataset(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    Mlp(Vec<usize>),
    Segmenter { width: usize },
}

impl Architecture {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("architecture {text:?}: expected blob_mlp, mlp:D0,D1,.. or segmenter:W"));
        if text == "blob_mlp" {
            return Ok(Architecture::Mlp(vec![2, 32, 32, 3]));
        }
        match text.split_once(':') {
            Some(("mlp", dims)) => {
                let dims =
                    dims.split(',').map(|d| d.trim().parse().map_err(|_| bad())).collect::<Result<Vec<usize>>>()?;
                if dims.len() < 2 || dims.contains(&0) {
                    return Err(bad());
                }
                Ok(Architecture::Mlp(dims))
            }
            Some(("segmenter", w)) => match w.parse() {
                Ok(width) if width > 0 => Ok(Architecture::Segmenter { width }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub model: Option<PathBuf>,
    pub dataset: Option<DatasetSpec>,
    pub eval_dataset: Option<DatasetSpec>,
    pub schedule: Option<PathBuf>,
    pub causal: Option<PathBuf>,
    pub architecture: Architecture,
    pub samples_per_class: usize,
    pub alpha: f64,
    pub mode: SignificanceMode,
    pub random_order: bool,
    pub tau: f64,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub coverage_threshold: Option<usize>,
    pub phase_two: PhaseTwo,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Cswap,
            model: None,
            dataset: None,
            eval_dataset: None,
            schedule: None,
            causal: None,
            architecture: Architecture::Mlp(vec![2, 32, 32, 3]),
            samples_per_class: 128,
            alpha: 0.05,
            mode: SignificanceMode::PerClassVote,
            random_order: false,
            tau: 0.0575,
            grid: default_grid(),
            seeds: Vec::new(),
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 16,
            coverage_threshold: None,
            phase_two: PhaseTwo::Guarded,
        }
    }
}

fn list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value.split(',').map(|v| v.trim().parse().ok()).collect()
}

impl RunConfig {
    /// Parses configuration text; relative paths stay as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |why: String| Error::Config(format!("line {}: {why}", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected `key = value`, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let spec = SCHEMA.iter().find(|s| s.key == k).ok_or_else(|| {
                let known: Vec<&str> = SCHEMA.iter().map(|s| s.key).collect();
                at(format!("unknown key {k:?}; valid keys: {}", known.join(", ")))
            })?;
            if seen.contains(&spec.key) {
                return Err(at(format!("key {k:?} given twice")));
            }
            seen.push(spec.key);
            let invalid = || at(format!("{k} = {v:?}: expected {}", spec.value));
            let real = || v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(invalid);
            let int = || v.parse::<usize>().map_err(|_| invalid());
            match k {
                "method" => cfg.method = Method::parse(v).ok_or_else(invalid)?,
                "model" => cfg.model = Some(v.into()),
                "dataset" => cfg.dataset = Some(DatasetSpec::parse(v).map_err(|e| at(e.to_string()))?),
                "eval_dataset" => cfg.eval_dataset = Some(DatasetSpec::parse(v).map_err(|e| at(e.to_string()))?),
                "schedule" => cfg.schedule = Some(v.into()),
                "causal" => cfg.causal = Some(v.into()),
                "architecture" => cfg.architecture = Architecture::parse(v).map_err(|e| at(e.to_string()))?,
                "samples_per_class" => {
                    cfg.samples_per_class = int().and_then(|m| if m >= 2 { Ok(m) } else { Err(invalid()) })?
                }
                "alpha" => {
                    cfg.alpha = real().and_then(|a| if (0.0..1.0).contains(&a) { Ok(a) } else { Err(invalid()) })?
                }
                "mode" => {
                    cfg.mode = match v {
                        "per_class_vote" => SignificanceMode::PerClassVote,
                        "general_inference" => SignificanceMode::GeneralInference,
                        _ => return Err(invalid()),
                    }
                }
                "neuron_order" => {
                    cfg.random_order = match v {
                        "ascending_magnitude" => false,
                        "random_permutation" => true,
                        _ => return Err(invalid()),
                    }
                }
                "tau" => {
                    cfg.tau = if v == "inf" { f64::INFINITY } else { real()? };
                    if cfg.tau < 0.0 {
                        return Err(invalid());
                    }
                }
                "grid" => {
                    if v != "default" {
                        let g: Vec<f64> = list(v).ok_or_else(invalid)?;
                        let ok = g.first() == Some(&0.0)
                            && g.windows(2).all(|w| w[0] < w[1])
                            && g.iter().all(|f| (0.0..=1.0).contains(f));
                        if !ok {
                            return Err(at(format!(
                                "grid must be strictly increasing fractions in [0, 1] starting at 0, got {v:?}"
                            )));
                        }
                        cfg.grid = g;
                    }
                }
                "seeds" => {
                    cfg.seeds = list(v).filter(|s: &Vec<u64>| !s.is_empty()).ok_or_else(invalid)?;
                    let mut sorted = cfg.seeds.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != cfg.seeds.len() {
                        return Err(at("seeds must be distinct".into()));
                    }
                }
                "learning_rate" => {
                    cfg.learning_rate = real().and_then(|r| if r > 0.0 { Ok(r) } else { Err(invalid()) })?
                }
                "epochs" => cfg.epochs = int()?,
                "batch_size" => cfg.batch_size = int().and_then(|b| if b >= 1 { Ok(b) } else { Err(invalid()) })?,
                "coverage_threshold" => {
                    cfg.coverage_threshold = Some(int().and_then(|t| if t >= 1 { Ok(t) } else { Err(invalid()) })?)
                }
                "phase_two" => {
                    cfg.phase_two = match v {
                        "guarded" => PhaseTwo::Guarded,
                        "unguarded" => PhaseTwo::Unguarded,
                        _ => return Err(invalid()),
                    }
                }
                _ => unreachable!("every schema key is handled"),
            }
        }
        Ok(cfg)
    }

    /// Reads a config file. Relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = RunConfig::parse(&text)?;
        Ok(cfg.relative_to(path.parent().unwrap_or(Path::new(""))))
    }

    pub fn relative_to(mut self, base: &Path) -> Self {
        for p in [&mut self.model, &mut self.schedule, &mut self.causal].into_iter().flatten() {
            *p = base.join(&*p);
        }
        self.dataset = self.dataset.map(|d| d.resolve(base));
        self.eval_dataset = self.eval_dataset.map(|d| d.resolve(base));
        self
    }

    /// Seeds to run; the configured list, else `fallback` alone.
    pub fn seeds_or(&self, fallback: u64) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![fallback]
        } else {
            self.seeds.clone()
        }
    }

    pub fn pruner_config(&self, seed: u64) -> PrunerConfig {
        PrunerConfig {
            significance: SignificanceConfig { alpha: self.alpha, mode: self.mode },
            samples_per_class: self.samples_per_class,
            neuron_order: if self.random_order {
                NeuronOrder::RandomPermutation { seed }
            } else {
                NeuronOrder::AscendingMagnitude
            },
            amp_tau: self.tau,
            seed,
        }
    }

    pub fn train_config(&self, seed: u64, loss: Loss) -> TrainConfig {
        TrainConfig { learning_rate: self.learning_rate, epochs: self.epochs, batch_size: self.batch_size, seed, loss }
    }
}

/// The schema as an aligned text table.
pub fn schema_table() -> String {
    let mut out = String::new();
    for s in SCHEMA {
        out.push_str(&format!("{:<20} {:<40} {:<22} {}\n", s.key, s.value, s.default, s.help));
    }
    out
}
