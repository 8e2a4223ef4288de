//! `cswap`: train fixtures, prune, evaluate pruning curves and report.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file
//! format error, 4 numerical failure, 5 invalid input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cswap::causal::{parse_results_csv, results_csv};
use cswap::config::{schema_table, Architecture, DatasetSpec, RunConfig};
use cswap::data::{build_manifold, select_segmentation_subset, Dataset, Manifold, SegSelectionConfig, TaskKind};
use cswap::eval::{
    aggregate, category_distribution, compression_correlation, curve_csv, curves_svg, evaluate_schedule, metric,
    MetricKind, PruningCurve,
};
use cswap::graph::{load_model, save_model};
use cswap::pruners::{omp, random_pruner, run_method, Method, PruneOutcome, PruneSchedule};
use cswap::train::{log_csv, train, Loss};
use cswap::{atomic_write, fixtures, Error, ErrorKind, ModelGraph, Result};
use rayon::prelude::*;
use serde_json::json;

#[derive(Parser)]
#[command(name = "cswap", version, about = "Causal-effect-guided structured pruning")]
struct Cli {
    /// Run configuration (key = value lines). See `cswap schema`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train `architecture` on `dataset`; writes model.json, model.bin, train_log.csv.
    Train,
    /// Prune `model` with `method`; writes schedule.json, causal.csv, pruned.json.
    Prune,
    /// Evaluate pruning curves per seed; writes curve_<seed>.csv, aggregate.json, curves.svg, report.txt.
    Eval,
    /// Category distribution and compression correlation; writes report.txt.
    Report,
    /// Select segmentation images for the analysis manifold; writes selection.json.
    Select,
    /// Print the configuration schema.
    Schema,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
        ErrorKind::Invalid => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads {n}: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    if matches!(cli.command, Command::Schema) {
        print!("{}", schema_table());
        return Ok(());
    }
    fs::create_dir_all(&cli.out).map_err(|e| Error::Io { path: cli.out.clone(), source: e })?;
    let ctx = Ctx { cfg, seed: cli.seed, out: cli.out.clone() };
    match cli.command {
        Command::Train => ctx.train(),
        Command::Prune => ctx.prune(),
        Command::Eval => ctx.eval(),
        Command::Report => ctx.report(),
        Command::Select => ctx.select(),
        Command::Schema => unreachable!(),
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn require<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Config(format!("`{key}` must be set for this command")))
}

fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset(&self) -> Result<Dataset> {
        require(&self.cfg.dataset, "dataset")?.load(self.seed)
    }

    /// Held-out data; without `eval_dataset`, `dataset` itself. Unseeded synthetic specs use run seed + 1.
    fn eval_dataset(&self) -> Result<Dataset> {
        match &self.cfg.eval_dataset {
            Some(spec) => spec.load(self.seed.wrapping_add(1)),
            None => {
                let spec: &DatasetSpec = require(&self.cfg.dataset, "eval_dataset")?;
                log::warn!("no eval_dataset configured; evaluating on `dataset`");
                spec.load(self.seed)
            }
        }
    }

    /// `model` from the config, else the one `train` wrote into the output directory.
    fn model(&self) -> Result<ModelGraph> {
        let path = self.cfg.model.clone().unwrap_or_else(|| self.path("model.json"));
        load_model(&path)
    }

    fn manifold(&self, data: &Dataset, seed: u64) -> Result<Manifold> {
        let m = self.cfg.samples_per_class;
        match data.task() {
            TaskKind::Classification => build_manifold(data, m, seed),
            TaskKind::Segmentation => {
                let sel = select_segmentation_subset(data, &self.selection_config(data, seed))?;
                Ok(Manifold::from_segmentation(data, &sel.indices, seed))
            }
        }
    }

    fn selection_config(&self, data: &Dataset, seed: u64) -> SegSelectionConfig {
        let mut c = SegSelectionConfig::for_classes(data.num_classes, self.cfg.samples_per_class, seed);
        if let Some(t) = self.cfg.coverage_threshold {
            c.coverage_threshold = t;
        }
        c.phase_two = self.cfg.phase_two;
        c
    }

    fn prune_with(&self, model: &ModelGraph, data: Option<&Dataset>, seed: u64) -> Result<PruneOutcome> {
        let pc = self.cfg.pruner_config(seed);
        let method = self.cfg.method;
        let data_free = |schedule: PruneSchedule| PruneOutcome {
            schedule,
            results: Vec::new(),
            evaluations: 0,
            network: model.clone(),
            removed: 0,
        };
        match method {
            Method::Omp => Ok(data_free(omp(model)?)),
            Method::Random => Ok(data_free(random_pruner(model, seed)?)),
            _ => {
                let data = data.ok_or_else(|| Error::Config(format!("method {} needs `dataset`", method.as_str())))?;
                run_method(method, model, &self.manifold(data, seed)?, &pc)
            }
        }
    }

    fn train(&self) -> Result<()> {
        let data = self.dataset()?;
        let input = data
            .samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("training dataset is empty".into()))?
            .input
            .shape()
            .to_vec();
        let (untrained, loss) = match &self.cfg.architecture {
            Architecture::Mlp(dims) => {
                if input != [dims[0]] || dims[dims.len() - 1] != data.num_classes {
                    return Err(Error::InvalidArgument(format!(
                        "architecture {dims:?} does not fit inputs {input:?} with {} classes",
                        data.num_classes
                    )));
                }
                (fixtures::mlp("mlp", dims, self.seed)?, Loss::CrossEntropy)
            }
            Architecture::Segmenter { width } => {
                if data.task() != TaskKind::Segmentation || input.len() != 3 || input[0] != 3 || input[1] != input[2] {
                    return Err(Error::InvalidArgument("segmenter needs square 3-channel segmentation images".into()));
                }
                (fixtures::segmenter(data.num_classes, input[1], *width, self.seed), Loss::PixelwiseCrossEntropy)
            }
        };
        let (model, log) = train(&untrained, &data, &self.cfg.train_config(self.seed, loss))?;
        save_model(&model, &self.path("model.json"))?;
        write(&self.path("train_log.csv"), &log_csv(&log))?;
        let final_acc = log.last().map_or(f64::NAN, |l| l.accuracy);
        println!("trained {} epochs, train accuracy {final_acc:.2}%", log.len());
        if self.cfg.eval_dataset.is_some() {
            let test = self.eval_dataset()?;
            let kind = MetricKind::for_task(test.task());
            println!("held-out {}: {:.2}%", kind_name(kind), metric(&model, &test, kind)?);
        }
        Ok(())
    }

    fn prune(&self) -> Result<()> {
        let model = self.model()?;
        let data =
            if self.cfg.method.is_causal() || self.cfg.method == Method::Amp { Some(self.dataset()?) } else { None };
        let out = self.prune_with(&model, data.as_ref(), self.seed)?;
        write(&self.path("schedule.json"), &out.schedule.to_json())?;
        write(&self.path("causal.csv"), &results_csv(&out.results, self.cfg.alpha))?;
        save_model(&out.network, &self.path("pruned.json"))?;
        println!(
            "{}: {} groups scheduled, {} removed by the method, {} evaluations",
            self.cfg.method.as_str(),
            out.schedule.len(),
            out.removed,
            out.evaluations
        );
        if !out.results.is_empty() {
            let d = category_distribution(&out.results)?;
            println!("neutral {:.1}%  critical {:.1}%  detrimental {:.1}%", d.neutral, d.critical, d.detrimental);
        }
        Ok(())
    }

    fn eval(&self) -> Result<()> {
        let model = self.model()?;
        let test = self.eval_dataset()?;
        let grid = &self.cfg.grid;
        let curves: Vec<(u64, PruningCurve)> = match &self.cfg.schedule {
            Some(path) => {
                let schedule = PruneSchedule::from_json(&read_text(path)?)?;
                schedule.validate_for(&model)?;
                vec![(schedule.seed, evaluate_schedule(&model, &schedule, &test, grid)?)]
            }
            None => {
                let needs_data = self.cfg.method.is_causal() || self.cfg.method == Method::Amp;
                let data = if needs_data { Some(self.dataset()?) } else { None };
                self.cfg
                    .seeds_or(self.seed)
                    .par_iter()
                    .map(|&seed| {
                        let out = self.prune_with(&model, data.as_ref(), seed)?;
                        Ok((seed, evaluate_schedule(&model, &out.schedule, &test, grid)?))
                    })
                    .collect::<Result<_>>()?
            }
        };
        for (seed, c) in &curves {
            write(&self.path(&format!("curve_{seed}.csv")), &curve_csv(c, *seed))?;
        }
        let kind = curves[0].1.metric;
        let baseline = curves[0].1.baseline();
        let mut report = format!("method {}\nmetric {}\n", self.cfg.method.as_str(), kind_name(kind));
        if let Some(b) = baseline {
            writeln!(report, "baseline {b:.4}").unwrap();
        }
        let agg = if grid.len() >= 2 {
            let a = aggregate(&curves)?;
            for (s, v) in a.seeds.iter().zip(&a.sauce) {
                writeln!(report, "seed {s} SAUCE {v:.4}").unwrap();
            }
            writeln!(report, "SAUCE mean {:.4} std {:.4} ({})", a.mean, a.std, a.std_kind).unwrap();
            serde_json::to_value(&a).expect("aggregate serializes")
        } else {
            writeln!(report, "single-point grid: baseline only").unwrap();
            serde_json::Value::Null
        };
        let summary = json!({
            "method": self.cfg.method.as_str(),
            "metric": kind,
            "grid": grid,
            "baseline": baseline,
            "aggregate": agg,
        });
        write(&self.path("aggregate.json"), &json_text(&summary))?;
        let labelled: Vec<(String, &PruningCurve)> = curves.iter().map(|(s, c)| (format!("seed {s}"), c)).collect();
        write(&self.path("curves.svg"), &curves_svg(&labelled, baseline))?;
        write(&self.path("report.txt"), &report)?;
        print!("{report}");
        Ok(())
    }

    fn report(&self) -> Result<()> {
        let existing = |p: PathBuf| p.exists().then_some(p);
        let causal = self.cfg.causal.clone().or_else(|| existing(self.path("causal.csv")));
        let schedule = self.cfg.schedule.clone().or_else(|| existing(self.path("schedule.json")));
        if causal.is_none() && schedule.is_none() {
            return Err(Error::Config(
                "`report` needs `causal` or `schedule` (or them in the output directory)".into(),
            ));
        }
        let mut report = String::new();
        if let Some(path) = causal {
            let results = parse_results_csv(&read_text(&path)?, self.cfg.alpha)?;
            writeln!(report, "category distribution ({} neurons)", results.len()).unwrap();
            if results.is_empty() {
                writeln!(report, "no causal results").unwrap();
            } else {
                let d = category_distribution(&results)?;
                for (name, v) in [("neutral", d.neutral), ("critical", d.critical), ("detrimental", d.detrimental)] {
                    writeln!(report, "{name:<12} {v:>7.2}%").unwrap();
                }
            }
        }
        if let Some(path) = schedule {
            let s = PruneSchedule::from_json(&read_text(&path)?)?;
            let model = self.model()?;
            s.validate_for(&model)?;
            let r = compression_correlation(&s, &model)?;
            writeln!(report, "compression correlation").unwrap();
            match r {
                Some(r) => writeln!(report, "{:<12} {r:>7.4}", model.name()).unwrap(),
                None => writeln!(report, "{:<12} {:>7}", model.name(), "n/a").unwrap(),
            }
        }
        write(&self.path("report.txt"), &report)?;
        print!("{report}");
        Ok(())
    }

    fn select(&self) -> Result<()> {
        let data = self.dataset()?;
        if data.task() != TaskKind::Segmentation {
            return Err(Error::InvalidArgument("`select` needs a segmentation dataset".into()));
        }
        let config = self.selection_config(&data, self.seed);
        let sel = select_segmentation_subset(&data, &config)?;
        let doc = json!({ "config": config, "selection": sel });
        write(&self.path("selection.json"), &json_text(&doc))?;
        println!("selected {} images; per-class counts {:?}", sel.indices.len(), sel.class_counts);
        Ok(())
    }
}

fn kind_name(kind: MetricKind) -> &'static str {
    match kind {
        MetricKind::Accuracy => "accuracy",
        MetricKind::MeanIou => "mean_iou",
    }
}
