//! Command-line plumbing for the four pipeline stages.
//!
//! `generate` writes a labeled dataset file, `train` fits a classifier and
//! writes a checkpoint plus a per-epoch history CSV, `evaluate` renders a
//! report for a checkpoint/dataset pair, and `classify` scores a single
//! stencil. Every command is deterministic given its flags, seeds, and input
//! files. Exit codes: 0 success, 2 usage, 3 data error, 4 numerical error.

use crate::error::{Error, Result};
use crate::eval::evaluate_indices;
use crate::labeling::io::{file_fingerprint, read_dataset, write_dataset};
use crate::labeling::{build_dataset, shuffle_labels, DatasetConfig, ALL_QUARTILES};
use crate::model::adam::AdamConfig;
use crate::model::checkpoint::{load, save, Checkpoint};
use crate::model::net::predict;
use crate::model::train::{history_to_csv, stratified_split, train, TrainConfig};
use crate::model::ModelConfig;
use crate::node_gen::{normalize, Point2, Rect, StencilSample, NORM_TOL};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};

/// Environment variable consulted for the worker count when `--workers` is
/// not given.
pub const WORKERS_ENV: &str = "STENCIL_LAB_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "stencil-lab",
    version,
    about = "Labeled stencil datasets and a stencil-quality classifier for meshless RBF-FD methods"
)]
pub struct Cli {
    /// Worker threads for dataset generation (default: STENCIL_LAB_WORKERS,
    /// then all cores). Training is single-threaded regardless.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled stencil dataset file.
    Generate(GenerateArgs),
    /// Train a quartile classifier on a dataset file.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset and render a report.
    Evaluate(EvaluateArgs),
    /// Classify a single stencil with a trained checkpoint.
    Classify(ClassifyArgs),
}

fn parse_rect(text: &str) -> std::result::Result<Rect, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!(
            "expected `xmin,ymin,xmax,ymax`, got {} values",
            parts.len()
        ));
    }
    let mut v = [0.0f64; 4];
    for (slot, raw) in v.iter_mut().zip(&parts) {
        *slot = raw
            .trim()
            .parse()
            .map_err(|e| format!("`{}`: {e}", raw.trim()))?;
    }
    if !(v[0] < v[2] && v[1] < v[3]) {
        return Err("domain must satisfy xmin < xmax and ymin < ymax".into());
    }
    Ok(Rect::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3])))
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Stencil sizes, comma separated (e.g. 6,9,15).
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,

    /// Stencils per size.
    #[arg(long)]
    pub count: usize,

    /// Output dataset path.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Target node spacing of the underlying cloud.
    #[arg(long, default_value_t = 0.02)]
    pub spacing_h: f64,

    /// Candidate pool size as a multiple of the stencil size.
    #[arg(long, default_value_t = 3.0)]
    pub pool_factor: f64,

    /// Distance-decay exponent of the neighbor sampling weights.
    #[arg(long, default_value_t = 1.0)]
    pub decay_beta: f64,

    /// Domain rectangle as `xmin,ymin,xmax,ymax`.
    #[arg(long, default_value = "0,0,1,1", value_parser = parse_rect)]
    pub domain: Rect,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input dataset path.
    #[arg(long)]
    pub dataset: PathBuf,

    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,

    /// History CSV path (default: the checkpoint path with its extension
    /// replaced by `history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,

    #[arg(long, default_value_t = 20)]
    pub epochs: usize,

    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,

    /// Held-out fraction of each (size, class) group.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,

    /// Dropout rate on the dense head.
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,

    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Model input size (default: the dataset's largest stencil size).
    /// Larger values leave room for cross-evaluation on bigger stencils.
    #[arg(long)]
    pub input_size: Option<usize>,

    /// Point-stack layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 128, 128, 256, 2048])]
    pub point_widths: Vec<usize>,

    /// Dense-head layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1024usize, 512])]
    pub dense_widths: Vec<usize>,

    /// Scramble the class labels within each size before training. The
    /// resulting model is a null control; the shuffle seed is recorded in
    /// the checkpoint so evaluation reproduces the scrambled truths.
    #[arg(long)]
    pub shuffle_labels: bool,

    /// Seed for the label scramble.
    #[arg(long, default_value_t = 0, requires = "shuffle_labels")]
    pub shuffle_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    /// The model's held-out test records.
    Test,
    /// The records the model was trained on.
    Train,
    /// Every record in the dataset file.
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Dataset to evaluate against.
    #[arg(long)]
    pub dataset: PathBuf,

    /// Report output path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Records to score. Defaults to `test` on the model's own dataset and
    /// `all` on any other; `test`/`train` are only defined on the dataset
    /// the model was trained on.
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,

    /// Permit scoring records the model has already seen during training.
    #[arg(long)]
    pub allow_train_eval: bool,

    /// Also write the per-class ROC curves to this CSV path.
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["coords", "file"])))]
pub struct ClassifyArgs {
    /// Checkpoint to classify with.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Inline coordinates `x1,y1,x2,y2,...`, central node first.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coords: Option<Vec<f64>>,

    /// File with one `x y` pair per line (comments start with `#`), central
    /// node first.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

/// Pins the global worker pool when a count was requested via flag or
/// environment. Later calls in the same process keep the first pool.
fn configure_workers(flag: Option<usize>) -> Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(raw) => Some(raw.trim().parse().map_err(|_| {
                Error::Contract(format!(
                    "{WORKERS_ENV} must be a positive integer, got `{raw}`"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            return Err(Error::Contract("worker count must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Runs one parsed command to completion.
pub fn execute(cli: Cli) -> Result<()> {
    configure_workers(cli.workers)?;
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Classify(args) => cmd_classify(args),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let config = DatasetConfig {
        seed: args.seed,
        domain: args.domain,
        spacing_h: args.spacing_h,
        sizes: args.sizes,
        count_per_size: args.count,
        pool_factor: args.pool_factor,
        decay_beta: args.decay_beta,
    };
    let dataset = build_dataset(&config)?;
    write_dataset(&dataset, &args.out)?;

    for &s in &dataset.meta.sizes {
        let mut eps: Vec<f64> = dataset
            .records
            .iter()
            .filter(|r| r.size_s == s)
            .map(|r| r.epsilon)
            .collect();
        eps.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let cuts = dataset.borders.get(s).expect("borders for every size");
        println!(
            "size {s}: {} records, epsilon min/median/max = {:.6e} / {:.6e} / {:.6e}",
            eps.len(),
            eps[0],
            cuts[1],
            eps[eps.len() - 1]
        );
        println!(
            "size {s}: quartile borders = {:.6e} / {:.6e} / {:.6e}",
            cuts[0], cuts[1], cuts[2]
        );
    }
    println!(
        "wrote {} records to {}",
        dataset.records.len(),
        args.out.display()
    );
    Ok(())
}

fn default_history_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("history.csv")
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut dataset = read_dataset(&args.dataset)?;
    let fingerprint = file_fingerprint(&args.dataset)?;
    let label_shuffle = args.shuffle_labels.then_some(args.shuffle_seed);
    if let Some(seed) = label_shuffle {
        shuffle_labels(&mut dataset, seed);
        println!("labels shuffled within each size (seed {seed})");
    }

    let mut model_config =
        ModelConfig::with_input_size(args.input_size.unwrap_or(dataset.max_size));
    model_config.point_widths = args.point_widths;
    model_config.dense_widths = args.dense_widths;
    model_config.dropout = args.dropout;
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        test_fraction: args.test_fraction,
        adam: AdamConfig {
            lr: args.lr,
            ..AdamConfig::default()
        },
        seed: args.seed,
    };

    let outcome = train(&dataset, &model_config, &train_config, |e| {
        println!(
            "epoch {:>3}: train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4}",
            e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc
        );
    })?;

    let checkpoint = Checkpoint {
        params: outcome.params,
        train: train_config,
        dataset_fingerprint: fingerprint,
        label_shuffle,
        epochs_completed: outcome.history.len(),
        final_stats: outcome.history.last().copied(),
    };
    save(&checkpoint, &args.out)?;
    let history_path = args
        .history
        .unwrap_or_else(|| default_history_path(&args.out));
    write_text(&history_path, &history_to_csv(&outcome.history))?;
    println!("checkpoint -> {}", args.out.display());
    println!("history -> {}", history_path.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let ckpt = load(&args.checkpoint)?;
    let mut dataset = read_dataset(&args.dataset)?;
    let fingerprint = file_fingerprint(&args.dataset)?;
    if dataset.max_size > ckpt.params.config.input_size {
        return Err(Error::Contract(format!(
            "dataset holds size-{} stencils but the model accepts at most {}",
            dataset.max_size, ckpt.params.config.input_size
        )));
    }

    let own = fingerprint == ckpt.dataset_fingerprint;
    let mut shuffled = None;
    if own {
        if let Some(seed) = ckpt.label_shuffle {
            // Reproduce the scrambled truths the model was trained against.
            shuffle_labels(&mut dataset, seed);
            shuffled = Some(seed);
        }
    }

    let choice = match args.split {
        Some(c) => {
            if !own && matches!(c, SplitChoice::Test | SplitChoice::Train) {
                return Err(Error::Contract(
                    "this is not the dataset the model was trained on, so its \
                     train/test split is undefined; use --split all"
                        .into(),
                ));
            }
            c
        }
        None if own => SplitChoice::Test,
        None => SplitChoice::All,
    };
    if own && choice != SplitChoice::Test && !args.allow_train_eval {
        return Err(Error::Contract(
            "refusing to score records the model was trained on; pass \
             --allow-train-eval to override"
                .into(),
        ));
    }

    let (indices, base_name) = match choice {
        SplitChoice::All => ((0..dataset.records.len()).collect::<Vec<_>>(), "all"),
        SplitChoice::Test | SplitChoice::Train => {
            let split = stratified_split(&dataset, ckpt.train.test_fraction, ckpt.train.seed)?;
            if choice == SplitChoice::Test {
                (split.test, "test")
            } else {
                (split.train, "train")
            }
        }
    };
    let split_name = match shuffled {
        Some(seed) => format!("{base_name} (labels shuffled, seed {seed})"),
        None => base_name.to_string(),
    };

    let report = evaluate_indices(&ckpt.params, &dataset, &indices, &split_name, &fingerprint)?;
    let text = report.render();
    match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            println!("report -> {}", path.display());
        }
        None => print!("{text}"),
    }
    if let Some(path) = &args.roc_csv {
        write_text(path, &report.roc_csv())?;
        println!("roc-csv -> {}", path.display());
    }
    Ok(())
}

fn read_coord_file(path: &Path) -> Result<Vec<Point2>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut nodes = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parts: Vec<&str> = body
            .split([' ', '\t', ','])
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 2 {
            return Err(Error::parse(
                path,
                k + 1,
                format!("expected `x y`, got {} values", parts.len()),
            ));
        }
        let x: f64 = parts[0]
            .parse()
            .map_err(|e| Error::parse(path, k + 1, format!("x: {e}")))?;
        let y: f64 = parts[1]
            .parse()
            .map_err(|e| Error::parse(path, k + 1, format!("y: {e}")))?;
        nodes.push(Point2::new(x, y));
    }
    Ok(nodes)
}

/// True when the nodes already satisfy the canonical form the model expects:
/// first node exactly at the origin and the farthest at distance one.
fn is_canonical(nodes: &[Point2]) -> bool {
    if nodes[0].x != 0.0 || nodes[0].y != 0.0 {
        return false;
    }
    let r_max = nodes.iter().map(Point2::norm).fold(0.0, f64::max);
    (r_max - 1.0).abs() <= NORM_TOL
}

fn cmd_classify(args: ClassifyArgs) -> Result<()> {
    let ckpt = load(&args.checkpoint)?;
    let nodes = match (&args.coords, &args.file) {
        (Some(values), None) => {
            if values.len() % 2 != 0 {
                return Err(Error::Contract(format!(
                    "--coords needs an even number of values, got {}",
                    values.len()
                )));
            }
            values
                .chunks_exact(2)
                .map(|xy| Point2::new(xy[0], xy[1]))
                .collect()
        }
        (None, Some(path)) => read_coord_file(path)?,
        _ => unreachable!("clap enforces exactly one input source"),
    };
    if nodes.len() < 2 {
        return Err(Error::Contract(format!(
            "a stencil needs at least 2 nodes, got {}",
            nodes.len()
        )));
    }
    if let Some(bad) = nodes.iter().find(|p| !p.is_finite()) {
        return Err(Error::Contract(format!(
            "coordinates must be finite, got ({}, {})",
            bad.x, bad.y
        )));
    }

    if !is_canonical(&nodes) {
        eprintln!(
            "warning: stencil is not in canonical form; translating the first \
             node to the origin and scaling the farthest to distance 1"
        );
    }
    let stencil = normalize(&StencilSample {
        nodes,
        center_index: 0,
    })?;
    if stencil.size_s() > ckpt.params.config.input_size {
        return Err(Error::Contract(format!(
            "stencil has {} nodes but the model accepts at most {}",
            stencil.size_s(),
            ckpt.params.config.input_size
        )));
    }

    let (class, probs) = predict(&ckpt.params, &stencil)?;
    println!("class = {}", class.label());
    for (q, p) in ALL_QUARTILES.iter().zip(probs) {
        println!("p({}) = {p:.6}", q.label());
    }
    Ok(())
}
