//! Command-line front end: train a source model, record activation ledgers,
//! prune, sweep, run baselines, and reproduce the experiment studies.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on I/O errors.

mod data_spec;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fineprune::experiment::{
    experiment_class_count, experiment_data_efficiency, experiment_sparsity_curve, mlp_layers,
    train_source, ExperimentConfig,
};
use fineprune::io::{load_model, save_model};
use fineprune::data::Provenance;
use fineprune::metrics::evaluate_accuracy;
use fineprune::report::{ExperimentReport, ReportRow};
use fineprune::strategy::{self, BaselineConfig, TrainConfig};
use fineprune::{
    prune, safe_ramp, sweep, threshold_for_sparsity, ActivationLedger, Error, LayerSpec, Network,
    Result, Shape,
};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fineprune",
    version,
    about = "Personalize a trained network to unlabeled target data by structured pruning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a source model on a labeled dataset.
    TrainSource(TrainSourceArgs),
    /// Record per-unit activation scores over a dataset's inputs and export
    /// them as CSV.
    Record(RecordArgs),
    /// Prune a model against target data at a fixed sparsity or threshold.
    Prune(PruneArgs),
    /// Sweep a sparsity grid and keep the best-scoring mask.
    Sweep(SweepArgs),
    /// Build sparsity up in small steps and stop at the first accuracy drop.
    Ramp(RampArgs),
    /// Run a comparison method (finetune, svd, magnitude, random) and append
    /// its row to a report CSV.
    Baseline(BaselineArgs),
    /// Run one of the studies (sparsity, data-efficiency, class-count) and
    /// write its report CSV.
    Experiment(ExperimentArgs),
    /// Summarize a report CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainSourceArgs {
    /// Dataset path or synth: spec (see README).
    #[arg(long)]
    data: String,
    /// Where to write the trained model.
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Architecture: "mlp:<h1,h2,...>" or "lenet".
    #[arg(long, default_value = "mlp:64")]
    arch: String,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f32,
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

#[derive(Args)]
struct RecordArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: String,
    /// Scores CSV (layer_index, unit_index, score).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    model: PathBuf,
    /// Unlabeled target data the ledger records.
    #[arg(long)]
    data: String,
    /// Target weight sparsity in [0, 1].
    #[arg(long, conflicts_with = "sigma")]
    sparsity: Option<f64>,
    /// Explicit score threshold instead of a sparsity target.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target data feeding the ledger (labels ignored on this path).
    #[arg(long)]
    data: String,
    /// Labeled eval data for selection; defaults to --data.
    #[arg(long)]
    eval: Option<String>,
    /// Sparsity grid as start:stop:step.
    #[arg(long, default_value = "0:0.95:0.05")]
    grid: String,
    /// Sweep CSV (sparsity, accuracy).
    #[arg(long)]
    out: PathBuf,
    /// Also save the selected pruned model.
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RampArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: String,
    #[arg(long)]
    eval: Option<String>,
    /// Sparsity increment per step, in (0, 0.1].
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BaselineArgs {
    /// Registered strategy name.
    method: String,
    #[arg(long)]
    model: PathBuf,
    /// Target training data (labels are read only by methods that need them).
    #[arg(long)]
    data: String,
    /// Labeled eval data; defaults to --data.
    #[arg(long)]
    eval: Option<String>,
    /// Report CSV to append the run's row to.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target sparsity for the data-free pruning controls.
    #[arg(long, default_value_t = 0.5)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.5)]
    rank_fraction: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr: f32,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Sparsity,
    DataEfficiency,
    ClassCount,
}

#[derive(Args)]
struct ExperimentArgs {
    kind: ExperimentKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Grid step for the sparsity study.
    #[arg(long)]
    grid_step: Option<f64>,
    // Scale overrides; defaults reproduce the standard study.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    target_per_class: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    source_epochs: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Per-individual affine input perturbation magnitude.
    #[arg(long)]
    perturb: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report CSV to summarize.
    #[arg(long)]
    data: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSource(args) => cmd_train_source(args),
        Command::Record(args) => cmd_record(args),
        Command::Prune(args) => cmd_prune(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ramp(args) => cmd_ramp(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_train_source(args: TrainSourceArgs) -> Result<()> {
    let data = data_spec::load(&args.data, args.seed, Provenance::Source)?;
    let input_shape = data.sample(0).0.shape().clone();
    let layers = build_arch(&args.arch, &input_shape, data.class_count())?;
    let init = Network::new(input_shape, layers, args.seed)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
    };
    let trained = train_source(&init, &data, &cfg, args.seed)?;
    let acc = evaluate_accuracy(&trained, &data)?;
    save_model(&trained, &args.out_model)?;
    println!(
        "trained {} on {} samples ({} classes); training accuracy {:.4}",
        args.out_model.display(),
        data.len(),
        data.class_count(),
        acc
    );
    Ok(())
}

fn cmd_record(args: RecordArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = data_spec::load(&args.data, args.seed, Provenance::Target)?;
    let mut ledger = ActivationLedger::for_network(&net);
    ledger.record_all(&net, data.inputs())?;
    let file = fs::File::create(&args.out)?;
    ledger.export_csv(file)?;
    println!(
        "recorded {} samples into {} accumulators; scores at {}",
        ledger.sample_count(),
        ledger.accumulator_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_prune(args: PruneArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = data_spec::load(&args.data, args.seed, Provenance::Target)?;
    let mut ledger = ActivationLedger::for_network(&net);
    ledger.record_all(&net, data.inputs())?;
    let sigma = match (args.sparsity, args.sigma) {
        (Some(target), None) => {
            if !(0.0..=1.0).contains(&target) {
                return Err(Error::InvalidArgument(format!(
                    "sparsity target {target} must lie in [0, 1]"
                )));
            }
            threshold_for_sparsity(&ledger.scores()?, target)
        }
        (None, Some(sigma)) => sigma,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "pass either --sparsity or --sigma".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    let (pruned, mask) = prune(sigma, &net, &ledger)?;
    save_model(&pruned, &args.out_model)?;
    println!(
        "pruned at sigma {:.6}: sparsity {:.4} ({} of {} prunable weights); model at {}",
        sigma,
        mask.sparsity(),
        mask.dropped_weights(),
        mask.total_prunable_weights(),
        args.out_model.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = data_spec::load(&args.data, args.seed, Provenance::Target)?;
    let eval = match &args.eval {
        Some(spec) => data_spec::load(spec, args.seed.wrapping_add(1), Provenance::Target)?,
        None => data.clone(),
    };
    let grid = parse_grid(&args.grid)?;
    let mut ledger = ActivationLedger::for_network(&net);
    ledger.record_all(&net, data.inputs())?;
    let result = sweep(&net, &ledger, &eval, &grid)?;
    result.write_csv(fs::File::create(&args.out)?)?;
    let best = result.selected();
    println!(
        "swept {} grid points; best sparsity {:.4} at accuracy {:.4}; curve at {}",
        result.entries.len(),
        best.achieved_sparsity,
        best.accuracy,
        args.out.display()
    );
    if let Some(out_model) = &args.out_model {
        let mut selected = net.clone();
        selected.apply_mask(&result.selected_mask)?;
        save_model(&selected, out_model)?;
        println!("selected model at {}", out_model.display());
    }
    Ok(())
}

fn cmd_ramp(args: RampArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = data_spec::load(&args.data, args.seed, Provenance::Target)?;
    let eval = match &args.eval {
        Some(spec) => data_spec::load(spec, args.seed.wrapping_add(1), Provenance::Target)?,
        None => data.clone(),
    };
    let mut ledger = ActivationLedger::for_network(&net);
    ledger.record_all(&net, data.inputs())?;
    let result = safe_ramp(&net, &ledger, &eval, args.step)?;
    result.write_csv(fs::File::create(&args.out)?)?;
    let best = result.selected();
    println!(
        "ramp stopped after {} points; kept sparsity {:.4} at accuracy {:.4}; curve at {}",
        result.entries.len(),
        best.achieved_sparsity,
        best.accuracy,
        args.out.display()
    );
    if let Some(out_model) = &args.out_model {
        let mut selected = net.clone();
        selected.apply_mask(&result.selected_mask)?;
        save_model(&selected, out_model)?;
        println!("selected model at {}", out_model.display());
    }
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = data_spec::load(&args.data, args.seed, Provenance::Target)?;
    let eval = match &args.eval {
        Some(spec) => data_spec::load(spec, args.seed.wrapping_add(1), Provenance::Target)?,
        None => data.clone(),
    };
    let cfg = BaselineConfig {
        method: args.method.clone(),
        train: TrainConfig {
            learning_rate: args.lr,
            batch_size: args.batch,
            epochs: args.epochs,
        },
        rank_fraction: args.rank_fraction,
        sparsity: args.sparsity,
        seed: args.seed,
    };
    let outcome = strategy::create(&args.method, cfg)?.adapt(&net, &data, &eval)?;
    let target_accuracy = evaluate_accuracy(&outcome.network, &eval)?;
    let source_accuracy = evaluate_accuracy(&net, &eval)?;

    let mut report = if args.out.exists() {
        ExperimentReport::from_csv(&fs::read_to_string(&args.out)?)?
    } else {
        ExperimentReport::new()
    };
    // The data-free controls are extensions beyond the headline comparison
    // set; their rows carry a distinct experiment tag.
    let experiment = match args.method.as_str() {
        "magnitude" | "random" => "baseline-control",
        _ => "baseline",
    };
    report.push(ReportRow {
        experiment: experiment.into(),
        method: args.method.clone(),
        fold: 0,
        sparsity: outcome.sparsity,
        target_accuracy,
        source_accuracy,
        macs: outcome.adapt_macs,
        memory: outcome.memory_units,
        seed: args.seed,
    });
    report.write_csv(fs::File::create(&args.out)?)?;
    println!(
        "{}: accuracy {:.4} (source {:.4}) at sparsity {:.4}; row appended to {}",
        args.method,
        target_accuracy,
        source_accuracy,
        outcome.sparsity,
        args.out.display()
    );
    if let Some(out_model) = &args.out_model {
        save_model(&outcome.network, out_model)?;
        println!("adapted model at {}", out_model.display());
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = match args.kind {
        ExperimentKind::ClassCount => ExperimentConfig::class_count_with_seed(args.seed),
        _ => ExperimentConfig::with_seed(args.seed),
    };
    cfg.folds = args.folds;
    if let Some(v) = args.grid_step {
        cfg.grid_step = v;
    }
    if let Some(v) = args.classes {
        cfg.source_classes = v;
    }
    if let Some(v) = args.dim {
        cfg.input_dim = v;
    }
    if let Some(v) = args.per_class {
        cfg.source_per_class = v;
    }
    if let Some(v) = args.target_per_class {
        cfg.target_per_class = v;
    }
    if let Some(h) = &args.hidden {
        cfg.hidden = parse_widths(h)?;
    }
    if let Some(v) = args.source_epochs {
        cfg.source_train.epochs = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.radius {
        cfg.center_radius = v;
    }
    cfg.perturb = args.perturb;

    let report = match args.kind {
        ExperimentKind::Sparsity => experiment_sparsity_curve(&cfg)?,
        ExperimentKind::DataEfficiency => experiment_data_efficiency(&cfg)?,
        ExperimentKind::ClassCount => experiment_class_count(&cfg)?,
    };
    report.write_csv(fs::File::create(&args.out)?)?;
    println!("{} rows at {}", report.len(), args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = ExperimentReport::from_csv(&fs::read_to_string(&args.data)?)?;
    print!("{}", report.summarize());
    Ok(())
}

/// "start:stop:step" -> inclusive grid.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!(
            "grid {spec:?} must be start:stop:step"
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Parse(format!("grid component {s:?} is not a number")))
    };
    let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if step <= 0.0 || stop < start {
        return Err(Error::Parse(format!("grid {spec:?} is not increasing")));
    }
    let mut grid = Vec::new();
    let mut i = 0usize;
    loop {
        let t = ((start + i as f64 * step) * 1e9).round() / 1e9;
        if t > stop + 1e-9 {
            break;
        }
        grid.push(t);
        i += 1;
    }
    Ok(grid)
}

fn parse_widths(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("hidden width {tok:?} is not an integer")))
        })
        .collect()
}

/// "mlp:<h1,h2,...>" or "lenet".
fn build_arch(arch: &str, input_shape: &Shape, classes: usize) -> Result<Vec<LayerSpec>> {
    if let Some(widths) = arch.strip_prefix("mlp:") {
        let hidden = parse_widths(widths)?;
        let mut layers = Vec::new();
        if input_shape.rank() > 1 {
            layers.push(LayerSpec::Flatten);
        }
        layers.extend(mlp_layers(input_shape.elem_count(), &hidden, classes));
        return Ok(layers);
    }
    if arch == "lenet" {
        if input_shape.rank() != 3 {
            return Err(Error::InvalidArgument(format!(
                "lenet needs channel x height x width input, got {input_shape}"
            )));
        }
        let mut layers = vec![
            LayerSpec::Conv2d {
                in_channels: input_shape.dims()[0],
                out_channels: 6,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
                padding: 2,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv2d {
                in_channels: 6,
                out_channels: 12,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
        ];
        // Walk the shape to size the classifier.
        let mut shape = input_shape.clone();
        for spec in &layers {
            shape = spec.output_shape(&shape)?;
        }
        layers.push(LayerSpec::Dense {
            in_features: shape.elem_count(),
            out_features: classes,
        });
        return Ok(layers);
    }
    Err(Error::InvalidArgument(format!(
        "unknown architecture {arch:?} (expected mlp:<widths> or lenet)"
    )))
}
