//! `ablab` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numeric
//! failure. Failures print one diagnostic line on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ablab::experiment::{constant_sweep, parse_grid, run_sweep, SweepConfig};
use ablab::instrument::{parse_neuron_spec, NeuronId};
use ablab::model::{load_weights, save_weights, ModelConfig};
use ablab::report::{histogram_svg, write_constant_curve, write_sweep};
use ablab::stats::{HistogramSpec, NeuronStats};
use ablab::strategies::{build_plan, collect_stats, DatasetRef, Method};
use ablab::trainer::{train, TrainConfig, TrainReport};
use ablab::workers::default_workers;
use ablab::{Error, ErrorClass, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ablab", version, about = "Attention-neuron ablation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a byte-level model on a text corpus.
    Train(TrainArgs),
    /// Collect per-neuron activation statistics and histograms.
    Stats(StatsArgs),
    /// Plot one neuron's activation histogram from a stats directory.
    Hist(HistArgs),
    /// Build an ablation plan and write it as JSON.
    Plan(PlanArgs),
    /// Run the pruning-fraction sweep.
    Sweep(SweepArgs),
    /// Evaluate cross-entropy with neurons pinned to each constant of a grid.
    ConstSweep(ConstSweepArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3e-4)]
    lr: f32,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 128)]
    seq_len: usize,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f32,
    #[arg(long, default_value_t = 0.02)]
    init_scale: f32,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    grad_clip: f32,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 128)]
    d_model: usize,
    #[arg(long, default_value_t = 256)]
    max_seq: usize,
    #[arg(long, default_value_t = 4)]
    mlp_ratio: usize,
    /// Compute per-sequence gradients on worker threads.
    #[arg(long)]
    parallel: bool,
    /// Also write a JSON training report (config, hashes, loss curve).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct HistArgsSpec {
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    hi: f64,
}

impl HistArgsSpec {
    fn spec(&self) -> Result<HistogramSpec> {
        HistogramSpec::new(self.epsilon, self.lo, self.hi)
    }
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hist: HistArgsSpec,
    /// Sequence length for chunking the data; model max_seq if omitted.
    #[arg(long)]
    seq_len: Option<usize>,
    /// Use at most this many tokens of the data.
    #[arg(long)]
    max_tokens: Option<usize>,
}

#[derive(Args, Debug)]
struct HistArgs {
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    layer: usize,
    #[arg(long)]
    neuron: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    weights: PathBuf,
    /// Statistics dataset (required for mean and peak).
    #[arg(long)]
    data: Option<PathBuf>,
    /// `all`, `layer:L`, or `L:N,L:N,...`
    #[arg(long, default_value = "all")]
    neurons: String,
    #[arg(long)]
    out: PathBuf,
    /// Seed for the resample input.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Resample input length; model max_seq if omitted.
    #[arg(long)]
    bank_length: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[command(flatten)]
    hist: HistArgsSpec,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    /// Statistics dataset for mean and peak, ideally disjoint from --eval.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "zero,mean,peak,rs1,rs2,rs3")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// `start:end:step`
    #[arg(long, default_value = "0:1:0.1")]
    fractions: String,
    #[arg(long, default_value_t = 10_000)]
    eval_tokens: usize,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    bank_length: Option<usize>,
    #[command(flatten)]
    hist: HistArgsSpec,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConstSweepArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    #[arg(long, default_value = "all")]
    neurons: String,
    /// `lo:hi:step`
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 10_000)]
    eval_tokens: usize,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn dataset(path: &Path, config: &ModelConfig, seq_len: Option<usize>, max_tokens: usize) -> Result<DatasetRef> {
    DatasetRef::from_bytes(&read(path)?, seq_len.unwrap_or(config.max_seq), max_tokens, config)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let model = ModelConfig {
        n_layers: a.layers,
        n_heads: a.heads,
        d_model: a.d_model,
        max_seq: a.max_seq,
        mlp_ratio: a.mlp_ratio,
        ..Default::default()
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        steps: a.steps,
        batch_size: a.batch_size,
        seq_len: a.seq_len,
        init_scale: a.init_scale,
        seed: a.seed,
        grad_clip: (a.grad_clip > 0.0).then_some(a.grad_clip),
        parallel: a.parallel,
        ..Default::default()
    };
    let corpus = read(&a.corpus)?;
    let (weights, curve) = train(&corpus, model, &cfg)?;
    save_weights(&weights, &a.out)?;
    let final_loss = curve.last();
    if let Some(path) = &a.report {
        let report = TrainReport {
            model,
            train: cfg,
            corpus_hash: ablab::model::blob_hash(&corpus),
            weights_hash: weights.content_hash(),
            final_loss,
            curve,
        };
        write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    eprintln!(
        "trained {} steps, final loss {:.4}, weights {}",
        cfg.steps,
        final_loss.unwrap_or(f32::NAN),
        a.out.display()
    );
    Ok(())
}

const STATS_FILE: &str = "stats.json";

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let weights = load_weights(&a.weights)?;
    let cfg = *weights.config();
    let data = dataset(&a.data, &cfg, a.seq_len, a.max_tokens.unwrap_or(usize::MAX))?;
    let stats = collect_stats(&weights, &data, &NeuronId::universe(&cfg), a.hist.spec()?, default_workers())?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write(&a.out.join(STATS_FILE), serde_json::to_string(&stats)?)?;

    let mut summary = String::from("layer,neuron,count,mean,peak,min,max,underflow,overflow\n");
    let hist_dir = a.out.join("hist");
    for (id, acc) in stats.iter() {
        let peak = acc.peak().map(|p| p.to_string()).unwrap_or_default();
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            id.layer,
            id.neuron,
            acc.count(),
            acc.mean()?,
            peak,
            acc.min().unwrap_or(f32::NAN),
            acc.max().unwrap_or(f32::NAN),
            acc.underflow(),
            acc.overflow()
        ));
        let export = acc.export_histogram();
        let csv = export.to_csv(export.occupied())?;
        write(&hist_dir.join(format!("L{}_N{}.csv", id.layer, id.neuron)), csv)?;
    }
    write(&a.out.join("summary.csv"), summary)?;
    eprintln!("statistics over {} tokens written to {}", data.token_count(), a.out.display());
    Ok(())
}

fn cmd_hist(a: HistArgs) -> Result<()> {
    let path = a.stats.join(STATS_FILE);
    let stats: NeuronStats = serde_json::from_slice(&read(&path)?)?;
    let id = NeuronId::new(a.layer, a.neuron);
    let acc = stats
        .get(id)
        .ok_or_else(|| Error::Config(format!("neuron {id} not present in {}", path.display())))?;
    let title = format!("layer {} neuron {} ({} activations)", a.layer, a.neuron, acc.count());
    write(&a.out, histogram_svg(&acc.export_histogram(), &title))
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let weights = load_weights(&a.weights)?;
    let cfg = *weights.config();
    let neurons = parse_neuron_spec(&a.neurons, &cfg)?;
    let data = match (&a.data, a.method.needs_dataset()) {
        (Some(p), true) => Some(dataset(p, &cfg, a.seq_len, usize::MAX)?),
        (None, true) => return Err(Error::Config(format!("--data is required for {} plans", a.method))),
        _ => None,
    };
    let plan = build_plan(
        &weights,
        a.method,
        &neurons,
        data.as_ref(),
        a.hist.spec()?,
        a.bank_length.unwrap_or(cfg.max_seq),
        a.seed,
        default_workers(),
    )?;
    write(&a.out, plan.to_json()? + "\n")
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let weights = load_weights(&a.weights)?;
    let cfg = *weights.config();
    let sweep = SweepConfig {
        fractions: parse_grid(&a.fractions)?,
        seeds: a.seeds,
        methods: a.methods,
        eval_tokens: a.eval_tokens,
        seq_len: a.seq_len,
        histogram: a.hist.spec()?,
        bank_length: a.bank_length,
    };
    sweep.validate()?;
    let eval = sweep.eval_set(&read(&a.eval)?, &cfg)?;
    let stats = match &a.data {
        Some(p) => Some(sweep.stats_set(&read(p)?, &cfg)?),
        None => None,
    };
    let out = run_sweep(&weights, &sweep, &eval, stats.as_ref(), default_workers())?;
    write_sweep(&a.out, &out)?;
    eprintln!("{} sweep rows written to {}", out.rows.len(), a.out.display());
    Ok(())
}

fn cmd_const_sweep(a: ConstSweepArgs) -> Result<()> {
    let weights = load_weights(&a.weights)?;
    let cfg = *weights.config();
    let neurons = parse_neuron_spec(&a.neurons, &cfg)?;
    let grid: Vec<f32> = parse_grid(&a.grid)?.into_iter().map(|c| c as f32).collect();
    let eval = dataset(&a.eval, &cfg, a.seq_len, a.eval_tokens)?;
    let points = constant_sweep(&weights, &neurons, &grid, &eval, default_workers())?;
    write_constant_curve(&a.out, &points)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Hist(a) => cmd_hist(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ConstSweep(a) => cmd_const_sweep(a),
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ablab: error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
