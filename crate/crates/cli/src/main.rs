use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcnmf::data::{generate_synthetic, load_dataset, write_dataset, write_results, SyntheticSpec};
use gcnmf::experiment::{format_summary, result_rows, run_plan, run_timing, summarize, ExperimentPlan, Method};
use gcnmf::gmm::EmInit;
use gcnmf::impute::MeanAxis;
use gcnmf::mask::MissingPattern;
use gcnmf::model::TrainConfig;

/// Experiments with graph convolutional networks on incomplete node features.
#[derive(Parser)]
#[command(name = "gcnmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep patterns × missing rates × methods over mask instances and seeds.
    Run(RunArgs),
    /// Time the phases of a single run.
    Timing(TimingArgs),
    /// Write a synthetic stochastic-block-model dataset.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EmInitArg {
    Marginal,
    MeanImputed,
}

#[derive(Args)]
struct TrainArgs {
    /// Gaussian components in the feature mixture.
    #[arg(long = "k-components", default_value_t = 5)]
    k: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    /// Apply weight decay to every layer instead of the first only.
    #[arg(long)]
    decay_all: bool,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 100)]
    patience: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, value_enum, default_value = "marginal")]
    em_init: EmInitArg,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_dims: self.hidden.clone(),
            k: self.k,
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            decay_all_weights: self.decay_all,
            dropout: self.dropout,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            em_init: match self.em_init {
                EmInitArg::Marginal => EmInit::Marginal,
                EmInitArg::MeanImputed => EmInit::MeanImputed,
            },
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory (edges.tsv, features.tsv, labels.tsv, split.json, meta).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "uniform")]
    pattern: Vec<MissingPattern>,
    /// Missing rates, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    mr: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "gcnmf,mean+gcn")]
    method: Vec<Method>,
    /// Mask instances per (pattern, mr).
    #[arg(long, default_value_t = 5)]
    instances: usize,
    /// Training seeds per mask instance.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Axis for mean imputation.
    #[arg(long, default_value = "row")]
    mean_axis: MeanAxis,
    /// Neighbours for knn+gcn.
    #[arg(long, default_value_t = 5)]
    knn: usize,
    /// Plan seed all mask and training seeds derive from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results CSV; one row per run.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "gcnmf")]
    method: Method,
    #[arg(long, default_value = "uniform")]
    pattern: MissingPattern,
    #[arg(long, default_value_t = 0.5)]
    mr: f64,
    #[arg(long, default_value_t = 5)]
    knn: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 30)]
    features: usize,
    #[arg(long, default_value_t = 0.1)]
    intra_p: f64,
    #[arg(long, default_value_t = 0.01)]
    inter_p: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    train_per_class: usize,
    #[arg(long, default_value_t = 30)]
    val_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: RunArgs) -> gcnmf::Result<bool> {
    let ds = load_dataset(&args.dataset)?;
    let plan = ExperimentPlan {
        patterns: args.pattern,
        mrs: args.mr,
        methods: args.method,
        mask_instances: args.instances,
        seeds_per_instance: args.seeds,
        config: args.train.config(args.seed),
        knn_k: args.knn,
        mean_axis: args.mean_axis,
        seed: args.seed,
    };
    plan.validate()?;
    log::info!("{}: {} runs", ds.name, plan.num_runs());
    let outcomes = run_plan(&ds, &plan)?;
    let mut ok = true;
    for o in &outcomes {
        if let Err(e) = &o.result {
            ok = false;
            log::error!("{} {} mr={} instance {} seed {}: {e}", o.spec.method, o.spec.pattern, o.spec.mr, o.spec.instance, o.seed);
        }
    }
    if let Some(path) = &args.out {
        let rows = result_rows(&ds.name, &outcomes);
        write_results(BufWriter::new(File::create(path)?), &rows)?;
    }
    print!("{}", format_summary(&summarize(&plan, &outcomes)));
    Ok(ok)
}

fn timing(args: TimingArgs) -> gcnmf::Result<bool> {
    let ds = load_dataset(&args.dataset)?;
    let cfg = args.train.config(args.seed);
    cfg.validate()?;
    let t = run_timing(&ds, args.method, args.pattern, args.mr, &cfg, args.knn)?;
    println!("method\t{}", args.method);
    println!("impute_s\t{:.4}", t.impute_s);
    println!("em_init_s\t{:.4}", t.em_init_s);
    println!("train_s\t{:.4}", t.train_s);
    println!("total_s\t{:.4}", t.total_s);
    println!("epochs\t{}", t.epochs);
    println!("em_fraction\t{:.3}", t.em_fraction());
    Ok(true)
}

fn generate(args: GenerateArgs) -> gcnmf::Result<bool> {
    let ds = generate_synthetic(&SyntheticSpec {
        nodes: args.nodes,
        clusters: args.clusters,
        feature_dim: args.features,
        intra_p: args.intra_p,
        inter_p: args.inter_p,
        feature_noise: args.noise,
        seed: args.seed,
        train_per_class: args.train_per_class,
        val_per_class: args.val_per_class,
    })?;
    write_dataset(&ds, &args.out)?;
    println!("{}: {} nodes, {} edges -> {}", ds.name, ds.num_nodes(), ds.graph.num_edges(), args.out.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Timing(a) => timing(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
