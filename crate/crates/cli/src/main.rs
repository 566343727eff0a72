use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pseudoalign::artifacts::{read_clusters, read_split};
use pseudoalign::pipeline::{
    load_dam, prepare_dataset, run_pipeline, stage_cluster, stage_match, stage_report,
    stage_train_dam, RunReport,
};
use pseudoalign::report::render_purity_table;
use pseudoalign::{Error, ErrorKind, PipelineConfig};

/// Cluster embeddings, align clusters across domains, and match pseudo-labels
/// to the classes of a small labeled set.
#[derive(Parser)]
#[command(name = "pseudoalign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all outputs.
    Run(Overrides),
    /// K-means over the dataset; writes clusters.csv and centroids.csv.
    Cluster(Overrides),
    /// Split confident cluster members and train the adaptation network.
    TrainDam(Overrides),
    /// Iterative label matching from the saved clusters and network.
    Match(Overrides),
    /// Purity of centroid-nearest subsets at each configured size.
    Report(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cold-start confidence threshold is 1 - alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Remap confidence threshold is 1 - alpha-prime.
    #[arg(long)]
    alpha_prime: Option<f64>,
    /// Source share of each cluster's confident subset.
    #[arg(long)]
    ratio: Option<f64>,
    /// Confident samples kept per cluster.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    labels_per_class: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> pseudoalign::Result<PipelineConfig> {
        // An unreadable config file is a configuration problem, whatever the cause.
        let mut cfg = PipelineConfig::load(&self.config).map_err(|e| match e {
            Error::Config(_) => e.in_stage("config"),
            other => Error::Config(other.to_string()).in_stage("config"),
        })?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(alpha) = self.alpha_prime {
            cfg.alpha_prime = alpha;
        }
        if let Some(ratio) = self.ratio {
            cfg.ratio = ratio;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(n) = self.labels_per_class {
            cfg.labels_per_class = Some(n);
        }
        cfg.validate().map_err(|e| e.in_stage("config"))?;
        Ok(cfg)
    }
}

fn print_run(report: &RunReport) {
    for (key, value) in &report.summary {
        println!("{key:<16} {value}");
    }
    println!("outputs in {}", report.out.display());
}

fn execute(command: Command) -> Result<()> {
    let (args, stage) = match &command {
        Command::Run(a) => (a, "data"),
        Command::Cluster(a) => (a, "cluster"),
        Command::TrainDam(a) => (a, "train-dam"),
        Command::Match(a) => (a, "match"),
        Command::Report(a) => (a, "report"),
    };
    let cfg = args.resolve()?;
    if let Command::Run(_) = command {
        print_run(&run_pipeline(&cfg)?);
        return Ok(());
    }

    let ds = prepare_dataset(&cfg).map_err(|e| e.in_stage(stage))?;
    let clusters = || read_clusters(&cfg.out, &ds).map_err(|e| e.in_stage(stage));
    match command {
        Command::Run(_) => unreachable!(),
        Command::Cluster(_) => {
            let cm = stage_cluster(&cfg, &ds)?;
            println!(
                "{} clusters over {} samples, inertia {:.6}",
                cm.k(),
                ds.len(),
                cm.inertia(&ds)
            );
        }
        Command::TrainDam(_) => {
            let cm = clusters()?;
            let (split, trained) = stage_train_dam(&cfg, &ds, &cm)?;
            let last = trained.trace.last().expect("at least one epoch");
            println!(
                "source {} target {}, final losses cls {:.6} dom {:.6}",
                split.source().len(),
                split.target().len(),
                last.loss_cls,
                last.loss_dom
            );
        }
        Command::Match(_) => {
            let cm = clusters()?;
            let split = read_split(&cfg.out, cm.k(), cfg.split, cfg.ratio)
                .map_err(|e| e.in_stage(stage))?;
            let dam = load_dam(&cfg).map_err(|e| e.in_stage(stage))?;
            print_run(&stage_match(&cfg, &ds, &cm, &split, &dam)?);
        }
        Command::Report(_) => {
            let cm = clusters()?;
            let (rows, skipped) = stage_report(&cfg, &ds, &cm)?;
            print!("{}", render_purity_table(&rows));
            if !skipped.is_empty() {
                eprintln!(
                    "warning: skipped subset sizes {skipped:?}: larger than the smallest cluster"
                );
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Divergence) => 4,
        Some(ErrorKind::ColdStart) => 5,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
