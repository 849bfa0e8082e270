use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use treeic::config::RunConfig;
use treeic::dataset::{MissingScheme, Preprocess};
use treeic::metrics::evaluate;
use treeic::mpt::enumerate_patterns;
use treeic::numkernel::RngStream;
use treeic::runner;
use treeic::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "treeic", about = "Imputation-free incomplete multi-view clustering", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate over the configured seeds.
    Run(RunArgs),
    /// Loss and model ablations with shared masks.
    Ablate(RunArgs),
    /// One full run per tau value.
    TauSweep(TauSweepArgs),
    /// Generate a synthetic multi-view dataset.
    Synth(SynthArgs),
    /// Print the retained missing patterns for V views at a given tau.
    Patterns(PatternsArgs),
    /// Score a predictions file against ground-truth labels.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated per-view feature CSVs.
    #[arg(long, value_delimiter = ',', required = true)]
    views: Vec<PathBuf>,
    /// Ground-truth labels CSV (one integer per line).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    /// Missing rate in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Upper bound for the adaptive tau (default min(V, 6)).
    #[arg(long)]
    tau_max: Option<usize>,
    /// Fixed tau, bypassing the adaptive rule.
    #[arg(long)]
    tau: Option<usize>,
    /// Epochs between ensemble refreshes.
    #[arg(long, default_value_t = 100)]
    interval: usize,
    #[arg(long, default_value_t = 0.01)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda2: f64,
    /// InfoNCE temperature.
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[arg(long, default_value_t = 200)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 700)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 128)]
    embed_dim: usize,
    /// Comma-separated encoder hidden widths.
    #[arg(long, value_delimiter = ',', default_value = "500,500,2000")]
    hidden_dims: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Feature scaling: none, minmax, or zscore.
    #[arg(long, default_value = "minmax")]
    preprocess: String,
    /// Missing simulation scheme: count-uniform or pattern-uniform.
    #[arg(long, default_value = "count-uniform")]
    missing_scheme: String,
    /// Skip one header line in the view CSVs.
    #[arg(long)]
    header: bool,
    /// Permit tau = 1 (single-view decision sets).
    #[arg(long)]
    allow_singleton_views: bool,
    #[arg(long)]
    no_mpt: bool,
    #[arg(long)]
    no_mde: bool,
    #[arg(long)]
    no_cons: bool,
    #[arg(long)]
    no_disc: bool,
    /// Reuse an exact availability mask instead of simulating one.
    #[arg(long)]
    mask_file: Option<PathBuf>,
    /// Write per-group decision CSVs into this directory.
    #[arg(long)]
    dump_groups: Option<PathBuf>,
    /// Write the fused ensemble decision to this file.
    #[arg(long)]
    dump_ensemble: Option<PathBuf>,
    /// Output directory for report.json and predictions.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TauSweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated tau values to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    taus: Vec<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Number of views.
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long, default_value_t = 20)]
    view_dim: usize,
    #[arg(long, default_value_t = 8)]
    latent_dim: usize,
    /// Minimum center distance in blob-sigma units.
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Per-view noise growth factor (view v gets noise * spread^v).
    #[arg(long, default_value_t = 1.0)]
    noise_spread: f64,
    /// Latent dims visible per view; omit for full visibility.
    #[arg(long)]
    view_span: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for view_{i}.csv and labels.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PatternsArgs {
    /// Number of views.
    #[arg(long)]
    views: usize,
    #[arg(long)]
    tau: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// predictions.csv produced by `run` (sample_id,label with header).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels CSV (one integer per line).
    #[arg(long)]
    labels: PathBuf,
}

fn parse_preprocess(s: &str) -> treeic::Result<Preprocess> {
    match s {
        "none" => Ok(Preprocess::None),
        "minmax" => Ok(Preprocess::MinMax),
        "zscore" => Ok(Preprocess::ZScore),
        other => Err(treeic::Error::Contract(format!(
            "unknown preprocess '{other}' (expected none|minmax|zscore)"
        ))),
    }
}

fn parse_scheme(s: &str) -> treeic::Result<MissingScheme> {
    match s {
        "count-uniform" => Ok(MissingScheme::CountUniform),
        "pattern-uniform" => Ok(MissingScheme::PatternUniform),
        other => Err(treeic::Error::Contract(format!(
            "unknown missing scheme '{other}' (expected count-uniform|pattern-uniform)"
        ))),
    }
}

fn to_config(a: &RunArgs) -> treeic::Result<RunConfig> {
    Ok(RunConfig {
        views: a.views.clone(),
        labels: a.labels.clone(),
        k: a.k,
        rho: a.rho,
        seeds: a.seeds.clone(),
        tau_max: a.tau_max,
        tau: a.tau,
        interval: a.interval,
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        temperature: a.temp,
        pretrain_epochs: a.pretrain_epochs,
        epochs: a.epochs,
        batch: a.batch,
        embed_dim: a.embed_dim,
        hidden_dims: a.hidden_dims.clone(),
        lr: a.lr,
        preprocess: parse_preprocess(&a.preprocess)?,
        missing_scheme: parse_scheme(&a.missing_scheme)?,
        header: a.header,
        allow_singleton_views: a.allow_singleton_views,
        no_mpt: a.no_mpt,
        no_mde: a.no_mde,
        no_cons: a.no_cons,
        no_disc: a.no_disc,
        mask_file: a.mask_file.clone(),
        out: a.out.clone(),
        dump_groups: a.dump_groups.clone(),
        dump_ensemble: a.dump_ensemble.clone(),
    })
}

fn write_matrix_csv(path: &PathBuf, m: &treeic::Matrix) -> treeic::Result<()> {
    let mut f = File::create(path).map_err(|e| treeic::Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(f, "{}", line.join(",")).map_err(|e| treeic::Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}

fn read_predictions(path: &PathBuf) -> treeic::Result<Vec<usize>> {
    let f = File::open(path).map_err(|e| treeic::Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| treeic::Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("sample_id")) {
            continue;
        }
        let label = line.rsplit(',').next().unwrap_or(line);
        let y: usize = label.trim().parse().map_err(|_| treeic::Error::Load {
            file: path.display().to_string(),
            line: lineno + 1,
            msg: format!("bad label '{label}'"),
        })?;
        out.push(y);
    }
    Ok(out)
}

fn read_labels(path: &PathBuf) -> treeic::Result<Vec<usize>> {
    let f = File::open(path).map_err(|e| treeic::Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut raw: Vec<i64> = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| treeic::Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let y: i64 = line
            .parse::<f64>()
            .map(|v| v as i64)
            .map_err(|_| treeic::Error::Load {
                file: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad label '{line}'"),
            })?;
        raw.push(y);
    }
    let mut distinct = raw.clone();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(raw
        .iter()
        .map(|v| distinct.binary_search(v).unwrap())
        .collect())
}

fn execute(cli: Cli) -> treeic::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = to_config(&args)?;
            let report = runner::run(&cfg)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| treeic::Error::Pipeline(e.to_string()))?;
            println!("{json}");
        }
        Command::Ablate(args) => {
            let cfg = to_config(&args)?;
            let report = runner::ablate(&cfg)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| treeic::Error::Pipeline(e.to_string()))?;
            println!("{json}");
        }
        Command::TauSweep(args) => {
            let cfg = to_config(&args.run)?;
            let report = runner::tau_sweep(&cfg, &args.taus)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| treeic::Error::Pipeline(e.to_string()))?;
            println!("{json}");
        }
        Command::Synth(args) => {
            let cfg = SynthConfig {
                n: args.n,
                k: args.k,
                views: args.views,
                view_dim: args.view_dim,
                latent_dim: args.latent_dim,
                separation: args.separation,
                noise: args.noise,
                noise_spread: args.noise_spread,
                view_span: args.view_span,
            };
            let mut rng = RngStream::new(args.seed);
            let ds = generate(&cfg, &mut rng);
            std::fs::create_dir_all(&args.out).map_err(|e| treeic::Error::Io {
                path: args.out.display().to_string(),
                source: e,
            })?;
            for (v, m) in ds.views.iter().enumerate() {
                write_matrix_csv(&args.out.join(format!("view_{v}.csv")), m)?;
            }
            let labels = ds.labels.as_ref().expect("synth always labeled");
            let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
            let path = args.out.join("labels.csv");
            std::fs::write(&path, text).map_err(|e| treeic::Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            println!(
                "{{\"n\": {}, \"k\": {}, \"views\": {}, \"out\": \"{}\"}}",
                args.n,
                args.k,
                args.views,
                args.out.display()
            );
        }
        Command::Patterns(args) => {
            let pset = enumerate_patterns(args.views, args.tau)?;
            for p in &pset.patterns {
                let bits: Vec<String> = p.iter().map(|b| b.to_string()).collect();
                println!("{}", bits.join(""));
            }
            println!("count: {}", pset.patterns.len());
        }
        Command::Eval(args) => {
            let pred = read_predictions(&args.pred)?;
            let truth = read_labels(&args.labels)?;
            let result = evaluate(&pred, &truth)?;
            let json = serde_json::to_string_pretty(&result)
                .map_err(|e| treeic::Error::Pipeline(e.to_string()))?;
            println!("{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj = serde_json::json!({ "error": e.to_string() });
            eprintln!("{obj}");
            ExitCode::FAILURE
        }
    }
}
