mod config;
mod render;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relex::evaluation::{run_suite, train_repetition, Artifacts};
use relex::{BlobConfig, EvaluationReport, MetricId, TestKind};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] relex::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "relex", version, about = "Evaluate relevance metrics for similarity-based explanation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory that relative output paths are written under.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic blob dataset as CSV.
    GenData(GenDataArgs),
    /// Train the first repetition's model and save it.
    Train,
    /// Run the evaluation suite and save the report.
    Evaluate(EvaluateArgs),
    /// Render a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 1)]
    subclusters: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 10.0)]
    spread: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Relabel into two random superclasses and add a subclass column.
    #[arg(long)]
    superclass: bool,
    /// Output file.
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Comma-separated metric tokens; overrides the config.
    #[arg(long)]
    metrics: Option<String>,
    /// Comma-separated test names; overrides the config.
    #[arg(long)]
    tests: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Rows marked in each test block.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    path: PathBuf,
    /// Rows marked in each test block.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELEX_LOG", "warn"))
        .format_timestamp(None)
        .init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData(args) => gen_data(cli, args),
        Command::Train => train(cli),
        Command::Evaluate(args) => evaluate(cli, args),
        Command::Report(args) => {
            let report = EvaluationReport::load(&args.path)
                .map_err(|e| CliError::Config(format!("{}: {e}", args.path.display())))?;
            print!("{}", render::render(&report, args.top));
            Ok(())
        }
    }
}

fn output_path(cli: &Cli, path: &Path) -> Result<PathBuf, CliError> {
    let path = match &cli.output {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(path)
}

/// Prints a generated path; each is announced exactly once.
fn announce(path: &Path) {
    println!("{}", path.display());
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.suite.master_seed = seed;
    }
    Ok(cfg)
}

fn gen_data(cli: &Cli, args: &GenDataArgs) -> Result<(), CliError> {
    let blobs = BlobConfig {
        original_class_count: args.classes,
        subclusters_per_class: args.subclusters,
        dim: args.dim,
        per_class_count: args.per_class,
        center_spread: args.spread,
        noise_sigma: args.noise,
    };
    blobs.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let seed = cli.seed.unwrap_or(0);
    let mut data = blobs.generate(seed)?;
    if args.superclass {
        data = data.make_superclass(relex::seed::derive(seed, 0, relex::seed::Stream::Superclass))?;
    }
    let path = output_path(cli, &args.out)?;
    data.write_csv(&path)?;
    announce(&path);
    Ok(())
}

fn train(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let data = cfg.load_dataset()?;
    let trained = train_repetition(&cfg.suite_config(), &data, 0)?;
    let path = output_path(cli, &cfg.output.model)?;
    trained.model.save(&path)?;
    println!(
        "final_train_loss={:.6} train_accuracy={:.4} test_accuracy={:.4}",
        trained.final_loss,
        trained.model.accuracy(&trained.train)?,
        trained.model.accuracy(&trained.test)?
    );
    announce(&path);
    Ok(())
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    let config_err = |e: relex::Error| CliError::Config(e.to_string());
    if let Some(m) = &args.metrics {
        cfg.suite.metrics = MetricId::parse_list(m).map_err(config_err)?;
    }
    if let Some(t) = &args.tests {
        cfg.suite.tests = TestKind::parse_list(t).map_err(config_err)?;
    }
    if let Some(r) = args.repetitions {
        cfg.suite.repetitions = r;
    }
    if let Some(k) = args.k {
        cfg.suite.k = k;
    }
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let report = run_suite(&cfg.suite_config(), &data)?;

    print!("{}", render::render(&report, args.top));
    let path = output_path(cli, &cfg.output.report)?;
    report.save(&path)?;
    announce(&path);
    write_artifacts(cli, &cfg, &report.artifacts)?;

    if report.cells.iter().all(|c| c.values.is_empty()) {
        return Err(CliError::Core(relex::Error::Numerical("no cell produced a value".into())));
    }
    Ok(())
}

fn write_artifacts(cli: &Cli, cfg: &RunConfig, artifacts: &Artifacts) -> Result<(), CliError> {
    if artifacts.norms.is_empty() && artifacts.residuals.is_empty() {
        return Ok(());
    }
    let dir = output_path(cli, &cfg.output.analysis_dir.join("analysis.json"))?;
    let dir = dir.parent().map(Path::to_path_buf).unwrap_or_default();
    for rec in &artifacts.norms {
        let name = format!("norms_{}_rep{}.csv", rec.metric.to_string().replace('@', "_"), rec.repetition);
        let groups = [("all", &rec.analysis.all), ("selected", &rec.analysis.selected)];
        write_groups(&dir.join(name), &groups)?;
    }
    for rec in &artifacts.residuals {
        let a = &rec.analysis;
        let groups = [
            ("same_gc", &a.same_gc),
            ("same_residual_cos", &a.same_residual_cos),
            ("diff_gc", &a.diff_gc),
            ("diff_residual_cos", &a.diff_residual_cos),
        ];
        write_groups(&dir.join(format!("residual_rep{}.csv", rec.repetition)), &groups)?;
    }
    let json = dir.join("analysis.json");
    fs::write(&json, serde_json::to_string_pretty(artifacts).map_err(relex::Error::from)? + "\n")?;
    announce(&json);
    Ok(())
}

fn write_groups(path: &Path, groups: &[(&str, &Vec<f64>)]) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "value,group")?;
    for (name, values) in groups {
        for v in values.iter() {
            writeln!(out, "{v:?},{name}")?;
        }
    }
    out.flush()?;
    announce(path);
    Ok(())
}
