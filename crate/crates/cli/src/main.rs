use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dppcond_cli::config::{ExperimentConfig, ModeSelection, Overrides};
use dppcond_cli::corpus::CorpusSpec;
use dppcond_cli::describe::describe_json;
use dppcond_cli::factory_spec::parse_factory;
use dppcond_cli::run::{load_kernel, sample_to_file};
use dppcond_cli::{describe, gen_corpus, run, CliError, CliResult};

/// Conditional kernels of determinantal point processes: checks, corpora
/// and sampling.
#[derive(Debug, Parser)]
#[command(name = "dppcond", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the checks of an experiment config.
    Run(RunArgs),
    /// Write a random kernel corpus and its manifest.
    GenCorpus(GenCorpusArgs),
    /// Summarize a kernel file or factory call.
    Describe(DescribeArgs),
    /// Draw samples from a kernel as JSON lines.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// exact, mc or both.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance override, KEY=VAL; may be repeated.
    #[arg(long = "tol-override", value_name = "KEY=VAL")]
    tol_override: Vec<String>,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    /// JSON corpus spec {seed, count, n_min, n_max, classes}; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Comma-separated classes, e.g. projection,eigenvalue=1.
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DescribeArgs {
    /// Kernel JSON file or factory call such as uniform_rank1(2).
    kernel: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Kernel JSON file or factory call.
    kernel: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    out: PathBuf,
}

fn kernel_argument(text: &str) -> CliResult<dppcond::KernelMatrix> {
    if Path::new(text).exists() {
        load_kernel(Path::new(text))
    } else if text.contains('(') || dppcond_cli::factory_spec::FACTORIES.iter().any(|(n, _)| *n == text) {
        Ok(parse_factory(text, None)?.build()?.0)
    } else {
        Err(CliError::Config(format!("{text:?} is neither a file nor a factory call")))
    }
}

fn absolute(path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        std::env::current_dir().map(|d| d.join(&path)).unwrap_or(path)
    }
}

fn run_command(args: RunArgs) -> CliResult<i32> {
    let mut config = ExperimentConfig::load(&args.config)?;
    let overrides = Overrides {
        seed: args.seed,
        trials: args.trials,
        mode: args.mode.as_deref().map(ModeSelection::parse).transpose()?,
        output_dir: args.out.map(absolute),
        tolerances: args.tol_override.iter().map(|t| Overrides::parse_tolerance(t)).collect::<CliResult<_>>()?,
    };
    config.apply(&overrides);
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    let outcome = run(&config, &base)?;
    let failed: Vec<_> = outcome.entries.iter().filter(|e| !e.result.pass).collect();
    println!(
        "{} results, {} failed; outputs in {}",
        outcome.entries.len(),
        failed.len(),
        outcome.output_dir.display()
    );
    for e in failed {
        println!(
            "FAIL {} [{}] on {}: statistic {:e} > tolerance {:e}",
            e.result.check_id,
            e.result.mode.as_str(),
            e.kernel,
            e.result.statistic,
            e.result.tolerance
        );
    }
    Ok(outcome.exit_code())
}

fn gen_corpus_command(args: GenCorpusArgs) -> CliResult<i32> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse corpus spec: {e}")))?
        }
        None => CorpusSpec { seed: 0, count: 0, n_min: 2, n_max: 8, classes: None },
    };
    if args.config.is_none() && args.seed.is_none() {
        return Err(CliError::Config("a corpus seed is required (--seed or --config)".into()));
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(c) = args.count {
        spec.count = c;
    }
    if let Some(n) = args.n_min {
        spec.n_min = n;
    }
    if let Some(n) = args.n_max {
        spec.n_max = n;
    }
    if let Some(c) = &args.classes {
        spec.classes = Some(c.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
    }
    let manifest = gen_corpus(&spec, &args.out)?;
    println!("wrote {} kernels to {}", manifest.entries.len(), args.out.display());
    Ok(0)
}

fn describe_command(args: DescribeArgs) -> CliResult<i32> {
    let k = kernel_argument(&args.kernel)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&describe_json(&k)).expect("serializes"));
    } else {
        println!("{}", describe(&k));
    }
    Ok(0)
}

fn sample_command(args: SampleArgs) -> CliResult<i32> {
    if args.trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    let k = kernel_argument(&args.kernel)?;
    let batch = sample_to_file(&k, args.seed, args.trials, &args.kernel, &args.out)?;
    println!("wrote {} samples to {}", batch.configs.len(), args.out.display());
    Ok(0)
}

fn configure_threads() -> CliResult<()> {
    if let Ok(value) = std::env::var("DPPCOND_THREADS") {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| CliError::Config(format!("DPPCOND_THREADS={value:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run(args) => run_command(args),
        Command::GenCorpus(args) => gen_corpus_command(args),
        Command::Describe(args) => describe_command(args),
        Command::Sample(args) => sample_command(args),
    });
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
