//! `secbandit`: run, sweep and analyze poisoned-bandit experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use secbandit::analysis::{scaling_reports, Metric, ScalingReport};
use secbandit::config::{expand_sweep, parse_config, to_toml, ConfigFile};
use secbandit::emit::{emit, read_summary_csv, CsvRow};
use secbandit::engine::{
    conservativeness_fuzz, fuzz_corpus, run_experiment, ExperimentConfig, TraceEmission,
};

const OUT_ENV: &str = "SECBANDIT_OUT";

#[derive(Parser)]
#[command(version, about = "Stochastic bandits under reward poisoning")]
struct Cli {
    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run(RunArgs),
    /// Expand the config's [sweep] grid and run every point.
    Sweep(RunArgs),
    /// Fit metric ~ a + b ln T over emitted summary CSVs.
    Analyze(AnalyzeArgs),
    /// UCB conservativeness check over a fuzzed script corpus.
    Conservativeness(ConservativenessArgs),
    /// Parse and validate configs without running anything.
    Validate {
        /// Config files to check.
        #[arg(long = "config", short, required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    Full,
    Summary,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory. Defaults to `$SECBANDIT_OUT/<config stem>`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Default output root when --out is not given.
    #[arg(long, env = OUT_ENV, default_value = "results")]
    out_root: PathBuf,
    /// Worker threads for trials (default: all cores).
    #[arg(long, short)]
    workers: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trace emission.
    #[arg(long, value_enum)]
    trace: Option<TraceArg>,
    /// Skip the SVG regret chart.
    #[arg(long)]
    no_chart: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Summary CSV files, or directories searched recursively for summary.csv.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "pseudo_regret")]
    metric: String,
    /// Fail (exit 3) when any group's r² is below this.
    #[arg(long)]
    min_r2: Option<f64>,
    /// Fail when any group's y_last / y_first exceeds this.
    #[arg(long)]
    max_ratio: Option<f64>,
    /// Fail when the linear-growth detector fires for any group.
    #[arg(long)]
    reject_linear: bool,
    /// Also write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ConservativenessArgs {
    /// Random and block scripts in addition to the three fixed ones.
    #[arg(long, default_value_t = 1000)]
    scripts: usize,
    #[arg(long, default_value_t = 30_000)]
    horizon: u64,
    #[arg(long, default_value_t = 2)]
    arms: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-checkpoint minimum counts as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn load(path: &Path) -> Result<ConfigFile, Failure> {
    parse_config(path)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Config)
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.trace {
        cfg.trace = match t {
            TraceArg::Full => TraceEmission::Full,
            TraceArg::Summary => TraceEmission::SummaryOnly,
        };
    }
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        let stem = args.config.file_stem().unwrap_or_default();
        args.out_root.join(stem)
    })
}

fn execute(cfg: &ExperimentConfig, dir: &Path, args: &RunArgs) -> Outcome {
    info!(
        "{} vs {}: T={} trials={} -> {}",
        cfg.learner.key(),
        cfg.attacker.key(),
        cfg.horizon,
        cfg.trials,
        dir.display()
    );
    let out = run_experiment(cfg, args.workers).map_err(runtime)?;
    let written = emit(dir, &out, cfg.trace, !args.no_chart).map_err(runtime)?;
    let resolved = to_toml(cfg).map_err(runtime)?;
    fs::write(dir.join("config.toml"), resolved).map_err(runtime)?;
    let regret = out
        .summary
        .final_row(Metric::PseudoRegret)
        .map(|r| r.mean)
        .unwrap_or(f64::NAN);
    println!(
        "{}: {} files, final mean pseudo-regret {regret:.3}",
        dir.display(),
        written.len() + 1
    );
    Ok(())
}

fn run(args: &RunArgs) -> Outcome {
    let file = load(&args.config)?;
    if file.sweep.as_ref().is_some_and(|s| !s.is_empty()) {
        warn!("ignoring [sweep] section; use `secbandit sweep` to expand it");
    }
    let mut cfg = file.experiment;
    apply_overrides(&mut cfg, args);
    execute(&cfg, &out_dir(args), args)
}

fn sweep(args: &RunArgs) -> Outcome {
    let file = load(&args.config)?;
    let Some(grid) = file.sweep.filter(|s| !s.is_empty()) else {
        return Err(Failure::Config(anyhow!(
            "{} has no [sweep] axes",
            args.config.display()
        )));
    };
    let mut base = file.experiment;
    apply_overrides(&mut base, args);
    let points = expand_sweep(&base, &grid)
        .context("expanding sweep")
        .map_err(Failure::Config)?;
    let root = out_dir(args);
    for p in &points {
        execute(&p.config, &root.join(&p.dir), args)?;
    }
    println!("{} grid points under {}", points.len(), root.display());
    Ok(())
}

fn collect_csvs(path: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                collect_csvs(&p, found)?;
            } else if p.file_name().is_some_and(|n| n == "summary.csv") {
                found.push(p);
            }
        }
    } else {
        found.push(path.to_path_buf());
    }
    Ok(())
}

fn describe(r: &ScalingReport) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    format!(
        "{} vs {} (B={}, C={}, kappa={}): {} over {:?} [{} pts] a={:.4} b={:.4} r2={:.4} rms={:.4} ratio={:.3} linear={}",
        r.learner,
        r.attacker,
        opt(r.budget.map(|b| b.to_string())),
        opt(r.contamination.map(|c| c.to_string())),
        opt(r.kappa.map(|k| k.to_string())),
        r.metric,
        r.axis,
        r.points.len(),
        r.fit.a,
        r.fit.b,
        r.fit.r_squared,
        r.fit.rms_residual,
        r.growth_ratio,
        r.linear
    )
}

fn analyze(args: &AnalyzeArgs) -> Outcome {
    let metric: Metric = args
        .metric
        .parse()
        .map_err(|e| Failure::Config(anyhow!("--metric: {e}")))?;
    let mut files = Vec::new();
    for input in &args.inputs {
        collect_csvs(input, &mut files).map_err(runtime)?;
    }
    if files.is_empty() {
        return Err(runtime(anyhow!("no summary.csv found")));
    }
    let mut rows: Vec<CsvRow> = Vec::new();
    for f in &files {
        let mut r = read_summary_csv(f)
            .with_context(|| format!("reading {}", f.display()))
            .map_err(Failure::Runtime)?;
        rows.append(&mut r);
    }
    let reports = scaling_reports(&rows, metric).map_err(runtime)?;
    if reports.is_empty() {
        return Err(runtime(anyhow!(
            "no `{metric}` rows in {} files",
            files.len()
        )));
    }
    let mut failures = Vec::new();
    for r in &reports {
        println!("{}", describe(r));
        if args.min_r2.is_some_and(|m| r.fit.r_squared < m) {
            failures.push(format!(
                "{} vs {}: r2 {:.4} below threshold",
                r.learner, r.attacker, r.fit.r_squared
            ));
        }
        if args.max_ratio.is_some_and(|m| r.growth_ratio > m) {
            failures.push(format!(
                "{} vs {}: growth ratio {:.3} above threshold",
                r.learner, r.attacker, r.growth_ratio
            ));
        }
        if args.reject_linear && r.linear {
            failures.push(format!("{} vs {}: linear growth", r.learner, r.attacker));
        }
    }
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&reports).map_err(runtime)?;
        fs::write(path, text).map_err(runtime)?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

fn conservativeness(args: &ConservativenessArgs) -> Outcome {
    let corpus = fuzz_corpus(args.scripts, args.seed);
    let results = conservativeness_fuzz(&corpus, args.arms, args.horizon).map_err(runtime)?;
    let failed: Vec<_> = results.iter().filter(|(_, r)| !r.pass).collect();
    let final_min = results
        .iter()
        .filter_map(|(_, r)| r.rows.last().map(|row| row.min_count))
        .min()
        .unwrap_or(0);
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_path(path).map_err(runtime)?;
        w.write_record(["script", "t", "min_count", "bound", "asserted", "pass"])
            .map_err(runtime)?;
        for (kind, rep) in &results {
            for row in &rep.rows {
                w.write_record([
                    format!("{kind:?}"),
                    row.t.to_string(),
                    row.min_count.to_string(),
                    format!("{:.6}", row.bound),
                    row.asserted.to_string(),
                    row.pass.to_string(),
                ])
                .map_err(runtime)?;
            }
        }
        w.flush().map_err(runtime)?;
    }
    println!(
        "{} scripts, K={}, T={}: smallest final pull count {final_min}, {} failures",
        results.len(),
        args.arms,
        args.horizon,
        failed.len()
    );
    match failed.first() {
        None => Ok(()),
        Some((kind, _)) => Err(Failure::Check(format!(
            "conservativeness fails on {kind:?}"
        ))),
    }
}

fn validate(configs: &[PathBuf]) -> Outcome {
    for path in configs {
        let file = load(path)?;
        let points = match &file.sweep {
            Some(s) if !s.is_empty() => expand_sweep(&file.experiment, s)
                .with_context(|| format!("invalid sweep in {}", path.display()))
                .map_err(Failure::Config)?
                .len(),
            _ => 1,
        };
        println!(
            "{}: ok ({points} run{})",
            path.display(),
            if points == 1 { "" } else { "s" }
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Analyze(a) => analyze(a),
        Command::Conservativeness(a) => conservativeness(a),
        Command::Validate { configs } => validate(configs),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) | Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Check(msg) => eprintln!("check failed: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
