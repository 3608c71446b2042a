use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use factscope::credibility::{write_grouping_csv, Fraction, UserFactuality};
use factscope::filtering::PolicyName;
use factscope::pipeline::{self, AnalyzeConfig, RunManifest};
use factscope::regress::{BootstrapConfig, FitConfig, Variable};
use factscope::stats::{self, Direction};
use factscope::synth::{self, SynthConfig};
use factscope::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "factscope", version, about = "Account-metric analysis of news-sharing factuality")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed for every random stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "middle", value_parser = parse_policy)]
    policy: PolicyName,
    /// Extreme-group fraction: 0.25, 0.30 or 0.35.
    #[arg(long, global = true, default_value = "0.30", value_parser = parse_fraction)]
    fraction: Fraction,
    /// Date the account ages are measured against (YYYY-MM-DD).
    #[arg(long, global = true, value_parser = parse_reference_date)]
    reference_date: Option<NaiveDate>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Score users from JSON-lines users/tweets and a registry CSV.
    Ingest {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
    /// Apply the organic-user policy to a scored table.
    Filter(Input),
    /// Filter, then write the factuality grouping.
    Score(Input),
    /// Low-versus-high rank test on one metric with a shuffle null.
    Mwu {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_parser = parse_variable)]
        metric: Variable,
        /// Defaults to `less` for days, `greater` otherwise.
        #[arg(long, value_parser = parse_direction)]
        direction: Option<Direction>,
        #[arg(long, default_value_t = stats::DEFAULT_SHUFFLES)]
        shuffles: usize,
    },
    /// Fit the multinomial model and report marginal effects.
    Regress {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Switch::Off)]
        interactions: Switch,
        /// Bootstrap replicates; 0 reports point estimates only.
        #[arg(long, default_value_t = BootstrapConfig::default().replicates)]
        bootstrap: usize,
        /// Label shuffles for the accuracy test; 0 skips it.
        #[arg(long, default_value_t = 100)]
        accuracy_shuffles: usize,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// In-sample accuracy against label-shuffled refits.
    Accuracy {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Switch::Off)]
        interactions: Switch,
        #[arg(long, default_value_t = 100)]
        shuffles: usize,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Generate a synthetic population with planted structure.
    Synth {
        /// JSON synthetic configuration; overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::PaperSign)]
        preset: Preset,
        /// Overrides the user count of the configuration.
        #[arg(long)]
        users: Option<usize>,
    },
    /// Full chain: filter, group, rank tests, regressions, accuracy.
    Analyze {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = stats::DEFAULT_SHUFFLES)]
        shuffles: usize,
        #[arg(long, default_value_t = BootstrapConfig::default().replicates)]
        bootstrap: usize,
        #[arg(long, default_value_t = 100)]
        accuracy_shuffles: usize,
        #[command(flatten)]
        fit: FitArgs,
    },
}

#[derive(Args)]
struct FitArgs {
    /// L2 penalty on the slopes.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Newton iteration cap.
    #[arg(long, default_value_t = FitConfig::default().max_iter)]
    max_iter: usize,
}

#[derive(Args)]
struct Input {
    /// Scored-user CSV written by `ingest` or `synth`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PaperSign,
    Null,
}

fn parse_policy(s: &str) -> Result<PolicyName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fraction(s: &str) -> Result<Fraction, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variable(s: &str) -> Result<Variable, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_reference_date(s: &str) -> Result<NaiveDate, String> {
    factscope::ingest::parse_date(s)
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Core(Error::from(e).context(path.display().to_string()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Outcome {
    pipeline::write_json(io::stdout().lock(), value)?;
    Ok(())
}

fn fit_config(args: &FitArgs) -> Result<FitConfig, Failure> {
    if !(args.ridge >= 0.0 && args.ridge.is_finite()) {
        return Err(Failure::Usage(format!("--ridge must be finite and >= 0 (got {})", args.ridge)));
    }
    Ok(FitConfig {
        ridge: args.ridge,
        max_iter: args.max_iter,
        ..FitConfig::default()
    })
}

fn analyze_config(g: &Global, shuffles: usize, bootstrap: usize, accuracy: usize, fit: FitConfig) -> AnalyzeConfig {
    AnalyzeConfig {
        policy: g.policy,
        fraction: g.fraction,
        shuffles,
        seed: g.seed,
        bootstrap_replicates: bootstrap,
        accuracy_shuffles: accuracy,
        fit,
        ..AnalyzeConfig::default()
    }
}

fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    fs::create_dir_all(&g.out_dir).map_err(io_err(&g.out_dir))?;
    let out = |name: &str| g.out_dir.join(name);
    match cli.command {
        Command::Ingest { users, tweets, registry } => {
            let reference = g
                .reference_date
                .ok_or_else(|| Failure::Usage("ingest needs --reference-date".into()))?;
            let scored = pipeline::ingest_files(&users, &tweets, &registry, reference)?;
            pipeline::write_scored_file(&out("scored.csv"), &scored)?;
            let unscored = scored.iter().filter(|u| u.score.is_none()).count();
            print_json(&serde_json::json!({
                "users": scored.len(),
                "unscored": unscored,
                "output": out("scored.csv"),
            }))
        }
        Command::Filter(input) => {
            let scored = pipeline::read_scored_file(&input.input)?;
            let prepared = pipeline::prepare(&scored, g.policy, g.fraction)?;
            let ids: Vec<&str> = scored
                .iter()
                .filter(|u| u.score.is_some())
                .map(|u| u.user.user_id.as_str())
                .collect();
            let path = out("filter.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            prepared.filter.write_csv(io::BufWriter::new(file), &ids)?;
            print_json(&serde_json::json!({ "policy": g.policy, "sample": prepared.counts }))
        }
        Command::Score(input) => {
            let scored = pipeline::read_scored_file(&input.input)?;
            let prepared = pipeline::prepare(&scored, g.policy, g.fraction)?;
            let rows: Vec<UserFactuality> = prepared
                .users
                .iter()
                .zip(&prepared.scores)
                .map(|(u, &score)| UserFactuality {
                    user_id: u.user.user_id.clone(),
                    score,
                    matched_link_count: u.matched_link_count,
                })
                .collect();
            let grouping = factscope::credibility::assign_groups(&rows, g.fraction)?;
            let path = out("groups.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            write_grouping_csv(io::BufWriter::new(file), &rows, &grouping)?;
            print_json(&serde_json::json!({
                "policy": g.policy,
                "fraction": g.fraction,
                "groups": prepared.sizes(),
            }))
        }
        Command::Mwu { input, metric, direction, shuffles } => {
            let scored = pipeline::read_scored_file(&input.input)?;
            let prepared = pipeline::prepare(&scored, g.policy, g.fraction)?;
            let direction = direction.unwrap_or(pipeline::default_direction(metric));
            let seed = pipeline::stage_seeds(g.seed)[&format!("mwu:{metric}")];
            let test = pipeline::metric_test(&prepared, metric, direction, shuffles, seed)?;
            pipeline::write_json_file(&out("mwu.json"), &test)?;
            let path = out("mwu_null.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            pipeline::write_mwu_csv(io::BufWriter::new(file), std::slice::from_ref(&test))?;
            print_json(&test.observed)
        }
        Command::Regress { input, interactions, bootstrap, accuracy_shuffles, fit } => {
            let fit = fit_config(&fit)?;
            let scored = pipeline::read_scored_file(&input.input)?;
            let prepared = pipeline::prepare(&scored, g.policy, g.fraction)?;
            let on = interactions == Switch::On;
            let seeds = pipeline::stage_seeds(g.seed);
            let label = if on { "bootstrap:interactions" } else { "bootstrap:main" };
            let boot = BootstrapConfig {
                replicates: bootstrap,
                master_seed: seeds[label],
                ..BootstrapConfig::default()
            };
            let report = pipeline::regression(&prepared, on, &fit, &boot)?;
            let accuracy = if accuracy_shuffles == 0 {
                None
            } else {
                Some(pipeline::accuracy(&prepared, on, &fit, accuracy_shuffles, seeds["accuracy"])?)
            };
            let regs = std::slice::from_ref(&report);
            let path = out("ame.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            pipeline::write_ame_csv(io::BufWriter::new(file), regs)?;
            let path = out("median_split.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            pipeline::write_median_split_csv(io::BufWriter::new(file), regs)?;
            let body = serde_json::json!({ "regression": report, "accuracy": accuracy });
            pipeline::write_json_file(&out("regress.json"), &body)?;
            print_json(&serde_json::json!({
                "converged": report.model.converged,
                "iterations": report.model.iterations,
                "log_likelihood": report.model.final_log_likelihood,
            }))
        }
        Command::Accuracy { input, interactions, shuffles, fit } => {
            let fit = fit_config(&fit)?;
            let scored = pipeline::read_scored_file(&input.input)?;
            let prepared = pipeline::prepare(&scored, g.policy, g.fraction)?;
            let seed = pipeline::stage_seeds(g.seed)["accuracy"];
            let acc = pipeline::accuracy(&prepared, interactions == Switch::On, &fit, shuffles, seed)?;
            pipeline::write_json_file(&out("accuracy.json"), &acc)?;
            let path = out("accuracy_null.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            pipeline::write_accuracy_csv(io::BufWriter::new(file), &acc)?;
            print_json(&serde_json::json!({
                "observed": acc.observed,
                "empirical_p": acc.empirical_p,
            }))
        }
        Command::Synth { config, preset, users } => {
            let mut cfg: SynthConfig = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(io_err(path))?;
                    serde_json::from_str(&text)
                        .map_err(|e| Error::from(e).context(path.display().to_string()))?
                }
                None => match preset {
                    Preset::PaperSign => synth::paper_sign_preset(),
                    Preset::Null => synth::null_preset(),
                }
                .with_seed(g.seed),
            };
            if let Some(n) = users {
                cfg = cfg.with_users(n);
            }
            let data = synth::generate(&cfg)?;
            let path = out("users.jsonl");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            data.write_users(io::BufWriter::new(file))?;
            let path = out("synth_config.json");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            data.write_sidecar(io::BufWriter::new(file))?;
            pipeline::write_scored_file(&out("scored.csv"), &pipeline::synth_scored(&data))?;
            print_json(&serde_json::json!({
                "users": data.users.len(),
                "master_seed": cfg.master_seed,
                "reference_date": cfg.reference_date,
            }))
        }
        Command::Analyze { input, shuffles, bootstrap, accuracy_shuffles, fit } => {
            let fit = fit_config(&fit)?;
            let scored = pipeline::read_scored_file(&input.input)?;
            let cfg = analyze_config(g, shuffles, bootstrap, accuracy_shuffles, fit);
            let manifest = RunManifest::new(
                vec![input.input.display().to_string()],
                g.reference_date,
                cfg,
            );
            let analysis = pipeline::analyze(&scored, manifest)?;
            pipeline::write_analysis(&g.out_dir, &analysis)?;
            print_json(&serde_json::json!({
                "report": out("report.json"),
                "retained": analysis.report.sample.retained,
                "groups": analysis.report.groups,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli.global.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| run(cli));
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Data => ExitCode::from(2),
                ErrorKind::Numerical => ExitCode::from(3),
            }
        }
    }
}
