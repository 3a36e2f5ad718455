//! Thin command-line front end over the library: dataset in, store/report
//! out. Exit codes: 0 success, 1 config or IO error, 2 provider or auth
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trellis::bench::{EvalMode, Session};
use trellis::config::{Config, ConfigError};
use trellis::dataset::{load_dataset, DatasetSchema};
use trellis::forest::{AggregationMode, BaseMethod, ForestTrace, GuidelineMode};
use trellis::memory::MemoryStore;
use trellis::model::TaskKind;
use trellis::prompts::PromptRegistry;
use trellis::provider::{ModelSpec, UsageLedger};
use trellis::report::RunReport;

#[derive(Parser)]
#[command(name = "trellis", version, about = "Experience-guided multi-branch LLM reasoning")]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArgs {
    /// JSONL dataset path.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset schema: math or code.
    #[arg(long, default_value = "math")]
    schema: String,
    /// Memory store directory.
    #[arg(long)]
    store: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build gold trajectories from a labeled dataset into the store.
    Train {
        #[command(flatten)]
        data: DatasetArgs,
        /// Tag stored entries with a dataset/category label.
        #[arg(long)]
        tag: Option<String>,
        /// Label-guided best-of-n rounds.
        #[arg(long)]
        rounds: Option<usize>,
        /// Write the stage report as line-delimited records.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a dataset against the store.
    Eval {
        #[command(flatten)]
        data: DatasetArgs,
        /// Number of parallel guideline branches M.
        #[arg(long)]
        branches: Option<usize>,
        /// Disable the per-step refinement pass.
        #[arg(long)]
        no_refine: bool,
        /// Aggregation strategy: stepwise or final.
        #[arg(long)]
        aggregation: Option<String>,
        /// Retrieval depth k.
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated model ids, one per branch (uniform weights).
        #[arg(long)]
        collab: Option<String>,
        /// Single-path guideline injection: cot, react, or tot.
        #[arg(long)]
        inject: Option<String>,
        /// Restrict retrieval to entries with this tag.
        #[arg(long)]
        category: Option<String>,
        /// Guideline construction: rewrite or induce_per_branch.
        #[arg(long)]
        guideline_mode: Option<String>,
        /// Directory for per-problem trace dumps.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Write the run report as line-delimited records.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dump store entries as structured text.
    InspectMemory {
        #[arg(long)]
        store: PathBuf,
    },
    /// Pretty-print a trace dump produced by eval --trace-dir.
    InspectTrace {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Re-render a line-delimited run report as a table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the documented default configuration.
    Config,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Provider(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Provider(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Provider(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Provider(inner) => CliError::Provider(inner.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<trellis::dataset::DatasetError> for CliError {
    fn from(e: trellis::dataset::DatasetError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<trellis::memory::MemoryError> for CliError {
    fn from(e: trellis::memory::MemoryError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<trellis::report::ReportError> for CliError {
    fn from(e: trellis::report::ReportError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    match path {
        Some(path) => Ok(Config::load(path)?),
        None => Ok(Config::default()),
    }
}

fn parse_schema(s: &str) -> Result<DatasetSchema, CliError> {
    s.parse::<DatasetSchema>().map_err(CliError::Config)
}

fn load_prompts(config: &Config) -> Result<PromptRegistry, CliError> {
    match &config.prompt_dir {
        Some(dir) => {
            PromptRegistry::with_overrides_from_dir(dir).map_err(|e| CliError::Config(e.to_string()))
        }
        None => Ok(PromptRegistry::builtin()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli.config)?;
    match cli.command {
        Command::Train {
            data,
            tag,
            rounds,
            report,
        } => {
            let schema = parse_schema(&data.schema)?;
            let problems = load_dataset(&data.dataset, schema)?;
            let provider = config.build_provider()?;
            let prompts = load_prompts(&config)?;
            let ledger = UsageLedger::new();
            let task = schema_task(schema);
            let mut build_cfg = config.train.clone();
            if let Some(rounds) = rounds {
                build_cfg.label_guided_rounds = rounds;
            }
            let mut store =
                MemoryStore::open_or_create(&data.store, config.embedding_dimension())?;
            let session = Session::new(
                provider.as_ref(),
                &prompts,
                config.chat_options(task),
                &ledger,
            );
            let train_report =
                session.run_train(&problems, &mut store, &build_cfg, tag.as_deref());
            print!("{}", train_report.render_table());
            if let Some(path) = report {
                let file = std::fs::File::create(&path)?;
                train_report.write_jsonl(std::io::BufWriter::new(file))?;
                println!("report written to {}", path.display());
            }
            Ok(())
        }
        Command::Eval {
            data,
            branches,
            no_refine,
            aggregation,
            k,
            collab,
            inject,
            category,
            guideline_mode,
            trace_dir,
            report,
        } => {
            let schema = parse_schema(&data.schema)?;
            let problems = load_dataset(&data.dataset, schema)?;
            let provider = config.build_provider()?;
            let prompts = load_prompts(&config)?;
            let ledger = UsageLedger::new();
            let task = schema_task(schema);

            let mut exec_cfg = config.eval.clone();
            if let Some(m) = branches {
                exec_cfg.branches = m;
            }
            if no_refine {
                exec_cfg.refinement_enabled = false;
            }
            if let Some(mode) = aggregation {
                exec_cfg.aggregation_mode = match mode.as_str() {
                    "stepwise" => AggregationMode::Stepwise,
                    "final" => AggregationMode::Final,
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown aggregation mode: {other}"
                        )))
                    }
                };
            }
            if let Some(k) = k {
                exec_cfg.retrieval_k = k;
            }
            if let Some(models) = collab {
                let specs: Vec<ModelSpec> = models
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(ModelSpec::new)
                    .collect();
                exec_cfg.collaboration = Some(specs);
            }
            if let Some(tag) = category {
                exec_cfg.category_filter = Some(tag);
            }
            if let Some(mode) = guideline_mode {
                exec_cfg.guideline_mode = match mode.as_str() {
                    "rewrite" => GuidelineMode::Rewrite,
                    "induce_per_branch" => GuidelineMode::InducePerBranch,
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown guideline mode: {other}"
                        )))
                    }
                };
            }
            let mode = match inject.as_deref() {
                None => EvalMode::Forest,
                Some("cot") => EvalMode::Inject(BaseMethod::Cot),
                Some("react") => EvalMode::Inject(BaseMethod::React),
                Some("tot") => EvalMode::Inject(BaseMethod::Tot),
                Some(other) => {
                    return Err(CliError::Config(format!("unknown inject mode: {other}")))
                }
            };

            let store = MemoryStore::open(&data.store)?;
            let session = Session::new(
                provider.as_ref(),
                &prompts,
                config.chat_options(task),
                &ledger,
            );
            let (run_report, traces) = session.run_eval(&problems, &store, &exec_cfg, mode);
            print!("{}", run_report.render_table());
            if let Some(dir) = trace_dir {
                write_traces(&dir, &traces)?;
                println!("{} traces written to {}", traces.len(), dir.display());
            }
            if let Some(path) = report {
                let file = std::fs::File::create(&path)?;
                run_report.write_jsonl(std::io::BufWriter::new(file))?;
                println!("report written to {}", path.display());
            }
            Ok(())
        }
        Command::InspectMemory { store } => {
            let store = MemoryStore::open(&store)?;
            println!(
                "store: {} entries, dimension {}",
                store.len(),
                store.dimension()
            );
            for entry in store.entries() {
                println!("\n[{}] seq={} stage={}", entry.entry_id, entry.created_seq, entry.stage);
                if let Some(tag) = &entry.tag {
                    println!("  tag: {tag}");
                }
                println!("  problem {}: {}", entry.problem.id, entry.problem.statement);
                for step in &entry.trajectory.steps {
                    println!("  step {}: {}", step.index, step.text);
                }
                println!("  answer: {}", entry.trajectory.final_answer);
            }
            Ok(())
        }
        Command::InspectTrace { trace } => {
            let text = std::fs::read_to_string(&trace)?;
            let trace: ForestTrace =
                serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            println!("problem {} ({} mode)", trace.problem_id, trace.mode);
            for (i, g) in trace.guidelines.iter().enumerate() {
                println!("\nbranch {} guideline:", i + 1);
                for (j, step) in g.steps.iter().enumerate() {
                    println!("  <step {}>: {}", j + 1, step);
                }
            }
            for step in &trace.steps {
                println!("\nstep {}:", step.index);
                for (i, c) in step.proposed.iter().enumerate() {
                    println!("  branch {} proposed: {}", i + 1, c.text);
                }
                for (i, c) in step.refined.iter().enumerate() {
                    println!("  branch {} refined:  {}", i + 1, c.text);
                }
                println!("  verdict: {}", step.verdict);
                println!("  accepted (candidate {}): {}", step.chosen, step.accepted.text);
            }
            if let Some(v) = &trace.final_verdict {
                println!("\nfinal verdict: {v}");
            }
            println!("\nconclusion: {}", trace.conclusion);
            println!("answer: {}", trace.answer.as_deref().unwrap_or("<none>"));
            println!("\ntoken usage by stage:");
            for (tag, totals) in &trace.usage {
                println!(
                    "  {tag}: {} calls, {} prompt + {} completion tokens",
                    totals.calls, totals.prompt_tokens, totals.completion_tokens
                );
            }
            Ok(())
        }
        Command::Report { input } => {
            let file = std::fs::File::open(&input)?;
            let report = RunReport::read_jsonl(std::io::BufReader::new(file))?;
            print!("{}", report.render_table());
            Ok(())
        }
        Command::Config => {
            print!("{}", Config::default_toml());
            Ok(())
        }
    }
}

fn schema_task(schema: DatasetSchema) -> TaskKind {
    match schema {
        DatasetSchema::MathJsonl => TaskKind::Math,
        DatasetSchema::CodeJsonl => TaskKind::Code,
    }
}

fn write_traces(dir: &Path, traces: &[ForestTrace]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (i, trace) in traces.iter().enumerate() {
        let safe_id: String = trace
            .problem_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        let path = dir.join(format!("trace-{i:04}-{safe_id}.json"));
        let json = serde_json::to_string_pretty(trace)
            .map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, json)?;
    }
    Ok(())
}
