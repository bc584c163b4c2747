use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use guidyn::pipeline::{EvalInputs, Mode, Pipeline, PipelineConfig, PipelineError, Stage};

/// Synthetic GUI dynamics data pipeline.
#[derive(Parser, Debug)]
#[command(name = "guidyn", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML config; the bundled demo config when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the config's seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads (0 = all cores). Does not change outputs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// offline or remote.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate app graphs and rasters.
    GenEnv,
    /// Run the random-walk fleet.
    Explore,
    /// Structural near-duplicate removal.
    DedupStruct,
    /// Static-transition and visual near-duplicate removal.
    DedupVisual,
    /// Transition verification.
    FilterSemantic,
    /// Annotation and training-sample emission.
    Synth,
    /// Corpus mixing.
    Mix,
    /// Build generalization items and action records.
    GenEvalSet,
    /// Score action predictions and aggregate judge verdicts.
    Eval {
        /// JSONL of {item_id, prediction_text}.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// JSONL of {item_id, verdict_text}.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Write and print the funnel.
    Report,
    /// Every stage in order.
    Run,
    /// Check a stage's files and upstream digests.
    Verify {
        stage: Stage,
    },
    /// Print the effective config as TOML.
    ShowConfig,
}

fn load_config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::demo(),
    };
    if let Some(s) = g.seed_override {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(m) = g.mode {
        cfg.mode = m;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load_config(&cli.global)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", toml::to_string(&cfg).map_err(|e| PipelineError::Config(e.to_string()))?);
        return Ok(());
    }
    let mut pipeline = Pipeline::new(cfg)?;
    let stage = match cli.command {
        Command::GenEnv => Stage::GenEnv,
        Command::Explore => Stage::Explore,
        Command::DedupStruct => Stage::DedupStruct,
        Command::DedupVisual => Stage::DedupVisual,
        Command::FilterSemantic => Stage::FilterSemantic,
        Command::Synth => Stage::Synth,
        Command::Mix => Stage::Mix,
        Command::GenEvalSet => Stage::GenEvalSet,
        Command::Eval { predictions, judgments } => {
            pipeline = pipeline.with_eval_inputs(EvalInputs { predictions, judgments });
            Stage::Eval
        }
        Command::Report => Stage::Report,
        Command::Verify { stage } => {
            let m = pipeline.verify(stage)?;
            println!("{stage}: ok ({} files)", m.files.len());
            return Ok(());
        }
        Command::Run => {
            for m in pipeline.run_all()? {
                print_summary(&m);
            }
            print!("{}", pipeline.funnel()?.to_table());
            return Ok(());
        }
        Command::ShowConfig => unreachable!(),
    };
    let m = pipeline.run_stage(stage)?;
    print_summary(&m);
    if stage == Stage::Report {
        print!("{}", pipeline.funnel()?.to_table());
    }
    Ok(())
}

fn print_summary(m: &guidyn::pipeline::StageManifest) {
    let counts: Vec<String> = m.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{:<16} {}", m.stage, counts.join(" "));
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("GUIDYN_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
