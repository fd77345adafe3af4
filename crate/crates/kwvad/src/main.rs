use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kwvad::error::exit;
use kwvad::{formats, Error, Overrides, Pipeline, PipelineConfig};

#[derive(Parser)]
#[command(version, about = "Keyword-based video anomaly detection pipeline")]
#[command(after_help = "The provider API key, if any, is read from KWVAD_API_KEY.")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, short, global = true, env = "KWVAD_CONFIG", default_value = "kwvad.toml")]
    config: PathBuf,
    /// Seed for sampling, splitting and training (overrides every seed in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Decision threshold on the anomaly probability.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Base URL of the OpenAI-compatible vision endpoint.
    #[arg(long, global = true)]
    provider_url: Option<String>,
    /// Serve descriptions from a `frame_id<TAB>text` map instead of a provider.
    #[arg(long, global = true, value_name = "MAP_FILE")]
    stub: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Describe every manifest frame, filling the description cache.
    Describe,
    /// Sample frames, split the dataset and derive keyword weights.
    Induce,
    /// Train the classifier on the training split.
    Train,
    /// Score the test split and write the evaluation report.
    Eval,
    /// Classify one frame, by manifest frame id or image path.
    Infer { frame: String },
}

fn run(cli: Cli) -> Result<(), Error> {
    let overrides = Overrides {
        seed: cli.seed,
        output_dir: cli.output_dir,
        threshold: cli.threshold,
        provider_url: cli.provider_url,
        stub: cli.stub,
    };
    let config = PipelineConfig::load(&cli.config, &overrides)?;
    let pipeline = Pipeline::open(config)?;
    match cli.command {
        Command::Describe => {
            let out = pipeline.cmd_describe()?;
            for (id, e) in &out.failures {
                eprintln!("{id}: {e}");
            }
            println!("{}", out.summary());
        }
        Command::Induce => {
            let model = pipeline.cmd_induce()?;
            println!("{} keywords -> {}", model.len(), pipeline.layout.keywords().display());
            print!(
                "{}",
                formats::render_top_keywords(&model)
                    .lines()
                    .take(11)
                    .collect::<Vec<_>>()
                    .join("\n")
            );
            println!();
        }
        Command::Train => {
            let m = pipeline.cmd_train()?;
            let best = &m.fold_metrics[m.chosen_fold];
            println!(
                "fold {} chosen (validation loss {:.6} at epoch {}), pos_weight {:.4} -> {}",
                m.chosen_fold,
                best.best_validation_loss,
                best.best_epoch + 1,
                m.pos_weight,
                pipeline.layout.model().display()
            );
        }
        Command::Eval => {
            let report = pipeline.cmd_eval()?;
            print!("{}", formats::eval_summary(&report));
        }
        Command::Infer { frame } => {
            let p = pipeline.cmd_infer(&frame)?;
            println!("{}", serde_json::to_string_pretty(&p).expect("prediction serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                // Stage and transparent wrappers repeat their inner message.
                if !e.to_string().ends_with(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
