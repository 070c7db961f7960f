use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use epibranch_cli::{run, Command, Inputs, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "epibranch", version, about = "Branching-process epidemic engines")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observations CSV (date,count)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Outflow CSV (date,outflow_count)
    #[arg(long)]
    mobility: Option<PathBuf>,
    /// Flow CSV (date,r1,r2,age,count)
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    /// l1 or l1log
    #[arg(long)]
    loss: Option<String>,
    /// Last training date (YYYY-MM-DD)
    #[arg(long)]
    train_end: Option<String>,
    /// Last held-out date (YYYY-MM-DD)
    #[arg(long)]
    test_end: Option<String>,
}

fn execute(cli: Cli) -> Result<()> {
    let (config, config_text) = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), String::new()),
    };
    let inputs = Inputs {
        config,
        config_text,
        data: cli.data,
        mobility: cli.mobility,
        flows: cli.flows,
        seed: cli.seed,
        reps: cli.reps,
        loss: cli.loss,
        train_end: cli.train_end,
        test_end: cli.test_end,
    };
    let manifest = run(cli.command, &inputs, &cli.out)?;
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            let body = serde_json::json!({
                "error": {
                    "command": command,
                    "message": e.to_string(),
                    "causes": &chain[1..],
                }
            });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
