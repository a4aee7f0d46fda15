use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use medsft::config::PipelineConfig;
use medsft::curation::Combine;
use medsft::ingest::ParseMode;
use medsft::pipeline::{Pipeline, PipelineError, RunOptions};
use medsft::report::render_report;
use medsft::synth::{write_fixtures, SynthSizes};

#[derive(Parser)]
#[command(name = "medsft", version, about = "Build and evaluate medical chat fine-tuning corpora")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config (TOML). Relative paths inside resolve against its directory.
    #[arg(long, global = true, default_value = "pipeline.toml")]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the deterministic offline judge even if an endpoint is configured.
    #[arg(long, global = true)]
    mock_judge: bool,
    /// Abort on the first malformed input line (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Skip malformed input lines and report them.
    #[arg(long, global = true)]
    lenient: bool,
    /// Output root; runs go to <out>/<run-id>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run directory name; defaults to a timestamp.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Judge response cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineArg {
    AllDims,
    MeanDim,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalise the input corpora.
    Ingest,
    /// Expand the knowledge bases into question/answer pairs.
    GenQa,
    /// Rate soft skills of every record with the judge.
    Score,
    /// Keep role-model records by soft-skill quantile.
    Select {
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long, value_enum)]
        combine: Option<CombineArg>,
    },
    /// Write the chat-format training set and manifest.
    ExportSft,
    /// Assign departments to unclassified records.
    Classify,
    /// Matched human benchmarks and the gap table.
    Bench,
    /// Win rates by doctor and conversation segment.
    Winrate,
    /// Simulate consultations for every model stage.
    Simulate,
    /// Style alignment of simulated conversations with their seeds.
    Style,
    /// Knowledge accuracy per model stage.
    Knowledge,
    /// Render Markdown, CSV and SVG from a run's results.
    Report {
        /// Run directory to read; defaults to the configured run.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Every stage in order.
    Pipeline,
    /// Write synthetic corpora and a matching config.
    GenFixtures {
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        records: usize,
        #[arg(long, default_value_t = 50)]
        diseases: usize,
        #[arg(long, default_value_t = 50)]
        medicines: usize,
    },
}

fn load_config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.paths.out_dir = o.clone();
    }
    if let Some(c) = &g.cache_dir {
        cfg.paths.cache_dir = c.clone();
    }
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn run(cli: Cli) -> Result<Value, PipelineError> {
    let g = &cli.global;
    if let Command::GenFixtures { dir, records, diseases, medicines } = &cli.command {
        let sizes = SynthSizes { records: *records, diseases: *diseases, medicines: *medicines };
        let written = write_fixtures(dir, g.seed.unwrap_or(PipelineConfig::default().seed), sizes)
            .map_err(|e| PipelineError::Usage(e.to_string()))?;
        return Ok(json!({ "written": written }));
    }
    let mut cfg = load_config(g)?;
    if let Command::Select { quantile, combine } = &cli.command {
        if let Some(q) = quantile {
            cfg.selection.quantile = *q;
        }
        if let Some(c) = combine {
            cfg.selection.combine = match c {
                CombineArg::AllDims => Combine::AllDims,
                CombineArg::MeanDim => Combine::MeanDim,
            };
        }
    }
    if let Command::Report { run_dir: Some(dir) } = &cli.command {
        let out = dir.join(medsft::pipeline::REPORT_DIR);
        return Ok(json!({ "written": render_report(dir, &out)? }));
    }
    let opts = RunOptions {
        mock_judge: g.mock_judge,
        mode: if g.lenient { ParseMode::Lenient } else { ParseMode::Strict },
        run_id: g.run_id.clone(),
    };
    let mut p = Pipeline::new(cfg, opts)?;
    let result = match &cli.command {
        Command::Ingest => to_json(&p.ingest()?),
        Command::GenQa => to_json(&p.gen_qa()?.1),
        Command::Score => json!({ "scored": p.score()?.len() }),
        Command::Select { .. } => to_json(&p.select()?.summary),
        Command::ExportSft => to_json(&p.export_sft()?),
        Command::Classify => json!({ "classified": p.classify()?.len() }),
        Command::Bench => to_json(&p.bench()?),
        Command::Winrate => json!({ "segmentations": p.winrate()?.len() }),
        Command::Simulate => {
            let runs = p.simulate()?;
            json!({ "stages": runs.iter().map(|r| json!({"name": r.name, "conversations": r.conversations.len()})).collect::<Vec<_>>() })
        }
        Command::Style => to_json(&p.style()?),
        Command::Knowledge => to_json(&p.knowledge()?),
        Command::Report { .. } => json!({ "written": p.report()? }),
        Command::Pipeline => to_json(&p.run_all()?),
        Command::GenFixtures { .. } => unreachable!(),
    };
    if !matches!(cli.command, Command::Pipeline) {
        p.write_run_log()?;
    }
    Ok(json!({ "run_dir": p.run_dir, "result": result }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "code": e.code(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
