//! Command-line surface: phase-oriented subcommands over a state directory.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration/validation
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use styletv::config::{ConfigOverrides, RunConfig};
use styletv::error::Error;
use styletv::modelio::{ChatClient, Clock, FixedClock, HttpClient, MockClient, SystemClock};
use styletv::pipeline::{AnalysisDocument, Pipeline, RunSummary};
use styletv::protocol::format_accuracy;
use styletv::report::format_significant;

#[derive(Parser)]
#[command(
    name = "styletv",
    version,
    about = "Style-invariance harness for attribute descriptions of visual text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory holding phase outputs and the response cache.
    #[arg(long, global = true, value_name = "PATH", default_value = "state")]
    state_dir: PathBuf,

    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restrict the run to these model ids (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,

    /// Override max_parallel on every endpoint.
    #[arg(long, global = true)]
    concurrency: Option<u32>,

    /// Override the low-frequency merge threshold.
    #[arg(long, global = true)]
    tau: Option<u64>,

    /// Override the top-N ranking depth.
    #[arg(long = "top-n", global = true)]
    top_n: Option<usize>,

    /// Substitute every endpoint with the scripted mock client loaded from
    /// this fixture.
    #[arg(long, global = true, value_name = "FIXTURE-PATH")]
    mock: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render stimulus images and write the manifest.
    Render,
    /// Query every (stimulus, model) identification cell.
    Identify,
    /// Gate stimuli on joint identification and sample per concept-style.
    Filter,
    /// Collect attribute responses for every sampled cell.
    Collect,
    /// Convert raw responses into normalized term lists.
    Extract,
    /// Compute per-concept comparisons and within/across-style averages.
    Analyze,
    /// Emit CSV, SVG, and top-N artifacts.
    Report,
    /// All phases in order.
    RunAll,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> styletv::Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = RunConfig::load(config_path)?;
    let overrides = ConfigOverrides {
        seed: cli.seed,
        models: cli.models.clone(),
        concurrency: cli.concurrency,
        tau: cli.tau,
        top_n: cli.top_n,
    };
    overrides.apply(&mut config)?;

    let mock_client;
    let http_client;
    let client: &dyn ChatClient = match &cli.mock {
        Some(fixture) => {
            mock_client = MockClient::from_file(fixture)?;
            &mock_client
        }
        None => {
            http_client = HttpClient::default();
            &http_client
        }
    };
    // Mock runs use a fixed clock so their logs are byte-reproducible.
    let fixed = FixedClock(0);
    let system = SystemClock;
    let clock: &dyn Clock = if cli.mock.is_some() { &fixed } else { &system };

    std::fs::create_dir_all(&cli.state_dir).map_err(|e| Error::io(&cli.state_dir, e))?;
    let pipeline = Pipeline {
        config: &config,
        state_dir: cli.state_dir.clone(),
        client,
        clock,
    };

    match cli.command {
        Command::Render => {
            let summary = pipeline.render()?;
            println!(
                "rendered {} stimuli for {} concepts -> {}",
                summary.stimuli,
                summary.concepts,
                summary.manifest_path.display()
            );
        }
        Command::Identify => {
            let summary = pipeline.identify()?;
            println!(
                "identification: {} cells, {} failed",
                summary.cells, summary.failures
            );
            for entry in &summary.accuracies {
                println!(
                    "  {} / {}: {} ({}/{})",
                    entry.model_id,
                    entry.style,
                    format_accuracy(entry.accuracy),
                    entry.correct,
                    entry.total
                );
            }
        }
        Command::Filter => {
            let report = pipeline.filter()?;
            print_filter(&report);
        }
        Command::Collect => {
            let summary = pipeline.collect()?;
            println!(
                "collected {} attribute cells, {} failed",
                summary.cells, summary.failures
            );
        }
        Command::Extract => {
            let summary = pipeline.extract()?;
            println!(
                "extracted {} term lists ({} empty)",
                summary.lists, summary.empty_lists
            );
        }
        Command::Analyze => {
            let analysis = pipeline.analyze()?;
            print_analysis(&analysis);
        }
        Command::Report => {
            let summary = pipeline.report()?;
            for path in &summary.written {
                println!("wrote {}", path.display());
            }
        }
        Command::RunAll => {
            let summary = pipeline.run_all()?;
            print_run_summary(&summary);
        }
    }
    Ok(())
}

fn print_filter(report: &styletv::protocol::FilterReport) {
    println!(
        "retained {} concept(s), eliminated {}",
        report.retained.len(),
        report.eliminated.len()
    );
    for gone in &report.eliminated {
        println!(
            "  eliminated {} (functional {} / decorative {} surviving, need {})",
            gone.label, gone.surviving_functional, gone.surviving_decorative, report.sample_size
        );
    }
}

fn print_analysis(analysis: &AnalysisDocument) {
    for entry in &analysis.accuracies {
        println!(
            "accuracy {} / {}: {}",
            entry.model_id,
            entry.style,
            format_accuracy(entry.accuracy)
        );
    }
    for c in &analysis.comparisons {
        let p = if c.p_value < 1e-12 {
            "<1e-12".to_string()
        } else {
            format_significant(c.p_value, 6)
        };
        println!(
            "{} / {}: tv={} chi2={} df={} p={}{}",
            c.model_id,
            c.label,
            format_significant(c.tv, 6),
            format_significant(c.chi2, 6),
            c.df,
            p,
            if c.top_n_diff.is_stable() {
                " (top-n stable)"
            } else {
                ""
            }
        );
    }
    for (model, tv) in &analysis.within_across {
        println!(
            "{}: within functional={} within decorative={} across={}",
            model,
            format_significant(tv.within_functional, 6),
            format_significant(tv.within_decorative, 6),
            format_significant(tv.across, 6)
        );
    }
}

fn print_run_summary(summary: &RunSummary) {
    println!(
        "rendered {} stimuli for {} concepts",
        summary.render.stimuli, summary.render.concepts
    );
    println!(
        "identification: {} cells, {} failed",
        summary.identify.cells, summary.identify.failures
    );
    print_filter(&summary.filter);
    println!(
        "collected {} attribute cells, {} failed; extracted {} lists",
        summary.collect.cells, summary.collect.failures, summary.extract.lists
    );
    print_analysis(&summary.analysis);
    for path in &summary.report.written {
        println!("wrote {}", path.display());
    }
}
