use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diracbohm_cli::{parse_config_for, run_task, RunReport, Task};

#[derive(Parser)]
#[command(name = "diracbohm", version, about = "Wave-function evolution, Bohm trajectories, propagators and path ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Print the task catalog and exit.
    #[arg(long)]
    list_tasks: bool,
}

#[derive(Subcommand)]
enum Command {
    #[command(name = "evolve")]
    Evolve(RunArgs),
    #[command(name = "trajectories")]
    Trajectories(RunArgs),
    #[command(name = "propagate")]
    Propagate(RunArgs),
    #[command(name = "ensemble")]
    Ensemble(RunArgs),
    #[command(name = "picture-check")]
    PictureCheck(RunArgs),
    #[command(name = "verify")]
    Verify(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_tasks {
        for t in Task::ALL {
            println!("{:<14} {}", t.name(), t.summary());
        }
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no task given; see --help or --list-tasks");
        return ExitCode::from(2);
    };
    let (task, args) = match command {
        Command::Evolve(a) => (Task::Evolve, a),
        Command::Trajectories(a) => (Task::Trajectories, a),
        Command::Propagate(a) => (Task::Propagate, a),
        Command::Ensemble(a) => (Task::Ensemble, a),
        Command::PictureCheck(a) => (Task::PictureCheck, a),
        Command::Verify(a) => (Task::Verify, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    let fallback_dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let parsed = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))
        .and_then(|text| parse_config_for(&text, task).map_err(|e| format!("{}: {e}", args.config.display())));
    let mut cfg = match parsed {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            let mut report = RunReport::new(task.name(), serde_json::Value::Null);
            report.error = Some(msg);
            report.finish(0.0);
            if let Err(e) = report.write(&fallback_dir) {
                eprintln!("cannot write report: {e}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.display().to_string();
    }
    let out = PathBuf::from(&cfg.output_dir);
    let report = run_task(task, &cfg, &out);
    if let Err(e) = report.write(&out) {
        eprintln!("cannot write report: {e}");
        return ExitCode::from(2);
    }
    for m in &report.metrics {
        let verdict = match m.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        println!("{verdict:>4}  {:<40} {:.6e}", m.name, m.value);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    println!("{} in {:.2}s: {}", task.name(), report.wall_time_s, if report.passed { "passed" } else { "FAILED" });
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
