use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nstep::expcli::{self, SweepSpec};
use nstep::stats::Window;

#[derive(Parser)]
#[command(name = "nstep", version, about = "Multi-step DQN experiments on mountain car")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep; completed (label, seed) runs already on disk are reused.
    Run(RunArgs),
    /// Recompute summary.csv and welch.csv from episodes.csv.
    Summarize {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Welch's test between two labels.
    Welch {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// first50, last50 or all
        #[arg(long, default_value = "all")]
        window: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write plot.csv with 50-episode interval means.
    Plotdata {
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// One of nstep_sweep, target_freq, on_vs_off.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Sweep file in `key = value` format.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Runs per configuration.
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn load_spec(args: &RunArgs) -> nstep::Result<SweepSpec> {
    let mut spec = match (&args.preset, &args.config) {
        (Some(name), _) => expcli::preset(name).ok_or_else(|| {
            nstep::Error::Config(format!(
                "unknown preset `{name}` (known: {})",
                expcli::PRESETS.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| nstep::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            expcli::parse_config(&text).map_err(|e| {
                nstep::Error::Config(format!("{}: {e}", path.display()))
            })?
        }
        (None, None) => unreachable!("clap requires --preset or --config"),
    };
    if let Some(r) = args.runs {
        spec.runs_per_config = r;
    }
    if let Some(s) = args.seed {
        spec.base_seed = s;
    }
    if let Some(o) = &args.out {
        spec.out_dir = o.clone();
    }
    if let Some(j) = args.jobs {
        spec.jobs = j;
    }
    if spec.runs_per_config == 0 || spec.jobs == 0 {
        return Err(nstep::Error::Config("--runs and --jobs must be at least 1".into()));
    }
    Ok(spec)
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else {
        format!("{x:.2}")
    }
}

fn run(cli: Cli) -> nstep::Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let spec = load_spec(&args)?;
            eprintln!(
                "{} configurations x {} runs -> {}",
                spec.configs.len(),
                spec.runs_per_config,
                spec.out_dir.display()
            );
            let report = expcli::run_sweep(&spec)?;
            eprintln!(
                "executed {}, reused {}, failed {}",
                report.executed,
                report.reused,
                report.failures.len()
            );
            for f in &report.failures {
                eprintln!("  {} seed {}: {}", f.label, f.seed, f.message);
            }
            Ok(report.all_completed())
        }
        Command::Summarize { out } => {
            let rows = expcli::summarize_dir(&out)?;
            println!("{:<28} {:>7} {:>6} {:>10} {:>9} {:>10} {:>10}", "label", "window", "runs", "mean", "sd", "ci_low", "ci_high");
            for r in rows {
                println!(
                    "{:<28} {:>7} {:>6} {:>10} {:>9} {:>10} {:>10}",
                    r.label,
                    r.window.name(),
                    r.n_runs,
                    fmt(r.mean),
                    fmt(r.sd),
                    fmt(r.ci_low),
                    fmt(r.ci_high)
                );
            }
            Ok(true)
        }
        Command::Welch { a, b, window, out } => {
            let w = Window::parse(&window)
                .ok_or_else(|| nstep::Error::Config(format!("unknown window `{window}`")))?;
            let r = expcli::welch_between(&out, &a, &b, w)?;
            println!("t = {:.4}, dof = {:.2}, p = {:.3e}", r.t_stat, r.dof, r.p_value);
            Ok(true)
        }
        Command::Plotdata { out, window } => {
            let rows = expcli::emit_plot_data(&out, window)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join("plot.csv").display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
