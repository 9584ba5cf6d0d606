use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pep_cli::{
    cmd_compare, cmd_fit, cmd_gen_data, cmd_plan, cmd_replan, exit_code, parse_alpha, resolve_scenario, DataKind,
    Models, DEFAULT_N_SEEDS,
};
use pep_core::replan::ReplanOptions;
use pep_core::Result;

#[derive(Parser)]
#[command(name = "pep", version, about = "Perception- and energy-aware UAV trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a reference law.
    GenData {
        /// `uncertainty` or `power`.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_per_speed: Option<usize>,
    },
    /// Fit a model to a dataset.
    Fit {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan one trajectory.
    Plan {
        /// Bundled scenario name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// Directory holding uncertainty.json and energy.json.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Number or preset (direct, proposed, hpq); defaults to the scenario's value.
        #[arg(long)]
        alpha_p: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare perception weights over several seeds.
    Compare {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Comma-separated numbers or presets.
        #[arg(long, value_delimiter = ',', default_value = "direct,proposed,hpq")]
        alphas: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_N_SEEDS)]
        n_seeds: usize,
        /// First seed; runs use `seed..seed + n_seeds`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Receding-horizon flights with progressive map discovery.
    Replan {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value = "proposed")]
        alpha_p: String,
        #[arg(long, default_value_t = 3)]
        n_seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Meters flown between replans.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        drift_limit: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn seeds(first: u64, n: usize) -> Vec<u64> {
    (first..first + n as u64).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            kind,
            out,
            seed,
            n_per_speed,
        } => {
            let rows = cmd_gen_data(DataKind::parse(&kind)?, &out, seed, n_per_speed)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Fit { kind, data, out } => {
            let summary = cmd_fit(DataKind::parse(&kind)?, &data, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Plan {
            scenario,
            models,
            alpha_p,
            seed,
            out,
        } => {
            let s = resolve_scenario(&scenario)?;
            let alpha = alpha_p.as_deref().map(parse_alpha).transpose()?;
            let m = Models::load(models.as_deref())?;
            let t = cmd_plan(&s, &m, alpha, seed, &out)?;
            println!(
                "energy {:.1} J, perception {:.1}, duration {:.1} s, {} samples",
                t.total_energy_j, t.total_perception, t.duration_s, t.n_samples_used
            );
        }
        Command::Compare {
            scenario,
            models,
            alphas,
            n_seeds,
            seed,
            out,
        } => {
            let s = resolve_scenario(&scenario)?;
            let alphas = alphas.iter().map(|a| parse_alpha(a)).collect::<Result<Vec<_>>>()?;
            let m = Models::load(models.as_deref())?;
            let reports = cmd_compare(&s, &m, &alphas, &seeds(seed, n_seeds), &out)?;
            print!("{}", pep_cli::render_markdown(&reports));
        }
        Command::Replan {
            scenario,
            models,
            alpha_p,
            n_seeds,
            seed,
            horizon,
            drift_limit,
            out,
        } => {
            let s = resolve_scenario(&scenario)?;
            let m = Models::load(models.as_deref())?;
            let mut opts = ReplanOptions::default();
            if let Some(h) = horizon {
                opts.horizon = h;
            }
            if let Some(l) = drift_limit {
                opts.drift.drift_limit = l;
            }
            let rows = cmd_replan(&s, &m, parse_alpha(&alpha_p)?, &seeds(seed, n_seeds), &opts, &out)?;
            let ok = rows.iter().filter(|r| r.success).count();
            println!("{ok}/{} flights reached the goal", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
