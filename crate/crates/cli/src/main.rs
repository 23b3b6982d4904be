use clap::{Parser, Subcommand};
use particle_em_cli::error::{CliError, CliResult};
use particle_em_cli::experiment::{load_config, run_experiment};
use particle_em_cli::spectral;
use particle_em_cli::verify::{run_suite, Suite};
use std::path::PathBuf;
use std::process::ExitCode;

/// Particle-based maximum marginal likelihood experiments.
#[derive(Parser)]
#[command(name = "particle-em", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file (TOML) or replay a manifest.json.
    Run {
        config: PathBuf,
        /// Overrides the sampler seed of the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the file.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a self-check suite: gradients, oracles or stationarity.
    Verify { suite: Suite },
    /// Print spectral radii of the toy mean-field recursions as CSV.
    Spectral {
        #[arg(long)]
        dx: usize,
        #[arg(long, default_value_t = 0.01)]
        hmin: f64,
        #[arg(long, default_value_t = 1.5)]
        hmax: f64,
        #[arg(long, default_value_t = 150)]
        steps: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, seed, output_dir } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let report = run_experiment(&cfg)?;
            for (name, s) in &report.metrics.summary {
                println!("{name:<20} {:>14.6e} ± {:.3e}  (n={})", s.mean, s.std, s.n);
            }
            println!("outputs in {}", report.output_dir.display());
            Ok(())
        }
        Command::Verify { suite } => {
            let report = run_suite(suite);
            for c in &report.checks {
                println!("{c}");
            }
            if let Some(t) = report.tightest() {
                println!("tightest margin: {} ({:.3} of limit)", t.name, t.value / t.limit);
            }
            if report.passed() {
                Ok(())
            } else {
                let failed = report.checks.iter().filter(|c| !c.passed()).count();
                Err(CliError::verify(format!("{failed} check(s) failed")))
            }
        }
        Command::Spectral { dx, hmin, hmax, steps, out } => {
            if dx == 0 {
                return Err(CliError::config("--dx must be positive"));
            }
            if !(hmin > 0.0 && hmax >= hmin) || steps == 0 {
                return Err(CliError::config("need 0 < hmin <= hmax and steps >= 1"));
            }
            let csv = spectral::csv(dx, &spectral::h_grid(hmin, hmax, steps));
            match out {
                Some(p) => particle_em::io::write_atomic(&p, csv.as_bytes())?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // Usage errors are configuration errors; help and version exit cleanly.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("particle-em: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
