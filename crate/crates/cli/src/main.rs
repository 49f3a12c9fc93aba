use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ifr_cli::commands::{self, CommandError, FitOptions, SimulateOptions};
use ifr_cli::config::RunSettings;
use ifr_core::simulation::ModelVariant;

/// Bayesian IFR estimation under preferential testing.
#[derive(Parser)]
#[command(name = "ifr", version, about)]
struct Cli {
    /// Key-value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    shared: SharedArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SharedArgs {
    /// Root seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of MCMC chains.
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Draws per chain.
    #[arg(long, global = true)]
    draws: Option<u64>,
    /// Burn-in fraction of each chain.
    #[arg(long, global = true)]
    burn_in: Option<f64>,
    /// Keep every n-th post-burn-in draw.
    #[arg(long, global = true)]
    thin: Option<u64>,
    /// Rate of the exponential prior on the preferentiality bound gamma.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Scale of the half-normal prior on the IFR heterogeneity tau.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Fixed-effects variant (tau = 0).
    #[arg(long, global = true)]
    fixed_effects: bool,
    /// Directory for output files.
    #[arg(long, global = true)]
    output_dir: Option<String>,
}

impl SharedArgs {
    fn to_settings(&self) -> RunSettings {
        RunSettings {
            seed: self.seed,
            chains: self.chains,
            draws: self.draws,
            burn_in: self.burn_in,
            thin: self.thin,
            lambda: self.lambda,
            eta: self.eta,
            fixed_effects: if self.fixed_effects { Some(true) } else { None },
            output_dir: self.output_dir.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the hierarchical model to a dataset CSV.
    Fit {
        /// Dataset CSV path.
        #[arg(long)]
        data: PathBuf,
        /// Use only the known-random seroprevalence rows (drops covariates).
        #[arg(long)]
        sero_only: bool,
        /// Ignore the covariate columns.
        #[arg(long)]
        no_covariates: bool,
        /// Fit the two-parameter single-group model to one labeled row.
        #[arg(long)]
        single_group: Option<String>,
        /// HPD probability for reported intervals.
        #[arg(long, default_value_t = 0.95)]
        hpd_prob: f64,
    },
    /// Run the simulation study over prior and preferentiality grids.
    Simulate {
        /// Preferentiality bounds (comma separated).
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        /// Exponential prior rates (comma separated).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Half-normal prior scales (comma separated).
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        /// Replicates.
        #[arg(long)]
        reps: Option<usize>,
        /// Run the complete published design (multi-day compute).
        #[arg(long)]
        full_design: bool,
        /// Model variants to fit.
        #[arg(long, value_delimiter = ',', default_values = ["M1", "M2", "M3"])]
        models: Vec<String>,
    },
    /// Compute identification intervals from asymptotic signals.
    Identify {
        /// CSV of a,b,phi_lo,phi_hi rows (with header).
        #[arg(long)]
        input: PathBuf,
        /// Cap on the cross-group IFR standard deviation.
        #[arg(long, default_value_t = 0.0)]
        tau_bar: f64,
        /// Grid step of the membership scan.
        #[arg(long)]
        grid_step: Option<f64>,
    },
    /// Convert a reported 95% CI into effective binomial counts.
    InvertCi {
        #[arg(long)]
        lower: f64,
        #[arg(long)]
        upper: f64,
    },
    /// Summarize a draws CSV produced by `fit`.
    Summarize {
        /// Draws CSV path.
        #[arg(long)]
        draws_csv: PathBuf,
        /// HPD probability.
        #[arg(long, default_value_t = 0.95)]
        hpd_prob: f64,
    },
}

fn parse_models(names: &[String]) -> Result<Vec<ModelVariant>, CommandError> {
    names
        .iter()
        .map(|n| match n.as_str() {
            "M1" | "m1" => Ok(ModelVariant::M1),
            "M2" | "m2" => Ok(ModelVariant::M2),
            "M3" | "m3" => Ok(ModelVariant::M3),
            other => Err(CommandError::Data(anyhow::anyhow!(
                "unknown model variant {other:?} (expected M1, M2, or M3)"
            ))),
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let mut settings = match &cli.config {
        Some(path) => RunSettings::from_file(path)?,
        None => RunSettings::default(),
    };
    settings = settings.overridden_by(&cli.shared.to_settings());

    match cli.command {
        Command::Fit {
            data,
            sero_only,
            no_covariates,
            single_group,
            hpd_prob,
        } => {
            let options = FitOptions {
                data,
                sero_only,
                no_covariates,
                single_group,
                hpd_prob,
            };
            let report = commands::fit(&options, &settings)?;
            println!(
                "fit complete: {} groups, converged = {}, max R-hat = {:.4}",
                report.n_groups, report.converged, report.max_rhat
            );
            for s in &report.globals_probability_scale {
                println!(
                    "  {}: median {:.4}% [{:.4}%, {:.4}%] ({}% HPD)",
                    s.parameter,
                    100.0 * s.median,
                    100.0 * s.hpd_lower,
                    100.0 * s.hpd_upper,
                    (100.0 * s.hpd_prob).round()
                );
            }
            Ok(())
        }
        Command::Simulate {
            gammas,
            lambdas,
            etas,
            reps,
            full_design,
            models,
        } => {
            let options = SimulateOptions {
                gammas,
                lambdas,
                etas,
                reps,
                full_design,
                models: parse_models(&models)?,
            };
            let n = commands::simulate(&options, &settings)?;
            println!("simulation complete: {n} fits recorded");
            Ok(())
        }
        Command::Identify {
            input,
            tau_bar,
            grid_step,
        } => {
            let report = commands::identify(&input, tau_bar, grid_step, &settings)?;
            match &report.global {
                Some(g) => println!("global interval: [{:.4}, {:.4}]", g.lower, g.upper),
                None => println!("global interval: empty"),
            }
            Ok(())
        }
        Command::InvertCi { lower, upper } => {
            let report = commands::invert_ci(lower, upper)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::Summarize { draws_csv, hpd_prob } => {
            let summaries = commands::summarize(&draws_csv, hpd_prob)?;
            println!("{}", serde_json::to_string_pretty(&summaries).unwrap());
            Ok(())
        }
    }
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
