use std::path::PathBuf;

use bayesdose_core::acquisition::{AcquisitionKind, NoiseScale};
use bayesdose_core::design::{DesignConfig, Preset};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::Usage;

#[derive(Debug, Parser)]
#[command(
    name = "bayesdose",
    version,
    about = "Bayesian optimization for multi-agent dose-finding trials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Monte-Carlo replicates of a design against a scenario.
    Simulate(SimulateArgs),
    /// Propose stopping thresholds from a pilot run without stopping.
    CalibrateDelta(CalibrateArgs),
    /// Check scenario truth tables against their surfaces.
    ValidateScenarios(ValidateArgs),
    /// Conduct a trial from the command line against a local data directory.
    #[command(subcommand)]
    Trial(TrialCommand),
    /// Serve the trial HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignName {
    Standard,
    Personalized,
    #[value(name = "S1", alias = "s1")]
    S1,
    #[value(name = "S2", alias = "s2")]
    S2,
    #[value(name = "P1", alias = "p1")]
    P1,
    #[value(name = "P2", alias = "p2")]
    P2,
}

impl DesignName {
    pub fn label(self) -> &'static str {
        match self {
            DesignName::Standard => "standard",
            DesignName::Personalized => "personalized",
            DesignName::S1 => "S1",
            DesignName::S2 => "S2",
            DesignName::P1 => "P1",
            DesignName::P2 => "P2",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseScaleArg {
    ObservationSd,
    RelativeNugget,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AcquisitionArg {
    Aei,
    Ei,
}

/// Design settings; each flag overrides the matching field of the chosen design.
#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Base design: `standard`, `personalized` or a preset (S1, S2, P1, P2).
    #[arg(long, value_enum, default_value = "standard")]
    pub design: DesignName,
    /// Binary covariates for personalized designs [default: the scenario's, or 1].
    #[arg(long)]
    pub covariates: Option<usize>,
    /// Patients per suggested dose per cohort.
    #[arg(long)]
    pub r: Option<usize>,
    /// Initial Sobol doses (per stratum when personalized).
    #[arg(long)]
    pub c0: Option<usize>,
    /// Maximum total sample size.
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    /// Stopping threshold on the grid maximum of the acquisition; 0 disables stopping.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "grid-step")]
    pub grid_step: Option<f64>,
    /// Multiplier on the posterior sd in the effective-best-point rule.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Consecutive iterations below delta needed to stop a stratum.
    #[arg(long)]
    pub consecutive: Option<usize>,
    /// Keep a stopped stratum's slots unused instead of reallocating them.
    #[arg(long)]
    pub no_reallocate: bool,
    #[arg(long, value_enum)]
    pub noise_scale: Option<NoiseScaleArg>,
    #[arg(long, value_enum)]
    pub acquisition: Option<AcquisitionArg>,
    /// Joint posterior draws used for the final recommendation.
    #[arg(long)]
    pub posterior_draws: Option<usize>,
    /// JSON design configuration used as the base instead of `--design`.
    #[arg(long, value_name = "FILE", conflicts_with = "design")]
    pub design_file: Option<PathBuf>,
}

impl DesignArgs {
    /// Resolves the flags into a validated configuration. `default_covariates`
    /// applies when `--covariates` is absent.
    pub fn resolve(&self, default_covariates: usize) -> Result<DesignConfig, Usage> {
        let p = self.covariates.unwrap_or(default_covariates);
        let mut c = match &self.design_file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Usage(format!("invalid design file {}: {e}", path.display())))?
            }
            None => match self.design {
                DesignName::Standard => DesignConfig::standard(),
                DesignName::Personalized => DesignConfig::personalized(p),
                DesignName::S1 => DesignConfig::preset(Preset::S1, p),
                DesignName::S2 => DesignConfig::preset(Preset::S2, p),
                DesignName::P1 => DesignConfig::preset(Preset::P1, p),
                DesignName::P2 => DesignConfig::preset(Preset::P2, p),
            },
        };
        if let Some(v) = self.r {
            c.cohort_size = v;
        }
        if let Some(v) = self.c0 {
            c.initial_doses = v;
        }
        if let Some(v) = self.n_max {
            c.max_n = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.grid_step {
            c.grid_step = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.consecutive {
            c.consecutive_required = v;
        }
        if self.no_reallocate {
            c.reallocate = false;
        }
        if let Some(v) = self.noise_scale {
            c.noise_scale = match v {
                NoiseScaleArg::ObservationSd => NoiseScale::ObservationSd,
                NoiseScaleArg::RelativeNugget => NoiseScale::RelativeNugget,
            };
        }
        if let Some(v) = self.acquisition {
            c.acquisition = match v {
                AcquisitionArg::Aei => AcquisitionKind::Aei,
                AcquisitionArg::Ei => AcquisitionKind::Ei,
            };
        }
        if let Some(v) = self.posterior_draws {
            c.posterior_draws = v;
        }
        let problems = c.problems();
        if !problems.is_empty() {
            let lines: Vec<String> = problems
                .iter()
                .map(|p| format!("  {}: {}", flag_for(&p.field), p.message))
                .collect();
            return Err(Usage(format!("invalid design:\n{}", lines.join("\n"))));
        }
        Ok(c)
    }

    pub fn label(&self) -> &'static str {
        if self.design_file.is_some() {
            "custom"
        } else {
            self.design.label()
        }
    }
}

fn flag_for(field: &str) -> String {
    match field {
        "cohort_size" => "--r".into(),
        "initial_doses" => "--c0".into(),
        "max_n" => "--n-max".into(),
        "consecutive_required" => "--consecutive".into(),
        other => format!("--{}", other.replace('_', "-")),
    }
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    /// Built-in scenario name (s1, s2, s3, implant) or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Monte-Carlo replicates.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Master seed; replicate seeds are derived from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Posterior draws per RPSEL evaluation.
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub metric_draws: u64,
    /// Label written to every record [default: the design name].
    #[arg(long)]
    pub label: Option<String>,
    /// Output directory [default: runs/<scenario>-<label>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub mc: MonteCarloArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub mc: MonteCarloArgs,
    /// Target sample size at which trials should stop; repeat or comma-separate for several.
    #[arg(long = "target-n", required = true, value_delimiter = ',')]
    pub target_n: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Validate these scenario files instead of the built-ins.
    #[arg(long = "scenario-file", value_name = "FILE")]
    pub scenario_file: Vec<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Directory holding one subdirectory per trial.
    #[arg(long, env = "BAYESDOSE_DATA_DIR", default_value = "trials")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TrialCommand {
    /// Create a trial and print its initial assignments.
    Create {
        #[command(flatten)]
        store: StoreArgs,
        /// Trial id [default: random].
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        design: DesignArgs,
        /// Trial seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Submit outcomes from a JSON file (`-` for stdin): either a list of
    /// `{stratum, dose, response}` or `{cohort_id, outcomes}`.
    Submit {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        id: String,
        #[arg(long, value_name = "FILE")]
        outcomes: String,
    },
    /// Print the trial state.
    Show {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        id: String,
    },
    /// Print the posterior surface for one stratum.
    Posterior {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 0)]
        stratum: usize,
    },
    /// Print the current optimal-dose recommendation.
    Recommend {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[command(flatten)]
    pub store: StoreArgs,
}
