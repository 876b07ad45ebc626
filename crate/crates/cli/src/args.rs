use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phyauth::auth::RefitMode;
use phyauth::baseline::UpdateRule;
use phyauth::config::{FlatConfig, TrainingModeName};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(
    name = "phyauth",
    about = "Physical-layer message authentication from OFDM channel estimates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled trace: one training block then the test blocks.
    Simulate(SimulateArgs),
    /// Sweep detector thresholds and write ROC curves and a summary.
    Evaluate(EvaluateArgs),
    /// Train an authenticator on a trace's training block and save its state.
    Train(TrainArgs),
    /// Score every message of a trace with a saved authenticator state.
    Classify(ClassifyArgs),
    /// Print the tool version.
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Gmm,
    Mse,
    Both,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat TOML config file; flags with the same key names override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output trace path.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Trace to evaluate.
    #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
    pub trace: Option<PathBuf>,
    /// Generate the stream from the config instead of reading a trace.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "both")]
    pub detector: DetectorArg,
    /// Sweep M over 3, 6, 12, 24 and 48 carriers on paired data.
    #[arg(long)]
    pub m_sweep: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub simulate: bool,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Decision threshold stored in the state.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Output state snapshot (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Authenticator state snapshot (JSON).
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Replaces the threshold stored in the snapshot.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output CSV `msg_index,bob_posterior,verdict`.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Config keys settable from the command line, spelled as in the file.
#[derive(Debug, Default, Args)]
#[command(rename_all = "snake_case")]
pub struct Overrides {
    #[arg(long, help_heading = "Config overrides")]
    pub m_subcarriers: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub block_size: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub num_test_blocks: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub attack_intensity: Option<f64>,
    #[arg(long, help_heading = "Config overrides", allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long, help_heading = "Config overrides")]
    pub num_taps: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub delay_decay: Option<f64>,
    #[arg(long, help_heading = "Config overrides")]
    pub fft_size: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub active_carriers: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub profile_seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub bob_link_seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub eve_link_seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub noise_seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub attack_seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub fit_seed: Option<u64>,
    #[arg(long, help_heading = "Config overrides")]
    pub threshold_points: Option<usize>,
    #[arg(long, help_heading = "Config overrides")]
    pub drift_rho: Option<f64>,
    #[arg(long, help_heading = "Config overrides", value_parser = parse_enum::<TrainingModeName>)]
    pub training_mode: Option<TrainingModeName>,
    #[arg(long, help_heading = "Config overrides")]
    pub background_scale: Option<f64>,
    #[arg(long, help_heading = "Config overrides", value_parser = parse_enum::<RefitMode>)]
    pub refit_mode: Option<RefitMode>,
    #[arg(long, help_heading = "Config overrides")]
    pub standardize: Option<bool>,
    #[arg(long, help_heading = "Config overrides")]
    pub ridge_scale: Option<f64>,
    #[arg(long, help_heading = "Config overrides")]
    pub rel_tol: Option<f64>,
    #[arg(long, help_heading = "Config overrides")]
    pub max_iter: Option<usize>,
    #[arg(long, help_heading = "Config overrides", value_parser = parse_enum::<UpdateRule>)]
    pub mse_update_rule: Option<UpdateRule>,
    #[arg(long, help_heading = "Config overrides")]
    pub mse_grid_points: Option<usize>,
}

impl Overrides {
    pub fn to_flat(&self) -> FlatConfig {
        FlatConfig {
            m_subcarriers: self.m_subcarriers,
            block_size: self.block_size,
            num_test_blocks: self.num_test_blocks,
            attack_intensity: self.attack_intensity,
            snr_db: self.snr_db,
            num_taps: self.num_taps,
            delay_decay: self.delay_decay,
            fft_size: self.fft_size,
            active_carriers: self.active_carriers,
            profile_seed: self.profile_seed,
            seed: self.seed,
            bob_link_seed: self.bob_link_seed,
            eve_link_seed: self.eve_link_seed,
            noise_seed: self.noise_seed,
            attack_seed: self.attack_seed,
            fit_seed: self.fit_seed,
            threshold_points: self.threshold_points,
            drift_rho: self.drift_rho,
            training_mode: self.training_mode,
            background_scale: self.background_scale,
            refit_mode: self.refit_mode,
            standardize: self.standardize,
            ridge_scale: self.ridge_scale,
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
            mse_update_rule: self.mse_update_rule,
            mse_grid_points: self.mse_grid_points,
        }
    }
}
