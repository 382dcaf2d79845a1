//! Argument definitions. The parsed command is also recorded in every
//! manifest so that a run can be replayed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sps_core::fitting::{DecayModel, Weighting};
use sps_core::mc::PolMode;

/// Single-photon source toolkit: simulate detector timestamps, analyze
/// correlations and evaluate device figures of merit.
///
/// Settings come from one JSON document (`--config` or `$SPS_CONFIG`);
/// flags override the document, which overrides the built-in defaults.
#[derive(Debug, Parser)]
#[command(name = "sps", version)]
pub struct Cli {
    /// Configuration document.
    #[arg(long, env = "SPS_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate two-channel detector timestamps.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Histogram, integrate and fit recorded data.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Closed-form device figures.
    #[command(subcommand)]
    Calc(CalcCmd),
    /// Recompute the digests listed in a manifest.
    Verify { manifest: PathBuf },
    /// Replay the command recorded in a manifest into a new directory and
    /// compare the outputs.
    Reproduce {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateCmd {
    /// Start-stop correlation behind a 50:50 splitter.
    Hbt(SimArgs),
    /// Double-pulse two-photon interference.
    Hom {
        #[command(flatten)]
        #[serde(flatten)]
        common: SimArgs,
        /// Relative polarization of the interfering photons.
        #[arg(long, value_enum)]
        pol: Option<PolArg>,
    },
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Does not change the output.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub n_pulses: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolArg {
    Parallel,
    Orthogonal,
}

impl From<PolArg> for PolMode {
    fn from(p: PolArg) -> Self {
        match p {
            PolArg::Parallel => PolMode::Parallel,
            PolArg::Orthogonal => PolMode::Orthogonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Acquisition time; read from the input's manifest when omitted.
    #[arg(long)]
    pub duration_ps: Option<i64>,
    #[arg(long)]
    pub bin_width_ps: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzeCmd {
    /// Pulsed g²: histogram, window areas and peak-train fit.
    G2 {
        /// Directory holding ch0.csv and ch1.csv.
        input: PathBuf,
        #[command(flatten)]
        #[serde(flatten)]
        common: AnalyzeArgs,
    },
    /// Two-photon interference from a parallel and an orthogonal run.
    Hom {
        parallel: PathBuf,
        orthogonal: PathBuf,
        #[command(flatten)]
        #[serde(flatten)]
        common: AnalyzeArgs,
    },
    /// Visibility and retained counts against the zero-delay window.
    Sweep {
        parallel: PathBuf,
        orthogonal: PathBuf,
        #[command(flatten)]
        #[serde(flatten)]
        common: AnalyzeArgs,
        /// Half-widths of the zero-delay window, comma separated.
        #[arg(long, value_delimiter = ',')]
        windows_ps: Option<Vec<f64>>,
    },
    /// Decay fit of one channel folded onto the repetition period.
    Lifetime {
        /// A timestamp directory or a single timestamp CSV.
        input: PathBuf,
        #[command(flatten)]
        #[serde(flatten)]
        common: AnalyzeArgs,
        #[arg(long, default_value_t = 0)]
        channel: u8,
        #[arg(long, value_enum)]
        model: Option<DecayArg>,
    },
    /// Saturation curve fit of a `power_nw,counts_per_s` CSV.
    Saturation {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        weighting: Option<WeightingArg>,
    },
    /// Polarization ratio of an `angle_deg,counts_per_s` CSV.
    Polarization {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayArg {
    Single,
    Biexp,
}

impl From<DecayArg> for DecayModel {
    fn from(d: DecayArg) -> Self {
        match d {
            DecayArg::Single => DecayModel::Single,
            DecayArg::Biexp => DecayModel::Biexp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Uniform,
    Poisson,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Uniform => Weighting::Uniform,
            WeightingArg::Poisson => Weighting::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalcCmd {
    /// Purcell factor of the configured cavity and coupling geometry.
    Purcell {
        #[arg(long)]
        q: Option<f64>,
        /// Mode volume in (λ/n)³.
        #[arg(long = "v")]
        v_norm: Option<f64>,
        #[arg(long)]
        detuning_nm: Option<f64>,
        #[arg(long)]
        spatial_mismatch: Option<f64>,
        #[arg(long)]
        pol_mismatch: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Purcell factor over a grid around a calibrated mode profile, as CSV.
    PurcellMap {
        #[arg(long)]
        q: Option<f64>,
        #[arg(long = "v")]
        v_norm: Option<f64>,
        #[arg(long)]
        step_nm: Option<f64>,
        #[arg(long)]
        half_extent_nm: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chained collection-path efficiency.
    Budget {
        /// JSON list of stages; defaults to the configured stages.
        #[arg(long)]
        stages: Option<PathBuf>,
        /// Append the detector quantum efficiency.
        #[arg(long)]
        with_detector: bool,
        /// Detected photons per pulse, to infer the first-lens efficiency.
        #[arg(long)]
        detected_prob: Option<f64>,
        /// g²(0) used to remove the multi-photon share of the inferred
        /// efficiency.
        #[arg(long)]
        g2: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fraction of emission into the cavity mode from the two lifetimes.
    Beta {
        #[arg(long = "tau-c")]
        tau_c_ps: f64,
        #[arg(long = "tau-uc")]
        tau_uc_ps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    /// The same command writing into `dir` instead. Commands that write a
    /// single file keep its name.
    pub fn redirected(&self, dir: &Path) -> Command {
        let mut c = self.clone();
        let file_into = |out: &mut Option<PathBuf>| {
            if let Some(p) = out {
                *p = dir.join(p.file_name().unwrap_or_default());
            }
        };
        match &mut c {
            Command::Simulate(SimulateCmd::Hbt(a)) | Command::Simulate(SimulateCmd::Hom { common: a, .. }) => {
                a.out = dir.to_path_buf()
            }
            Command::Analyze(a) => match a {
                AnalyzeCmd::G2 { common, .. }
                | AnalyzeCmd::Hom { common, .. }
                | AnalyzeCmd::Sweep { common, .. }
                | AnalyzeCmd::Lifetime { common, .. } => common.out = dir.to_path_buf(),
                AnalyzeCmd::Saturation { out, .. } | AnalyzeCmd::Polarization { out, .. } => *out = dir.to_path_buf(),
            },
            Command::Calc(cc) => match cc {
                CalcCmd::Purcell { out, .. }
                | CalcCmd::PurcellMap { out, .. }
                | CalcCmd::Budget { out, .. }
                | CalcCmd::Beta { out, .. } => file_into(out),
            },
            Command::Verify { .. } | Command::Reproduce { .. } => {}
        }
        c
    }
}
