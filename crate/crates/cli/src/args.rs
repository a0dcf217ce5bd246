use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use pgls_core::Method;
use serde::{Deserialize, Deserializer};

#[derive(Debug, Parser)]
#[command(name = "pgls", version, about = "Shared-period estimation for multiband light curves")]
pub struct Cli {
    /// JSON file with default values for the subcommand's options
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, env = "PGLS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the period of every star in a light-curve file
    Fit(FitArgs),
    /// Choose penalty strengths from historical and poorly sampled curves
    Tune(TuneArgs),
    /// Write simulated light curves and their true parameters
    Simulate(SimulateArgs),
    /// Keep a random subset of observations per band
    Downsample(DownsampleArgs),
    /// Score period estimates against true periods
    Evaluate(EvaluateArgs),
    /// Write the objective over the frequency grid for one star
    Periodogram(PeriodogramArgs),
}

/// A penalty strength or `auto` to tune it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Value(f64),
    Auto,
}

impl FromStr for Gamma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Gamma::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Gamma::Value(v)),
            _ => Err(format!("expected a nonnegative number or \"auto\", got {s:?}")),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Gamma::from_str(&v.to_string()),
            Raw::Text(s) => Gamma::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

fn deserialize_method<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Method>, D::Error> {
    Option::<String>::deserialize(d)?
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .transpose()
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Light-curve CSV with header star_id,band,time,mag,sigma
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// mgls or pgls [default: pgls]
    #[arg(long)]
    #[serde(deserialize_with = "deserialize_method")]
    pub method: Option<Method>,
    /// Shortest period searched [default: 0.2]
    #[arg(long)]
    pub period_min: Option<f64>,
    /// Longest period searched [default: 1.0]
    #[arg(long)]
    pub period_max: Option<f64>,
    /// Widen the grid spacing so that at most this many frequencies are used
    #[arg(long)]
    pub grid_cap: Option<usize>,
    /// Amplitude penalty strength or "auto" [default: taken from --penalty, else 0]
    #[arg(long)]
    pub gamma1: Option<Gamma>,
    /// Phase penalty strength or "auto" [default: taken from --penalty, else 0]
    #[arg(long)]
    pub gamma2: Option<Gamma>,
    /// Reference amplitude direction, comma separated in band order
    #[arg(long, value_delimiter = ',')]
    pub a_tilde: Option<Vec<f64>>,
    /// JSON written by the tune subcommand
    #[arg(long)]
    pub penalty: Option<PathBuf>,
    /// Well-sampled curves used when a strength is "auto"
    #[arg(long)]
    pub historical: Option<PathBuf>,
    /// Number of input curves used for tuning when a strength is "auto" [default: 100]
    #[arg(long)]
    pub tune_count: Option<usize>,
    /// Stop the pruned search after this many penalized fits per star
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Coordinate descent rounds per frequency [default: 1000]
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Relative parameter change that ends coordinate descent [default: 1e-8]
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Write one periodogram CSV per star into this directory
    #[arg(long)]
    pub periodogram_dir: Option<PathBuf>,
    /// Evaluate the penalized objective at every frequency for periodograms
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full_pnll: Option<bool>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneArgs {
    /// Well-sampled light curves
    #[arg(long)]
    pub historical: Option<PathBuf>,
    /// Poorly sampled light curves whose fits are matched to the historical scatter
    #[arg(long)]
    pub tune_set: Option<PathBuf>,
    /// Output JSON (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Shortest period searched [default: 0.2]
    #[arg(long)]
    pub period_min: Option<f64>,
    /// Longest period searched [default: 1.0]
    #[arg(long)]
    pub period_max: Option<f64>,
    /// Widen the grid spacing so that at most this many frequencies are used
    #[arg(long)]
    pub grid_cap: Option<usize>,
    /// Lower end of the strength bracket [default: 1e-3]
    #[arg(long)]
    pub gamma_min: Option<f64>,
    /// Upper end of the strength bracket [default: 1e6]
    #[arg(long)]
    pub gamma_max: Option<f64>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Light-curve CSV to write
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// CSV of true parameters to write
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Number of stars [default: 500]
    #[arg(long)]
    pub n_curves: Option<usize>,
    /// Bands per star, named u, g, r, i, z, b5, ... [default: 5]
    #[arg(long)]
    pub n_bands: Option<usize>,
    /// Observations per band [default: 30]
    #[arg(long)]
    pub obs_per_band: Option<usize>,
    /// Typical per-point magnitude error [default: 0.3]
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Shortest true period [default: 0.2]
    #[arg(long)]
    pub period_min: Option<f64>,
    /// Longest true period [default: 1.0]
    #[arg(long)]
    pub period_max: Option<f64>,
    /// Observation times are uniform on [0, time_span] days [default: 1000]
    #[arg(long)]
    pub time_span: Option<f64>,
    /// Orthogonal amplitude scatter relative to the mean amplitude [default: 0.1]
    #[arg(long)]
    pub amp_scatter: Option<f64>,
    /// Per-band phase jitter in radians [default: 0.1]
    #[arg(long)]
    pub phase_jitter: Option<f64>,
    /// Star i uses stream i of this seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownsampleArgs {
    /// Light-curve CSV to subsample
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Light-curve CSV to write
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Observations kept per band
    #[arg(long, short)]
    pub k: Option<usize>,
    /// Star i is subsampled with seed + i [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Fit output CSVs (any number of methods)
    #[arg(long, num_args = 1..)]
    pub estimates: Option<Vec<PathBuf>>,
    /// CSV with columns star_id,period
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Per-star report CSV
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodogramArgs {
    /// Light-curve CSV with header star_id,band,time,mag,sigma
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Star to use [default: the first in the file]
    #[arg(long)]
    pub star: Option<String>,
    /// Shortest period searched [default: 0.2]
    #[arg(long)]
    pub period_min: Option<f64>,
    /// Longest period searched [default: 1.0]
    #[arg(long)]
    pub period_max: Option<f64>,
    /// Widen the grid spacing so that at most this many frequencies are used
    #[arg(long)]
    pub grid_cap: Option<usize>,
    /// Adds the penalized objective column
    #[arg(long)]
    pub gamma1: Option<f64>,
    /// Phase penalty strength
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// Reference amplitude direction, comma separated in band order
    #[arg(long, value_delimiter = ',')]
    pub a_tilde: Option<Vec<f64>>,
    /// JSON written by the tune subcommand
    #[arg(long)]
    pub penalty: Option<PathBuf>,
}

/// Fills every unset field of `flags` from `file`.
pub trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! merge_impl {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Merge for $t {
            fn merge(self, file: Self) -> Self {
                Self { $($f: self.$f.or(file.$f)),* }
            }
        }
    };
}

merge_impl!(FitArgs {
    input, output, method, period_min, period_max, grid_cap, gamma1, gamma2, a_tilde, penalty,
    historical, tune_count, max_evals, max_rounds, rel_tol, periodogram_dir, full_pnll,
});
merge_impl!(TuneArgs { historical, tune_set, output, period_min, period_max, grid_cap, gamma_min, gamma_max });
merge_impl!(SimulateArgs {
    output, truth, n_curves, n_bands, obs_per_band, noise_scale, period_min, period_max, time_span,
    amp_scatter, phase_jitter, seed,
});
merge_impl!(DownsampleArgs { input, output, k, seed });
merge_impl!(EvaluateArgs { estimates, truth, output });
merge_impl!(PeriodogramArgs {
    input, output, star, period_min, period_max, grid_cap, gamma1, gamma2, a_tilde, penalty,
});
