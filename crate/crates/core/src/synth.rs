//! Simulated multiband sinusoidal light curves.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{wrap_phase, BandSeries, ModelParams, MultibandLightCurve};

const MAX_AMP_DRAWS: usize = 1000;

/// Simulation settings. `noise_scale = 0` produces exact model magnitudes
/// with every sigma recorded as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_curves: usize,
    pub n_bands: usize,
    pub period_range: (f64, f64),
    pub obs_per_band: usize,
    /// Per-point sigma is `noise_scale * U[0.5, 1.5]`.
    pub noise_scale: f64,
    /// Mean amplitude per band. Defaults to `0.5 * 0.85^b`.
    pub amp_mean: Option<Vec<f64>>,
    /// Range of the overall amplitude factor `c`.
    pub amp_factor_range: (f64, f64),
    /// Standard deviation of the scatter orthogonal to the mean direction,
    /// relative to the mean amplitude.
    pub amp_scatter: f64,
    /// Standard deviation of the per-band phase offsets in radians.
    pub phase_jitter: f64,
    pub base_mag: f64,
    pub time_span: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_curves: 500,
            n_bands: 5,
            period_range: (0.2, 1.0),
            obs_per_band: 30,
            noise_scale: 0.3,
            amp_mean: None,
            amp_factor_range: (0.5, 1.5),
            amp_scatter: 0.1,
            phase_jitter: 0.1,
            base_mag: 16.0,
            time_span: 1000.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_curves == 0 || self.n_bands == 0 || self.obs_per_band == 0 {
            return Err(Error::invalid("n_curves, n_bands and obs_per_band must be at least 1"));
        }
        let (lo, hi) = self.period_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::invalid(format!("period range must satisfy 0 < min < max (got {lo}, {hi})")));
        }
        let (clo, chi) = self.amp_factor_range;
        if !(clo > 0.0 && clo <= chi && chi.is_finite()) {
            return Err(Error::invalid("amplitude factor range must be positive and increasing"));
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("amp_scatter", self.amp_scatter),
            ("phase_jitter", self.phase_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be nonnegative (got {v})")));
            }
        }
        if !(self.time_span > 0.0 && self.time_span.is_finite()) {
            return Err(Error::invalid("time_span must be positive"));
        }
        if !self.base_mag.is_finite() {
            return Err(Error::invalid("base_mag must be finite"));
        }
        if let Some(a) = &self.amp_mean {
            if a.len() != self.n_bands {
                return Err(Error::invalid(format!(
                    "amp_mean has {} entries for {} bands",
                    a.len(),
                    self.n_bands
                )));
            }
            if a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::invalid("amp_mean entries must be positive"));
            }
        }
        Ok(())
    }

    pub fn mean_amplitudes(&self) -> Vec<f64> {
        self.amp_mean
            .clone()
            .unwrap_or_else(|| (0..self.n_bands).map(|b| 0.5 * 0.85f64.powi(b as i32)).collect())
    }
}

/// A simulated curve and the parameters that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCurve {
    pub curve: MultibandLightCurve,
    pub truth: ModelParams,
}

pub fn band_name(b: usize) -> String {
    const NAMES: [&str; 5] = ["u", "g", "r", "i", "z"];
    NAMES.get(b).map_or_else(|| format!("b{b}"), |s| s.to_string())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_amplitudes(rng: &mut ChaCha8Rng, cfg: &SimConfig, mean: &[f64]) -> Vec<f64> {
    let norm = mean.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dir: Vec<f64> = mean.iter().map(|a| a / norm).collect();
    let (clo, chi) = cfg.amp_factor_range;
    let c = if clo < chi { rng.random_range(clo..chi) } else { clo };
    let centre: Vec<f64> = mean.iter().map(|a| c * a).collect();
    let scale = cfg.amp_scatter * centre.iter().sum::<f64>() / centre.len() as f64;
    for _ in 0..MAX_AMP_DRAWS {
        let z: Vec<f64> = (0..mean.len()).map(|_| scale * normal(rng)).collect();
        let along: f64 = z.iter().zip(&dir).map(|(z, d)| z * d).sum();
        let amp: Vec<f64> = centre
            .iter()
            .zip(&z)
            .zip(&dir)
            .map(|((m, z), d)| m + z - along * d)
            .collect();
        if amp.iter().all(|&a| a > 0.0) {
            return amp;
        }
    }
    centre
}

fn simulate_one(cfg: &SimConfig, mean_amp: &[f64], index: usize) -> SimulatedCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (plo, phi) = cfg.period_range;
    let period = rng.random_range(plo..phi);
    let omega = 2.0 * PI / period;
    let amp = draw_amplitudes(&mut rng, cfg, mean_amp);
    let rho0 = rng.random_range(-PI..PI);
    let rho: Vec<f64> = (0..cfg.n_bands)
        .map(|_| wrap_phase(rho0 + cfg.phase_jitter * normal(&mut rng)))
        .collect();
    let beta0: Vec<f64> = (0..cfg.n_bands)
        .map(|b| cfg.base_mag - 0.2 * b as f64 + 0.5 * normal(&mut rng))
        .collect();

    let bands = (0..cfg.n_bands)
        .map(|b| {
            let mut times: Vec<f64> = (0..cfg.obs_per_band)
                .map(|_| rng.random_range(0.0..cfg.time_span))
                .collect();
            times.sort_by(f64::total_cmp);
            let mut mags = Vec::with_capacity(times.len());
            let mut sigmas = Vec::with_capacity(times.len());
            for &t in &times {
                let clean = beta0[b] + amp[b] * (omega * t + rho[b]).sin();
                if cfg.noise_scale > 0.0 {
                    let s = cfg.noise_scale * rng.random_range(0.5..1.5);
                    mags.push(clean + s * normal(&mut rng));
                    sigmas.push(s);
                } else {
                    mags.push(clean);
                    sigmas.push(1.0);
                }
            }
            BandSeries::new(band_name(b), times, mags, sigmas).expect("simulated values are valid")
        })
        .collect();
    let curve = MultibandLightCurve::new(Some(format!("sim{index:05}")), bands)
        .expect("simulated curve is valid");
    let truth = ModelParams::new(omega, beta0, amp, rho).expect("simulated parameters are valid");
    SimulatedCurve { curve, truth }
}

/// Generates `cfg.n_curves` curves. Curve `i` depends only on the seed and
/// `i`.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<SimulatedCurve>> {
    cfg.validate()?;
    let mean = cfg.mean_amplitudes();
    Ok((0..cfg.n_curves).map(|i| simulate_one(cfg, &mean, i)).collect())
}

/// Keeps a uniform random subset of `k` observations per band (all of them
/// when a band has at most `k`), preserving time order.
pub fn downsample(lc: &MultibandLightCurve, k: usize, seed: u64) -> MultibandLightCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = lc
        .bands()
        .iter()
        .map(|band| {
            if band.len() <= k {
                return band.clone();
            }
            let mut idx = sample(&mut rng, band.len(), k).into_vec();
            idx.sort_unstable();
            band.subset(&idx)
        })
        .collect();
    MultibandLightCurve::new(lc.star_id().map(str::to_owned), bands)
        .expect("subset of a valid curve is valid")
}

/// Splits into a training prefix of `n_train` curves and the rest.
pub fn train_test_split<T>(mut items: Vec<T>, n_train: usize) -> (Vec<T>, Vec<T>) {
    let test = items.split_off(n_train.min(items.len()));
    (items, test)
}
