//! WebAssembly bindings for the periodogram explorer in `www/`.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and run natively as well.

use std::f64::consts::PI;

use pgls_core::grid::GridSpec;
use pgls_core::model::uniform_direction;
use pgls_core::pruning::{pgls_with_schedule, PglsOptions, Schedule};
use pgls_core::synth::{simulate as run_simulation, SimConfig};
use pgls_core::mgls::mgls_from_profile;
use pgls_core::{profile_objectives, BandSeries, ModelParams, MultibandLightCurve, PenaltyConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Frequencies shown in the browser; keeps a search under a second.
const DEMO_GRID_CAP: usize = 4000;
/// Points plotted per model curve.
const MODEL_POINTS: usize = 200;

#[derive(Debug, Serialize, Deserialize)]
pub struct Band {
    pub band: String,
    pub t: Vec<f64>,
    pub m: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Curve {
    pub bands: Vec<Band>,
    pub true_period: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Params {
    pub period: f64,
    pub beta0: Vec<f64>,
    pub amp: Vec<f64>,
    pub rho: Vec<f64>,
}

impl From<&ModelParams> for Params {
    fn from(p: &ModelParams) -> Self {
        Self {
            period: p.period(),
            beta0: p.beta0.clone(),
            amp: p.amp.clone(),
            rho: p.rho.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Search {
    pub omega: Vec<f64>,
    /// Null where every band's regression is degenerate.
    pub nll: Vec<Option<f64>>,
    /// Penalized objective where the pruned search evaluated it.
    pub f: Vec<Option<f64>>,
    pub mgls: Params,
    pub pgls: Params,
    pub pnll_evals: usize,
}

#[derive(Debug, Serialize)]
pub struct FoldedBand {
    pub band: String,
    pub phase: Vec<f64>,
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    pub model_phase: Vec<f64>,
    pub model_m: Vec<f64>,
}

fn to_curve(c: &Curve) -> Result<MultibandLightCurve, String> {
    let bands = c
        .bands
        .iter()
        .map(|b| BandSeries::new(b.band.clone(), b.t.clone(), b.m.clone(), b.s.clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    MultibandLightCurve::new(None, bands).map_err(|e| e.to_string())
}

fn parse<'a, T: Deserialize<'a>>(json: &'a str, what: &str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad {what}: {e}"))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// One simulated five-band curve.
pub fn simulate_json(seed: u64, obs_per_band: usize, noise: f64) -> Result<String, String> {
    let cfg = SimConfig {
        n_curves: 1,
        obs_per_band,
        noise_scale: noise,
        seed,
        ..SimConfig::default()
    };
    let sim = run_simulation(&cfg).map_err(|e| e.to_string())?.remove(0);
    let curve = Curve {
        bands: sim
            .curve
            .bands()
            .iter()
            .map(|b| Band {
                band: b.band_id().to_owned(),
                t: b.times().to_vec(),
                m: b.mags().to_vec(),
                s: b.sigmas().to_vec(),
            })
            .collect(),
        true_period: Some(sim.truth.period()),
    };
    to_json(&curve)
}

/// Likelihood profile plus MGLS and PGLS estimates.
pub fn search_json(curve: &str, gamma1: f64, gamma2: f64, period_min: f64, period_max: f64) -> Result<String, String> {
    let curve: Curve = parse(curve, "curve")?;
    let lc = to_curve(&curve)?;
    let spec = GridSpec::new(period_min, period_max).with_cap(DEMO_GRID_CAP);
    let grid = spec.for_curve(&lc).map_err(|e| e.to_string())?;
    let profile = profile_objectives(&lc, &grid);
    let mgls = mgls_from_profile(&lc, &grid, &profile).map_err(|e| e.to_string())?;
    let cfg = PenaltyConfig::new(gamma1, gamma2, uniform_direction(lc.n_bands())).map_err(|e| e.to_string())?;
    let schedule = Schedule::from_profile(&profile, None);
    let (pgls, stats) =
        pgls_with_schedule(&lc, &grid, &schedule, &cfg, &PglsOptions::default()).map_err(|e| e.to_string())?;
    let mut f = vec![None; grid.len()];
    for (i, v) in stats.evaluated {
        f[i] = Some(v);
    }
    to_json(&Search {
        omega: grid.freqs().to_vec(),
        nll: profile
            .values
            .iter()
            .zip(&profile.excluded)
            .map(|(&v, &ex)| (!ex).then_some(v))
            .collect(),
        f,
        mgls: Params::from(&mgls.params),
        pgls: Params::from(&pgls.params),
        pnll_evals: stats.pnll_evals,
    })
}

/// Observations folded at `params.period`, with the fitted sinusoids.
pub fn fold_json(curve: &str, params: &str) -> Result<String, String> {
    let curve: Curve = parse(curve, "curve")?;
    let p: Params = parse(params, "parameters")?;
    if !(p.period > 0.0 && p.period.is_finite()) {
        return Err("period must be positive".into());
    }
    if [p.beta0.len(), p.amp.len(), p.rho.len()].iter().any(|&n| n != curve.bands.len()) {
        return Err("parameters do not match the number of bands".into());
    }
    let folded: Vec<FoldedBand> = curve
        .bands
        .iter()
        .enumerate()
        .map(|(b, band)| {
            let model_phase: Vec<f64> = (0..MODEL_POINTS).map(|k| k as f64 / (MODEL_POINTS - 1) as f64).collect();
            FoldedBand {
                band: band.band.clone(),
                phase: band.t.iter().map(|t| (t / p.period).rem_euclid(1.0)).collect(),
                m: band.m.clone(),
                s: band.s.clone(),
                model_m: model_phase
                    .iter()
                    .map(|x| p.beta0[b] + p.amp[b] * (2.0 * PI * x + p.rho[b]).sin())
                    .collect(),
                model_phase,
            }
        })
        .collect();
    to_json(&folded)
}

#[wasm_bindgen]
pub fn simulate(seed: u32, obs_per_band: u32, noise: f64) -> Result<String, JsError> {
    simulate_json(seed.into(), obs_per_band as usize, noise).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn search(curve: &str, gamma1: f64, gamma2: f64, period_min: f64, period_max: f64) -> Result<String, JsError> {
    search_json(curve, gamma1, gamma2, period_min, period_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fold(curve: &str, params: &str) -> Result<String, JsError> {
    fold_json(curve, params).map_err(|e| JsError::new(&e))
}
