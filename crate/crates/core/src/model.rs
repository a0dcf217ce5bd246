//! Data model for multiband light curves and the sinusoidal likelihood.
//!
//! Each band `b` is modelled as `a_b sin(omega t + rho_b) + beta0_b` with
//! Gaussian errors of known standard deviation. The negative log likelihood
//! drops the normalising constant and keeps the factor of one half, so that
//! it is exactly the weighted residual sum of squares divided by two.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-12;

/// Observations of one star in one photometric band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSeries {
    band_id: String,
    times: Vec<f64>,
    mags: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

impl BandSeries {
    pub fn new(
        band_id: impl Into<String>,
        times: Vec<f64>,
        mags: Vec<f64>,
        sigmas: Vec<f64>,
    ) -> Result<Self> {
        let band_id = band_id.into();
        if times.len() != mags.len() || times.len() != sigmas.len() {
            return Err(Error::invalid(format!(
                "band {band_id}: times, mags and sigmas differ in length ({}, {}, {})",
                times.len(),
                mags.len(),
                sigmas.len()
            )));
        }
        for (i, ((&t, &m), &s)) in times.iter().zip(&mags).zip(&sigmas).enumerate() {
            if !t.is_finite() || !m.is_finite() || !s.is_finite() {
                return Err(Error::invalid(format!(
                    "band {band_id}: non-finite value at observation {i}"
                )));
            }
            if s <= 0.0 {
                return Err(Error::invalid(format!(
                    "band {band_id}: sigma must be positive at observation {i} (got {s})"
                )));
            }
        }
        let weights = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
        Ok(Self {
            band_id,
            times,
            mags,
            sigmas,
            weights,
        })
    }

    pub fn band_id(&self) -> &str {
        &self.band_id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mags(&self) -> &[f64] {
        &self.mags
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Inverse variances `sigma^-2`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keeps the observations at `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            band_id: self.band_id.clone(),
            times: pick(&self.times),
            mags: pick(&self.mags),
            sigmas: pick(&self.sigmas),
            weights: pick(&self.weights),
        }
    }
}

/// All bands observed for one star.
#[derive(Debug, Clone, PartialEq)]
pub struct MultibandLightCurve {
    star_id: Option<String>,
    bands: Vec<BandSeries>,
}

impl MultibandLightCurve {
    pub fn new(star_id: Option<String>, bands: Vec<BandSeries>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("a light curve needs at least one band"));
        }
        if bands.iter().all(BandSeries::is_empty) {
            return Err(Error::invalid("a light curve needs at least one observation"));
        }
        let mut seen = HashSet::new();
        for band in &bands {
            if !seen.insert(band.band_id()) {
                return Err(Error::invalid(format!("duplicate band id {}", band.band_id())));
            }
        }
        Ok(Self { star_id, bands })
    }

    pub fn star_id(&self) -> Option<&str> {
        self.star_id.as_deref()
    }

    pub fn bands(&self) -> &[BandSeries] {
        &self.bands
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn n_obs(&self) -> usize {
        self.bands.iter().map(BandSeries::len).sum()
    }

    /// `true` for bands that carry at least one observation.
    pub fn active_mask(&self) -> Vec<bool> {
        self.bands.iter().map(|b| !b.is_empty()).collect()
    }

    /// Earliest and latest observation time over all bands.
    pub fn time_span(&self) -> (f64, f64) {
        self.bands
            .iter()
            .flat_map(|b| b.times().iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t), hi.max(t))
            })
    }

    pub fn band_index(&self, band_id: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.band_id() == band_id)
    }
}

/// Frequency, intercepts, amplitudes and phases of the multiband sinusoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub beta0: Vec<f64>,
    pub amp: Vec<f64>,
    pub rho: Vec<f64>,
}

impl ModelParams {
    pub fn new(omega: f64, beta0: Vec<f64>, amp: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if beta0.len() != amp.len() || amp.len() != rho.len() {
            return Err(Error::invalid("beta0, amp and rho must have the same length"));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::invalid(format!("omega must be positive and finite (got {omega})")));
        }
        Ok(Self {
            omega,
            beta0,
            amp,
            rho,
        })
    }

    pub fn zeros(omega: f64, n_bands: usize) -> Self {
        Self {
            omega,
            beta0: vec![0.0; n_bands],
            amp: vec![0.0; n_bands],
            rho: vec![0.0; n_bands],
        }
    }

    pub fn n_bands(&self) -> usize {
        self.amp.len()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Makes every amplitude nonnegative using `(-a, rho) ~ (a, rho + pi)` and
    /// then wraps every phase into `[-pi, pi)`. The likelihood is unchanged.
    pub fn canonicalize(&mut self) {
        for (a, r) in self.amp.iter_mut().zip(self.rho.iter_mut()) {
            if *a < 0.0 {
                *a = -*a;
                *r += PI;
            }
            *r = wrap_phase(*r);
        }
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(rho: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = rho - two_pi * ((rho + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

/// Penalty strengths and the unit amplitude reference direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyConfig {
    gamma1: f64,
    gamma2: f64,
    a_tilde: Vec<f64>,
}

impl PenaltyConfig {
    pub fn new(gamma1: f64, gamma2: f64, a_tilde: Vec<f64>) -> Result<Self> {
        if !(gamma1 >= 0.0 && gamma1.is_finite()) || !(gamma2 >= 0.0 && gamma2.is_finite()) {
            return Err(Error::invalid(format!(
                "penalty strengths must be finite and nonnegative (got {gamma1}, {gamma2})"
            )));
        }
        check_unit(&a_tilde)?;
        if a_tilde.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("reference amplitude direction must be nonnegative"));
        }
        Ok(Self {
            gamma1,
            gamma2,
            a_tilde,
        })
    }

    /// No penalty; the reference direction is the normalised ones vector.
    pub fn unpenalized(n_bands: usize) -> Self {
        Self {
            gamma1: 0.0,
            gamma2: 0.0,
            a_tilde: uniform_direction(n_bands),
        }
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn a_tilde(&self) -> &[f64] {
        &self.a_tilde
    }

    pub fn n_bands(&self) -> usize {
        self.a_tilde.len()
    }

    pub fn with_gammas(&self, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::new(gamma1, gamma2, self.a_tilde.clone())
    }
}

/// `(1, ..., 1) / sqrt(n)`.
pub fn uniform_direction(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

fn check_unit(v: &[f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.is_empty() || !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
        return Err(Error::NonUnitDirection(norm));
    }
    Ok(())
}

/// Model magnitude of band `band_index` at time `t`.
pub fn predict(params: &ModelParams, band_index: usize, t: f64) -> Result<f64> {
    let bands = params.n_bands();
    if band_index >= bands {
        return Err(Error::BandIndex {
            index: band_index,
            bands,
        });
    }
    Ok(params.amp[band_index] * (params.omega * t + params.rho[band_index]).sin()
        + params.beta0[band_index])
}

/// Half the weighted residual sum of squares over all bands.
pub fn nll(lc: &MultibandLightCurve, params: &ModelParams) -> f64 {
    assert_eq!(lc.n_bands(), params.n_bands(), "band count mismatch");
    lc.bands()
        .iter()
        .enumerate()
        .map(|(b, band)| {
            band_nll(
                band,
                params.omega,
                params.beta0[b],
                params.amp[b],
                params.rho[b],
            )
        })
        .sum()
}

/// One band's contribution to [`nll`].
pub fn band_nll(band: &BandSeries, omega: f64, beta0: f64, amp: f64, rho: f64) -> f64 {
    let mut acc = 0.0;
    for ((&t, &m), &w) in band.times().iter().zip(band.mags()).zip(band.weights()) {
        let r = m - amp * (omega * t + rho).sin() - beta0;
        acc += w * r * r;
    }
    0.5 * acc
}

/// Half the squared norm of the part of `amp` orthogonal to `a_tilde`.
pub fn penalty_j1(amp: &[f64], a_tilde: &[f64]) -> Result<f64> {
    check_unit(a_tilde)?;
    if amp.len() != a_tilde.len() {
        return Err(Error::invalid("amplitude and reference direction differ in length"));
    }
    Ok(j1_unchecked(amp, a_tilde))
}

pub(crate) fn j1_unchecked(amp: &[f64], a_tilde: &[f64]) -> f64 {
    let proj: f64 = amp.iter().zip(a_tilde).map(|(a, u)| a * u).sum();
    0.5 * amp
        .iter()
        .zip(a_tilde)
        .map(|(a, u)| {
            let d = a - proj * u;
            d * d
        })
        .sum::<f64>()
}

/// Half the squared norm of the part of `rho` orthogonal to the ones vector.
pub fn penalty_j2(rho: &[f64]) -> f64 {
    if rho.is_empty() {
        return 0.0;
    }
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    0.5 * rho.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
}

/// Penalized negative log likelihood.
pub fn pnll(lc: &MultibandLightCurve, params: &ModelParams, cfg: &PenaltyConfig) -> f64 {
    assert_eq!(cfg.n_bands(), params.n_bands(), "band count mismatch");
    nll(lc, params)
        + cfg.gamma1 * j1_unchecked(&params.amp, &cfg.a_tilde)
        + cfg.gamma2 * penalty_j2(&params.rho)
}
