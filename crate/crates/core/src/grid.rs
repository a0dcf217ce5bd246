//! Linear grids of candidate angular frequencies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MultibandLightCurve;

/// Spacing numerator: frequencies are `SPACING_SCALE / span` apart.
pub const SPACING_SCALE: f64 = 0.1;

/// Relative slack when counting steps, so that an endpoint hit up to rounding
/// is not followed by one more frequency.
const STEP_SLACK: f64 = 1e-9;

/// Strictly increasing candidate frequencies in radians per time unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    spacing: f64,
    omega_min: f64,
    omega_max: f64,
}

impl FrequencyGrid {
    /// Uniform grid starting at `omega_min` with the given step, ending at the
    /// first value that is not below `omega_max`.
    pub fn uniform(omega_min: f64, omega_max: f64, spacing: f64) -> Result<Self> {
        if !(omega_min > 0.0 && omega_min.is_finite() && omega_max.is_finite()) {
            return Err(Error::invalid(format!(
                "frequency bounds must be positive and finite (got {omega_min}, {omega_max})"
            )));
        }
        if omega_max < omega_min {
            return Err(Error::invalid("omega_max is below omega_min"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("grid spacing must be positive (got {spacing})")));
        }
        let steps = ((omega_max - omega_min) / spacing - STEP_SLACK).ceil().max(0.0);
        if steps > 1e9 {
            return Err(Error::invalid(format!("grid would hold {steps} frequencies")));
        }
        let steps = steps as usize;
        let freqs = (0..=steps).map(|k| omega_min + k as f64 * spacing).collect();
        Ok(Self {
            freqs,
            spacing,
            omega_min,
            omega_max,
        })
    }

    /// Arbitrary strictly increasing positive frequencies. The reported
    /// spacing is the smallest gap (or 1 for a single frequency).
    pub fn from_freqs(freqs: Vec<f64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::invalid("frequency grid is empty"));
        }
        if freqs.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("grid frequencies must be positive and finite"));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid frequencies must be strictly increasing"));
        }
        let spacing = freqs
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let spacing = if spacing.is_finite() { spacing } else { 1.0 };
        Ok(Self {
            omega_min: freqs[0],
            omega_max: *freqs.last().unwrap(),
            freqs,
            spacing,
        })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// True when the frequencies are evenly spaced from `omega_min`, which
    /// lets the profile use a sine/cosine recurrence.
    pub(crate) fn is_uniform(&self) -> bool {
        self.freqs
            .iter()
            .enumerate()
            .all(|(k, &w)| w == self.omega_min + k as f64 * self.spacing)
    }
}

/// Grid covering periods `[period_min, period_max]` with spacing
/// `0.1 / (t_max - t_min)`.
pub fn build_grid(period_min: f64, period_max: f64, t_min: f64, t_max: f64) -> Result<FrequencyGrid> {
    if !(period_min > 0.0 && period_min < period_max && period_max.is_finite()) {
        return Err(Error::invalid(format!(
            "period bounds must satisfy 0 < min < max (got {period_min}, {period_max})"
        )));
    }
    let span = t_max - t_min;
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::invalid(format!(
            "observation span must be positive (got t_min={t_min}, t_max={t_max})"
        )));
    }
    FrequencyGrid::uniform(2.0 * PI / period_max, 2.0 * PI / period_min, SPACING_SCALE / span)
}

/// Like [`build_grid`] but widens the spacing when the natural grid would
/// hold more than `max_len` frequencies.
pub fn build_grid_capped(
    period_min: f64,
    period_max: f64,
    t_min: f64,
    t_max: f64,
    max_len: Option<usize>,
) -> Result<FrequencyGrid> {
    let grid = build_grid(period_min, period_max, t_min, t_max)?;
    match max_len {
        Some(cap) if cap < 2 => Err(Error::invalid("grid cap must be at least 2")),
        Some(cap) if grid.len() > cap => {
            let spacing = (grid.omega_max - grid.omega_min) / (cap - 1) as f64;
            FrequencyGrid::uniform(grid.omega_min, grid.omega_max, spacing)
        }
        _ => Ok(grid),
    }
}

/// Period bounds and optional length cap; the grid itself depends on each
/// curve's time span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub period_min: f64,
    pub period_max: f64,
    pub max_len: Option<usize>,
}

impl GridSpec {
    pub fn new(period_min: f64, period_max: f64) -> Self {
        Self {
            period_min,
            period_max,
            max_len: None,
        }
    }

    pub fn with_cap(self, max_len: usize) -> Self {
        Self {
            max_len: Some(max_len),
            ..self
        }
    }

    pub fn for_curve(&self, lc: &MultibandLightCurve) -> Result<FrequencyGrid> {
        let (t0, t1) = lc.time_span();
        build_grid_capped(self.period_min, self.period_max, t0, t1, self.max_len)
    }
}
