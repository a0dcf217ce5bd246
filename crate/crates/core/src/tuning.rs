//! Choice of the penalty strengths.
//!
//! MGLS fits of well-sampled historical curves give a reference amplitude
//! direction and the typical scatter of amplitudes and phases around it.
//! Each strength is then the value at which PGLS fits of poorly sampled
//! curves reproduce that scatter: first `gamma1` with `gamma2 = 0`, then
//! `gamma2` with the chosen `gamma1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GridSpec};
use crate::mgls::{mgls_estimate, profile_objectives};
use crate::model::{MultibandLightCurve, PenaltyConfig};
use crate::pruning::{align_phases, pgls_with_schedule, PglsOptions, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoricalReference {
    pub a_tilde: Vec<f64>,
    pub s_a_target: f64,
    pub s_rho_target: f64,
    /// Curves that contributed (those with every band observed).
    pub m_used: usize,
}

/// Median, averaging the two middle values for an even count.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `a' (I - u u') a`: squared distance of `a` from the line through `u`.
pub fn amplitude_scatter(amp: &[f64], a_tilde: &[f64]) -> f64 {
    let along: f64 = amp.iter().zip(a_tilde).map(|(a, u)| a * u).sum();
    let total: f64 = amp.iter().map(|a| a * a).sum();
    (total - along * along).max(0.0)
}

/// Squared distance of the phases from the line through `(1, ..., 1)`,
/// after putting every phase within `pi` of the circular mean.
pub fn phase_scatter(rho: &[f64]) -> f64 {
    let mut r = rho.to_vec();
    let active = vec![true; r.len()];
    align_phases(&mut r, &active);
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    r.iter().map(|x| (x - mean) * (x - mean)).sum()
}

fn all_active(lc: &MultibandLightCurve) -> bool {
    lc.bands().iter().all(|b| !b.is_empty())
}

fn check_bands(curves: &[MultibandLightCurve]) -> Result<usize> {
    let b = curves.first().map(MultibandLightCurve::n_bands).unwrap_or(0);
    if curves.iter().any(|c| c.n_bands() != b) {
        return Err(Error::invalid("all curves must have the same number of bands"));
    }
    Ok(b)
}

/// Reference direction and scatter targets from historical curves.
pub fn fit_reference(historical: &[MultibandLightCurve], spec: &GridSpec) -> Result<HistoricalReference> {
    if historical.len() < 2 {
        return Err(Error::invalid(format!(
            "at least 2 historical curves are needed (got {})",
            historical.len()
        )));
    }
    let n_bands = check_bands(historical)?;
    let fit = |lc: &MultibandLightCurve| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        if !all_active(lc) {
            return Ok(None);
        }
        let grid = spec.for_curve(lc)?;
        let res = mgls_estimate(lc, &grid)?;
        Ok(Some((res.params.amp, res.params.rho)))
    };
    #[cfg(feature = "parallel")]
    let fits: Vec<_> = {
        use rayon::prelude::*;
        historical.par_iter().map(fit).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<_> = historical.iter().map(fit).collect::<Result<_>>()?;
    let fits: Vec<_> = fits.into_iter().flatten().collect();
    if fits.len() < 2 {
        return Err(Error::invalid("fewer than 2 historical curves have every band observed"));
    }

    let mut mean = vec![0.0; n_bands];
    for (amp, _) in &fits {
        for (m, a) in mean.iter_mut().zip(amp) {
            *m += a;
        }
    }
    let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("historical amplitudes are all zero"));
    }
    let a_tilde: Vec<f64> = mean.iter().map(|m| m / norm).collect();
    let s_a: Vec<f64> = fits.iter().map(|(a, _)| amplitude_scatter(a, &a_tilde)).collect();
    let s_rho: Vec<f64> = fits.iter().map(|(_, r)| phase_scatter(r)).collect();
    Ok(HistoricalReference {
        s_a_target: median(&s_a).unwrap(),
        s_rho_target: median(&s_rho).unwrap(),
        m_used: fits.len(),
        a_tilde,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningOptions {
    /// Bracket endpoints for the log-spaced search.
    pub bracket: (f64, f64),
    pub bracket_factor: f64,
    /// Bisection stops once `hi / lo - 1` drops below this.
    pub rel_tol: f64,
    /// Bisection also stops when no period estimate moves by more than this
    /// fraction between successive strengths.
    pub period_tol: f64,
    #[serde(skip)]
    pub pgls: PglsOptions,
    /// Candidates kept per curve in the cached pruning order.
    pub schedule_keep: Option<usize>,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            bracket: (1e-3, 1e6),
            bracket_factor: 10.0,
            rel_tol: 0.05,
            period_tol: 0.01,
            pgls: PglsOptions::default(),
            schedule_keep: Some(2000),
        }
    }
}

impl TuningOptions {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::invalid("tuning bracket must satisfy 0 < lo < hi"));
        }
        if !(self.bracket_factor > 1.0) {
            return Err(Error::invalid("bracket factor must exceed 1"));
        }
        if !(self.rel_tol > 0.0 && self.period_tol >= 0.0) {
            return Err(Error::invalid("tuning tolerances must be positive"));
        }
        self.pgls.bcd.validate()
    }
}

/// Period, amplitudes and phases of one fitted curve.
pub type CurveFit = (f64, Vec<f64>, Vec<f64>);

/// Poorly sampled curves with their grids and cached pruning orders.
#[derive(Debug, Clone)]
pub struct TuneSet {
    curves: Vec<MultibandLightCurve>,
    grids: Vec<FrequencyGrid>,
    schedules: Vec<Schedule>,
}

impl TuneSet {
    pub fn new(curves: Vec<MultibandLightCurve>, spec: &GridSpec, keep: Option<usize>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::invalid("tune set is empty"));
        }
        check_bands(&curves)?;
        let prep = |lc: &MultibandLightCurve| -> Result<(FrequencyGrid, Schedule)> {
            let grid = spec.for_curve(lc)?;
            let schedule = Schedule::from_profile(&profile_objectives(lc, &grid), keep);
            Ok((grid, schedule))
        };
        #[cfg(feature = "parallel")]
        let parts: Vec<_> = {
            use rayon::prelude::*;
            curves.par_iter().map(prep).collect::<Result<_>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<_> = curves.iter().map(prep).collect::<Result<_>>()?;
        let (grids, schedules) = parts.into_iter().unzip();
        Ok(Self {
            curves,
            grids,
            schedules,
        })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[MultibandLightCurve] {
        &self.curves
    }

    /// PGLS fits of every curve: `(period, amplitudes, phases)`. Curves
    /// whose fit fails are skipped.
    pub fn fit_all(&self, cfg: &PenaltyConfig, opts: &PglsOptions) -> Vec<Option<CurveFit>> {
        let fit = |i: usize| {
            pgls_with_schedule(&self.curves[i], &self.grids[i], &self.schedules[i], cfg, opts)
                .ok()
                .map(|(f, _)| (f.period(), f.params.amp, f.params.rho))
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..self.len()).into_par_iter().map(fit).collect()
        }
        #[cfg(not(feature = "parallel"))]
        (0..self.len()).map(fit).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Amplitude,
    Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub gamma: f64,
    pub scatter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSelection {
    pub gamma: f64,
    /// False when the target scatter was not reached inside the bracket; the
    /// bracket's upper end is returned then.
    pub target_reached: bool,
    pub target: f64,
    /// Every evaluated strength, in evaluation order.
    pub trace: Vec<ScatterPoint>,
}

struct Evaluation {
    scatter: f64,
    periods: Vec<Option<f64>>,
}

fn evaluate(set: &TuneSet, cfg: &PenaltyConfig, stat: Statistic, opts: &PglsOptions) -> Evaluation {
    let fits = set.fit_all(cfg, opts);
    let scatters: Vec<f64> = fits
        .iter()
        .zip(set.curves())
        .filter_map(|(f, lc)| f.as_ref().filter(|_| all_active(lc)))
        .map(|(_, a, r)| match stat {
            Statistic::Amplitude => amplitude_scatter(a, cfg.a_tilde()),
            Statistic::Phase => phase_scatter(r),
        })
        .collect();
    Evaluation {
        scatter: median(&scatters).unwrap_or(f64::NAN),
        periods: fits.into_iter().map(|f| f.map(|f| f.0)).collect(),
    }
}

fn periods_stable(a: &[Option<f64>], b: &[Option<f64>], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs() <= tol * x.abs(),
        (None, None) => true,
        _ => false,
    })
}

/// Smallest strength (up to the tolerances) at which the median scatter of
/// the chosen statistic drops to `target`.
pub fn select_gamma(
    set: &TuneSet,
    base: &PenaltyConfig,
    stat: Statistic,
    target: f64,
    opts: &TuningOptions,
) -> Result<GammaSelection> {
    opts.validate()?;
    if !(target >= 0.0) {
        return Err(Error::invalid("scatter target must be nonnegative"));
    }
    let mut trace = Vec::new();
    let mut eval = |gamma: f64| -> Result<Evaluation> {
        let cfg = match stat {
            Statistic::Amplitude => base.with_gammas(gamma, base.gamma2())?,
            Statistic::Phase => base.with_gammas(base.gamma1(), gamma)?,
        };
        let e = evaluate(set, &cfg, stat, &opts.pgls);
        trace.push(ScatterPoint {
            gamma,
            scatter: e.scatter,
        });
        Ok(e)
    };
    let done = |gamma, reached, trace| GammaSelection {
        gamma,
        target_reached: reached,
        target,
        trace,
    };

    let zero = eval(0.0)?;
    if zero.scatter <= target {
        return Ok(done(0.0, true, trace));
    }

    let (lo_end, hi_end) = opts.bracket;
    let mut lo: Option<(f64, Evaluation)> = None;
    let mut hi: Option<(f64, Evaluation)> = None;
    let mut g = lo_end;
    loop {
        let e = eval(g)?;
        if e.scatter <= target {
            hi = Some((g, e));
            break;
        }
        lo = Some((g, e));
        if g >= hi_end {
            break;
        }
        g = (g * opts.bracket_factor).min(hi_end);
    }
    let Some((mut hi_g, mut hi_e)) = hi else {
        return Ok(done(hi_end, false, trace));
    };
    let Some((mut lo_g, mut lo_e)) = lo else {
        return Ok(done(hi_g, true, trace));
    };

    let mut last_periods = hi_e.periods.clone();
    while hi_g / lo_g - 1.0 >= opts.rel_tol {
        let mid = (lo_g * hi_g).sqrt();
        let e = eval(mid)?;
        let stable = periods_stable(&last_periods, &e.periods, opts.period_tol);
        last_periods = e.periods.clone();
        if e.scatter <= target {
            hi_g = mid;
            hi_e = e;
        } else {
            lo_g = mid;
            lo_e = e;
        }
        if stable {
            break;
        }
    }
    let gamma = if (lo_e.scatter - target).abs() < (hi_e.scatter - target).abs() {
        lo_g
    } else {
        hi_g
    };
    Ok(done(gamma, true, trace))
}

pub fn select_gamma1(set: &TuneSet, reference: &HistoricalReference, opts: &TuningOptions) -> Result<GammaSelection> {
    let base = PenaltyConfig::new(0.0, 0.0, reference.a_tilde.clone())?;
    select_gamma(set, &base, Statistic::Amplitude, reference.s_a_target, opts)
}

pub fn select_gamma2(
    set: &TuneSet,
    reference: &HistoricalReference,
    gamma1: f64,
    opts: &TuningOptions,
) -> Result<GammaSelection> {
    let base = PenaltyConfig::new(gamma1, 0.0, reference.a_tilde.clone())?;
    select_gamma(set, &base, Statistic::Phase, reference.s_rho_target, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TunedPenalty {
    pub reference: HistoricalReference,
    pub gamma1: GammaSelection,
    pub gamma2: GammaSelection,
}

impl TunedPenalty {
    pub fn config(&self) -> Result<PenaltyConfig> {
        PenaltyConfig::new(self.gamma1.gamma, self.gamma2.gamma, self.reference.a_tilde.clone())
    }
}

/// Reference from `historical`, then both strengths on `tune_set`.
pub fn tune(
    historical: &[MultibandLightCurve],
    tune_set: Vec<MultibandLightCurve>,
    spec: &GridSpec,
    opts: &TuningOptions,
) -> Result<TunedPenalty> {
    opts.validate()?;
    let reference = fit_reference(historical, spec)?;
    if tune_set.first().is_some_and(|c| c.n_bands() != reference.a_tilde.len()) {
        return Err(Error::invalid("tune set and historical curves differ in band count"));
    }
    let set = TuneSet::new(tune_set, spec, opts.schedule_keep)?;
    let gamma1 = select_gamma1(&set, &reference, opts)?;
    let gamma2 = select_gamma2(&set, &reference, gamma1.gamma, opts)?;
    Ok(TunedPenalty {
        reference,
        gamma1,
        gamma2,
    })
}
