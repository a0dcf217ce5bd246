//! PGLS frequency search that only solves the penalized problem where it can
//! still win.
//!
//! The likelihood profile `l(omega)` never exceeds the penalized profile
//! `f(omega)`. Frequencies are visited in increasing order of `l`; once the
//! next `l` is larger than the best `f` found so far, no remaining frequency
//! can beat it and the search stops.

use std::cmp::Ordering;

use crate::bcd::{run_bcd, BcdResult, BcdSettings, FixedFrequency};
use crate::error::{Error, Result};
use crate::fit::{FitDiagnostics, FitResult, Method};
use crate::grid::FrequencyGrid;
use crate::mgls::{prepare, profile_objectives, solve_all, PreparedBand, Profile};
use crate::model::{wrap_phase, ModelParams, MultibandLightCurve, PenaltyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PglsOptions {
    pub bcd: BcdSettings,
    /// Stop after this many penalized fits and mark the search incomplete.
    pub max_evals: Option<usize>,
    /// Shift each MGLS starting phase by a multiple of `2 pi` so that all
    /// phases sit within `pi` of their circular mean. The likelihood is
    /// unchanged; the phase penalty of the starting point can only drop.
    pub align_init_phases: bool,
}

impl Default for PglsOptions {
    fn default() -> Self {
        Self {
            bcd: BcdSettings::default(),
            max_evals: None,
            align_init_phases: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruningStats {
    pub grid_size: usize,
    pub pnll_evals: usize,
    pub best_objective: f64,
    pub complete: bool,
    /// `(grid index, f(omega))` for every evaluated frequency, in visit order.
    pub evaluated: Vec<(usize, f64)>,
}

/// Grid indices ordered by `(l, index)`, possibly truncated to a prefix.
#[derive(Debug, Clone)]
pub struct Schedule {
    order: Vec<(f64, u32)>,
    /// Smallest `l` among candidates left out of `order`.
    remainder_min: Option<f64>,
    grid_size: usize,
    degenerate_freqs: usize,
}

fn by_value_then_index(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl Schedule {
    /// Keeps at most `keep` candidates (all when `None`).
    pub fn from_profile(profile: &Profile, keep: Option<usize>) -> Self {
        let mut cands: Vec<(f64, u32)> = profile
            .values
            .iter()
            .zip(&profile.excluded)
            .enumerate()
            .filter(|(_, (_, &ex))| !ex)
            .map(|(i, (&v, _))| (v, i as u32))
            .collect();
        let mut remainder_min = None;
        match keep {
            Some(k) if k < cands.len() => {
                let k = k.max(1);
                cands.select_nth_unstable_by(k, by_value_then_index);
                remainder_min = cands[k..].iter().map(|c| c.0).min_by(f64::total_cmp);
                cands.truncate(k);
                cands.sort_unstable_by(by_value_then_index);
            }
            _ => cands.sort_unstable_by(by_value_then_index),
        }
        Self {
            order: cands,
            remainder_min,
            grid_size: profile.values.len(),
            degenerate_freqs: profile.degenerate_count(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.remainder_min.is_some()
    }
}

/// Puts every active phase within `pi` of the circular mean of the phases.
pub fn align_phases(rho: &mut [f64], active: &[bool]) {
    let (s, c) = rho
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .fold((0.0, 0.0), |(s, c), (&r, _)| (s + r.sin(), c + r.cos()));
    if s == 0.0 && c == 0.0 {
        return;
    }
    let centre = s.atan2(c);
    for (r, _) in rho.iter_mut().zip(active).filter(|(_, &a)| a) {
        *r = centre + wrap_phase(*r - centre);
    }
}

/// MGLS solution at `omega`, used to start the penalized fit.
pub fn mgls_start(lc: &MultibandLightCurve, omega: f64, align: bool) -> ModelParams {
    start_from(&prepare(lc), &lc.active_mask(), omega, align)
}

fn start_from(prepared: &[Option<PreparedBand>], active: &[bool], omega: f64, align: bool) -> ModelParams {
    let (mut params, _, _) = solve_all(prepared, omega);
    if align {
        align_phases(&mut params.rho, active);
    }
    params
}

/// Penalized fit at one frequency from the MGLS starting point.
pub fn pnll_at(lc: &MultibandLightCurve, omega: f64, cfg: &PenaltyConfig, opts: &PglsOptions) -> Result<BcdResult> {
    check(lc, cfg, opts)?;
    let init = mgls_start(lc, omega, opts.align_init_phases);
    Ok(run_bcd(&FixedFrequency::new(lc, omega), &lc.active_mask(), cfg, init, &opts.bcd))
}

/// Penalized profile at every grid frequency (no pruning).
pub fn pnll_profile(
    lc: &MultibandLightCurve,
    grid: &FrequencyGrid,
    cfg: &PenaltyConfig,
    opts: &PglsOptions,
) -> Result<Vec<BcdResult>> {
    check(lc, cfg, opts)?;
    let prepared = prepare(lc);
    let active = lc.active_mask();
    let eval = |&omega: &f64| {
        let init = start_from(&prepared, &active, omega, opts.align_init_phases);
        run_bcd(&FixedFrequency::new(lc, omega), &active, cfg, init, &opts.bcd)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(grid.freqs().par_iter().map(eval).collect())
    }
    #[cfg(not(feature = "parallel"))]
    Ok(grid.freqs().iter().map(eval).collect())
}

fn check(lc: &MultibandLightCurve, cfg: &PenaltyConfig, opts: &PglsOptions) -> Result<()> {
    opts.bcd.validate()?;
    if cfg.n_bands() != lc.n_bands() {
        return Err(Error::invalid(format!(
            "penalty reference has {} bands, light curve has {}",
            cfg.n_bands(),
            lc.n_bands()
        )));
    }
    Ok(())
}

/// PGLS frequency estimate with lower-bound pruning.
pub fn pgls_estimate(
    lc: &MultibandLightCurve,
    grid: &FrequencyGrid,
    cfg: &PenaltyConfig,
    opts: &PglsOptions,
) -> Result<(FitResult, PruningStats)> {
    check(lc, cfg, opts)?;
    let profile = profile_objectives(lc, grid);
    let schedule = Schedule::from_profile(&profile, None);
    pgls_with_schedule(lc, grid, &schedule, cfg, opts)
}

/// Same as [`pgls_estimate`] with a precomputed visiting order. A truncated
/// schedule is rebuilt in full if the search runs past its end.
pub fn pgls_with_schedule(
    lc: &MultibandLightCurve,
    grid: &FrequencyGrid,
    schedule: &Schedule,
    cfg: &PenaltyConfig,
    opts: &PglsOptions,
) -> Result<(FitResult, PruningStats)> {
    check(lc, cfg, opts)?;
    if schedule.grid_size != grid.len() {
        return Err(Error::invalid("schedule was built for a different grid"));
    }
    if schedule.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let prepared = prepare(lc);
    let active = lc.active_mask();
    let freqs = grid.freqs();

    let mut best: Option<(BcdResult, usize)> = None;
    let mut best_f = f64::INFINITY;
    let mut evaluated = Vec::new();
    let mut complete = true;
    let mut full: Option<Schedule> = None;
    let mut pos = 0;
    loop {
        let entry = match schedule.order.get(pos) {
            Some(&e) => Some(e),
            None => match schedule.remainder_min {
                Some(next) if next <= best_f => {
                    let f = full.get_or_insert_with(|| {
                        Schedule::from_profile(&profile_objectives(lc, grid), None)
                    });
                    f.order.get(pos).copied()
                }
                _ => None,
            },
        };
        let Some((ell, idx)) = entry else { break };
        if ell > best_f {
            break;
        }
        if opts.max_evals.is_some_and(|cap| evaluated.len() >= cap) {
            complete = false;
            break;
        }
        let idx = idx as usize;
        let omega = freqs[idx];
        let init = start_from(&prepared, &active, omega, opts.align_init_phases);
        let res = run_bcd(&FixedFrequency::new(lc, omega), &active, cfg, init, &opts.bcd);
        evaluated.push((idx, res.objective));
        let better = match &best {
            None => true,
            Some((_, j)) => res.objective < best_f || (res.objective == best_f && idx < *j),
        };
        if better {
            best_f = res.objective;
            best = Some((res, idx));
        }
        pos += 1;
    }

    let (res, _) = best.ok_or(Error::AllDegenerate)?;
    let stats = PruningStats {
        grid_size: grid.len(),
        pnll_evals: evaluated.len(),
        best_objective: res.objective,
        complete,
        evaluated,
    };
    let fit = FitResult {
        method: Method::Pgls,
        objective: res.objective,
        active,
        diagnostics: FitDiagnostics {
            grid_size: grid.len(),
            degenerate_freqs: schedule.degenerate_freqs,
            pnll_evals: stats.pnll_evals,
            converged: res.converged,
            rounds_used: res.rounds_used,
            pre_canonical_objective: res.pre_canonical_objective,
            pruning_complete: complete,
        },
        params: res.params,
    };
    Ok((fit, stats))
}
