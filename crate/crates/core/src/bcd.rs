//! Penalized fit at a fixed frequency by block coordinate descent.
//!
//! Each round updates the intercepts exactly, then the amplitudes exactly,
//! then takes one majorization-minimization step on the phases. The two
//! coupled linear systems are diagonal plus a rank-one term and are solved in
//! `O(B)` with the Sherman-Morrison formula, so a round costs `O(N)`.
//!
//! Amplitudes are left unconstrained during the iterations; negative values
//! are folded into the phase only when the fit terminates.

use crate::error::{Error, Result};
use crate::model::{j1_unchecked, penalty_j2, BandSeries, ModelParams, MultibandLightCurve, PenaltyConfig};

/// Denominators of the rank-one correction below this count as singular.
const SINGULAR_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct BcdSettings {
    pub max_rounds: usize,
    /// Stop once every parameter moves by less than `rel_tol * max(|x|, 1)`.
    pub rel_tol: f64,
    pub record_trace: bool,
    /// Phase MM steps per round.
    pub mm_steps: usize,
}

impl Default for BcdSettings {
    fn default() -> Self {
        Self {
            max_rounds: 1000,
            rel_tol: 1e-8,
            record_trace: false,
            mm_steps: 1,
        }
    }
}

impl BcdSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 || self.mm_steps < 1 {
            return Err(Error::invalid("max_rounds and mm_steps must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdResult {
    /// Canonical parameters: nonnegative amplitudes, phases in `[-pi, pi)`.
    pub params: ModelParams,
    /// PNLL at the canonical parameters.
    pub objective: f64,
    /// Last iterate before canonicalization.
    pub iterate: ModelParams,
    /// PNLL at `iterate`.
    pub pre_canonical_objective: f64,
    pub rounds_used: usize,
    pub converged: bool,
    /// PNLL at the start and after every round, when requested.
    pub objective_trace: Option<Vec<f64>>,
    /// Some block update hit a singular system and fell back to a ridge.
    pub degenerate: bool,
}

/// Per-band quantities that do not change while the frequency is fixed.
#[derive(Debug, Clone)]
struct BandCache {
    sin: Vec<f64>,
    cos: Vec<f64>,
    w: Vec<f64>,
    m: Vec<f64>,
    kappa: f64,
}

impl BandCache {
    fn new(series: &BandSeries, omega: f64) -> Self {
        let (sin, cos) = series.times().iter().map(|&t| (omega * t).sin_cos()).unzip();
        Self {
            sin,
            cos,
            w: series.weights().to_vec(),
            m: series.mags().to_vec(),
            kappa: series.weights().iter().sum(),
        }
    }

    fn n(&self) -> usize {
        self.m.len()
    }

    fn beta0(&self, amp: f64, rho: f64) -> f64 {
        let (sr, cr) = rho.sin_cos();
        let mut acc = 0.0;
        for i in 0..self.n() {
            let s = self.sin[i] * cr + self.cos[i] * sr;
            acc += self.w[i] * (self.m[i] - amp * s);
        }
        acc / self.kappa
    }

    /// `(s' W s, <s, W mu>)` with `mu = m - beta0`.
    fn amp_terms(&self, beta0: f64, rho: f64) -> (f64, f64) {
        let (sr, cr) = rho.sin_cos();
        let (mut sws, mut xi) = (0.0, 0.0);
        for i in 0..self.n() {
            let s = self.sin[i] * cr + self.cos[i] * sr;
            let ws = self.w[i] * s;
            sws += ws * s;
            xi += ws * (self.m[i] - beta0);
        }
        (sws, xi)
    }

    /// Phase derivative of the band's half weighted RSS.
    fn gradient(&self, beta0: f64, amp: f64, rho: f64) -> f64 {
        let (sr, cr) = rho.sin_cos();
        let mut acc = 0.0;
        for i in 0..self.n() {
            let s = self.sin[i] * cr + self.cos[i] * sr;
            let c = self.cos[i] * cr - self.sin[i] * sr;
            acc += self.w[i] * (amp * s - (self.m[i] - beta0)) * c;
        }
        amp * acc
    }

    fn curvature(&self, beta0: f64, amp: f64, rho: f64) -> f64 {
        let (sr, cr) = rho.sin_cos();
        let mut acc = 0.0;
        for i in 0..self.n() {
            let s = self.sin[i] * cr + self.cos[i] * sr;
            let c = self.cos[i] * cr - self.sin[i] * sr;
            acc += self.w[i] * (amp * c * c + (self.m[i] - beta0 - amp * s) * s);
        }
        amp * acc
    }

    /// Upper bound on the phase curvature. Uses `|a|` because iterates may
    /// carry negative amplitudes.
    fn lipschitz(&self, beta0: f64, amp: f64) -> f64 {
        let wmu = self
            .w
            .iter()
            .zip(&self.m)
            .map(|(w, m)| {
                let x = w * (m - beta0);
                x * x
            })
            .sum::<f64>()
            .sqrt();
        let a = amp.abs();
        a * (a * self.kappa + (self.n() as f64).sqrt() * wmu)
    }

    fn half_rss(&self, beta0: f64, amp: f64, rho: f64) -> f64 {
        let (sr, cr) = rho.sin_cos();
        let mut acc = 0.0;
        for i in 0..self.n() {
            let s = self.sin[i] * cr + self.cos[i] * sr;
            let r = self.m[i] - amp * s - beta0;
            acc += self.w[i] * r * r;
        }
        0.5 * acc
    }
}

/// Light curve with sines and cosines precomputed at one frequency.
///
/// Methods taking parameters panic if the parameter vectors are shorter
/// than the number of bands.
#[derive(Debug, Clone)]
pub struct FixedFrequency {
    omega: f64,
    bands: Vec<Option<BandCache>>,
}

impl FixedFrequency {
    pub fn new(lc: &MultibandLightCurve, omega: f64) -> Self {
        Self {
            omega,
            bands: lc
                .bands()
                .iter()
                .map(|b| (!b.is_empty()).then(|| BandCache::new(b, omega)))
                .collect(),
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    /// One round: intercepts, amplitudes, then a single phase step.
    pub fn round(&self, p: &mut ModelParams, cfg: &PenaltyConfig) {
        self.update_beta0(p);
        self.update_amp(p, cfg);
        self.update_rho(p, cfg);
    }

    fn active(&self) -> impl Iterator<Item = (usize, &BandCache)> {
        self.bands.iter().enumerate().filter_map(|(b, c)| c.as_ref().map(|c| (b, c)))
    }

    pub fn nll(&self, p: &ModelParams) -> f64 {
        self.active().map(|(b, c)| c.half_rss(p.beta0[b], p.amp[b], p.rho[b])).sum()
    }

    pub fn pnll(&self, p: &ModelParams, cfg: &PenaltyConfig) -> f64 {
        self.nll(p) + cfg.gamma1() * j1_unchecked(&p.amp, cfg.a_tilde()) + cfg.gamma2() * penalty_j2(&p.rho)
    }

    pub fn update_beta0(&self, p: &mut ModelParams) {
        for (b, c) in self.active() {
            p.beta0[b] = c.beta0(p.amp[b], p.rho[b]);
        }
    }

    /// Returns `true` if the system was singular.
    pub fn update_amp(&self, p: &mut ModelParams, cfg: &PenaltyConfig) -> bool {
        let gamma1 = cfg.gamma1();
        let a_tilde = cfg.a_tilde();
        let idx: Vec<usize> = self.active().map(|(b, _)| b).collect();
        let terms: Vec<(f64, f64)> = self
            .active()
            .map(|(b, c)| c.amp_terms(p.beta0[b], p.rho[b]))
            .collect();

        if gamma1 == 0.0 {
            let mut degenerate = false;
            for (&b, &(sws, xi)) in idx.iter().zip(&terms) {
                p.amp[b] = if sws > 0.0 {
                    xi / sws
                } else {
                    degenerate = true;
                    0.0
                };
            }
            return degenerate;
        }

        // Frozen (empty) bands enter through the rank-one term as a constant.
        let frozen: f64 = (0..self.n_bands())
            .filter(|&b| self.bands[b].is_none())
            .map(|b| a_tilde[b] * p.amp[b])
            .sum();
        let u: Vec<f64> = idx.iter().map(|&b| a_tilde[b]).collect();
        let rhs: Vec<f64> = terms
            .iter()
            .zip(&u)
            .map(|(&(_, xi), &ub)| xi + gamma1 * ub * frozen)
            .collect();
        let mut diag: Vec<f64> = terms.iter().map(|&(sws, _)| sws + gamma1).collect();
        let mut degenerate = false;
        let solved = match solve_diag_minus_rank_one(&diag, gamma1, &u, &rhs) {
            Some(x) => x,
            None => {
                degenerate = true;
                for d in diag.iter_mut() {
                    *d += 1e-10 * gamma1;
                }
                solve_diag_minus_rank_one(&diag, gamma1, &u, &rhs).unwrap_or_else(|| vec![0.0; idx.len()])
            }
        };
        for (&b, x) in idx.iter().zip(solved) {
            p.amp[b] = x;
        }
        degenerate
    }

    /// One MM step on the phases anchored at the current `p.rho`.
    pub fn update_rho(&self, p: &mut ModelParams, cfg: &PenaltyConfig) {
        let gamma2 = cfg.gamma2();
        let idx: Vec<usize> = self.active().map(|(b, _)| b).collect();
        let (grads, lips): (Vec<f64>, Vec<f64>) = self
            .active()
            .map(|(b, c)| (c.gradient(p.beta0[b], p.amp[b], p.rho[b]), c.lipschitz(p.beta0[b], p.amp[b])))
            .unzip();

        if gamma2 == 0.0 {
            for ((&b, &g), &l) in idx.iter().zip(&grads).zip(&lips) {
                if l > 0.0 {
                    p.rho[b] -= g / l;
                }
            }
            return;
        }

        let n_bands = self.n_bands() as f64;
        let alpha = gamma2 / n_bands;
        let frozen: f64 = (0..self.n_bands())
            .filter(|&b| self.bands[b].is_none())
            .map(|b| p.rho[b])
            .sum();
        let diag: Vec<f64> = lips.iter().map(|l| l + gamma2).collect();
        let rhs: Vec<f64> = idx
            .iter()
            .zip(&grads)
            .zip(&lips)
            .map(|((&b, &g), &l)| l * p.rho[b] - g + alpha * frozen)
            .collect();
        let ones = vec![1.0; idx.len()];
        match solve_diag_minus_rank_one(&diag, alpha, &ones, &rhs) {
            Some(x) => {
                for (&b, r) in idx.iter().zip(x) {
                    p.rho[b] = r;
                }
            }
            None => {
                // Every amplitude is zero: the surrogate is flat and the
                // minimizers are the constant vectors.
                let mean = p.rho.iter().sum::<f64>() / n_bands;
                for &b in &idx {
                    p.rho[b] = mean;
                }
            }
        }
    }

    fn phase_terms(&self, b: usize, p: &ModelParams) -> Option<(f64, f64, f64)> {
        self.bands[b].as_ref().map(|c| {
            (
                c.half_rss(p.beta0[b], p.amp[b], p.rho[b]),
                c.gradient(p.beta0[b], p.amp[b], p.rho[b]),
                c.lipschitz(p.beta0[b], p.amp[b]),
            )
        })
    }
}

/// Solves `(diag(d) - alpha u u') x = r`.
fn solve_diag_minus_rank_one(d: &[f64], alpha: f64, u: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    if d.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let dinv_u: Vec<f64> = u.iter().zip(d).map(|(u, d)| u / d).collect();
    let denom = 1.0 - alpha * u.iter().zip(&dinv_u).map(|(a, b)| a * b).sum::<f64>();
    if !(denom > SINGULAR_TOL) {
        return None;
    }
    let ut_dinv_r: f64 = dinv_u.iter().zip(r).map(|(a, b)| a * b).sum();
    let scale = alpha * ut_dinv_r / denom;
    Some(
        r.iter()
            .zip(d)
            .zip(&dinv_u)
            .map(|((r, d), du)| r / d + scale * du)
            .collect(),
    )
}

fn check_lengths(lc: &MultibandLightCurve, len: usize) -> Result<()> {
    if len != lc.n_bands() {
        return Err(Error::invalid(format!(
            "parameter vector has {len} entries for {} bands",
            lc.n_bands()
        )));
    }
    Ok(())
}

/// Exact intercept update for every band with observations.
pub fn update_beta0(lc: &MultibandLightCurve, amp: &[f64], rho: &[f64], omega: f64) -> Result<Vec<f64>> {
    check_lengths(lc, amp.len())?;
    check_lengths(lc, rho.len())?;
    let ff = FixedFrequency::new(lc, omega);
    let mut p = ModelParams::new(omega, vec![0.0; amp.len()], amp.to_vec(), rho.to_vec())?;
    ff.update_beta0(&mut p);
    Ok(p.beta0)
}

/// Exact amplitude update for the penalized problem.
pub fn update_amplitudes(
    lc: &MultibandLightCurve,
    beta0: &[f64],
    rho: &[f64],
    omega: f64,
    cfg: &PenaltyConfig,
) -> Result<Vec<f64>> {
    check_lengths(lc, beta0.len())?;
    check_lengths(lc, rho.len())?;
    check_lengths(lc, cfg.n_bands())?;
    let ff = FixedFrequency::new(lc, omega);
    let mut p = ModelParams::new(omega, beta0.to_vec(), vec![0.0; beta0.len()], rho.to_vec())?;
    ff.update_amp(&mut p, cfg);
    Ok(p.amp)
}

/// `d/drho` of the band's half weighted residual sum of squares.
pub fn phase_gradient(series: &BandSeries, amp: f64, beta0: f64, rho: f64, omega: f64) -> f64 {
    BandCache::new(series, omega).gradient(beta0, amp, rho)
}

/// Second phase derivative of the band's half weighted residual sum of squares.
pub fn phase_curvature(series: &BandSeries, amp: f64, beta0: f64, rho: f64, omega: f64) -> f64 {
    BandCache::new(series, omega).curvature(beta0, amp, rho)
}

/// `|a| (|a| kappa + sqrt(n) ||W mu||)` with `kappa = 1'W1`, a global bound on
/// the phase curvature.
pub fn lipschitz_bound(series: &BandSeries, amp: f64, beta0: f64) -> f64 {
    // the bound does not depend on omega
    BandCache::new(series, 1.0).lipschitz(beta0, amp)
}

/// Quadratic surrogate of the summed phase terms anchored at `anchor`,
/// evaluated at `rho`.
pub fn phase_majorizer(
    lc: &MultibandLightCurve,
    beta0: &[f64],
    amp: &[f64],
    anchor: &[f64],
    omega: f64,
    rho: &[f64],
) -> Result<f64> {
    for len in [beta0.len(), amp.len(), anchor.len(), rho.len()] {
        check_lengths(lc, len)?;
    }
    let ff = FixedFrequency::new(lc, omega);
    let p = ModelParams::new(omega, beta0.to_vec(), amp.to_vec(), anchor.to_vec())?;
    let mut g = 0.0;
    for b in 0..lc.n_bands() {
        if let Some((f, grad, lip)) = ff.phase_terms(b, &p) {
            let d = rho[b] - anchor[b];
            g += f + grad * d + 0.5 * lip * d * d;
        }
    }
    Ok(g)
}

/// One majorization-minimization step on the phase block.
pub fn mm_phase_update(
    lc: &MultibandLightCurve,
    beta0: &[f64],
    amp: &[f64],
    rho_prev: &[f64],
    omega: f64,
    cfg: &PenaltyConfig,
) -> Result<Vec<f64>> {
    for len in [beta0.len(), amp.len(), rho_prev.len(), cfg.n_bands()] {
        check_lengths(lc, len)?;
    }
    let ff = FixedFrequency::new(lc, omega);
    let mut p = ModelParams::new(omega, beta0.to_vec(), amp.to_vec(), rho_prev.to_vec())?;
    ff.update_rho(&mut p, cfg);
    Ok(p.rho)
}

/// Gradient of the PNLL with respect to `(beta0, amp, rho)`.
pub fn pnll_gradient(
    lc: &MultibandLightCurve,
    params: &ModelParams,
    cfg: &PenaltyConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_lengths(lc, params.n_bands())?;
    check_lengths(lc, cfg.n_bands())?;
    let ff = FixedFrequency::new(lc, params.omega);
    let n_bands = params.n_bands();
    let a_tilde = cfg.a_tilde();
    let proj: f64 = params.amp.iter().zip(a_tilde).map(|(a, u)| a * u).sum();
    let mean_rho = params.rho.iter().sum::<f64>() / n_bands as f64;
    let mut g_beta = vec![0.0; n_bands];
    let mut g_amp = vec![0.0; n_bands];
    let mut g_rho = vec![0.0; n_bands];
    for b in 0..n_bands {
        g_amp[b] = cfg.gamma1() * (params.amp[b] - proj * a_tilde[b]);
        g_rho[b] = cfg.gamma2() * (params.rho[b] - mean_rho);
        let Some(c) = ff.bands[b].as_ref() else { continue };
        let (sr, cr) = params.rho[b].sin_cos();
        for i in 0..c.n() {
            let s = c.sin[i] * cr + c.cos[i] * sr;
            let r = params.beta0[b] + params.amp[b] * s - c.m[i];
            g_beta[b] += c.w[i] * r;
            g_amp[b] += c.w[i] * r * s;
        }
        g_rho[b] += c.gradient(params.beta0[b], params.amp[b], params.rho[b]);
    }
    Ok((g_beta, g_amp, g_rho))
}

fn max_relative_change(old: &ModelParams, new: &ModelParams, active: &[bool]) -> f64 {
    let mut worst: f64 = 0.0;
    for b in (0..active.len()).filter(|&b| active[b]) {
        for (x, y) in [
            (old.beta0[b], new.beta0[b]),
            (old.amp[b], new.amp[b]),
            (old.rho[b], new.rho[b]),
        ] {
            worst = worst.max((y - x).abs() / x.abs().max(1.0));
        }
    }
    worst
}

/// Minimizes the PNLL at `omega` starting from `init`.
pub fn bcd_fit(
    lc: &MultibandLightCurve,
    omega: f64,
    cfg: &PenaltyConfig,
    init: &ModelParams,
    settings: &BcdSettings,
) -> Result<BcdResult> {
    settings.validate()?;
    check_lengths(lc, init.n_bands())?;
    check_lengths(lc, cfg.n_bands())?;
    if init.omega != omega {
        return Err(Error::invalid("initial parameters were computed at a different frequency"));
    }
    let ff = FixedFrequency::new(lc, omega);
    Ok(run_bcd(&ff, &lc.active_mask(), cfg, init.clone(), settings))
}

pub(crate) fn run_bcd(
    ff: &FixedFrequency,
    active: &[bool],
    cfg: &PenaltyConfig,
    mut params: ModelParams,
    settings: &BcdSettings,
) -> BcdResult {
    debug_assert_eq!(ff.omega, params.omega);
    let mut trace = settings.record_trace.then(|| vec![ff.pnll(&params, cfg)]);
    let mut converged = false;
    let mut degenerate = false;
    let mut rounds = 0;
    let mut previous = params.clone();
    while rounds < settings.max_rounds {
        rounds += 1;
        previous.clone_from(&params);
        ff.update_beta0(&mut params);
        degenerate |= ff.update_amp(&mut params, cfg);
        for _ in 0..settings.mm_steps {
            ff.update_rho(&mut params, cfg);
        }
        if let Some(t) = trace.as_mut() {
            t.push(ff.pnll(&params, cfg));
        }
        if max_relative_change(&previous, &params, active) < settings.rel_tol {
            converged = true;
            break;
        }
    }
    let pre_canonical_objective = ff.pnll(&params, cfg);
    let iterate = params.clone();
    params.canonicalize();
    let objective = ff.pnll(&params, cfg);
    BcdResult {
        params,
        objective,
        iterate,
        pre_canonical_objective,
        rounds_used: rounds,
        converged,
        objective_trace: trace,
        degenerate,
    }
}
