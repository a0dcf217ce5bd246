//! Multiband generalized Lomb-Scargle.
//!
//! At a fixed frequency the likelihood separates over bands, and each band is
//! a weighted linear regression of magnitude on `sin(omega t)`, `cos(omega t)`
//! and an intercept. The profile `l(omega)` is the sum over bands of half the
//! weighted residual sum of squares of those regressions.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{FitDiagnostics, FitResult, Method};
use crate::grid::FrequencyGrid;
use crate::model::{wrap_phase, BandSeries, ModelParams, MultibandLightCurve};

/// Relative pivot size below which the normal equations count as singular.
const DEGENERATE_RTOL: f64 = 1e-10;

/// Frequencies per recurrence block. Sines and cosines are re-seeded exactly at
/// each block start, so results do not depend on how blocks are scheduled.
const BLOCK: usize = 512;
/// Bands whose closed-form RSS falls below this fraction of the centred sum of
/// squares, or whose normal equations are this close to singular, are refit
/// by orthogonalization.
const REFIT_RTOL: f64 = 1e-6;

/// Per-band regression at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandFit {
    pub beta0: f64,
    pub amp: f64,
    pub rho: f64,
    /// Half the weighted residual sum of squares.
    pub rss: f64,
    /// The normal equations were numerically rank deficient. The fit then
    /// comes from orthogonalization with dependent columns dropped.
    pub degenerate: bool,
}

/// `l(omega)` together with the minimizing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub omega: f64,
    pub objective: f64,
    pub params: ModelParams,
    /// Per band; bands without observations are reported as degenerate.
    pub degenerate: Vec<bool>,
}

impl ProfilePoint {
    pub fn all_degenerate(&self) -> bool {
        self.degenerate.iter().all(|&d| d)
    }
}

/// Objective-only profile over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub values: Vec<f64>,
    /// Frequencies at which every band was degenerate.
    pub excluded: Vec<bool>,
}

impl Profile {
    pub fn degenerate_count(&self) -> usize {
        self.excluded.iter().filter(|&&x| x).count()
    }

    /// Index of the smallest non-excluded value; ties go to the lowest index.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, (&v, &ex)) in self.values.iter().zip(&self.excluded).enumerate() {
            if ex {
                continue;
            }
            match best {
                Some(j) if self.values[j] <= v => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

/// Band data with magnitudes centred on their weighted mean.
#[derive(Debug, Clone)]
pub(crate) struct PreparedBand {
    pub times: Vec<f64>,
    pub centered: Vec<f64>,
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl PreparedBand {
    pub fn new(series: &BandSeries) -> Self {
        let w_sum: f64 = series.weights().iter().sum();
        let offset = series
            .weights()
            .iter()
            .zip(series.mags())
            .map(|(w, m)| w * m)
            .sum::<f64>()
            / w_sum;
        Self {
            times: series.times().to_vec(),
            centered: series.mags().iter().map(|m| m - offset).collect(),
            weights: series.weights().to_vec(),
            offset,
        }
    }

    fn base_sums(&self) -> BaseSums {
        let mut b = BaseSums::default();
        for (&w, &m) in self.weights.iter().zip(&self.centered) {
            b.w += w;
            b.wm += w * m;
            b.wmm += w * m * m;
        }
        b.n = self.times.len();
        b
    }

    /// Least squares by modified Gram-Schmidt on the weighted design
    /// columns. Exactly dependent columns get a zero coefficient.
    fn orthogonal_fit(&self, omega: f64, degenerate: bool) -> BandFit {
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut cols = [sw.clone(), Vec::new(), Vec::new()];
        let (mut sin_col, mut cos_col) = (Vec::with_capacity(sw.len()), Vec::with_capacity(sw.len()));
        for (&t, &r) in self.times.iter().zip(&sw) {
            let (s, c) = (omega * t).sin_cos();
            sin_col.push(r * s);
            cos_col.push(r * c);
        }
        cols[1] = sin_col;
        cols[2] = cos_col;
        let mut y: Vec<f64> = self.centered.iter().zip(&sw).map(|(m, r)| m * r).collect();

        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut r = [[0.0; 3]; 3];
        let mut kept = [false; 3];
        for j in 0..3 {
            let norm0 = dot(&cols[j], &cols[j]).sqrt();
            for _ in 0..2 {
                for i in (0..j).filter(|&i| kept[i]) {
                    let (head, tail) = cols.split_at_mut(j);
                    let proj = dot(&head[i], &tail[0]);
                    r[i][j] += proj;
                    tail[0].iter_mut().zip(&head[i]).for_each(|(v, q)| *v -= proj * q);
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm > DEGENERATE_RTOL * norm0 && norm > 0.0 {
                kept[j] = true;
                r[j][j] = norm;
                cols[j].iter_mut().for_each(|v| *v /= norm);
            }
        }
        let mut z = [0.0; 3];
        for _ in 0..2 {
            for i in (0..3).filter(|&i| kept[i]) {
                let proj = dot(&cols[i], &y);
                z[i] += proj;
                y.iter_mut().zip(&cols[i]).for_each(|(v, q)| *v -= proj * q);
            }
        }
        let mut x = [0.0; 3];
        for i in (0..3).rev().filter(|&i| kept[i]) {
            let tail: f64 = (i + 1..3).map(|k| r[i][k] * x[k]).sum();
            x[i] = (z[i] - tail) / r[i][i];
        }
        let [level, cs, cc] = x;
        BandFit {
            beta0: self.offset + level,
            amp: cs.hypot(cc),
            rho: wrap_phase(cc.atan2(cs)),
            rss: 0.5 * dot(&y, &y),
            degenerate,
        }
    }

    fn finish(&self, base: &BaseSums, sums: &TrigSums, omega: f64) -> BandFit {
        let fit = fit_from_sums(base, sums, self.offset);
        let yy = base.wmm - base.wm * base.wm / base.w;
        if fit.degenerate || fit.rss < REFIT_RTOL * yy || ill_conditioned(base, sums) {
            return self.orthogonal_fit(omega, fit.degenerate);
        }
        fit
    }

    fn trig_sums(&self, omega: f64) -> TrigSums {
        let mut s = TrigSums::default();
        for ((&t, &w), &m) in self.times.iter().zip(&self.weights).zip(&self.centered) {
            let (sn, cs) = (omega * t).sin_cos();
            s.accumulate(w, m, sn, cs);
        }
        s
    }
}

pub(crate) fn prepare(lc: &MultibandLightCurve) -> Vec<Option<PreparedBand>> {
    lc.bands()
        .iter()
        .map(|b| (!b.is_empty()).then(|| PreparedBand::new(b)))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct BaseSums {
    n: usize,
    w: f64,
    wm: f64,
    wmm: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrigSums {
    ws: f64,
    wc: f64,
    wss: f64,
    wsc: f64,
    wcc: f64,
    wms: f64,
    wmc: f64,
}

impl TrigSums {
    #[inline(always)]
    fn accumulate(&mut self, w: f64, m: f64, s: f64, c: f64) {
        let ws = w * s;
        let wc = w * c;
        self.ws += ws;
        self.wc += wc;
        self.wss += ws * s;
        self.wsc += ws * c;
        self.wcc += wc * c;
        self.wms += ws * m;
        self.wmc += wc * m;
    }
}

fn ill_conditioned(base: &BaseSums, t: &TrigSums) -> bool {
    let css = t.wss - t.ws * t.ws / base.w;
    let csc = t.wsc - t.ws * t.wc / base.w;
    let ccc = t.wcc - t.wc * t.wc / base.w;
    !(css > REFIT_RTOL * t.wss && ccc - csc * csc / css > REFIT_RTOL * t.wcc)
}

/// Solves the 3x3 weighted normal equations through their centred 2x2 form.
fn fit_from_sums(base: &BaseSums, t: &TrigSums, offset: f64) -> BandFit {
    let w = base.w;
    let s_bar = t.ws / w;
    let c_bar = t.wc / w;
    let m_bar = base.wm / w;

    let css = t.wss - t.ws * s_bar;
    let csc = t.wsc - t.ws * c_bar;
    let ccc = t.wcc - t.wc * c_bar;
    let ysm = t.wms - t.ws * m_bar;
    let ycm = t.wmc - t.wc * m_bar;
    let yy = base.wmm - base.wm * m_bar;

    let mut a11 = css;
    let mut a22 = ccc;
    let schur = if css > 0.0 { ccc - csc * csc / css } else { 0.0 };
    let degenerate = base.n < 3
        || !(css > DEGENERATE_RTOL * t.wss)
        || !(schur > DEGENERATE_RTOL * t.wcc);
    if degenerate {
        a11 += (DEGENERATE_RTOL * t.wss).max(f64::MIN_POSITIVE);
        a22 += (DEGENERATE_RTOL * t.wcc).max(f64::MIN_POSITIVE);
    }
    let det = a11 * a22 - csc * csc;
    let (cs, cc) = if det > 0.0 && det.is_finite() {
        ((a22 * ysm - csc * ycm) / det, (a11 * ycm - csc * ysm) / det)
    } else {
        (0.0, 0.0)
    };

    let quad = cs * cs * css + 2.0 * cs * cc * csc + cc * cc * ccc;
    let rss = 0.5 * (yy - 2.0 * (cs * ysm + cc * ycm) + quad).max(0.0);
    BandFit {
        beta0: offset + m_bar - cs * s_bar - cc * c_bar,
        amp: cs.hypot(cc),
        rho: wrap_phase(cc.atan2(cs)),
        rss,
        degenerate,
    }
}

/// Weighted sinusoid-plus-intercept regression for one band at `omega`.
pub fn solve_band(series: &BandSeries, omega: f64) -> Result<BandFit> {
    if series.is_empty() {
        return Err(Error::invalid(format!("band {} has no observations", series.band_id())));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::invalid(format!("omega must be positive (got {omega})")));
    }
    let prep = PreparedBand::new(series);
    Ok(solve_prepared(&prep, omega))
}

pub(crate) fn solve_prepared(prep: &PreparedBand, omega: f64) -> BandFit {
    prep.finish(&prep.base_sums(), &prep.trig_sums(omega), omega)
}

/// MGLS parameters at one frequency. Bands without data get zeros.
pub(crate) fn solve_all(prepared: &[Option<PreparedBand>], omega: f64) -> (ModelParams, f64, Vec<bool>) {
    let mut params = ModelParams::zeros(omega, prepared.len());
    let mut degenerate = vec![true; prepared.len()];
    let mut objective = 0.0;
    for (b, prep) in prepared.iter().enumerate() {
        if let Some(prep) = prep {
            let fit = solve_prepared(prep, omega);
            params.beta0[b] = fit.beta0;
            params.amp[b] = fit.amp;
            params.rho[b] = fit.rho;
            degenerate[b] = fit.degenerate;
            objective += fit.rss;
        }
    }
    (params, objective, degenerate)
}

/// Evaluates one block of grid indices, returning per-frequency band fits.
fn block_fits<F>(prepared: &[Option<PreparedBand>], grid: &FrequencyGrid, range: std::ops::Range<usize>, mut sink: F)
where
    F: FnMut(usize, usize, BandFit),
{
    let freqs = grid.freqs();
    let uniform = grid.is_uniform();
    for (b, prep) in prepared.iter().enumerate() {
        let Some(prep) = prep else { continue };
        let base = prep.base_sums();
        if uniform {
            let n = prep.times.len();
            let omega0 = freqs[range.start];
            let step = grid.spacing();
            let mut sin = Vec::with_capacity(n);
            let mut cos = Vec::with_capacity(n);
            let mut dsin = Vec::with_capacity(n);
            let mut dcos = Vec::with_capacity(n);
            for &t in &prep.times {
                let (s, c) = (omega0 * t).sin_cos();
                sin.push(s);
                cos.push(c);
                let (ds, dc) = (step * t).sin_cos();
                dsin.push(ds);
                dcos.push(dc);
            }
            for k in range.clone() {
                let mut sums = TrigSums::default();
                for i in 0..n {
                    let (s, c) = (sin[i], cos[i]);
                    sums.accumulate(prep.weights[i], prep.centered[i], s, c);
                    sin[i] = s * dcos[i] + c * dsin[i];
                    cos[i] = c * dcos[i] - s * dsin[i];
                }
                sink(k, b, prep.finish(&base, &sums, freqs[k]));
            }
        } else {
            for k in range.clone() {
                sink(k, b, prep.finish(&base, &prep.trig_sums(freqs[k]), freqs[k]));
            }
        }
    }
}

fn blocks(len: usize) -> Vec<std::ops::Range<usize>> {
    (0..len)
        .step_by(BLOCK)
        .map(|s| s..(s + BLOCK).min(len))
        .collect()
}

fn objective_block(prepared: &[Option<PreparedBand>], grid: &FrequencyGrid, range: std::ops::Range<usize>) -> Vec<(f64, bool)> {
    let start = range.start;
    let mut out = vec![(0.0, true); range.len()];
    block_fits(prepared, grid, range, |k, _, fit| {
        let slot = &mut out[k - start];
        slot.0 += fit.rss;
        slot.1 &= fit.degenerate;
    });
    out
}

/// `l(omega)` for every grid frequency, without parameters.
pub fn profile_objectives(lc: &MultibandLightCurve, grid: &FrequencyGrid) -> Profile {
    let prepared = prepare(lc);
    let ranges = blocks(grid.len());
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<(f64, bool)>> = ranges
        .into_par_iter()
        .map(|r| objective_block(&prepared, grid, r))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<(f64, bool)>> = ranges
        .into_iter()
        .map(|r| objective_block(&prepared, grid, r))
        .collect();
    let (values, excluded) = parts.into_iter().flatten().unzip();
    Profile { values, excluded }
}

/// `l(omega)` and the minimizing parameters at every grid frequency.
pub fn nll_profile(lc: &MultibandLightCurve, grid: &FrequencyGrid) -> Vec<ProfilePoint> {
    let prepared = prepare(lc);
    let n_bands = lc.n_bands();
    let mut points: Vec<ProfilePoint> = grid
        .freqs()
        .iter()
        .map(|&omega| ProfilePoint {
            omega,
            objective: 0.0,
            params: ModelParams::zeros(omega, n_bands),
            degenerate: vec![true; n_bands],
        })
        .collect();
    for r in blocks(grid.len()) {
        block_fits(&prepared, grid, r, |k, b, fit| {
            let p = &mut points[k];
            p.objective += fit.rss;
            p.params.beta0[b] = fit.beta0;
            p.params.amp[b] = fit.amp;
            p.params.rho[b] = fit.rho;
            p.degenerate[b] = fit.degenerate;
        });
    }
    points
}

/// Builds the MGLS result at a chosen grid frequency.
pub(crate) fn mgls_result_at(
    lc: &MultibandLightCurve,
    omega: f64,
    objective: f64,
    grid_size: usize,
    degenerate_freqs: usize,
) -> FitResult {
    let (params, _, _) = solve_all(&prepare(lc), omega);
    FitResult {
        method: Method::Mgls,
        params,
        objective,
        active: lc.active_mask(),
        diagnostics: FitDiagnostics {
            grid_size,
            degenerate_freqs,
            pnll_evals: 0,
            converged: true,
            rounds_used: 0,
            pre_canonical_objective: objective,
            pruning_complete: true,
        },
    }
}

/// Frequency minimizing `l(omega)` over the grid (lowest frequency on ties).
pub fn mgls_estimate(lc: &MultibandLightCurve, grid: &FrequencyGrid) -> Result<FitResult> {
    let profile = profile_objectives(lc, grid);
    mgls_from_profile(lc, grid, &profile)
}

pub fn mgls_from_profile(lc: &MultibandLightCurve, grid: &FrequencyGrid, profile: &Profile) -> Result<FitResult> {
    let best = profile.argmin().ok_or(Error::AllDegenerate)?;
    Ok(mgls_result_at(
        lc,
        grid.freqs()[best],
        profile.values[best],
        grid.len(),
        profile.degenerate_count(),
    ))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::model::{band_nll, nll, predict};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band(t: Vec<f64>, m: Vec<f64>, s: Vec<f64>) -> BandSeries {
        BandSeries::new("b", t, m, s).unwrap()
    }

    /// Explicit 3x3 normal equations solved by cofactor inversion.
    fn normal_equations_oracle(series: &BandSeries, omega: f64) -> [f64; 3] {
        let mut a = [[0.0f64; 3]; 3];
        let mut y = [0.0f64; 3];
        for ((&t, &m), &w) in series.times().iter().zip(series.mags()).zip(series.weights()) {
            let x = [(omega * t).sin(), (omega * t).cos(), 1.0];
            for i in 0..3 {
                y[i] += w * x[i] * m;
                for j in 0..3 {
                    a[i][j] += w * x[i] * x[j];
                }
            }
        }
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let mut inv = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                // adjugate: cofactor of (j, i)
                let r0: Vec<usize> = (0..3).filter(|&r| r != j).collect();
                let c: Vec<usize> = (0..3).filter(|&c| c != i).collect();
                let minor = a[r0[0]][c[0]] * a[r0[1]][c[1]] - a[r0[0]][c[1]] * a[r0[1]][c[0]];
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                inv[i][j] = sign * minor / det;
            }
        }
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = (0..3).map(|j| inv[i][j] * y[j]).sum();
        }
        out
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let p = ModelParams::new(4.1, vec![15.3], vec![0.42], vec![-2.2]).unwrap();
        let t: Vec<f64> = (0..12).map(|i| 0.731 * i as f64 + 0.05 * (i * i) as f64).collect();
        let m = t.iter().map(|&t| predict(&p, 0, t).unwrap()).collect();
        let fit = solve_band(&band(t, m, vec![0.03; 12]), 4.1).unwrap();
        assert!((fit.beta0 - 15.3).abs() < 1e-8);
        assert!((fit.amp - 0.42).abs() < 1e-8);
        assert!((fit.rho + 2.2).abs() < 1e-8);
        assert!(fit.rss < 1e-12);
        assert!(!fit.degenerate);
    }

    #[test]
    fn flat_signal() {
        let t = vec![0.1, 0.9, 2.3, 3.7, 5.0];
        let fit = solve_band(&band(t, vec![12.5; 5], vec![0.1, 0.2, 0.1, 0.3, 0.1]), 2.0).unwrap();
        assert!((fit.beta0 - 12.5).abs() < 1e-12);
        assert!(fit.amp < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(4..30);
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(14.0..16.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.2)).collect();
            let series = band(t, m, s);
            let omega = rng.random_range(0.5..20.0);
            let [cs, cc, b0] = normal_equations_oracle(&series, omega);
            let fit = solve_band(&series, omega).unwrap();
            let scale = 1.0 + b0.abs();
            assert!((fit.beta0 - b0).abs() < 1e-9 * scale, "{} vs {b0}", fit.beta0);
            assert!((fit.amp * fit.rho.cos() - cs).abs() < 1e-9 * scale);
            assert!((fit.amp * fit.rho.sin() - cc).abs() < 1e-9 * scale);
            let direct = band_nll(&series, omega, fit.beta0, fit.amp, fit.rho);
            assert!((fit.rss - direct).abs() < 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn tiny_bands_are_flagged() {
        let one = solve_band(&band(vec![1.0], vec![3.0], vec![0.1]), 2.0).unwrap();
        assert!(one.degenerate);
        assert!((one.beta0 - 3.0).abs() < 1e-12 && one.amp == 0.0 && one.rss == 0.0);
        let two = solve_band(&band(vec![1.0, 2.5], vec![3.0, 3.4], vec![0.1, 0.1]), 2.0).unwrap();
        assert!(two.degenerate);
        assert!(two.rss < 1e-6);
        assert!(solve_band(&band(vec![], vec![], vec![]), 1.0).is_err());
    }

    fn random_curve(rng: &mut ChaCha8Rng, n_bands: usize, n: usize) -> MultibandLightCurve {
        let bands = (0..n_bands)
            .map(|b| {
                let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..60.0)).collect();
                let m = t
                    .iter()
                    .map(|&t| 15.0 + 0.3 * (3.0 * t + b as f64).sin() + rng.random_range(-0.1..0.1))
                    .collect();
                BandSeries::new(format!("b{b}"), t, m, vec![0.05; n]).unwrap()
            })
            .collect();
        MultibandLightCurve::new(None, bands).unwrap()
    }

    #[test]
    fn profile_agrees_with_direct_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lc = random_curve(&mut rng, 3, 15);
        let grid = FrequencyGrid::uniform(2.0, 4.0, 0.1 / 60.0).unwrap();
        let points = nll_profile(&lc, &grid);
        let fast = profile_objectives(&lc, &grid);
        assert_eq!(points.len(), grid.len());
        for (p, &v) in points.iter().zip(&fast.values) {
            let direct = nll(&lc, &p.params);
            assert!((p.objective - direct).abs() < 1e-10 * (1.0 + direct));
            assert!((v - p.objective).abs() < 1e-12 * (1.0 + v));
        }
    }

    #[test]
    fn noiseless_profile_hits_zero_at_truth() {
        let truth = ModelParams::new(3.0, vec![10.0, 11.0], vec![0.5, 0.3], vec![0.2, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bands = (0..2)
            .map(|b| {
                let t: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..40.0)).collect();
                let m = t.iter().map(|&t| predict(&truth, b, t).unwrap()).collect();
                BandSeries::new(format!("{b}"), t, m, vec![0.1; 10]).unwrap()
            })
            .collect();
        let lc = MultibandLightCurve::new(None, bands).unwrap();
        let grid = FrequencyGrid::from_freqs(vec![2.5, 2.9, 3.0, 3.1]).unwrap();
        let prof = profile_objectives(&lc, &grid);
        assert!(prof.values[2] < 1e-16);
        let fit = mgls_estimate(&lc, &grid).unwrap();
        assert_eq!(fit.omega(), 3.0);
    }

    #[test]
    fn middle_of_three_frequencies() {
        let truth = ModelParams::new(2.0, vec![0.0], vec![1.0], vec![0.0]).unwrap();
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.37).collect();
        let m = t.iter().map(|&t| predict(&truth, 0, t).unwrap()).collect();
        let lc = MultibandLightCurve::new(None, vec![band(t, m, vec![1.0; 20])]).unwrap();
        let grid = FrequencyGrid::from_freqs(vec![1.5, 2.0, 2.5]).unwrap();
        let prof = profile_objectives(&lc, &grid);
        let brute = (0..3).min_by(|&a, &b| prof.values[a].total_cmp(&prof.values[b])).unwrap();
        assert_eq!(brute, 1);
        assert_eq!(mgls_estimate(&lc, &grid).unwrap().omega(), 2.0);
    }

    #[test]
    fn ties_break_to_lowest_frequency() {
        let p = Profile {
            values: vec![3.0, 1.0, 1.0, 2.0],
            excluded: vec![false; 4],
        };
        assert_eq!(p.argmin(), Some(1));
        let p = Profile {
            values: vec![3.0, 1.0, 1.0],
            excluded: vec![false, true, false],
        };
        assert_eq!(p.argmin(), Some(2));
    }

    #[test]
    fn all_degenerate_is_an_error() {
        let lc = MultibandLightCurve::new(None, vec![band(vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0])]).unwrap();
        let grid = FrequencyGrid::from_freqs(vec![1.0, 2.0]).unwrap();
        assert!(matches!(mgls_estimate(&lc, &grid), Err(Error::AllDegenerate)));
    }

    #[test]
    fn band_offset_only_moves_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lc = random_curve(&mut rng, 2, 12);
        let shifted_band = {
            let b = &lc.bands()[1];
            BandSeries::new("b1", b.times().to_vec(), b.mags().iter().map(|m| m + 2.5).collect(), b.sigmas().to_vec()).unwrap()
        };
        let lc2 = MultibandLightCurve::new(None, vec![lc.bands()[0].clone(), shifted_band]).unwrap();
        let a = solve_band(&lc.bands()[1], 2.7).unwrap();
        let b = solve_band(&lc2.bands()[1], 2.7).unwrap();
        assert!((b.beta0 - a.beta0 - 2.5).abs() < 1e-10);
        assert!((b.amp - a.amp).abs() < 1e-10 && (b.rho - a.rho).abs() < 1e-9);
        assert!((b.rss - a.rss).abs() < 1e-9 * (1.0 + a.rss));
    }

    #[test]
    fn band_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lc = random_curve(&mut rng, 3, 10);
        let mut rev = lc.bands().to_vec();
        rev.reverse();
        let lc2 = MultibandLightCurve::new(None, rev).unwrap();
        let grid = FrequencyGrid::uniform(1.0, 5.0, 0.01).unwrap();
        let a = profile_objectives(&lc, &grid);
        let b = profile_objectives(&lc2, &grid);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x));
        }
    }

    /// Dense search over (beta0, amp, rho) never beats the regression.
    #[test]
    fn regression_is_the_minimum_over_a_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let n = 6;
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let series = band(t, m, vec![0.5; n]);
            let omega = 1.7;
            let fit = solve_band(&series, omega).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..=40 {
                let b0 = fit.beta0 - 1.0 + 2.0 * i as f64 / 40.0;
                for j in 0..=40 {
                    let a = 2.5 * j as f64 / 40.0;
                    for k in 0..72 {
                        let r = -std::f64::consts::PI + k as f64 * std::f64::consts::PI / 36.0;
                        best = best.min(band_nll(&series, omega, b0, a, r));
                    }
                }
            }
            assert!(fit.rss <= best + 1e-12);
            assert!(best - fit.rss < 0.05 * (1.0 + fit.rss));
        }
    }

    #[test]
    fn three_points_are_interpolated_near_phase_collisions() {
        let series = band(
            vec![0.76156090916683, 3.5046099675935647, 5.848520534585056],
            vec![10.0, 10.0, 16.174244559526052],
            vec![0.01, 0.01, 0.02071692718265736],
        );
        let collision = 2.0 * std::f64::consts::PI / (3.5046099675935647 - 0.76156090916683) * 8.0;
        for omega in [18.527341290401345, collision * (1.0 + 1e-9), collision] {
            let fit = solve_band(&series, omega).unwrap();
            assert!(fit.rss < 1e-6, "omega {omega}: {}", fit.rss);
        }
        let grid = FrequencyGrid::uniform(18.52, 18.53, 1e-4).unwrap();
        assert!(nll_profile(&MultibandLightCurve::new(None, vec![series]).unwrap(), &grid)
            .iter()
            .all(|p| p.objective < 1e-6));
    }
}
