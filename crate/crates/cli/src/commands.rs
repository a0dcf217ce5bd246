use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pgls_core::grid::GridSpec;
use pgls_core::io::{
    align_bands, band_union, evaluate as score, read_curves, read_estimates, read_truth, write_accuracy,
    write_curves, write_fits, write_periodogram, write_truth, FitRecord,
};
use pgls_core::mgls::mgls_from_profile;
use pgls_core::model::uniform_direction;
use pgls_core::pruning::{pgls_with_schedule, pnll_profile, PglsOptions, Schedule};
use pgls_core::synth::{downsample as subsample, simulate as run_simulation, SimConfig};
use pgls_core::tuning::{
    fit_reference, select_gamma1, select_gamma2, GammaSelection, HistoricalReference, TuneSet, TuningOptions,
};
use pgls_core::{
    profile_objectives, BcdSettings, FitResult, FrequencyGrid, Method, MultibandLightCurve, PenaltyConfig, Profile,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{DownsampleArgs, EvaluateArgs, FitArgs, Gamma, PeriodogramArgs, SimulateArgs, TuneArgs};
use crate::{CliError, CliResult};

const DEFAULT_PERIOD_MIN: f64 = 0.2;
const DEFAULT_PERIOD_MAX: f64 = 1.0;
const DEFAULT_TUNE_COUNT: usize = 100;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Validation(format!("missing --{flag}")))
}

fn create(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn grid_spec(min: Option<f64>, max: Option<f64>, cap: Option<usize>) -> CliResult<GridSpec> {
    let spec = GridSpec {
        period_min: min.unwrap_or(DEFAULT_PERIOD_MIN),
        period_max: max.unwrap_or(DEFAULT_PERIOD_MAX),
        max_len: cap,
    };
    if !(spec.period_min > 0.0 && spec.period_min < spec.period_max && spec.period_max.is_finite()) {
        return Err(CliError::Validation(format!(
            "period bounds must satisfy 0 < min < max (got {}, {})",
            spec.period_min, spec.period_max
        )));
    }
    Ok(spec)
}

fn align_all(curves: &[MultibandLightCurve], band_ids: &[String]) -> CliResult<Vec<MultibandLightCurve>> {
    curves
        .iter()
        .map(|c| {
            align_bands(c, band_ids).map_err(|e| {
                CliError::Validation(format!("star {}: {e}", c.star_id().unwrap_or("?")))
            })
        })
        .collect()
}

/// Output of the tune subcommand; fit and periodogram read the first four
/// fields back.
#[derive(Debug, Serialize, Deserialize)]
struct PenaltyFile {
    band_ids: Vec<String>,
    gamma1: f64,
    gamma2: f64,
    a_tilde: Vec<f64>,
    #[serde(default, skip_deserializing)]
    reference: Option<HistoricalReference>,
    #[serde(default, skip_deserializing)]
    gamma1_search: Option<GammaSelection>,
    #[serde(default, skip_deserializing)]
    gamma2_search: Option<GammaSelection>,
}

fn read_penalty(path: &Path) -> CliResult<PenaltyFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn report_selection(name: &str, s: &GammaSelection) {
    if s.target_reached {
        eprintln!("{name} = {} after {} evaluations", s.gamma, s.trace.len());
    } else {
        eprintln!(
            "warning: {name} scatter target {} not reached in the search bracket; using {}",
            s.target, s.gamma
        );
    }
}

/// Resolves the penalty for a PGLS run, tuning strengths marked `auto`.
fn resolve_penalty(
    a: &FitArgs,
    band_ids: &[String],
    curves: &[MultibandLightCurve],
    spec: &GridSpec,
    opts: &PglsOptions,
) -> CliResult<PenaltyConfig> {
    let file = a.penalty.as_deref().map(read_penalty).transpose()?;
    if let Some(f) = &file {
        if f.band_ids != band_ids {
            return Err(CliError::Validation(format!(
                "penalty file bands {:?} do not match {:?}",
                f.band_ids, band_ids
            )));
        }
    }
    let mut g1 = a.gamma1.unwrap_or(Gamma::Value(file.as_ref().map_or(0.0, |f| f.gamma1)));
    let mut g2 = a.gamma2.unwrap_or(Gamma::Value(file.as_ref().map_or(0.0, |f| f.gamma2)));
    let mut a_tilde = a
        .a_tilde
        .clone()
        .or_else(|| file.as_ref().map(|f| f.a_tilde.clone()));

    if g1 == Gamma::Auto || g2 == Gamma::Auto {
        let hist_path = a
            .historical
            .as_deref()
            .ok_or_else(|| CliError::Validation("an \"auto\" strength needs --historical".into()))?;
        let historical = align_all(&read_curves(hist_path)?, band_ids)?;
        let mut reference = fit_reference(&historical, spec)?;
        match &a_tilde {
            Some(u) => reference.a_tilde = u.clone(),
            None => a_tilde = Some(reference.a_tilde.clone()),
        }
        let n = a.tune_count.unwrap_or(DEFAULT_TUNE_COUNT).min(curves.len());
        let tune_opts = TuningOptions {
            pgls: opts.clone(),
            ..TuningOptions::default()
        };
        let set = TuneSet::new(curves[..n].to_vec(), spec, tune_opts.schedule_keep)?;
        if g1 == Gamma::Auto {
            let s = select_gamma1(&set, &reference, &tune_opts)?;
            report_selection("gamma1", &s);
            g1 = Gamma::Value(s.gamma);
        }
        if g2 == Gamma::Auto {
            let Gamma::Value(fixed) = g1 else { unreachable!() };
            let s = select_gamma2(&set, &reference, fixed, &tune_opts)?;
            report_selection("gamma2", &s);
            g2 = Gamma::Value(s.gamma);
        }
    }
    let (Gamma::Value(g1), Gamma::Value(g2)) = (g1, g2) else { unreachable!() };
    let a_tilde = a_tilde.unwrap_or_else(|| uniform_direction(band_ids.len()));
    if a_tilde.len() != band_ids.len() {
        return Err(CliError::Validation(format!(
            "reference direction has {} entries for {} bands",
            a_tilde.len(),
            band_ids.len()
        )));
    }
    Ok(PenaltyConfig::new(g1, g2, a_tilde)?)
}

fn safe_name(star: &str) -> String {
    star.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn nll_column(profile: &Profile) -> Vec<Option<f64>> {
    profile
        .values
        .iter()
        .zip(&profile.excluded)
        .map(|(&v, &ex)| (!ex).then_some(v))
        .collect()
}

struct StarJob<'a> {
    lc: &'a MultibandLightCurve,
    method: Method,
    spec: &'a GridSpec,
    penalty: Option<&'a PenaltyConfig>,
    opts: &'a PglsOptions,
    periodogram: Option<(&'a Path, bool)>,
}

impl StarJob<'_> {
    fn run(&self, star: &str) -> CliResult<FitResult> {
        let grid = self.spec.for_curve(self.lc)?;
        let profile = profile_objectives(self.lc, &grid);
        let (fit, f_column) = match (self.method, self.penalty) {
            (Method::Pgls, Some(cfg)) => {
                let schedule = Schedule::from_profile(&profile, None);
                let (fit, stats) = pgls_with_schedule(self.lc, &grid, &schedule, cfg, self.opts)?;
                let f = match self.periodogram {
                    Some((_, true)) => Some(
                        pnll_profile(self.lc, &grid, cfg, self.opts)?
                            .into_iter()
                            .map(|r| Some(r.objective))
                            .collect(),
                    ),
                    Some((_, false)) => {
                        let mut f = vec![None; grid.len()];
                        for (i, v) in stats.evaluated {
                            f[i] = Some(v);
                        }
                        Some(f)
                    }
                    None => None,
                };
                (fit, f)
            }
            _ => (mgls_from_profile(self.lc, &grid, &profile)?, None),
        };
        if let Some((dir, _)) = self.periodogram {
            let path = dir.join(format!("{}.csv", safe_name(star)));
            write_periodogram(create(Some(&path))?, &grid, &nll_column(&profile), f_column.as_deref())?;
        }
        Ok(fit)
    }
}

fn bcd_settings(max_rounds: Option<usize>, rel_tol: Option<f64>) -> CliResult<BcdSettings> {
    let d = BcdSettings::default();
    let s = BcdSettings {
        max_rounds: max_rounds.unwrap_or(d.max_rounds),
        rel_tol: rel_tol.unwrap_or(d.rel_tol),
        ..d
    };
    s.validate()?;
    Ok(s)
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let input = required(a.input.clone(), "input")?;
    let curves = read_curves(&input)?;
    let spec = grid_spec(a.period_min, a.period_max, a.grid_cap)?;
    let method = a.method.unwrap_or(Method::Pgls);
    let band_ids = match a.penalty.as_deref() {
        Some(p) => read_penalty(p)?.band_ids,
        None => band_union(&curves),
    };
    let curves = align_all(&curves, &band_ids)?;
    let opts = PglsOptions {
        bcd: bcd_settings(a.max_rounds, a.rel_tol)?,
        max_evals: a.max_evals,
        ..PglsOptions::default()
    };
    let penalty = match method {
        Method::Pgls => Some(resolve_penalty(&a, &band_ids, &curves, &spec, &opts)?),
        Method::Mgls => None,
    };
    if let Some(dir) = &a.periodogram_dir {
        std::fs::create_dir_all(dir)?;
    }
    let full = a.full_pnll.unwrap_or(false);
    let records: Vec<FitRecord> = curves
        .par_iter()
        .enumerate()
        .map(|(i, lc)| {
            let star = lc.star_id().map_or_else(|| format!("star{i}"), str::to_owned);
            let job = StarJob {
                lc,
                method,
                spec: &spec,
                penalty: penalty.as_ref(),
                opts: &opts,
                periodogram: a.periodogram_dir.as_deref().map(|d| (d, full)),
            };
            let outcome = job.run(&star).map_err(|e| e.to_string());
            FitRecord {
                star_id: star,
                band_ids: band_ids.clone(),
                outcome,
            }
        })
        .collect();
    let mut failures = 0;
    for r in &records {
        if let Err(msg) = &r.outcome {
            failures += 1;
            eprintln!("star {}: {msg}", r.star_id);
        }
    }
    let mut out = create(a.output.as_deref())?;
    write_fits(&mut out, &method.to_string(), &records)?;
    out.flush()?;
    if failures == records.len() {
        return Err(CliError::Runtime("every star failed".into()));
    }
    Ok(())
}

pub fn tune(a: TuneArgs) -> CliResult<()> {
    let historical = read_curves(&required(a.historical, "historical")?)?;
    let tune_set = read_curves(&required(a.tune_set, "tune-set")?)?;
    let spec = grid_spec(a.period_min, a.period_max, a.grid_cap)?;
    let band_ids = band_union(&historical);
    let historical = align_all(&historical, &band_ids)?;
    let tune_set = align_all(&tune_set, &band_ids)?;
    let d = TuningOptions::default();
    let opts = TuningOptions {
        bracket: (a.gamma_min.unwrap_or(d.bracket.0), a.gamma_max.unwrap_or(d.bracket.1)),
        ..d
    };
    let reference = fit_reference(&historical, &spec)?;
    let set = TuneSet::new(tune_set, &spec, opts.schedule_keep)?;
    let g1 = select_gamma1(&set, &reference, &opts)?;
    report_selection("gamma1", &g1);
    let g2 = select_gamma2(&set, &reference, g1.gamma, &opts)?;
    report_selection("gamma2", &g2);
    let file = PenaltyFile {
        band_ids,
        gamma1: g1.gamma,
        gamma2: g2.gamma,
        a_tilde: reference.a_tilde.clone(),
        reference: Some(reference),
        gamma1_search: Some(g1),
        gamma2_search: Some(g2),
    };
    let mut out = create(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &file).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let output = required(a.output, "output")?;
    let d = SimConfig::default();
    let cfg = SimConfig {
        n_curves: a.n_curves.unwrap_or(d.n_curves),
        n_bands: a.n_bands.unwrap_or(d.n_bands),
        period_range: (a.period_min.unwrap_or(d.period_range.0), a.period_max.unwrap_or(d.period_range.1)),
        obs_per_band: a.obs_per_band.unwrap_or(d.obs_per_band),
        noise_scale: a.noise_scale.unwrap_or(d.noise_scale),
        amp_scatter: a.amp_scatter.unwrap_or(d.amp_scatter),
        phase_jitter: a.phase_jitter.unwrap_or(d.phase_jitter),
        time_span: a.time_span.unwrap_or(d.time_span),
        seed: a.seed.unwrap_or(d.seed),
        ..d
    };
    let sims = run_simulation(&cfg)?;
    let curves: Vec<_> = sims.iter().map(|s| s.curve.clone()).collect();
    let mut out = create(Some(&output))?;
    write_curves(&mut out, &curves)?;
    out.flush()?;
    if let Some(truth) = a.truth {
        let mut out = create(Some(&truth))?;
        write_truth(&mut out, &sims)?;
        out.flush()?;
    }
    Ok(())
}

pub fn downsample(a: DownsampleArgs) -> CliResult<()> {
    let curves = read_curves(&required(a.input, "input")?)?;
    let k = required(a.k, "k")?;
    if k == 0 {
        return Err(CliError::Validation("--k must be at least 1".into()));
    }
    let seed = a.seed.unwrap_or(0);
    let reduced: Vec<_> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| subsample(c, k, seed.wrapping_add(i as u64)))
        .collect();
    let mut out = create(a.output.as_deref())?;
    write_curves(&mut out, &reduced)?;
    out.flush()?;
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let paths: Vec<PathBuf> = required(a.estimates, "estimates")?;
    if paths.is_empty() {
        return Err(CliError::Validation("missing --estimates".into()));
    }
    let mut estimates = Vec::new();
    for p in &paths {
        estimates.extend(read_estimates(p)?);
    }
    let truth = read_truth(&required(a.truth, "truth")?)?;
    let report = score(&estimates, &truth);
    for id in &report.missing_truth {
        eprintln!("warning: no true period for star {id}");
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "method,n,within_1pct,fraction")?;
    for m in &report.methods {
        writeln!(stdout, "{},{},{},{}", m.method, m.n, m.within, m.fraction)?;
    }
    if let Some(path) = a.output {
        let mut out = create(Some(&path))?;
        write_accuracy(&mut out, &report)?;
        out.flush()?;
    }
    Ok(())
}

pub fn periodogram(a: PeriodogramArgs) -> CliResult<()> {
    let curves = read_curves(&required(a.input, "input")?)?;
    let lc = match &a.star {
        Some(id) => curves
            .iter()
            .find(|c| c.star_id() == Some(id.as_str()))
            .ok_or_else(|| CliError::Validation(format!("star {id} not found")))?,
        None => &curves[0],
    };
    let spec = grid_spec(a.period_min, a.period_max, a.grid_cap)?;
    let file = a.penalty.as_deref().map(read_penalty).transpose()?;
    let (lc, band_ids) = match &file {
        Some(f) => (align_bands(lc, &f.band_ids)?, f.band_ids.clone()),
        None => (lc.clone(), band_union(std::slice::from_ref(lc))),
    };
    let grid: FrequencyGrid = spec.for_curve(&lc)?;
    let profile = profile_objectives(&lc, &grid);
    let penalized = a.gamma1.is_some() || a.gamma2.is_some() || file.is_some();
    let f = if penalized {
        let a_tilde = a
            .a_tilde
            .clone()
            .or_else(|| file.as_ref().map(|f| f.a_tilde.clone()))
            .unwrap_or_else(|| uniform_direction(band_ids.len()));
        let cfg = PenaltyConfig::new(
            a.gamma1.or(file.as_ref().map(|f| f.gamma1)).unwrap_or(0.0),
            a.gamma2.or(file.as_ref().map(|f| f.gamma2)).unwrap_or(0.0),
            a_tilde,
        )?;
        Some(
            pnll_profile(&lc, &grid, &cfg, &PglsOptions::default())?
                .into_iter()
                .map(|r| Some(r.objective))
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let mut out = create(a.output.as_deref())?;
    write_periodogram(&mut out, &grid, &nll_column(&profile), f.as_deref())?;
    out.flush()?;
    Ok(())
}
