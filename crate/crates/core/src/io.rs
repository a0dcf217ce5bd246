//! CSV formats: light curves, true parameters, fit results, periodograms and
//! accuracy reports.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::grid::FrequencyGrid;
use crate::model::{BandSeries, MultibandLightCurve};
use crate::synth::SimulatedCurve;

pub const CURVE_HEADER: [&str; 5] = ["star_id", "band", "time", "mag", "sigma"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_err(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| parse_err(&path.display().to_string(), 0, e.to_string()))
}

type BandColumns = (String, Vec<f64>, Vec<f64>, Vec<f64>);

#[derive(Default)]
struct StarRows {
    bands: Vec<BandColumns>,
}

/// Reads light curves with header `star_id,band,time,mag,sigma`. Stars and
/// bands keep their order of first appearance.
pub fn read_curves(path: &Path) -> Result<Vec<MultibandLightCurve>> {
    read_curves_from(open(path)?, &path.display().to_string())
}

pub fn read_curves_from<R: Read>(reader: R, name: &str) -> Result<Vec<MultibandLightCurve>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(name, 1, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(parse_err(name, 1, "file is empty"));
    }
    if header.iter().ne(CURVE_HEADER) {
        return Err(parse_err(
            name,
            1,
            format!("expected header {} (got {})", CURVE_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut order: Vec<String> = Vec::new();
    let mut stars: HashMap<String, StarRows> = HashMap::new();
    let mut first_line: HashMap<String, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            let raw = &rec[i];
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(name, line, format!("{}: not a number: {raw:?}", CURVE_HEADER[i])))?;
            if !v.is_finite() {
                return Err(parse_err(name, line, format!("{}: not finite", CURVE_HEADER[i])));
            }
            Ok(v)
        };
        let (star, band) = (&rec[0], &rec[1]);
        if star.is_empty() || band.is_empty() {
            return Err(parse_err(name, line, "star_id and band must be nonempty"));
        }
        let (t, m, s) = (field(2)?, field(3)?, field(4)?);
        if s <= 0.0 {
            return Err(parse_err(name, line, format!("sigma must be positive (got {s})")));
        }
        let entry = stars.entry(star.to_owned()).or_insert_with(|| {
            order.push(star.to_owned());
            first_line.insert(star.to_owned(), line);
            StarRows::default()
        });
        let pos = match entry.bands.iter().position(|b| b.0 == band) {
            Some(p) => p,
            None => {
                entry.bands.push((band.to_owned(), vec![], vec![], vec![]));
                entry.bands.len() - 1
            }
        };
        let b = &mut entry.bands[pos];
        b.1.push(t);
        b.2.push(m);
        b.3.push(s);
    }
    if order.is_empty() {
        return Err(parse_err(name, 2, "no observations"));
    }

    order
        .into_iter()
        .map(|star| {
            let rows = stars.remove(&star).unwrap();
            let line = first_line[&star];
            let bands = rows
                .bands
                .into_iter()
                .map(|(id, t, m, s)| BandSeries::new(id, t, m, s))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| parse_err(name, line, format!("star {star}: {e}")))?;
            MultibandLightCurve::new(Some(star.clone()), bands)
                .map_err(|e| parse_err(name, line, format!("star {star}: {e}")))
        })
        .collect()
}

fn star_name(lc: &MultibandLightCurve, i: usize) -> String {
    lc.star_id().map_or_else(|| format!("star{i}"), str::to_owned)
}

pub fn write_curves<W: Write>(writer: W, curves: &[MultibandLightCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVE_HEADER)?;
    for (i, lc) in curves.iter().enumerate() {
        let star = star_name(lc, i);
        for band in lc.bands() {
            for ((t, m), s) in band.times().iter().zip(band.mags()).zip(band.sigmas()) {
                w.write_record([star.as_str(), band.band_id(), &fmt_f64(*t), &fmt_f64(*m), &fmt_f64(*s)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Band ids over all curves in order of first appearance.
pub fn band_union(curves: &[MultibandLightCurve]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for lc in curves {
        for b in lc.bands() {
            if !ids.iter().any(|x| x == b.band_id()) {
                ids.push(b.band_id().to_owned());
            }
        }
    }
    ids
}

/// Reorders each curve's bands to `band_ids`, adding empty bands where a
/// curve has no observations.
pub fn align_bands(lc: &MultibandLightCurve, band_ids: &[String]) -> Result<MultibandLightCurve> {
    if let Some(b) = lc.bands().iter().find(|b| !band_ids.iter().any(|x| x == b.band_id())) {
        return Err(Error::invalid(format!("band {} is not in the band list", b.band_id())));
    }
    let bands = band_ids
        .iter()
        .map(|id| match lc.band_index(id) {
            Some(i) => Ok(lc.bands()[i].clone()),
            None => BandSeries::new(id.clone(), vec![], vec![], vec![]),
        })
        .collect::<Result<Vec<_>>>()?;
    MultibandLightCurve::new(lc.star_id().map(str::to_owned), bands)
}

fn param_header(prefix: &[&str], band_ids: &[String]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    for name in ["beta0", "amp", "rho"] {
        h.extend(band_ids.iter().map(|b| format!("{name}_{b}")));
    }
    h
}

/// Writes `star_id,period,omega,beta0_*,amp_*,rho_*` for simulated curves.
pub fn write_truth<W: Write>(writer: W, sims: &[SimulatedCurve]) -> Result<()> {
    let band_ids = band_union(&sims.iter().map(|s| s.curve.clone()).collect::<Vec<_>>());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(param_header(&["star_id", "period", "omega"], &band_ids))?;
    for (i, s) in sims.iter().enumerate() {
        let mut row = vec![star_name(&s.curve, i), fmt_f64(s.truth.period()), fmt_f64(s.truth.omega)];
        for v in [&s.truth.beta0, &s.truth.amp, &s.truth.rho] {
            row.extend(band_ids.iter().map(|id| {
                s.curve.band_index(id).map_or_else(String::new, |k| fmt_f64(v[k]))
            }));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One output row of a batch fit.
#[derive(Debug, Clone)]
pub struct FitRecord {
    pub star_id: String,
    pub band_ids: Vec<String>,
    pub outcome: std::result::Result<FitResult, String>,
}

/// Writes `star_id,method,period,omega,objective,converged,pnll_evals`
/// followed by per-band parameters for the union of band ids. Failed stars
/// get empty numeric fields.
pub fn write_fits<W: Write>(writer: W, method: &str, records: &[FitRecord]) -> Result<()> {
    let mut band_ids: Vec<String> = Vec::new();
    for r in records {
        for b in &r.band_ids {
            if !band_ids.contains(b) {
                band_ids.push(b.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(param_header(
        &["star_id", "method", "period", "omega", "objective", "converged", "pnll_evals"],
        &band_ids,
    ))?;
    for r in records {
        let mut row = vec![r.star_id.clone(), method.to_owned()];
        match &r.outcome {
            Ok(fit) => {
                row.extend([
                    fmt_f64(fit.period()),
                    fmt_f64(fit.omega()),
                    fmt_f64(fit.objective),
                    fit.diagnostics.converged.to_string(),
                    fit.diagnostics.pnll_evals.to_string(),
                ]);
                let p = &fit.params;
                for v in [&p.beta0, &p.amp, &p.rho] {
                    row.extend(band_ids.iter().map(|id| {
                        r.band_ids
                            .iter()
                            .position(|x| x == id)
                            .filter(|&k| fit.active.get(k).copied().unwrap_or(false))
                            .map_or_else(String::new, |k| fmt_f64(v[k]))
                    }));
                }
            }
            Err(_) => row.extend(std::iter::repeat_n(String::new(), 5 + 3 * band_ids.len())),
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `omega,nll` or `omega,nll,f`. Excluded frequencies have empty
/// fields.
pub fn write_periodogram<W: Write>(
    writer: W,
    grid: &FrequencyGrid,
    nll: &[Option<f64>],
    pnll: Option<&[Option<f64>]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    if pnll.is_some() {
        w.write_record(["omega", "nll", "f"])?;
    } else {
        w.write_record(["omega", "nll"])?;
    }
    for (i, &omega) in grid.freqs().iter().enumerate() {
        let mut row = vec![fmt_f64(omega), opt(nll[i])];
        if let Some(f) = pnll {
            row.push(opt(f[i]));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// A period estimate read back from a fit file.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub star_id: String,
    pub method: String,
    pub period: Option<f64>,
    pub pnll_evals: Option<usize>,
}

fn column(header: &csv::StringRecord, name: &str, path: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column {name}")))
}

fn optional_number<T: std::str::FromStr>(raw: &str, what: &str, path: &str, line: u64) -> Result<Option<T>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| parse_err(path, line, format!("{what}: not a number: {raw:?}")))
}

pub fn read_estimates(path: &Path) -> Result<Vec<Estimate>> {
    read_estimates_from(open(path)?, &path.display().to_string())
}

pub fn read_estimates_from<R: Read>(reader: R, name: &str) -> Result<Vec<Estimate>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let (cs, cm, cp) = (
        column(&header, "star_id", name)?,
        column(&header, "method", name)?,
        column(&header, "period", name)?,
    );
    let ce = header.iter().position(|h| h == "pnll_evals");
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            Ok(Estimate {
                star_id: rec[cs].to_owned(),
                method: rec[cm].to_owned(),
                period: optional_number(&rec[cp], "period", name, line)?,
                pnll_evals: match ce {
                    Some(c) => optional_number(&rec[c], "pnll_evals", name, line)?,
                    None => None,
                },
            })
        })
        .collect()
}

/// Reads `star_id,period` (other columns ignored).
pub fn read_truth(path: &Path) -> Result<Vec<(String, f64)>> {
    read_truth_from(open(path)?, &path.display().to_string())
}

pub fn read_truth_from<R: Read>(reader: R, name: &str) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let (cs, cp) = (column(&header, "star_id", name)?, column(&header, "period", name)?);
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let p: f64 = optional_number(&rec[cp], "period", name, line)?
                .ok_or_else(|| parse_err(name, line, "period is empty"))?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(parse_err(name, line, format!("period must be positive (got {p})")));
            }
            Ok((rec[cs].to_owned(), p))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub star_id: String,
    pub method: String,
    pub truth: f64,
    pub estimate: Option<f64>,
    pub rel_error: Option<f64>,
    pub within: bool,
    pub evaluations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodAccuracy {
    pub method: String,
    pub n: usize,
    pub within: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub methods: Vec<MethodAccuracy>,
    pub rows: Vec<AccuracyRow>,
    /// Estimated star ids that have no true period.
    pub missing_truth: Vec<String>,
}

/// True when `|estimate - truth| / truth <= tol`.
pub fn within_tolerance(estimate: f64, truth: f64, tol: f64) -> bool {
    (estimate - truth).abs() / truth <= tol
}

/// Fraction of estimates within 1% of the truth, per method. Failed fits
/// count as misses. Methods are reported in alphabetical order and rows are
/// sorted by method then star id.
pub fn evaluate(estimates: &[Estimate], truth: &[(String, f64)]) -> AccuracyReport {
    let truth: HashMap<&str, f64> = truth.iter().map(|(s, p)| (s.as_str(), *p)).collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for e in estimates {
        let Some(&t) = truth.get(e.star_id.as_str()) else {
            missing.push(e.star_id.clone());
            continue;
        };
        let rel = e.period.map(|p| (p - t).abs() / t);
        rows.push(AccuracyRow {
            star_id: e.star_id.clone(),
            method: e.method.clone(),
            truth: t,
            estimate: e.period,
            rel_error: rel,
            within: e.period.is_some_and(|p| within_tolerance(p, t, 0.01)),
            evaluations: e.pnll_evals,
        });
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then_with(|| a.star_id.cmp(&b.star_id)));
    missing.sort();
    missing.dedup();
    let mut methods: Vec<MethodAccuracy> = Vec::new();
    for r in &rows {
        if methods.last().is_none_or(|m| m.method != r.method) {
            methods.push(MethodAccuracy {
                method: r.method.clone(),
                n: 0,
                within: 0,
                fraction: 0.0,
            });
        }
        let m = methods.last_mut().unwrap();
        m.n += 1;
        m.within += r.within as usize;
    }
    for m in &mut methods {
        m.fraction = m.within as f64 / m.n as f64;
    }
    AccuracyReport {
        methods,
        rows,
        missing_truth: missing,
    }
}

/// Per-star table `star_id,method,truth,estimate,rel_error,within,evaluations`.
pub fn write_accuracy<W: Write>(writer: W, report: &AccuracyReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["star_id", "method", "truth", "estimate", "rel_error", "within", "evaluations"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    for r in &report.rows {
        w.write_record([
            r.star_id.clone(),
            r.method.clone(),
            fmt_f64(r.truth),
            opt(r.estimate),
            opt(r.rel_error),
            r.within.to_string(),
            r.evaluations.map_or_else(String::new, |e| e.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
