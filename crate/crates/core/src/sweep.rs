//! Distance sweeps over optimised key rates, cut-off search and CSV output.
//!
//! A sweep is split into curves, one per `(I_max, N)` pair. Each curve runs
//! its distances in increasing order and warm-starts every optimisation
//! from the last setting that still produced a key. Curves are spread over
//! a small worker pool and the rows are gathered in curve order, so the
//! output does not depend on the number of workers.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{optimize, OptimizationSpec, OptimizeResult, TraceRecord};
use crate::params::{LeakCase, LeakageModel, ProtocolParams};
use crate::pipeline::AnalysisConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoLeak,
    Case1,
    Case2,
    Case3,
    /// Case-1 curves with the intensity modulator leaking, plus the matching
    /// leak-free curve per pulse count.
    Ratio,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoLeak => "no_leak",
            Scenario::Case1 => "case1",
            Scenario::Case2 => "case2",
            Scenario::Case3 => "case3",
            Scenario::Ratio => "ratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "no_leak" => Scenario::NoLeak,
            "case1" => Scenario::Case1,
            "case2" => Scenario::Case2,
            "case3" => Scenario::Case3,
            "ratio" => Scenario::Ratio,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown scenario {s:?} (expected no_leak, case1, case2, case3 or ratio)"
                )))
            }
        })
    }
}

/// `start, start+step, …` up to `stop` inclusive.
pub fn distance_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start || start < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bad distance range {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub distances: Vec<f64>,
    pub i_max: Vec<f64>,
    pub n_pulses: Vec<f64>,
    pub pm: bool,
    /// Worker threads; `0` means one.
    pub jobs: usize,
    /// Parameters shared by every cell; the swept fields are overwritten.
    pub base: AnalysisConfig,
    pub optimizer: OptimizationSpec,
    /// Keep every objective evaluation.
    pub keep_trace: bool,
}

impl SweepSpec {
    pub fn new(scenario: Scenario, distances: Vec<f64>) -> Self {
        SweepSpec {
            scenario,
            distances,
            i_max: vec![0.0],
            n_pulses: vec![1e12],
            pm: false,
            jobs: 1,
            base: AnalysisConfig::default(),
            optimizer: OptimizationSpec::default(),
            keep_trace: false,
        }
    }

    fn check(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.distances.is_empty() {
            bad.push("distance list is empty".to_string());
        }
        if self.distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            bad.push("distances must be finite and non-negative".into());
        }
        if self.n_pulses.is_empty() || self.n_pulses.iter().any(|n| !(*n >= 1.0)) {
            bad.push("pulse counts must be a non-empty list of values >= 1".into());
        }
        let needs_leak = !matches!(self.scenario, Scenario::NoLeak);
        if needs_leak && self.i_max.is_empty() {
            bad.push("I_max list is empty".into());
        }
        if self.i_max.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
            bad.push("I_max values must be finite and non-negative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(bad))
        }
    }

    /// Curves in output order.
    fn curves(&self) -> Vec<Curve> {
        let case = |s| match s {
            Scenario::Case1 | Scenario::Ratio => LeakCase::Case1,
            Scenario::Case2 => LeakCase::Case2,
            Scenario::Case3 => LeakCase::Case3,
            Scenario::NoLeak => LeakCase::NoLeak,
        };
        let mut out = Vec::new();
        for &n in &self.n_pulses {
            match self.scenario {
                Scenario::NoLeak => out.push(Curve::new(self, LeakCase::NoLeak, 0.0, n, false)),
                Scenario::Ratio => {
                    out.push(Curve::new(self, LeakCase::NoLeak, 0.0, n, false));
                    for &i in &self.i_max {
                        out.push(Curve::new(self, LeakCase::Case1, i, n, false));
                    }
                }
                s => {
                    for &i in &self.i_max {
                        out.push(Curve::new(self, case(s), i, n, self.pm));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Curve {
    scenario: Scenario,
    cfg: AnalysisConfig,
}

impl Curve {
    fn new(spec: &SweepSpec, case: LeakCase, i_max: f64, n: f64, pm: bool) -> Self {
        let mut cfg = spec.base.clone();
        cfg.protocol.n_pulses = n;
        let keep = cfg.leakage;
        cfg.leakage = LeakageModel {
            pm_overlap: keep.pm_overlap,
            ..LeakageModel::new(case, i_max).with_pm(pm)
        };
        if case == LeakCase::NoLeak {
            cfg.leakage.i_max = 0.0;
        }
        Curve {
            scenario: spec.scenario,
            cfg,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub distance_km: f64,
    pub i_max: f64,
    pub n_pulses: f64,
    pub pm_enabled: bool,
    pub rate: f64,
    pub ell: f64,
    pub gamma_s: f64,
    pub gamma_v: f64,
    pub p_zac: f64,
    pub p_s: f64,
    pub p_v: f64,
    pub p_z: f64,
    pub theta_v: f64,
    pub theta_w: f64,
    pub eps_total: f64,
    pub route: String,
    /// `ok`, `zero_key` or `aborted`.
    pub status: String,
}

impl SweepRow {
    fn from_result(scenario: Scenario, cfg: &AnalysisConfig, r: &OptimizeResult) -> Self {
        let p = &r.protocol;
        let (eps, route, status) = match &r.evaluation {
            Some(e) if e.key.abort => (e.key.eps, e.key.phase.route.name(), "aborted"),
            Some(e) if e.key.ell > 0.0 => (e.key.eps, e.key.phase.route.name(), "ok"),
            Some(e) => (e.key.eps, e.key.phase.route.name(), "zero_key"),
            None => (f64::NAN, "", "aborted"),
        };
        SweepRow {
            scenario: scenario.name().into(),
            distance_km: cfg.channel.distance_km,
            i_max: cfg.leakage.i_max,
            n_pulses: cfg.protocol.n_pulses,
            pm_enabled: cfg.leakage.pm_enabled,
            rate: r.rate,
            ell: r.ell,
            gamma_s: p.gamma_s,
            gamma_v: p.gamma_v,
            p_zac: p.p_zac,
            p_s: p.p_s,
            p_v: p.p_v,
            p_z: p.p_z,
            theta_v: r.theta_v,
            theta_w: r.theta_w,
            eps_total: eps,
            route: route.into(),
            status: status.into(),
        }
    }

    /// Analysis configuration that reproduces this row at fixed settings.
    pub fn config(&self, base: &AnalysisConfig) -> AnalysisConfig {
        let mut c = base.clone();
        c.channel.distance_km = self.distance_km;
        c.protocol.n_pulses = self.n_pulses;
        c.protocol.gamma_s = self.gamma_s;
        c.protocol.gamma_v = self.gamma_v;
        c.protocol.p_zac = self.p_zac;
        c.protocol.p_s = self.p_s;
        c.protocol.p_v = self.p_v;
        c.protocol.p_w = 1.0 - self.p_s - self.p_v;
        c.protocol.p_z = self.p_z;
        let case = match (self.scenario.as_str(), self.i_max > 0.0) {
            (_, false) | ("no_leak", _) => LeakCase::NoLeak,
            ("case2", _) => LeakCase::Case2,
            ("case3", _) => LeakCase::Case3,
            _ => LeakCase::Case1,
        };
        c.leakage = LeakageModel {
            pm_overlap: base.leakage.pm_overlap,
            ..LeakageModel::new(case, self.i_max)
                .with_pm(self.pm_enabled)
                .with_angles(self.theta_v, self.theta_w)
        };
        c
    }
}

/// One trace line: the cell it belongs to plus the evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTraceRow {
    pub scenario: String,
    pub distance_km: f64,
    pub i_max: f64,
    pub n_pulses: f64,
    pub restart: usize,
    pub gamma_s: f64,
    pub gamma_v: f64,
    pub p_zac: f64,
    pub p_s: f64,
    pub p_v: f64,
    pub p_z: f64,
    pub theta_v: f64,
    pub theta_w: f64,
    pub ell_raw: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub trace: Vec<SweepTraceRow>,
}

fn run_curve(spec: &SweepSpec, curve: &Curve) -> Result<SweepOutput> {
    let mut out = SweepOutput::default();
    let mut warm: ProtocolParams = curve.cfg.protocol;
    for &d in &spec.distances {
        let mut cfg = curve.cfg.clone();
        cfg.channel.distance_km = d;
        cfg.protocol = warm;
        let r = optimize(&spec.optimizer, &cfg)?;
        if r.ell > 0.0 {
            warm = r.protocol;
        }
        out.rows.push(SweepRow::from_result(curve.scenario, &cfg, &r));
        if spec.keep_trace {
            out.trace.extend(r.trace.into_iter().map(|t: TraceRecord| SweepTraceRow {
                scenario: curve.scenario.name().into(),
                distance_km: d,
                i_max: cfg.leakage.i_max,
                n_pulses: cfg.protocol.n_pulses,
                restart: t.restart,
                gamma_s: t.gamma_s,
                gamma_v: t.gamma_v,
                p_zac: t.p_zac,
                p_s: t.p_s,
                p_v: t.p_v,
                p_z: t.p_z,
                theta_v: t.theta_v,
                theta_w: t.theta_w,
                ell_raw: t.ell_raw,
            }));
        }
    }
    Ok(out)
}

/// Optimised rate at every cell of `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.check()?;
    spec.base.validate()?;
    let curves = spec.curves();
    let slots: Vec<Mutex<Option<Result<SweepOutput>>>> =
        curves.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = spec.jobs.clamp(1, curves.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(curve) = curves.get(k) else { break };
                let r = run_curve(spec, curve);
                *slots[k].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    let mut out = SweepOutput::default();
    for slot in slots {
        let part = slot
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .ok_or_else(|| Error::Numeric("sweep worker produced no result".into()))??;
        out.rows.extend(part.rows);
        out.trace.extend(part.trace);
    }
    Ok(out)
}

fn write_rows<T: Serialize>(rows: &[T], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows as CSV, header included.
pub fn write_csv(rows: &[SweepRow], w: impl Write) -> Result<()> {
    if rows.is_empty() {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_COLUMNS)?;
        wr.flush()?;
        return Ok(());
    }
    write_rows(rows, w)
}

pub fn write_csv_file(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn write_trace_csv(rows: &[SweepTraceRow], w: impl Write) -> Result<()> {
    write_rows(rows, w)
}

pub fn read_csv(r: impl std::io::Read) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}

/// Column names of [`SweepRow`].
pub const CSV_COLUMNS: [&str; 18] = [
    "scenario",
    "distance_km",
    "i_max",
    "n_pulses",
    "pm_enabled",
    "rate",
    "ell",
    "gamma_s",
    "gamma_v",
    "p_zac",
    "p_s",
    "p_v",
    "p_z",
    "theta_v",
    "theta_w",
    "eps_total",
    "route",
    "status",
];

/// Bracket on the largest distance with a positive key.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    /// Largest probed distance with a key, if any.
    pub last_positive: Option<f64>,
    /// Smallest probed distance beyond it without a key, if any.
    pub first_zero: Option<f64>,
    /// Optimum at `last_positive`.
    pub best: Option<OptimizeResult>,
    /// `(distance, rate)` per probe, in probe order.
    pub probes: Vec<(f64, f64)>,
}

impl Cutoff {
    /// Midpoint of the bracket, or its one known end.
    pub fn estimate(&self) -> Option<f64> {
        match (self.last_positive, self.first_zero) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (Some(a), None) => Some(a),
            (None, _) => None,
        }
    }
}

/// Bisection for the distance at which the optimised key vanishes, assuming
/// the rate decreases with distance. Each probe warm-starts from the optimum
/// of the largest positive probe so far.
pub fn find_cutoff(
    opt: &OptimizationSpec,
    cfg: &AnalysisConfig,
    lo: f64,
    hi: f64,
    resolution: f64,
) -> Result<Cutoff> {
    if !(lo >= 0.0 && hi > lo && resolution > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad cut-off bracket {lo}..{hi} at resolution {resolution}"
        )));
    }
    let mut probes = Vec::new();
    let mut warm = cfg.protocol;
    let mut probe = |d: f64, warm: &ProtocolParams| -> Result<OptimizeResult> {
        let mut c = cfg.clone();
        c.channel.distance_km = d;
        c.protocol = *warm;
        let r = optimize(opt, &c)?;
        probes.push((d, r.rate));
        Ok(r)
    };
    let first = probe(lo, &warm)?;
    if first.ell <= 0.0 {
        return Ok(Cutoff {
            last_positive: None,
            first_zero: Some(lo),
            best: None,
            probes,
        });
    }
    warm = first.protocol;
    let mut best = first;
    let (mut good, mut bad) = (lo, hi);
    let top = probe(hi, &warm)?;
    if top.ell > 0.0 {
        return Ok(Cutoff {
            last_positive: Some(hi),
            first_zero: None,
            best: Some(top),
            probes,
        });
    }
    while bad - good > resolution {
        let mid = 0.5 * (good + bad);
        let r = probe(mid, &warm)?;
        if r.ell > 0.0 {
            good = mid;
            warm = r.protocol;
            best = r;
        } else {
            bad = mid;
        }
    }
    Ok(Cutoff {
        last_positive: Some(good),
        first_zero: Some(bad),
        best: Some(best),
        probes,
    })
}
