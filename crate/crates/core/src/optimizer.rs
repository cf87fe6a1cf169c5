//! Max-min key optimisation: Eve picks the phases that minimise the key,
//! Alice and Bob pick the settings that maximise that minimum.
//!
//! The inner minimum is taken over an active set of candidate phase pairs.
//! Every Nelder–Mead optimum is checked against a full grid search; a phase
//! pair that does worse than the active set joins it and the outer search
//! resumes from the incumbent.

use std::cell::RefCell;
use std::f64::consts::TAU;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProtocolParams;
use crate::pipeline::{evaluate, AnalysisConfig, Evaluation};

/// Names of the optimised coordinates, in order.
pub const PARAM_NAMES: [&str; 6] = ["gamma_s", "gamma_v", "p_zac", "p_s", "p_v", "p_z"];

/// Outer and inner search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationSpec {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
    pub restarts: usize,
    /// Nelder–Mead iterations per run.
    pub max_iters: u64,
    /// Relative spread of simplex costs at which a run stops.
    pub rel_tol: f64,
    /// Points per axis of the inner phase grid.
    pub grid: usize,
    /// Phase refinement stops below this step (radians).
    pub angle_tol: f64,
    pub seed: u64,
    /// Smallest admissible `p_w` after repair.
    pub min_p_w: f64,
    /// Largest admissible `γ^v / γ^s` after repair.
    pub max_gamma_ratio: f64,
}

impl Default for OptimizationSpec {
    fn default() -> Self {
        OptimizationSpec {
            lower: [0.05, 0.002, 0.5, 0.05, 0.01, 0.5],
            upper: [1.0, 0.5, 1.0, 0.98, 0.9, 0.99],
            restarts: 5,
            max_iters: 300,
            rel_tol: 1e-9,
            grid: 24,
            angle_tol: 1e-3,
            seed: 1,
            min_p_w: 0.01,
            max_gamma_ratio: 0.95,
        }
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub gamma_s: f64,
    pub gamma_v: f64,
    pub p_zac: f64,
    pub p_s: f64,
    pub p_v: f64,
    pub p_z: f64,
    pub theta_v: f64,
    pub theta_w: f64,
    /// Unrounded key length, or `None` when the estimation aborted.
    pub ell_raw: Option<f64>,
}

/// Minimising phases at one setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleSearch {
    pub theta_v: f64,
    pub theta_w: f64,
    /// Unrounded key length at the minimiser.
    pub ell_raw: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub protocol: ProtocolParams,
    pub theta_v: f64,
    pub theta_w: f64,
    pub ell: f64,
    pub rate: f64,
    /// Full analysis at the optimum, absent when every evaluation aborted.
    pub evaluation: Option<Evaluation>,
    pub trace: Vec<TraceRecord>,
}

/// Coordinates of `p` in [`PARAM_NAMES`] order.
pub fn to_vector(p: &ProtocolParams) -> [f64; 6] {
    [p.gamma_s, p.gamma_v, p.p_zac, p.p_s, p.p_v, p.p_z]
}

/// Settings at box coordinates `x`, clamped and repaired so that the
/// intensity ordering and probability simplex hold.
pub fn repair(spec: &OptimizationSpec, base: &ProtocolParams, x: &[f64; 6]) -> ProtocolParams {
    let c: Vec<f64> = (0..6)
        .map(|k| x[k].clamp(spec.lower[k], spec.upper[k]))
        .collect();
    let mut p = *base;
    p.gamma_s = c[0];
    p.gamma_v = c[1].min(spec.max_gamma_ratio * c[0]).max(p.gamma_w * 1.01);
    p.p_zac = c[2];
    let (mut ps, mut pv) = (c[3], c[4]);
    let room = 1.0 - spec.min_p_w;
    if ps + pv > room {
        let f = room / (ps + pv);
        ps *= f;
        pv *= f;
    }
    p.p_s = ps;
    p.p_v = pv;
    p.p_w = 1.0 - ps - pv;
    p.p_z = c[5];
    p
}

fn key_at(cfg: &AnalysisConfig, theta: (f64, f64)) -> Option<(f64, Evaluation)> {
    let mut c = cfg.clone();
    c.leakage.theta_v = theta.0;
    c.leakage.theta_w = theta.1;
    evaluate(&c).ok().map(|e| (e.key.ell_raw, e))
}

fn wrap(t: f64) -> f64 {
    t.rem_euclid(TAU)
}

/// Grid search over `[0, 2π)²` followed by compass refinement.
///
/// Ties keep the first grid point in row-major `(θ_v, θ_w)` order. Settings
/// without phase dependence evaluate once at the configured phases.
pub fn worst_case_angles(cfg: &AnalysisConfig, grid: usize, angle_tol: f64) -> Result<AngleSearch> {
    let value = |t: (f64, f64)| key_at(cfg, t).map_or(f64::NEG_INFINITY, |(v, _)| v);
    if !cfg.leakage.has_angles() {
        let t = (cfg.leakage.theta_v, cfg.leakage.theta_w);
        return Ok(AngleSearch {
            theta_v: t.0,
            theta_w: t.1,
            ell_raw: value(t),
            evaluations: 1,
        });
    }
    if grid == 0 {
        return Err(Error::InvalidArgument("angle grid must be non-empty".into()));
    }
    let h = TAU / grid as f64;
    let mut best = (0.0, 0.0);
    let mut best_v = f64::INFINITY;
    let mut evals = 0;
    for i in 0..grid {
        for j in 0..grid {
            let t = (i as f64 * h, j as f64 * h);
            let v = value(t);
            evals += 1;
            if v < best_v {
                best_v = v;
                best = t;
            }
        }
    }
    let mut step = h / 2.0;
    while step >= angle_tol && best_v.is_finite() {
        let mut moved = false;
        for (dv, dw) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let t = (wrap(best.0 + dv * step), wrap(best.1 + dw * step));
            let v = value(t);
            evals += 1;
            if v < best_v {
                best_v = v;
                best = t;
                moved = true;
                break;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    Ok(AngleSearch {
        theta_v: best.0,
        theta_w: best.1,
        ell_raw: best_v,
        evaluations: evals,
    })
}

const ABORTED: f64 = 1e300;

struct Objective<'a> {
    spec: &'a OptimizationSpec,
    cfg: &'a AnalysisConfig,
    angles: &'a [(f64, f64)],
    scale: f64,
    restart: usize,
    trace: &'a RefCell<Vec<TraceRecord>>,
}

impl Objective<'_> {
    fn point(&self, u: &[f64]) -> [f64; 6] {
        std::array::from_fn(|k| self.spec.lower[k] + u[k] * (self.spec.upper[k] - self.spec.lower[k]))
    }

    /// Minimum of `ell_raw` over the active angles and the sifted-key
    /// size, or `None` on abort.
    fn inner(&self, u: &[f64]) -> Option<(f64, f64)> {
        let x = self.point(u);
        let mut cfg = self.cfg.clone();
        cfg.protocol = repair(self.spec, &self.cfg.protocol, &x);
        let mut worst: Option<(f64, f64)> = None;
        for &t in self.angles {
            let e = key_at(&cfg, t);
            let v = e.as_ref().map(|(v, _)| *v);
            let p = &cfg.protocol;
            self.trace.borrow_mut().push(TraceRecord {
                restart: self.restart,
                gamma_s: p.gamma_s,
                gamma_v: p.gamma_v,
                p_zac: p.p_zac,
                p_s: p.p_s,
                p_v: p.p_v,
                p_z: p.p_z,
                theta_v: t.0,
                theta_w: t.1,
                ell_raw: v,
            });
            match e {
                Some((v, e)) => {
                    let sifted = e.counts.sifted_key_size();
                    worst = Some(worst.map_or((v, sifted), |w| (w.0.min(v), sifted)));
                }
                None => return None,
            }
        }
        worst
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let outside: f64 = u.iter().map(|v| (v - v.clamp(0.0, 1.0)).powi(2)).sum();
        // Below zero the key is normalised by the sifted key so that the
        // search is not drawn towards vanishing intensities.
        Ok(match self.inner(u) {
            Some((v, _)) if v >= 0.0 && v.is_finite() => -v / self.scale + outside,
            Some((v, sifted)) if v.is_finite() => -v / sifted.max(1.0) + outside,
            _ => ABORTED,
        })
    }
}

fn nelder_mead(obj: Objective<'_>, start: &[f64; 6], spec: &OptimizationSpec) -> Result<[f64; 6]> {
    let mut simplex = vec![start.to_vec()];
    for k in 0..6 {
        let mut v = start.to_vec();
        v[k] = if v[k] > 0.5 { v[k] - 0.15 } else { v[k] + 0.15 };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(spec.rel_tol)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    let res = Executor::new(obj, solver)
        .configure(|s| s.max_iters(spec.max_iters))
        .run()
        .map_err(|e| Error::Numeric(e.to_string()))?;
    let best = res
        .state()
        .get_best_param()
        .cloned()
        .unwrap_or_else(|| start.to_vec());
    Ok(std::array::from_fn(|k| best[k].clamp(0.0, 1.0)))
}

/// Maximise the worst-case key over the settings box.
///
/// The first run starts from `cfg.protocol`; further runs start at seeded
/// uniform points of the box.
pub fn optimize(spec: &OptimizationSpec, cfg: &AnalysisConfig) -> Result<OptimizeResult> {
    cfg.validate()?;
    if spec.restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    let to_unit = |x: [f64; 6]| -> [f64; 6] {
        std::array::from_fn(|k| {
            ((x[k] - spec.lower[k]) / (spec.upper[k] - spec.lower[k])).clamp(0.0, 1.0)
        })
    };
    let from_unit = |u: &[f64; 6]| -> ProtocolParams {
        let x = std::array::from_fn(|k| spec.lower[k] + u[k] * (spec.upper[k] - spec.lower[k]));
        repair(spec, &cfg.protocol, &x)
    };
    let trace = RefCell::new(Vec::new());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut starts = vec![to_unit(to_vector(&cfg.protocol))];
    if spec.restarts > 1 {
        // Biased bases starve the X statistics at long range, and the coin
        // route is only informative near balanced bases.
        let mut u = starts[0];
        u[5] = 0.0;
        starts.push(u);
    }
    while starts.len() < spec.restarts {
        starts.push(std::array::from_fn(|_| rng.gen::<f64>()));
    }

    let at = |u: &[f64; 6]| {
        let mut c = cfg.clone();
        c.protocol = from_unit(u);
        c
    };
    let search = |u: &[f64; 6]| worst_case_angles(&at(u), spec.grid, spec.angle_tol);
    let first = search(&starts[0])?;
    let mut angles = vec![(first.theta_v, first.theta_w)];
    let scale = if first.ell_raw > 0.0 {
        first.ell_raw
    } else {
        (cfg.protocol.n_pulses * 1e-6).max(1.0)
    };
    let active_value = |u: &[f64; 6], angles: &[(f64, f64)], restart: usize| {
        Objective {
            spec,
            cfg,
            angles,
            scale,
            restart,
            trace: &trace,
        }
        .inner(u)
        .map_or(f64::NEG_INFINITY, |v| v.0)
    };

    let mut best_u = starts[0];
    let mut best_v = f64::NEG_INFINITY;
    for (r, s) in starts.iter().enumerate() {
        let obj = Objective {
            spec,
            cfg,
            angles: &angles,
            scale,
            restart: r,
            trace: &trace,
        };
        let u = nelder_mead(obj, s, spec)?;
        let v = active_value(&u, &angles, r);
        if v > best_v {
            best_v = v;
            best_u = u;
        }
    }

    let mut checked = search(&best_u)?;
    for round in 0..3 {
        let fresh = (checked.theta_v, checked.theta_w);
        let tol = 1e-9 * best_v.abs().max(1.0);
        if !cfg.leakage.has_angles() || checked.ell_raw >= best_v - tol || angles.contains(&fresh) {
            break;
        }
        angles.push(fresh);
        let obj = Objective {
            spec,
            cfg,
            angles: &angles,
            scale,
            restart: spec.restarts + round,
            trace: &trace,
        };
        let u = nelder_mead(obj, &best_u, spec)?;
        let prev = active_value(&best_u, &angles, spec.restarts + round);
        let v = active_value(&u, &angles, spec.restarts + round);
        if v > prev {
            best_u = u;
        }
        best_v = v.max(prev);
        checked = search(&best_u)?;
    }

    let protocol = from_unit(&best_u);
    let final_cfg = at(&best_u);
    let evaluation = key_at(&final_cfg, (checked.theta_v, checked.theta_w)).map(|(_, e)| e);
    let ell = evaluation.as_ref().map_or(0.0, |e| e.key.ell);
    Ok(OptimizeResult {
        protocol,
        theta_v: checked.theta_v,
        theta_w: checked.theta_w,
        ell,
        rate: ell / cfg.protocol.n_pulses,
        evaluation,
        trace: trace.into_inner(),
    })
}
