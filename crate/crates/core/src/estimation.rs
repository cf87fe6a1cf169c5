//! Decoy-state linear programs bounding the single-photon and vacuum
//! contributions to the signal-intensity counts.
//!
//! Every program works in units of the basis trial count `N_χ`. The
//! photon-number cut-off `S_cut` truncates the unknowns; the truncated tail
//! enters each gain constraint through `N_χ p_j T_j`.
//!
//! Leakage enters through per-photon-number deviations `Δ_n^{vs}`,
//! `Δ_n^{ws}` (the aggregated `Δ^{ks} = Σ_n Δ_n^{ks}`), each boxed by the pair
//! distance and coupled by the three triple-distance inequalities at every
//! `n ≤ S_cut`.

use serde::Serialize;

use crate::channel::{Basis, ObservedCounts};
use crate::concentration::DeviationBound;
use crate::error::{Error, Result};
use crate::leakage::{Intensity, TraceDistanceTable};
use crate::lp::{self, LPProblem, LPSolution, LpStatus, Sense};
use crate::params::{EpsGroup, EpsLedger, ProtocolParams};
use crate::stats::PhotonDist;

/// Which observed events a program is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Click,
    Error,
}

/// Azuma intervals for one program: the three observed gains and the
/// signal-intensity photon-number terms `n ≤ S_cut`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramDeviations {
    pub gain: [DeviationBound; 3],
    pub photon: Vec<DeviationBound>,
}

impl ProgramDeviations {
    /// Concentration bound uses consumed by one program.
    pub fn uses(s_cut: u32) -> usize {
        2 * (3 + s_cut as usize + 1)
    }

    /// Azuma bounds on `n_trials`, drawing failure probabilities in order.
    pub fn azuma(n_trials: f64, s_cut: u32, eps: &mut impl Iterator<Item = f64>) -> Result<Self> {
        let mut next = || {
            eps.next()
                .ok_or_else(|| Error::InvalidArgument("eps allocation exhausted".into()))
        };
        let mut one = || -> Result<DeviationBound> {
            let (a, b) = (next()?, next()?);
            DeviationBound::azuma(n_trials, a, b)
        };
        let gain = [one()?, one()?, one()?];
        let photon = (0..=s_cut).map(|_| one()).collect::<Result<Vec<_>>>()?;
        Ok(ProgramDeviations { gain, photon })
    }

    /// All deviations set to zero (asymptotic limit).
    pub fn zero(s_cut: u32) -> Self {
        let z = DeviationBound {
            lower: 0.0,
            upper: 0.0,
            eps: 0.0,
            eps_hat: 0.0,
            kind: crate::concentration::BoundKind::Azuma,
        };
        ProgramDeviations {
            gain: [z; 3],
            photon: vec![z; s_cut as usize + 1],
        }
    }

    /// Copy with every interval multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = |d: &DeviationBound| DeviationBound {
            lower: d.lower * factor,
            upper: d.upper * factor,
            ..*d
        };
        ProgramDeviations {
            gain: self.gain.each_ref().map(f),
            photon: self.photon.iter().map(f).collect(),
        }
    }

    fn record(&self, ledger: &mut EpsLedger, prefix: &str, group: EpsGroup) {
        let mut push = |label: String, e: f64| {
            if e > 0.0 {
                ledger.push(label, e, group);
            }
        };
        for (j, d) in Intensity::ALL.iter().zip(&self.gain) {
            push(format!("{prefix}.gain.{}.lo", j.name()), d.eps);
            push(format!("{prefix}.gain.{}.hi", j.name()), d.eps_hat);
        }
        for (n, d) in self.photon.iter().enumerate() {
            push(format!("{prefix}.n{n}.lo"), d.eps);
            push(format!("{prefix}.n{n}.hi"), d.eps_hat);
        }
    }
}

/// Everything the four decoy programs consume.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyLPInputs {
    pub counts: ObservedCounts,
    pub distances: TraceDistanceTable,
    pub params: ProtocolParams,
    pub s_cut: u32,
    pub z_click: ProgramDeviations,
    pub x_click: ProgramDeviations,
    pub x_error: ProgramDeviations,
    /// Add the `(v, w)` pair constraints on top of the standard set.
    pub extra_pairs: bool,
}

impl DecoyLPInputs {
    /// Concentration bound uses consumed by [`estimate_yields`].
    pub fn eps_uses(s_cut: u32) -> usize {
        3 * ProgramDeviations::uses(s_cut)
    }

    /// Azuma deviations on the basis trial counts, drawing
    /// [`Self::eps_uses`] failure probabilities from `eps`.
    pub fn new(
        counts: ObservedCounts,
        distances: TraceDistanceTable,
        params: ProtocolParams,
        s_cut: u32,
        eps: &mut impl Iterator<Item = f64>,
    ) -> Result<Self> {
        let [nz, nx] = counts.n_chi;
        Ok(DecoyLPInputs {
            z_click: ProgramDeviations::azuma(nz, s_cut, eps)?,
            x_click: ProgramDeviations::azuma(nx, s_cut, eps)?,
            x_error: ProgramDeviations::azuma(nx, s_cut, eps)?,
            counts,
            distances,
            params,
            s_cut,
            extra_pairs: false,
        })
    }

    /// Inputs with every statistical deviation set to zero.
    pub fn asymptotic(
        counts: ObservedCounts,
        distances: TraceDistanceTable,
        params: ProtocolParams,
        s_cut: u32,
    ) -> Self {
        DecoyLPInputs {
            z_click: ProgramDeviations::zero(s_cut),
            x_click: ProgramDeviations::zero(s_cut),
            x_error: ProgramDeviations::zero(s_cut),
            counts,
            distances,
            params,
            s_cut,
            extra_pairs: false,
        }
    }

    fn check(&self) -> Result<()> {
        let len = self.s_cut as usize + 1;
        let ok = self.distances.triple.iter().all(|t| t.len() >= len)
            && [&self.z_click, &self.x_click, &self.x_error]
                .iter()
                .all(|d| d.photon.len() == len);
        if !ok {
            return Err(Error::InvalidArgument(
                "decoy inputs sized for a different s_cut".into(),
            ));
        }
        if self.counts.n_chi.iter().any(|n| !(*n > 0.0)) {
            return Err(Error::InvalidArgument(
                "basis trial counts must be positive".into(),
            ));
        }
        Ok(())
    }

    fn deviations(&self, basis: Basis, kind: EventKind) -> &ProgramDeviations {
        match (basis, kind) {
            (Basis::Z, _) => &self.z_click,
            (Basis::X, EventKind::Click) => &self.x_click,
            (Basis::X, EventKind::Error) => &self.x_error,
        }
    }
}

/// Bounds certified by the decoy programs, in counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldBounds {
    pub n0_z: f64,
    pub n1_z: f64,
    pub n1_x: f64,
    /// Upper bound on single-photon X-basis errors.
    pub e1_x: f64,
    pub eps_z0: f64,
    pub eps_z1: f64,
    pub eps_x1: f64,
    pub eps_ex1: f64,
    pub ledger: EpsLedger,
}

impl YieldBounds {
    /// Signal-intensity single-photon clicks over both bases.
    pub fn n1_total(&self) -> f64 {
        self.n1_z + self.n1_x
    }
}

/// Column indices of one program.
#[derive(Debug, Clone)]
pub struct LpLayout {
    pub n: Vec<usize>,
    pub delta_n: Vec<usize>,
    pub dvs: Vec<usize>,
    pub dws: Vec<usize>,
    pub delta: [usize; 3],
}

fn build(
    inputs: &DecoyLPInputs,
    basis: Basis,
    kind: EventKind,
    target: usize,
) -> Result<(LPProblem, LpLayout)> {
    inputs.check()?;
    let s = inputs.s_cut as usize;
    if target > s {
        return Err(Error::InvalidArgument(format!(
            "target photon number {target} exceeds s_cut {s}"
        )));
    }
    let p = &inputs.params;
    let dists = p
        .gammas()
        .iter()
        .map(|g| PhotonDist::new(*g, inputs.s_cut))
        .collect::<Result<Vec<_>>>()?;
    let probs = p.probs();
    let n_chi = inputs.counts.n_chi[basis.index()];
    let observed = match kind {
        EventKind::Click => inputs.counts.clicks[basis.index()],
        EventKind::Error => inputs.counts.errors[basis.index()],
    }
    .map(|c| c / n_chi);
    let dev = inputs.deviations(basis, kind);
    let d = &inputs.distances;
    let tag = match (basis, kind) {
        (Basis::Z, EventKind::Click) => "z",
        (Basis::X, EventKind::Click) => "x",
        (_, EventKind::Error) => "ex",
    };

    let sense = Sense::Min;
    let mut lp = LPProblem::new(sense);
    let inf = f64::INFINITY;
    // weight p_k p_n^k of each (intensity, photon number) cell
    let w = |k: usize, n: usize| probs[k] * dists[k].pmf[n];
    let n_vars: Vec<usize> = (0..=s)
        .map(|n| lp.add_var(format!("N_{tag}_{n}"), -inf, inf))
        .collect();
    let delta_n: Vec<usize> = (0..=s)
        .map(|n| {
            lp.add_var(
                format!("dn_{tag}_{n}"),
                -dev.photon[n].lower / n_chi,
                dev.photon[n].upper / n_chi,
            )
        })
        .collect();
    let dvs: Vec<usize> = (0..=s)
        .map(|n| {
            let b = w(1, n) * d.pair[0];
            lp.add_var(format!("Dvs_{tag}_{n}"), -b, b)
        })
        .collect();
    let dws: Vec<usize> = (0..=s)
        .map(|n| {
            let b = w(2, n) * d.pair[1];
            lp.add_var(format!("Dws_{tag}_{n}"), -b, b)
        })
        .collect();
    let delta = [0, 1, 2].map(|j| {
        let g = &dev.gain[j];
        lp.add_var(
            format!("d_{tag}_{}", Intensity::ALL[j].name()),
            -g.lower / n_chi,
            g.upper / n_chi,
        )
    });
    lp.objective[n_vars[target]] = match kind {
        EventKind::Click => 1.0,
        EventKind::Error => -1.0,
    };

    let dvar = [None, Some(&dvs), Some(&dws)];
    for j in 0..3 {
        let mut co = Vec::with_capacity(3 * (s + 1) + 1);
        for n in 0..=s {
            let rho = w(j, n) / w(0, n);
            co.push((n_vars[n], rho));
            co.push((delta_n[n], rho));
            if let Some(dv) = dvar[j] {
                co.push((dv[n], 1.0));
            }
        }
        co.push((delta[j], -1.0));
        let tail = probs[j] * dists[j].tail;
        lp.add_row(
            format!("gain_{}", Intensity::ALL[j].name()),
            co,
            observed[j] - tail,
            observed[j],
        );
    }
    for n in 0..=s {
        lp.add_row(
            format!("cap_s_{n}"),
            vec![(n_vars[n], 1.0), (delta_n[n], 1.0)],
            0.0,
            w(0, n),
        );
        for (k, dv) in [(1, &dvs), (2, &dws)] {
            let rho = w(k, n) / w(0, n);
            lp.add_row(
                format!("cap_{}_{n}", Intensity::ALL[k].name()),
                vec![(n_vars[n], rho), (delta_n[n], rho), (dv[n], 1.0)],
                0.0,
                w(k, n),
            );
        }
        let (ws, wv, ww) = (w(0, n), w(1, n), w(2, n));
        let b = (wv + ww) * d.triple[0][n];
        lp.add_row(
            format!("tri_s_{n}"),
            vec![(dvs[n], 1.0), (dws[n], 1.0)],
            -b,
            b,
        );
        let b = wv * d.triple[1][n];
        lp.add_row(
            format!("tri_v_{n}"),
            vec![(dvs[n], 1.0), (dws[n], -wv / (ws + ww))],
            -b,
            b,
        );
        let b = ww * d.triple[2][n];
        lp.add_row(
            format!("tri_w_{n}"),
            vec![(dws[n], 1.0), (dvs[n], -ww / (ws + wv))],
            -b,
            b,
        );
        if inputs.extra_pairs && ww > 0.0 {
            let b = wv * d.pair_vw;
            lp.add_row(
                format!("pair_vw_{n}"),
                vec![(dvs[n], 1.0), (dws[n], -wv / ww)],
                -b,
                b,
            );
        }
    }
    Ok((
        lp,
        LpLayout {
            n: n_vars,
            delta_n,
            dvs,
            dws,
            delta,
        },
    ))
}

/// Program minimizing `N_{click,target,γs|χ}`.
pub fn build_click_lp(
    target_n: usize,
    basis: Basis,
    inputs: &DecoyLPInputs,
) -> Result<(LPProblem, LpLayout)> {
    build(inputs, basis, EventKind::Click, target_n)
}

/// Program maximizing the single-photon X-basis error count (as a
/// minimization of its negation).
pub fn build_error_lp(inputs: &DecoyLPInputs) -> Result<(LPProblem, LpLayout)> {
    build(inputs, Basis::X, EventKind::Error, 1)
}

fn run(
    lp: &LPProblem,
    layout: &LpLayout,
    target: usize,
    n_chi: f64,
    what: &str,
) -> Result<(f64, LPSolution)> {
    let sol = lp::solve(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.x[layout.n[target]] * n_chi, sol)),
        LpStatus::Infeasible => Err(Error::EstimationAborted(format!(
            "{what} program infeasible"
        ))),
        LpStatus::Unbounded => Err(Error::Numeric(format!("{what} program unbounded"))),
    }
}

/// Solve the four programs, clamp the optima into `[0, N_χ p_s p_1^s]`
/// and record the failure probabilities they rely on.
pub fn estimate_yields(inputs: &DecoyLPInputs) -> Result<YieldBounds> {
    let [nz, nx] = inputs.counts.n_chi;
    let cap = |n_chi: f64, n: u32| {
        n_chi * inputs.params.p_s * crate::stats::pmf_unchecked(inputs.params.gamma_s, n)
    };
    let (lp0, lay0) = build_click_lp(0, Basis::Z, inputs)?;
    let n0_z = run(&lp0, &lay0, 0, nz, "vacuum Z")?
        .0
        .clamp(0.0, cap(nz, 0));
    let (lp1, lay1) = build_click_lp(1, Basis::Z, inputs)?;
    let n1_z = run(&lp1, &lay1, 1, nz, "single-photon Z")?
        .0
        .clamp(0.0, cap(nz, 1));
    let (lpx, layx) = build_click_lp(1, Basis::X, inputs)?;
    let n1_x = run(&lpx, &layx, 1, nx, "single-photon X")?
        .0
        .clamp(0.0, cap(nx, 1));
    let (lpe, laye) = build_error_lp(inputs)?;
    let e1_x = run(&lpe, &laye, 1, nx, "single-photon X error")?
        .0
        .clamp(0.0, cap(nx, 1));

    let mut ledger = EpsLedger::new();
    inputs
        .z_click
        .record(&mut ledger, "z_click", EpsGroup::ZClick);
    inputs
        .x_click
        .record(&mut ledger, "x_click", EpsGroup::XClick);
    inputs
        .x_error
        .record(&mut ledger, "x_error", EpsGroup::XError);
    Ok(YieldBounds {
        n0_z,
        n1_z,
        n1_x,
        e1_x,
        eps_z0: ledger.group_sum(&[EpsGroup::ZClick]),
        eps_z1: ledger.group_sum(&[EpsGroup::ZClick]),
        eps_x1: ledger.group_sum(&[EpsGroup::XClick]),
        eps_ex1: ledger.group_sum(&[EpsGroup::XError]),
        ledger,
    })
}
