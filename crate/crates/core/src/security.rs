//! Phase-error estimation and key-length composition.
//!
//! Two routes bound the single-photon phase-error rate: a Serfling sampling
//! argument when only the intensity modulator leaks, and the quantum-coin
//! inequality when the phase modulator leaks as well.

use serde::Serialize;

use crate::channel::ObservedCounts;
use crate::concentration::{serfling_upsilon, BoundKind, DeviationBound};
use crate::error::{Error, Result};
use crate::estimation::YieldBounds;
use crate::leakage::CoinBound;
use crate::params::{ChannelParams, EpsGroup, EpsLedger, SecurityParams};
use crate::stats::h2;

/// Which phase-error bound produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRoute {
    ImOnly,
    ImAndPm,
}

impl PhaseRoute {
    pub fn name(self) -> &'static str {
        match self {
            PhaseRoute::ImOnly => "im_only",
            PhaseRoute::ImAndPm => "im_pm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseErrorResult {
    /// Upper bound on the single-photon phase-error rate.
    pub e_ph: f64,
    pub route: PhaseRoute,
    /// Upper bound on the number of phase errors among `N^L_1Z`.
    pub n_phase_errors: f64,
    /// Failure probability of the bound, including the X-basis programs.
    pub eps_ph1: f64,
    /// Entries consumed by this step only.
    pub ledger: EpsLedger,
}

/// Serfling route: `e = min{N_Z1 E_X1/N_X1 + (N_Z1+N_X1) Υ, N_Z1} / N_Z1`.
pub fn phase_error_im_only(yields: &YieldBounds, eps_prime: f64) -> Result<PhaseErrorResult> {
    let (nz, nx, ex) = (yields.n1_z, yields.n1_x, yields.e1_x);
    let mut ledger = EpsLedger::new();
    let u = serfling_upsilon(nz, nx.max(1.0), eps_prime)?;
    ledger.push("serfling", eps_prime, EpsGroup::Serfling);
    let e_ph = if nz <= 0.0 || nx < 1.0 {
        1.0
    } else {
        ((nz * ex / nx + (nz + nx) * u).min(nz) / nz).clamp(0.0, 1.0)
    };
    Ok(PhaseErrorResult {
        e_ph,
        route: PhaseRoute::ImOnly,
        n_phase_errors: e_ph * nz,
        eps_ph1: eps_prime + yields.eps_x1 + yields.eps_ex1,
        ledger,
    })
}

/// Azuma intervals for the five terms of the coin inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinDeviations {
    pub click: DeviationBound,
    pub x_error: DeviationBound,
    pub z_error: DeviationBound,
    pub x_no_error: DeviationBound,
    pub z_no_error: DeviationBound,
}

impl CoinDeviations {
    /// Failure probabilities drawn by [`Self::azuma`].
    pub const USES: usize = 10;

    pub fn azuma(n_trials: f64, eps: &mut impl Iterator<Item = f64>) -> Result<Self> {
        let mut one = || -> Result<DeviationBound> {
            let mut next = || {
                eps.next()
                    .ok_or_else(|| Error::InvalidArgument("eps allocation exhausted".into()))
            };
            let (a, b) = (next()?, next()?);
            DeviationBound::azuma(n_trials, a, b)
        };
        Ok(CoinDeviations {
            click: one()?,
            x_error: one()?,
            z_error: one()?,
            x_no_error: one()?,
            z_no_error: one()?,
        })
    }

    pub fn zero() -> Self {
        let z = DeviationBound {
            lower: 0.0,
            upper: 0.0,
            eps: 0.0,
            eps_hat: 0.0,
            kind: BoundKind::Azuma,
        };
        CoinDeviations {
            click: z,
            x_error: z,
            z_error: z,
            x_no_error: z,
            z_no_error: z,
        }
    }

    fn record(&self, ledger: &mut EpsLedger) {
        let named = [
            ("click", &self.click),
            ("x_error", &self.x_error),
            ("z_error", &self.z_error),
            ("x_no_error", &self.x_no_error),
            ("z_no_error", &self.z_no_error),
        ];
        for (name, d) in named {
            for (side, e) in [("lo", d.eps), ("hi", d.eps_hat)] {
                if e > 0.0 {
                    ledger.push(format!("coin.{name}.{side}"), e, EpsGroup::CoinInequality);
                }
            }
        }
    }
}

/// The coin inequality with every deviation at its loosening endpoint.
#[derive(Debug, Clone, Copy)]
struct CoinInequality {
    lhs: f64,
    c_x: f64,
    c_z: f64,
    /// Upper bound on X-basis errors; the true count lies in `[0, a_max]`.
    a_max: f64,
    d: [f64; 4],
}

impl CoinInequality {
    /// `RHS − LHS` with the X-basis error count at its worst admissible
    /// value, written as `(S+U+V−L) − (√A−√U)² − (√B−√V)²` so that
    /// tangency stays exact.
    fn slack(&self, x: f64) -> f64 {
        let [d1, d2, d3, d4] = self.d;
        let u = (x + d2).max(0.0);
        let v = (self.c_z - x + d4).max(0.0);
        let s = self.c_x + d1 + d3;
        let a = if u + v > 0.0 { s * u / (u + v) } else { d1 };
        let a = a.clamp(d1, self.a_max + d1);
        let b = (s - a).max(0.0);
        let total = (s + (self.c_z + d2 + d4).max(0.0)) - self.lhs;
        total - (a.sqrt() - u.sqrt()).powi(2) - (b.sqrt() - v.sqrt()).powi(2)
    }

    fn holds(&self, x: f64) -> bool {
        self.slack(x) >= -1e-12
    }

    /// Largest feasible `x` in `[0, c_z]`, or `None` when nothing is feasible.
    fn largest_root(&self, tol: f64) -> Option<f64> {
        if self.holds(self.c_z) {
            return Some(self.c_z);
        }
        // Concave in x: locate the peak, then bisect on its right.
        let (mut lo, mut hi) = (0.0, self.c_z);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if self.slack(m1) < self.slack(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
            if hi - lo < tol * 1e-3 {
                break;
            }
        }
        let peak = 0.5 * (lo + hi);
        let start = if self.holds(peak) {
            peak
        } else if self.holds(0.0) {
            0.0
        } else {
            return None;
        };
        let (mut ok, mut bad) = (start, self.c_z);
        while bad - ok > tol {
            let m = 0.5 * (ok + bad);
            if self.holds(m) {
                ok = m;
            } else {
                bad = m;
            }
        }
        Some(ok)
    }
}

/// Coin route: the largest Z-basis X-error count compatible with the coin
/// inequality, found by bisection to `10⁻³` counts.
pub fn phase_error_with_pm(
    yields: &YieldBounds,
    p_zac: f64,
    coin: &CoinBound,
    dev: &CoinDeviations,
) -> Result<PhaseErrorResult> {
    if !(p_zac > 0.0 && p_zac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_zac {p_zac} outside (0,1]"
        )));
    }
    let (c_z, c_x) = (yields.n1_z, yields.n1_x);
    let p_xac = 1.0 - p_zac;
    let coin_term = if coin.actual <= 0.0 {
        0.0
    } else if p_xac > 0.0 {
        2.0 * p_zac / p_xac * coin.actual
    } else {
        f64::INFINITY
    };
    let ineq = CoinInequality {
        lhs: p_zac * (c_z + c_x - dev.click.lower) - coin_term,
        c_x,
        c_z,
        a_max: yields.e1_x.clamp(0.0, c_x),
        d: [
            dev.x_error.upper,
            dev.z_error.upper,
            dev.x_no_error.upper,
            dev.z_no_error.upper,
        ],
    };
    let mut ledger = EpsLedger::new();
    if coin.eps_hat > 0.0 {
        ledger.push("coin.chernoff.hi", coin.eps_hat, EpsGroup::Coin);
    }
    dev.record(&mut ledger);
    let x = if c_z <= 0.0 || !ineq.lhs.is_finite() {
        None
    } else {
        ineq.largest_root(1e-3)
    };
    let e_ph = match x {
        Some(x) => (x / c_z).clamp(0.0, 1.0),
        None => 1.0,
    };
    Ok(PhaseErrorResult {
        e_ph,
        route: PhaseRoute::ImAndPm,
        n_phase_errors: e_ph * c_z.max(0.0),
        eps_ph1: ledger.group_sum(&[EpsGroup::Coin, EpsGroup::CoinInequality])
            + yields.eps_x1
            + yields.eps_ex1,
        ledger,
    })
}

/// Secret key length and its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateResult {
    /// Key length in bits, floored and clamped at zero.
    pub ell: f64,
    /// Unrounded, unclamped right-hand side.
    pub ell_raw: f64,
    pub rate: f64,
    pub leak_ec: f64,
    pub yields: YieldBounds,
    pub phase: PhaseErrorResult,
    /// Union-bound composite over every ledger entry.
    pub eps: f64,
    /// Three-factor product form, for audit.
    pub eps_product_form: f64,
    pub ledger: EpsLedger,
    pub abort: bool,
}

/// Error-correction leakage `|Z^s| f_EC H(E^s_Z)`.
pub fn leak_ec(counts: &ObservedCounts, channel: &ChannelParams) -> f64 {
    counts.sifted_key_size() * channel.f_ec * h2(counts.qber_z())
}

/// `ℓ = N_0 + N_1[1 − H(e_ph)] − leak_EC − log₂(2/(ε_sec² − ε)) − log₂(2/ε_cor)`.
pub fn key_length(
    yields: &YieldBounds,
    phase: &PhaseErrorResult,
    counts: &ObservedCounts,
    channel: &ChannelParams,
    security: &SecurityParams,
    n_pulses: f64,
) -> Result<KeyRateResult> {
    if !(n_pulses >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "pulse count {n_pulses} must be >= 1"
        )));
    }
    let mut ledger = yields.ledger.clone();
    for e in phase.ledger.entries() {
        ledger.push(e.label.clone(), e.eps, e.group);
    }
    let eps = ledger.composite();
    let leak = leak_ec(counts, channel);
    let slack = security.eps_sec * security.eps_sec - eps;
    let abort = !(slack > 0.0);
    let ell_raw = if abort {
        f64::NEG_INFINITY
    } else {
        yields.n0_z + yields.n1_z * (1.0 - h2(phase.e_ph.clamp(0.0, 0.5)))
            - leak
            - (2.0 / slack).log2()
            - (2.0 / security.eps_cor).log2()
    };
    let ell = if abort { 0.0 } else { ell_raw.floor().max(0.0) };
    Ok(KeyRateResult {
        ell,
        ell_raw,
        rate: ell / n_pulses,
        leak_ec: leak,
        yields: yields.clone(),
        phase: phase.clone(),
        eps,
        eps_product_form: ledger.composite_product_form(),
        ledger,
        abort,
    })
}

#[cfg(test)]
mod tests;
