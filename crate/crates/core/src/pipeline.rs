//! One complete analysis at fixed parameters: counts, trace distances,
//! decoy programs, phase-error route and key length.

use serde::{Deserialize, Serialize};

use crate::channel::{expected_counts, Basis, ObservedCounts};
use crate::error::{Error, Result};
use crate::estimation::{estimate_yields, DecoyLPInputs};
use crate::leakage::{coin_imbalance, CoinBound, Intensity, TraceDistanceTable};
use crate::params::{
    allocate_eps, validate, ChannelParams, LeakageModel, ProtocolParams, SecurityParams,
};
use crate::security::{
    key_length, phase_error_im_only, phase_error_with_pm, CoinDeviations, KeyRateResult,
};

/// The four parameter groups of one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub protocol: ProtocolParams,
    pub channel: ChannelParams,
    pub security: SecurityParams,
    pub leakage: LeakageModel,
}

/// Everything produced by [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub key: KeyRateResult,
    pub counts: ObservedCounts,
    pub distances: TraceDistanceTable,
    pub coin: Option<CoinBound>,
    /// Failure probability assigned to each bound use.
    pub eps_per_use: f64,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        validate(&self.protocol, &self.channel, &self.security, &self.leakage).into_result()
    }

    /// Bound uses drawn from the estimation budget.
    pub fn eps_uses(&self) -> usize {
        let decoy = DecoyLPInputs::eps_uses(self.security.s_cut);
        if self.leakage.pm_enabled {
            decoy + 1 + CoinDeviations::USES
        } else if self.security.eps_prime.is_none() {
            decoy + 1
        } else {
            decoy
        }
    }
}

/// Full analysis on the channel model's expected counts.
pub fn evaluate(cfg: &AnalysisConfig) -> Result<Evaluation> {
    cfg.validate()?;
    evaluate_with_counts(cfg, expected_counts(&cfg.protocol, &cfg.channel))
}

/// Full analysis on supplied counts.
pub fn evaluate_with_counts(cfg: &AnalysisConfig, counts: ObservedCounts) -> Result<Evaluation> {
    cfg.validate()?;
    let (p, s) = (&cfg.protocol, &cfg.security);
    let distances = TraceDistanceTable::build(&cfg.leakage, p, s.s_cut, s.p_cut)?;
    let eps = allocate_eps(
        &s.eps_budget_policy,
        cfg.eps_uses(),
        s.eps_estimation_total(),
    )?;
    let eps_per_use = eps[0];
    let mut it = eps.into_iter();
    let inputs = DecoyLPInputs::new(counts, distances.clone(), *p, s.s_cut, &mut it)?;
    let yields = estimate_yields(&inputs)?;
    let mut coin = None;
    let phase = if cfg.leakage.pm_enabled {
        let eps_hat = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("eps allocation exhausted".into()))?;
        let c = coin_imbalance(&cfg.leakage, p, eps_hat)?;
        coin = Some(c);
        let trials = counts.clicks(Basis::Z, Intensity::S) + counts.clicks(Basis::X, Intensity::S);
        let dev = CoinDeviations::azuma(trials, &mut it)?;
        phase_error_with_pm(&yields, p.p_zac, &c, &dev)?
    } else {
        let e = match s.eps_prime {
            Some(e) => e,
            None => it
                .next()
                .ok_or_else(|| Error::InvalidArgument("eps allocation exhausted".into()))?,
        };
        phase_error_im_only(&yields, e)?
    };
    let key = key_length(&yields, &phase, &counts, &cfg.channel, s, p.n_pulses)?;
    Ok(Evaluation {
        key,
        counts,
        distances,
        coin,
        eps_per_use,
    })
}
