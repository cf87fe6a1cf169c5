//! Configuration types, validation and the failure-probability budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings Alice and Bob control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub gamma_s: f64,
    pub gamma_v: f64,
    pub gamma_w: f64,
    pub p_s: f64,
    pub p_v: f64,
    pub p_w: f64,
    /// Basis-choice probability, shared by Alice and Bob.
    pub p_z: f64,
    /// Coin post-selection probability.
    pub p_zac: f64,
    pub n_pulses: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            gamma_s: 0.5,
            gamma_v: 0.1,
            gamma_w: 5e-4,
            p_s: 0.7,
            p_v: 0.2,
            p_w: 0.1,
            p_z: 0.9,
            p_zac: 0.9,
            n_pulses: 1e12,
        }
    }
}

impl ProtocolParams {
    pub fn p_x(&self) -> f64 {
        1.0 - self.p_z
    }

    pub fn p_xac(&self) -> f64 {
        1.0 - self.p_zac
    }

    pub fn gammas(&self) -> [f64; 3] {
        [self.gamma_s, self.gamma_v, self.gamma_w]
    }

    pub fn probs(&self) -> [f64; 3] {
        [self.p_s, self.p_v, self.p_w]
    }
}

/// Fiber and detector model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub e_d: f64,
    pub p_d: f64,
    pub eta_det: f64,
    /// Fiber loss in dB/km.
    pub alpha: f64,
    pub distance_km: f64,
    pub f_ec: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            e_d: 0.01,
            p_d: 5e-6,
            eta_det: 0.25,
            alpha: 0.2,
            distance_km: 0.0,
            f_ec: 1.2,
        }
    }
}

/// Rule splitting the estimation failure budget across bound uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsPolicy {
    #[default]
    Equal,
    Weighted(Vec<f64>),
}

/// Security parameters and truncation orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityParams {
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub eps_budget_policy: EpsPolicy,
    /// Fraction of `eps_sec²` handed to the estimation bounds.
    pub eps_est_fraction: f64,
    pub s_cut: u32,
    pub p_cut: u32,
    /// Serfling failure probability; taken from the budget when absent.
    pub eps_prime: Option<f64>,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            eps_sec: 1e-8,
            eps_cor: 1e-15,
            eps_budget_policy: EpsPolicy::Equal,
            eps_est_fraction: 0.5,
            s_cut: 10,
            p_cut: 15,
            eps_prime: None,
        }
    }
}

impl SecurityParams {
    /// Total failure probability available to the estimation step.
    pub fn eps_estimation_total(&self) -> f64 {
        self.eps_est_fraction * self.eps_sec * self.eps_sec
    }
}

/// Trojan-horse attack model on the intensity modulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LeakCase {
    #[default]
    NoLeak,
    /// Equal back-reflected intensity for every setting.
    Case1,
    /// Back-reflected intensity proportional to the emitted intensity.
    Case2,
    /// Phase-randomized back-reflection proportional to the emitted intensity.
    Case3,
}

/// Source of the phase-modulator overlap `cos φ·|⟨Ψ_Z|Ψ_X⟩|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PmOverlap {
    /// `e^{−2 I_max}`, a lower bound on `e^{−I}cos I` for the four BB84
    /// phases imprinted on a coherent back-reflection of intensity `I`.
    #[default]
    Coherent,
    Fixed(f64),
}

/// Anything able to supply the phase-modulator overlap.
pub trait PmOverlapProvider {
    fn overlap(&self, model: &LeakageModel) -> f64;
}

impl PmOverlapProvider for PmOverlap {
    fn overlap(&self, model: &LeakageModel) -> f64 {
        match *self {
            PmOverlap::Coherent => (-2.0 * model.i_max).exp(),
            PmOverlap::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageModel {
    pub case: LeakCase,
    pub i_max: f64,
    pub theta_v: f64,
    pub theta_w: f64,
    pub pm_overlap: PmOverlap,
    pub pm_enabled: bool,
}

impl Default for LeakageModel {
    fn default() -> Self {
        LeakageModel::no_leak()
    }
}

impl LeakageModel {
    pub fn no_leak() -> Self {
        LeakageModel {
            case: LeakCase::NoLeak,
            i_max: 0.0,
            theta_v: 0.0,
            theta_w: 0.0,
            pm_overlap: PmOverlap::Coherent,
            pm_enabled: false,
        }
    }

    pub fn new(case: LeakCase, i_max: f64) -> Self {
        LeakageModel {
            case,
            i_max,
            ..LeakageModel::no_leak()
        }
    }

    pub fn with_angles(mut self, theta_v: f64, theta_w: f64) -> Self {
        self.theta_v = theta_v;
        self.theta_w = theta_w;
        self
    }

    pub fn with_pm(mut self, enabled: bool) -> Self {
        self.pm_enabled = enabled;
        self
    }

    /// Whether Eve's phases enter the trace distances.
    pub fn has_angles(&self) -> bool {
        matches!(self.case, LeakCase::Case1 | LeakCase::Case2) && self.i_max > 0.0
    }

    pub fn pm_overlap_value(&self) -> f64 {
        self.pm_overlap.overlap(self)
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidParams(self.violations))
        }
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// Check every documented invariant; never mutates its inputs.
pub fn validate(
    p: &ProtocolParams,
    c: &ChannelParams,
    s: &SecurityParams,
    l: &LeakageModel,
) -> ValidationReport {
    let mut v = Vec::new();
    if !(p.gamma_s > p.gamma_v && p.gamma_v > p.gamma_w && p.gamma_w >= 0.0) {
        v.push("intensity ordering gamma_s > gamma_v > gamma_w >= 0 violated".to_string());
    }
    for (name, x) in [
        ("p_s", p.p_s),
        ("p_v", p.p_v),
        ("p_w", p.p_w),
        ("p_z", p.p_z),
    ] {
        if !open_unit(x) {
            v.push(format!("{name} = {x} outside (0,1)"));
        }
    }
    if ((p.p_s + p.p_v + p.p_w) - 1.0).abs() > 1e-9 {
        v.push(format!(
            "probability sum p_s + p_v + p_w = {} differs from 1",
            p.p_s + p.p_v + p.p_w
        ));
    }
    if !(p.p_zac > 0.0 && p.p_zac <= 1.0) {
        v.push(format!("p_zac = {} outside (0,1]", p.p_zac));
    }
    if !(p.n_pulses >= 1.0) || !p.n_pulses.is_finite() {
        v.push(format!("n_pulses = {} must be >= 1", p.n_pulses));
    }
    for (name, x) in [("e_d", c.e_d), ("p_d", c.p_d), ("eta_det", c.eta_det)] {
        if !(0.0..=1.0).contains(&x) {
            v.push(format!("{name} = {x} outside [0,1]"));
        }
    }
    if !(c.alpha >= 0.0) {
        v.push("alpha must be >= 0".into());
    }
    if !(c.distance_km >= 0.0) {
        v.push("distance_km must be >= 0".into());
    }
    if !(c.f_ec >= 1.0) {
        v.push("f_ec must be >= 1".into());
    }
    for (name, x) in [
        ("eps_sec", s.eps_sec),
        ("eps_cor", s.eps_cor),
        ("eps_est_fraction", s.eps_est_fraction),
    ] {
        if !open_unit(x) {
            v.push(format!("{name} = {x} outside (0,1)"));
        }
    }
    if let Some(e) = s.eps_prime {
        if !open_unit(e) {
            v.push(format!("eps_prime = {e} outside (0,1)"));
        }
    }
    if s.s_cut < 1 {
        v.push("s_cut must be >= 1".into());
    }
    if s.p_cut < 1 {
        v.push("p_cut must be >= 1".into());
    }
    if !(l.i_max >= 0.0) {
        v.push("i_max must be >= 0".into());
    }
    if l.case == LeakCase::NoLeak && l.i_max != 0.0 {
        v.push("no_leak requires i_max = 0".into());
    }
    if l.case == LeakCase::Case3 && l.i_max > std::f64::consts::LN_2 {
        v.push("case3 bounds require i_max <= ln 2".into());
    }
    let ov = l.pm_overlap_value();
    if !(0.0..=1.0).contains(&ov) {
        v.push(format!("pm_overlap = {ov} outside [0,1]"));
    }
    ValidationReport { violations: v }
}

/// Split `eps_total` across `n_uses` bound uses.
pub fn allocate_eps(policy: &EpsPolicy, n_uses: usize, eps_total: f64) -> Result<Vec<f64>> {
    if n_uses == 0 {
        return Err(Error::InvalidArgument("n_uses must be >= 1".into()));
    }
    if !open_unit(eps_total) {
        return Err(Error::InvalidArgument(format!(
            "eps_total = {eps_total} outside (0,1)"
        )));
    }
    let mut out = match policy {
        EpsPolicy::Equal => vec![eps_total / n_uses as f64; n_uses],
        EpsPolicy::Weighted(w) => {
            if w.len() != n_uses {
                return Err(Error::InvalidArgument(format!(
                    "{} weights given for {n_uses} uses",
                    w.len()
                )));
            }
            if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidArgument(
                    "weights must be positive and finite".into(),
                ));
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|x| eps_total * (x / total)).collect()
        }
    };
    // Rounding can push the sum one ulp over the budget; step entries down.
    while out.iter().sum::<f64>() > eps_total {
        for x in out.iter_mut() {
            *x = x.next_down();
        }
    }
    Ok(out)
}

/// Which estimate a ledger entry protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsGroup {
    /// Z-basis click program, shared by the vacuum and single-photon bounds.
    ZClick,
    XClick,
    XError,
    Serfling,
    Coin,
    CoinInequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsEntry {
    pub label: String,
    pub eps: f64,
    pub group: EpsGroup,
}

/// Append-only record of every concentration-bound failure probability.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpsLedger {
    entries: Vec<EpsEntry>,
}

fn union_failure(eps: impl Iterator<Item = f64>) -> f64 {
    let s: f64 = eps.map(|e| (-e).ln_1p()).sum();
    -s.exp_m1()
}

impl EpsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, eps: f64, group: EpsGroup) {
        debug_assert!(open_unit(eps));
        self.entries.push(EpsEntry {
            label: label.into(),
            eps,
            group,
        });
    }

    pub fn entries(&self) -> &[EpsEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn group_sum(&self, groups: &[EpsGroup]) -> f64 {
        self.entries
            .iter()
            .filter(|e| groups.contains(&e.group))
            .map(|e| e.eps)
            .sum()
    }

    /// Failure probability of the vacuum bound.
    pub fn eps_z0(&self) -> f64 {
        self.group_sum(&[EpsGroup::ZClick])
    }

    /// Failure probability of the single-photon Z bound.
    pub fn eps_z1(&self) -> f64 {
        self.group_sum(&[EpsGroup::ZClick])
    }

    /// Failure probability of the phase-error bound.
    pub fn eps_ph1(&self) -> f64 {
        self.group_sum(&[
            EpsGroup::XClick,
            EpsGroup::XError,
            EpsGroup::Serfling,
            EpsGroup::Coin,
            EpsGroup::CoinInequality,
        ])
    }

    /// `1 − Π(1 − ε_k)` over distinct entries.
    pub fn composite(&self) -> f64 {
        union_failure(self.entries.iter().map(|e| e.eps))
    }

    /// `1 − (1−ε_Z,0)(1−ε_Z,1)(1−ε_ph,1)`, counting the shared Z entries twice.
    pub fn composite_product_form(&self) -> f64 {
        union_failure([self.eps_z0(), self.eps_z1(), self.eps_ph1()].into_iter())
    }
}
