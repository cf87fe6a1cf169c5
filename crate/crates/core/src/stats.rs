//! Poisson photon-number statistics, binary entropy and mixing weights.

use crate::error::{Error, Result};

/// Natural log of `n!`, exact summation below 30 and Stirling series above.
pub fn ln_factorial(n: u32) -> f64 {
    if n < 30 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        let x = n as f64 + 1.0;
        // Stirling series for ln Γ(x)
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

/// Poisson probability `γⁿ e^{−γ} / n!`, evaluated in log space.
pub fn poisson_pmf(gamma: f64, n: u32) -> Result<f64> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mean photon number {gamma} must be >= 0"
        )));
    }
    Ok(pmf_unchecked(gamma, n))
}

pub(crate) fn pmf_unchecked(gamma: f64, n: u32) -> f64 {
    if gamma == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * gamma.ln() - gamma - ln_factorial(n)).exp()
}

/// Probability of more than `s_cut` photons.
///
/// Summed from the far tail so that tiny tails keep full relative precision.
pub fn tail(gamma: f64, s_cut: u32) -> Result<f64> {
    poisson_pmf(gamma, 0)?;
    Ok(tail_unchecked(gamma, s_cut))
}

pub(crate) fn tail_unchecked(gamma: f64, s_cut: u32) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let head: f64 = (0..=s_cut).map(|n| pmf_unchecked(gamma, n)).sum();
    if head < 0.5 {
        return (1.0 - head).max(0.0);
    }
    let top = s_cut + 60 + (20.0 * gamma) as u32;
    let mut t = 0.0;
    for n in (s_cut + 1..=top).rev() {
        t += pmf_unchecked(gamma, n);
    }
    t.min(1.0)
}

/// Photon-number distribution cached up to a truncation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDist {
    pub gamma: f64,
    pub pmf: Vec<f64>,
    pub tail: f64,
}

impl PhotonDist {
    pub fn new(gamma: f64, s_cut: u32) -> Result<Self> {
        poisson_pmf(gamma, 0)?;
        Ok(PhotonDist {
            gamma,
            pmf: (0..=s_cut).map(|n| pmf_unchecked(gamma, n)).collect(),
            tail: tail_unchecked(gamma, s_cut),
        })
    }
}

/// Weight `p_k p_n^k / (p_k p_n^k + p_l p_n^l)` of setting `k` in the
/// two-setting mixture conditioned on `n` photons.
pub fn mix_weight_q(n: u32, p_k: f64, gamma_k: f64, p_l: f64, gamma_l: f64) -> Result<f64> {
    let a = p_k * poisson_pmf(gamma_k, n)?;
    let b = p_l * poisson_pmf(gamma_l, n)?;
    if a + b <= 0.0 {
        return Err(Error::InvalidArgument(
            "mixture weights are both zero".into(),
        ));
    }
    Ok(a / (a + b))
}

/// Binary Shannon entropy in bits, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "entropy argument {x} outside [0,1]"
        )));
    }
    Ok(h2(x))
}

pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}
