//! Concentration kernels converting between expected and actual counts.
//!
//! Callers choose the trial count; the kernels only evaluate the closed forms.

use crate::error::{Error, Result};

/// Which inequality produced a deviation bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundKind {
    Azuma,
    ChernoffLower,
    ChernoffUpper,
    Serfling,
}

/// Two-sided deviation `−Δ ≤ δ ≤ Δ̂` with the failure probabilities it costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationBound {
    pub lower: f64,
    pub upper: f64,
    pub eps: f64,
    pub eps_hat: f64,
    pub kind: BoundKind,
}

impl DeviationBound {
    /// Azuma bound on `n_trials` trials, one kernel evaluation per side.
    pub fn azuma(n_trials: f64, eps: f64, eps_hat: f64) -> Result<Self> {
        Ok(DeviationBound {
            lower: azuma_delta(n_trials, eps)?,
            upper: azuma_delta(n_trials, eps_hat)?,
            eps,
            eps_hat,
            kind: BoundKind::Azuma,
        })
    }
}

fn check_eps(eps: f64) -> Result<f64> {
    if eps > 0.0 && eps < 1.0 {
        Ok((1.0 / eps).ln())
    } else {
        Err(Error::InvalidArgument(format!(
            "failure probability {eps} outside (0,1)"
        )))
    }
}

fn check_count(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "count {x} must be finite and >= 0"
        )))
    }
}

/// Azuma deviation `√(2 n ln(1/ε))`.
pub fn azuma_delta(n_trials: f64, eps: f64) -> Result<f64> {
    check_count(n_trials)?;
    Ok((2.0 * n_trials * check_eps(eps)?).sqrt())
}

/// Lower-side Chernoff deviation `g(x, ε) = √(2x ln(1/ε))`.
pub fn chernoff_lower(x: f64, eps: f64) -> Result<f64> {
    check_count(x)?;
    Ok((2.0 * x * check_eps(eps)?).sqrt())
}

/// Upper-side Chernoff deviation `ĝ(x, ε̂) = √(3x ln(1/ε̂))`.
pub fn chernoff_upper(x: f64, eps_hat: f64) -> Result<f64> {
    check_count(x)?;
    Ok((3.0 * x * check_eps(eps_hat)?).sqrt())
}

/// Serfling sampling deviation `√((x+1) ln(1/z) / (2y(x+y)))`.
pub fn serfling_upsilon(x: f64, y: f64, z: f64) -> Result<f64> {
    check_count(x)?;
    if !(y > 0.0) {
        return Err(Error::InvalidArgument(
            "Serfling sample size must be positive".into(),
        ));
    }
    let l = check_eps(z)?;
    Ok(((x + 1.0) * l / (2.0 * y * (x + y))).sqrt())
}
