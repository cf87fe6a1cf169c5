//! Expected detection statistics standing in for experimental data.
//!
//! Yields follow `Y_n = 1 − (1−Y_0)(1−η)ⁿ` with `Y_0 = 2p_d(1−p_d)`, and
//! error yields `e_n Y_n = Y_0/2 + e_d(1 − (1−η)ⁿ)`. Every matched-basis
//! set also carries the coin post-selection factor `p_Zac`. Sifting
//! thresholds are assumed to be met.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leakage::Intensity;
use crate::params::{ChannelParams, ProtocolParams};
use crate::stats::pmf_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Channel transmittance including detector efficiency.
pub fn transmittance(c: &ChannelParams) -> f64 {
    c.eta_det * 10f64.powf(-c.alpha * c.distance_km / 10.0)
}

/// Background yield of the two-detector receiver.
pub fn dark_yield(c: &ChannelParams) -> f64 {
    2.0 * c.p_d * (1.0 - c.p_d)
}

/// Click and error tallies per basis and intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedCounts {
    /// Trials in which both parties chose basis χ (and the coin kept them).
    pub n_chi: [f64; 2],
    pub clicks: [[f64; 3]; 2],
    pub errors: [[f64; 3]; 2],
}

impl ObservedCounts {
    pub fn clicks(&self, b: Basis, j: Intensity) -> f64 {
        self.clicks[b.index()][j.index()]
    }

    pub fn errors(&self, b: Basis, j: Intensity) -> f64 {
        self.errors[b.index()][j.index()]
    }

    /// `|Z^s|`, the sifted key size.
    pub fn sifted_key_size(&self) -> f64 {
        self.clicks(Basis::Z, Intensity::S)
    }

    /// QBER of the signal key set.
    pub fn qber_z(&self) -> f64 {
        let z = self.sifted_key_size();
        if z > 0.0 {
            (self.errors(Basis::Z, Intensity::S) / z).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let m = |a: [[f64; 3]; 2]| a.map(|r| r.map(|x| x * factor));
        ObservedCounts {
            n_chi: self.n_chi.map(|x| x * factor),
            clicks: m(self.clicks),
            errors: m(self.errors),
        }
    }
}

fn basis_trials(p: &ProtocolParams, b: Basis) -> f64 {
    let pb = match b {
        Basis::Z => p.p_z,
        Basis::X => p.p_x(),
    };
    p.n_pulses * pb * pb * p.p_zac
}

/// Expected counts under the channel model.
pub fn expected_counts(p: &ProtocolParams, c: &ChannelParams) -> ObservedCounts {
    let eta = transmittance(c);
    let y0 = dark_yield(c);
    let g = p.gammas();
    let pr = p.probs();
    let mut out = ObservedCounts {
        n_chi: [0.0; 2],
        clicks: [[0.0; 3]; 2],
        errors: [[0.0; 3]; 2],
    };
    for b in [Basis::Z, Basis::X] {
        let n = basis_trials(p, b);
        out.n_chi[b.index()] = n;
        for j in 0..3 {
            let survive = -(-eta * g[j]).exp_m1();
            let gain = y0 + (1.0 - y0) * survive;
            let err = 0.5 * y0 + c.e_d * survive;
            out.clicks[b.index()][j] = n * pr[j] * gain;
            out.errors[b.index()][j] = n * pr[j] * err;
        }
    }
    out
}

/// Photon-number resolved expected counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueDecomposition {
    /// `[basis][intensity][n]` expected clicks from `n`-photon emissions.
    pub clicks: [[Vec<f64>; 3]; 2],
    pub errors: [[Vec<f64>; 3]; 2],
    pub n_chi: [f64; 2],
}

impl TrueDecomposition {
    pub fn click(&self, b: Basis, j: Intensity, n: usize) -> f64 {
        self.clicks[b.index()][j.index()][n]
    }

    pub fn error(&self, b: Basis, j: Intensity, n: usize) -> f64 {
        self.errors[b.index()][j.index()][n]
    }

    /// Sum over photon numbers.
    pub fn marginals(&self) -> ObservedCounts {
        let s = |a: &[[Vec<f64>; 3]; 2]| a.clone().map(|r| r.map(|v| v.iter().rev().sum::<f64>()));
        ObservedCounts {
            n_chi: self.n_chi,
            clicks: s(&self.clicks),
            errors: s(&self.errors),
        }
    }
}

/// Per-photon-number expected counts, `n ≤ n_max`.
pub fn expected_decomposition(
    p: &ProtocolParams,
    c: &ChannelParams,
    n_max: usize,
) -> TrueDecomposition {
    let eta = transmittance(c);
    let y0 = dark_yield(c);
    let g = p.gammas();
    let pr = p.probs();
    let yields: Vec<(f64, f64)> = (0..=n_max)
        .map(|n| {
            let survive = -(n as f64 * (-eta).ln_1p()).exp_m1();
            (y0 + (1.0 - y0) * survive, 0.5 * y0 + c.e_d * survive)
        })
        .collect();
    let mut clicks: [[Vec<f64>; 3]; 2] = Default::default();
    let mut errors: [[Vec<f64>; 3]; 2] = Default::default();
    let mut n_chi = [0.0; 2];
    for b in [Basis::Z, Basis::X] {
        let nb = basis_trials(p, b);
        n_chi[b.index()] = nb;
        for j in 0..3 {
            for (n, (y, e)) in yields.iter().enumerate() {
                let w = nb * pr[j] * pmf_unchecked(g[j], n as u32);
                clicks[b.index()][j].push(w * y);
                errors[b.index()][j].push(w * e);
            }
        }
    }
    TrueDecomposition {
        clicks,
        errors,
        n_chi,
    }
}

#[derive(Debug, Deserialize)]
struct CountsRow {
    basis: String,
    intensity: String,
    clicks: f64,
    errors: f64,
    trials: f64,
}

/// Read measured counts from CSV with columns
/// `basis,intensity,clicks,errors,trials`, one row per basis and intensity.
pub fn read_counts_csv(path: impl AsRef<Path>) -> Result<ObservedCounts> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = ObservedCounts {
        n_chi: [f64::NAN; 2],
        clicks: [[f64::NAN; 3]; 2],
        errors: [[f64::NAN; 3]; 2],
    };
    for (line, row) in rdr.deserialize::<CountsRow>().enumerate() {
        let row = row?;
        let bad = |msg: String| Error::InvalidArgument(format!("counts row {}: {msg}", line + 2));
        let b = match row.basis.to_ascii_uppercase().as_str() {
            "Z" => 0,
            "X" => 1,
            other => return Err(bad(format!("unknown basis {other:?}"))),
        };
        let j = match row.intensity.to_ascii_lowercase().as_str() {
            "s" => 0,
            "v" => 1,
            "w" => 2,
            other => return Err(bad(format!("unknown intensity {other:?}"))),
        };
        if !(row.clicks >= 0.0
            && row.errors >= 0.0
            && row.errors <= row.clicks
            && row.trials >= row.clicks)
        {
            return Err(bad("need 0 <= errors <= clicks <= trials".into()));
        }
        if !out.clicks[b][j].is_nan() {
            return Err(bad("duplicate basis/intensity row".into()));
        }
        if !out.n_chi[b].is_nan() && out.n_chi[b] != row.trials {
            return Err(bad("trials must be identical within a basis".into()));
        }
        out.n_chi[b] = row.trials;
        out.clicks[b][j] = row.clicks;
        out.errors[b][j] = row.errors;
    }
    if out.clicks.iter().flatten().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument(
            "counts file must cover both bases and all three intensities".into(),
        ));
    }
    Ok(out)
}
