//! Trace distances between Eve's back-reflected states and the quantum-coin
//! imbalance for the phase-modulator attack.
//!
//! Cases 1 and 2 treat the back-reflection as a coherent state whose phase
//! Eve may choose per intensity setting (`θ_s = 0`). Case 3 treats it as a
//! phase-randomized state, so the distances follow from Poisson statistics
//! and are evaluated as truncated upper-bound series.

pub mod eig;

use num_complex::Complex64 as C;

use crate::concentration::chernoff_upper;
use crate::error::{Error, Result};
use crate::params::{LeakCase, LeakageModel, ProtocolParams};
use crate::stats::pmf_unchecked;

pub use eig::eig3;

/// Intensity setting label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Intensity {
    S,
    V,
    W,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::S, Intensity::V, Intensity::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["s", "v", "w"][self.index()]
    }
}

/// `⟨β1 e^{iθ1} | β2 e^{iθ2}⟩` for coherent states.
pub fn coherent_overlap(beta1: f64, theta1: f64, beta2: f64, theta2: f64) -> C {
    let z = -(beta1 * beta1 + beta2 * beta2) / 2.0
        + beta1 * beta2 * C::from_polar(1.0, theta2 - theta1);
    z.exp()
}

fn check_case3(model: &LeakageModel) -> Result<()> {
    if model.case == LeakCase::Case3 && model.i_max > std::f64::consts::LN_2 {
        return Err(Error::InvalidArgument(format!(
            "case3 bounds need i_max <= ln 2, got {}",
            model.i_max
        )));
    }
    Ok(())
}

fn leaks(model: &LeakageModel) -> bool {
    model.case != LeakCase::NoLeak && model.i_max > 0.0
}

/// Coherent amplitude and phase of Eve's state for setting `k`.
fn coherent_state(model: &LeakageModel, params: &ProtocolParams, k: Intensity) -> (f64, f64) {
    let g = params.gammas();
    let beta = match model.case {
        LeakCase::Case2 => (model.i_max * g[k.index()] / g[0]).sqrt(),
        _ => model.i_max.sqrt(),
    };
    let theta = match k {
        Intensity::S => 0.0,
        Intensity::V => model.theta_v,
        Intensity::W => model.theta_w,
    };
    (beta, theta)
}

/// Ratio `p_m(I γ_k/γ_s) / p_m(I)` of Eve's photon statistics in Case 3.
fn case3_ratio(i: f64, params: &ProtocolParams, k: Intensity, m: u32) -> f64 {
    let x = params.gammas()[k.index()] / params.gamma_s;
    if x == 0.0 {
        return if m == 0 { i.exp() } else { 0.0 };
    }
    (i * (1.0 - x) + m as f64 * x.ln()).exp()
}

/// Trace distance between Eve's states for settings `j` and `k`.
pub fn pair_distance_between(
    model: &LeakageModel,
    params: &ProtocolParams,
    j: Intensity,
    k: Intensity,
    p_cut: u32,
) -> Result<f64> {
    check_case3(model)?;
    if !leaks(model) || j == k {
        return Ok(0.0);
    }
    match model.case {
        LeakCase::NoLeak => Ok(0.0),
        LeakCase::Case1 | LeakCase::Case2 => {
            let (b1, t1) = coherent_state(model, params, j);
            let (b2, t2) = coherent_state(model, params, k);
            // |⟨α|β⟩|² = exp(−|α−β|²)
            let d2 = (C::from_polar(b1, t1) - C::from_polar(b2, t2)).norm_sqr();
            Ok((-(-d2).exp_m1()).max(0.0).sqrt().min(1.0))
        }
        LeakCase::Case3 => {
            let (lo, hi) = if j == Intensity::S {
                (k, j)
            } else if k == Intensity::S {
                (j, k)
            } else {
                return Err(Error::InvalidArgument(
                    "case3 pair distances are defined against s".into(),
                ));
            };
            debug_assert_eq!(hi, Intensity::S);
            let i = model.i_max;
            let mut sum = 0.0;
            for m in 0..=p_cut {
                let r = case3_ratio(i, params, lo, m);
                sum += pmf_unchecked(i, m) * (1.0 - (1.0 - r).abs());
            }
            Ok((0.5 - 0.5 * sum).clamp(0.0, 1.0))
        }
    }
}

/// Pair distance of setting `k` (v or w) against the signal setting.
pub fn pair_distance(
    model: &LeakageModel,
    params: &ProtocolParams,
    k: Intensity,
    p_cut: u32,
) -> Result<f64> {
    if k == Intensity::S {
        return Err(Error::InvalidArgument(
            "pair distance needs k in {v, w}".into(),
        ));
    }
    pair_distance_between(model, params, k, Intensity::S, p_cut)
}

/// Mixture weight `q_{nkl}` with the complement computed directly.
fn q_weights(params: &ProtocolParams, n: u32, k: Intensity, l: Intensity) -> (f64, f64) {
    let g = params.gammas();
    let p = params.probs();
    let a = p[k.index()] * pmf_unchecked(g[k.index()], n);
    let b = p[l.index()] * pmf_unchecked(g[l.index()], n);
    if a + b == 0.0 {
        return (0.5, 0.5);
    }
    (a / (a + b), b / (a + b))
}

/// `e^z − 1` without cancellation for small `z`.
fn cexpm1(z: C) -> C {
    let e = z.re.exp_m1();
    let h = (z.im / 2.0).sin();
    C::new(e * z.im.cos() - 2.0 * h * h, (e + 1.0) * z.im.sin())
}

/// `Σ w_a |α_a⟩⟨α_a|` written in an orthonormal basis of the span of three
/// coherent states.  Orthogonal components are
/// built from amplitude differences so they keep full relative precision
/// when the states nearly coincide.
fn span_operator(a: [C; 3], w: [f64; 3]) -> eig::Mat3 {
    let z = |x: usize, y: usize| -(a[x].norm_sqr() + a[y].norm_sqr()) / 2.0 + a[x].conj() * a[y];
    let g = |x: usize, y: usize| z(x, y).exp();
    // 1 − |⟨α|β⟩|²
    let delta = |x: usize, y: usize| -(-(a[x] - a[y]).norm_sqr()).exp_m1();
    let zero = C::new(0.0, 0.0);
    let r22 = delta(0, 1).sqrt();
    // ⟨α2|α3⟩ − ⟨α2|α1⟩⟨α1|α3⟩ = −⟨α2|α3⟩·expm1(−conj(α1−α2)(α1−α3))
    let r23 = if r22 > 0.0 {
        -g(1, 2) * cexpm1(-(a[0] - a[1]).conj() * (a[0] - a[2])) / r22
    } else {
        zero
    };
    let r33 = (delta(0, 2) - r23.norm_sqr()).max(0.0).sqrt();
    let v = [
        [C::new(1.0, 0.0), zero, zero],
        [g(0, 1), C::new(r22, 0.0), zero],
        [g(0, 2), r23, C::new(r33, 0.0)],
    ];
    let mut m = [[zero; 3]; 3];
    for x in 0..3 {
        for y in 0..3 {
            m[x][y] = (0..3).map(|s| w[s] * v[s][x] * v[s][y].conj()).sum();
        }
    }
    // the (0,0) entry is Σ w_a |⟨α1|α_a⟩|², rewritten with the exact complements
    let tot: f64 = w.iter().sum();
    m[0][0] = C::new(tot - w[1] * delta(0, 1) - w[2] * delta(0, 2), 0.0);
    m
}

/// Trace distance between Eve's state for `j` and the `n`-photon-conditioned
/// mixture of her states for `k` and `l`.
pub fn triple_distance(
    model: &LeakageModel,
    params: &ProtocolParams,
    n: u32,
    j: Intensity,
    k: Intensity,
    l: Intensity,
    p_cut: u32,
) -> Result<f64> {
    check_case3(model)?;
    if !leaks(model) {
        return Ok(0.0);
    }
    if k == l {
        return pair_distance_between(model, params, j, k, p_cut);
    }
    let (q, qc) = q_weights(params, n, k, l);
    match model.case {
        LeakCase::NoLeak => Ok(0.0),
        LeakCase::Case1 | LeakCase::Case2 => {
            let st = [j, k, l].map(|x| coherent_state(model, params, x));
            let m = span_operator(st.map(|(b, t)| C::from_polar(b, t)), [1.0, -q, -qc]);
            let ev = eig3(&m)?;
            let d = 0.5 * ev.iter().map(|z| z.norm()).sum::<f64>();
            if !d.is_finite() {
                return Err(Error::Numeric(
                    "triple distance eigenvalues not finite".into(),
                ));
            }
            Ok(d.min(1.0))
        }
        LeakCase::Case3 => {
            let i = model.i_max;
            let e = i.exp();
            // coefficient bounding |…| beyond the truncation
            let cap = match j {
                Intensity::S => 1.0,
                _ => {
                    let w_s = if k == Intensity::S { q } else { qc };
                    w_s + (1.0 - w_s) * e
                }
            };
            let mut sum = 0.0;
            for m in 0..=p_cut {
                let rj = case3_ratio(i, params, j, m);
                let rk = case3_ratio(i, params, k, m);
                let rl = case3_ratio(i, params, l, m);
                sum += pmf_unchecked(i, m) * (cap - (rj - q * rk - qc * rl).abs());
            }
            Ok((0.5 * (cap - sum)).clamp(0.0, 1.0))
        }
    }
}

/// Every trace distance the decoy programs consume for one configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TraceDistanceTable {
    /// `D_{v,s}` and `D_{w,s}`.
    pub pair: [f64; 2],
    /// `D_{v,w}`, used only by the optional extra pair constraints.
    pub pair_vw: f64,
    /// Rows `s|{v,w}`, `v|{s,w}`, `w|{s,v}`, each indexed by photon number.
    pub triple: [Vec<f64>; 3],
    /// The distances do not depend on the basis.
    pub basis_independent: bool,
}

impl TraceDistanceTable {
    pub fn zeros(s_cut: u32) -> Self {
        let z = vec![0.0; s_cut as usize + 1];
        TraceDistanceTable {
            pair: [0.0; 2],
            pair_vw: 0.0,
            triple: [z.clone(), z.clone(), z],
            basis_independent: true,
        }
    }

    pub fn build(
        model: &LeakageModel,
        params: &ProtocolParams,
        s_cut: u32,
        p_cut: u32,
    ) -> Result<Self> {
        use Intensity::*;
        if !leaks(model) {
            check_case3(model)?;
            return Ok(Self::zeros(s_cut));
        }
        let pair = [
            pair_distance(model, params, V, p_cut)?,
            pair_distance(model, params, W, p_cut)?,
        ];
        let pair_vw = match model.case {
            LeakCase::Case3 => (pair[0] + pair[1]).min(1.0),
            _ => pair_distance_between(model, params, V, W, p_cut)?,
        };
        let mut triple: [Vec<f64>; 3] = Default::default();
        for n in 0..=s_cut {
            triple[0].push(triple_distance(model, params, n, S, V, W, p_cut)?);
            triple[1].push(triple_distance(model, params, n, V, S, W, p_cut)?);
            triple[2].push(triple_distance(model, params, n, W, S, V, p_cut)?);
        }
        Ok(TraceDistanceTable {
            pair,
            pair_vw,
            triple,
            basis_independent: true,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.pair
            .iter()
            .chain(self.triple.iter().flatten())
            .all(|d| *d == 0.0)
            && self.pair_vw == 0.0
    }

    /// Copy with every entry multiplied by `factor` and capped at 1.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = |d: f64| (d * factor).min(1.0);
        TraceDistanceTable {
            pair: self.pair.map(f),
            pair_vw: f(self.pair_vw),
            triple: self.triple.clone().map(|v| v.into_iter().map(f).collect()),
            basis_independent: self.basis_independent,
        }
    }
}

/// Bound on the number of `−` outcomes if every coin were measured in X.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CoinBound {
    /// Expected-count bound `E`.
    pub expected: f64,
    pub overlap: f64,
    /// Actual-count bound `E + ĝ(E, ε̂′)`.
    pub actual: f64,
    pub eps_hat: f64,
}

/// Coin imbalance `E = ½ N p_Xac (1 − 2√(p_Z p_X)·overlap)` and its
/// Chernoff conversion to an actual count.
pub fn coin_imbalance(
    model: &LeakageModel,
    params: &ProtocolParams,
    eps_hat: f64,
) -> Result<CoinBound> {
    if !model.pm_enabled {
        return Err(Error::InvalidArgument(
            "coin bound requested with the PM attack disabled".into(),
        ));
    }
    let overlap = model.pm_overlap_value();
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!(
            "pm overlap {overlap} outside [0,1]"
        )));
    }
    let balance = 2.0 * (params.p_z * params.p_x()).sqrt();
    let expected = 0.5 * params.n_pulses * params.p_xac() * (1.0 - balance * overlap).max(0.0);
    // Without X-coin data a positive imbalance cannot be certified.
    let actual = if params.p_xac() <= 0.0 && balance * overlap < 1.0 {
        f64::INFINITY
    } else {
        expected + chernoff_upper(expected, eps_hat)?
    };
    Ok(CoinBound {
        expected,
        overlap,
        actual,
        eps_hat,
    })
}
