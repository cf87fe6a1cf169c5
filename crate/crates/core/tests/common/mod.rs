//! Property suites shared by `properties.rs` and `acceptance.rs`.
//!
//! Every check returns `Err` with a description of the first violation.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leaky_decoy::channel::{expected_counts, ObservedCounts};
use leaky_decoy::estimation::{estimate_yields, DecoyLPInputs, YieldBounds};
use leaky_decoy::leakage::eig::{det3, Mat3};
use leaky_decoy::leakage::{eig3, triple_distance, CoinBound, Intensity, TraceDistanceTable};
use leaky_decoy::params::{ChannelParams, LeakCase, LeakageModel, ProtocolParams, SecurityParams};
use leaky_decoy::pipeline::{evaluate, AnalysisConfig};
use leaky_decoy::security::{key_length, phase_error_im_only, phase_error_with_pm, CoinDeviations};
use leaky_decoy::stats::{poisson_pmf, tail};

pub type Check = std::result::Result<(), String>;

fn pmf(g: f64, n: usize) -> f64 {
    poisson_pmf(g, n as u32).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- LP soundness

struct Synthetic {
    inputs: DecoyLPInputs,
    truth: [f64; 4],
}

/// Counts drawn from a known photon-number decomposition whose per-setting
/// yields differ by less than the allowed trace distances and whose
/// fluctuations stay inside the Azuma intervals.
fn synthetic(rng: &mut ChaCha8Rng, s_cut: u32) -> Synthetic {
    let gs = rng.gen_range(0.3..0.9);
    let gv = rng.gen_range(0.05..0.25);
    let ps = rng.gen_range(0.4..0.8);
    let pv = rng.gen_range(0.1..(0.95 - ps));
    let p = ProtocolParams {
        gamma_s: gs,
        gamma_v: gv,
        p_s: ps,
        p_v: pv,
        p_w: 1.0 - ps - pv,
        n_pulses: 10f64.powf(rng.gen_range(9.0..12.0)),
        ..Default::default()
    };
    let case = if rng.gen_bool(0.5) { LeakCase::Case1 } else { LeakCase::Case2 };
    let model = LeakageModel::new(case, 10f64.powf(rng.gen_range(-8.0..-3.0)))
        .with_angles(rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let table = TraceDistanceTable::build(&model, &p, s_cut, 15).unwrap();
    let g = p.gammas();
    let pr = p.probs();
    let eta = 10f64.powf(rng.gen_range(-3.5..-0.6));
    let y0 = rng.gen_range(0.0..1e-5);
    let ed = rng.gen_range(0.0..0.05);
    let n_chi = [
        p.n_pulses * p.p_z * p.p_z * p.p_zac,
        p.n_pulses * p.p_x() * p.p_x() * p.p_zac,
    ];
    let probe = ObservedCounts {
        n_chi,
        clicks: [[0.0; 3]; 2],
        errors: [[0.0; 3]; 2],
    };
    let mut eps = std::iter::repeat(1e-10);
    let mut inputs = DecoyLPInputs::new(probe, table.clone(), p, s_cut, &mut eps).unwrap();
    let dmin = table
        .pair
        .iter()
        .chain(table.triple.iter().flatten())
        .fold(f64::INFINITY, |a, b| a.min(*b));
    let wiggle = 0.5 * dmin;
    let n_max = 60;
    let mut truth = [0.0; 4];
    for b in 0..2 {
        let mut cy = Vec::new();
        let mut ey = Vec::new();
        for n in 0..=n_max {
            let y = y0 + (1.0 - y0) * -(n as f64 * (-eta).ln_1p()).exp_m1();
            let e = (0.5 * y0 + ed * (y - y0)).min(y);
            let per: Vec<(f64, f64)> = (0..3)
                .map(|_| {
                    let yk = (y + wiggle * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0);
                    let ek = (e + wiggle * rng.gen_range(-1.0..1.0)).clamp(0.0, yk);
                    (yk, ek)
                })
                .collect();
            cy.push(per.iter().map(|v| v.0).collect::<Vec<_>>());
            ey.push(per.iter().map(|v| v.1).collect::<Vec<_>>());
        }
        let expected = |ys: &Vec<Vec<f64>>, j: usize, n: usize| n_chi[b] * pr[j] * pmf(g[j], n) * ys[n][j];
        if b == 0 {
            inputs.counts.errors[0] = std::array::from_fn(|j| (0..=n_max).map(|n| expected(&ey, j, n)).sum());
        }
        for kind in 0..2 {
            if b == 0 && kind == 1 {
                continue;
            }
            let ys = if kind == 0 { &cy } else { &ey };
            let dv = match (b, kind) {
                (0, _) => inputs.z_click.clone(),
                (_, 0) => inputs.x_click.clone(),
                _ => inputs.x_error.clone(),
            };
            let obs: [f64; 3] = std::array::from_fn(|j| {
                let e: f64 = (0..=n_max).map(|n| expected(ys, j, n)).sum();
                (e - rng.gen_range(-dv.gain[j].lower..=dv.gain[j].upper)).max(0.0)
            });
            let mut actual = |n: usize| expected(ys, 0, n) - rng.gen_range(-dv.photon[n].lower..=dv.photon[n].upper);
            match (b, kind) {
                (0, _) => {
                    inputs.counts.clicks[0] = obs;
                    truth[0] = actual(0);
                    truth[1] = actual(1);
                }
                (_, 0) => {
                    inputs.counts.clicks[1] = obs;
                    truth[2] = actual(1);
                }
                _ => {
                    inputs.counts.errors[1] = obs;
                    truth[3] = actual(1);
                }
            }
        }
    }
    Synthetic { inputs, truth }
}

/// Lower bounds never exceed, and the error bound never undercuts, the
/// hidden decomposition.
pub fn lp_soundness(cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..cases {
        let s = synthetic(&mut rng, 6);
        let y = estimate_yields(&s.inputs).map_err(|e| format!("case {case}: {e}"))?;
        let tol = |x: f64| 1e-7 * x.abs().max(1.0);
        let [t0, t1z, t1x, te] = s.truth;
        ensure(y.n0_z <= t0.max(0.0) + tol(t0), || format!("case {case}: N0 {} > {t0}", y.n0_z))?;
        ensure(y.n1_z <= t1z.max(0.0) + tol(t1z), || format!("case {case}: N1Z {} > {t1z}", y.n1_z))?;
        ensure(y.n1_x <= t1x.max(0.0) + tol(t1x), || format!("case {case}: N1X {} > {t1x}", y.n1_x))?;
        ensure(y.e1_x >= te - tol(te), || format!("case {case}: E1X {} < {te}", y.e1_x))?;
    }
    Ok(())
}

// ------------------------------------------------------- LP versus analytic

/// Optimum of the asymptotic leak-free yield program by enumerating every
/// vertex of `{E : c_j − p_j T_j ≤ Σ_n ρ_n^j E_n ≤ c_j, 0 ≤ E_n ≤ w_n}`.
fn vertex_oracle(p: &ProtocolParams, observed: [f64; 3], s_cut: usize, target: usize, maximize: bool) -> f64 {
    let g = p.gammas();
    let pr = p.probs();
    let dim = s_cut + 1;
    let w = |k: usize, n: usize| pr[k] * pmf(g[k], n);
    let t = |k: usize| pr[k] * tail(g[k], s_cut as u32).unwrap();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..3 {
        let row: Vec<f64> = (0..dim).map(|n| w(j, n) / w(0, n)).collect();
        planes.push((row.clone(), observed[j]));
        planes.push((row.iter().map(|x| -x).collect(), -(observed[j] - t(j))));
    }
    for n in 0..dim {
        let mut e = vec![0.0; dim];
        e[n] = 1.0;
        planes.push((e.clone(), w(0, n)));
        e[n] = -1.0;
        planes.push((e, 0.0));
    }
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let m = DMatrix::from_fn(dim, dim, |r, c| planes[idx[r]].0[c]);
        let h = DVector::from_fn(dim, |r, _| planes[idx[r]].1);
        if let Some(x) = m.lu().solve(&h) {
            let feasible = planes.iter().all(|(a, b)| {
                let v: f64 = a.iter().zip(x.iter()).map(|(u, y)| u * y).sum();
                v <= b + 1e-12 * b.abs().max(1e-9)
            });
            if feasible {
                best = if maximize { best.max(x[target]) } else { best.min(x[target]) };
            }
        }
        let mut k = dim;
        while k > 0 && idx[k - 1] == planes.len() - dim + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for t in k..dim {
            idx[t] = idx[t - 1] + 1;
        }
    }
    best
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// With no deviations and no leakage the LP optima equal the exact optima of
/// the classical decoy program.
pub fn lp_matches_vertex_oracle() -> Check {
    let s_cut = 3;
    for (k, km) in [0.0, 25.0, 60.0, 100.0].into_iter().enumerate() {
        let p = ProtocolParams {
            gamma_s: 0.45 + 0.05 * k as f64,
            gamma_v: 0.12,
            ..Default::default()
        };
        let ch = ChannelParams {
            distance_km: km,
            ..Default::default()
        };
        let inputs = DecoyLPInputs::asymptotic(expected_counts(&p, &ch), TraceDistanceTable::zeros(s_cut), p, s_cut);
        let y = estimate_yields(&inputs).map_err(|e| e.to_string())?;
        let [nz, nx] = inputs.counts.n_chi;
        let oz = inputs.counts.clicks[0].map(|c| c / nz);
        let ox = inputs.counts.clicks[1].map(|c| c / nx);
        let oe = inputs.counts.errors[1].map(|c| c / nx);
        let pairs = [
            (y.n0_z, nz * vertex_oracle(&p, oz, 3, 0, false)),
            (y.n1_z, nz * vertex_oracle(&p, oz, 3, 1, false)),
            (y.n1_x, nx * vertex_oracle(&p, ox, 3, 1, false)),
            (y.e1_x, nx * vertex_oracle(&p, oe, 3, 1, true)),
        ];
        for (i, (lp, oracle)) in pairs.into_iter().enumerate() {
            ensure(rel(lp, oracle.max(0.0)) < 1e-6, || format!("{km} km bound {i}: {lp} vs {oracle}"))?;
        }
    }
    Ok(())
}

// ------------------------------------------------------- trace distances

const DIM: usize = 30;

fn fock_state(beta: f64, theta: f64) -> Vec<C> {
    let a = C::from_polar(beta, theta);
    let mut v = Vec::with_capacity(DIM);
    let mut amp = C::new((-beta * beta / 2.0).exp(), 0.0);
    for m in 0..DIM {
        if m > 0 {
            amp = amp * a / (m as f64).sqrt();
        }
        v.push(amp);
    }
    v
}

/// Cyclic Jacobi eigenvalues of a real symmetric matrix.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off <= 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// `½ Tr|Σ w |ψ⟩⟨ψ||` in a truncated Fock basis; the Hermitian matrix
/// `A + iB` is embedded as `[[A, −B], [B, A]]`, doubling each eigenvalue.
fn fock_trace_norm(states: &[(f64, f64, f64)]) -> f64 {
    let mut rho = DMatrix::<f64>::zeros(2 * DIM, 2 * DIM);
    for &(w, b, t) in states {
        let v = fock_state(b, t);
        for r in 0..DIM {
            for c in 0..DIM {
                let e = v[r] * v[c].conj() * w;
                rho[(r, c)] += e.re;
                rho[(r + DIM, c + DIM)] += e.re;
                rho[(r, c + DIM)] -= e.im;
                rho[(r + DIM, c)] += e.im;
            }
        }
    }
    0.25 * jacobi_eigenvalues(rho).iter().map(|x| x.abs()).sum::<f64>()
}

/// Closed-form triple distances against dense Fock-space diagonalisation.
pub fn trace_distances_match_fock_oracle(draws: usize) -> Check {
    use Intensity::*;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for draw in 0..draws {
        let case = if draw % 2 == 0 { LeakCase::Case1 } else { LeakCase::Case2 };
        let i = 10f64.powf(rng.gen_range(-5.0..-0.5));
        let (tv, tw) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
        let m = LeakageModel::new(case, i).with_angles(tv, tw);
        let gs = rng.gen_range(0.2..1.0);
        let gv = rng.gen_range(0.01..gs);
        let ps = rng.gen_range(0.1..0.8);
        let pv = rng.gen_range(0.05..(0.95 - ps));
        let p = ProtocolParams {
            gamma_s: gs,
            gamma_v: gv,
            p_s: ps,
            p_v: pv,
            p_w: 1.0 - ps - pv,
            ..Default::default()
        };
        let n = rng.gen_range(0..=10usize);
        let g = p.gammas();
        let pr = p.probs();
        let state = |k: usize| {
            let beta = match case {
                LeakCase::Case2 => (i * g[k] / g[0]).sqrt(),
                _ => i.sqrt(),
            };
            (beta, [0.0, tv, tw][k])
        };
        for (j, k, l) in [(S, V, W), (V, S, W), (W, S, V)] {
            let d = triple_distance(&m, &p, n as u32, j, k, l, 15).map_err(|e| e.to_string())?;
            let (a, b) = (pr[k.index()] * pmf(g[k.index()], n), pr[l.index()] * pmf(g[l.index()], n));
            let (q, qc) = (a / (a + b), b / (a + b));
            let (sj, sk, sl) = (state(j.index()), state(k.index()), state(l.index()));
            let o = fock_trace_norm(&[(1.0, sj.0, sj.1), (-q, sk.0, sk.1), (-qc, sl.0, sl.1)]);
            ensure((d - o).abs() < 1e-8, || format!("draw {draw} {case:?} I={i} n={n} {j:?}: {d} vs {o}"))?;
        }
    }
    Ok(())
}

/// Roots of random complex 3×3 matrices reproduce trace and determinant.
pub fn eig3_identities(draws: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for draw in 0..draws {
        let scale = 10f64.powf(rng.gen_range(-6.0..3.0));
        let m: Mat3 = std::array::from_fn(|_| {
            std::array::from_fn(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
        });
        let ev = eig3(&m).map_err(|e| e.to_string())?;
        let norm = m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let tr = m[0][0] + m[1][1] + m[2][2];
        let sum = ev[0] + ev[1] + ev[2];
        let prod = ev[0] * ev[1] * ev[2];
        ensure((sum - tr).norm() <= 1e-10 * norm, || format!("draw {draw}: trace {sum} vs {tr}"))?;
        ensure((prod - det3(&m)).norm() <= 1e-10 * norm.powi(3), || format!("draw {draw}: det {prod} vs {}", det3(&m)))?;
    }
    Ok(())
}

// ------------------------------------------------------- key monotonicity

/// `ℓ` is non-increasing in `I_max` and non-decreasing in `N` on fixed
/// grids, at fixed settings and phases. The `N` grid crosses zero.
pub fn key_monotone_in_leak_and_pulses() -> Check {
    for case in [LeakCase::Case1, LeakCase::Case2, LeakCase::Case3] {
        for km in [0.0, 30.0] {
            let mut last = f64::INFINITY;
            for i in [0.0, 1e-12, 1e-10, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4] {
                let mut c = AnalysisConfig::default();
                c.channel.distance_km = km;
                c.leakage = LeakageModel::new(case, i).with_angles(PI, PI / 2.0);
                let v = evaluate(&c).map_err(|e| e.to_string())?.key.ell_raw;
                ensure(v <= last + 1e-6 * last.abs().max(1.0), || format!("{case:?} {km} km I={i}: {v} > {last}"))?;
                last = v;
            }
        }
    }
    for case in [LeakCase::NoLeak, LeakCase::Case1] {
        let mut last = f64::NEG_INFINITY;
        for n in [1e9, 3e9, 1e10, 3e10, 1e11, 1e12, 1e13] {
            let mut c = AnalysisConfig::default();
            c.channel.distance_km = 20.0;
            c.protocol.n_pulses = n;
            let i = if case == LeakCase::NoLeak { 0.0 } else { 1e-7 };
            c.leakage = LeakageModel::new(case, i).with_angles(PI, 0.0);
            // Below zero the raw value scales with N, so compare the clipped key.
            let v = evaluate(&c).map_err(|e| e.to_string())?.key.ell;
            ensure(v >= last, || format!("{case:?} N={n}: {v} < {last}"))?;
            last = v;
        }
    }
    Ok(())
}

fn key_from(inputs: &DecoyLPInputs, ch: &ChannelParams) -> std::result::Result<(YieldBounds, f64), String> {
    let y = estimate_yields(inputs).map_err(|e| e.to_string())?;
    let ph = phase_error_im_only(&y, 1e-22).map_err(|e| e.to_string())?;
    let k = key_length(&y, &ph, &inputs.counts, ch, &SecurityParams::default(), inputs.params.n_pulses)
        .map_err(|e| e.to_string())?;
    Ok((y, k.ell_raw))
}

/// Raising any single trace-distance entry never raises the key or the
/// lower bounds and never lowers the error bound.
pub fn key_monotone_in_every_distance() -> Check {
    let p = ProtocolParams::default();
    let ch = ChannelParams {
        distance_km: 20.0,
        ..Default::default()
    };
    let s_cut = 10;
    let m = LeakageModel::new(LeakCase::Case1, 1e-7).with_angles(PI, PI / 2.0);
    let base = TraceDistanceTable::build(&m, &p, s_cut, 15).map_err(|e| e.to_string())?;
    let inputs = |t: TraceDistanceTable| {
        let mut eps = std::iter::repeat(1e-22);
        DecoyLPInputs::new(expected_counts(&p, &ch), t, p, s_cut, &mut eps).unwrap()
    };
    let (y0, k0) = key_from(&inputs(base.clone()), &ch)?;
    let mut variants: Vec<(String, TraceDistanceTable)> = Vec::new();
    for r in 0..2 {
        let mut t = base.clone();
        t.pair[r] = (t.pair[r] * 10.0).min(1.0);
        variants.push((format!("pair {r}"), t));
    }
    for r in 0..3 {
        for n in 0..=s_cut as usize {
            let mut t = base.clone();
            t.triple[r][n] = (t.triple[r][n] * 10.0).min(1.0);
            variants.push((format!("triple {r} n={n}"), t));
        }
    }
    for (name, t) in variants {
        let (y, k) = key_from(&inputs(t), &ch)?;
        let tol = |x: f64| 1e-9 * x.abs().max(1.0);
        ensure(k <= k0 + tol(k0), || format!("{name}: key {k} > {k0}"))?;
        ensure(y.n0_z <= y0.n0_z + tol(y0.n0_z), || format!("{name}: N0 rose"))?;
        ensure(y.n1_z <= y0.n1_z + tol(y0.n1_z), || format!("{name}: N1Z rose"))?;
        ensure(y.n1_x <= y0.n1_x + tol(y0.n1_x), || format!("{name}: N1X rose"))?;
        ensure(y.e1_x >= y0.e1_x - tol(y0.e1_x), || format!("{name}: E1X fell"))?;
    }
    Ok(())
}

// ------------------------------------------------------- coin inequality

/// At zero deviations the bisection lands on the larger root of the quadratic
/// that the coin inequality reduces to, within 1e-3 counts.
pub fn coin_bisection_matches_quadratic() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for draw in 0..50 {
        let c = 10f64.powf(rng.gen_range(4.0..9.0));
        let a = c * rng.gen_range(0.001..0.05);
        let p_zac = rng.gen_range(0.6..0.99);
        let e = c * rng.gen_range(0.0..0.01) * (1.0 - p_zac);
        let y = YieldBounds {
            n0_z: 0.0,
            n1_z: c,
            n1_x: c,
            e1_x: a,
            eps_z0: 0.0,
            eps_z1: 0.0,
            eps_x1: 0.0,
            eps_ex1: 0.0,
            ledger: Default::default(),
        };
        let coin = CoinBound {
            expected: e,
            overlap: 1.0,
            actual: e,
            eps_hat: 0.0,
        };
        let r = phase_error_with_pm(&y, p_zac, &coin, &CoinDeviations::zero()).map_err(|e| e.to_string())?;
        // With the X-error count at its bound, u = √x solves
        // (a+b)u² − L√a·u + L²/4 − b·c = 0 where L = 2p c − 2(p/(1−p))E.
        let l = 2.0 * p_zac * c - 2.0 * p_zac / (1.0 - p_zac) * e;
        let b = c - a;
        let (qa, qb, qc) = (a + b, -l * a.sqrt(), l * l / 4.0 - b * c);
        let u = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        let x = (u * u).min(c);
        if x <= a {
            // Pinning inactive: the unconstrained optimum applies instead.
            continue;
        }
        ensure((r.n_phase_errors - x).abs() < 1e-3, || format!("draw {draw}: {} vs {x}", r.n_phase_errors))?;
    }
    Ok(())
}

/// Every suite in turn.
pub fn all_properties() -> Vec<(&'static str, Check)> {
    vec![
        ("lp soundness (200 synthetic decompositions)", lp_soundness(200)),
        ("lp vs vertex oracle at zero deviation", lp_matches_vertex_oracle()),
        ("trace distances vs Fock oracle", trace_distances_match_fock_oracle(60)),
        ("eig3 trace/det identities", eig3_identities(500)),
        ("key monotone in I_max and N", key_monotone_in_leak_and_pulses()),
        ("key monotone in every D entry", key_monotone_in_every_distance()),
        ("coin bisection vs quadratic", coin_bisection_matches_quadratic()),
    ]
}
