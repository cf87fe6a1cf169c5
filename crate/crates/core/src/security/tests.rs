use super::*;
use crate::leakage::coin_imbalance;
use crate::params::{LeakCase, LeakageModel, ProtocolParams};
use proptest::prelude::*;

fn yields(n1_z: f64, n1_x: f64, e1_x: f64) -> YieldBounds {
    YieldBounds {
        n0_z: 0.0,
        n1_z,
        n1_x,
        e1_x,
        eps_z0: 0.0,
        eps_z1: 0.0,
        eps_x1: 0.0,
        eps_ex1: 0.0,
        ledger: EpsLedger::new(),
    }
}

fn no_coin() -> CoinBound {
    CoinBound {
        expected: 0.0,
        overlap: 1.0,
        actual: 0.0,
        eps_hat: 0.0,
    }
}

fn upsilon(x: f64, y: f64, z: f64) -> f64 {
    ((x + 1.0) * (1.0 / z).ln() / (2.0 * y * (x + y))).sqrt()
}

#[test]
fn serfling_route_example() {
    let r = phase_error_im_only(&yields(1e6, 1e6, 1e4), 1e-10).unwrap();
    let want = 0.01 + 2.0 * upsilon(1e6, 1e6, 1e-10);
    assert!((r.e_ph - want).abs() < 1e-12);
    assert!((r.e_ph - 0.0148).abs() < 1e-4);
    assert_eq!(r.route, PhaseRoute::ImOnly);
    assert_eq!(r.ledger.len(), 1);
    assert!((r.n_phase_errors - want * 1e6).abs() < 1e-6);
}

#[test]
fn serfling_route_edges() {
    let r = phase_error_im_only(&yields(1e8, 1e8, 0.0), 1e-10).unwrap();
    assert!((r.e_ph - 2.0 * upsilon(1e8, 1e8, 1e-10)).abs() < 1e-15);
    assert_eq!(
        phase_error_im_only(&yields(1e6, 1.0, 1.0), 1e-10).unwrap().e_ph,
        1.0
    );
    assert_eq!(
        phase_error_im_only(&yields(1e6, 0.0, 0.0), 1e-10).unwrap().e_ph,
        1.0
    );
    assert_eq!(
        phase_error_im_only(&yields(0.0, 1e6, 0.0), 1e-10).unwrap().e_ph,
        1.0
    );
}

#[test]
fn eps_ph1_sums_its_sources() {
    let mut y = yields(1e6, 1e6, 1e4);
    y.eps_x1 = 2e-12;
    y.eps_ex1 = 3e-12;
    let r = phase_error_im_only(&y, 1e-12).unwrap();
    assert!((r.eps_ph1 - 6e-12).abs() < 1e-24);
    let dev = CoinDeviations::azuma(2e6, &mut std::iter::repeat(1e-13)).unwrap();
    let coin = CoinBound {
        eps_hat: 4e-13,
        ..no_coin()
    };
    let r = phase_error_with_pm(&y, 0.9, &coin, &dev).unwrap();
    assert_eq!(r.ledger.len(), 1 + CoinDeviations::USES);
    assert!((r.eps_ph1 - (4e-13 + 1e-12 + 5e-12)).abs() < 1e-24);
}

#[test]
fn symmetric_coin_reduces_to_x_errors() {
    let y = yields(1e6, 1e6, 1e4);
    let r = phase_error_with_pm(&y, 1.0, &no_coin(), &CoinDeviations::zero()).unwrap();
    assert_eq!(r.route, PhaseRoute::ImAndPm);
    assert!((r.n_phase_errors - 1e4).abs() < 2e-3, "{}", r.n_phase_errors);
}

#[test]
fn coin_route_matches_quadratic_at_zero_deviations() {
    let (c, a, e) = (1e6, 1e4, 1e3);
    let coin = CoinBound {
        actual: e,
        ..no_coin()
    };
    let r = phase_error_with_pm(&yields(c, c, a), 0.9, &coin, &CoinDeviations::zero()).unwrap();
    // With the X-error count pinned at its bound, sqrt(x) solves
    // (a+b) u² − L√a u + L²/4 − b c = 0.
    let l = 0.9 * 2.0 * c - 2.0 * 0.9 / 0.1 * e;
    let b = c - a;
    let (qa, qb, qc) = (a + b, -l * a.sqrt(), l * l / 4.0 - b * c);
    let u = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    let x = u * u;
    assert!(x > a, "pinning must be active");
    assert!((r.n_phase_errors - x).abs() < 2e-3, "{} vs {x}", r.n_phase_errors);
}

#[test]
fn full_coin_imbalance_gives_no_guarantee() {
    let p = ProtocolParams::default();
    let mut m = LeakageModel::new(LeakCase::Case1, 1e-3).with_pm(true);
    m.pm_overlap = crate::params::PmOverlap::Fixed(0.0);
    let coin = coin_imbalance(&m, &p, 1e-10).unwrap();
    let y = yields(1e8, 1e7, 1e5);
    let r = phase_error_with_pm(&y, p.p_zac, &coin, &CoinDeviations::zero()).unwrap();
    assert_eq!(r.e_ph, 1.0);
}

#[test]
fn coin_route_monotone_in_pm_intensity() {
    let p = ProtocolParams {
        n_pulses: 1e10,
        p_zac: 0.999,
        ..ProtocolParams::default()
    };
    let y = yields(2e7, 4e5, 4e3);
    let dev = CoinDeviations::azuma(2.04e7, &mut std::iter::repeat(1e-12)).unwrap();
    let mut last = 0.0;
    for k in 0..40 {
        let i = 1e-12 * 10f64.powf(k as f64 * 0.25);
        let m = LeakageModel::new(LeakCase::Case1, i).with_pm(true);
        let coin = coin_imbalance(&m, &p, 1e-12).unwrap();
        let e = phase_error_with_pm(&y, p.p_zac, &coin, &dev).unwrap().e_ph;
        assert!(e >= last - 1e-10, "I = {i}: {e} < {last}");
        last = e;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn routes_agree_in_the_symmetric_limit() {
    let y = yields(1e6, 1e6, 2e4);
    let im = phase_error_im_only(&y, 1.0 - 1e-15).unwrap();
    let pm = phase_error_with_pm(&y, 1.0, &no_coin(), &CoinDeviations::zero()).unwrap();
    assert!((im.n_phase_errors - pm.n_phase_errors).abs() < 2e-3);
}

#[test]
fn impossible_inequality_is_conservative() {
    let d = DeviationBound {
        lower: 0.0,
        upper: 0.0,
        eps: 0.0,
        eps_hat: 0.0,
        kind: BoundKind::Azuma,
    };
    let dev = CoinDeviations {
        click: DeviationBound {
            lower: -1e9,
            ..d
        },
        ..CoinDeviations::zero()
    };
    let r = phase_error_with_pm(&yields(1e6, 1e6, 1e4), 1.0, &no_coin(), &dev).unwrap();
    assert_eq!(r.e_ph, 1.0);
}

fn counts(z_clicks: f64, z_errors: f64) -> ObservedCounts {
    ObservedCounts {
        n_chi: [1e12, 1e10],
        clicks: [[z_clicks, 0.0, 0.0], [0.0; 3]],
        errors: [[z_errors, 0.0, 0.0], [0.0; 3]],
    }
}

fn phase(e_ph: f64, entries: usize) -> PhaseErrorResult {
    let mut ledger = EpsLedger::new();
    for k in 0..entries {
        ledger.push(format!("e{k}"), 1e-17, EpsGroup::Serfling);
    }
    PhaseErrorResult {
        e_ph,
        route: PhaseRoute::ImOnly,
        n_phase_errors: 0.0,
        eps_ph1: 0.0,
        ledger,
    }
}

#[test]
fn hand_computed_key_length() {
    let mut y = yields(1e5, 1e5, 0.0);
    y.n0_z = 1e4;
    y.ledger.push("z", 1e-17, EpsGroup::ZClick);
    let r = key_length(
        &y,
        &phase(0.02, 2),
        &counts(1e6, 1e3),
        &ChannelParams::default(),
        &SecurityParams::default(),
        1e10,
    )
    .unwrap();
    // Independent 40-digit evaluation.
    assert!((r.ell_raw - 82061.142116750).abs() < 1e-6, "{}", r.ell_raw);
    assert_eq!(r.ell, 82061.0);
    assert!((r.rate - 82061e-10).abs() < 1e-20);
    assert_eq!(r.ledger.len(), 3);
    assert!((r.eps - 3e-17).abs() < 1e-30);
    assert!(!r.abort);
}

#[test]
fn half_phase_error_removes_single_photon_term() {
    let mut y = yields(1e7, 1e5, 0.0);
    y.n0_z = 1e6;
    let s = SecurityParams::default();
    let r = key_length(&y, &phase(0.5, 1), &counts(0.0, 0.0), &ChannelParams::default(), &s, 1e10)
        .unwrap();
    let tail = (2.0f64 / (1e-16 - 1e-17)).log2() + (2.0 / s.eps_cor).log2();
    assert!((r.ell_raw - (1e6 - tail)).abs() < 1e-6);
}

#[test]
fn zero_bounds_clamp_to_zero() {
    let r = key_length(
        &yields(0.0, 0.0, 0.0),
        &phase(0.0, 0),
        &counts(0.0, 0.0),
        &ChannelParams::default(),
        &SecurityParams::default(),
        1e10,
    )
    .unwrap();
    assert_eq!(r.ell, 0.0);
    assert!(r.ell_raw < 0.0);
}

#[test]
fn overspent_budget_aborts() {
    let mut y = yields(1e9, 1e9, 0.0);
    y.ledger.push("big", 2e-16, EpsGroup::ZClick);
    let r = key_length(
        &y,
        &phase(0.0, 0),
        &counts(0.0, 0.0),
        &ChannelParams::default(),
        &SecurityParams::default(),
        1e10,
    )
    .unwrap();
    assert!(r.abort);
    assert_eq!(r.ell, 0.0);
}

proptest! {
    #[test]
    fn key_length_monotone(e1 in 0.0f64..0.5, de in 0.0f64..0.5, q1 in 0.0f64..0.3, dq in 0.0f64..0.2) {
        let mut y = yields(1e8, 1e6, 0.0);
        y.n0_z = 1e6;
        let c = ChannelParams::default();
        let s = SecurityParams::default();
        let k = |e: f64, q: f64| {
            key_length(&y, &phase(e, 1), &counts(1e8, q * 1e8), &c, &s, 1e12).unwrap()
        };
        let base = k(e1, q1);
        prop_assert!(k((e1 + de).min(0.5), q1).ell_raw <= base.ell_raw + 1e-6);
        prop_assert!(k(e1, (q1 + dq).min(0.5)).ell_raw <= base.ell_raw + 1e-6);
        prop_assert!(base.rate >= 0.0 && base.rate <= 1.0);
    }

    #[test]
    fn phase_error_rates_stay_in_unit_interval(
        nz in 0.0f64..1e9, nx in 0.0f64..1e8, frac in 0.0f64..1.0, coin in 0.0f64..1e7, pz in 0.5f64..1.0
    ) {
        let y = yields(nz, nx, frac * nx);
        let r = phase_error_im_only(&y, 1e-10).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.e_ph));
        let c = CoinBound { actual: coin, ..no_coin() };
        let dev = CoinDeviations::azuma((nz + nx).max(1.0), &mut std::iter::repeat(1e-10)).unwrap();
        let r = phase_error_with_pm(&y, pz, &c, &dev).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.e_ph));
        prop_assert!(r.n_phase_errors <= nz + 1e-9);
    }
}
