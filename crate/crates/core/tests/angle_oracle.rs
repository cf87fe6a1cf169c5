//! Phase search against an exhaustive one-degree grid.

use std::f64::consts::{PI, TAU};

use leaky_decoy::optimizer::worst_case_angles;
use leaky_decoy::params::{LeakCase, LeakageModel};
use leaky_decoy::pipeline::{evaluate, AnalysisConfig};

#[test]
fn grid_and_refine_matches_one_degree_grid() {
    let mut cfg = AnalysisConfig::default();
    cfg.channel.distance_km = 10.0;
    cfg.leakage = LeakageModel::new(LeakCase::Case1, 1e-6);
    let found = worst_case_angles(&cfg, 24, 1e-3).unwrap();

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..360 {
        for j in 0..360 {
            let t = (i as f64 * TAU / 360.0, j as f64 * TAU / 360.0);
            let mut c = cfg.clone();
            c.leakage = c.leakage.with_angles(t.0, t.1);
            let v = evaluate(&c).unwrap().key.ell_raw;
            if v < best.0 {
                best = (v, t.0, t.1);
            }
        }
    }
    println!("search {found:?}\noracle {best:?}");
    assert!(found.ell_raw <= best.0 + 1e-9 * best.0.abs());
    // The worst phases sit well away from zero, where the trace distances
    // between settings are largest.
    for t in [found.theta_v, found.theta_w] {
        assert!((t - PI).abs() < PI / 2.0, "{t}");
    }
}
