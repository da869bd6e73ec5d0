mod common;

use cellfree::rng::rng_from;
use cellfree::scenario::{
    draw_block, draw_channels, draw_channels_with_gains, generate_geometry, pathloss_linear, ScenarioConfig,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn entry_moments_match_variance() {
    let delta = 3.7e-9;
    let mut rng = rng_from(11, &[1]);
    let n = 100_000;
    let (mut re2, mut im2, mut mean_re, mut mean_im) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let z = draw_block(&mut rng, delta, 1, 1)[(0, 0)];
        re2 += z.re * z.re;
        im2 += z.im * z.im;
        mean_re += z.re;
        mean_im += z.im;
    }
    let n = n as f64;
    let total = (re2 + im2) / n;
    assert!((total / delta - 1.0).abs() < 0.02, "variance {total} vs {delta}");
    assert!((re2 / n / (delta / 2.0) - 1.0).abs() < 0.02);
    assert!((im2 / n / (delta / 2.0) - 1.0).abs() < 0.02);
    // zero mean, within 5 standard errors
    let se = (delta / 2.0 / n).sqrt();
    assert!((mean_re / n).abs() < 5.0 * se);
    assert!((mean_im / n).abs() < 5.0 * se);
}

#[test]
fn zero_gain_gives_zero_block() {
    let cfg = common::small_config(4, 3, 2, 2, 1);
    let mut gains = DMatrix::from_element(4, 2, 1.0);
    gains[(2, 1)] = 0.0;
    let ch = draw_channels_with_gains(gains, &cfg, 5);
    assert!(ch.block(2, 1).iter().all(|z| z.norm() == 0.0));
    assert!(ch.block(1, 1).iter().any(|z| z.norm() > 0.0));
}

#[test]
fn stacking_is_bs_major() {
    let cfg = common::small_config(4, 3, 2, 2, 1);
    let gains = DMatrix::from_fn(4, 2, |b, k| 1.0 + b as f64 + 10.0 * k as f64);
    let ch = draw_channels_with_gains(gains.clone(), &cfg, 9);
    let mut rng = rng_from(9, &[cellfree::rng::stream::CHANNELS]);
    for k in 0..2 {
        for b in 0..4 {
            let standalone = draw_block(&mut rng, gains[(b, k)], 3, 2);
            assert_eq!(ch.h[k].rows(b * 3, 3).into_owned(), standalone);
            assert_eq!(ch.block(b, k), standalone);
        }
    }
}

#[test]
fn default_grid_is_five_by_five() {
    let cfg = ScenarioConfig::default();
    let geo = generate_geometry(&cfg, 3).unwrap();
    assert_eq!(geo.bs_positions.len(), 25);
    let mut xs: Vec<f64> = geo.bs_positions.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    assert_eq!(xs, vec![0.0, 100.0, 200.0, 300.0, 400.0]);
    for p in &geo.ue_positions {
        assert!((0.0..=400.0).contains(&p[0]) && (0.0..=400.0).contains(&p[1]));
    }
    assert!(geo.distances.iter().all(|d| *d >= cfg.min_bs_ue_distance));
}

#[test]
fn channels_are_deterministic() {
    let cfg = ScenarioConfig::default();
    let geo = generate_geometry(&cfg, 21).unwrap();
    let a = draw_channels(&geo, &cfg, 77).unwrap();
    let b = draw_channels(&geo, &cfg, 77).unwrap();
    assert_eq!(a.h, b.h);
    let c = draw_channels(&geo, &cfg, 78).unwrap();
    assert_ne!(a.h, c.h);
    assert_eq!(generate_geometry(&cfg, 21).unwrap(), geo);
}

#[test]
fn large_scale_follows_pathloss() {
    let cfg = ScenarioConfig::default();
    let geo = generate_geometry(&cfg, 4).unwrap();
    let ch = draw_channels(&geo, &cfg, 4).unwrap();
    for b in 0..cfg.num_bs {
        for k in 0..cfg.num_ue {
            let expect = pathloss_linear(geo.distances[(b, k)], cfg.carrier_freq).unwrap();
            assert!((ch.large_scale[(b, k)] / expect - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ScenarioConfig {
            streams_per_ue: 3,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            alpha: 1.5,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            sigma2_bs: 0.0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            num_bs: 0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            grid_spacing: -1.0,
            ..ScenarioConfig::default()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    assert!(ScenarioConfig::default().validate().is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn geometry_respects_min_distance(seed in any::<u64>(), min_d in 1.0f64..30.0) {
        let cfg = ScenarioConfig { min_bs_ue_distance: min_d, ..ScenarioConfig::default() };
        let geo = generate_geometry(&cfg, seed).unwrap();
        prop_assert!(geo.distances.iter().all(|d| *d >= min_d));
    }
}
