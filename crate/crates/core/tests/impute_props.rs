mod common;

use common::{build_panel, random_panel, rank_one};
use didlab::impute::{
    bjs, cross_validate_lambda, lambda_max, mc_effects, soft_impute, LambdaGrid, McConfig, ObservationMask, WarmStart,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cfg(fixed_effects: bool, tol: f64) -> McConfig {
    McConfig {
        fixed_effects,
        tol,
        max_iter: 20_000,
        ..McConfig::default()
    }
}

/// Random matrix with a low-rank part and a random mask that keeps every
/// row and column observed.
fn instance(seed: u64) -> (Vec<f64>, ObservationMask, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..25);
    let t = rng.random_range(3..12);
    let rank = rng.random_range(0..3);
    let mut y: Vec<f64> = (0..n * t).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3).collect();
    for _ in 0..rank {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        for (a, b) in y.iter_mut().zip(rank_one(&u, &v)) {
            *a += b;
        }
    }
    let miss = rng.random_range(0.0..0.4);
    let mut observed: Vec<bool> = (0..n * t).map(|_| rng.random::<f64>() >= miss).collect();
    for i in 0..n {
        observed[i * t + (i % t)] = true;
    }
    for s in 0..t {
        observed[(s % n) * t + s] = true;
    }
    (y, ObservationMask::new(n, t, observed).unwrap(), n, t)
}

#[test]
fn objective_never_increases_across_battery() {
    for seed in 0..120u64 {
        let (y, mask, _, _) = instance(seed);
        let fe = seed % 2 == 0;
        let lmax = lambda_max(&y, &mask, fe).unwrap();
        let frac = [0.001, 0.01, 0.1, 0.5, 0.9][seed as usize % 5];
        let fit = soft_impute(&y, &mask, frac * lmax, &cfg(fe, 1e-9), None).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn nuclear_norm_shrinks_as_penalty_grows() {
    for seed in 200..230u64 {
        let (y, mask, _, _) = instance(seed);
        let lmax = lambda_max(&y, &mask, true).unwrap();
        let mut last = f64::INFINITY;
        for frac in [0.01, 0.05, 0.2, 0.5, 0.8, 1.0] {
            let fit = soft_impute(&y, &mask, frac * lmax, &cfg(true, 1e-12), None).unwrap();
            assert!(fit.nuclear_norm <= last * (1.0 + 1e-6) + 1e-9, "seed {seed} frac {frac}");
            last = fit.nuclear_norm;
        }
        assert!(last < 1e-8);
    }
}

#[test]
fn penalty_at_or_above_lambda_max_gives_zero_low_rank() {
    for seed in 300..320u64 {
        let (y, mask, _, _) = instance(seed);
        for fe in [true, false] {
            let lmax = lambda_max(&y, &mask, fe).unwrap();
            for scale in [1.0 + 1e-9, 2.0] {
                let fit = soft_impute(&y, &mask, scale * lmax, &cfg(fe, 1e-10), None).unwrap();
                assert!(fit.low_rank.amax() < 1e-8, "seed {seed}");
            }
            let below = soft_impute(&y, &mask, 0.5 * lmax, &cfg(fe, 1e-10), None).unwrap();
            assert!(below.nuclear_norm > 0.0);
        }
    }
}

#[test]
fn zero_penalty_on_full_matrix_interpolates() {
    for seed in 400..410u64 {
        let (y, _, n, t) = instance(seed);
        let full = ObservationMask::new(n, t, vec![true; n * t]).unwrap();
        for fe in [false, true] {
            let fit = soft_impute(&y, &full, 0.0, &cfg(fe, 1e-12), None).unwrap();
            for i in 0..n {
                for s in 0..t {
                    assert!((fit.predict(i, s) - y[i * t + s]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn rank_one_matrix_is_completed_from_ninety_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, t) = (60, 20);
    let u: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
    let v: Vec<f64> = (0..t).map(|_| 1.0 + rng.random::<f64>()).collect();
    let m = rank_one(&u, &v);
    let mut observed = vec![true; n * t];
    let mut hidden = 0;
    while hidden < n * t / 10 {
        let c = rng.random_range(0..n * t);
        if observed[c] {
            observed[c] = false;
            hidden += 1;
        }
    }
    let mask = ObservationMask::new(n, t, observed).unwrap();
    let lmax = lambda_max(&m, &mask, false).unwrap();
    // Warm-started path down to a negligible penalty.
    let mut warm: Option<WarmStart> = None;
    let mut fit = None;
    for k in 0..=7 {
        let f = soft_impute(&m, &mask, lmax * 10f64.powi(-k), &cfg(false, 1e-10), warm.as_ref()).unwrap();
        warm = Some(WarmStart::from(&f));
        fit = Some(f);
    }
    let fit = fit.unwrap();
    let num: f64 = (0..n * t).map(|c| (fit.low_rank[(c / t, c % t)] - m[c]).powi(2)).sum();
    let den: f64 = m.iter().map(|x| x * x).sum();
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-3, "relative error {rel:e}");
}

#[test]
fn cross_validation_prefers_heavy_shrinkage_on_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, t) = (80, 10);
    let y: Vec<f64> = (0..n * t).map(|_| rng.sample(StandardNormal)).collect();
    let mask = ObservationMask::new(n, t, vec![true; n * t]).unwrap();
    let c = McConfig::bench();
    let grid = c.grid(lambda_max(&y, &mask, true).unwrap());
    let pick = cross_validate_lambda(&y, &mask, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(pick >= grid[2], "picked {pick:e}, grid top {:e}", grid[0]);
}

#[test]
fn cross_validation_keeps_low_rank_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, t) = (80, 10);
    let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let v: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = rank_one(&u, &v)
        .into_iter()
        .map(|x| x + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mask = ObservationMask::new(n, t, vec![true; n * t]).unwrap();
    let c = McConfig::bench();
    let lmax = lambda_max(&y, &mask, true).unwrap();
    let pick = cross_validate_lambda(&y, &mask, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(pick < 0.5 * lmax);
}

#[test]
fn single_value_grid_is_returned_as_is() {
    let (y, mask, _, _) = instance(9);
    let c = McConfig {
        lambda_grid: LambdaGrid::Explicit { values: vec![0.123] },
        ..McConfig::default()
    };
    assert_eq!(cross_validate_lambda(&y, &mask, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), 0.123);
}

#[test]
fn noise_free_imputation_recovers_true_effects() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, t) = (30usize, 10usize);
        let onsets: Vec<Option<u32>> = (0..n)
            .map(|i| if i % 3 == 0 { None } else { Some(rng.random_range(3..=t as u32)) })
            .collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let zeta: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        let effect = |i: usize, e: i32| 0.2 + 0.1 * e as f64 + 0.01 * i as f64;
        let p = build_panel(&onsets, t, |i, s, g| {
            let eff = g.map_or(0.0, |g| if s >= g { effect(i, s as i32 - g as i32) } else { 0.0 });
            alpha[i] + zeta[s as usize - 1] + eff
        });
        let fit = bjs(&p, 3).unwrap();
        for c in &fit.effects.cells {
            assert!((c.value - effect(c.unit, c.event_time)).abs() <= 1e-10);
        }
        for (e, pt) in &fit.curve.points {
            if *e < 0 {
                assert!(pt.estimate.abs() < 1e-10 && pt.in_sample);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_shrinkage_matrix_completion_equals_imputation(seed in any::<u64>(), n in 8usize..40, t in 4usize..12) {
        let (panel, _) = random_panel(seed, n, t, 1.0);
        let b = match bjs(&panel, 3) {
            Ok(b) => b,
            Err(_) => return Ok(()),
        };
        let c = McConfig {
            lambda_grid: LambdaGrid::Explicit { values: vec![1e6] },
            tol: 1e-12,
            ..McConfig::default()
        };
        let m = mc_effects(&panel, &c, 3).unwrap();
        prop_assert!(m.fit.low_rank.amax() == 0.0);
        prop_assert_eq!(m.effects.cells.len(), b.effects.cells.len());
        for (x, y) in m.effects.cells.iter().zip(&b.effects.cells) {
            prop_assert!((x.value - y.value).abs() <= 1e-6);
        }
        prop_assert!((m.overall.value - b.overall.value).abs() <= 1e-6);
    }
}
