use std::collections::HashSet;

use mnar_core::design::Design;
use mnar_core::linalg::{DenseMatrix, OrthonormalFactor};
use mnar_core::sampling::*;
use mnar_core::ObservationSet;
use proptest::prelude::*;

// 4σ bands throughout.

fn ramp(m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |i, j| (i as f64 - j as f64) / (m + n) as f64)
}

#[test]
fn passive_mask_extremes() {
    let full = passive_mask(6, 5, 1.0, 1.0, 1).unwrap();
    assert!(full.eta.iter().chain(&full.nu).all(|&b| b));
    let none = passive_mask(6, 5, 0.0, 0.7, 1).unwrap();
    assert!(none.kept_rows().is_empty());
    assert!(passive_mask(6, 5, 1.5, 0.5, 1).is_err());
}

#[test]
fn row_keep_rate() {
    // sd of the mean is 0.005; 4σ = 0.02
    let mask = passive_mask(10_000, 1, 0.5, 1.0, 3).unwrap();
    let mean = mask.kept_rows().len() as f64 / 10_000.0;
    assert!((mean - 0.5).abs() <= 0.02, "{mean}");
}

#[test]
fn passive_noise_std() {
    let q = ramp(100, 100);
    let mask = passive_mask(100, 100, 1.0, 1.0, 0).unwrap();
    let obs = observe_passive(&q, &mask, 0.1, 9).unwrap();
    let resid: Vec<f64> = obs.entries().iter().map(|&(i, j, v)| v - q.get(i, j)).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
    assert!((0.08..=0.12).contains(&var.sqrt()));
    assert!(observe_passive(&q, &mask, -1.0, 9).is_err());
}

#[test]
fn passive_exact_and_empty() {
    let q = ramp(7, 4);
    let full = passive_mask(7, 4, 1.0, 1.0, 2).unwrap();
    match observe_passive(&q, &full, 0.0, 2).unwrap() {
        ObservationSet::Passive { values, .. } => assert_eq!(values.to_dense().unwrap(), q),
        _ => unreachable!(),
    }
    let empty = passive_mask(7, 4, 0.0, 0.0, 2).unwrap();
    let obs = observe_passive(&q, &empty, 0.3, 2).unwrap();
    assert!(obs.is_empty());
}

#[test]
fn point_mass_draws() {
    let s = active_draw(&Design::point_mass(6, 3), &Design::point_mass(8, 5), 11, 7, 0).unwrap();
    assert_eq!(s.rows.iter().collect::<Vec<_>>(), vec![(&3, &11)]);
    assert_eq!(s.cols.iter().collect::<Vec<_>>(), vec![(&5, &7)]);
    assert!(active_draw(&Design::uniform(3), &Design::uniform(3), 0, 3, 0).is_err());
}

#[test]
fn uniform_multiplicities() {
    // binomial(40000, 1/4): sd ≈ 86.6, 4σ ≈ 346, well inside ±600
    let s = active_draw(&Design::uniform(4), &Design::uniform(2), 40_000, 1, 5).unwrap();
    for i in 0..4 {
        assert!((s.row_mult(i) as i64 - 10_000).abs() <= 600, "{}", s.row_mult(i));
    }
    assert_eq!(s.t_row(), 40_000);
}

#[test]
fn repeated_cell_mean() {
    let q = ramp(3, 3);
    let s = active_draw(&Design::point_mass(3, 1), &Design::point_mass(3, 2), 100, 100, 4).unwrap();
    assert_eq!(s.n_ij(1, 2), 10_000);
    let obs = observe_active(&q, &s, 0.1, 4).unwrap();
    let vals: Vec<f64> = obs.entries().iter().map(|e| e.2).collect();
    assert_eq!(vals.len(), 10_000);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    assert!((mean - q.get(1, 2)).abs() <= 0.004);
}

#[test]
fn active_records_are_distinct_draws() {
    let q = ramp(5, 5);
    let s = active_draw(&Design::uniform(5), &Design::uniform(5), 6, 6, 8).unwrap();
    let noiseless = observe_active(&q, &s, 0.0, 8).unwrap();
    assert!(noiseless.entries().iter().all(|&(i, j, v)| v == q.get(i, j)));
    let obs = observe_active(&q, &s, 0.1, 8).unwrap();
    let ObservationSet::Active { records, .. } = &obs else { unreachable!() };
    let keys: HashSet<(usize, usize, usize)> = records.iter().map(|r| (r.i, r.j, r.t)).collect();
    assert_eq!(keys.len(), records.len());
    let noises: HashSet<u64> = records.iter().map(|r| (r.value - q.get(r.i, r.j)).to_bits()).collect();
    assert_eq!(noises.len(), records.len());
}

#[test]
fn nondegeneracy_examples() {
    let u = OrthonormalFactor::canonical(4, 2);
    assert!(nondegeneracy_check(&[true; 4], &u, 1.0).unwrap());
    assert!(!nondegeneracy_check(&[false; 4], &u, 0.5).unwrap());
    assert!(nondegeneracy_check(&[true; 4], &u, 0.0).is_err());
    assert!(nondegeneracy_check(&[true; 3], &u, 0.5).is_err());
}

#[test]
fn mcar_source() {
    let p = ramp(200, 200);
    let exact = mask_source_mcar(&p, 1.0, 0.0, 1).unwrap();
    assert_eq!(exact.to_dense().unwrap(), p);
    // sd of the fraction is 0.0025; 4σ = 0.01
    let half = mask_source_mcar(&p, 0.5, 0.0, 1).unwrap();
    assert!((half.observed_fraction() - 0.5).abs() <= 0.02);
    let noisy = mask_source_mcar(&p, 1.0, 0.1, 1).unwrap();
    let resid: Vec<f64> = noisy.observed().map(|(i, j, v)| v - p.get(i, j)).collect();
    let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
    assert!((0.08..=0.12).contains(&sd));
    assert!(mask_source_mcar(&p, 0.0, 0.0, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passive_is_outer_product(seed in any::<u64>(), m in 1usize..30, n in 1usize..30, pr in 0.0f64..1.0, pc in 0.0f64..1.0) {
        let mask = passive_mask(m, n, pr, pc, seed).unwrap();
        let obs = observe_passive(&ramp(m, n), &mask, 0.1, seed).unwrap();
        obs.validate().unwrap();
        let ObservationSet::Passive { values, .. } = &obs else { unreachable!() };
        for i in 0..m {
            for j in 0..n {
                prop_assert_eq!(values.is_observed(i, j), mask.eta[i] && mask.nu[j]);
            }
        }
        prop_assert_eq!(passive_mask(m, n, pr, pc, seed).unwrap(), mask);
    }

    #[test]
    fn active_counts_factorize(seed in any::<u64>(), tr in 1usize..15, tc in 1usize..15) {
        let rho = Design::new(vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        let zeta = Design::uniform(3);
        let s = active_draw(&rho, &zeta, tr, tc, seed).unwrap();
        prop_assert_eq!(s.rows.values().sum::<usize>(), tr);
        prop_assert_eq!(s.cols.values().sum::<usize>(), tc);
        prop_assert_eq!(s.row_mult(3), 0);
        let obs = observe_active(&ramp(4, 3), &s, 0.2, seed).unwrap();
        obs.validate().unwrap();
        prop_assert_eq!(obs.len(), tr * tc);
        let entries = obs.entries();
        for i in 0..4 {
            for j in 0..3 {
                let count = entries.iter().filter(|e| e.0 == i && e.1 == j).count();
                prop_assert_eq!(count, s.row_mult(i) * s.col_mult(j));
                prop_assert_eq!(s.n_ij(i, j), s.row_mult(i) * s.col_mult(j));
            }
        }
        prop_assert_eq!(observe_active(&ramp(4, 3), &s, 0.2, seed).unwrap(), obs);
    }

    #[test]
    fn observation_files_round_trip(seed in any::<u64>(), active in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let q = ramp(6, 5);
        let obs = if active {
            let s = active_draw(&Design::uniform(6), &Design::uniform(5), 4, 3, seed).unwrap();
            observe_active(&q, &s, 0.1, seed).unwrap()
        } else {
            let mask = passive_mask(6, 5, 0.6, 0.6, seed).unwrap();
            observe_passive(&q, &mask, 0.1, seed).unwrap()
        };
        save_observations(&path, &obs).unwrap();
        let back = load_observations(&path).unwrap();
        prop_assert_eq!(back.entries(), obs.entries());
        // an empty passive file cannot say which columns were kept
        if !obs.is_empty() {
            prop_assert_eq!(back.row_col_weights(), obs.row_col_weights());
        }
    }
}
