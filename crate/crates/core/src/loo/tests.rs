use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StudentT};

use super::*;

fn gpd_sample(rng: &mut ChaCha8Rng, n: usize, k: f64, sigma: f64) -> Vec<f64> {
    (0..n).map(|_| gpd_quantile(rng.random::<f64>(), sigma, k)).collect()
}

#[test]
fn exponential_tail_has_zero_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let x: Vec<f64> = (0..5000).map(|_| Exp1.sample(&mut rng)).collect();
        let fit = gpd_fit(&x).unwrap();
        assert!(fit.k.abs() <= 0.1, "{fit:?}");
        assert!((fit.sigma - 1.0).abs() < 0.1, "{fit:?}");
    }
}

#[test]
fn pareto_tail_shape_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let x = gpd_sample(&mut rng, 5000, 0.3, 1.0);
        let fit = gpd_fit(&x).unwrap();
        assert!((fit.k - 0.3).abs() <= 0.1, "{fit:?}");
    }
}

#[test]
fn fit_needs_five_exceedances() {
    assert!(matches!(gpd_fit(&[1.0, 2.0, 3.0]), Err(LooError::TooFewTailSamples(3))));
    assert!(gpd_fit(&[1.0, 2.0, 3.0, 4.0, 5.0]).is_ok());
}

#[test]
fn quantile_inverts_cdf() {
    for &(k, s) in &[(0.0, 2.0), (0.5, 1.0), (-0.3, 0.7)] {
        for &p in &[0.01, 0.3, 0.9] {
            let q = gpd_quantile(p, s, k);
            let cdf = if k == 0.0 {
                1.0 - (-q / s).exp()
            } else {
                1.0 - (1.0 + k * q / s).powf(-1.0 / k)
            };
            assert!((cdf - p).abs() < 1e-12);
        }
    }
}

#[test]
fn tail_length_rule() {
    assert_eq!(tail_length(100), 20);
    assert_eq!(tail_length(4000), 190);
    assert_eq!(tail_length(2000), 135);
}

#[test]
fn equal_ratios_give_uniform_weights() {
    let r = psis_smooth(&[0.3; 400]).unwrap();
    assert_eq!(r.pareto_k, None);
    assert!(!r.flagged());
    for w in &r.log_weights {
        assert!((w + (400f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn heavy_tail_is_shrunk() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = StudentT::new(2.0).unwrap();
    let raw: Vec<f64> = (0..2000).map(|_| 2.0 * t.sample(&mut rng)).collect();
    let r = psis_smooth(&raw).unwrap();
    let norm = log_sum_exp(&raw);
    let raw_max = raw.iter().map(|x| x - norm).fold(f64::NEG_INFINITY, f64::max);
    let smooth_max = r.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(smooth_max < raw_max, "{smooth_max} vs {raw_max}");
    assert!(r.pareto_k.unwrap().is_finite());
}

#[test]
fn too_few_draws() {
    assert!(matches!(psis_smooth(&[0.0; 99]), Err(LooError::TooFewDraws(99))));
}

fn random_ll(rng: &mut ChaCha8Rng, draws: usize, obs: usize) -> LogLikMatrix {
    let v = (0..draws * obs).map(|_| -rng.random_range(0.05..3.0)).collect();
    LogLikMatrix::new(draws, obs, v).unwrap()
}

#[test]
fn identical_draws_give_constant_elpd() {
    let ll = LogLikMatrix::new(200, 3, [-0.5, -1.0, -2.0].repeat(200)).unwrap();
    let rep = elpd_loo(&ll).unwrap();
    for (p, want) in rep.pointwise.iter().zip([-0.5, -1.0, -2.0]) {
        assert!((p - want).abs() < 1e-12);
    }
    assert!((rep.elpd_loo + 3.5).abs() < 1e-12);
    let want_se = (3.0 * variance(&[-0.5f64, -1.0, -2.0])).sqrt();
    assert!((rep.se - want_se).abs() < 1e-12);
    assert!(rep.p_loo.abs() < 1e-12);
}

#[test]
fn elpd_below_full_data_lpd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ll = random_ll(&mut rng, 400, 20);
    let rep = elpd_loo(&ll).unwrap();
    assert!(rep.elpd_loo <= rep.lpd + 1e-8);
}

#[test]
fn comparing_a_model_with_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rep = elpd_loo(&random_ll(&mut rng, 300, 10)).unwrap();
    assert_eq!(compare_pair(&rep, &rep).unwrap(), (0.0, 0.0));
    let other = elpd_loo(&random_ll(&mut rng, 300, 11)).unwrap();
    assert!(matches!(
        compare_pair(&rep, &other),
        Err(LooError::MismatchedObservations(10, 11))
    ));
}

#[test]
fn comparison_table_is_best_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let reps: Vec<(String, ElpdReport)> = (1..=4)
        .map(|i| (format!("M{i}"), elpd_loo(&random_ll(&mut rng, 200, 15)).unwrap()))
        .collect();
    let rows = compare(&reps).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!((rows[0].elpd_diff, rows[0].se_diff), (0.0, 0.0));
    for w in rows.windows(2) {
        assert!(w[0].elpd_loo >= w[1].elpd_loo);
    }
    for r in &rows[1..] {
        assert!(r.elpd_diff <= 0.0 && r.se_diff > 0.0);
    }
}

#[test]
fn binary_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ll = random_ll(&mut rng, 7, 5);
    let mut buf = vec![];
    ll.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..6], b"SAELL1");
    assert_eq!(buf.len(), 6 + 16 + 35 * 8);
    assert_eq!(LogLikMatrix::read_from(&buf[..]).unwrap(), ll);
    buf[0] = b'X';
    assert!(matches!(LogLikMatrix::read_from(&buf[..]), Err(LooError::BadMagic)));
}

#[test]
fn non_finite_entries_are_rejected() {
    assert!(matches!(
        LogLikMatrix::new(2, 2, vec![0.0, -1.0, f64::NEG_INFINITY, 0.0]),
        Err(LooError::NonFiniteEntry { draw: 1, obs: 0 })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weights_normalize_and_permute(seed in any::<u64>(), scale in 0.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..300).map(|_| scale * rng.random::<f64>().ln()).collect();
        let r = psis_smooth(&raw).unwrap();
        let total: f64 = r.log_weights.iter().map(|w| w.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(r.pareto_k.unwrap().is_finite());

        let mut perm: Vec<usize> = (0..300).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<f64> = perm.iter().map(|&i| raw[i]).collect();
        let s = psis_smooth(&shuffled).unwrap();
        prop_assert_eq!(s.pareto_k, r.pareto_k);
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((s.log_weights[j] - r.log_weights[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn elpd_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ll = random_ll(&mut rng, 150, 12);
        let mut perm: Vec<usize> = (0..12).collect();
        perm.shuffle(&mut rng);
        let v = (0..150)
            .flat_map(|r| perm.iter().map(|&k| ll.row(r)[k]).collect::<Vec<_>>())
            .collect();
        let permuted = LogLikMatrix::new(150, 12, v).unwrap();
        let a = elpd_loo(&ll).unwrap();
        let b = elpd_loo(&permuted).unwrap();
        for (j, &k) in perm.iter().enumerate() {
            prop_assert!((b.pointwise[j] - a.pointwise[k]).abs() < 1e-12);
        }
        prop_assert!((a.elpd_loo - b.elpd_loo).abs() < 1e-10);
        prop_assert!((a.se - b.se).abs() < 1e-10);
    }
}
