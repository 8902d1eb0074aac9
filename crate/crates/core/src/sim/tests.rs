use super::*;
use crate::data::DatasetPaths;
use crate::direct::direct_estimate;

fn flat_truth() -> Truth {
    Truth {
        alpha: vec![0.0; 8],
        beta: vec![0.0; 2],
        xi: vec![0.0; 2],
        lambda: 0.0,
        sigma_v: 0.0,
        ..Truth::default()
    }
}

fn small() -> SimConfig {
    SimConfig {
        m: 4,
        cell_count_min: 20,
        cell_count_max: 40,
        expected_total: 200.0,
        ..SimConfig::default()
    }
}

#[test]
fn flat_truth_gives_half() {
    let cfg = SimConfig {
        truth: flat_truth(),
        ..small()
    };
    let pop = gen_population(&cfg, &mut cfg.rng(0)).unwrap();
    for (a, &y) in pop.truth().iter().enumerate() {
        let n = pop.cells().total(a) as f64;
        assert!((y - 0.5).abs() < 4.0 * (0.25 / n).sqrt(), "{y}");
    }
}

#[test]
fn extreme_intercept_gives_near_zero() {
    let cfg = SimConfig {
        truth: Truth {
            alpha: vec![-10.0; 8],
            ..flat_truth()
        },
        ..small()
    };
    let pop = gen_population(&cfg, &mut cfg.rng(0)).unwrap();
    assert!(pop.truth().iter().all(|&y| y < 0.002));
}

#[test]
fn truth_is_exact_population_mean() {
    let cfg = small();
    let pop = gen_population(&cfg, &mut cfg.rng(3)).unwrap();
    for a in 0..cfg.m {
        let ys: Vec<bool> = pop.outcomes(a).collect();
        assert_eq!(ys.len() as u64, pop.cells().total(a));
        let want = ys.iter().filter(|&&y| y).count() as f64 / ys.len() as f64;
        assert_eq!(pop.truth()[a], want);
    }
    assert_eq!(pop.size() as u64, (0..cfg.m).map(|a| pop.cells().total(a)).sum::<u64>());
}

#[test]
fn replicates_are_reproducible_and_distinct() {
    let cfg = small();
    let (p1, s1) = simulate_replicate(&cfg, 2).unwrap();
    let (p2, s2) = simulate_replicate(&cfg, 2).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(p1.truth(), p2.truth());
    let (_, s3) = simulate_replicate(&cfg, 3).unwrap();
    assert_ne!(s1, s3);
}

#[test]
fn constant_propensity_gives_constant_weights() {
    let cfg = SimConfig {
        informativeness: 0.0,
        ..small()
    };
    let (_, s) = simulate_replicate(&cfg, 0).unwrap();
    for a in 0..s.m() {
        let w: Vec<f64> = s.records()[s.area_records(a)].iter().map(|r| r.weight).collect();
        assert!(w.windows(2).all(|p| p[0] == p[1]));
    }
}

#[test]
fn unsampled_area_stays_in_census() {
    let cfg = small();
    assert_eq!(cfg.targets()[0], 0.0);
    assert!((cfg.targets().iter().sum::<f64>() - 200.0).abs() < 1e-9);
    let (_, s) = simulate_replicate(&cfg, 0).unwrap();
    assert_eq!(s.n_i(0), 0);
    assert_eq!(s.cells().areas()[0], 1);
    assert!(s.records().iter().all(|r| r.area_id != 1));
}

#[test]
fn default_targets_spread_from_small_to_large() {
    let t = SimConfig::default().targets();
    assert_eq!(t.len(), 20);
    assert_eq!(t[0], 0.0);
    assert!(t[1] < 5.0 && t[19] > 150.0);
    assert!(t.windows(2).all(|p| p[0] < p[1]));
}

#[test]
fn empty_sample_is_an_error() {
    let cfg = SimConfig {
        sample_sizes: vec![0.0; 4],
        ..small()
    };
    assert!(matches!(simulate_replicate(&cfg, 0), Err(SimError::EmptySample)));
}

#[test]
fn weighting_removes_informative_bias() {
    let cfg = SimConfig {
        m: 1,
        sample_sizes: vec![400.0],
        informativeness: 1.0,
        truth: Truth {
            lambda: -1.0,
            ..flat_truth()
        },
        ..small()
    };
    let (mut unweighted, mut weighted) = (0.0, 0.0);
    let reps = 40;
    for rep in 0..reps {
        let (pop, s) = simulate_replicate(&cfg, rep).unwrap();
        let recs = s.records();
        let raw = recs.iter().filter(|r| r.y).count() as f64 / recs.len() as f64;
        let est = direct_estimate::<f64>(1, recs).unwrap().estimate.unwrap();
        unweighted += raw - pop.truth()[0];
        weighted += est - pop.truth()[0];
    }
    unweighted /= reps as f64;
    weighted /= reps as f64;
    assert!(unweighted > 0.03, "{unweighted}");
    assert!(weighted.abs() < unweighted / 3.0, "{weighted} vs {unweighted}");
}

#[test]
fn samples_round_trip_through_files() {
    let cfg = small();
    let (_, s) = simulate_replicate(&cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.write_dir(dir.path()).unwrap();
    let back = LinkedDataset::load(&DatasetPaths::in_dir(dir.path()), s.schema()).unwrap();
    assert_eq!(back, s);
}

#[test]
fn config_toml_round_trip_and_validation() {
    let cfg = SimConfig::default();
    assert_eq!(SimConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let partial = SimConfig::from_toml("m = 5\nreplicates = 2\n[truth]\nsigma_v = 0.2\n").unwrap();
    assert_eq!((partial.m, partial.truth.sigma_v), (5, 0.2));
    assert_eq!(partial.truth.alpha.len(), 8);
    for bad in [
        "m = 0",
        "sample_sizes = [1.0, 2.0]",
        "[truth]\nalpha = [1.0]",
        "[truth]\nbeta = [1.0]",
        "cell_count_min = 10\ncell_count_max = 5",
        "unknown_key = 1",
    ] {
        assert!(matches!(SimConfig::from_toml(bad), Err(SimError::Config(_))), "{bad}");
    }
}

fn injected(rep: usize, rng: &mut ChaCha8Rng) -> ReplicateResult {
    let truth: Vec<f64> = (0..10).map(|_| rng.random_range(0.3..0.7)).collect();
    let areas = truth
        .iter()
        .enumerate()
        .map(|(a, &t)| {
            let sd = 0.02;
            let centre = t + sd * rng.sample::<f64, _>(StandardNormal);
            AreaSummary {
                area_id: a as u32 + 1,
                n: 5 * a,
                mean: centre,
                sd,
                lower: centre - 1.959964 * sd,
                upper: centre + 1.959964 * sd,
                raw_mean: centre,
                direct: (a > 0).then_some(t),
                direct_se: (a > 0).then_some(0.1),
                se_ratio: (a > 0).then_some(0.1 / sd),
            }
        })
        .collect();
    ReplicateResult {
        replicate: rep,
        converged: true,
        truth,
        areas,
        shares: CoverageShares {
            area_id: (1..=10).collect(),
            a1: vec![0.5; 10],
            a2: vec![0.5; 10],
            residual: vec![0.0; 10],
        },
    }
}

#[test]
fn calibrated_posteriors_cover_at_nominal_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let results: Vec<ReplicateResult> = (0..400).map(|r| injected(r, &mut rng)).collect();
    let rep = evaluate_recovery(&results).unwrap();
    assert!((rep.coverage - 0.95).abs() < 0.015, "{}", rep.coverage);
    assert_eq!(rep.rows.len(), 4000);
    assert!(rep.mean_bias.abs() < 0.002);
    let names: Vec<&str> = rep.summaries.iter().map(|s| s.0.as_str()).collect();
    assert_eq!(names, ["direct", "direct_se", "hb", "hb_sd", "residual_share"]);
    assert_eq!(rep.ratio_bins[0].median_ratio, Some(5.0));
    assert_eq!(rep.ratio_bins[0].count, 2 * 400);
}

#[test]
fn too_few_replicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut results: Vec<ReplicateResult> = (0..30).map(|r| injected(r, &mut rng)).collect();
    assert!(evaluate_recovery(&results).is_ok());
    results[0].converged = false;
    assert!(matches!(
        evaluate_recovery(&results),
        Err(SimError::InsufficientReplicates(29))
    ));
}

#[test]
fn divergent_replicate_is_dropped_not_fatal() {
    let cfg = small();
    let model = ModelConfig::preset("M3").unwrap();
    let sampler = SamplerConfig {
        chains: 2,
        iterations: 300,
        warmup: 150,
        target_accept: 0.05,
        max_divergence_rate: 0.0,
        ..SamplerConfig::default()
    };
    let (_, res) = fit_replicate(&cfg, 0, &model, PriorConfig::default(), &sampler).unwrap();
    assert!(!res.converged);
    assert!(res.areas.is_empty());
    assert_eq!(res.truth.len(), cfg.m);
}
