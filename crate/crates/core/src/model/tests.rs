use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{link, AreaCovariateTable, CellFrame, CellSchema, CovariateTransform, SurveyRecord};

const ALL_COVS: [&str; 5] = [COMORBIDITY, FLU_SHOT, TEST_RATE, POSITIVITY, PCT_REPUBLICAN];

pub(crate) fn fixture(m: u32, n: usize, seed: u64) -> LinkedDataset {
    let schema = CellSchema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (1..=m)
        .map(|a| (a, (0..schema.n_cells()).map(|_| rng.random_range(1..50u64)).collect()))
        .collect();
    let cells = CellFrame::from_dense(schema.clone(), rows).unwrap();
    let cov_rows: BTreeMap<u32, Vec<f64>> = (1..=m)
        .map(|a| (a, (0..5).map(|_| rng.random_range(0.05..0.95)).collect()))
        .collect();
    let covs = AreaCovariateTable::new(
        ALL_COVS.iter().map(|s| s.to_string()).collect(),
        vec![
            CovariateTransform::Logit,
            CovariateTransform::Logit,
            CovariateTransform::Identity,
            CovariateTransform::Logit,
            CovariateTransform::Identity,
        ],
        cov_rows,
    )
    .unwrap();
    let records = (0..n)
        .map(|_| SurveyRecord {
            area_id: rng.random_range(1..=m),
            cell: schema.key(rng.random_range(0..schema.n_cells())),
            y: rng.random_bool(0.6),
            weight: rng.random_range(0.2..5.0),
        })
        .collect();
    link(records, cells, covs).unwrap()
}

fn model(data: &LinkedDataset, preset: &str) -> HierarchicalModel<f64> {
    HierarchicalModel::from_dataset(data, &ModelConfig::preset(preset).unwrap(), PriorConfig::default())
        .unwrap()
}

fn raw_model(data: &LinkedDataset, preset: &str) -> HierarchicalModel<f64> {
    let cfg = ModelConfig {
        standardize: false,
        ..ModelConfig::preset(preset).unwrap()
    };
    HierarchicalModel::from_dataset(data, &cfg, PriorConfig::default()).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
}

fn fd_check(m: &HierarchicalModel<f64>, p: &[f64]) {
    let mut g = vec![0.0; p.len()];
    m.log_posterior_grad(p, &mut g).unwrap();
    let h = 1e-5;
    let mut g2 = vec![0.0; p.len()];
    for i in 0..p.len() {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[i] += h;
        b[i] -= h;
        let fa = m.log_posterior_grad(&a, &mut g2).unwrap();
        let fb = m.log_posterior_grad(&b, &mut g2).unwrap();
        let fd = (fa - fb) / (2.0 * h);
        let err = (g[i] - fd).abs() / (1.0 + g[i].abs());
        assert!(err < 1e-5, "param {i}: analytic {} vs fd {fd} (err {err})", g[i]);
    }
}

#[test]
fn gradient_matches_finite_differences_for_all_presets() {
    let data = fixture(5, 120, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for preset in ["M1", "M2", "M3", "M4"] {
        let m = model(&data, preset);
        fd_check(&m, &vec![0.0; m.layout().dim()]);
        for _ in 0..20 {
            let p = random_point(&mut rng, m.layout().dim());
            fd_check(&m, &p);
        }
    }
}

#[test]
fn other_weight_transforms_have_correct_gradients() {
    let data = fixture(4, 60, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in [WeightTransform::Log, WeightTransform::Inverse] {
        let cfg = ModelConfig::preset("M3").unwrap().with_weight_transform(t);
        let m = HierarchicalModel::<f64>::from_dataset(&data, &cfg, PriorConfig::default()).unwrap();
        let p = random_point(&mut rng, m.layout().dim());
        fd_check(&m, &p);
    }
}

#[test]
fn linear_predictor_single_terms() {
    let data = fixture(3, 20, 5);
    let m = model(&data, "M3");
    let mut p = ParamVector::zeros(m.layout().clone());
    assert_eq!(m.linear_predictor(p.as_slice(), 0).unwrap(), 0.0);
    let idx = m.design().rows()[0].intercept;
    p.alpha_mut()[idx] = 1.5;
    assert_eq!(m.linear_predictor(p.as_slice(), 0).unwrap(), 1.5);
    p.alpha_mut()[idx] = -2.443;
    assert_eq!(m.linear_predictor(p.as_slice(), 0).unwrap(), -2.443);
    assert!(matches!(
        m.linear_predictor(&[0.0; 3], 0),
        Err(ModelError::DimensionMismatch { .. })
    ));
}

#[test]
fn linear_predictor_sums_all_blocks() {
    let data = fixture(3, 20, 6);
    let m = model(&data, "M3");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = ParamVector::from_values(m.layout().clone(), random_point(&mut rng, m.layout().dim())).unwrap();
    for (k, row) in m.design().rows().iter().enumerate() {
        let x = m.design().area_covariates(row.area);
        let want = p.alpha()[row.intercept]
            + p.beta()[0] * x[0]
            + p.beta()[1] * x[1]
            + row.age * p.xi()[row.gender]
            + p.v()[row.area]
            + p.lambda().unwrap() * row.hw.unwrap();
        assert!((m.linear_predictor(p.as_slice(), k).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn inv_link_properties() {
    assert_eq!(inv_link(0.0f64), 0.5);
    let t = inv_link(40.0f64);
    assert!(t.is_finite() && t <= 1.0 && t >= 1.0 - 1e-17);
    // 1 - 4.2483542552915890e-18 in high precision; f64 can only round it to 1.0
    assert!((t - (1.0 - 4.248_354_255_291_589e-18)).abs() <= f64::EPSILON);
    assert!(inv_link(-700.0f64) > 0.0 && inv_link(700.0f64) == 1.0);
    let mut prev = inv_link(-30.0f64);
    let mut eta = -30.0;
    while eta < 30.0 {
        eta += 0.37;
        let cur = inv_link(eta);
        assert!(cur > prev);
        assert!((cur + inv_link(-eta) - 1.0).abs() <= 1e-15);
        prev = cur;
    }
    assert!((inv_link(0.3f32) - 0.574_442_5).abs() < 1e-6);
}

#[test]
fn log_prior_at_origin_matches_closed_form() {
    let data = fixture(3, 30, 8);
    let m = model(&data, "M3");
    // 13 fixed coefficients, 3 area effects, sigma_v = 1; evaluated with mpmath at 40 digits
    let want = -36.351_500_745_562_796;
    let got = m.log_prior(&vec![0.0; m.layout().dim()]).unwrap();
    assert!((got - want).abs() < 1e-12, "{got}");
}

#[test]
fn log_prior_shape() {
    let data = fixture(3, 30, 9);
    let m = model(&data, "M3");
    let mut p = ParamVector::zeros(m.layout().clone());
    p.beta_mut()[0] = 0.7;
    let a = m.log_prior(p.as_slice()).unwrap();
    p.beta_mut()[0] = 1.4;
    assert!(m.log_prior(p.as_slice()).unwrap() < a);

    // v block equals the summed Normal(0, sigma_v) log density
    p.set_sigma_v(0.4);
    let base = m.log_prior(p.as_slice()).unwrap();
    let vs = [0.3, -0.2, 0.05];
    p.v_mut().copy_from_slice(&vs);
    let with_v = m.log_prior(p.as_slice()).unwrap();
    let normal = |x: f64, s: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - s.ln() - x * x / (2.0 * s * s);
    let expect: f64 = vs.iter().map(|&v| normal(v, 0.4) - normal(0.0, 0.4)).sum();
    assert!((with_v - base - expect).abs() < 1e-12);
}

#[test]
fn log_likelihood_closed_forms() {
    let data = fixture(2, 1, 10);
    let m = raw_model(&data, "M4");
    let zero = vec![0.0; m.layout().dim()];
    assert!((m.log_likelihood(&zero).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    assert_eq!(bernoulli_logit_lpmf(true, 800.0f64), -0.0);
    assert!(bernoulli_logit_lpmf(true, 40.0f64) <= 0.0);
    assert!(bernoulli_logit_lpmf(true, 40.0f64) > -1e-16);
    assert!(bernoulli_logit_lpmf(false, 800.0f64) == -800.0);
}

#[test]
fn log_likelihood_matches_brute_force_product() {
    let data = fixture(2, 3, 11);
    let m = raw_model(&data, "M3");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = random_point(&mut rng, m.layout().dim());
    let mut prod = 1.0f64;
    for (k, &y) in m.design().outcomes().iter().enumerate() {
        let eta = m.linear_predictor(&p, k).unwrap();
        let th = 1.0 / (1.0 + (-eta).exp());
        prod *= if y { th } else { 1.0 - th };
    }
    assert!((m.log_likelihood(&p).unwrap() - prod.ln()).abs() < 1e-12);
    let pw = m.pointwise_log_likelihood(&p).unwrap();
    assert_eq!(pw.len(), 3);
    let total = m.log_likelihood(&p).unwrap();
    assert!((pw.iter().sum::<f64>() - total).abs() <= 1e-10 * total.abs());
}

#[test]
fn empty_dataset_gradient_is_prior_gradient() {
    let data = fixture(3, 0, 13);
    let cfg = ModelConfig {
        standardize: true,
        ..ModelConfig::preset("M3").unwrap()
    };
    let m = HierarchicalModel::<f64>::from_dataset(&data, &cfg, PriorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = random_point(&mut rng, m.layout().dim());
    let mut g = vec![0.0; p.len()];
    let lp = m.log_posterior_grad(&p, &mut g).unwrap();
    assert_eq!(lp, m.log_prior(&p).unwrap());
    let tau2 = 25.0;
    for i in m.layout().fixed_effects() {
        assert!((g[i] + p[i] / tau2).abs() < 1e-14);
    }
    fd_check(&m, &p);
}

#[test]
fn area_effects_are_separable() {
    let data = fixture(4, 80, 15);
    let m = model(&data, "M3");
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let p = random_point(&mut rng, m.layout().dim());
    let before = m.pointwise_log_likelihood(&p).unwrap();
    let j = 2;
    let mut q = p.clone();
    q[m.layout().v().start + j] += 0.5;
    let after = m.pointwise_log_likelihood(&q).unwrap();
    for (k, row) in m.design().rows().iter().enumerate() {
        assert_eq!(row.area == j, before[k] != after[k], "record {k}");
    }
    // the prior changes only through the v_j term
    let s = ParamVector::from_values(m.layout().clone(), p.clone()).unwrap().sigma_v();
    let normal = |x: f64| -x * x / (2.0 * s * s);
    let vj = p[m.layout().v().start + j];
    let dp = m.log_prior(&q).unwrap() - m.log_prior(&p).unwrap();
    assert!((dp - (normal(vj + 0.5) - normal(vj))).abs() < 1e-12);
}

#[test]
fn dropping_weight_term_equals_frozen_lambda() {
    let data = fixture(4, 70, 17);
    let none = model(&data, "M4");
    let ident = model(&data, "M3");
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..5 {
        let p = random_point(&mut rng, none.layout().dim());
        let li = ident.layout().lambda_index().unwrap();
        let mut q = p.clone();
        q.insert(li, 0.0);
        let mut g1 = vec![0.0; p.len()];
        let mut g2 = vec![0.0; q.len()];
        let a = none.log_posterior_grad(&p, &mut g1).unwrap();
        let b = ident.log_posterior_grad(&q, &mut g2).unwrap();
        // the lambda prior contributes its own Normal(0, 5^2) density at 0
        let lambda_prior = -0.5 * (2.0 * std::f64::consts::PI).ln() - 5f64.ln();
        assert!((a + lambda_prior - b).abs() < 1e-10);
        g2.remove(li);
        for (x, y) in g1.iter().zip(&g2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn design_rows_follow_schema() {
    let data = fixture(3, 40, 19);
    let m = model(&data, "M3");
    let schema = data.schema();
    for (row, rec) in m.design().rows().iter().zip(data.records()) {
        assert_eq!(row.intercept, schema.intercept_index(rec.cell));
        assert_eq!(row.gender, rec.cell.gender as usize);
        assert!(row.hw.is_some());
    }
    assert!(model(&data, "M4").design().rows().iter().all(|r| r.hw.is_none()));

    // a male record contributes to the male slope only
    let k = data.records().iter().position(|r| r.cell.gender == 0).unwrap();
    let single = m.design().subset(&[k]);
    let m1 = m.with_design(single);
    let p = vec![0.0; m1.layout().dim()];
    let mut g = vec![0.0; p.len()];
    m1.log_posterior_grad(&p, &mut g).unwrap();
    let xi = m1.layout().xi();
    assert_eq!(g[xi.start + 1], 0.0);
    assert_ne!(g[xi.start], 0.0);
}

#[test]
fn constant_covariate_is_degenerate() {
    let data = fixture(1, 30, 20);
    let err = build_design::<f64>(&data, &ModelConfig::preset("M3").unwrap()).unwrap_err();
    assert_eq!(err, ModelError::DegenerateCovariate(COMORBIDITY.into()));
    let cfg = ModelConfig {
        standardize: false,
        ..ModelConfig::preset("M3").unwrap()
    };
    assert!(build_design::<f64>(&data, &cfg).is_ok());
    let cfg = ModelConfig {
        area_covariates: vec!["nope".into()],
        ..cfg
    };
    assert_eq!(
        build_design::<f64>(&data, &cfg).unwrap_err(),
        ModelError::UnknownCovariate("nope".into())
    );
}

#[test]
fn standardization_is_recorded() {
    let data = fixture(4, 200, 21);
    let m = model(&data, "M3");
    let names: Vec<&str> = m.design().standardization().iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, [COMORBIDITY, PCT_REPUBLICAN, "age", "h(w)"]);
    let ages: Vec<f64> = m.design().rows().iter().map(|r| r.age).collect();
    let mean = ages.iter().sum::<f64>() / ages.len() as f64;
    assert!(mean.abs() < 1e-12);
}

#[test]
fn f32_model_agrees_with_f64() {
    let data = fixture(3, 50, 22);
    let cfg = ModelConfig::preset("M3").unwrap();
    let m64 = HierarchicalModel::<f64>::from_dataset(&data, &cfg, PriorConfig::default()).unwrap();
    let m32 = HierarchicalModel::<f32>::from_dataset(&data, &cfg, PriorConfig::default()).unwrap();
    let p64 = vec![0.1f64; m64.layout().dim()];
    let p32 = vec![0.1f32; m32.layout().dim()];
    let a = m64.log_likelihood(&p64).unwrap();
    let b = m32.log_likelihood(&p32).unwrap() as f64;
    assert!((a - b).abs() < 1e-4 * a.abs());
}

#[test]
fn non_centred_gradient_and_jacobian() {
    let data = fixture(6, 150, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for preset in ["M1", "M3", "M4"] {
        let m = model(&data, preset);
        let nc = NonCentered::new(&m);
        let dim = m.layout().dim();
        for _ in 0..5 {
            let x = random_point(&mut rng, dim);
            let q = nc.to_centered(&x);
            let back = nc.from_centered(&q);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
            let mut g = vec![0.0; dim];
            let lp = nc.logp_grad(&x, &mut g).unwrap();
            let lq = m.log_posterior_grad(&q, &mut vec![0.0; dim]).unwrap();
            let ls = x[m.layout().log_sigma_v_index()];
            assert!((lp - (lq + 6.0 * ls)).abs() < 1e-9);
            let h = 1e-5;
            for i in 0..dim {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (nc.logp_grad(&a, &mut vec![0.0; dim]).unwrap()
                    - nc.logp_grad(&b, &mut vec![0.0; dim]).unwrap())
                    / (2.0 * h);
                assert!((g[i] - fd).abs() / (1.0 + g[i].abs()) < 1e-5, "{preset} {i}");
            }
        }
    }
}
