use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sae_core::loo::LogLikMatrix;

fn demo_data() -> PathBuf {
    std::path::absolute(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo/data")).unwrap()
}

fn sae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sae")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn write_config(dir: &Path, data: &Path, sampler: &str, extra: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{extra}[data]\ndir = {data:?}\n[sampler]\n{sampler}")).unwrap();
    p.to_string_lossy().into_owned()
}

const QUICK: &str = "chains = 2\niterations = 400\nwarmup = 200\nseed = 5\n";

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn fit_estimate_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &demo_data(), QUICK, "allow_nonconverged = true\n");
    let (m3, m4) = (tmp.path().join("m3"), tmp.path().join("m4"));
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--out", &s(&m3)])), 0);
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--model", "m4", "--out", &s(&m4)])), 0);
    for f in ["config.toml", "manifest.toml", "draws.csv", "diagnostics.csv", "loglik.bin", "chain_stats.csv"] {
        assert!(m3.join(f).is_file(), "{f}");
    }
    let ll = LogLikMatrix::read_from(std::fs::File::open(m3.join("loglik.bin")).unwrap()).unwrap();
    assert_eq!((ll.draws(), ll.obs()), (400, 1014));
    let manifest = std::fs::read_to_string(m3.join("manifest.toml")).unwrap();
    assert!(manifest.contains("label = \"M3\"") && manifest.contains("draws = 400"));
    let header = std::fs::read_to_string(m3.join("diagnostics.csv")).unwrap();
    assert!(header.starts_with("param,mean,se_mean,sd,10%,15%,85%,90%,n_eff,Rhat\n"));

    let est = tmp.path().join("est");
    let o = sae(&["estimate", "--fit", &s(&m3), "--out", &s(&est), "--allow-nonconverged"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let areas = std::fs::read_to_string(est.join("area_estimates.csv")).unwrap();
    assert_eq!(areas.lines().count(), 21);
    assert!(areas.starts_with("area,n,hb_estimate,sd,lower_95,upper_95,hb_unnormalized,direct,direct_se\n"));
    // area 1 has no sample: direct columns are NA, the model estimate is not
    let first: Vec<&str> = areas.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((first[0], first[1], first[7], first[8]), ("1", "0", "NA", "NA"));
    assert!(first[2].parse::<f64>().unwrap() > 0.0);
    for f in ["coverage_shares.csv", "area_shares.csv", "se_ratios.csv"] {
        assert!(est.join(f).is_file(), "{f}");
    }

    let cmp = tmp.path().join("cmp");
    let o = sae(&["compare", &s(&m3), &s(&m4), "--out", &s(&cmp), "--allow-nonconverged"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(cmp.join("loo_compare.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "model,elpd_diff,se_diff");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].ends_with(",0,0"));
    let k = std::fs::read_to_string(cmp.join("pareto_k.csv")).unwrap();
    assert_eq!(k.lines().count(), 1 + 2 * 1014);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), &demo_data(), "chain = 2\n", "");
    assert_eq!(code(&sae(&["validate", "--config", &bad])), 2);
    let cfg = write_config(tmp.path(), &demo_data(), QUICK, "");
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--model", "M9", "--out", "x"])), 2);
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--weight-transform", "sqrt", "--out", "x"])), 2);
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--warmup", "500", "--out", "x"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_sae"))
        .args(["validate", "--config", &cfg])
        .env("SAE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&sae(&["validate", "--config", &s(&tmp.path().join("missing.toml"))])), 2);
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &tmp.path().join("nowhere"), QUICK, "");
    assert_eq!(code(&sae(&["validate", "--config", &cfg])), 3);

    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    for f in ["census.csv", "area_covariates.csv", "area_covariates.toml"] {
        std::fs::copy(demo_data().join(f), data.join(f)).unwrap();
    }
    let survey = std::fs::read_to_string(demo_data().join("survey.csv")).unwrap();
    std::fs::write(data.join("survey.csv"), survey.replacen(",White,", ",Martian,", 1)).unwrap();
    let cfg = write_config(tmp.path(), &data, QUICK, "");
    let o = sae(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn nonconverged_fits_exit_4_and_are_refused_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let short = "chains = 4\niterations = 60\nwarmup = 30\nseed = 1\n";
    let cfg = write_config(tmp.path(), &demo_data(), short, "");
    let out = tmp.path().join("fit");
    let o = sae(&["fit", "--config", &cfg, "--out", &s(&out)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    // artifacts are still written so the failure can be inspected
    assert!(std::fs::read_to_string(out.join("manifest.toml")).unwrap().contains("converged = false"));
    assert_eq!(code(&sae(&["estimate", "--fit", &s(&out)])), 4);
    assert_eq!(code(&sae(&["estimate", "--fit", &s(&out), "--allow-nonconverged"])), 0);
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--out", &s(&out), "--allow-nonconverged"])), 0);
}

#[test]
fn changed_data_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    for f in ["survey.csv", "census.csv", "area_covariates.csv", "area_covariates.toml"] {
        std::fs::copy(demo_data().join(f), data.join(f)).unwrap();
    }
    let cfg = write_config(tmp.path(), &data, QUICK, "allow_nonconverged = true\n");
    let a = tmp.path().join("a");
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--out", &s(&a)])), 0);

    let census = std::fs::read_to_string(data.join("census.csv")).unwrap();
    let mut lines: Vec<String> = census.lines().map(String::from).collect();
    let last = lines.last_mut().unwrap();
    let (head, count) = last.rsplit_once(',').unwrap();
    *last = format!("{head},{}", count.parse::<u64>().unwrap() + 1);
    std::fs::write(data.join("census.csv"), lines.join("\n") + "\n").unwrap();

    assert_eq!(code(&sae(&["estimate", "--fit", &s(&a), "--allow-nonconverged"])), 3);
    let b = tmp.path().join("b");
    assert_eq!(code(&sae(&["fit", "--config", &cfg, "--out", &s(&b)])), 0);
    let o = sae(&["compare", &s(&a), &s(&b), "--out", &s(&tmp.path().join("c")), "--allow-nonconverged"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn direct_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &demo_data(), QUICK, "");
    let o = sae(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("1014 records, 20 areas (1 without sample), 112 cells"), "{text}");
    let out = tmp.path().join("d");
    assert_eq!(code(&sae(&["direct", "--config", &cfg, "--out", &s(&out)])), 0);
    let t = std::fs::read_to_string(out.join("direct_estimates.csv")).unwrap();
    assert_eq!(t.lines().next(), Some("area,n,direct,direct_se"));
    assert_eq!(t.lines().nth(1), Some("1,0,NA,NA"));
}

#[test]
fn simulate_datasets_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = sae(&["simulate", "--reps", "2", "--seed", "3", "--datasets-only", "--out", &s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in ["replicate_000", "replicate_001"] {
        for f in ["survey.csv", "census.csv", "area_covariates.csv", "truth.csv"] {
            assert!(out.join(r).join(f).is_file(), "{r}/{f}");
        }
    }
    let snap = std::fs::read_to_string(out.join("sim.toml")).unwrap();
    assert!(snap.contains("replicates = 2") && snap.contains("seed = 3"), "{snap}");
    assert_eq!(code(&sae(&["simulate", "--reps", "0", "--out", &s(&out)])), 2);
}
