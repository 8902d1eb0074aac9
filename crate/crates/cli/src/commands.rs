use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sae_core::aggregate::{coverage_shares, partition_cells, posterior_area_summary, Aggregator};
use sae_core::data::LinkedDataset;
use sae_core::direct::direct_table;
use sae_core::fit::{fit, RHAT_THRESHOLD};
use sae_core::loo::{compare, elpd_loo, pointwise_loglik, ElpdReport, LogLikMatrix};
use sae_core::model::{HierarchicalModel, PriorConfig};
use sae_core::report;
use sae_core::sampler::SamplerConfig;
use sae_core::sim::{evaluate_recovery, fit_replicate, simulate_replicate, SimConfig};

use crate::artifacts::{
    read_draws, write_atomic, write_csv, Manifest, CHAIN_STATS, CONFIG, DIAGNOSTICS, DRAWS, LOGLIK,
};
use crate::config::{ModelSection, RunConfig};
use crate::error::CliError;

fn load_dataset(cfg: &RunConfig) -> Result<LinkedDataset, CliError> {
    Ok(LinkedDataset::load(&cfg.dataset_paths()?, &cfg.data.schema)?)
}

fn output_dir(flag: Option<PathBuf>, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg.and_then(|c| c.output.clone()))
        .ok_or_else(|| CliError::Config("no output directory (use --out or `output`)".into()))
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let model = cfg.model.resolve()?;
    HierarchicalModel::<f64>::from_dataset(&data, &model, cfg.prior)?;
    cfg.sampler.validate()?;
    let shares = coverage_shares(data.cells(), &partition_cells(&data));
    let s = shares.summary();
    let unsampled = (0..data.m()).filter(|&a| data.n_i(a) == 0).count();
    println!("dataset checksum {}", data.checksum());
    println!(
        "{} records, {} areas ({} without sample), {} cells",
        data.n(),
        data.m(),
        unsampled,
        data.n_cells()
    );
    if data.cells().missing_filled() > 0 {
        println!("{} census cells absent and set to 0", data.cells().missing_filled());
    }
    println!(
        "unsampled-cell share: min {:.4} median {:.4} mean {:.4} max {:.4}",
        s.min, s.median, s.mean, s.max
    );
    println!("model {} is buildable; configuration is valid", cfg.model.label());
    Ok(())
}

pub fn direct(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let out = output_dir(out, Some(cfg))?;
    let rows = direct_table::<f64>(&data);
    write_csv(&out.join("direct_estimates.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["area", "n", "direct", "direct_se"])?;
        for r in &rows {
            let f = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
            w.write_record([r.area_id.to_string(), r.n.to_string(), f(r.estimate), f(r.se)])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn fit_cmd(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    let data = load_dataset(cfg)?;
    let model_cfg = cfg.model.resolve()?;
    log::info!(
        "fitting {} with {} chains x {} iterations ({} warmup)",
        cfg.model.label(),
        cfg.sampler.chains,
        cfg.sampler.iterations,
        cfg.sampler.warmup
    );
    let f = fit::<f64>(&data, &model_cfg, cfg.prior, &cfg.sampler)?;
    let ll = pointwise_loglik(&f.model, &f.draws)?;

    write_atomic(&out.join(CONFIG), cfg.snapshot().as_bytes())?;
    write_csv(&out.join(DRAWS), |b| report::write_draws(b, &f.draws))?;
    write_csv(&out.join(DIAGNOSTICS), |b| report::write_diagnostics(b, &f.diagnostics))?;
    write_csv(&out.join(CHAIN_STATS), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "chain", "step_size", "mean_accept_stat", "divergences", "mean_tree_depth", "leapfrog",
        ])?;
        for (c, s) in f.draws.stats().iter().enumerate() {
            w.write_record([
                c.to_string(),
                s.step_size.to_string(),
                s.mean_accept_stat.to_string(),
                s.divergences.to_string(),
                s.mean_tree_depth.to_string(),
                s.total_leapfrog.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut buf = vec![];
    ll.write_to(&mut buf)?;
    write_atomic(&out.join(LOGLIK), &buf)?;

    let nonconverged: Vec<String> = f.nonconverged().into_iter().map(str::to_string).collect();
    let manifest = Manifest {
        label: cfg.model.label(),
        dataset_checksum: data.checksum(),
        converged: nonconverged.is_empty(),
        max_rhat: f.diagnostics.max_rhat(),
        nonconverged,
        draws: f.draws.total(),
        observations: data.n(),
        divergences: f.draws.divergences(),
    };
    manifest.write(out)?;
    if !manifest.converged {
        let msg = format!(
            "R-hat >= {RHAT_THRESHOLD} for {} parameter(s): {}",
            manifest.nonconverged.len(),
            manifest.nonconverged.join(", ")
        );
        if cfg.allow_nonconverged {
            log::warn!("{msg}; continuing because non-converged fits are allowed");
        } else {
            return Err(CliError::Convergence(msg));
        }
    }
    Ok(manifest)
}

fn check_converged(m: &Manifest, dir: &Path, allow: bool) -> Result<(), CliError> {
    if m.converged || allow {
        return Ok(());
    }
    Err(CliError::Convergence(format!(
        "fit in {} did not converge (use --allow-nonconverged)",
        dir.display()
    )))
}

pub fn estimate(fit_dir: &Path, out: Option<PathBuf>, allow: bool) -> Result<(), CliError> {
    let manifest = Manifest::read(fit_dir)?;
    check_converged(&manifest, fit_dir, allow)?;
    let cfg = RunConfig::load(&fit_dir.join(CONFIG))?;
    let data = load_dataset(&cfg)?;
    if data.checksum() != manifest.dataset_checksum {
        return Err(CliError::Data(format!(
            "dataset changed since the fit in {}",
            fit_dir.display()
        )));
    }
    let model = HierarchicalModel::<f64>::from_dataset(&data, &cfg.model.resolve()?, cfg.prior)?;
    let draws = read_draws(&fit_dir.join(DRAWS))?;
    if draws.dim() != model.layout().dim() {
        return Err(CliError::Data("draws do not match the model dimension".into()));
    }
    let agg = Aggregator::new(&data);
    let post = agg
        .posterior(&model, &draws)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let direct = direct_table::<f64>(&data);
    let rows = posterior_area_summary(&post, &direct).map_err(|e| CliError::Data(e.to_string()))?;
    let out = out.unwrap_or_else(|| fit_dir.to_path_buf());
    write_csv(&out.join("area_estimates.csv"), |b| report::write_area_estimates(b, &rows))?;
    write_csv(&out.join("coverage_shares.csv"), |b| report::write_coverage_shares(b, agg.shares()))?;
    write_csv(&out.join("area_shares.csv"), |b| report::write_area_shares(b, agg.shares()))?;
    write_csv(&out.join("se_ratios.csv"), |b| report::write_se_ratios(b, &rows))?;
    println!("{} area estimates written to {}", rows.len(), out.display());
    Ok(())
}

pub fn compare_cmd(fits: &[PathBuf], out: &Path, allow: bool) -> Result<(), CliError> {
    if fits.len() < 2 {
        return Err(CliError::Config("compare needs at least two fit directories".into()));
    }
    let mut reports: Vec<(String, ElpdReport)> = vec![];
    let mut checksum: Option<String> = None;
    for dir in fits {
        let m = Manifest::read(dir)?;
        check_converged(&m, dir, allow)?;
        match &checksum {
            None => checksum = Some(m.dataset_checksum.clone()),
            Some(c) if *c != m.dataset_checksum => {
                return Err(CliError::Data(format!(
                    "{} was fitted to a different dataset",
                    dir.display()
                )))
            }
            _ => {}
        }
        let file = std::fs::File::open(dir.join(LOGLIK))?;
        let ll = LogLikMatrix::read_from(std::io::BufReader::new(file))?;
        let mut label = m.label.clone();
        if reports.iter().any(|(l, _)| *l == label) {
            label = format!("{label}@{}", dir.display());
        }
        reports.push((label, elpd_loo(&ll)?));
    }
    let rows = compare(&reports)?;
    write_csv(&out.join("loo_compare.csv"), |b| report::write_loo_compare(b, &rows))?;
    write_csv(&out.join("pareto_k.csv"), |b| report::write_pareto_k(b, &reports))?;
    println!("{:<12} {:>10} {:>10}", "model", "elpd_diff", "se_diff");
    for r in &rows {
        println!("{:<12} {:>10.1} {:>10.1}", r.model, r.elpd_diff, r.se_diff);
    }
    for (name, rep) in &reports {
        let bad = rep.flagged().len();
        if bad > 0 {
            log::warn!("{name}: {bad} observations with Pareto k above 0.7");
        }
    }
    Ok(())
}

/// Simulation file: `[sim]` harness settings plus the fit settings used on
/// every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimFile {
    pub sim: SimConfig,
    pub model: ModelSection,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
}

impl SimFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let f: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(f)
    }
}

pub fn simulate(file: &SimFile, out: &Path, datasets_only: bool) -> Result<(), CliError> {
    file.sim.validate()?;
    write_atomic(
        &out.join("sim.toml"),
        toml::to_string(file)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_bytes(),
    )?;
    let write_rep = |rep: usize, data: &LinkedDataset, truth: &[f64]| -> Result<(), CliError> {
        let dir = out.join(format!("replicate_{rep:03}"));
        std::fs::create_dir_all(&dir)?;
        data.write_dir(&dir)?;
        write_csv(&dir.join("truth.csv"), |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["area", "truth"])?;
            for (a, t) in data.cells().areas().iter().zip(truth) {
                w.write_record([a.to_string(), t.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })
    };
    if datasets_only {
        for rep in 0..file.sim.replicates {
            let (pop, data) = simulate_replicate(&file.sim, rep)?;
            write_rep(rep, &data, pop.truth())?;
        }
        println!("{} datasets written to {}", file.sim.replicates, out.display());
        return Ok(());
    }
    let model = file.model.resolve()?;
    file.sampler.validate()?;
    use rayon::prelude::*;
    let results = (0..file.sim.replicates)
        .into_par_iter()
        .map(|rep| {
            let (data, res) = fit_replicate(&file.sim, rep, &model, file.prior, &file.sampler)?;
            write_rep(rep, &data, &res.truth)?;
            Ok(res)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = evaluate_recovery(&results)?;
    write_csv(&out.join("recovery.csv"), |b| report::write_recovery(b, &report))?;
    write_csv(&out.join("recovery_summary.csv"), |b| report::write_recovery_summary(b, &report))?;
    write_csv(&out.join("recovery_tables.csv"), |b| {
        report::write_summary_table(b, &report.summaries)
    })?;
    println!(
        "{} replicates ({} dropped as non-converged): coverage {:.3}, mean bias {:+.4}",
        report.replicates_used, report.replicates_dropped, report.coverage, report.mean_bias
    );
    Ok(())
}
