//! Plot-ready CSV tables. Undefined values are written as `NA`.

use std::io::Write;

use crate::aggregate::{AreaSummary, CoverageShares, SummaryStats};
use crate::diagnostics::DiagnosticsTable;
use crate::loo::{CompareRow, ElpdReport, K_THRESHOLD};
use crate::sampler::DrawsMatrix;
use crate::scalar::Real;
use crate::sim::RecoveryReport;

pub type CsvResult = Result<(), csv::Error>;

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

/// Retained draws, one row per draw: `chain, iteration, <parameters>`.
pub fn write_draws<T: Real, W: Write>(w: W, draws: &DrawsMatrix<T>) -> CsvResult {
    let mut out = writer(w);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.names().iter().cloned());
    out.write_record(&header)?;
    for c in 0..draws.chains() {
        for i in 0..draws.draws_per_chain() {
            let mut row = vec![c.to_string(), i.to_string()];
            row.extend(draws.draw(c, i).iter().map(|v| num(v.as_f64())));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_diagnostics<T: Real, W: Write>(w: W, table: &DiagnosticsTable<T>) -> CsvResult {
    let mut out = writer(w);
    out.write_record(table.header())?;
    for r in &table.rows {
        let mut row = vec![
            r.name.clone(),
            num(r.mean.as_f64()),
            opt(r.se_mean.map(|x| x.as_f64())),
            num(r.sd.as_f64()),
        ];
        row.extend(r.quantiles.iter().map(|q| num(q.as_f64())));
        row.push(opt(r.n_eff.map(|x| x.as_f64())));
        row.push(opt(r.rhat.map(|x| x.as_f64())));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// HB estimates beside the direct estimates, with 95% credible intervals.
pub fn write_area_estimates<W: Write>(w: W, rows: &[AreaSummary]) -> CsvResult {
    let mut out = writer(w);
    out.write_record([
        "area", "n", "hb_estimate", "sd", "lower_95", "upper_95", "hb_unnormalized", "direct",
        "direct_se",
    ])?;
    for r in rows {
        out.write_record([
            r.area_id.to_string(),
            r.n.to_string(),
            num(r.mean),
            num(r.sd),
            num(r.lower),
            num(r.upper),
            num(r.raw_mean),
            opt(r.direct),
            opt(r.direct_se),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Direct standard error over posterior sd, by area sample size.
pub fn write_se_ratios<W: Write>(w: W, rows: &[AreaSummary]) -> CsvResult {
    let mut out = writer(w);
    out.write_record(["area", "n", "direct_se", "hb_sd", "ratio"])?;
    for r in rows {
        out.write_record([
            r.area_id.to_string(),
            r.n.to_string(),
            opt(r.direct_se),
            num(r.sd),
            opt(r.se_ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn summary_header() -> Vec<&'static str> {
    let mut h = vec!["quantity"];
    h.extend(SummaryStats::LABELS);
    h
}

fn summary_row(name: &str, s: &SummaryStats) -> Vec<String> {
    let mut row = vec![name.to_string()];
    row.extend(s.values().iter().map(|&v| num(v)));
    row
}

/// Summary of the unsampled-cell share across areas, then per-area shares.
pub fn write_coverage_shares<W: Write>(w: W, shares: &CoverageShares) -> CsvResult {
    let mut out = writer(w);
    out.write_record(summary_header())?;
    out.write_record(summary_row("residual_share", &shares.summary()))?;
    out.flush()?;
    Ok(())
}

pub fn write_area_shares<W: Write>(w: W, shares: &CoverageShares) -> CsvResult {
    let mut out = writer(w);
    out.write_record(["area", "a1", "a2", "residual"])?;
    for i in 0..shares.area_id.len() {
        out.write_record([
            shares.area_id[i].to_string(),
            num(shares.a1[i]),
            num(shares.a2[i]),
            num(shares.residual[i]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_loo_compare<W: Write>(w: W, rows: &[CompareRow]) -> CsvResult {
    let mut out = writer(w);
    out.write_record(["model", "elpd_diff", "se_diff"])?;
    for r in rows {
        out.write_record([r.model.clone(), num(r.elpd_diff), num(r.se_diff)])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-observation Pareto shape for every model.
pub fn write_pareto_k<W: Write>(w: W, models: &[(String, ElpdReport)]) -> CsvResult {
    let mut out = writer(w);
    out.write_record(["model", "observation", "pareto_k", "flagged"])?;
    for (name, rep) in models {
        for (i, k) in rep.pareto_k.iter().enumerate() {
            let flagged = k.is_some_and(|k| !(k <= K_THRESHOLD));
            out.write_record([
                name.clone(),
                i.to_string(),
                opt(*k),
                flagged.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per area and replicate.
pub fn write_recovery<W: Write>(w: W, report: &RecoveryReport) -> CsvResult {
    let mut out = writer(w);
    out.write_record([
        "replicate", "area", "n", "truth", "hb", "hb_sd", "lower_95", "upper_95", "covered",
        "direct", "direct_se", "se_ratio",
    ])?;
    for r in &report.rows {
        out.write_record([
            r.replicate.to_string(),
            r.area_id.to_string(),
            r.n.to_string(),
            num(r.truth),
            num(r.hb),
            num(r.hb_sd),
            num(r.lower),
            num(r.upper),
            r.covered.to_string(),
            opt(r.direct),
            opt(r.direct_se),
            opt(r.se_ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Pooled metrics, standard-error ratio bands and summary statistics.
pub fn write_recovery_summary<W: Write>(w: W, report: &RecoveryReport) -> CsvResult {
    let mut out = writer(w);
    out.write_record(["metric", "value"])?;
    for (k, v) in [
        ("replicates_used", report.replicates_used as f64),
        ("replicates_dropped", report.replicates_dropped as f64),
        ("coverage_95", report.coverage),
        ("mean_bias", report.mean_bias),
        ("mean_abs_bias", report.mean_abs_bias),
        ("rmse_hb", report.rmse_hb),
    ] {
        out.write_record([k.to_string(), num(v)])?;
    }
    out.write_record(["rmse_direct".to_string(), opt(report.rmse_direct)])?;
    for b in &report.ratio_bins {
        let band = match b.n_max {
            Some(h) => format!("{}-{}", b.n_min, h),
            None => format!("{}+", b.n_min),
        };
        out.write_record([format!("median_se_ratio_n{band}"), opt(b.median_ratio)])?;
        out.write_record([format!("count_n{band}"), b.count.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_table<W: Write>(w: W, rows: &[(String, SummaryStats)]) -> CsvResult {
    let mut out = writer(w);
    out.write_record(summary_header())?;
    for (name, s) in rows {
        out.write_record(summary_row(name, s))?;
    }
    out.flush()?;
    Ok(())
}
