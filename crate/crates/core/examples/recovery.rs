//! Runs the default recovery study and prints the pooled summary.
//!
//! cargo run --release -p sae-core --example recovery [replicates]

use std::time::Instant;

use sae_core::model::{ModelConfig, PriorConfig};
use sae_core::sampler::SamplerConfig;
use sae_core::sim::{evaluate_recovery, run_study, SimConfig};

fn main() {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let cfg = SimConfig {
        replicates: reps,
        ..SimConfig::default()
    };
    let sampler = SamplerConfig {
        iterations: 1000,
        warmup: 500,
        ..SamplerConfig::default()
    };
    let start = Instant::now();
    let results = run_study(&cfg, &ModelConfig::preset("M3").unwrap(), PriorConfig::default(), &sampler)
        .expect("study runs");
    let fits: Vec<_> = results.into_iter().map(|(_, r)| r).collect();
    let report = evaluate_recovery(&fits).expect("enough replicates");
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    println!(
        "replicates used {} dropped {}",
        report.replicates_used, report.replicates_dropped
    );
    println!("coverage {:.4}", report.coverage);
    println!(
        "bias {:.4}  |bias| {:.4}  rmse hb {:.4}  rmse direct {:?}",
        report.mean_bias, report.mean_abs_bias, report.rmse_hb, report.rmse_direct
    );
    for b in &report.ratio_bins {
        println!("n {}..{:?}: count {} median ratio {:?}", b.n_min, b.n_max, b.count, b.median_ratio);
    }
    for (name, s) in &report.summaries {
        println!("{name:>15}: {:?}", s.values());
    }
    let mut by_area = std::collections::BTreeMap::new();
    for r in &report.rows {
        let e = by_area.entry(r.area_id).or_insert((0usize, 0usize, 0.0, 0.0));
        e.0 += 1;
        e.1 += r.covered as usize;
        e.2 += r.hb - r.truth;
        e.3 += r.hb_sd;
    }
    for (a, (n, c, b, sd)) in by_area {
        println!("area {a:>2}: coverage {:.2} bias {:+.4} sd {:.4}", c as f64 / n as f64, b / n as f64, sd / n as f64);
    }
}
