//! Render the three report plots — convergence with data usage, difficulty
//! histogram, and per-subject accuracy by difficulty bin — into
//! `target/example-report/`.
//!
//! ```text
//! cargo run --release --example report_svg
//! ```

use irtcl::crowd::{accuracy_by_difficulty_bin, simulate_crowd, CrowdConfig, DEFAULT_BIN_EDGES};
use irtcl::report::{difficulty_histogram, plot_bin_accuracy, plot_convergence, plot_difficulty_histogram};
use irtcl::student::{
    generate_benchmark, train_with_curriculum, BenchmarkConfig, SchedulerKind, StudentConfig,
};
use irtcl::vi::{extract_difficulties, fit_vi, FitConfig, HierarchicalPriorConfig};

fn main() -> irtcl::Result<()> {
    let out = std::path::Path::new("target/example-report");

    let (train, val) = generate_benchmark(&BenchmarkConfig {
        n_train: 2000,
        n_val: 600,
        noise_frac: 0.25,
        seed: 2,
        ..Default::default()
    })?;
    let matrix = simulate_crowd(&val, &train, &CrowdConfig { seed: 2, ..Default::default() })?;
    let posterior = fit_vi(
        &matrix,
        &HierarchicalPriorConfig::default(),
        &FitConfig { max_steps: 1000, seed: 2, ..Default::default() },
    )?;
    let table = extract_difficulties(&posterior)?;

    // difficulty histogram
    let hist = difficulty_histogram(&table, 0.5)?;
    plot_difficulty_histogram(&hist, &out.join("difficulty_hist.svg"))?;
    println!(
        "difficulty over {} items: mean {:+.3}, std {:.3}, skewness {:+.3}",
        hist.n, hist.mean, hist.std, hist.skewness
    );

    // accuracy by difficulty bin: harder bins should be answered worse
    let bins = accuracy_by_difficulty_bin(&matrix, &table, &DEFAULT_BIN_EDGES)?;
    plot_bin_accuracy(&bins, &out.join("bin_accuracy.svg"))?;

    // convergence of two schedulers on the same data and seed
    let mut traces = Vec::new();
    for scheduler in [SchedulerKind::DdsMae, SchedulerKind::None] {
        let scfg = StudentConfig { scheduler, seed: 2, ..Default::default() };
        let (_, trace) = train_with_curriculum(
            &train,
            &val,
            Some(&table),
            &scfg,
            &Default::default(),
            None,
        )?;
        traces.push((scheduler.as_str().to_string(), trace));
    }
    let refs: Vec<(String, &irtcl::student::CurriculumTrace)> =
        traces.iter().map(|(l, t)| (l.clone(), t)).collect();
    plot_convergence(&refs, &out.join("convergence.svg"))?;

    println!("wrote three SVGs to {}", out.display());
    Ok(())
}
