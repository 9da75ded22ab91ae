//! A miniature ablation grid: three difficulty sources crossed with three
//! schedulers, plus the no-curriculum baseline, each over two seeds.
//!
//! ```text
//! cargo run --release --example ablation
//! ```

use irtcl::crowd::{simulate_crowd, CrowdConfig};
use irtcl::curriculum::{corpus_counts, score_sentence_length, score_word_rarity, DifficultyTable};
use irtcl::report::{aggregate_runs, RunSummary};
use irtcl::student::{
    generate_benchmark, train_with_curriculum, BenchmarkConfig, SchedulerKind, StudentConfig,
};
use irtcl::vi::{extract_difficulties, fit_vi, FitConfig, HierarchicalPriorConfig};

fn main() -> irtcl::Result<()> {
    let (train, val) = generate_benchmark(&BenchmarkConfig {
        n_train: 2500,
        n_val: 700,
        noise_frac: 0.25,
        seed: 5,
        ..Default::default()
    })?;

    // one difficulty table per source, shared by all runs
    let matrix = simulate_crowd(&val, &train, &CrowdConfig { seed: 5, ..Default::default() })?;
    let posterior = fit_vi(
        &matrix,
        &HierarchicalPriorConfig::default(),
        &FitConfig { max_steps: 1200, seed: 5, ..Default::default() },
    )?;
    let texts = train.texts_by_item()?;
    let counts = corpus_counts(&texts);
    let tables: Vec<(&str, DifficultyTable)> = vec![
        ("irt_ac", extract_difficulties(&posterior)?),
        ("sentence_length", score_sentence_length(&texts)?.standardized()),
        ("word_rarity", score_word_rarity(&texts, &counts)?.standardized()),
    ];

    let schedulers = [
        SchedulerKind::DdsMae,
        SchedulerKind::CompetenceLinear,
        SchedulerKind::CompetenceRoot,
    ];
    let seeds = [0u64, 1];

    let mut runs = Vec::new();
    for (dm, table) in &tables {
        for &scheduler in &schedulers {
            for &seed in &seeds {
                let scfg = StudentConfig { scheduler, seed, ..Default::default() };
                let (_, trace) = train_with_curriculum(
                    &train,
                    &val,
                    Some(table),
                    &scfg,
                    &Default::default(),
                    None,
                )?;
                let id = format!("{dm}-{}-s{seed}", scheduler.as_str());
                runs.push(RunSummary::from_trace(id, scheduler.as_str(), dm, seed, &trace)?);
            }
        }
    }
    for &seed in &seeds {
        let scfg = StudentConfig { scheduler: SchedulerKind::None, seed, ..Default::default() };
        let (_, trace) =
            train_with_curriculum(&train, &val, None, &scfg, &Default::default(), None)?;
        runs.push(RunSummary::from_trace(
            format!("none-none-s{seed}"),
            "none",
            "none",
            seed,
            &trace,
        )?);
    }

    println!(" scheduler           source            mean acc   sd       best@");
    for row in aggregate_runs(&runs) {
        println!(
            " {:<18} {:<16} {:.4}    {:.4}   {:>4.1}",
            row.scheduler, row.dm, row.mean_best_val_acc, row.std_best_val_acc, row.mean_best_epoch
        );
    }
    Ok(())
}
