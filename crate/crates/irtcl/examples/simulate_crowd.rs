//! Simulate an artificial crowd: a population of weak, diverse classifiers
//! answers every training item, and the graded answers become the raw
//! material for difficulty measurement.
//!
//! ```text
//! cargo run --release --example simulate_crowd
//! ```

use irtcl::crowd::{simulate_crowd, CrowdConfig};
use irtcl::student::{generate_benchmark, BenchmarkConfig};

fn main() -> irtcl::Result<()> {
    let (train, val) = generate_benchmark(&BenchmarkConfig {
        n_train: 2000,
        n_val: 600,
        noise_frac: 0.25,
        seed: 3,
        ..Default::default()
    })?;

    let cfg = CrowdConfig {
        n_base_learners: 8,
        variant_epochs: vec![1, 3, 5],
        subsample_fracs: vec![0.5],
        label_flip_probs: vec![0.1],
        seed: 3,
    };
    // members train on the held-out pool and answer the training items
    let matrix = simulate_crowd(&val, &train, &cfg)?;
    println!(
        "{} members answered {} items each\n",
        matrix.n_subjects(),
        matrix.n_items()
    );

    // Per-member accuracy: the variant dimensions (epochs, model family,
    // feature slice) spread the crowd across skill levels.
    println!(" member                      accuracy");
    let mut per_subject = vec![(0u64, 0u64); matrix.n_subjects()];
    for (s, _, z) in matrix.triplets() {
        per_subject[*s as usize].0 += u64::from(*z);
        per_subject[*s as usize].1 += 1;
    }
    for (subject, (hits, total)) in matrix.subjects().iter().zip(&per_subject) {
        println!(" {:<26} {:.3}", subject.as_str(), *hits as f64 / *total as f64);
    }

    // Items nobody solves are exactly the ones that deserve a high fitted
    // difficulty: most are the benchmark's deliberately flipped labels.
    let mut per_item = vec![0u64; matrix.n_items()];
    for (_, i, z) in matrix.triplets() {
        per_item[*i as usize] += u64::from(*z);
    }
    let n_subjects = matrix.n_subjects() as u64;
    let unsolved = per_item.iter().filter(|&&hits| hits == 0).count();
    let unanimous = per_item.iter().filter(|&&hits| hits == n_subjects).count();
    println!("\nitems no member solved:    {unsolved:>5}");
    println!("items every member solved: {unanimous:>5}");
    Ok(())
}
