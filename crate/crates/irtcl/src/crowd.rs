//! Artificial crowds.
//!
//! Item difficulties come from graded responses, and someone has to produce
//! those responses. [`simulate_crowd`] builds a population of deliberately
//! weak, diverse learners — varying training epochs, feature subsets,
//! subsampled rows, label corruption, and model family — trains each on a
//! held-out pool, then grades their predictions on the items of interest.
//! The result is a [`ResponseMatrix`] ready for fitting.
//!
//! [`ingest_predictions`] is the escape hatch for real crowds: graded 0/1
//! responses pass straight through, and raw predicted labels are graded
//! against a gold label file.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::DifficultyTable;
use crate::error::{Error, Result};
use crate::io;
use crate::irt::{csv_error, ItemId, ResponseMatrix, SubjectId};
use crate::student::{Classifier, LabeledDataset, ModelKind, Optimizer, StudentConfig};

/// Shape of the simulated crowd. The population is the cross product of
/// base learners, per-variant epoch budgets, training subsample fractions
/// and label corruption rates, so its size is
/// `n_base_learners * variant_epochs.len() * subsample_fracs.len() *
/// label_flip_probs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrowdConfig {
    pub n_base_learners: usize,
    pub variant_epochs: Vec<usize>,
    pub subsample_fracs: Vec<f64>,
    pub label_flip_probs: Vec<f64>,
    pub seed: u64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            n_base_learners: 10,
            variant_epochs: vec![1, 3, 5],
            subsample_fracs: vec![0.5],
            label_flip_probs: vec![0.1],
            seed: 0,
        }
    }
}

impl CrowdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_base_learners == 0 {
            return Err(Error::InvalidInput("crowd.n_base_learners must be >= 1".into()));
        }
        if self.variant_epochs.is_empty() || self.variant_epochs.contains(&0) {
            return Err(Error::InvalidInput(
                "crowd.variant_epochs must be non-empty positive integers".into(),
            ));
        }
        if self.subsample_fracs.is_empty()
            || self.subsample_fracs.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(Error::InvalidInput(
                "crowd.subsample_fracs must be non-empty fractions in (0, 1]".into(),
            ));
        }
        if self.label_flip_probs.is_empty()
            || self.label_flip_probs.iter().any(|p| !(*p >= 0.0 && *p < 1.0))
        {
            return Err(Error::InvalidInput(
                "crowd.label_flip_probs must be non-empty probabilities in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn n_members(&self) -> usize {
        self.n_base_learners
            * self.variant_epochs.len()
            * self.subsample_fracs.len()
            * self.label_flip_probs.len()
    }
}

struct MemberSpec {
    subject: SubjectId,
    learner: usize,
    epochs: usize,
    frac: f64,
    flip: f64,
    seed: u64,
}

/// Train every crowd member on `pool` and grade its predictions on
/// `graded`. Returns one row per (member, graded item) with `1` where the
/// member's predicted label matched the gold label.
///
/// Members are perturbed copies of two weak model families: even-numbered
/// base learners are linear, odd ones get a small hidden layer, and each
/// learner sees a different random slice of the feature columns whose size
/// ramps with the learner index. Everything is seeded per member, so the
/// same config and datasets reproduce the same matrix, and members run in
/// parallel.
pub fn simulate_crowd(
    pool: &LabeledDataset,
    graded: &LabeledDataset,
    cfg: &CrowdConfig,
) -> Result<ResponseMatrix> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::InvalidInput("crowd training pool is empty".into()));
    }
    if graded.is_empty() {
        return Err(Error::InvalidInput("no items to grade".into()));
    }
    if pool.classes().len() < 2 {
        return Err(Error::InvalidInput(
            "crowd training pool has a single class; members would be degenerate".into(),
        ));
    }
    if pool.n_features() != graded.n_features() {
        return Err(Error::InvalidInput(format!(
            "pool has {} features but graded split has {}",
            pool.n_features(),
            graded.n_features()
        )));
    }

    let mut specs = Vec::with_capacity(cfg.n_members());
    for learner in 0..cfg.n_base_learners {
        for &epochs in &cfg.variant_epochs {
            for &frac in &cfg.subsample_fracs {
                for &flip in &cfg.label_flip_probs {
                    let combo = specs.len() as u64;
                    specs.push(MemberSpec {
                        subject: SubjectId::new(format!(
                            "ac-l{learner:02}-e{epochs}-s{frac:.2}-f{flip:.2}"
                        ))?,
                        learner,
                        epochs,
                        frac,
                        flip,
                        seed: cfg
                            .seed
                            .wrapping_add((combo + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
                    });
                }
            }
        }
    }

    let rows: Vec<(SubjectId, Vec<u8>)> = specs
        .par_iter()
        .map(|spec| run_member(spec, cfg.n_base_learners, pool, graded).map(|z| (spec.subject.clone(), z)))
        .collect::<Result<_>>()?;

    let mut matrix = ResponseMatrix::new();
    for (subject, responses) in rows {
        for (item, z) in graded.items().iter().zip(responses) {
            matrix.push(subject.clone(), item.clone(), z)?;
        }
    }
    log::info!(
        "simulated crowd: {} members x {} items",
        cfg.n_members(),
        graded.len()
    );
    Ok(matrix)
}

fn run_member(
    spec: &MemberSpec,
    n_base: usize,
    pool: &LabeledDataset,
    graded: &LabeledDataset,
) -> Result<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // feature slice: later learners see more columns
    let d = pool.n_features();
    let ramp = 0.4 + 0.6 * (spec.learner + 1) as f64 / n_base as f64;
    let d_keep = ((d as f64 * ramp).ceil() as usize).clamp(2.min(d), d);
    let mut cols = rand::seq::index::sample(&mut rng, d, d_keep).into_vec();
    cols.sort_unstable();

    // row subsample
    let k = ((pool.len() as f64 * spec.frac).ceil() as usize).clamp(1, pool.len());
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    let subset = pool.subset(&picked)?.project_features(&cols)?;

    // label corruption: flip to a uniformly random other class
    let classes = pool.classes();
    let labels: Vec<String> = (0..subset.len())
        .map(|row| {
            let own = subset.label_name(row);
            if should_flip(&mut rng, spec.flip) {
                let others: Vec<&String> = classes.iter().filter(|c| c != &own).collect();
                others[rng.random_range(0..others.len())].clone()
            } else {
                own.to_string()
            }
        })
        .collect();
    let train_data = subset.with_labels(labels)?;

    let kind = if spec.learner.is_multiple_of(2) {
        ModelKind::Logistic
    } else {
        ModelKind::Mlp { hidden: 8 }
    };
    let scfg = StudentConfig { model: kind, lr: 0.3, ..Default::default() };
    let mut model = Classifier::new(kind, d_keep, train_data.classes().to_vec(), &mut rng)?;
    let mut opt = Optimizer::new(model.weights().len(), &scfg);
    let all: Vec<usize> = (0..train_data.len()).collect();
    for _ in 0..spec.epochs {
        model.train_one_epoch(&train_data, &all, scfg.batch_size, &mut opt, &mut rng)?;
    }

    let graded_proj = graded.project_features(&cols)?;
    let preds = model.predict(&graded_proj)?;
    Ok(preds
        .iter()
        .enumerate()
        .map(|(row, p)| u8::from(p.as_str() == graded.label_name(row)))
        .collect())
}

fn should_flip(rng: &mut ChaCha8Rng, p: f64) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}

/// Read externally produced crowd responses.
///
/// Two layouts are accepted, distinguished by the header. Already-graded
/// responses (`subject_id,item_id,response`) pass through unchanged. Raw
/// predictions (`subject_id,item_id,predicted_label`) are graded against a
/// gold file (`item_id,label`), which is then mandatory; predictions for
/// items missing from the gold file are an error.
pub fn ingest_predictions(pred_path: &Path, gold_path: Option<&Path>) -> Result<ResponseMatrix> {
    let raw = io::read_to_string(pred_path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(pred_path, &e))?
        .iter()
        .map(str::to_string)
        .collect();
    match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["subject_id", "item_id", "response"] => ResponseMatrix::read_csv(pred_path),
        ["subject_id", "item_id", "predicted_label"] => {
            let gold_path = gold_path.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{} holds raw predicted labels; a gold label file is required to grade them",
                    pred_path.display()
                ))
            })?;
            let gold = read_gold_labels(gold_path)?;
            let mut matrix = ResponseMatrix::new();
            let mut line_of = Vec::new();
            for record in reader.records() {
                let record = record.map_err(|e| csv_error(pred_path, &e))?;
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let parse =
                    |msg: String| Error::ParseLine { path: pred_path.to_path_buf(), line, msg };
                if record.len() != 3 {
                    return Err(parse(format!("expected 3 fields, got {}", record.len())));
                }
                let subject = SubjectId::new(&record[0]).map_err(|e| parse(e.to_string()))?;
                let item = ItemId::new(&record[1]).map_err(|e| parse(e.to_string()))?;
                let truth = gold.get(&item).ok_or_else(|| {
                    parse(format!("item `{item}` is not in the gold label file"))
                })?;
                let z = u8::from(&record[2] == truth.as_str());
                line_of.push(line);
                matrix.push(subject, item, z).map_err(|e| match e {
                    Error::DuplicateResponse { subject, item, first_line, second_line } => {
                        Error::DuplicateResponse {
                            subject,
                            item,
                            first_line: line_of[first_line as usize - 1],
                            second_line: line_of[second_line as usize - 1],
                        }
                    }
                    other => other,
                })?;
            }
            if matrix.is_empty() {
                return Err(Error::Parse {
                    path: pred_path.to_path_buf(),
                    msg: "no prediction rows".into(),
                });
            }
            Ok(matrix)
        }
        other => Err(Error::Parse {
            path: pred_path.to_path_buf(),
            msg: format!(
                "expected header `subject_id,item_id,response` or \
                 `subject_id,item_id,predicted_label`, got `{}`",
                other.join(",")
            ),
        }),
    }
}

fn read_gold_labels(path: &Path) -> Result<HashMap<ItemId, String>> {
    let raw = io::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
    crate::irt::check_header(path, &mut reader, &["item_id", "label"])?;
    let mut gold = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |msg: String| Error::ParseLine { path: path.to_path_buf(), line, msg };
        if record.len() != 2 {
            return Err(parse(format!("expected 2 fields, got {}", record.len())));
        }
        let item = ItemId::new(&record[0]).map_err(|e| parse(e.to_string()))?;
        if gold.insert(item, record[1].to_string()).is_some() {
            return Err(parse(format!("duplicate gold label for item `{}`", &record[0])));
        }
    }
    if gold.is_empty() {
        return Err(Error::Parse { path: path.to_path_buf(), msg: "no gold labels".into() });
    }
    Ok(gold)
}

/// Per-subject accuracy profile across difficulty bins.
///
/// Bins partition the difficulty axis at the given edges: the first bin is
/// everything below `edges[0]`, interior bins are half-open `[e, next)`,
/// and the last bin is everything at or above the final edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAccuracy {
    pub edges: Vec<f64>,
    /// Items per bin (over the items appearing in the matrix).
    pub counts: Vec<usize>,
    pub subjects: Vec<SubjectId>,
    /// `accuracy[s][b]` = subject `s`'s mean response over bin `b`, `None`
    /// where the subject answered nothing in the bin.
    pub accuracy: Vec<Vec<Option<f64>>>,
}

impl BinAccuracy {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Mean accuracy per bin across subjects that answered in the bin.
    pub fn mean_by_bin(&self) -> Vec<Option<f64>> {
        (0..self.n_bins())
            .map(|b| {
                let vals: Vec<f64> =
                    self.accuracy.iter().filter_map(|row| row[b]).collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            })
            .collect()
    }
}

/// Bin every item by its difficulty score and average each subject's
/// responses within each bin. The table must cover every item in the
/// matrix; edges must be finite and strictly increasing.
pub fn accuracy_by_difficulty_bin(
    matrix: &ResponseMatrix,
    table: &DifficultyTable,
    edges: &[f64],
) -> Result<BinAccuracy> {
    if matrix.is_empty() {
        return Err(Error::InvalidInput("response matrix is empty".into()));
    }
    if edges.is_empty() {
        return Err(Error::InvalidInput("need at least one bin edge".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "bin edges must be finite and strictly increasing, got {edges:?}"
        )));
    }
    table.ensure_covers(matrix.items())?;
    let n_bins = edges.len() + 1;
    let bin_of = |score: f64| edges.iter().take_while(|e| score >= **e).count();

    let item_bins: Vec<usize> = matrix
        .items()
        .iter()
        .map(|i| bin_of(table.get(i).expect("coverage checked")))
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &b in &item_bins {
        counts[b] += 1;
    }
    let mut hits = vec![vec![0u64; n_bins]; matrix.n_subjects()];
    let mut totals = vec![vec![0u64; n_bins]; matrix.n_subjects()];
    for (subject_idx, item_idx, z) in matrix.triplets() {
        let b = item_bins[*item_idx as usize];
        totals[*subject_idx as usize][b] += 1;
        hits[*subject_idx as usize][b] += u64::from(*z);
    }
    let accuracy = hits
        .iter()
        .zip(&totals)
        .map(|(h, t)| {
            h.iter()
                .zip(t)
                .map(|(h, t)| (*t > 0).then(|| *h as f64 / *t as f64))
                .collect()
        })
        .collect();
    Ok(BinAccuracy {
        edges: edges.to_vec(),
        counts,
        subjects: matrix.subjects().to_vec(),
        accuracy,
    })
}

/// Default difficulty-bin edges, covering the usual range of fitted
/// difficulties one unit at a time.
pub const DEFAULT_BIN_EDGES: [f64; 7] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::DifficultySource;
    use crate::stats::spearman;
    use crate::student::{generate_benchmark, BenchmarkConfig};
    use crate::vi::generate_responses;

    fn small_benchmark(noise: f64) -> (LabeledDataset, LabeledDataset) {
        generate_benchmark(&BenchmarkConfig {
            n_train: 300,
            n_val: 200,
            noise_frac: noise,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn crowd_has_one_row_per_member_and_item() {
        let (train, val) = small_benchmark(0.1);
        let cfg = CrowdConfig {
            n_base_learners: 2,
            variant_epochs: vec![1, 3],
            subsample_fracs: vec![0.5],
            label_flip_probs: vec![0.0],
            seed: 7,
        };
        assert_eq!(cfg.n_members(), 4);
        let matrix = simulate_crowd(&val, &train, &cfg).unwrap();
        assert_eq!(matrix.n_subjects(), 4);
        assert_eq!(matrix.n_items(), train.len());
        assert_eq!(matrix.n_responses(), 4 * train.len());
        let ids: Vec<&str> = matrix.subjects().iter().map(|s| s.as_str()).collect();
        assert_eq!(
            ids,
            ["ac-l00-e1-s0.50-f0.00", "ac-l00-e3-s0.50-f0.00", "ac-l01-e1-s0.50-f0.00", "ac-l01-e3-s0.50-f0.00"]
        );
    }

    #[test]
    fn crowd_is_deterministic_in_the_seed() {
        let (train, val) = small_benchmark(0.2);
        let cfg = CrowdConfig {
            n_base_learners: 3,
            variant_epochs: vec![2],
            ..Default::default()
        };
        let m1 = simulate_crowd(&val, &train, &cfg).unwrap();
        let m2 = simulate_crowd(&val, &train, &cfg).unwrap();
        assert_eq!(m1.triplets(), m2.triplets());
        let m3 = simulate_crowd(&val, &train, &CrowdConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(m1.triplets(), m3.triplets());
    }

    #[test]
    fn stronger_members_answer_more_accurately() {
        let (train, val) = small_benchmark(0.0);
        let acc_of = |cfg: &CrowdConfig| {
            let m = simulate_crowd(&val, &train, cfg).unwrap();
            m.triplets().iter().map(|(_, _, z)| f64::from(*z)).sum::<f64>()
                / m.n_responses() as f64
        };
        let strong = acc_of(&CrowdConfig {
            n_base_learners: 4,
            variant_epochs: vec![8],
            subsample_fracs: vec![1.0],
            label_flip_probs: vec![0.0],
            seed: 0,
        });
        let weak = acc_of(&CrowdConfig {
            n_base_learners: 4,
            variant_epochs: vec![1],
            subsample_fracs: vec![0.3],
            label_flip_probs: vec![0.6],
            seed: 0,
        });
        // the feature-subset ramp keeps even strong members imperfect
        assert!(strong >= 0.85, "strong crowd accuracy {strong}");
        assert!(strong - weak > 0.1, "corruption changed little: {strong} vs {weak}");
    }

    #[test]
    fn crowd_rejects_degenerate_inputs() {
        let (train, val) = small_benchmark(0.1);
        let cfg = CrowdConfig::default();
        let empty = LabeledDataset::new(vec![], vec![], vec![], None).unwrap();
        assert!(simulate_crowd(&empty, &train, &cfg).is_err());
        assert!(simulate_crowd(&val, &empty, &cfg).is_err());
        assert!(simulate_crowd(&val, &train, &CrowdConfig {
            variant_epochs: vec![],
            ..Default::default()
        })
        .is_err());

        let single: Vec<usize> = (0..val.len())
            .filter(|&r| val.label_name(r) == "c0")
            .collect();
        let single = val.subset(&single).unwrap();
        let err = simulate_crowd(&single, &train, &cfg).unwrap_err();
        assert!(err.to_string().contains("single class"), "{err}");
    }

    #[test]
    fn ingest_passes_graded_responses_through() {
        let dir = tempfile::tempdir().unwrap();
        let (train, val) = small_benchmark(0.1);
        let cfg = CrowdConfig { n_base_learners: 1, variant_epochs: vec![1], ..Default::default() };
        let matrix = simulate_crowd(&val, &train, &cfg).unwrap();
        let path = dir.path().join("responses.csv");
        matrix.write_csv(&path).unwrap();
        let back = ingest_predictions(&path, None).unwrap();
        assert_eq!(matrix.triplets(), back.triplets());
    }

    #[test]
    fn ingest_grades_predicted_labels_against_gold() {
        let dir = tempfile::tempdir().unwrap();
        let preds = dir.path().join("preds.csv");
        let gold = dir.path().join("gold.csv");
        std::fs::write(
            &preds,
            "subject_id,item_id,predicted_label\n\
             s1,q1,cat\ns1,q2,dog\ns2,q1,dog\ns2,q2,dog\n",
        )
        .unwrap();
        std::fs::write(&gold, "item_id,label\nq1,cat\nq2,cat\n").unwrap();
        let matrix = ingest_predictions(&preds, Some(&gold)).unwrap();
        let graded: Vec<u8> = matrix.triplets().iter().map(|(_, _, z)| *z).collect();
        // s1: right, wrong; s2: wrong, wrong
        assert_eq!(graded, [1, 0, 0, 0]);

        // raw labels without a gold file
        let err = ingest_predictions(&preds, None).unwrap_err();
        assert!(err.to_string().contains("gold label file"), "{err}");

        // prediction for an unknown item points at its line
        std::fs::write(
            &preds,
            "subject_id,item_id,predicted_label\ns1,q1,cat\ns1,q9,dog\n",
        )
        .unwrap();
        let err = ingest_predictions(&preds, Some(&gold)).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        assert!(err.to_string().contains("q9"), "{err}");

        // duplicate predictions are rejected with both lines
        std::fs::write(
            &preds,
            "subject_id,item_id,predicted_label\ns1,q1,cat\ns1,q2,cat\ns1,q1,dog\n",
        )
        .unwrap();
        let err = ingest_predictions(&preds, Some(&gold)).unwrap_err();
        match err {
            Error::DuplicateResponse { first_line, second_line, .. } => {
                assert_eq!((first_line, second_line), (2, 4));
            }
            other => panic!("expected duplicate error, got {other}"),
        }

        // unknown header
        std::fs::write(&preds, "subject,item,resp\ns1,q1,1\n").unwrap();
        assert!(ingest_predictions(&preds, None).is_err());
    }

    #[test]
    fn bin_accuracy_matches_hand_computation() {
        let mut matrix = ResponseMatrix::new();
        let items = ["q1", "q2", "q3", "q4"];
        let scores = [-1.5, -0.5, 0.0, 2.0];
        // subject A answers everything correctly; B only items below 0
        let a_resp = [1, 1, 1, 1];
        let b_resp = [1, 1, 0, 0];
        for (i, item) in items.iter().enumerate() {
            matrix
                .push(SubjectId::new("A").unwrap(), ItemId::new(*item).unwrap(), a_resp[i])
                .unwrap();
        }
        for (i, item) in items.iter().enumerate() {
            matrix
                .push(SubjectId::new("B").unwrap(), ItemId::new(*item).unwrap(), b_resp[i])
                .unwrap();
        }
        let table = DifficultyTable::from_pairs(
            items
                .iter()
                .zip(scores)
                .map(|(i, s)| (ItemId::new(*i).unwrap(), s)),
            DifficultySource::External,
        )
        .unwrap();
        // bins: (-inf,-1), [-1,0), [0,1), [1,inf)
        let bins = accuracy_by_difficulty_bin(&matrix, &table, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(bins.counts, [1, 1, 1, 1]); // q3 at 0.0 lands in [0,1)
        assert_eq!(bins.subjects.len(), 2);
        assert_eq!(bins.accuracy[0], [Some(1.0), Some(1.0), Some(1.0), Some(1.0)]);
        assert_eq!(bins.accuracy[1], [Some(1.0), Some(1.0), Some(0.0), Some(0.0)]);
        assert_eq!(
            bins.mean_by_bin(),
            [Some(1.0), Some(1.0), Some(0.5), Some(0.5)]
        );

        // empty bins come back as None
        let wide = accuracy_by_difficulty_bin(&matrix, &table, &[-10.0, 0.0]).unwrap();
        assert_eq!(wide.counts, [0, 2, 2]);
        assert_eq!(wide.accuracy[1][0], None);

        // invalid edges
        assert!(accuracy_by_difficulty_bin(&matrix, &table, &[]).is_err());
        assert!(accuracy_by_difficulty_bin(&matrix, &table, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn accuracy_declines_across_bins_for_synthetic_subjects() {
        let thetas: Vec<f64> = (0..5).map(|j| -2.0 + j as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bs: Vec<f64> = (0..2000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let matrix = generate_responses(&thetas, &bs, 5).unwrap();
        let table = DifficultyTable::from_pairs(
            matrix.items().iter().enumerate().map(|(i, id)| (id.clone(), bs[i])),
            DifficultySource::External,
        )
        .unwrap();
        let bins = accuracy_by_difficulty_bin(&matrix, &table, &DEFAULT_BIN_EDGES).unwrap();
        for (s, row) in bins.accuracy.iter().enumerate() {
            let pts: Vec<(f64, f64)> = row
                .iter()
                .enumerate()
                .filter_map(|(b, acc)| acc.map(|a| (b as f64, a)))
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let rho = spearman(&xs, &ys);
            assert!(
                rho < -0.5,
                "subject {} has bin-accuracy correlation {rho}",
                bins.subjects[s]
            );
        }
    }
}
