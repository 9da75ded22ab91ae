//! Difficulty tables and the selection policies built on them.
//!
//! Two families of policy are provided. Ability-matched dynamic selection
//! keeps every item whose difficulty is at or below the learner's current
//! threshold, so the training set grows and shrinks with the learner.
//! Competence schedules ignore the learner entirely and release the easiest
//! fixed fraction of the data on a clock.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::irt::{check_header, csv_error, ItemId};

/// Where a difficulty table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultySource {
    /// Fitted from an artificial-crowd response matrix.
    IrtAc,
    SentenceLength,
    WordRarity,
    External,
}

impl DifficultySource {
    pub fn as_str(self) -> &'static str {
        match self {
            DifficultySource::IrtAc => "irt_ac",
            DifficultySource::SentenceLength => "sentence_length",
            DifficultySource::WordRarity => "word_rarity",
            DifficultySource::External => "external",
        }
    }
}

impl fmt::Display for DifficultySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultySource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "irt_ac" => Ok(DifficultySource::IrtAc),
            "sentence_length" => Ok(DifficultySource::SentenceLength),
            "word_rarity" => Ok(DifficultySource::WordRarity),
            "external" => Ok(DifficultySource::External),
            other => Err(Error::InvalidInput(format!("unknown difficulty source `{other}`"))),
        }
    }
}

/// Map from item to difficulty score, tagged with the source that scored it.
///
/// Scores are finite and unit-free: selection policies only ever compare
/// them, except for ability-matched selection which interprets IRT scores on
/// the logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyTable {
    scores: BTreeMap<ItemId, f64>,
    source: DifficultySource,
}

impl DifficultyTable {
    pub fn new(scores: BTreeMap<ItemId, f64>, source: DifficultySource) -> Result<Self> {
        for (item, score) in &scores {
            if !score.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "difficulty for `{item}` is not finite"
                )));
            }
        }
        Ok(Self { scores, source })
    }

    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (ItemId, f64)>,
        source: DifficultySource,
    ) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for (item, score) in pairs {
            if scores.insert(item.clone(), score).is_some() {
                return Err(Error::InvalidInput(format!("duplicate difficulty for `{item}`")));
            }
        }
        Self::new(scores, source)
    }

    pub fn source(&self) -> DifficultySource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, item: &ItemId) -> Option<f64> {
        self.scores.get(item).copied()
    }

    /// Entries in ascending item-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&ItemId, f64)> {
        self.scores.iter().map(|(item, &score)| (item, score))
    }

    pub fn scores(&self) -> &BTreeMap<ItemId, f64> {
        &self.scores
    }

    /// Error unless every item in `items` has a score.
    pub fn ensure_covers<'a>(&self, items: impl IntoIterator<Item = &'a ItemId>) -> Result<()> {
        for item in items {
            if !self.scores.contains_key(item) {
                return Err(Error::MissingParameter { kind: "difficulty", id: item.to_string() });
            }
        }
        Ok(())
    }

    /// Same table with scores z-standardized (mean 0, sample std 1).
    ///
    /// Rank-based policies are unaffected by monotone rescaling, but
    /// ability-matched thresholding compares scores against the latent
    /// ability scale, so raw text-heuristic scores (token counts, summed
    /// log-probabilities) must be brought onto it first. Standardizing an
    /// already standardized table is a no-op; a constant table stays
    /// constant at zero.
    pub fn standardized(&self) -> Self {
        let values: Vec<f64> = self.scores.values().copied().collect();
        let mean = crate::stats::mean(&values);
        let std = if values.len() > 1 { crate::stats::sample_std(&values) } else { 0.0 };
        let scale = if std > 0.0 { 1.0 / std } else { 0.0 };
        Self {
            scores: self
                .scores
                .iter()
                .map(|(item, &s)| (item.clone(), (s - mean) * scale))
                .collect(),
            source: self.source,
        }
    }

    /// Read an `item_id,score,source` CSV. All rows must carry the same
    /// source tag.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        check_header(path, &mut reader, &["item_id", "score", "source"])?;
        let mut scores = BTreeMap::new();
        let mut source: Option<DifficultySource> = None;
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, &e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse = |msg: String| Error::ParseLine { path: path.to_path_buf(), line, msg };
            if record.len() != 3 {
                return Err(parse(format!("expected 3 fields, got {}", record.len())));
            }
            let item = ItemId::new(&record[0]).map_err(|e| parse(e.to_string()))?;
            let score: f64 = record[1]
                .parse()
                .map_err(|_| parse(format!("bad score `{}`", &record[1])))?;
            if !score.is_finite() {
                return Err(parse(format!("score for `{item}` is not finite")));
            }
            let row_source: DifficultySource =
                record[2].parse().map_err(|e: Error| parse(e.to_string()))?;
            match source {
                None => source = Some(row_source),
                Some(s) if s != row_source => {
                    return Err(parse(format!(
                        "mixed difficulty sources: `{s}` and `{row_source}`"
                    )));
                }
                Some(_) => {}
            }
            if scores.insert(item.clone(), score).is_some() {
                return Err(parse(format!("duplicate difficulty for `{item}`")));
            }
        }
        let source = source.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            msg: "difficulty table has no rows".into(),
        })?;
        Self::new(scores, source)
    }

    /// Write the table in ascending item-id order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["item_id", "score", "source"])
            .map_err(|e| csv_error(path, &e))?;
        for (item, score) in self.iter() {
            writer
                .write_record([item.as_str(), &format_score(score), self.source.as_str()])
                .map_err(|e| csv_error(path, &e))?;
        }
        let bytes = writer.into_inner().expect("flush csv buffer");
        io::atomic_write(path, &bytes)
    }
}

fn format_score(score: f64) -> String {
    // shortest representation that round-trips exactly
    let mut s = format!("{score}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Ability-matched dynamic selection: every item whose difficulty is at or
/// below `threshold`. Ties with the threshold are included. The result may
/// be empty; callers that cannot proceed on an empty set apply the
/// stagnation bump until it is not (see [`crate::student`]).
pub fn select_dds_mae(table: &DifficultyTable, threshold: f64) -> BTreeSet<ItemId> {
    table
        .iter()
        .filter(|&(_, score)| score <= threshold)
        .map(|(item, _)| item.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleShape {
    Linear,
    Root,
}

/// Competence schedule: the fraction of easiest data available at epoch `t`,
/// ramping from `c0` at `t = 0` to 1 at `t = t_full` and saturating there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompetenceSchedule {
    pub c0: f64,
    pub t_full: usize,
    pub shape: ScheduleShape,
}

impl Default for CompetenceSchedule {
    fn default() -> Self {
        Self { c0: 0.01, t_full: 10, shape: ScheduleShape::Linear }
    }
}

impl CompetenceSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0 <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "competence c0 must be in (0, 1], got {}",
                self.c0
            )));
        }
        if self.t_full == 0 {
            return Err(Error::InvalidInput("competence t_full must be >= 1".into()));
        }
        Ok(())
    }
}

/// Competence value at epoch `t`, clamped to at most 1.
pub fn competence(t: usize, sched: &CompetenceSchedule) -> f64 {
    let tf = t as f64 / sched.t_full as f64;
    let c = match sched.shape {
        ScheduleShape::Linear => tf * (1.0 - sched.c0) + sched.c0,
        ScheduleShape::Root => (tf * (1.0 - sched.c0 * sched.c0) + sched.c0 * sched.c0).sqrt(),
    };
    c.min(1.0)
}

/// The `ceil(c * n_total)` easiest items; ties on score break by ascending
/// item id. Depends only on score ranks, not their scale.
pub fn select_competence(table: &DifficultyTable, c: f64, n_total: usize) -> BTreeSet<ItemId> {
    let k = ((c * n_total as f64).ceil() as usize).min(table.len());
    let mut ranked: Vec<(&ItemId, f64)> = table.iter().collect();
    ranked.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("difficulty scores are finite")
            .then_with(|| a.0.cmp(b.0))
    });
    ranked.into_iter().take(k).map(|(item, _)| item.clone()).collect()
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(|w| w.to_lowercase())
}

/// Difficulty as surface length: the whitespace token count of the
/// (lowercased) text.
pub fn score_sentence_length(texts: &BTreeMap<ItemId, String>) -> Result<DifficultyTable> {
    let scores = texts
        .iter()
        .map(|(item, text)| (item.clone(), tokenize(text).count() as f64))
        .collect();
    DifficultyTable::new(scores, DifficultySource::SentenceLength)
}

/// Token counts over a text collection, for [`score_word_rarity`].
pub fn corpus_counts(texts: &BTreeMap<ItemId, String>) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts.values() {
        for token in tokenize(text) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    counts
}

/// Difficulty as negative log-probability of the text's tokens under an
/// add-one-smoothed unigram model of `counts`. Unseen tokens get the
/// smoothed floor probability `1 / (total + vocab)`.
pub fn score_word_rarity(
    texts: &BTreeMap<ItemId, String>,
    counts: &HashMap<String, u64>,
) -> Result<DifficultyTable> {
    if counts.is_empty() {
        return Err(Error::InvalidInput(
            "word rarity needs a non-empty corpus vocabulary".into(),
        ));
    }
    let total: u64 = counts.values().sum();
    let denom = (total + counts.len() as u64) as f64;
    let mut scores = BTreeMap::new();
    for (item, text) in texts {
        let mut score = 0.0;
        for token in tokenize(text) {
            let c = counts.get(&token).copied().unwrap_or(0);
            score -= (((c + 1) as f64) / denom).ln();
        }
        scores.insert(item.clone(), score);
    }
    DifficultyTable::new(scores, DifficultySource::WordRarity)
}

/// Read a text corpus CSV: `item_id,text` with optional further text
/// columns (`text2`, `text3`, ...), which are joined with single spaces.
pub fn read_corpus_csv(path: &Path) -> Result<BTreeMap<ItemId, String>> {
    let raw = crate::io::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, &e))?
        .iter()
        .map(str::to_string)
        .collect();
    let ok = headers.len() >= 2
        && headers[0] == "item_id"
        && headers[1] == "text"
        && headers[2..]
            .iter()
            .enumerate()
            .all(|(k, h)| h == &format!("text{}", k + 2));
    if !ok {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!(
                "expected header `item_id,text[,text2,...]`, got `{}`",
                headers.join(",")
            ),
        });
    }
    let mut texts = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |msg: String| Error::ParseLine { path: path.to_path_buf(), line, msg };
        if record.len() != headers.len() {
            return Err(parse(format!(
                "expected {} fields, got {}",
                headers.len(),
                record.len()
            )));
        }
        let item = ItemId::new(&record[0]).map_err(|e| parse(e.to_string()))?;
        let joined = record
            .iter()
            .skip(1)
            .filter(|f| !f.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if texts.insert(item, joined).is_some() {
            return Err(parse(format!("duplicate item id `{}`", &record[0])));
        }
    }
    if texts.is_empty() {
        return Err(Error::Parse { path: path.to_path_buf(), msg: "no corpus rows".into() });
    }
    Ok(texts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iid(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn table(pairs: &[(&str, f64)]) -> DifficultyTable {
        DifficultyTable::from_pairs(
            pairs.iter().map(|&(id, s)| (iid(id), s)),
            DifficultySource::External,
        )
        .unwrap()
    }

    fn ids(set: &BTreeSet<ItemId>) -> Vec<&str> {
        set.iter().map(|i| i.as_str()).collect()
    }

    #[test]
    fn dds_mae_worked_example() {
        let t = table(&[("Q1", 1.3), ("Q2", 1.7), ("Q3", 0.1), ("Q4", 2.1)]);
        assert_eq!(ids(&select_dds_mae(&t, 1.5)), vec!["Q1", "Q3"]);
    }

    #[test]
    fn dds_mae_boundary_and_empty() {
        let t = table(&[("Q1", 1.3), ("Q2", 1.7)]);
        // a score exactly at the threshold is included
        assert_eq!(ids(&select_dds_mae(&t, 1.3)), vec!["Q1"]);
        assert!(select_dds_mae(&t, 1.0).is_empty());
        assert_eq!(select_dds_mae(&t, 99.0).len(), 2);
    }

    /// Brute force reference: filter a plain vector.
    fn brute_force_select(pairs: &[(String, f64)], threshold: f64) -> BTreeSet<String> {
        pairs
            .iter()
            .filter(|(_, s)| *s <= threshold)
            .map(|(id, _)| id.clone())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn dds_mae_matches_brute_force(
            scores in proptest::collection::vec(-5.0..5.0f64, 1..40),
            threshold in -6.0..6.0f64,
        ) {
            let pairs: Vec<(String, f64)> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("i{i:03}"), s))
                .collect();
            let t = DifficultyTable::from_pairs(
                pairs.iter().map(|(id, s)| (iid(id), *s)),
                DifficultySource::IrtAc,
            )
            .unwrap();
            let got: BTreeSet<String> = select_dds_mae(&t, threshold)
                .into_iter()
                .map(String::from)
                .collect();
            prop_assert_eq!(got, brute_force_select(&pairs, threshold));
        }

        #[test]
        fn dds_mae_is_monotone_in_threshold(
            scores in proptest::collection::vec(-5.0..5.0f64, 1..40),
            lo in -6.0..6.0f64,
            gap in 0.0..3.0f64,
        ) {
            let t = DifficultyTable::from_pairs(
                scores.iter().enumerate().map(|(i, &s)| (iid(&format!("i{i:03}")), s)),
                DifficultySource::IrtAc,
            )
            .unwrap();
            let small = select_dds_mae(&t, lo);
            let large = select_dds_mae(&t, lo + gap);
            prop_assert!(small.is_subset(&large));
        }

        #[test]
        fn competence_root_dominates_linear_before_saturation(
            t in 0usize..20,
        ) {
            let lin = CompetenceSchedule { c0: 0.01, t_full: 10, shape: ScheduleShape::Linear };
            let root = CompetenceSchedule { shape: ScheduleShape::Root, ..lin.clone() };
            prop_assert!(competence(t, &root) >= competence(t, &lin) - 1e-12);
        }

        #[test]
        fn select_competence_depends_only_on_ranks(
            scores in proptest::collection::vec(-5.0..5.0f64, 1..30),
            c in 0.01..1.0f64,
        ) {
            let base = DifficultyTable::from_pairs(
                scores.iter().enumerate().map(|(i, &s)| (iid(&format!("i{i:03}")), s)),
                DifficultySource::External,
            )
            .unwrap();
            // strictly monotone transform preserves ranks
            let squashed = DifficultyTable::from_pairs(
                scores.iter().enumerate().map(|(i, &s)| (iid(&format!("i{i:03}")), (0.3 * s).tanh())),
                DifficultySource::External,
            )
            .unwrap();
            let n = scores.len();
            prop_assert_eq!(
                select_competence(&base, c, n),
                select_competence(&squashed, c, n)
            );
        }
    }

    #[test]
    fn competence_schedule_endpoints() {
        let lin = CompetenceSchedule { c0: 0.01, t_full: 10, shape: ScheduleShape::Linear };
        assert!((competence(0, &lin) - 0.01).abs() < 1e-12);
        assert_eq!(competence(10, &lin), 1.0);
        assert_eq!(competence(25, &lin), 1.0);
        // halfway point of the linear ramp
        assert!((competence(5, &lin) - 0.505).abs() < 1e-12);

        let root = CompetenceSchedule { shape: ScheduleShape::Root, ..lin };
        assert!((competence(0, &root) - 0.01).abs() < 1e-12);
        assert_eq!(competence(10, &root), 1.0);
        assert_eq!(competence(11, &root), 1.0);
        // hand value: sqrt(0.5 * (1 - 0.0001) + 0.0001)
        assert!((competence(5, &root) - 0.50005f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn select_competence_takes_ceil_and_breaks_ties_by_id() {
        let t = table(&[("b", 2.0), ("a", 2.0), ("c", 1.0), ("d", 3.0)]);
        // ceil(0.5 * 4) = 2: easiest is c, then the a/b tie resolves to a
        assert_eq!(ids(&select_competence(&t, 0.5, 4)), vec!["a", "c"]);
        // ceil(0.01 * 4) = 1
        assert_eq!(ids(&select_competence(&t, 0.01, 4)), vec!["c"]);
        assert_eq!(select_competence(&t, 1.0, 4).len(), 4);
    }

    #[test]
    fn sentence_length_counts_tokens() {
        let texts = BTreeMap::from([
            (iid("a"), "The cat sat.".to_string()),
            (iid("b"), String::new()),
            (iid("c"), "a b c".to_string()),
        ]);
        let t = score_sentence_length(&texts).unwrap();
        assert_eq!(t.get(&iid("a")), Some(3.0));
        assert_eq!(t.get(&iid("b")), Some(0.0));
        assert_eq!(t.get(&iid("c")), Some(3.0));
        assert_eq!(t.source(), DifficultySource::SentenceLength);
    }

    #[test]
    fn word_rarity_hand_check() {
        // corpus "a a b": counts {a:2, b:1}, total 3, vocab 2
        let corpus = BTreeMap::from([(iid("doc"), "a a b".to_string())]);
        let counts = corpus_counts(&corpus);
        assert_eq!(counts.get("a"), Some(&2));
        assert_eq!(counts.get("b"), Some(&1));

        let texts = BTreeMap::from([
            (iid("x"), "a b".to_string()),
            (iid("y"), "c".to_string()),
            (iid("z"), "a a a".to_string()),
        ]);
        let t = score_word_rarity(&texts, &counts).unwrap();
        // p(a) = 3/5, p(b) = 2/5, p(unseen) = 1/5
        let expect_x = -(0.6f64.ln() + 0.4f64.ln());
        assert!((t.get(&iid("x")).unwrap() - expect_x).abs() < 1e-12);
        assert!((t.get(&iid("y")).unwrap() - (-0.2f64.ln())).abs() < 1e-12);
        // repeated common words stay cheap per-token but add up; the unseen
        // token is strictly rarer than any seen one
        assert!(t.get(&iid("y")).unwrap() > -(0.6f64.ln()) * 3.0 - 1e-12);
        assert_eq!(t.source(), DifficultySource::WordRarity);
    }

    #[test]
    fn word_rarity_case_folds_and_rejects_empty_vocab() {
        let corpus = BTreeMap::from([(iid("doc"), "Word word WORD".to_string())]);
        let counts = corpus_counts(&corpus);
        assert_eq!(counts.get("word"), Some(&3));
        assert!(score_word_rarity(&BTreeMap::new(), &HashMap::new()).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diff.csv");
        let t = table(&[("q2", -0.5), ("q1", 1.25), ("q3", 0.0)]);
        t.write_csv(&path).unwrap();
        let back = DifficultyTable::read_csv(&path).unwrap();
        assert_eq!(t, back);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("item_id,score,source\n"), "{text}");
    }

    #[test]
    fn table_csv_rejects_mixed_sources_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diff.csv");
        std::fs::write(
            &path,
            "item_id,score,source\nq1,0.5,irt_ac\nq2,0.7,external\n",
        )
        .unwrap();
        let err = DifficultyTable::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("mixed"), "{err}");

        std::fs::write(&path, "item_id,score,source\nq1,0.5,irt_ac\nq1,0.7,irt_ac\n").unwrap();
        let err = DifficultyTable::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        std::fs::write(&path, "item_id,score,source\nq1,0.5,feelings\n").unwrap();
        let err = DifficultyTable::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("feelings"), "{err}");
    }

    #[test]
    fn ensure_covers_reports_missing_items() {
        let t = table(&[("q1", 0.0)]);
        assert!(t.ensure_covers([&iid("q1")]).is_ok());
        let err = t.ensure_covers([&iid("q1"), &iid("q9")]).unwrap_err();
        assert!(err.to_string().contains("q9"), "{err}");
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let err = DifficultyTable::from_pairs(
            [(iid("q1"), f64::NAN)],
            DifficultySource::External,
        )
        .unwrap_err();
        assert!(err.to_string().contains("finite"), "{err}");
    }

    #[test]
    fn standardization_centers_scales_and_is_idempotent() {
        let t = table(&[("q1", 1.0), ("q2", 2.0), ("q3", 3.0)]);
        let z = t.standardized();
        assert_eq!(z.get(&iid("q1")), Some(-1.0));
        assert_eq!(z.get(&iid("q2")), Some(0.0));
        assert_eq!(z.get(&iid("q3")), Some(1.0));
        assert_eq!(z.source(), t.source());
        let zz = z.standardized();
        for (item, s) in z.iter() {
            assert!((s - zz.get(item).unwrap()).abs() < 1e-12);
        }
        // constant tables collapse to zero rather than dividing by zero
        let flat = table(&[("q1", 5.0), ("q2", 5.0)]).standardized();
        assert_eq!(flat.get(&iid("q1")), Some(0.0));
        // ranks are preserved, so competence selections are unchanged
        let raw = table(&[("a", 10.0), ("b", 30.0), ("c", 20.0), ("d", 40.0)]);
        assert_eq!(
            select_competence(&raw, 0.5, 4),
            select_competence(&raw.standardized(), 0.5, 4)
        );
    }

    #[test]
    fn corpus_csv_joins_text_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.csv");
        std::fs::write(&path, "item_id,text\nq1,the cat sat\nq2,a dog\n").unwrap();
        let texts = read_corpus_csv(&path).unwrap();
        assert_eq!(texts[&iid("q1")], "the cat sat");

        std::fs::write(
            &path,
            "item_id,text,text2\nq1,premise here,hypothesis there\nq2,only premise,\n",
        )
        .unwrap();
        let texts = read_corpus_csv(&path).unwrap();
        assert_eq!(texts[&iid("q1")], "premise here hypothesis there");
        assert_eq!(texts[&iid("q2")], "only premise");

        std::fs::write(&path, "item_id,body\nq1,x\n").unwrap();
        assert!(read_corpus_csv(&path).is_err());

        std::fs::write(&path, "item_id,text\nq1,x\nq1,y\n").unwrap();
        let err = read_corpus_csv(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }
}
