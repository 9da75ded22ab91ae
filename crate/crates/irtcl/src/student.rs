//! Desk-scale students and the curriculum training loop.
//!
//! A student is a softmax classifier (linear, or with one tanh hidden layer)
//! trained by mini-batch gradient descent with decoupled weight decay and
//! optional adaptive moments. The interesting part is
//! [`train_with_curriculum`]: before each epoch the scheduler decides which
//! training rows the student may see. Ability-matched selection grades the
//! student's own predictions on a subsample, estimates its ability, and
//! keeps items at or below the resulting threshold; competence schedules
//! release the easiest fraction on a clock; `none` trains on everything.
//!
//! Epoch-by-epoch state is recorded in a [`CurriculumTrace`] whose CSV form
//! is the unit of comparison between runs.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ability::{
    estimate_ability, maybe_bump, response_pattern, subsample_indices, AbilityEstConfig,
    AbilityEstimate,
};
use crate::curriculum::{
    competence, select_competence, select_dds_mae, CompetenceSchedule, DifficultySource,
    DifficultyTable, ScheduleShape,
};
use crate::error::{Error, Result};
use crate::io;
use crate::irt::{check_header, csv_error, ItemId};

/// Feature-vector dataset with categorical labels and optional raw text per
/// item (the text feeds the heuristic difficulty scorers).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    items: Vec<ItemId>,
    features: Vec<f64>, // row-major, len = items.len() * n_features
    n_features: usize,
    labels: Vec<u32>, // indices into `classes`
    classes: Vec<String>,
    texts: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(
        items: Vec<ItemId>,
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
        texts: Option<Vec<String>>,
    ) -> Result<Self> {
        if items.len() != features.len() || items.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "dataset parts disagree: {} items, {} feature rows, {} labels",
                items.len(),
                features.len(),
                labels.len()
            )));
        }
        if let Some(t) = &texts {
            if t.len() != items.len() {
                return Err(Error::InvalidInput(format!(
                    "dataset has {} items but {} texts",
                    items.len(),
                    t.len()
                )));
            }
        }
        let n_features = features.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(items.len() * n_features);
        for (row, f) in features.iter().enumerate() {
            if f.len() != n_features {
                return Err(Error::InvalidInput(format!(
                    "row {row} has {} features, expected {n_features}",
                    f.len()
                )));
            }
            if let Some(bad) = f.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {row} has non-finite feature {bad}"
                )));
            }
            flat.extend_from_slice(f);
        }
        let mut seen = std::collections::HashSet::new();
        for item in &items {
            if !seen.insert(item.clone()) {
                return Err(Error::InvalidInput(format!("duplicate item id `{item}`")));
            }
        }
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.iter().any(String::is_empty) {
            return Err(Error::InvalidInput("empty label".into()));
        }
        let class_idx: HashMap<&String, u32> =
            classes.iter().enumerate().map(|(k, c)| (c, k as u32)).collect();
        let labels = labels.iter().map(|l| class_idx[l]).collect();
        Ok(Self { items, features: flat, n_features, labels, classes, texts })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Sorted unique label names; row labels index into this.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn feature_row(&self, row: usize) -> &[f64] {
        &self.features[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn label_name(&self, row: usize) -> &str {
        &self.classes[self.labels[row] as usize]
    }

    pub fn text(&self, row: usize) -> Option<&str> {
        self.texts.as_ref().map(|t| t[row].as_str())
    }

    pub fn has_texts(&self) -> bool {
        self.texts.is_some()
    }

    /// Item-to-text map for the heuristic difficulty scorers.
    pub fn texts_by_item(&self) -> Result<std::collections::BTreeMap<ItemId, String>> {
        let texts = self.texts.as_ref().ok_or_else(|| {
            Error::InvalidInput("dataset has no text column to score".into())
        })?;
        Ok(self.items.iter().cloned().zip(texts.iter().cloned()).collect())
    }

    /// Copy of the selected rows (classes recomputed from what remains).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let items = rows.iter().map(|&r| self.items[r].clone()).collect();
        let features = rows.iter().map(|&r| self.feature_row(r).to_vec()).collect();
        let labels = rows.iter().map(|&r| self.label_name(r).to_string()).collect();
        let texts = self
            .texts
            .as_ref()
            .map(|t| rows.iter().map(|&r| t[r].clone()).collect());
        Self::new(items, features, labels, texts)
    }

    /// Same rows with replacement labels (used by crowd perturbations).
    pub fn with_labels(&self, labels: Vec<String>) -> Result<Self> {
        let features = (0..self.len()).map(|r| self.feature_row(r).to_vec()).collect();
        Self::new(self.items.clone(), features, labels, self.texts.clone())
    }

    /// Copy keeping only the given feature columns.
    pub fn project_features(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_features) {
            return Err(Error::InvalidInput(format!(
                "feature column {bad} out of range (dataset has {})",
                self.n_features
            )));
        }
        let features = (0..self.len())
            .map(|r| {
                let row = self.feature_row(r);
                cols.iter().map(|&c| row[c]).collect()
            })
            .collect();
        let labels = (0..self.len()).map(|r| self.label_name(r).to_string()).collect();
        Self::new(self.items.clone(), features, labels, self.texts.clone())
    }

    /// Read an `item_id,f1..fd,label[,text]` CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let raw = io::read_to_string(path)?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, &e))?
            .iter()
            .map(str::to_string)
            .collect();
        let bad_header = || Error::Parse {
            path: path.to_path_buf(),
            msg: format!(
                "expected header `item_id,f1..fd,label[,text]`, got `{}`",
                headers.join(",")
            ),
        };
        let has_text = headers.last().map(String::as_str) == Some("text");
        let label_pos = headers.len() - 1 - usize::from(has_text);
        if headers.first().map(String::as_str) != Some("item_id")
            || headers.get(label_pos).map(String::as_str) != Some("label")
            || label_pos < 2
        {
            return Err(bad_header());
        }
        let d = label_pos - 1;
        for (k, h) in headers[1..label_pos].iter().enumerate() {
            if h != &format!("f{}", k + 1) {
                return Err(bad_header());
            }
        }
        let mut items = Vec::new();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut texts = Vec::new();
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
            items.push(ItemId::new(&record[0]).map_err(|e| parse(e.to_string()))?);
            let mut row = Vec::with_capacity(d);
            for k in 0..d {
                let v: f64 = record[k + 1]
                    .parse()
                    .map_err(|_| parse(format!("bad feature value `{}`", &record[k + 1])))?;
                row.push(v);
            }
            features.push(row);
            labels.push(record[label_pos].to_string());
            if has_text {
                texts.push(record[label_pos + 1].to_string());
            }
        }
        Self::new(items, features, labels, has_text.then_some(texts))
            .map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["item_id".to_string()];
        for k in 1..=self.n_features {
            header.push(format!("f{k}"));
        }
        header.push("label".into());
        if self.texts.is_some() {
            header.push("text".into());
        }
        writer.write_record(&header).map_err(|e| csv_error(path, &e))?;
        for row in 0..self.len() {
            let mut rec = vec![self.items[row].to_string()];
            for v in self.feature_row(row) {
                rec.push(format_float(*v));
            }
            rec.push(self.label_name(row).to_string());
            if let Some(t) = &self.texts {
                rec.push(t[row].clone());
            }
            writer.write_record(&rec).map_err(|e| csv_error(path, &e))?;
        }
        let bytes = writer.into_inner().expect("flush csv buffer");
        io::atomic_write(path, &bytes)
    }
}

fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') {
        s.push_str(".0");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    None,
    DdsMae,
    CompetenceLinear,
    CompetenceRoot,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::None => "none",
            SchedulerKind::DdsMae => "dds_mae",
            SchedulerKind::CompetenceLinear => "competence_linear",
            SchedulerKind::CompetenceRoot => "competence_root",
        }
    }
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    /// Accepts both the short command-line spellings and the config names.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SchedulerKind::None),
            "dds-mae" | "dds_mae" => Ok(SchedulerKind::DdsMae),
            "linear" | "competence_linear" => Ok(SchedulerKind::CompetenceLinear),
            "root" | "competence_root" => Ok(SchedulerKind::CompetenceRoot),
            other => Err(Error::InvalidInput(format!(
                "unknown scheduler `{other}` (expected none, dds-mae, linear, or root)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub model: ModelKind,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation accuracy before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub scheduler: SchedulerKind,
    /// Decoupled weight decay, applied before the gradient step.
    pub weight_decay: f64,
    /// Use adaptive (Adam-style) moments instead of plain SGD.
    pub adaptive: bool,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Logistic,
            lr: 0.1,
            batch_size: 32,
            max_epochs: 20,
            early_stop_patience: 3,
            seed: 0,
            scheduler: SchedulerKind::None,
            weight_decay: 0.0,
            adaptive: false,
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput("student.lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("student.batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidInput("student.max_epochs must be >= 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::InvalidInput("student.early_stop_patience must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidInput("student.weight_decay must be >= 0".into()));
        }
        if let ModelKind::Mlp { hidden } = self.model {
            if hidden == 0 {
                return Err(Error::InvalidInput("mlp hidden width must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Softmax classifier over dense features: either linear or with one tanh
/// hidden layer. Parameters live in one flat vector
/// `[w1 | b1 | w2 | b2]` (`[w | b]` for the linear model).
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    classes: Vec<String>,
    n_features: usize,
    hidden: usize, // 0 = linear
    params: Vec<f64>,
}

impl Classifier {
    /// Fresh model. The linear model starts at exactly zero (uniform
    /// predictions); the MLP needs symmetry breaking and draws a seeded
    /// Xavier initialization.
    pub fn new(
        kind: ModelKind,
        n_features: usize,
        classes: Vec<String>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a classifier needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        if n_features == 0 {
            return Err(Error::InvalidInput("a classifier needs at least 1 feature".into()));
        }
        let k = classes.len();
        let (hidden, n_params) = match kind {
            ModelKind::Logistic => (0, k * n_features + k),
            ModelKind::Mlp { hidden } => {
                (hidden, hidden * n_features + hidden + k * hidden + k)
            }
        };
        let mut params = vec![0.0; n_params];
        if hidden > 0 {
            let xavier1 = (6.0 / (n_features + hidden) as f64).sqrt();
            let xavier2 = (6.0 / (hidden + k) as f64).sqrt();
            let w1_len = hidden * n_features;
            let w2_off = w1_len + hidden;
            for (off, p) in params.iter_mut().enumerate() {
                if off < w1_len {
                    *p = rng.random_range(-xavier1..xavier1);
                } else if off >= w2_off && off < w2_off + k * hidden {
                    *p = rng.random_range(-xavier2..xavier2);
                }
            }
        }
        Ok(Self { classes: classes.to_vec(), n_features, hidden, params })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Raw parameter vector, exposed so tests can assert that prediction and
    /// ability estimation never mutate the model.
    pub fn weights(&self) -> &[f64] {
        &self.params
    }

    fn check_features(&self, data: &LabeledDataset) -> Result<()> {
        if !data.is_empty() && data.n_features() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, dataset has {}",
                self.n_features,
                data.n_features()
            )));
        }
        Ok(())
    }

    /// Class logits for one feature row; MLP hidden activations are written
    /// into `hidden_buf` when present.
    fn logits(&self, x: &[f64], hidden_buf: &mut Vec<f64>) -> Vec<f64> {
        let k = self.classes.len();
        let d = self.n_features;
        if self.hidden == 0 {
            let (w, b) = (&self.params[..k * d], &self.params[k * d..]);
            (0..k)
                .map(|c| b[c] + w[c * d..(c + 1) * d].iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
                .collect()
        } else {
            let h = self.hidden;
            let w1 = &self.params[..h * d];
            let b1 = &self.params[h * d..h * d + h];
            let w2 = &self.params[h * d + h..h * d + h + k * h];
            let b2 = &self.params[h * d + h + k * h..];
            hidden_buf.clear();
            hidden_buf.extend((0..h).map(|u| {
                (b1[u] + w1[u * d..(u + 1) * d].iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
                    .tanh()
            }));
            (0..k)
                .map(|c| {
                    b2[c]
                        + w2[c * h..(c + 1) * h]
                            .iter()
                            .zip(hidden_buf.iter())
                            .map(|(w, h)| w * h)
                            .sum::<f64>()
                })
                .collect()
        }
    }

    /// Per-class probabilities for every row. A zero-weight linear model
    /// yields the uniform distribution.
    pub fn predict_proba(&self, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
        self.check_features(data)?;
        let mut hidden_buf = Vec::new();
        Ok((0..data.len())
            .map(|row| softmax(&self.logits(data.feature_row(row), &mut hidden_buf)))
            .collect())
    }

    /// Predicted label names. Ties in the argmax resolve to the lowest
    /// class index.
    pub fn predict(&self, data: &LabeledDataset) -> Result<Vec<String>> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.predict_rows(data, &rows)
    }

    /// Predictions for a subset of rows, in the order given.
    pub fn predict_rows(&self, data: &LabeledDataset, rows: &[usize]) -> Result<Vec<String>> {
        self.check_features(data)?;
        let mut hidden_buf = Vec::new();
        rows.iter()
            .map(|&row| {
                let logits = self.logits(data.feature_row(row), &mut hidden_buf);
                Ok(self.classes[argmax(&logits)].clone())
            })
            .collect()
    }

    /// Fraction of rows predicted correctly.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidInput("cannot score an empty dataset".into()));
        }
        let preds = self.predict(data)?;
        let hits = preds
            .iter()
            .enumerate()
            .filter(|(row, p)| p.as_str() == data.label_name(*row))
            .count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// One pass of shuffled mini-batch updates over the given rows. Returns
    /// the mean cross-entropy loss.
    pub fn train_one_epoch(
        &mut self,
        data: &LabeledDataset,
        rows: &[usize],
        batch_size: usize,
        opt: &mut Optimizer,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        self.check_features(data)?;
        if rows.is_empty() {
            return Err(Error::InvalidInput("cannot train on an empty selection".into()));
        }
        let mut order: Vec<usize> = rows.to_vec();
        order.shuffle(rng);
        let k = self.classes.len();
        let d = self.n_features;
        let h = self.hidden;
        let mut grad = vec![0.0; self.params.len()];
        let mut hidden_buf = Vec::new();
        let mut total_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            grad.fill(0.0);
            for &row in chunk {
                let x = data.feature_row(row);
                let y = data
                    .classes()
                    .iter()
                    .position(|c| c == data.label_name(row))
                    .expect("row label is in the dataset classes");
                let logits = self.logits(x, &mut hidden_buf);
                let probs = softmax(&logits);
                total_loss -= probs[y].max(1e-12).ln();
                if h == 0 {
                    for c in 0..k {
                        let dl = probs[c] - f64::from(u8::from(c == y));
                        for (dd, &xv) in x.iter().enumerate() {
                            grad[c * d + dd] += dl * xv;
                        }
                        grad[k * d + c] += dl;
                    }
                } else {
                    let w2_off = h * d + h;
                    let mut dh = vec![0.0; h];
                    for c in 0..k {
                        let dl = probs[c] - f64::from(u8::from(c == y));
                        for (u, &hv) in hidden_buf.iter().enumerate() {
                            grad[w2_off + c * h + u] += dl * hv;
                            dh[u] += dl * self.params[w2_off + c * h + u];
                        }
                        grad[w2_off + k * h + c] += dl;
                    }
                    for u in 0..h {
                        let da = dh[u] * (1.0 - hidden_buf[u] * hidden_buf[u]);
                        for (dd, &xv) in x.iter().enumerate() {
                            grad[u * d + dd] += da * xv;
                        }
                        grad[h * d + u] += da;
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            opt.step(&mut self.params, &grad);
        }
        Ok(total_loss / order.len() as f64)
    }

    /// Write the checkpoint: model shape plus the flat weight array.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        io::write_json(
            path,
            &CheckpointJson {
                model: if self.hidden == 0 { "logistic".into() } else { "mlp".into() },
                hidden: self.hidden,
                n_features: self.n_features,
                classes: self.classes.clone(),
                weights: self.params.clone(),
            },
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let json: CheckpointJson = io::read_json(path)?;
        let kind = match json.model.as_str() {
            "logistic" => ModelKind::Logistic,
            "mlp" => ModelKind::Mlp { hidden: json.hidden },
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("unknown model kind `{other}`"),
                })
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Classifier::new(kind, json.n_features, json.classes, &mut rng)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
        if json.weights.len() != model.params.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!(
                    "weight count {} does not match model shape (expected {})",
                    json.weights.len(),
                    model.params.len()
                ),
            });
        }
        model.params = json.weights;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    model: String,
    hidden: usize,
    n_features: usize,
    classes: Vec<String>,
    weights: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch optimizer: decoupled weight decay followed by either a plain
/// SGD step or an Adam step.
pub struct Optimizer {
    lr: f64,
    weight_decay: f64,
    adam: Option<AdamState>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(n_params: usize, cfg: &StudentConfig) -> Self {
        Self {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            adam: cfg.adaptive.then(|| AdamState {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            }),
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        if self.weight_decay > 0.0 {
            let shrink = 1.0 - self.lr * self.weight_decay;
            for p in params.iter_mut() {
                *p *= shrink;
            }
        }
        match &mut self.adam {
            None => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Some(st) => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                st.t += 1;
                let bc1 = 1.0 - B1.powi(st.t);
                let bc2 = 1.0 - B2.powi(st.t);
                for k in 0..params.len() {
                    st.m[k] = B1 * st.m[k] + (1.0 - B1) * grad[k];
                    st.v[k] = B2 * st.v[k] + (1.0 - B2) * grad[k] * grad[k];
                    params[k] -= self.lr * (st.m[k] / bc1) / ((st.v[k] / bc2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// One row of a training trace. `theta_hat`, `bump_offset` and `threshold`
/// are only present for ability-matched runs. `train_acc` is measured on the
/// full training set after the epoch's update, not just the selected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub theta_hat: Option<f64>,
    pub bump_offset: Option<f64>,
    pub threshold: Option<f64>,
    pub n_selected: usize,
    pub frac_selected: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub epoch_wall_ms: f64,
    pub ability_est_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurriculumTrace {
    pub records: Vec<EpochRecord>,
}

const TRACE_HEADER: [&str; 10] = [
    "epoch",
    "theta_hat",
    "bump_offset",
    "threshold",
    "n_selected",
    "frac_selected",
    "train_acc",
    "val_acc",
    "epoch_wall_ms",
    "ability_est_wall_ms",
];

impl CurriculumTrace {
    /// Epoch index with the best validation accuracy (first on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in &self.records {
            if best.is_none_or(|(_, acc)| r.val_acc > acc) {
                best = Some((r.epoch, r.val_acc));
            }
        }
        best.map(|(e, _)| e)
    }

    pub fn best_val_acc(&self) -> Option<f64> {
        self.records.iter().map(|r| r.val_acc).fold(None, |acc, v| {
            Some(match acc {
                None => v,
                Some(a) => a.max(v),
            })
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(TRACE_HEADER).map_err(|e| csv_error(path, &e))?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for r in &self.records {
            writer
                .write_record([
                    r.epoch.to_string(),
                    opt(r.theta_hat),
                    opt(r.bump_offset),
                    opt(r.threshold),
                    r.n_selected.to_string(),
                    format_float(r.frac_selected),
                    format_float(r.train_acc),
                    format_float(r.val_acc),
                    format_float(r.epoch_wall_ms),
                    format_float(r.ability_est_wall_ms),
                ])
                .map_err(|e| csv_error(path, &e))?;
        }
        let bytes = writer.into_inner().expect("flush csv buffer");
        io::atomic_write(path, &bytes)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let raw = io::read_to_string(path)?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
        check_header(path, &mut reader, &TRACE_HEADER)?;
        let mut records = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, &e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse = |msg: String| Error::ParseLine { path: path.to_path_buf(), line, msg };
            if record.len() != TRACE_HEADER.len() {
                return Err(parse(format!("expected 10 fields, got {}", record.len())));
            }
            let req = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| parse(format!("bad number `{s}`")))
            };
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() { Ok(None) } else { req(s).map(Some) }
            };
            records.push(EpochRecord {
                epoch: record[0].parse().map_err(|_| parse(format!("bad epoch `{}`", &record[0])))?,
                theta_hat: opt(&record[1])?,
                bump_offset: opt(&record[2])?,
                threshold: opt(&record[3])?,
                n_selected: record[4]
                    .parse()
                    .map_err(|_| parse(format!("bad n_selected `{}`", &record[4])))?,
                frac_selected: req(&record[5])?,
                train_acc: req(&record[6])?,
                val_acc: req(&record[7])?,
                epoch_wall_ms: req(&record[8])?,
                ability_est_wall_ms: req(&record[9])?,
            });
        }
        Ok(Self { records })
    }
}

/// Train a student under the configured scheduler.
///
/// `table` must cover every training item for the `dds_mae` and
/// `competence_*` schedulers; `none` ignores it. The competence schedule
/// defaults to ramping over the first half of `max_epochs` unless `csched`
/// overrides it. Returns the model restored to its best-validation-accuracy
/// epoch, plus the full trace.
pub fn train_with_curriculum(
    train: &LabeledDataset,
    val: &LabeledDataset,
    table: Option<&DifficultyTable>,
    scfg: &StudentConfig,
    acfg: &AbilityEstConfig,
    csched: Option<&CompetenceSchedule>,
) -> Result<(Classifier, CurriculumTrace)> {
    scfg.validate()?;
    acfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidInput("validation dataset is empty".into()));
    }
    if train.n_features() != val.n_features() {
        return Err(Error::InvalidInput(format!(
            "train has {} features but val has {}",
            train.n_features(),
            val.n_features()
        )));
    }
    let table = match scfg.scheduler {
        SchedulerKind::None => None,
        _ => {
            let t = table.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "scheduler `{}` needs a difficulty table",
                    scfg.scheduler.as_str()
                ))
            })?;
            t.ensure_covers(train.items())?;
            Some(t)
        }
    };
    // Ability-matched thresholds live on the latent ability scale. Text
    // heuristics don't, so standardize them first; fitted and external
    // tables are taken at face value.
    let standardized: Option<DifficultyTable> = match (scfg.scheduler, table) {
        (SchedulerKind::DdsMae, Some(t))
            if matches!(
                t.source(),
                DifficultySource::SentenceLength | DifficultySource::WordRarity
            ) =>
        {
            Some(t.standardized())
        }
        _ => None,
    };
    let table = standardized.as_ref().or(table);
    let sched = match scfg.scheduler {
        SchedulerKind::CompetenceLinear | SchedulerKind::CompetenceRoot => {
            let shape = if scfg.scheduler == SchedulerKind::CompetenceLinear {
                ScheduleShape::Linear
            } else {
                ScheduleShape::Root
            };
            let s = match csched {
                Some(s) => CompetenceSchedule { shape, ..s.clone() },
                None => CompetenceSchedule {
                    shape,
                    t_full: (scfg.max_epochs / 2).max(1),
                    ..Default::default()
                },
            };
            s.validate()?;
            Some(s)
        }
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scfg.seed);
    // separate stream so ability subsampling never perturbs batch shuffles:
    // runs that differ only in scheduler share their training randomness
    let mut est_rng = ChaCha8Rng::seed_from_u64(scfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut model = Classifier::new(scfg.model, train.n_features(), train.classes().to_vec(), &mut rng)?;
    let mut opt = Optimizer::new(model.weights().len(), scfg);

    let row_of: HashMap<&ItemId, usize> =
        train.items().iter().enumerate().map(|(r, i)| (i, r)).collect();
    let all_rows: Vec<usize> = (0..train.len()).collect();

    let mut history: Vec<AbilityEstimate> = Vec::new();
    let mut fixed_subsample: Option<Vec<usize>> = None;
    let mut records = Vec::new();
    let mut best_params: Vec<f64> = model.weights().to_vec();
    let mut best_val = f64::NEG_INFINITY;
    let mut epochs_since_best = 0usize;

    for epoch in 0..scfg.max_epochs {
        let epoch_start = Instant::now();
        let mut ability_ms = 0.0;
        let mut estimate: Option<AbilityEstimate> = None;

        let selected_rows: Vec<usize> = match scfg.scheduler {
            SchedulerKind::None => all_rows.clone(),
            SchedulerKind::DdsMae => {
                let table = table.expect("checked above");
                let t0 = Instant::now();
                let sub: Vec<usize> = if acfg.resample_each_epoch {
                    subsample_indices(train.len(), acfg.subsample_size, &mut est_rng)
                } else {
                    fixed_subsample
                        .get_or_insert_with(|| {
                            subsample_indices(train.len(), acfg.subsample_size, &mut est_rng)
                        })
                        .clone()
                };
                let preds = model.predict_rows(train, &sub)?;
                let gold: Vec<String> =
                    sub.iter().map(|&r| train.label_name(r).to_string()).collect();
                let pattern = response_pattern(&gold, &preds)?;
                let difficulties: Vec<f64> = sub
                    .iter()
                    .map(|&r| table.get(&train.items()[r]).expect("coverage checked"))
                    .collect();
                let mut est = estimate_ability(&pattern, &difficulties, acfg)?;
                est.epoch = epoch;
                let mut est = maybe_bump(est, &history);
                let mut selection = select_dds_mae(table, est.threshold);
                if selection.is_empty() {
                    // Nothing at or below the threshold: raise it in 0.1
                    // steps until something is. Jumping straight to the
                    // smallest score gives the same threshold as bumping
                    // one step at a time, without the O(items) rescans —
                    // this matters when the table is on a raw text-heuristic
                    // scale far above the ability scale.
                    let min_score =
                        table.iter().map(|(_, s)| s).fold(f64::INFINITY, f64::min);
                    while selection.is_empty() {
                        let steps = ((min_score - est.threshold) / 0.1).ceil().max(1.0);
                        est.bump_offset += 0.1 * steps;
                        est.threshold += 0.1 * steps;
                        selection = select_dds_mae(table, est.threshold);
                    }
                    log::debug!(
                        "epoch {epoch}: empty selection, bumped threshold to {:.3}",
                        est.threshold
                    );
                }
                ability_ms = elapsed_ms(t0);
                history.push(est.clone());
                estimate = Some(est);
                let mut rows: Vec<usize> =
                    selection.iter().filter_map(|i| row_of.get(i).copied()).collect();
                rows.sort_unstable();
                rows
            }
            SchedulerKind::CompetenceLinear | SchedulerKind::CompetenceRoot => {
                let c = competence(epoch, sched.as_ref().expect("built above"));
                let selection = select_competence(table.expect("checked above"), c, train.len());
                let mut rows: Vec<usize> =
                    selection.iter().filter_map(|i| row_of.get(i).copied()).collect();
                rows.sort_unstable();
                rows
            }
        };

        let loss = model.train_one_epoch(train, &selected_rows, scfg.batch_size, &mut opt, &mut rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let train_acc = model.accuracy(train)?;
        let val_acc = model.accuracy(val)?;

        records.push(EpochRecord {
            epoch,
            theta_hat: estimate.as_ref().map(|e| e.theta_hat),
            bump_offset: estimate.as_ref().map(|e| e.bump_offset),
            threshold: estimate.as_ref().map(|e| e.threshold),
            n_selected: selected_rows.len(),
            frac_selected: selected_rows.len() as f64 / train.len() as f64,
            train_acc,
            val_acc,
            epoch_wall_ms: elapsed_ms(epoch_start),
            ability_est_wall_ms: ability_ms,
        });
        log::debug!(
            "epoch {epoch}: {} rows, train {train_acc:.4}, val {val_acc:.4}",
            selected_rows.len()
        );

        if val_acc > best_val {
            best_val = val_acc;
            best_params = model.weights().to_vec();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= scfg.early_stop_patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, CurriculumTrace { records }))
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Configuration for the synthetic noisy-hard benchmark.
///
/// Gaussian class blobs with a configurable fraction of label noise placed
/// where it hurts: the examples closest to a decision boundary get flipped
/// to their runner-up class. Pseudo-text is attached whose length and
/// vocabulary rarity correlate loosely with geometric hardness, so the
/// text heuristics have signal but an imperfect one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_classes: usize,
    pub n_features: usize,
    /// Distance of class centers from the origin.
    pub class_sep: f64,
    /// Fraction of each split, hardest first, whose labels get flipped.
    pub noise_frac: f64,
    pub seed: u64,
    pub with_text: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            n_val: 1_000,
            n_classes: 4,
            n_features: 12,
            class_sep: 3.0,
            noise_frac: 0.25,
            seed: 0,
            with_text: true,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::InvalidInput("benchmark splits must be non-empty".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidInput("benchmark needs at least 2 classes".into()));
        }
        if self.n_features == 0 {
            return Err(Error::InvalidInput("benchmark needs at least 1 feature".into()));
        }
        if !(self.class_sep > 0.0 && self.class_sep.is_finite()) {
            return Err(Error::InvalidInput("benchmark class_sep must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise_frac) {
            return Err(Error::InvalidInput("benchmark noise_frac must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Generate the (train, val) splits of the noisy-hard benchmark.
pub fn generate_benchmark(cfg: &BenchmarkConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // class centers: random directions at distance class_sep
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_classes);
    for _ in 0..cfg.n_classes {
        let v: Vec<f64> = (0..cfg.n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
        centers.push(v.iter().map(|x| x * cfg.class_sep / norm).collect());
    }
    let train = generate_split(cfg, &centers, cfg.n_train, "t", &mut rng)?;
    let val = generate_split(cfg, &centers, cfg.n_val, "v", &mut rng)?;
    Ok((train, val))
}

fn generate_split(
    cfg: &BenchmarkConfig,
    centers: &[Vec<f64>],
    n: usize,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    let width = n.to_string().len().max(5);
    let mut items = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    let mut labels: Vec<usize> = Vec::with_capacity(n);
    let mut margins = Vec::with_capacity(n);
    let mut runner_up = Vec::with_capacity(n);
    for row in 0..n {
        let class = row % cfg.n_classes;
        let x: Vec<f64> = centers[class]
            .iter()
            .map(|c| {
                let e: f64 = StandardNormal.sample(rng);
                c + e
            })
            .collect();
        // distance to every center; margin = runner-up minus own
        let mut d_own = 0.0;
        let mut d_other = f64::INFINITY;
        let mut other = usize::from(class == 0);
        for (k, center) in centers.iter().enumerate() {
            let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if k == class {
                d_own = d;
            } else if d < d_other {
                d_other = d;
                other = k;
            }
        }
        items.push(ItemId::new(format!("{prefix}{row:0width$}"))?);
        features.push(x);
        labels.push(class);
        margins.push(d_other - d_own);
        runner_up.push(other);
    }
    // flip the hardest noise_frac of the split to its runner-up class
    let n_flip = (cfg.noise_frac * n as f64).round() as usize;
    let mut by_margin: Vec<usize> = (0..n).collect();
    by_margin.sort_by(|&a, &b| margins[a].partial_cmp(&margins[b]).expect("finite margins"));
    for &row in by_margin.iter().take(n_flip) {
        labels[row] = runner_up[row];
    }
    // hardness percentile (0 = easiest) drives the pseudo-text
    let mut hardness = vec![0.0; n];
    for (rank, &row) in by_margin.iter().rev().enumerate() {
        hardness[row] = 1.0 - rank as f64 / (n.max(2) - 1) as f64;
    }
    let texts = cfg.with_text.then(|| {
        (0..n)
            .map(|row| {
                let h = hardness[row];
                // length and vocab depth drift with hardness, but the jitter
                // is as large as the drift: the heuristics get a real but
                // noisy signal
                let n_tokens = 4 + (3.0 * h + 3.0 * rng.random::<f64>()).floor() as usize;
                let gamma = 2.2 - 0.8 * h;
                (0..n_tokens)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let rank = ((u.powf(gamma)) * 400.0) as usize;
                        format!("w{:03}", rank.min(399))
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
    });
    let label_names: Vec<String> = labels.iter().map(|&c| format!("c{c}")).collect();
    LabeledDataset::new(items, features, label_names, texts)
}
