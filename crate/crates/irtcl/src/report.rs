//! Reporting: difficulty histograms, run summaries and their aggregation,
//! and small dependency-free SVG plots.
//!
//! Every artifact here is deterministic — no timestamps, no system state —
//! so byte-identical inputs produce byte-identical outputs and runs can be
//! diffed directly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crowd::BinAccuracy;
use crate::curriculum::DifficultyTable;
use crate::error::{Error, Result};
use crate::io;
use crate::irt::{check_header, csv_error};
use crate::stats;
use crate::student::CurriculumTrace;

/// Fixed-width histogram with the usual shape moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Left edge of the first bin (a multiple of `bin_width`).
    pub lo: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
}

impl Histogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.counts.len())
            .map(|k| self.lo + k as f64 * self.bin_width)
            .collect()
    }
}

/// Histogram of a difficulty table. Bins are aligned to multiples of
/// `bin_width`; values exactly on the top edge land in the last bin.
pub fn difficulty_histogram(table: &DifficultyTable, bin_width: f64) -> Result<Histogram> {
    if table.is_empty() {
        return Err(Error::InvalidInput("cannot histogram an empty difficulty table".into()));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "bin width must be positive and finite, got {bin_width}"
        )));
    }
    let values: Vec<f64> = table.iter().map(|(_, s)| s).collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min / bin_width).floor() * bin_width;
    let n_bins = (((max - lo) / bin_width).floor() as usize + 1).max(1);
    let mut counts = vec![0u64; n_bins];
    for v in &values {
        let idx = (((v - lo) / bin_width).floor() as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram {
        lo,
        bin_width,
        counts,
        n: values.len(),
        mean: stats::mean(&values),
        std: if values.len() > 1 { stats::sample_std(&values) } else { 0.0 },
        skewness: stats::skewness(&values),
    })
}

/// One training run boiled down to the numbers the grids compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub scheduler: String,
    /// Difficulty source the scheduler consumed (`none` for the baseline).
    pub dm: String,
    pub seed: u64,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub n_epochs: usize,
    pub total_wall_ms: f64,
    pub ability_wall_ms: f64,
}

impl RunSummary {
    pub fn from_trace(
        run_id: impl Into<String>,
        scheduler: &str,
        dm: &str,
        seed: u64,
        trace: &CurriculumTrace,
    ) -> Result<Self> {
        if trace.records.is_empty() {
            return Err(Error::InvalidInput("cannot summarize an empty trace".into()));
        }
        Ok(Self {
            run_id: run_id.into(),
            scheduler: scheduler.to_string(),
            dm: dm.to_string(),
            seed,
            best_val_acc: trace.best_val_acc().expect("non-empty trace"),
            best_epoch: trace.best_epoch().expect("non-empty trace"),
            n_epochs: trace.records.len(),
            total_wall_ms: trace.records.iter().map(|r| r.epoch_wall_ms).sum(),
            ability_wall_ms: trace.records.iter().map(|r| r.ability_est_wall_ms).sum(),
        })
    }
}

const SUMMARY_HEADER: [&str; 9] = [
    "run_id",
    "scheduler",
    "dm",
    "seed",
    "best_val_acc",
    "best_epoch",
    "n_epochs",
    "total_wall_ms",
    "ability_wall_ms",
];

pub fn write_summary_csv(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(SUMMARY_HEADER).map_err(|e| csv_error(path, &e))?;
    for r in runs {
        writer
            .write_record([
                r.run_id.clone(),
                r.scheduler.clone(),
                r.dm.clone(),
                r.seed.to_string(),
                format_float(r.best_val_acc),
                r.best_epoch.to_string(),
                r.n_epochs.to_string(),
                format_float(r.total_wall_ms),
                format_float(r.ability_wall_ms),
            ])
            .map_err(|e| csv_error(path, &e))?;
    }
    let bytes = writer.into_inner().expect("flush csv buffer");
    io::atomic_write(path, &bytes)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<RunSummary>> {
    let raw = io::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
    check_header(path, &mut reader, &SUMMARY_HEADER)?;
    let mut runs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |msg: String| Error::ParseLine { path: path.to_path_buf(), line, msg };
        if record.len() != SUMMARY_HEADER.len() {
            return Err(parse(format!("expected 9 fields, got {}", record.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| parse(format!("bad number `{s}`")))
        };
        runs.push(RunSummary {
            run_id: record[0].to_string(),
            scheduler: record[1].to_string(),
            dm: record[2].to_string(),
            seed: record[3].parse().map_err(|_| parse(format!("bad seed `{}`", &record[3])))?,
            best_val_acc: num(&record[4])?,
            best_epoch: record[5]
                .parse()
                .map_err(|_| parse(format!("bad epoch `{}`", &record[5])))?,
            n_epochs: record[6]
                .parse()
                .map_err(|_| parse(format!("bad epoch count `{}`", &record[6])))?,
            total_wall_ms: num(&record[7])?,
            ability_wall_ms: num(&record[8])?,
        });
    }
    Ok(runs)
}

/// Mean/spread of the runs sharing a (scheduler, difficulty source) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scheduler: String,
    pub dm: String,
    pub n_runs: usize,
    pub mean_best_val_acc: f64,
    /// Unbiased standard deviation; zero when the cell has a single run.
    pub std_best_val_acc: f64,
    pub mean_best_epoch: f64,
    pub mean_total_wall_ms: f64,
}

impl AggregateRow {
    pub fn single_run(&self) -> bool {
        self.n_runs == 1
    }
}

/// Group summaries by (scheduler, dm) and average, sorted by the group key.
pub fn aggregate_runs(runs: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: std::collections::BTreeMap<(String, String), Vec<&RunSummary>> =
        std::collections::BTreeMap::new();
    for r in runs {
        groups.entry((r.scheduler.clone(), r.dm.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((scheduler, dm), rs)| {
            let accs: Vec<f64> = rs.iter().map(|r| r.best_val_acc).collect();
            AggregateRow {
                scheduler,
                dm,
                n_runs: rs.len(),
                mean_best_val_acc: stats::mean(&accs),
                std_best_val_acc: if accs.len() > 1 { stats::sample_std(&accs) } else { 0.0 },
                mean_best_epoch: stats::mean(
                    &rs.iter().map(|r| r.best_epoch as f64).collect::<Vec<_>>(),
                ),
                mean_total_wall_ms: stats::mean(
                    &rs.iter().map(|r| r.total_wall_ms).collect::<Vec<_>>(),
                ),
            }
        })
        .collect()
}

const AGGREGATE_HEADER: [&str; 7] = [
    "scheduler",
    "dm",
    "n_runs",
    "mean_best_val_acc",
    "std_best_val_acc",
    "mean_best_epoch",
    "mean_total_wall_ms",
];

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(AGGREGATE_HEADER).map_err(|e| csv_error(path, &e))?;
    for r in rows {
        writer
            .write_record([
                r.scheduler.clone(),
                r.dm.clone(),
                r.n_runs.to_string(),
                format_float(r.mean_best_val_acc),
                format_float(r.std_best_val_acc),
                format_float(r.mean_best_epoch),
                format_float(r.mean_total_wall_ms),
            ])
            .map_err(|e| csv_error(path, &e))?;
    }
    let bytes = writer.into_inner().expect("flush csv buffer");
    io::atomic_write(path, &bytes)
}

fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("NaN") && !s.contains("inf") {
        s.push_str(".0");
    }
    s
}

// ---------------------------------------------------------------------------
// SVG plots

const PALETTE: [&str; 6] = ["#1f6f8b", "#c2571a", "#3a7d44", "#8c2155", "#6b5b95", "#99742c"];
const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 400.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 44.0;

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
             viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"sans-serif\">"
        );
        let _ = writeln!(
            body,
            "<rect x=\"0\" y=\"0\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"#ffffff\"/>"
        );
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            PLOT_W / 2.0,
            escape(title)
        );
        Self { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
             stroke=\"{stroke}\" stroke-width=\"{width}\"/>"
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, opacity: f64, dash: Option<&str>) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" \
             stroke-width=\"{width}\" stroke-opacity=\"{opacity}\"{dash}/>",
            coords.join(" ")
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             fill=\"{fill}\" fill-opacity=\"{opacity}\"/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" \
             font-size=\"{size}\">{}</text>",
            escape(content)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Affine map from data space to the plot area.
struct Axes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_L + (v - self.x_min) / span * (PLOT_W - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        PLOT_H - MARGIN_B - (v - self.y_min) / span * (PLOT_H - MARGIN_T - MARGIN_B)
    }

    fn frame(&self, canvas: &mut Canvas, x_label: &str, y_label: &str) {
        let (x0, y0) = (MARGIN_L, PLOT_H - MARGIN_B);
        let (x1, y1) = (PLOT_W - MARGIN_R, MARGIN_T);
        canvas.line(x0, y0, x1, y0, "#333333", 1.0);
        canvas.line(x0, y0, x0, y1, "#333333", 1.0);
        canvas.text((x0 + x1) / 2.0, PLOT_H - 10.0, "middle", 11, x_label);
        canvas.text(14.0, (y0 + y1) / 2.0, "middle", 11, y_label);
        for k in 0..=4 {
            let fx = self.x_min + (self.x_max - self.x_min) * k as f64 / 4.0;
            let fy = self.y_min + (self.y_max - self.y_min) * k as f64 / 4.0;
            let px = self.x(fx);
            let py = self.y(fy);
            canvas.line(px, y0, px, y0 + 4.0, "#333333", 1.0);
            canvas.text(px, y0 + 16.0, "middle", 10, &format_tick(fx));
            canvas.line(x0 - 4.0, py, x0, py, "#333333", 1.0);
            canvas.text(x0 - 6.0, py + 3.0, "end", 10, &format_tick(fy));
        }
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 || (v.fract() == 0.0 && v.abs() < 1e6) {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Validation-accuracy curves for several runs, with each run's fraction of
/// training data used per epoch drawn as a dashed overlay on the same axes.
pub fn plot_convergence(traces: &[(String, &CurriculumTrace)], path: &Path) -> Result<()> {
    if traces.is_empty() || traces.iter().any(|(_, t)| t.records.is_empty()) {
        return Err(Error::InvalidInput("convergence plot needs non-empty traces".into()));
    }
    let max_epoch =
        traces.iter().flat_map(|(_, t)| t.records.iter().map(|r| r.epoch)).max().unwrap_or(0);
    let axes = Axes { x_min: 0.0, x_max: max_epoch.max(1) as f64, y_min: 0.0, y_max: 1.0 };
    let mut canvas = Canvas::new("validation accuracy and data usage by epoch");
    axes.frame(&mut canvas, "epoch", "accuracy / fraction");
    for (k, (label, trace)) in traces.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let acc: Vec<(f64, f64)> = trace
            .records
            .iter()
            .map(|r| (axes.x(r.epoch as f64), axes.y(r.val_acc)))
            .collect();
        let usage: Vec<(f64, f64)> = trace
            .records
            .iter()
            .map(|r| (axes.x(r.epoch as f64), axes.y(r.frac_selected)))
            .collect();
        canvas.polyline(&acc, color, 1.8, 1.0, None);
        canvas.polyline(&usage, color, 1.2, 0.65, Some("5,3"));
        let ly = MARGIN_T + 14.0 * (k as f64 + 1.0);
        canvas.line(PLOT_W - 150.0, ly - 4.0, PLOT_W - 130.0, ly - 4.0, color, 1.8);
        canvas.text(PLOT_W - 126.0, ly, "start", 10, label);
    }
    io::atomic_write(path, canvas.finish().as_bytes())
}

/// Bar plot of a difficulty histogram, annotated with its moments.
pub fn plot_difficulty_histogram(hist: &Histogram, path: &Path) -> Result<()> {
    let max_count = hist.counts.iter().max().copied().unwrap_or(0).max(1);
    let hi = hist.lo + hist.bin_width * hist.counts.len() as f64;
    let axes = Axes { x_min: hist.lo, x_max: hi, y_min: 0.0, y_max: max_count as f64 };
    let mut canvas = Canvas::new("difficulty distribution");
    axes.frame(&mut canvas, "difficulty", "items");
    for (k, &count) in hist.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let x0 = axes.x(hist.lo + k as f64 * hist.bin_width);
        let x1 = axes.x(hist.lo + (k + 1) as f64 * hist.bin_width);
        let y = axes.y(count as f64);
        canvas.rect(x0 + 0.5, y, (x1 - x0 - 1.0).max(0.5), axes.y(0.0) - y, PALETTE[0], 0.85);
    }
    canvas.text(
        PLOT_W - MARGIN_R - 4.0,
        MARGIN_T + 14.0,
        "end",
        10,
        &format!(
            "n={} mean={:.3} std={:.3} skew={:.3}",
            hist.n, hist.mean, hist.std, hist.skewness
        ),
    );
    io::atomic_write(path, canvas.finish().as_bytes())
}

/// Per-subject accuracy across difficulty bins (thin lines) with the
/// across-subject mean drawn on top.
pub fn plot_bin_accuracy(bins: &BinAccuracy, path: &Path) -> Result<()> {
    let n_bins = bins.n_bins();
    let axes = Axes { x_min: 0.0, x_max: (n_bins - 1).max(1) as f64, y_min: 0.0, y_max: 1.0 };
    let mut canvas = Canvas::new("subject accuracy by difficulty bin");
    axes.frame(&mut canvas, "difficulty bin", "accuracy");
    for row in &bins.accuracy {
        let pts: Vec<(f64, f64)> = row
            .iter()
            .enumerate()
            .filter_map(|(b, acc)| acc.map(|a| (axes.x(b as f64), axes.y(a))))
            .collect();
        canvas.polyline(&pts, PALETTE[0], 0.8, 0.35, None);
    }
    let mean_pts: Vec<(f64, f64)> = bins
        .mean_by_bin()
        .iter()
        .enumerate()
        .filter_map(|(b, acc)| acc.map(|a| (axes.x(b as f64), axes.y(a))))
        .collect();
    canvas.polyline(&mean_pts, PALETTE[1], 2.2, 1.0, None);
    canvas.text(
        PLOT_W - MARGIN_R - 4.0,
        MARGIN_T + 14.0,
        "end",
        10,
        &format!("{} subjects", bins.subjects.len()),
    );
    io::atomic_write(path, canvas.finish().as_bytes())
}
