//! Command-line interface.
//!
//! Every pipeline stage is a subcommand reading and writing plain files, so
//! a full experiment is a short shell script: `gen-benchmark` makes the
//! splits, `simulate-crowd` grades them, `fit-irt` turns grades into
//! difficulties, `train` runs a student under a scheduler, `ablate` sweeps
//! the whole grid, and `report` renders the artifacts. All commands exit
//! `0` on success; failures print a one-line JSON object to stderr
//! (`{"kind": ..., "message": ...}`) and exit `1` for invalid inputs or `2`
//! for runtime failures. Set `IRTCL_LOG=info` (or `debug`) for progress.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::crowd::{accuracy_by_difficulty_bin, simulate_crowd, DEFAULT_BIN_EDGES};
use crate::curriculum::{
    corpus_counts, read_corpus_csv, score_sentence_length, score_word_rarity, DifficultySource,
    DifficultyTable,
};
use crate::error::{Error, Result};
use crate::irt::ResponseMatrix;
use crate::report::{
    aggregate_runs, difficulty_histogram, plot_bin_accuracy, plot_convergence,
    plot_difficulty_histogram, read_summary_csv, write_aggregate_csv, write_summary_csv,
    RunSummary,
};
use crate::student::{
    generate_benchmark, train_with_curriculum, CurriculumTrace, LabeledDataset, SchedulerKind,
    StudentConfig,
};
use crate::vi::{extract_difficulties, fit_vi};

#[derive(Debug, Parser)]
#[command(
    name = "irtcl",
    version,
    about = "Crowd-calibrated difficulty measurement and curriculum training \
             for desk-scale classifiers"
)]
pub struct Cli {
    /// JSON run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Master seed, overriding every stage seed from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic noisy-hard benchmark splits.
    GenBenchmark {
        /// Output directory (writes train.csv and val.csv).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train an artificial crowd on a held-out pool and grade it on the
    /// training items.
    SimulateCrowd {
        /// Items to grade (dataset CSV).
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        /// Held-out pool the crowd members train on (dataset CSV).
        #[arg(long, value_name = "FILE")]
        pool: PathBuf,
        /// Output directory (writes responses.csv).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Fit the hierarchical response model to graded responses.
    FitIrt {
        /// Graded responses CSV (`subject_id,item_id,response`).
        #[arg(long, value_name = "FILE")]
        responses: PathBuf,
        /// Output directory (writes posterior.json and difficulty.csv).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score item difficulty with a text heuristic.
    Score {
        #[arg(long, value_enum)]
        method: ScoreMethod,
        /// Corpus CSV (`item_id,text[,text2,...]`) or dataset CSV with a
        /// text column.
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Output directory (writes difficulty.csv).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train a student classifier under a curriculum scheduler.
    Train {
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        val: PathBuf,
        /// Difficulty table CSV (required unless the scheduler is `none`).
        #[arg(long, value_name = "FILE")]
        dm: Option<PathBuf>,
        /// none | dds-mae | linear | root (default: from the config).
        #[arg(long)]
        scheduler: Option<String>,
        /// Output directory (writes trace.csv, checkpoint.json,
        /// summary.csv).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the full difficulty-source x scheduler x seed grid.
    Ablate {
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        val: PathBuf,
        /// Output directory (writes per-source difficulty tables, traces,
        /// summary.csv, ablation.csv).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Aggregate run summaries and render plots.
    Report {
        /// summary.csv produced by `train` or `ablate`.
        #[arg(long, value_name = "FILE")]
        summary: PathBuf,
        /// Trace CSVs to overlay in the convergence plot (repeatable).
        #[arg(long = "trace", value_name = "FILE")]
        traces: Vec<PathBuf>,
        /// Difficulty table, for the histogram plot.
        #[arg(long, value_name = "FILE")]
        dm: Option<PathBuf>,
        /// Response matrix, for the accuracy-by-bin plot (needs --dm too).
        #[arg(long, value_name = "FILE")]
        responses: Option<PathBuf>,
        /// Output directory (writes ablation.csv and SVG plots).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScoreMethod {
    SentenceLength,
    WordRarity,
}

/// Parse the command line and execute it.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::InvalidInput(e.to_string())),
    };

    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_master_seed(seed);
    }
    cfg.validate()?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidInput("--jobs must be >= 1".into()));
        }
        // ignore the error if a pool already exists (e.g. repeated calls in
        // one process)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }

    match &cli.command {
        Command::GenBenchmark { out } => cmd_gen_benchmark(&cfg, out),
        Command::SimulateCrowd { train, pool, out } => cmd_simulate_crowd(&cfg, train, pool, out),
        Command::FitIrt { responses, out } => cmd_fit_irt(&cfg, responses, out),
        Command::Score { method, corpus, out } => cmd_score(*method, corpus, out),
        Command::Train { train, val, dm, scheduler, out } => {
            cmd_train(&cfg, train, val, dm.as_deref(), scheduler.as_deref(), out)
        }
        Command::Ablate { train, val, out } => cmd_ablate(&cfg, train, val, out),
        Command::Report { summary, traces, dm, responses, out } => {
            cmd_report(summary, traces, dm.as_deref(), responses.as_deref(), out)
        }
    }
}

/// Process entry point: run, and turn failures into a one-line JSON object
/// on stderr plus the exit code for the error's kind.
pub fn main_entry() -> std::process::ExitCode {
    init_logging();
    match run(std::env::args_os()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({
                "kind": e.kind().as_str(),
                "message": e.to_string(),
            });
            eprintln!("{msg}");
            std::process::ExitCode::from(e.kind().exit_code())
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter("IRTCL_LOG");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn cmd_gen_benchmark(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (train, val) = generate_benchmark(&cfg.benchmark)?;
    train.write_csv(&out.join("train.csv"))?;
    val.write_csv(&out.join("val.csv"))?;
    log::info!(
        "wrote {} train rows and {} val rows to {}",
        train.len(),
        val.len(),
        out.display()
    );
    Ok(())
}

fn cmd_simulate_crowd(cfg: &RunConfig, train: &Path, pool: &Path, out: &Path) -> Result<()> {
    let train = LabeledDataset::read_csv(train)?;
    let pool = LabeledDataset::read_csv(pool)?;
    let matrix = simulate_crowd(&pool, &train, &cfg.crowd)?;
    matrix.write_csv(&out.join("responses.csv"))?;
    log::info!(
        "wrote {} responses ({} subjects x {} items) to {}",
        matrix.n_responses(),
        matrix.n_subjects(),
        matrix.n_items(),
        out.display()
    );
    Ok(())
}

fn cmd_fit_irt(cfg: &RunConfig, responses: &Path, out: &Path) -> Result<()> {
    let matrix = ResponseMatrix::read_csv(responses)?;
    let posterior = fit_vi(&matrix, &cfg.prior, &cfg.fit)?;
    posterior.save_json(&out.join("posterior.json"))?;
    let table = extract_difficulties(&posterior)?;
    table.write_csv(&out.join("difficulty.csv"))?;
    log::info!(
        "fit {} items / {} subjects in {} steps; wrote posterior.json and difficulty.csv",
        matrix.n_items(),
        matrix.n_subjects(),
        posterior.elbo_trace.len()
    );
    Ok(())
}

/// Sniff whether a CSV is a bare corpus or a full dataset with texts.
fn load_texts(path: &Path) -> Result<std::collections::BTreeMap<crate::irt::ItemId, String>> {
    let raw = crate::io::read_to_string(path)?;
    let first_line = raw.lines().next().unwrap_or("");
    if first_line.starts_with("item_id,text") {
        read_corpus_csv(path)
    } else {
        LabeledDataset::read_csv(path)?.texts_by_item()
    }
}

fn cmd_score(method: ScoreMethod, corpus: &Path, out: &Path) -> Result<()> {
    let texts = load_texts(corpus)?;
    let table = match method {
        ScoreMethod::SentenceLength => score_sentence_length(&texts)?,
        ScoreMethod::WordRarity => {
            let counts = corpus_counts(&texts);
            score_word_rarity(&texts, &counts)?
        }
    };
    table.write_csv(&out.join("difficulty.csv"))?;
    log::info!("scored {} items with {}", table.len(), table.source());
    Ok(())
}

fn cmd_train(
    cfg: &RunConfig,
    train: &Path,
    val: &Path,
    dm: Option<&Path>,
    scheduler: Option<&str>,
    out: &Path,
) -> Result<()> {
    let train = LabeledDataset::read_csv(train)?;
    let val = LabeledDataset::read_csv(val)?;
    let mut scfg = cfg.student.clone();
    if let Some(s) = scheduler {
        scfg.scheduler = s.parse()?;
    }
    let table = match (scfg.scheduler, dm) {
        (SchedulerKind::None, _) => None,
        (_, Some(path)) => Some(DifficultyTable::read_csv(path)?),
        (other, None) => {
            return Err(Error::InvalidInput(format!(
                "scheduler `{other}` needs a difficulty table; pass --dm"
            )))
        }
    };
    let (model, trace) = train_with_curriculum(
        &train,
        &val,
        table.as_ref(),
        &scfg,
        &cfg.ability,
        Some(&cfg.competence),
    )?;
    trace.write_csv(&out.join("trace.csv"))?;
    model.save_json(&out.join("checkpoint.json"))?;
    let dm_name = table.map_or("none", |t| t.source().as_str());
    let run_id = format!("{dm_name}-{}-s{}", scfg.scheduler.as_str(), scfg.seed);
    let summary =
        RunSummary::from_trace(run_id, scfg.scheduler.as_str(), dm_name, scfg.seed, &trace)?;
    write_summary_csv(&out.join("summary.csv"), std::slice::from_ref(&summary))?;
    log::info!(
        "trained {} epochs; best val acc {:.4} at epoch {}",
        summary.n_epochs,
        summary.best_val_acc,
        summary.best_epoch
    );
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, train: &Path, val: &Path, out: &Path) -> Result<()> {
    use rayon::prelude::*;

    let train = LabeledDataset::read_csv(train)?;
    let val = LabeledDataset::read_csv(val)?;
    let ab = &cfg.ablation;

    // Stage 1: one difficulty table per source, shared by every seed.
    let mut tables: Vec<(DifficultySource, DifficultyTable)> = Vec::new();
    for source in &ab.dm_sources {
        let table = match source {
            DifficultySource::IrtAc => {
                let matrix = simulate_crowd(&val, &train, &cfg.crowd)?;
                matrix.write_csv(&out.join("responses.csv"))?;
                let posterior = fit_vi(&matrix, &cfg.prior, &cfg.fit)?;
                posterior.save_json(&out.join("posterior.json"))?;
                extract_difficulties(&posterior)?
            }
            // text-heuristic scores are standardized so the grid artifacts
            // share the ability scale the thresholds move on
            DifficultySource::SentenceLength => {
                score_sentence_length(&train.texts_by_item()?)?.standardized()
            }
            DifficultySource::WordRarity => {
                let texts = train.texts_by_item()?;
                let counts = corpus_counts(&texts);
                score_word_rarity(&texts, &counts)?.standardized()
            }
            DifficultySource::External => unreachable!("rejected by AblationConfig::validate"),
        };
        table.write_csv(&out.join(format!("difficulty-{source}.csv")))?;
        log::info!("difficulty table for {source}: {} items", table.len());
        tables.push((*source, table));
    }

    // Stage 2: the grid. Baseline cells carry no table.
    struct Cell {
        dm: Option<usize>, // index into tables
        scheduler: SchedulerKind,
        seed: u64,
    }
    let mut cells = Vec::new();
    for (k, _) in tables.iter().enumerate() {
        for &scheduler in &ab.schedulers {
            for &seed in &ab.seeds {
                cells.push(Cell { dm: Some(k), scheduler, seed });
            }
        }
    }
    if ab.include_baseline {
        for &seed in &ab.seeds {
            cells.push(Cell { dm: None, scheduler: SchedulerKind::None, seed });
        }
    }

    let runs: Vec<RunSummary> = cells
        .par_iter()
        .map(|cell| -> Result<RunSummary> {
            let (dm_name, table) = match cell.dm {
                Some(k) => (tables[k].0.as_str(), Some(&tables[k].1)),
                None => ("none", None),
            };
            let scfg = StudentConfig {
                scheduler: cell.scheduler,
                seed: cell.seed,
                ..cfg.student.clone()
            };
            let (_, trace) = train_with_curriculum(
                &train,
                &val,
                table,
                &scfg,
                &cfg.ability,
                Some(&cfg.competence),
            )?;
            let run_id = format!("{dm_name}-{}-s{}", cell.scheduler.as_str(), cell.seed);
            trace.write_csv(&out.join(format!("trace-{run_id}.csv")))?;
            RunSummary::from_trace(run_id, cell.scheduler.as_str(), dm_name, cell.seed, &trace)
        })
        .collect::<Result<_>>()?;

    write_summary_csv(&out.join("summary.csv"), &runs)?;
    let agg = aggregate_runs(&runs);
    write_aggregate_csv(&out.join("ablation.csv"), &agg)?;
    if let Some(best) =
        agg.iter().max_by(|a, b| a.mean_best_val_acc.total_cmp(&b.mean_best_val_acc))
    {
        log::info!(
            "best cell: {} + {} with mean val acc {:.4} over {} runs",
            best.dm,
            best.scheduler,
            best.mean_best_val_acc,
            best.n_runs
        );
    }
    Ok(())
}

fn cmd_report(
    summary: &Path,
    traces: &[PathBuf],
    dm: Option<&Path>,
    responses: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let runs = read_summary_csv(summary)?;
    if runs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no runs to aggregate",
            summary.display()
        )));
    }
    write_aggregate_csv(&out.join("ablation.csv"), &aggregate_runs(&runs))?;

    if !traces.is_empty() {
        let loaded: Vec<(String, CurriculumTrace)> = traces
            .iter()
            .map(|p| {
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                CurriculumTrace::read_csv(p).map(|t| (label, t))
            })
            .collect::<Result<_>>()?;
        let refs: Vec<(String, &CurriculumTrace)> =
            loaded.iter().map(|(l, t)| (l.clone(), t)).collect();
        plot_convergence(&refs, &out.join("convergence.svg"))?;
    }

    if let Some(dm_path) = dm {
        let table = DifficultyTable::read_csv(dm_path)?;
        let hist = difficulty_histogram(&table, 0.5)?;
        plot_difficulty_histogram(&hist, &out.join("difficulty_hist.svg"))?;
        if let Some(resp_path) = responses {
            let matrix = ResponseMatrix::read_csv(resp_path)?;
            let bins = accuracy_by_difficulty_bin(&matrix, &table, &DEFAULT_BIN_EDGES)?;
            plot_bin_accuracy(&bins, &out.join("bin_accuracy.svg"))?;
        }
    } else if responses.is_some() {
        return Err(Error::InvalidInput(
            "--responses needs --dm to place items into difficulty bins".into(),
        ));
    }
    log::info!("report written to {}", out.display());
    Ok(())
}
