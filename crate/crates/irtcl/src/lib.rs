//! Curriculum learning driven by item response theory.
//!
//! The pipeline, end to end:
//!
//! 1. Train a *crowd* of cheap, deliberately varied learners and record which
//!    training items each one gets right ([`crowd`]).
//! 2. Fit a Rasch model to that binary response matrix with stochastic
//!    variational inference, yielding a difficulty estimate per item and an
//!    ability estimate per crowd member ([`vi`], [`irt`]).
//! 3. Train the model you actually care about, re-estimating its ability
//!    every epoch from a subsample of its own predictions and showing it only
//!    items whose difficulty it is ready for ([`ability`], [`curriculum`],
//!    [`student`]). Competence schedules and text heuristics are available as
//!    baselines.
//! 4. Summarize runs, aggregate ablation grids, and render SVG plots
//!    ([`report`]).
//!
//! Every stage is driven by explicit seeds and reruns bit-identically.
//!
//! The `examples/` directory is the best starting point; each file is a
//! small, runnable demonstration of one capability:
//!
//! * `fit_rasch.rs` — generate synthetic responses, fit, check recovery.
//! * `estimate_ability.rs` — ability estimation against a grid search,
//!   with the stagnation bump rule.
//! * `heuristic_difficulty.rs` — sentence-length and word-rarity scoring,
//!   competence schedules.
//! * `simulate_crowd.rs` — artificial crowd on a synthetic benchmark,
//!   accuracy by difficulty bin.
//! * `train_dds_mae.rs` — full curriculum training loop versus a baseline.
//! * `ablation.rs` — a small scheduler x difficulty-source grid.
//! * `report_svg.rs` — plot emission.
//!
//! The same capabilities are exposed as subcommands of the thin `irtcl`
//! binary (`simulate-crowd`, `fit-irt`, `score`, `train`, `ablate`,
//! `report`) for pipeline use; see the README.

pub mod ability;
pub mod cli;
pub mod config;
pub mod crowd;
pub mod curriculum;
pub mod error;
pub mod io;
pub mod irt;
pub mod report;
pub mod stats;
pub mod student;
pub mod vi;

pub use error::{Error, ErrorKind, Result};
