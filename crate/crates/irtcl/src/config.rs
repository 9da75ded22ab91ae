//! Run configuration.
//!
//! One JSON document configures every stage — crowd simulation, variational
//! fitting, ability estimation, student training, competence schedule,
//! benchmark generation, and the ablation grid — so a run can be reproduced
//! from the config file and nothing else. Unknown keys are rejected
//! everywhere: a typo'd setting fails loudly instead of silently falling
//! back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ability::AbilityEstConfig;
use crate::crowd::CrowdConfig;
use crate::curriculum::{CompetenceSchedule, DifficultySource};
use crate::error::{Error, Result};
use crate::io;
use crate::student::{BenchmarkConfig, SchedulerKind, StudentConfig};
use crate::vi::{FitConfig, HierarchicalPriorConfig};

/// The ablation grid: which difficulty sources and schedulers to cross,
/// over which seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    pub dm_sources: Vec<DifficultySource>,
    pub schedulers: Vec<SchedulerKind>,
    /// Also run the no-curriculum baseline on every seed.
    pub include_baseline: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            dm_sources: vec![
                DifficultySource::IrtAc,
                DifficultySource::SentenceLength,
                DifficultySource::WordRarity,
            ],
            schedulers: vec![
                SchedulerKind::DdsMae,
                SchedulerKind::CompetenceLinear,
                SchedulerKind::CompetenceRoot,
            ],
            include_baseline: true,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("ablation.seeds must be non-empty".into()));
        }
        if self.dm_sources.is_empty() || self.schedulers.is_empty() {
            return Err(Error::InvalidInput(
                "ablation needs at least one difficulty source and one scheduler".into(),
            ));
        }
        if self.dm_sources.contains(&DifficultySource::External) {
            return Err(Error::InvalidInput(
                "ablation derives its difficulty tables; `external` cannot be a grid source"
                    .into(),
            ));
        }
        if self.schedulers.contains(&SchedulerKind::None) {
            return Err(Error::InvalidInput(
                "the baseline is controlled by ablation.include_baseline, not the scheduler \
                 list"
                    .into(),
            ));
        }
        let n_cells = self.dm_sources.len() * self.schedulers.len()
            + usize::from(self.include_baseline);
        if n_cells < 2 {
            return Err(Error::InvalidInput(
                "ablation grid has a single cell; nothing to compare".into(),
            ));
        }
        Ok(())
    }

    /// Number of grid cells (dm x scheduler, plus the baseline).
    pub fn n_cells(&self) -> usize {
        self.dm_sources.len() * self.schedulers.len() + usize::from(self.include_baseline)
    }
}

/// Everything a run needs, with working defaults for every field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; `apply_master_seed` pushes it into every stage.
    pub seed: u64,
    pub crowd: CrowdConfig,
    pub prior: HierarchicalPriorConfig,
    pub fit: FitConfig,
    pub ability: AbilityEstConfig,
    pub student: StudentConfig,
    pub competence: CompetenceSchedule,
    pub benchmark: BenchmarkConfig,
    pub ablation: AblationConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = io::read_json(path)?;
        cfg.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        self.crowd.validate()?;
        self.prior.validate()?;
        self.fit.validate()?;
        self.ability.validate()?;
        self.student.validate()?;
        self.competence.validate()?;
        self.benchmark.validate()?;
        self.ablation.validate()?;
        Ok(())
    }

    /// Point every stage at the same master seed. Stage RNGs consume it in
    /// different streams, so sharing the value is safe and keeps `--seed N`
    /// meaning "the whole run, reproducibly".
    pub fn apply_master_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.crowd.seed = seed;
        self.fit.seed = seed;
        self.student.seed = seed;
        self.benchmark.seed = seed;
    }
}
