//! Service configuration, loaded from a JSON file. Every field has a default,
//! so `{}` is a valid configuration using the mock provider.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{builtin_tasks, validate_task, Condition, InterventionConfig, TaskSpec};
use crate::error::{DomainError, Result};
use crate::llm::ProviderConfig;
use crate::pipeline::PromptStore;
use crate::session::{InstrumentSet, OrderPolicy};

pub const DEFAULT_TEAM_BUILDING_SECS: u64 = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub intervention: InterventionConfig,
    pub provider: ProviderConfig,
    /// Task files in presentation order; empty means the two built-in tasks.
    pub tasks: Vec<PathBuf>,
    pub instruments_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    pub team_building_secs: u64,
    /// Overrides every task's own duration when set.
    pub task_duration_secs: Option<u64>,
    /// Forces this condition order instead of counterbalancing.
    pub condition_order: Option<[Condition; 2]>,
    pub data_dir: PathBuf,
    pub listen: String,
    pub static_dir: Option<PathBuf>,
    /// Token required on the admin connection; `None` leaves it open.
    pub admin_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            intervention: InterventionConfig::default(),
            provider: ProviderConfig::default(),
            tasks: Vec::new(),
            instruments_dir: None,
            prompts_dir: None,
            team_building_secs: DEFAULT_TEAM_BUILDING_SECS,
            task_duration_secs: None,
            condition_order: None,
            data_dir: PathBuf::from("data"),
            listen: "127.0.0.1:8080".into(),
            static_dir: None,
            admin_token: None,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.intervention.validate()?;
        self.provider.validate()?;
        if !self.tasks.is_empty() && self.tasks.len() != 2 {
            return Err(DomainError::InvalidConfig(format!("expected 2 task files, got {}", self.tasks.len())).into());
        }
        if let Some([a, b]) = self.condition_order {
            if a == b {
                return Err(DomainError::InvalidConfig("condition_order must list both conditions".into()).into());
            }
        }
        if self.task_duration_secs == Some(0) {
            return Err(DomainError::InvalidConfig("task_duration_secs must be positive".into()).into());
        }
        Ok(())
    }

    pub fn order_policy(&self) -> OrderPolicy {
        match self.condition_order {
            Some(order) => OrderPolicy::Fixed(order),
            None => OrderPolicy::Counterbalance,
        }
    }

    pub fn load_tasks(&self) -> Result<Vec<TaskSpec>> {
        let mut tasks = if self.tasks.is_empty() {
            builtin_tasks()
        } else {
            self.tasks.iter().map(|p| TaskSpec::load(p)).collect::<Result<Vec<_>>>()?
        };
        if let Some(secs) = self.task_duration_secs {
            for t in &mut tasks {
                t.duration_secs = secs;
            }
        }
        for t in &tasks {
            validate_task(t.clone())?;
        }
        Ok(tasks)
    }

    pub fn load_instruments(&self) -> Result<InstrumentSet> {
        match &self.instruments_dir {
            Some(dir) => InstrumentSet::load_dir(dir),
            None => Ok(InstrumentSet::builtin()),
        }
    }

    pub fn load_prompts(&self) -> Result<Arc<PromptStore>> {
        Ok(Arc::new(match &self.prompts_dir {
            Some(dir) => PromptStore::watch_dir(dir)?,
            None => PromptStore::builtin(),
        }))
    }
}
