use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RoleKind;
use crate::error::{DomainError, Result};

pub const DEFAULT_TASK_DURATION_SECS: u64 = 20 * 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOption {
    pub label: String,
    /// Named attributes shown on the option card, e.g. years of service.
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
}

/// A decision task with exactly three options and a separate briefing per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub title: String,
    pub options: Vec<TaskOption>,
    pub briefing_senior: String,
    pub briefing_junior: String,
    #[serde(default = "default_duration")]
    pub duration_secs: u64,
}

fn default_duration() -> u64 {
    DEFAULT_TASK_DURATION_SECS
}

impl TaskSpec {
    pub fn briefing_for(&self, role: RoleKind) -> &str {
        match role {
            RoleKind::Senior => &self.briefing_senior,
            RoleKind::Junior => &self.briefing_junior,
        }
    }

    pub fn option_labels(&self) -> Vec<&str> {
        self.options.iter().map(|o| o.label.as_str()).collect()
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: TaskSpec = serde_json::from_str(json).map_err(|e| DomainError::InvalidTask(e.to_string()))?;
        validate_task(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

pub fn validate_task(spec: TaskSpec) -> Result<TaskSpec> {
    if spec.options.len() != 3 {
        return Err(DomainError::InvalidTask(format!(
            "task `{}` has {} options, expected exactly 3",
            spec.id,
            spec.options.len()
        ))
        .into());
    }
    if spec.options.iter().any(|o| o.label.trim().is_empty()) {
        return Err(DomainError::InvalidTask(format!("task `{}` has an unlabeled option", spec.id)).into());
    }
    if spec.briefing_senior.trim().is_empty() || spec.briefing_junior.trim().is_empty() {
        return Err(DomainError::InvalidTask(format!("task `{}` is missing a role briefing", spec.id)).into());
    }
    if spec.duration_secs == 0 {
        return Err(DomainError::InvalidTask(format!("task `{}` has a zero duration", spec.id)).into());
    }
    Ok(spec)
}

const PROMOTION_JSON: &str = include_str!("../../assets/tasks/promotion.json");
const CONTRACTOR_JSON: &str = include_str!("../../assets/tasks/contractor.json");

/// The two shipped tasks: team-leader promotion review and contractor selection.
pub fn builtin_tasks() -> Vec<TaskSpec> {
    [PROMOTION_JSON, CONTRACTOR_JSON]
        .into_iter()
        .map(|json| TaskSpec::from_json(json).expect("shipped task files are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn promotion() -> TaskSpec {
        TaskSpec::from_json(PROMOTION_JSON).unwrap()
    }

    #[test]
    fn shipped_promotion_task_is_valid() {
        let task = promotion();
        assert_eq!(task.options.len(), 3);
        assert_eq!(task.duration_secs, 1200);
        let c1 = &task.options[0];
        assert_eq!(c1.label, "Candidate 1");
        assert_eq!(c1.attributes["years_of_service"], 23);
        assert_eq!(c1.attributes["internal_reputation"], 95);
        assert_eq!(task.options[1].attributes["organizational_contribution"], 4.8);
        assert_eq!(task.options[2].attributes["internal_reputation"], 83);
        assert!(task.briefing_senior.contains("stability"));
    }

    #[test]
    fn two_options_rejected() {
        let mut task = promotion();
        task.options.pop();
        assert!(matches!(validate_task(task), Err(Error::Domain(DomainError::InvalidTask(_)))));
    }

    #[test]
    fn zero_duration_rejected() {
        let mut task = promotion();
        task.duration_secs = 0;
        assert!(matches!(validate_task(task), Err(Error::Domain(DomainError::InvalidTask(_)))));
    }

    #[test]
    fn empty_briefing_rejected() {
        let mut task = promotion();
        task.briefing_junior = "  ".into();
        assert!(validate_task(task).is_err());
    }

    #[test]
    fn both_builtins_load() {
        let tasks = builtin_tasks();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[1].options[0].attributes["collaboration_years"], 12);
    }
}
