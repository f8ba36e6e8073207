use serde::{Deserialize, Serialize};

use crate::error::{DomainError, Result};

/// Which rule decides when the devil's advocate speaks. Only message cadence
/// is implemented; the enum is the extension point for other strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TriggerStrategyId {
    #[default]
    MessageCadence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionConfig {
    /// Public human messages between counterarguments.
    pub cadence_k: u32,
    /// Drafts whose cosine similarity to any earlier agent message reaches
    /// this value are treated as duplicates.
    pub similarity_threshold: f64,
    pub max_regen_attempts: u32,
    pub trigger_strategy: TriggerStrategyId,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            cadence_k: 8,
            similarity_threshold: 0.85,
            max_regen_attempts: 3,
            trigger_strategy: TriggerStrategyId::MessageCadence,
        }
    }
}

impl InterventionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cadence_k == 0 {
            return Err(DomainError::InvalidConfig("cadence_k must be at least 1".into()).into());
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(DomainError::InvalidConfig(format!(
                "similarity_threshold {} outside [0, 1]",
                self.similarity_threshold
            ))
            .into());
        }
        if self.max_regen_attempts == 0 {
            return Err(DomainError::InvalidConfig("max_regen_attempts must be at least 1".into()).into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = InterventionConfig::default();
        assert_eq!(cfg.cadence_k, 8);
        cfg.validate().unwrap();
    }

    #[test]
    fn out_of_range_rejected() {
        let mut cfg = InterventionConfig { similarity_threshold: 1.2, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.similarity_threshold = 0.5;
        cfg.cadence_k = 0;
        assert!(cfg.validate().is_err());
        cfg.cadence_k = 1;
        cfg.max_regen_attempts = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: InterventionConfig = serde_json::from_str(r#"{"cadence_k": 4}"#).unwrap();
        assert_eq!(cfg.cadence_k, 4);
        assert_eq!(cfg.max_regen_attempts, 3);
    }
}
