use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SessionError};

/// The five self-report scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    PsychologicalSafety,
    ProcessSatisfaction,
    OutcomeSatisfaction,
    NasaTlx,
    AiPerception,
}

impl Scale {
    pub const ALL: [Scale; 5] = [
        Scale::PsychologicalSafety,
        Scale::ProcessSatisfaction,
        Scale::OutcomeSatisfaction,
        Scale::NasaTlx,
        Scale::AiPerception,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scale::PsychologicalSafety => "psychological_safety",
            Scale::ProcessSatisfaction => "process_satisfaction",
            Scale::OutcomeSatisfaction => "outcome_satisfaction",
            Scale::NasaTlx => "nasa_tlx",
            Scale::AiPerception => "ai_perception",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Scale::PsychologicalSafety => "Psychological Safety",
            Scale::ProcessSatisfaction => "Decision-making Process",
            Scale::OutcomeSatisfaction => "Decision-making Outcome",
            Scale::NasaTlx => "Cognitive Workload",
            Scale::AiPerception => "Perception of AI",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Scale::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchors {
    pub low: String,
    pub high: String,
}

/// Item wording for one scale. Items are data so they can be edited or
/// translated without touching code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub name: String,
    pub items: Vec<String>,
    pub anchors: Anchors,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentSet {
    instruments: BTreeMap<Scale, Instrument>,
}

const BUILTIN: [(&str, &str); 5] = [
    ("psychological_safety", include_str!("../../assets/instruments/psychological_safety.json")),
    ("process_satisfaction", include_str!("../../assets/instruments/process_satisfaction.json")),
    ("outcome_satisfaction", include_str!("../../assets/instruments/outcome_satisfaction.json")),
    ("nasa_tlx", include_str!("../../assets/instruments/nasa_tlx.json")),
    ("ai_perception", include_str!("../../assets/instruments/ai_perception.json")),
];

impl Default for InstrumentSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl InstrumentSet {
    pub fn builtin() -> Self {
        let instruments = BUILTIN
            .iter()
            .map(|(name, json)| {
                let inst: Instrument = serde_json::from_str(json).expect("shipped instrument is valid JSON");
                (Scale::from_name(name).expect("known scale"), inst)
            })
            .collect();
        Self { instruments }
    }

    /// Reads `<scale>.json` for every scale from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut instruments = BTreeMap::new();
        for scale in Scale::ALL {
            let path = dir.join(format!("{}.json", scale.name()));
            let inst: Instrument = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            instruments.insert(scale, inst);
        }
        let set = Self { instruments };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<()> {
        for (scale, inst) in &self.instruments {
            if inst.items.is_empty() {
                return Err(SessionError::InvalidResponse(format!("instrument {scale} has no items")).into());
            }
        }
        if self.item_count(Scale::NasaTlx) != super::NASA_TLX_ITEMS {
            return Err(SessionError::InvalidResponse("NASA-TLX needs exactly 6 items".into()).into());
        }
        Ok(())
    }

    pub fn get(&self, scale: Scale) -> &Instrument {
        &self.instruments[&scale]
    }

    pub fn item_count(&self, scale: Scale) -> usize {
        self.instruments.get(&scale).map_or(0, |i| i.items.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set_is_consistent() {
        let set = InstrumentSet::builtin();
        set.check().unwrap();
        assert_eq!(set.item_count(Scale::NasaTlx), 6);
        for scale in Scale::ALL {
            assert_eq!(set.get(scale).name, scale.name());
        }
    }
}
