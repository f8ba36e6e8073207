use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leaning {
    For,
    Against,
    Neutral,
}

impl Leaning {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "for" => Some(Leaning::For),
            "against" => Some(Leaning::Against),
            "neutral" => Some(Leaning::Neutral),
            _ => None,
        }
    }
}

/// Where the group stands, as reported by the summary stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceSummary {
    pub majority_stance: String,
    pub minority_stances: Vec<String>,
    pub option_leanings: BTreeMap<String, Leaning>,
    /// Set when the completion could not be parsed and the summary is the raw
    /// tail of the discussion.
    #[serde(default)]
    pub degraded: bool,
}

impl StanceSummary {
    pub fn degraded_from(recent: &[&str]) -> Self {
        Self {
            majority_stance: recent.join("\n"),
            minority_stances: Vec::new(),
            option_leanings: BTreeMap::new(),
            degraded: true,
        }
    }

    pub fn favored_options(&self) -> Vec<&str> {
        self.option_leanings
            .iter()
            .filter(|(_, l)| **l == Leaning::For)
            .map(|(label, _)| label.as_str())
            .collect()
    }
}

#[derive(Deserialize)]
struct RawSummary {
    majority_stance: String,
    #[serde(default)]
    minority_stances: Vec<String>,
    #[serde(default)]
    option_leanings: BTreeMap<String, String>,
}

/// Parses the summary stage output. Tolerates prose or code fences around a
/// single JSON object.
pub fn parse_summary(completion: &str) -> Option<StanceSummary> {
    let start = completion.find('{')?;
    let end = completion.rfind('}')?;
    if end < start {
        return None;
    }
    let raw: RawSummary = serde_json::from_str(&completion[start..=end]).ok()?;
    if raw.majority_stance.trim().is_empty() {
        return None;
    }
    let option_leanings = raw
        .option_leanings
        .into_iter()
        .map(|(label, lean)| Leaning::parse(&lean).map(|l| (label, l)))
        .collect::<Option<BTreeMap<_, _>>>()?;
    Some(StanceSummary {
        majority_stance: raw.majority_stance.trim().to_string(),
        minority_stances: raw.minority_stances,
        option_leanings,
        degraded: false,
    })
}
