use serde::{Deserialize, Serialize};

use super::instrument::{InstrumentSet, Scale};
use crate::domain::{Condition, ParticipantId, SessionId};
use crate::error::{Result, SessionError};

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 7;
pub const NASA_TLX_ITEMS: usize = 6;

/// Raw item answers per scale, each on the 1..=7 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleScores {
    pub psychological_safety: Vec<u8>,
    pub process_satisfaction: Vec<u8>,
    pub outcome_satisfaction: Vec<u8>,
    pub nasa_tlx: Vec<u8>,
    /// Present exactly for treatment-condition tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai_perception: Option<Vec<u8>>,
}

impl ScaleScores {
    pub fn items(&self, scale: Scale) -> Option<&[u8]> {
        match scale {
            Scale::PsychologicalSafety => Some(&self.psychological_safety),
            Scale::ProcessSatisfaction => Some(&self.process_satisfaction),
            Scale::OutcomeSatisfaction => Some(&self.outcome_satisfaction),
            Scale::NasaTlx => Some(&self.nasa_tlx),
            Scale::AiPerception => self.ai_perception.as_deref(),
        }
    }

    /// Unweighted mean of the scale's items (raw TLX for `nasa_tlx`).
    pub fn scale_mean(&self, scale: Scale) -> Option<f64> {
        let items = self.items(scale)?;
        if items.is_empty() {
            return None;
        }
        Some(items.iter().map(|&v| f64::from(v)).sum::<f64>() / items.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub session_id: SessionId,
    pub participant_id: ParticipantId,
    pub task_index: usize,
    pub scales: ScaleScores,
}

impl QuestionnaireResponse {
    pub fn response_id(&self) -> String {
        format!("{}-{}-t{}", self.session_id, self.participant_id, self.task_index)
    }

    /// Checks item ranges, NASA-TLX length, AI-perception presence for the
    /// condition, and item counts against the configured instruments.
    pub fn validate(&self, condition: Condition, instruments: &InstrumentSet) -> Result<()> {
        match (&self.scales.ai_perception, condition) {
            (None, Condition::Treatment) => {
                return Err(SessionError::InvalidResponse("treatment tasks need ai_perception items".into()).into())
            }
            (Some(_), Condition::Baseline) => {
                return Err(SessionError::InvalidResponse("baseline tasks have no ai_perception scale".into()).into())
            }
            _ => {}
        }
        for scale in Scale::ALL {
            let Some(items) = self.scales.items(scale) else { continue };
            if let Some(&bad) = items.iter().find(|v| !(LIKERT_MIN..=LIKERT_MAX).contains(*v)) {
                return Err(SessionError::OutOfRangeItem { scale: scale.name().into(), value: bad }.into());
            }
            let expected = instruments.item_count(scale);
            if items.len() != expected {
                return Err(SessionError::InvalidResponse(format!(
                    "{scale} has {} items, instrument defines {expected}",
                    items.len()
                ))
                .into());
            }
        }
        if self.scales.nasa_tlx.len() != NASA_TLX_ITEMS {
            return Err(SessionError::InvalidResponse("NASA-TLX needs exactly 6 items".into()).into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    pub(crate) fn response(ai: bool) -> QuestionnaireResponse {
        QuestionnaireResponse {
            session_id: "s1".into(),
            participant_id: "p1".into(),
            task_index: 0,
            scales: ScaleScores {
                psychological_safety: vec![5, 6, 7],
                process_satisfaction: vec![4, 4, 4],
                outcome_satisfaction: vec![1, 2, 3],
                nasa_tlx: vec![3, 4, 5, 3, 4, 5],
                ai_perception: ai.then(|| vec![4, 5, 6]),
            },
        }
    }

    #[test]
    fn valid_response_passes() {
        let set = InstrumentSet::builtin();
        response(true).validate(Condition::Treatment, &set).unwrap();
        response(false).validate(Condition::Baseline, &set).unwrap();
    }

    #[test]
    fn item_eight_is_out_of_range() {
        let mut r = response(false);
        r.scales.outcome_satisfaction[1] = 8;
        assert!(matches!(
            r.validate(Condition::Baseline, &InstrumentSet::builtin()),
            Err(Error::Session(SessionError::OutOfRangeItem { value: 8, .. }))
        ));
    }

    #[test]
    fn ai_perception_tied_to_condition() {
        let set = InstrumentSet::builtin();
        assert!(response(true).validate(Condition::Baseline, &set).is_err());
        assert!(response(false).validate(Condition::Treatment, &set).is_err());
    }

    #[test]
    fn scale_mean() {
        let r = response(true);
        assert_eq!(r.scales.scale_mean(Scale::OutcomeSatisfaction), Some(2.0));
        assert_eq!(r.scales.scale_mean(Scale::NasaTlx), Some(4.0));
        assert_eq!(response(false).scales.scale_mean(Scale::AiPerception), None);
    }
}
