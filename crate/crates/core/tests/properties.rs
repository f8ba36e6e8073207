use std::collections::BTreeSet;

use advocate_core::analyze::{aggregate, format_csv, reference_cadence, SessionData};
use advocate_core::chat::{replay_transcript, Room, RoomVisibility, TranscriptRecord};
use advocate_core::domain::{Author, Condition, InterventionConfig, MessageKind, ParticipantId, ParticipantRole, RoleKind, RoomId, SessionId};
use advocate_core::pipeline::{strategy_for, TriggerState, TriggerStrategy};
use advocate_core::session::{assign_roles, Manifest, ManifestParticipant, Phase, QuestionnaireResponse, ScaleScores};
use proptest::prelude::*;

const NAMES: [&str; 4] = ["Member A", "Member B", "Member C", "Member D"];

fn room() -> Room {
    Room::new(RoomId::new("task1"), SessionId::new("s"), RoomVisibility::Main).with_members(NAMES.iter().map(|s| s.to_string()))
}

/// (author index, is_dm, dm target offset)
fn events() -> impl Strategy<Value = Vec<(usize, bool, usize)>> {
    prop::collection::vec((0..4usize, prop::bool::weighted(0.2), 1..4usize), 0..120)
}

proptest! {
    #[test]
    fn roles_are_three_to_one(seed in any::<u64>(), ids in prop::collection::btree_set("[a-z]{1,6}", 4)) {
        let ids: Vec<ParticipantId> = ids.into_iter().map(ParticipantId::new).collect();
        let roles = assign_roles(&ids, seed).unwrap();
        let juniors = roles.values().filter(|r| r.kind() == RoleKind::Junior).count();
        prop_assert_eq!(juniors, 1);
        prop_assert_eq!(roles.len(), 4);
        prop_assert_eq!(roles, assign_roles(&ids, seed).unwrap());
    }

    /// With the agent answering before the next human message, the live
    /// strategy fires every k public messages and replay agrees.
    #[test]
    fn trigger_matches_reference_replay(evs in events(), k in 1u32..12) {
        let cfg = InterventionConfig { cadence_k: k, ..InterventionConfig::default() };
        let strategy = strategy_for(cfg.trigger_strategy);
        let mut state = TriggerState::default();
        let mut room = room();
        let mut publics = 0;
        for (who, is_dm, off) in evs {
            let author = Author::Participant(NAMES[who].into());
            let msg = if is_dm {
                room.post_message(author, MessageKind::HumanDm, "psst", Some(NAMES[(who + off) % 4].into()), 0).unwrap()
            } else {
                publics += 1;
                room.post_message(author, MessageKind::HumanPublic, "hi", None, 0).unwrap()
            };
            if strategy.on_human_message(&mut state, &cfg, &msg).is_some() {
                room.post_message(Author::Agent, MessageKind::Agent, "why?", None, 0).unwrap();
                strategy.on_agent_posted(&mut state);
            }
        }
        let agents = room.messages().iter().filter(|m| m.kind == MessageKind::Agent).count() as u32;
        prop_assert_eq!(agents, publics / k);
        let replay = reference_cadence(room.messages(), k);
        prop_assert!(replay.conformant);
        prop_assert_eq!(replay.agents, agents);
        prop_assert!(!replay.trailing_pending);
    }

    #[test]
    fn seqs_gapless_and_replay_identical(evs in events()) {
        let mut room = room();
        for (who, is_dm, off) in evs {
            let author = Author::Participant(NAMES[who].into());
            let (kind, to) = if is_dm { (MessageKind::HumanDm, Some(NAMES[(who + off) % 4].to_string())) } else { (MessageKind::HumanPublic, None) };
            room.post_message(author, kind, format!("{who}/{off}"), to, 7).unwrap();
        }
        let seqs: Vec<u64> = room.messages().iter().map(|m| m.seq).collect();
        prop_assert_eq!(seqs, (1..=room.messages().len() as u64).collect::<Vec<_>>());
        let records: Vec<TranscriptRecord> = room
            .messages()
            .iter()
            .map(|m| TranscriptRecord { session_id: SessionId::new("s"), message: m.clone(), agent: None })
            .collect();
        let lines: Vec<String> = records.iter().map(|r| r.to_line().unwrap()).collect();
        let reparsed: Vec<TranscriptRecord> = lines.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
        let replayed = replay_transcript(&RoomId::new("task1"), &reparsed).unwrap();
        prop_assert_eq!(serde_json::to_string(replayed.messages()).unwrap(), serde_json::to_string(room.messages()).unwrap());
    }

    #[test]
    fn aggregation_ignores_input_order(
        answers in prop::collection::vec(prop::collection::vec(1u8..=7, 24), 16),
        junior in 0usize..4,
        rotate in 0usize..16,
        flip in any::<bool>(),
    ) {
        let build = |session: usize, order: [Condition; 2]| {
            let participants: Vec<ManifestParticipant> = (0..4)
                .map(|i| ManifestParticipant {
                    id: ParticipantId::new(format!("p{i}")),
                    role: ParticipantRole::new(if i == junior { RoleKind::Junior } else { RoleKind::Senior }),
                    pseudonym: NAMES[i].into(),
                })
                .collect();
            let sid = SessionId::new(format!("s{session}"));
            let responses: Vec<QuestionnaireResponse> = (0..8)
                .map(|r| {
                    let a = &answers[session * 8 + r];
                    let task_index = r / 4;
                    QuestionnaireResponse {
                        session_id: sid.clone(),
                        participant_id: ParticipantId::new(format!("p{}", r % 4)),
                        task_index,
                        scales: ScaleScores {
                            psychological_safety: a[0..7].to_vec(),
                            process_satisfaction: a[7..10].to_vec(),
                            outcome_satisfaction: a[10..13].to_vec(),
                            nasa_tlx: a[13..19].to_vec(),
                            ai_perception: (order[task_index] == Condition::Treatment).then(|| a[19..24].to_vec()),
                        },
                    }
                })
                .collect();
            SessionData {
                dir: format!("/nonexistent/s{session}").into(),
                manifest: Manifest {
                    session_id: sid,
                    rng_seed: 0,
                    participants,
                    condition_order: order,
                    task_ids: vec!["a".into(), "b".into()],
                    intervention: InterventionConfig::default(),
                    phase: Phase::Completed,
                    evaluation: None,
                    pipeline_failures: 0,
                },
                responses,
            }
        };
        let sessions = vec![
            build(0, [Condition::Baseline, Condition::Treatment]),
            build(1, [Condition::Treatment, Condition::Baseline]),
        ];
        let expected = format_csv(&aggregate(&sessions).unwrap());
        let mut shuffled = sessions.clone();
        if flip {
            shuffled.reverse();
        }
        for s in shuffled.iter_mut() {
            let n = s.responses.len();
            s.responses.rotate_left(rotate % n);
            s.responses.reverse();
        }
        let got = aggregate(&shuffled).unwrap();
        prop_assert_eq!(format_csv(&got), expected);
        let ids: BTreeSet<_> = shuffled.iter().map(|s| s.manifest.session_id.clone()).collect();
        prop_assert_eq!(ids.len(), 2);
    }
}

#[test]
fn orphan_response_is_an_error() {
    let sid = SessionId::new("s0");
    let data = SessionData {
        dir: "/nonexistent".into(),
        manifest: Manifest {
            session_id: sid.clone(),
            rng_seed: 0,
            participants: vec![],
            condition_order: [Condition::Baseline, Condition::Treatment],
            task_ids: vec![],
            intervention: InterventionConfig::default(),
            phase: Phase::Completed,
            evaluation: None,
            pipeline_failures: 0,
        },
        responses: vec![QuestionnaireResponse {
            session_id: sid,
            participant_id: ParticipantId::new("ghost"),
            task_index: 0,
            scales: ScaleScores {
                psychological_safety: vec![1],
                process_satisfaction: vec![1],
                outcome_satisfaction: vec![1],
                nasa_tlx: vec![1],
                ai_perception: None,
            },
        }],
    };
    let err = aggregate(&[data]).unwrap_err();
    assert!(err.to_string().contains("ghost"), "{err}");
}
