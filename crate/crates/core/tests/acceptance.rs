//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p advocate-core --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use advocate_core::analyze::{aggregate, format_csv, format_table, load_sessions, transcript_metrics, SessionData};
use advocate_core::chat::{read_transcript, replay_transcript};
use advocate_core::config::ServiceConfig;
use advocate_core::domain::{
    builtin_tasks, Condition, FrameType, InterventionConfig, MessageKind, ParticipantId, ParticipantRole, RoleKind,
    RoomId, SessionId,
};
use advocate_core::llm::{mock_embedding, MockProvider, MockRule, ProviderConfig};
use advocate_core::pipeline::{cosine_similarity, DevilsAdvocate, DiscussionContext, EmbeddingVector, InterventionRequest, PromptStore};
use advocate_core::server::protocol::frame_message;
use advocate_core::session::{
    assign_roles, Manifest, ManifestParticipant, Phase, QuestionnaireResponse, ScaleScores, SessionStore,
};
use advocate_core::sim::{simulate_script, Script, SimOutcome};
use common::ws::{serve, WsClient};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COUNTER: &str = "STAGE: counterargument";

fn config(order: [Condition; 2]) -> ServiceConfig {
    let provider = ProviderConfig {
        mock_latency_ms: 250,
        ..ProviderConfig::default()
    };
    ServiceConfig {
        condition_order: Some(order),
        provider,
        ..ServiceConfig::default()
    }
}

fn run(cfg: &ServiceConfig, seed: u64, out: &Path) -> SimOutcome {
    simulate_script(&Script::reference(), cfg, seed, out).unwrap()
}

fn cadence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config([Condition::Treatment, Condition::Baseline]);
    assert_eq!(cfg.intervention.cadence_k, 8);
    let started = Instant::now();
    let out = run(&cfg, 1, dir.path());
    let elapsed = started.elapsed();
    assert_eq!(out.count("task1", MessageKind::HumanPublic), 40);
    assert_eq!(out.count("task1", MessageKind::Agent), 5);
    let metrics = transcript_metrics(&SessionData::load(&out.session_dir).unwrap()).unwrap();
    let replay = metrics.room("task1").unwrap().cadence.unwrap();
    assert_eq!((replay.fires, replay.agents, replay.trailing_pending), (5, 5, false));
    assert!(replay.conformant && metrics.cadence_conformant());
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
}

fn baseline_purity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&config([Condition::Baseline, Condition::Treatment]), 1, dir.path());
    assert_eq!(out.count("task1", MessageKind::HumanPublic), 40);
    assert_eq!(out.count("task1", MessageKind::Agent), 0);
    let metrics = transcript_metrics(&SessionData::load(&out.session_dir).unwrap()).unwrap();
    assert_eq!(metrics.room("task1").unwrap().agent, 0);
    assert!(metrics.cadence_conformant());
}

fn novelty() {
    let d1 = "I understand why Candidate 1 feels safe, yet has anyone weighed Candidate 2's growth?";
    let d2 = "Candidate 3 keeps the team calm under pressure, so what would we lose by ruling that out?";
    let mut cfg = config([Condition::Treatment, Condition::Baseline]);
    cfg.provider.mock_rules = vec![MockRule::new(COUNTER, [d1, d1, d2])];
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, 1, dir.path());
    let metrics = transcript_metrics(&SessionData::load(&out.session_dir).unwrap()).unwrap();
    let sims = &metrics.room("task1").unwrap().agent_similarity;
    assert_eq!(sims.len(), 5);
    let agents: Vec<String> = out
        .messages("task1")
        .iter()
        .filter(|m| m.kind == MessageKind::Agent)
        .map(|m| m.text.clone())
        .collect();
    // second intervention: attempt 1 repeats the first post (cosine 1.0)
    assert_eq!((agents[0].as_str(), sims[0].attempt_index, sims[0].fallback), (d1, 1, false));
    assert_eq!((agents[1].as_str(), sims[1].attempt_index, sims[1].fallback), (d2, 2, false));
    // later interventions only ever draft d2: every attempt duplicates
    for s in &sims[2..] {
        assert!(s.fallback);
        assert!((s.max_similarity.unwrap() - 1.0).abs() < 1e-9);
    }

    // all attempts duplicated: the least similar draft is chosen and flagged
    let near = format!("Honestly, {d1}");
    let mock = Arc::new(MockProvider::new(1).with_rule(MockRule::new(COUNTER, [d1, near.as_str(), d1])));
    let pipeline = DevilsAdvocate::new(mock, Arc::new(PromptStore::builtin()), InterventionConfig::default());
    let history: Vec<_> = out.messages("task1")[..8].to_vec();
    let prior = vec![mock_embedding(d1)];
    let req = InterventionRequest { room_id: RoomId::new("task1"), trigger_seq: 8, humans_counted: 8 };
    let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
    let outcome = rt
        .block_on(pipeline.run(&req, &DiscussionContext::from(&builtin_tasks()[0]), &history, &prior))
        .unwrap();
    let expected = cosine_similarity(&mock_embedding(&near), &prior[0]).unwrap();
    assert!((0.85..1.0).contains(&expected));
    assert!(outcome.fallback && outcome.meta().fallback);
    assert_eq!(outcome.draft.text, near);
    assert!((outcome.draft.max_similarity_to_history - expected).abs() < 1e-12);
}

#[allow(clippy::approx_constant)]
fn cosine() {
    let v = |x: &[f64]| EmbeddingVector::new(x.to_vec()).unwrap();
    let cos = |a: &[f64], b: &[f64]| cosine_similarity(&v(a), &v(b)).unwrap();
    assert!((cos(&[0.3, -1.2, 4.0], &[0.3, -1.2, 4.0]) - 1.0).abs() < 1e-9);
    assert!(cos(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-9);
    assert!((cos(&[1.0, 0.0], &[1.0, 1.0]) - 0.7071067812).abs() < 1e-9);
    let (a, b) = ([0.2, 0.5, -0.7, 1.1], [-0.4, 0.9, 0.3, 0.05]);
    assert!((cos(&a, &b) - cos(&b, &a)).abs() < 1e-9);
    let scaled: Vec<f64> = a.iter().map(|x| x * 37.5).collect();
    assert!((cos(&scaled, &b) - cos(&a, &b)).abs() < 1e-9);
}

fn ordering() {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    rt.block_on(async {
        let fx = Fixture::mock([Condition::Baseline, Condition::Treatment]).await;
        let base = serve(fx.hub.clone()).await;
        let mut clients = Vec::new();
        for p in fx.ids() {
            let mut c = WsClient::connect(&base, "/ws/client").await;
            c.send(&join_frame(&fx.created, &p)).await;
            c.recv().await;
            clients.push(c);
        }
        fx.start().await;
        fx.advance().await;
        let tasks: Vec<_> = clients
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                tokio::spawn(async move {
                    let mut captured = Vec::new();
                    let mut sent = 0;
                    while captured.len() < 200 {
                        if sent < 50 {
                            c.send(&chat(&format!("client {i} message {sent}"))).await;
                            sent += 1;
                        }
                        let wait = if sent < 50 { Duration::from_millis(1) } else { Duration::from_secs(5) };
                        while let Some((bytes, f)) = c.recv_within(wait).await {
                            if frame_message(&f).is_some() {
                                captured.push(bytes);
                            }
                            if sent < 50 {
                                break;
                            }
                            if captured.len() == 200 {
                                break;
                            }
                        }
                    }
                    c.close().await;
                    captured
                })
            })
            .collect();
        let mut captures = Vec::new();
        for t in tasks {
            captures.push(t.await.unwrap());
        }
        assert!(captures.iter().all(|c| *c == captures[0]), "clients saw different orders");
        let seqs: Vec<u64> = captures[0]
            .iter()
            .map(|b| frame_message(&advocate_core::domain::decode_frame(b).unwrap()).unwrap().seq)
            .collect();
        assert_eq!(seqs, (1..=200).collect::<Vec<_>>());

        let snap = fx.hub.snapshot(&fx.created.session_id).await.unwrap();
        let live = &snap.room("task1").unwrap().messages;
        assert_eq!(live.len(), 200);
        let path = SessionStore::open(fx.dir.path().join(fx.created.session_id.as_str())).transcript_path(&RoomId::new("task1"));
        let replayed = replay_transcript(&RoomId::new("task1"), &read_transcript(&path).unwrap()).unwrap();
        assert_eq!(serde_json::to_vec(replayed.messages()).unwrap(), serde_json::to_vec(live).unwrap());
    });
}

fn roles() {
    let ids: Vec<ParticipantId> = (1..=4).map(|i| ParticipantId::new(format!("p{i}"))).collect();
    let mut junior_at = [0usize; 4];
    for seed in 0..1000u64 {
        let roles = assign_roles(&ids, seed).unwrap();
        let juniors: Vec<usize> = ids.iter().enumerate().filter(|(_, p)| roles[*p].kind() == RoleKind::Junior).map(|(i, _)| i).collect();
        assert_eq!(juniors.len(), 1, "seed {seed}");
        junior_at[juniors[0]] += 1;
        assert_eq!(roles, assign_roles(&ids, seed).unwrap());
    }
    assert!(junior_at.iter().all(|n| (200..=300).contains(n)), "{junior_at:?}");
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() {
    let cfg = config([Condition::Treatment, Condition::Baseline]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&cfg, 42, a.path());
    let rb = run(&cfg, 42, b.path());
    let (fa, fb) = (dir_bytes(&ra.session_dir), dir_bytes(&rb.session_dir));
    for name in ["manifest.json", "responses.jsonl", "task1.jsonl", "task2.jsonl", "evaluation.jsonl"] {
        assert!(fa.contains_key(name), "missing {name}");
    }
    assert_eq!(fa, fb);
}

// Brute-force reference: two-pass mean and n-1 variance over explicit lists.
fn oracle(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / values.len() as f64;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    (Some(mean), Some((ss / (values.len() as f64 - 1.0)).sqrt()))
}

struct Synthetic {
    dirs: Vec<PathBuf>,
    /// (role, condition, scale name, item mean)
    rows: Vec<(RoleKind, Condition, &'static str, f64)>,
}

fn synthetic(root: &Path) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut dirs = Vec::new();
    let mut rows = Vec::new();
    let mut total = 0;
    for s in 0..6 {
        let sid = SessionId::new(format!("syn-{s}"));
        let store = SessionStore::create(root, &sid).unwrap();
        let order = if s % 2 == 0 { [Condition::Baseline, Condition::Treatment] } else { [Condition::Treatment, Condition::Baseline] };
        let junior = s % 4;
        let participants: Vec<ManifestParticipant> = (0..4)
            .map(|i| ManifestParticipant {
                id: ParticipantId::new(format!("s{s}p{i}")),
                role: ParticipantRole::new(if i == junior { RoleKind::Junior } else { RoleKind::Senior }),
                pseudonym: format!("Member {}", (b'A' + i as u8) as char),
            })
            .collect();
        store
            .write_manifest(&Manifest {
                session_id: sid.clone(),
                rng_seed: s as u64,
                participants: participants.clone(),
                condition_order: order,
                task_ids: vec!["promotion".into(), "contractor".into()],
                intervention: InterventionConfig::default(),
                phase: Phase::Completed,
                evaluation: None,
                pipeline_failures: 0,
            })
            .unwrap();
        for (task_index, condition) in order.iter().enumerate() {
            for p in &participants {
                let mut items = |n: usize| (0..n).map(|_| rng.random_range(1..=7u8)).collect::<Vec<u8>>();
                let scales = ScaleScores {
                    psychological_safety: items(7),
                    process_satisfaction: items(3),
                    outcome_satisfaction: items(3),
                    nasa_tlx: items(6),
                    ai_perception: (*condition == Condition::Treatment).then(|| items(5)),
                };
                let mean = |v: &[u8]| v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64;
                let kind = p.role.kind();
                rows.push((kind, *condition, "psychological_safety", mean(&scales.psychological_safety)));
                rows.push((kind, *condition, "process_satisfaction", mean(&scales.process_satisfaction)));
                rows.push((kind, *condition, "outcome_satisfaction", mean(&scales.outcome_satisfaction)));
                rows.push((kind, *condition, "nasa_tlx", mean(&scales.nasa_tlx)));
                if let Some(ai) = &scales.ai_perception {
                    rows.push((kind, *condition, "ai_perception", mean(ai)));
                }
                store
                    .append_response(&QuestionnaireResponse {
                        session_id: sid.clone(),
                        participant_id: p.id.clone(),
                        task_index,
                        scales,
                    })
                    .unwrap();
                total += 1;
            }
        }
        dirs.push(store.dir().to_path_buf());
    }
    assert_eq!(total, 48);
    Synthetic { dirs, rows }
}

fn stats() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = synthetic(tmp.path());
    let mut dirs = syn.dirs.clone();
    dirs.reverse();
    let stats = aggregate(&load_sessions(&dirs).unwrap()).unwrap();
    let csv = format_csv(&stats);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 1 + 5 * 3 * 2);
    let metrics = ["psychological_safety", "process_satisfaction", "outcome_satisfaction", "nasa_tlx", "ai_perception"];
    let conds = ["baseline", "treatment", "all"];
    let mut expected_header = vec!["group".to_string()];
    for m in metrics {
        for c in conds {
            expected_header.push(format!("{m}_{c}_mean"));
            expected_header.push(format!("{m}_{c}_sd"));
        }
    }
    assert_eq!(header, expected_header);
    for (line, group) in lines[1..].iter().zip(["Senior", "Junior", "All"]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], group);
        for (mi, m) in metrics.iter().enumerate() {
            for (ci, c) in conds.iter().enumerate() {
                let col = 1 + (mi * 3 + ci) * 2;
                if *m == "ai_perception" && *c != "treatment" {
                    assert_eq!((cells[col], cells[col + 1]), ("--", "--"));
                    continue;
                }
                let values: Vec<f64> = syn
                    .rows
                    .iter()
                    .filter(|(role, cond, name, _)| {
                        name == m
                            && (group == "All" || format!("{role:?}") == group)
                            && (*c == "all" || format!("{cond:?}").to_lowercase() == *c)
                    })
                    .map(|r| r.3)
                    .collect();
                let (mean, sd) = oracle(&values);
                let scale = advocate_core::session::Scale::from_name(m).unwrap();
                let column = [advocate_core::analyze::ConditionColumn::Baseline, advocate_core::analyze::ConditionColumn::Treatment, advocate_core::analyze::ConditionColumn::All][ci];
                let g = [advocate_core::analyze::Group::Senior, advocate_core::analyze::Group::Junior, advocate_core::analyze::Group::All]
                    [["Senior", "Junior", "All"].iter().position(|x| *x == group).unwrap()];
                let cell = stats.cell(g, scale, column).unwrap();
                assert_eq!(cell.n, values.len());
                assert!((cell.mean.unwrap() - mean.unwrap()).abs() < 1e-9, "{group} {m} {c}");
                assert!((cell.sd.unwrap() - sd.unwrap()).abs() < 1e-9, "{group} {m} {c}");
                assert_eq!(cells[col], format!("{:.2}", mean.unwrap()));
                assert_eq!(cells[col + 1], format!("{:.2}", sd.unwrap()));
            }
        }
    }
    let table = format_table(&stats);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].contains("(A) Psychological Safety") && rows[0].contains("(E) Perception of AI"));
    for (row, group) in rows[3..].iter().zip(["Senior", "Junior", "All"]) {
        assert!(row.starts_with(group));
        assert_eq!(row.matches("--").count(), 4);
        assert_eq!(row.split('|').count(), 6);
    }
    let forward = aggregate(&load_sessions(&syn.dirs).unwrap()).unwrap();
    assert_eq!(format_csv(&forward), csv);
}

fn failure_policy() {
    let mut cfg = config([Condition::Treatment, Condition::Baseline]);
    cfg.provider.mock_fail_completions = true;
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, 1, dir.path());
    assert_eq!(out.snapshot.phase, Phase::Completed);
    assert_eq!(out.count("task1", MessageKind::Agent), 0);
    assert_eq!(out.count("task1", MessageKind::HumanPublic), 40);
    let room = out.snapshot.room("task1").unwrap();
    assert_eq!(room.trigger.humans_since_last_agent, 0);
    assert!(!room.trigger.pipeline_in_flight);
    assert_eq!(out.snapshot.pipeline_failures, 5);
    let manifest = SessionStore::open(&out.session_dir).read_manifest().unwrap();
    assert_eq!(manifest.pipeline_failures, 5);
    assert!(manifest.evaluation.is_some());
    assert!(out.captures.values().all(|fs| fs.iter().all(|f| f.frame_type != FrameType::AgentMessage)));
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        ("cadence conformance", cadence),
        ("baseline purity", baseline_purity),
        ("novelty", novelty),
        ("cosine unit tests", cosine),
        ("ordering and durability", ordering),
        ("role assignment", roles),
        ("determinism", determinism),
        ("stats oracle", stats),
        ("failure policy", failure_policy),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {name}: {msg}");
            }
        }
    }
    let _ = std::panic::take_hook();
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
