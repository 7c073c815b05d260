use chrono::DateTime;
use coordkit_core::explore::{open_session, rank_agents, NodeId, SessionSeed};
use coordkit_core::gateway::{Gateway, MockProvider};
use coordkit_core::genesis::{ScoreMatrix, ScoreRow};
use coordkit_core::model::{dependency_edges, diff_plans, validate_strategy, AgentId, TaskId};
use coordkit_core::runtime::{build_trace, execute, rebuild, ExecutionOptions};
use coordkit_core::testkit::{random_project, random_strategy};
use coordkit_core::versions::{Payload, VersionId, VersionStore};
use coordkit_core::workspace;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mock_gateway() -> Gateway {
    let mut g = Gateway::new();
    g.register_provider("mock", Arc::new(MockProvider::new()))
        .unwrap();
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_is_deterministic(seed in any::<u64>()) {
        let s = random_strategy(&mut rng(seed), 10, 6);
        let a = validate_strategy(&s);
        let b = validate_strategy(&s.clone());
        prop_assert_eq!(&a, &b);
        prop_assert!(a.is_valid());
    }

    #[test]
    fn self_diff_is_empty(seed in any::<u64>()) {
        let s = random_strategy(&mut rng(seed), 10, 6);
        prop_assert!(diff_plans(&s, &s).is_empty());
    }

    #[test]
    fn complete_runs_trace_the_static_edges(seed in any::<u64>()) {
        let s = random_strategy(&mut rng(seed), 8, 5);
        let opts = ExecutionOptions::new("mock").with_backoff(Duration::ZERO);
        let record = execute(&s, &VersionId("v".into()), "run-1", &mock_gateway(), &opts, &mut |_| {}).unwrap();
        prop_assert!(record.is_completed());
        let traced = build_trace(&record, &s).unwrap().edge_set();
        let declared: BTreeSet<_> = dependency_edges(&s).into_iter().collect();
        prop_assert_eq!(traced, declared);
        prop_assert_eq!(rebuild(&record.events).unwrap(), record);
    }

    #[test]
    fn projects_round_trip(seed in any::<u64>()) {
        let p = random_project(&mut rng(seed));
        let bytes = workspace::to_bytes(&p);
        let back = workspace::from_bytes(bytes.as_bytes()).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(workspace::to_bytes(&back), bytes);
    }

    #[test]
    fn single_aspect_ranking_is_a_column_sort(seed in any::<u64>(), agents in 1usize..9) {
        let mut r = rng(seed);
        let ids: Vec<AgentId> = (1..=agents).map(|i| AgentId::new(format!("agent-{i}"))).collect();
        let aspect = "Only".to_string();
        let rows = ids.iter().map(|id| {
            let score = r.gen_range(1..=5u8);
            ScoreRow {
                agent_id: id.clone(),
                scores: BTreeMap::from([(aspect.clone(), score)]),
                rationales: BTreeMap::from([(aspect.clone(), "because".to_string())]),
            }
        }).collect();
        let m = ScoreMatrix { task_id: TaskId::new("task-1"), aspects: vec![aspect.clone()], rows };
        let ranked = rank_agents(&ids, &[], &m, std::slice::from_ref(&aspect)).unwrap();
        // column oracle: bucket by score, high to low, board order inside
        let mut expected = Vec::new();
        for score in (1..=5u8).rev() {
            for row in &m.rows {
                if row.scores[&aspect] == score {
                    expected.push(row.agent_id.clone());
                }
            }
        }
        let got: Vec<_> = ranked.into_iter().map(|x| x.agent_id).collect();
        prop_assert_eq!(got, expected);
    }
}

/// Random sequences of session operations, valid or not, never break the
/// forest invariants, and failed operations change nothing.
#[test]
fn session_operations_preserve_the_forest() {
    let mut r = rng(99);
    let at = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
    for _ in 0..40 {
        let mut store = VersionStore::new();
        let seed = random_strategy(&mut r, 5, 3);
        let mut session = open_session(
            &mut store,
            "s",
            SessionSeed::PlanOutline { strategy: seed },
            at,
        )
        .unwrap();
        for _ in 0..30 {
            let before = session.clone();
            let n = r.gen_range(1..=session.nodes.len() + 2);
            let node = NodeId::new(format!("node-{n}"));
            let ok = match r.gen_range(0..3) {
                0 => session.set_baseline(&node).is_ok(),
                1 => session.adopt(&store, &node).is_ok(),
                _ => {
                    let mut edit = random_strategy(&mut r, 5, 3);
                    if r.gen_bool(0.3) && edit.tasks.len() > 1 {
                        edit.tasks.swap(0, 1);
                    }
                    let payload = Payload::Strategy { strategy: edit };
                    session.record_manual_edit(&mut store, payload, at).is_ok()
                }
            };
            if !ok {
                assert_eq!(session, before);
            }
            session.check_forest(&store).unwrap();
        }
    }
}
