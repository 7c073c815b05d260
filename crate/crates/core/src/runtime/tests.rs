use super::*;
use crate::fixtures;
use crate::gateway::{MockProvider, ProviderCall, ProviderError};
use crate::model::{dependency_closure, AgentBoard, Goal, NodeRef};
use std::sync::atomic::{AtomicUsize, Ordering};

fn gateway(mock: MockProvider) -> Gateway {
    let mut g = Gateway::new();
    g.register_provider("mock", Arc::new(mock)).unwrap();
    g
}

fn options() -> ExecutionOptions {
    ExecutionOptions::new("mock")
        .with_seed(Some(7))
        .with_backoff(Duration::ZERO)
        .with_clock(|| DateTime::from_timestamp(1_700_000_000, 0).unwrap())
}

fn version() -> VersionId {
    VersionId("v".into())
}

fn run(strategy: &Strategy, mock: MockProvider) -> ExecutionRecord {
    execute(
        strategy,
        &version(),
        "run-1",
        &gateway(mock),
        &options(),
        &mut |_| {},
    )
    .unwrap()
}

#[test]
fn empty_plan_completes_vacuously() {
    let s = Strategy::new(Goal::new("Nothing to do"), vec![], AgentBoard::default());
    let r = run(&s, MockProvider::new());
    assert_eq!(r.status, RunStatus::Completed);
    assert!(r.action_results.is_empty() && r.object_values.is_empty());
    assert_eq!(r.events.len(), 2);
}

#[test]
fn single_task_materializes_its_output() {
    let s = fixtures::chain_strategy(1);
    let r = run(&s, MockProvider::new());
    assert_eq!(r.action_results.len(), 2);
    assert_eq!(r.object_values.len(), 1);
    let out = &s.tasks[0].output_object_id;
    assert_eq!(r.object_values[out], r.action_results[1].output);
}

#[test]
fn chain_runs_in_plan_order() {
    let s = fixtures::chain_strategy(3);
    let r = run(&s, MockProvider::new());
    let mut expected = Vec::new();
    for (t, task) in s.tasks.iter().enumerate() {
        for a in 0..task.process.len() {
            expected.push((t, a));
        }
    }
    let actual: Vec<_> = r
        .action_results
        .iter()
        .map(|x| (s.task_index(&x.task_id).unwrap(), x.action_index))
        .collect();
    assert_eq!(actual, expected);
    assert!(r.is_completed());
}

#[test]
fn prompt_carries_profile_task_instruction_and_inputs() {
    let s = fixtures::chain_strategy(2);
    let r = run(&s, MockProvider::new());
    let first = &r.action_results[0];
    let agent = s.agent_board.get(&first.agent_id).unwrap();
    assert!(first.prompt_rendered.contains(&agent.profile));
    assert!(first.prompt_rendered.contains(&s.tasks[0].task_content));
    assert!(first
        .prompt_rendered
        .contains(&s.tasks[0].process[0].instruction));
    let brief = s.initial_objects().next().unwrap().value.clone().unwrap();
    assert!(first.prompt_rendered.contains(&brief));

    // task 2 opens on task 1's output, verbatim
    let second_task = &r.action_results[2];
    let upstream = &r.object_values[&s.tasks[0].output_object_id];
    assert!(second_task.prompt_rendered.contains(upstream.as_str()));
    assert_eq!(second_task.resolved_inputs[0].content, *upstream);
}

#[test]
fn resolved_inputs_mirror_declarations() {
    let s = fixtures::novel_strategy();
    let r = run(&s, MockProvider::new());
    for result in &r.action_results {
        let spec = &s.task(&result.task_id).unwrap().process[result.action_index];
        let refs: Vec<_> = result
            .resolved_inputs
            .iter()
            .map(|x| x.input.clone())
            .collect();
        assert_eq!(refs, spec.important_inputs);
    }
    assert_eq!(r.object_values.len(), s.tasks.len());
}

#[test]
fn events_are_gapless_and_replayable() {
    let s = fixtures::novel_strategy();
    let mut streamed = Vec::new();
    let r = execute(
        &s,
        &version(),
        "run-1",
        &gateway(MockProvider::new()),
        &options(),
        &mut |e| streamed.push(e.clone()),
    )
    .unwrap();
    assert_eq!(streamed, r.events);
    for (i, e) in r.events.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    assert_eq!(rebuild(replay_events(&r)).unwrap(), r);
}

#[test]
fn broken_logs_are_rejected() {
    let s = fixtures::chain_strategy(1);
    let r = run(&s, MockProvider::new());
    let mut events = r.events.clone();
    events.remove(1);
    assert_eq!(rebuild(&events).unwrap_err().code(), "broken-log");
    assert!(rebuild(&[]).is_err());
}

fn failing_on(call_no: usize, failures: usize) -> MockProvider {
    let seen = Arc::new(AtomicUsize::new(0));
    MockProvider::new().with_responder(move |call: &ProviderCall, _| {
        if call.stage != Stage::ActionExecution {
            return None;
        }
        let n = seen.fetch_add(1, Ordering::SeqCst);
        if n >= call_no && n < call_no + failures {
            Some(Err(ProviderError::Failed("boom".into())))
        } else {
            None
        }
    })
}

#[test]
fn transient_failures_are_retried() {
    let s = fixtures::chain_strategy(2);
    let r = run(&s, failing_on(2, 2));
    assert!(r.is_completed());
    let retries = r
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ActionRetry { .. }))
        .count();
    assert_eq!(retries, 2);
}

#[test]
fn exhausted_retries_fail_with_coordinates() {
    let s = fixtures::chain_strategy(3);
    let complete = run(&s, MockProvider::new());
    let failed = run(&s, failing_on(3, 3));
    assert_eq!(
        failed.status,
        RunStatus::Failed {
            task_id: s.tasks[1].id.clone(),
            action_index: 1,
            code: "provider-failed".into(),
            message: "provider error: boom".into(),
        }
    );
    assert_eq!(failed.action_results.len(), 3);
    assert_eq!(failed.action_results[..], complete.action_results[..3]);
    assert_eq!(failed.object_values.len(), 1);
}

#[test]
fn strategies_must_be_valid_and_complete() {
    let mut s = fixtures::novel_strategy();
    s.tasks.swap(0, 1);
    let g = gateway(MockProvider::new());
    let err = execute(&s, &version(), "r", &g, &options(), &mut |_| {}).unwrap_err();
    assert_eq!(err.code(), "validation-failed");

    let mut s = fixtures::novel_strategy();
    s.tasks[2].process.clear();
    let err = execute(&s, &version(), "r", &g, &options(), &mut |_| {}).unwrap_err();
    assert_eq!(err.code(), "not-executable");
}

#[test]
fn unmaterialized_inputs_are_reported() {
    let s = fixtures::chain_strategy(2);
    let record = ExecutionRecord::new("r", version());
    let task = &s.tasks[1];
    let err = resolve_inputs(&task.process[0], task, &record, &s).unwrap_err();
    assert_eq!(err.code(), "unmaterialized-input");
    let err = resolve_inputs(&task.process[1], task, &record, &s).unwrap_err();
    assert_eq!(err.code(), "unmaterialized-input");
}

#[test]
fn initial_object_without_value_uses_description() {
    let mut s = fixtures::chain_strategy(1);
    let brief = s.key_objects.iter_mut().find(|o| o.is_initial()).unwrap();
    brief.value = None;
    brief.description = "A short brief about lighthouses.".into();
    let r = run(&s, MockProvider::new());
    assert_eq!(
        r.action_results[0].resolved_inputs[0].content,
        "A short brief about lighthouses."
    );
}

#[test]
fn finalize_without_inputs_sees_task_inputs() {
    let mut s = fixtures::chain_strategy(1);
    s.tasks[0].process[1].important_inputs.clear();
    let r = run(&s, MockProvider::new());
    let brief = s.initial_objects().next().unwrap().value.clone().unwrap();
    assert!(r.action_results[1].prompt_rendered.contains(&brief));
    assert!(r.action_results[1].resolved_inputs.is_empty());
}

#[test]
fn same_seed_same_outputs() {
    let s = fixtures::novel_strategy();
    let a = run(&s, MockProvider::new());
    let b = run(&s, MockProvider::new());
    assert_eq!(a, b);
}

#[test]
fn empty_record_has_empty_trace() {
    let s = Strategy::new(Goal::new("g"), vec![], AgentBoard::default());
    let r = run(&s, MockProvider::new());
    assert_eq!(build_trace(&r, &s).unwrap(), TraceGraph::default());
}

#[test]
fn critique_links_back_to_proposal() {
    let s = fixtures::novel_strategy();
    let r = run(&s, MockProvider::new());
    let g = build_trace(&r, &s).unwrap();
    let (_, task) = s
        .tasks
        .iter()
        .enumerate()
        .find(|(_, t)| {
            t.process
                .iter()
                .any(|a| a.interaction_type == InteractionType::Critique)
        })
        .unwrap();
    let c = task
        .process
        .iter()
        .position(|a| a.interaction_type == InteractionType::Critique)
        .unwrap();
    for input in &task.process[c].important_inputs {
        if let InputRef::Action(p) = input {
            assert!(g
                .edge_set()
                .contains(&(NodeRef::action(&task.id, *p), NodeRef::action(&task.id, c))));
        }
    }
}

#[test]
fn chain_trace_matches_static_closure() {
    let s = fixtures::chain_strategy(3);
    let r = run(&s, MockProvider::new());
    let g = build_trace(&r, &s).unwrap();
    let last = NodeRef::Object(s.tasks[2].output_object_id.clone());
    let back = trace_back(&g, &last).unwrap();
    let mut expected = dependency_closure(&s, &last).unwrap();
    expected.remove(&last);
    let got: std::collections::BTreeSet<_> = back.iter().cloned().collect();
    assert_eq!(got, expected);
    assert_eq!(got.len(), back.len());
    // topological: each node's predecessors appear before it
    for (i, n) in back.iter().enumerate() {
        for e in &g.edges {
            if &e.to == n {
                assert!(back[..i].contains(&e.from), "{} before {}", e.from, n);
            }
        }
    }
    assert_eq!(
        trace_back(&g, &NodeRef::Object("nope".into()))
            .unwrap_err()
            .code(),
        "unknown-node"
    );
}
