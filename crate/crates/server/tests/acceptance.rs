//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Expected values come from brute-force oracles written here, not
//! from the library under test.

use coordkit_core::explore::rank_agents;
use coordkit_core::fixtures;
use coordkit_core::gateway::{Gateway, GatewayError, MockProvider, Stage, DEFAULT_REPAIR_LIMIT};
use coordkit_core::genesis::{BranchRequest, GenerationOptions, Generator, ScoreMatrix, ScoreRow};
use coordkit_core::model::{
    diff_plans, validate_strategy, AgentId, Goal, InputRef, NodeRef, Strategy, TaskId,
};
use coordkit_core::runtime::{build_trace, execute, trace_back, ExecutionOptions};
use coordkit_core::testkit::{random_project, random_strategy};
use coordkit_core::versions::VersionId;
use coordkit_core::workspace;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Wall-clock budget for the full mock pipeline.
const GENERATION_BUDGET: Duration = Duration::from_secs(2);
const BRANCH_REQUESTS: usize = 100;
const RANKING_CASES: usize = 1_000;
const EXECUTION_CASES: usize = 500;
const PERSISTENCE_CASES: usize = 200;

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let checks: [(&str, Check); 7] = [
        ("full-generation", full_generation),
        ("repair-or-reject", repair_or_reject),
        ("branch-prefix", branch_prefix),
        ("agent-ranking", agent_ranking),
        ("execution-trace", execution_trace),
        ("project-persistence", project_persistence),
        ("cli-end-to-end", cli_end_to_end),
    ];
    let quiet: Box<dyn Fn(&std::panic::PanicHookInfo<'_>) + Send + Sync> = Box::new(|_| {});
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(quiet);
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    std::panic::set_hook(default_hook);
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn generator(mock: MockProvider) -> Generator {
    let mut gateway = Gateway::new();
    gateway.register_provider("mock", Arc::new(mock)).unwrap();
    Generator::new(Arc::new(gateway), GenerationOptions::new("mock"))
}

fn mock_gateway() -> Gateway {
    let mut gateway = Gateway::new();
    gateway
        .register_provider("mock", Arc::new(MockProvider::new()))
        .unwrap();
    gateway
}

fn full_generation() -> Result<String, String> {
    let mock = MockProvider::from_dir(&fixtures::novel_fixture_dir()).map_err(|e| e.to_string())?;
    let gen = generator(mock);
    let started = Instant::now();
    let strategy = gen
        .generate_full_strategy(
            &Goal::new(fixtures::NOVEL_GOAL),
            &[],
            &fixtures::novel_board(),
        )
        .map_err(|e| e.to_string())?;
    let report = validate_strategy(&strategy);
    let elapsed = started.elapsed();
    ensure(report.is_valid(), || {
        format!("{} validation errors", report.errors.len())
    })?;
    ensure(elapsed < GENERATION_BUDGET, || format!("took {elapsed:?}"))?;
    ensure(strategy == fixtures::novel_strategy(), || {
        "differs from the reference plan".into()
    })?;
    Ok(format!(
        "{} tasks, 0 errors, {:.1} ms",
        strategy.tasks.len(),
        elapsed.as_secs_f64() * 1000.0
    ))
}

enum Outcome {
    Valid,
    Escaped(String),
    Rejected {
        code: &'static str,
        repairs: Option<u32>,
    },
}

/// Runs the stage a malformed fixture targets and checks any artifact it
/// returns against the validator.
fn generate_stage(stage: Stage, mock: MockProvider) -> Outcome {
    let gen = generator(mock);
    let base = fixtures::novel_strategy();
    let task = TaskId::new("task-1");
    let team = vec![AgentId::new("agent-1"), AgentId::new("agent-2")];
    let result = match stage {
        Stage::PlanOutline => gen.generate_plan_outline(
            &Goal::new(fixtures::NOVEL_GOAL),
            &[],
            &fixtures::novel_board(),
        ),
        Stage::AgentAssignment => gen.assign_agents(&base, &task).map(|t| {
            let mut s = base.clone();
            s.task_mut(&task).unwrap().team = t;
            s
        }),
        Stage::TaskProcess => gen.generate_task_process(&base, &task, &team).map(|p| {
            let mut s = base.clone();
            let t = s.task_mut(&task).unwrap();
            t.team = team.clone();
            t.process = p;
            s
        }),
        other => panic!("no malformed cases for {other:?}"),
    };
    match result {
        Ok(s) => {
            let report = validate_strategy(&s);
            if report.is_valid() {
                Outcome::Valid
            } else {
                Outcome::Escaped(format!("invalid artifact escaped: {:?}", report.errors))
            }
        }
        Err(e) => match e.gateway_error() {
            Some(g @ GatewayError::SchemaViolationAfterRepairs { repairs, .. }) => {
                Outcome::Rejected {
                    code: g.code(),
                    repairs: Some(*repairs),
                }
            }
            Some(g) => Outcome::Rejected {
                code: g.code(),
                repairs: None,
            },
            None => Outcome::Rejected {
                code: e.code(),
                repairs: None,
            },
        },
    }
}

fn repair_or_reject() -> Result<String, String> {
    let root = fixtures::malformed_fixture_dir();
    let mut cases: Vec<_> = std::fs::read_dir(&root)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    cases.sort();
    let required = [
        "forward-dependency",
        "dangling-agent",
        "mid-sequence-finalize",
        "unknown-interaction-type",
        "missing-output-object",
    ];
    for name in required {
        ensure(cases.iter().any(|c| c.ends_with(name)), || {
            format!("missing case {name}")
        })?;
    }
    ensure(cases.len() >= 5, || format!("only {} cases", cases.len()))?;

    for case in &cases {
        let name = case.file_name().unwrap().to_string_lossy().to_string();
        let bad_file = std::fs::read_dir(case)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.file_stem().unwrap().to_string_lossy().ends_with("-000"))
            .ok_or_else(|| format!("{name}: no -000 response"))?;
        let stem = bad_file.file_stem().unwrap().to_string_lossy().to_string();
        let stage = Stage::from_slug(stem.trim_end_matches("-000"))
            .ok_or_else(|| format!("{name}: unknown stage in {stem}"))?;

        // Followed by a valid answer: repaired within the limit.
        let mock = MockProvider::from_dir(case).map_err(|e| e.to_string())?;
        match generate_stage(stage, mock.clone()) {
            Outcome::Valid => {}
            Outcome::Escaped(escaped) => return Err(format!("{name}: {escaped}")),
            Outcome::Rejected { code, .. } => return Err(format!("{name}: repair failed: {code}")),
        }
        let calls = mock.calls(stage);
        // one rejected answer, one repair
        ensure(calls == 2, || {
            format!("{name}: expected 2 calls, saw {calls}")
        })?;

        // Repeating the defect: surfaced, never returned.
        let bad = std::fs::read_to_string(&bad_file).unwrap();
        let mut mock = MockProvider::new();
        for _ in 0..=DEFAULT_REPAIR_LIMIT {
            mock = mock.with_response(stage, bad.clone());
        }
        match generate_stage(stage, mock) {
            Outcome::Rejected {
                code: "schema-violation-after-repairs",
                repairs: Some(repairs),
            } => {
                ensure(repairs == DEFAULT_REPAIR_LIMIT, || {
                    format!("{name}: {repairs} repairs")
                })?;
            }
            Outcome::Rejected { code, .. } => return Err(format!("{name}: wrong failure {code}")),
            Outcome::Valid => return Err(format!("{name}: persistent defect was accepted")),
            Outcome::Escaped(escaped) => return Err(format!("{name}: {escaped}")),
        }
    }
    Ok(format!(
        "{} fixtures repaired within R={DEFAULT_REPAIR_LIMIT} and rejected when persistent, 0 invalid artifacts",
        cases.len()
    ))
}

struct BranchScript {
    rng: ChaCha8Rng,
    names: Vec<String>,
    drafted: usize,
    last_bad: bool,
}

/// Plausible branch completions over the names the current request can
/// see, with the occasional dangling input to exercise repair.
fn branch_responder(script: Arc<Mutex<BranchScript>>) -> MockProvider {
    MockProvider::new().with_responder(move |call, _| {
        if call.stage != Stage::BranchCompletion {
            return None;
        }
        let mut s = script.lock().unwrap();
        let mut names = s.names.clone();
        let bad = !s.last_bad && s.rng.gen_bool(0.25);
        s.last_bad = bad;
        let mut tasks = Vec::new();
        for _ in 0..s.rng.gen_range(1..=3) {
            s.drafted += 1;
            let n = s.drafted;
            let mut inputs: Vec<String> = names
                .iter()
                .filter(|_| s.rng.gen_bool(0.5))
                .cloned()
                .collect();
            if bad && tasks.is_empty() {
                inputs.push("Object Nobody Made".into());
            }
            let output = format!("Variant Draft {n}");
            tasks.push(json!({
                "stepName": format!("Variant Step {n}"),
                "taskContent": format!("Produce draft {n}."),
                "inputObjects": inputs,
                "outputObject": output,
            }));
            names.push(output);
        }
        Some(Ok(json!({ "tasks": tasks }).to_string()))
    })
}

fn branch_prefix() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb4a);
    let script = Arc::new(Mutex::new(BranchScript {
        rng: ChaCha8Rng::seed_from_u64(0x5c1),
        names: Vec::new(),
        drafted: 0,
        last_bad: false,
    }));
    let gen = generator(branch_responder(script.clone()));
    let mut violations = 0;
    let mut variants = 0;
    for i in 0..BRANCH_REQUESTS {
        let base = if i % 5 == 0 {
            fixtures::novel_strategy()
        } else {
            loop {
                let s = random_strategy(&mut rng, 10, 6);
                if !s.tasks.is_empty() {
                    break s;
                }
            }
        };
        let point = rng.gen_range(0..=base.tasks.len());
        let request = BranchRequest {
            branch_point: point,
            requirement: "try another route".into(),
            count: rng.gen_range(1..=3),
        };
        {
            let mut s = script.lock().unwrap();
            s.names = base.initial_objects().map(|o| o.name.clone()).collect();
            s.names.extend(base.tasks[..point].iter().map(|t| {
                base.object(&t.output_object_id)
                    .expect("output exists")
                    .name
                    .clone()
            }));
            s.last_bad = false;
        }
        let out = gen
            .branch_plan(&base, &request)
            .map_err(|e| format!("request {i}: {e}"))?;
        ensure(out.len() == request.count, || {
            format!("request {i}: {} variants", out.len())
        })?;
        for v in &out {
            variants += 1;
            let report = validate_strategy(v);
            ensure(report.is_valid(), || {
                format!("request {i}: invalid variant {:?}", report.errors)
            })?;
            let shared = diff_plans(&base, v).shared_prefix;
            // brute force: the first `point` tasks are identical
            let kept = base.tasks[..point]
                .iter()
                .zip(&v.tasks)
                .all(|(a, b)| a == b)
                && v.tasks.len() >= point;
            if shared < point || !kept {
                violations += 1;
            }
        }
    }
    ensure(violations == 0, || {
        format!("{violations} prefix violations")
    })?;
    Ok(format!(
        "{BRANCH_REQUESTS} requests, {variants} variants, 0 prefix violations"
    ))
}

fn agent_ranking() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4a4);
    for case in 0..RANKING_CASES {
        let agents = rng.gen_range(1..=9);
        let ids: Vec<AgentId> = (1..=agents)
            .map(|i| AgentId::new(format!("agent-{i}")))
            .collect();
        let aspects: Vec<String> = (0..rng.gen_range(1..=6))
            .map(|a| format!("Aspect {a}"))
            .collect();
        let rows: Vec<ScoreRow> = ids
            .iter()
            .map(|id| ScoreRow {
                agent_id: id.clone(),
                scores: aspects
                    .iter()
                    .map(|a| (a.clone(), rng.gen_range(1..=5u8)))
                    .collect(),
                rationales: aspects
                    .iter()
                    .map(|a| (a.clone(), "r".to_string()))
                    .collect(),
            })
            .collect();
        let matrix = ScoreMatrix {
            task_id: TaskId::new("task-1"),
            aspects: aspects.clone(),
            rows,
        };
        let mut selected: Vec<String> = aspects
            .iter()
            .filter(|_| rng.gen_bool(0.6))
            .cloned()
            .collect();
        if selected.is_empty() {
            selected.push(aspects[0].clone());
        }
        let team: Vec<AgentId> = ids.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
        let mut board = ids.clone();
        board.shuffle(&mut rng);

        let got: Vec<AgentId> = rank_agents(&board, &team, &matrix, &selected)
            .map_err(|e| format!("case {case}: {e}"))?
            .into_iter()
            .map(|r| r.agent_id)
            .collect();
        // Oracle: selection sort on (assigned, score sum) with board order
        // breaking ties; sums compare exactly where means over a common
        // denominator would.
        let sum = |id: &AgentId| -> u32 {
            let row = matrix.rows.iter().find(|r| &r.agent_id == id).unwrap();
            selected.iter().map(|a| u32::from(row.scores[a])).sum()
        };
        let mut left: Vec<(usize, AgentId)> = board.iter().cloned().enumerate().collect();
        let mut expected = Vec::new();
        while !left.is_empty() {
            let mut best = 0;
            for k in 1..left.len() {
                let key = |(pos, id): &(usize, AgentId)| {
                    (team.contains(id), sum(id), std::cmp::Reverse(*pos))
                };
                if key(&left[k]) > key(&left[best]) {
                    best = k;
                }
            }
            expected.push(left.remove(best).1);
        }
        ensure(got == expected, || {
            format!("case {case}: {got:?} != {expected:?}")
        })?;
    }

    let matrix = fixtures::theme_score_matrix();
    let selected: Vec<String> = fixtures::theme_aspects_extended().selected();
    ensure(selected.len() == 4, || {
        format!("{} aspects selected", selected.len())
    })?;
    let team = [AgentId::new("agent-1"), AgentId::new("agent-2")];
    let board = fixtures::novel_board();
    let ranked = rank_agents(
        board.agents.iter().map(|a| &a.id),
        &team,
        &matrix,
        &selected,
    )
    .map_err(|e| e.to_string())?;
    let pos = |name: &str| {
        let id = &board.agents.iter().find(|a| a.name == name).unwrap().id;
        ranked.iter().position(|r| &r.agent_id == id).unwrap()
    };
    ensure(pos("AI Scientist") < pos("AI Engineer"), || {
        "AI Engineer ranks above AI Scientist".into()
    })?;
    Ok(format!(
        "{RANKING_CASES} matrices match the oracle; fixture: AI Scientist #{} above AI Engineer #{}",
        pos("AI Scientist") + 1,
        pos("AI Engineer") + 1
    ))
}

/// Edges implied by the declared inputs plus finalize-to-output.
fn declared_edges(s: &Strategy) -> BTreeSet<(NodeRef, NodeRef)> {
    let mut edges = BTreeSet::new();
    for task in &s.tasks {
        for (j, action) in task.process.iter().enumerate() {
            let to = NodeRef::action(&task.id, j);
            for input in &action.important_inputs {
                let from = match input {
                    InputRef::KeyObject(o) => NodeRef::Object(o.clone()),
                    InputRef::Action(k) => NodeRef::action(&task.id, *k),
                };
                edges.insert((from, to.clone()));
            }
        }
        let last = task.process.len() - 1;
        edges.insert((
            NodeRef::action(&task.id, last),
            NodeRef::Object(task.output_object_id.clone()),
        ));
    }
    edges
}

fn ancestors(edges: &BTreeSet<(NodeRef, NodeRef)>, node: &NodeRef) -> BTreeSet<NodeRef> {
    let mut found = BTreeSet::new();
    loop {
        let before = found.len();
        for (from, to) in edges {
            if to == node || found.contains(to) {
                found.insert(from.clone());
            }
        }
        if found.len() == before {
            return found;
        }
    }
}

fn execution_trace() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe7e);
    let gateway = mock_gateway();
    let opts = ExecutionOptions::new("mock").with_backoff(Duration::ZERO);
    let version = VersionId("v".into());
    let mut actions = 0;
    let mut edges_checked = 0;
    for case in 0..EXECUTION_CASES {
        let s = random_strategy(&mut rng, 10, 6);
        let record = execute(&s, &version, "run-1", &gateway, &opts, &mut |_| {})
            .map_err(|e| format!("case {case}: {e}"))?;
        ensure(record.is_completed(), || {
            format!("case {case}: run did not complete")
        })?;

        let keys: Vec<(usize, usize)> = record
            .action_results
            .iter()
            .map(|r| {
                (
                    s.tasks.iter().position(|t| t.id == r.task_id).unwrap(),
                    r.action_index,
                )
            })
            .collect();
        let all: Vec<(usize, usize)> = s
            .tasks
            .iter()
            .enumerate()
            .flat_map(|(t, task)| (0..task.process.len()).map(move |a| (t, a)))
            .collect();
        ensure(keys.windows(2).all(|w| w[0] < w[1]), || {
            format!("case {case}: results out of order")
        })?;
        ensure(keys == all, || format!("case {case}: results incomplete"))?;
        actions += keys.len();

        let outputs: BTreeSet<_> = s.tasks.iter().map(|t| t.output_object_id.clone()).collect();
        let values: BTreeSet<_> = record.object_values.keys().cloned().collect();
        ensure(values == outputs, || {
            format!("case {case}: object values {values:?} != outputs {outputs:?}")
        })?;

        let graph = build_trace(&record, &s).map_err(|e| format!("case {case}: {e}"))?;
        let expected = declared_edges(&s);
        ensure(graph.edge_set() == expected, || {
            format!("case {case}: trace edges differ from the oracle")
        })?;
        ensure(graph.edges.len() == expected.len(), || {
            format!("case {case}: duplicate edges")
        })?;
        let mut nodes: BTreeSet<NodeRef> = s
            .initial_objects()
            .map(|o| NodeRef::Object(o.id.clone()))
            .collect();
        for t in &s.tasks {
            nodes.extend((0..t.process.len()).map(|a| NodeRef::action(&t.id, a)));
            nodes.insert(NodeRef::Object(t.output_object_id.clone()));
        }
        let got_nodes: BTreeSet<NodeRef> = graph.nodes.iter().cloned().collect();
        ensure(
            got_nodes == nodes && graph.nodes.len() == nodes.len(),
            || format!("case {case}: trace nodes differ from the oracle"),
        )?;
        edges_checked += expected.len();

        for node in &graph.nodes {
            let back = trace_back(&graph, node).map_err(|e| e.to_string())?;
            let want = ancestors(&expected, node);
            let got: BTreeSet<NodeRef> = back.iter().cloned().collect();
            ensure(got == want && back.len() == want.len(), || {
                format!("case {case}: trace_back({node}) wrong")
            })?;
            let at: HashMap<&NodeRef, usize> =
                back.iter().enumerate().map(|(i, n)| (n, i)).collect();
            let ordered = expected
                .iter()
                .filter(|(f, t)| at.contains_key(f) && at.contains_key(t))
                .all(|(f, t)| at[f] < at[t]);
            ensure(ordered, || {
                format!("case {case}: trace_back({node}) not topological")
            })?;
        }
    }
    Ok(format!(
        "{EXECUTION_CASES} strategies, {actions} actions in order, {edges_checked} edges match the oracle"
    ))
}

fn project_persistence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e7);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes_total = 0;
    for case in 0..PERSISTENCE_CASES {
        let project = random_project(&mut rng);
        let path = dir
            .path()
            .join(format!("p{case}{}", workspace::PROJECT_EXTENSION));
        workspace::save(&project, &path).map_err(|e| e.to_string())?;
        let loaded = workspace::load(&path).map_err(|e| format!("case {case}: {e}"))?;
        ensure(loaded == project, || {
            format!("case {case}: round trip changed the project")
        })?;
        let first = std::fs::read(&path).unwrap();
        workspace::save(&loaded, &path).map_err(|e| e.to_string())?;
        let second = std::fs::read(&path).unwrap();
        ensure(first == second, || {
            format!("case {case}: re-save is not byte-stable")
        })?;
        bytes_total += first.len();

        let cut = rng.gen_range(0..first.len());
        std::fs::write(&path, &first[..cut]).unwrap();
        match workspace::load(&path) {
            Err(e) if e.code() == "corrupt-file" => {}
            Err(e) => return Err(format!("case {case}: cut at {cut} gave {}", e.code())),
            Ok(_) => return Err(format!("case {case}: cut at {cut} loaded")),
        }
    }
    Ok(format!(
        "{PERSISTENCE_CASES} projects ({bytes_total} bytes) round-trip byte-stable; every truncation is corrupt-file"
    ))
}

fn coordkit(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_coordkit"))
        .current_dir(dir)
        .args(args)
        .env_remove("COORDKIT_PROVIDER")
        .env_remove("COORDKIT_FIXTURES")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`{}` exited {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn gapless(seqs: &[u64]) -> bool {
    !seqs.is_empty() && seqs.iter().enumerate().all(|(i, s)| *s == i as u64)
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn cli_end_to_end() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let board = fixtures::novel_board_file();
    coordkit(
        d,
        &["init", "--name", "Novel", "--goal", fixtures::NOVEL_GOAL],
    )?;
    coordkit(d, &["board", "import", board.to_str().unwrap()])?;
    coordkit(d, &["generate", "--provider", "mock"])?;
    let branches = coordkit(
        d,
        &[
            "branch",
            "plan",
            "--count",
            "3",
            "--requirement",
            "a darker ending",
        ],
    )?;
    ensure(branches.lines().count() == 3, || {
        format!("branch printed {branches:?}")
    })?;
    coordkit(d, &["assign", "--task", "task-1"])?;
    let run = coordkit(d, &["run", "--json"])?;
    let seqs: Vec<u64> = run
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l)
                .ok()
                .and_then(|v| v["seq"].as_u64())
        })
        .collect::<Option<_>>()
        .ok_or("run printed a line without a seq")?;
    ensure(gapless(&seqs), || format!("CLI run seqs {seqs:?}"))?;
    let project = workspace::load(&d.join("project.agentcoord.json")).map_err(|e| e.to_string())?;
    let last = project
        .strategy()
        .tasks
        .last()
        .unwrap()
        .output_object_id
        .to_string();
    let trace = coordkit(d, &["trace", "--node", &last])?;
    ensure(!trace.trim().is_empty(), || "empty trace".into())?;

    // Same project over HTTP: the run's event stream is gapless too.
    let mut child = Child(
        Command::new(env!("CARGO_BIN_EXE_coordkit"))
            .current_dir(d)
            .args(["serve", "--port", "0"])
            .env_remove("COORDKIT_PROVIDER")
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?,
    );
    let mut lines = BufReader::new(child.0.stderr.take().unwrap()).lines();
    let (mut pid, mut base) = (None, None);
    while base.is_none() {
        let line = lines
            .next()
            .ok_or("serve exited early")?
            .map_err(|e| e.to_string())?;
        if let Some(rest) = line.strip_prefix("opened project ") {
            pid = rest.split_whitespace().next().map(str::to_string);
        }
        if let Some(url) = line.strip_prefix("listening on ") {
            base = Some(url.trim().to_string());
        }
    }
    let (pid, base) = (pid.ok_or("project was not preloaded")?, base.unwrap());
    std::thread::spawn(move || lines.for_each(drop));

    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| e.to_string())?;
    let started: Value = client
        .post(format!("{base}/projects/{pid}/runs"))
        .json(&json!({}))
        .send()
        .and_then(|r| r.error_for_status())
        .and_then(|r| r.json())
        .map_err(|e| e.to_string())?;
    let run_id = started["runId"].as_str().ok_or("no runId")?;
    let stream = client
        .get(format!("{base}/runs/{run_id}/events"))
        .send()
        .and_then(|r| r.text())
        .map_err(|e| e.to_string())?;
    let ids: Vec<u64> = stream
        .lines()
        .filter_map(|l| l.strip_prefix("id:"))
        .map(|v| v.trim().parse().map_err(|_| format!("bad id {v:?}")))
        .collect::<Result<_, _>>()?;
    ensure(gapless(&ids), || format!("SSE seqs {ids:?}"))?;
    let kinds: BTreeMap<&str, usize> = stream
        .lines()
        .filter_map(|l| l.strip_prefix("event:"))
        .fold(BTreeMap::new(), |mut m, k| {
            *m.entry(k.trim()).or_default() += 1;
            m
        });
    ensure(kinds.contains_key("runFinished"), || {
        format!("stream ended without completion: {kinds:?}")
    })?;
    drop(child);
    Ok(format!(
        "7 commands exit 0; CLI run seq 0..={}, SSE seq 0..={}",
        seqs.len() - 1,
        ids.len() - 1
    ))
}
