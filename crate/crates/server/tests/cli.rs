use coordkit_core::fixtures;
use coordkit_core::workspace;
use std::path::Path;
use std::process::{Command, Output};

fn coordkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coordkit"))
        .current_dir(dir)
        .args(args)
        .env_remove("COORDKIT_PROVIDER")
        .env_remove("COORDKIT_FIXTURES")
        .output()
        .expect("spawn coordkit")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = coordkit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: &str) {
    let out = coordkit(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("error: {code}:")), "{args:?}: {err}");
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let board = fixtures::novel_board_file();
    ok(
        d,
        &["init", "--name", "Novel", "--goal", fixtures::NOVEL_GOAL],
    );
    let agents = ok(d, &["board", "import", board.to_str().unwrap()]);
    assert_eq!(agents.lines().count(), 7);
    let plan = ok(d, &["generate", "--provider", "mock"]);
    assert!(plan.contains("Plot Development"));
    let branches = ok(
        d,
        &[
            "branch",
            "plan",
            "--count",
            "3",
            "--requirement",
            "adjust steps before Plot Development",
        ],
    );
    assert_eq!(branches.lines().count(), 3);
    ok(d, &["assign", "--task", "Theme Selection"]);
    let run = ok(d, &["run", "--json"]);
    let seqs: Vec<u64> = run
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["seq"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());

    let project = workspace::load(&d.join("project.agentcoord.json")).unwrap();
    let last_output = project
        .strategy()
        .tasks
        .last()
        .unwrap()
        .output_object_id
        .to_string();
    let trace = ok(d, &["trace", "--node", &last_output]);
    assert!(trace.lines().count() > 3);

    ok(d, &["validate"]);
    let md = ok(d, &["export", "--format", "markdown"]);
    assert!(md.starts_with("# "));
    ok(d, &["export", "--format", "json", "--out", "result.json"]);
    assert!(d.join("result.json").is_file());
}

#[test]
fn adopting_a_plan_branch_installs_its_outline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--goal", fixtures::NOVEL_GOAL]);
    let branches = ok(
        d,
        &["branch", "plan", "--count", "3", "--requirement", "shorter"],
    );
    let node = branches.lines().nth(1).unwrap();
    ok(d, &["adopt", "--session", "session-1", "--node", node]);
    let project = workspace::load(&d.join("project.agentcoord.json")).unwrap();
    let session = project.session("session-1").unwrap();
    assert_eq!(session.adopted.as_ref().map(|n| n.0.as_str()), Some(node));
    let adopted = session
        .payload(&project.versions, session.adopted.as_ref().unwrap())
        .unwrap();
    assert_eq!(adopted.as_strategy(), Some(project.strategy()));
    ok(d, &["validate"]);
}

#[test]
fn generate_creates_a_project_from_a_goal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "generate",
            "--goal",
            fixtures::NOVEL_GOAL,
            "--provider",
            "mock",
        ],
    );
    let project = workspace::load(&d.join("project.agentcoord.json")).unwrap();
    assert_eq!(project.strategy(), &fixtures::novel_strategy());
}

#[test]
fn score_ranks_the_scientist_above_the_engineer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--goal", fixtures::NOVEL_GOAL]);
    let out = ok(
        d,
        &[
            "score",
            "--task",
            "task-1",
            "--aspects",
            "Creative Thinking,Knowledge of AI Ethics,AI Tech Understanding,Love Element Understanding",
        ],
    );
    let pos = |name: &str| {
        out.find(name)
            .unwrap_or_else(|| panic!("{name} missing:\n{out}"))
    };
    assert!(pos("AI Scientist") < pos("AI Engineer"), "{out}");
}

#[test]
fn failures_exit_nonzero_with_a_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fails_with(d, &["validate"], "io-error");
    ok(d, &["init", "--name", "N", "--goal", "g"]);
    fails_with(d, &["init", "--name", "N", "--goal", "g"], "project-exists");
    fails_with(d, &["run"], "not-executable");
    fails_with(d, &["trace", "--node", "obj-1"], "unknown-run");
    fails_with(
        d,
        &["generate", "--provider", "nonesuch"],
        "provider-unavailable",
    );
    fails_with(d, &["schema", "nope"], "unknown-schema");

    std::fs::write(d.join("bad-board.json"), r#"[{"name": ""}]"#).unwrap();
    fails_with(
        d,
        &["board", "import", "bad-board.json"],
        "schema-violation",
    );

    let path = d.join("project.agentcoord.json");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    fails_with(d, &["validate"], "corrupt-file");
}

#[test]
fn schemas_are_listed_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let list = ok(dir.path(), &["schema"]);
    assert!(list.lines().any(|l| l == "strategy"));
    let doc = ok(dir.path(), &["schema", "plan-outline"]);
    serde_json::from_str::<serde_json::Value>(&doc).unwrap();
}
