//! Reference data used by tests, the CLI demo and the browser demo.
//!
//! The novel-writing project mirrors the worked example used throughout the
//! docs: a five-step plan for writing a novel about AI awakening, a board of
//! seven agents, and a capability-score matrix for the theme-selection step.
//! The matching scripted model responses live in `fixtures/novel/`.

use crate::genesis::{Aspect, AspectSet, AspectSource, ScoreMatrix, ScoreRow};
use crate::model::{
    ActionSpec, AgentBoard, AgentId, AgentProfile, Goal, InputRef, InteractionType, KeyObject,
    ObjectId, Origin, Strategy, TaskId, TaskSpec,
};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub const NOVEL_GOAL: &str = "Write a novel about the awakening of artificial intelligence";

/// Directory holding the scripted mock responses for the novel project.
pub fn novel_fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/novel")
}

/// Malformed model outputs, one directory per defect. Each holds the bad
/// response as ordinal 000 and a valid follow-up as 001.
pub fn malformed_fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/malformed")
}

/// The novel board in the import format (`board import` / `PUT /board`).
pub fn novel_board_file() -> PathBuf {
    novel_fixture_dir().join("board.json")
}

fn agent(id: &str, name: &str, profile: &str) -> AgentProfile {
    AgentProfile {
        id: AgentId::new(id),
        name: name.to_string(),
        profile: profile.to_string(),
        avatar: None,
    }
}

pub fn novel_board() -> AgentBoard {
    AgentBoard::new(vec![
        agent(
            "agent-1",
            "Futurist",
            "Studies long-term technology trends and imagines plausible futures for society.",
        ),
        agent(
            "agent-2",
            "Science Fiction Writer",
            "Isabella, a novelist who writes vivid, character-driven science fiction.",
        ),
        agent(
            "agent-3",
            "AI Scientist",
            "Researches machine learning and the ethics of autonomous systems.",
        ),
        agent(
            "agent-4",
            "AI Engineer",
            "Builds and deploys large-scale AI systems in industry.",
        ),
        agent(
            "agent-5",
            "Poet",
            "Writes lyrical poetry about love, loss and what it means to be human.",
        ),
        agent(
            "agent-6",
            "Cognitive Psychologist",
            "Studies perception, emotion and the formation of the self.",
        ),
        agent(
            "agent-7",
            "Literary Critic",
            "Carlos, an editor who reviews manuscripts for structure, pacing and style.",
        ),
    ])
}

fn ko(id: &str) -> InputRef {
    InputRef::KeyObject(ObjectId::new(id))
}

fn act(agent: &str, kind: InteractionType, instruction: &str, inputs: Vec<InputRef>) -> ActionSpec {
    ActionSpec {
        agent_id: AgentId::new(agent),
        instruction: instruction.to_string(),
        interaction_type: kind,
        important_inputs: inputs,
    }
}

fn output(id: &str, name: &str, description: &str, task: &str) -> KeyObject {
    KeyObject {
        id: ObjectId::new(id),
        name: name.to_string(),
        description: description.to_string(),
        origin: Origin::TaskOutput {
            task_id: TaskId::new(task),
        },
        value: None,
    }
}

fn task(
    id: &str,
    step: &str,
    content: &str,
    inputs: &[&str],
    out: &str,
    team: &[&str],
    process: Vec<ActionSpec>,
) -> TaskSpec {
    TaskSpec {
        id: TaskId::new(id),
        step_name: step.to_string(),
        task_content: content.to_string(),
        input_object_ids: inputs.iter().map(|s| ObjectId::new(*s)).collect(),
        output_object_id: ObjectId::new(out),
        team: team.iter().map(|s| AgentId::new(*s)).collect(),
        process,
    }
}

/// The five-step novel-writing strategy, fully assigned and specified.
pub fn novel_strategy() -> Strategy {
    use InteractionType::*;
    let key_objects = vec![
        output(
            "obj-1",
            "Main Theme",
            "The central theme of the novel.",
            "task-1",
        ),
        output(
            "obj-2",
            "Character List",
            "Main characters with short sketches.",
            "task-2",
        ),
        output(
            "obj-3",
            "Plot Outline",
            "Chapter-level outline of the story.",
            "task-3",
        ),
        output(
            "obj-4",
            "Novel Draft",
            "First complete draft of the novel.",
            "task-4",
        ),
        output(
            "obj-5",
            "Final Novel",
            "The edited, finished novel.",
            "task-5",
        ),
    ];
    let tasks = vec![
        task(
            "task-1",
            "Theme Selection",
            "Brainstorm and select the main theme of a novel about the awakening of artificial intelligence.",
            &[],
            "obj-1",
            &["agent-1", "agent-2"],
            vec![
                act("agent-1", Propose, "Propose three candidate themes grounded in plausible AI futures.", vec![]),
                act("agent-2", Critique, "Assess which candidate themes would make the most compelling story.", vec![InputRef::Action(0)]),
                act("agent-1", Improve, "Refine the strongest theme using the writer's feedback.", vec![InputRef::Action(0), InputRef::Action(1)]),
                act("agent-2", Finalize, "State the final main theme in one paragraph.", vec![InputRef::Action(2)]),
            ],
        ),
        task(
            "task-2",
            "Character Design",
            "Design the main characters that embody the chosen theme.",
            &["obj-1"],
            "obj-2",
            &["agent-2", "agent-6"],
            vec![
                act("agent-2", Propose, "Sketch four main characters, including the awakening AI.", vec![ko("obj-1")]),
                act("agent-6", Critique, "Check that each character's inner life is psychologically believable.", vec![InputRef::Action(0)]),
                act("agent-2", Finalize, "Deliver the final character list with one sketch per character.", vec![InputRef::Action(0), InputRef::Action(1)]),
            ],
        ),
        task(
            "task-3",
            "Plot Development",
            "Develop the plot that carries the characters through the theme.",
            &["obj-1", "obj-2"],
            "obj-3",
            &["agent-2", "agent-7"],
            vec![
                act("agent-2", Propose, "Draft a chapter-by-chapter plot outline.", vec![ko("obj-1"), ko("obj-2")]),
                act("agent-7", Critique, "Point out pacing and structure problems in the outline.", vec![InputRef::Action(0)]),
                act("agent-2", Improve, "Revise the outline to address the critique.", vec![InputRef::Action(0), InputRef::Action(1)]),
                act("agent-2", Finalize, "Deliver the final plot outline.", vec![InputRef::Action(2)]),
            ],
        ),
        task(
            "task-4",
            "Writing Draft",
            "Write the first full draft of the novel following the plot outline.",
            &["obj-3", "obj-2"],
            "obj-4",
            &["agent-2", "agent-7"],
            vec![
                act("agent-2", Propose, "Write the full first draft chapter by chapter.", vec![ko("obj-3"), ko("obj-2")]),
                act("agent-7", Critique, "Review the draft for consistency with the outline.", vec![InputRef::Action(0), ko("obj-3")]),
                act("agent-2", Finalize, "Deliver the revised complete draft.", vec![InputRef::Action(0), InputRef::Action(1)]),
            ],
        ),
        task(
            "task-5",
            "Review and Editing",
            "Review and edit the draft into the finished novel.",
            &["obj-4"],
            "obj-5",
            &["agent-7", "agent-2"],
            vec![
                act("agent-7", Critique, "Mark every passage that needs editing and explain why.", vec![ko("obj-4")]),
                act("agent-2", Improve, "Apply the edits while keeping the author's voice.", vec![ko("obj-4"), InputRef::Action(0)]),
                act("agent-7", Finalize, "Deliver the final edited novel.", vec![InputRef::Action(1)]),
            ],
        ),
    ];
    Strategy {
        goal: Goal::new(NOVEL_GOAL),
        key_objects,
        tasks,
        agent_board: novel_board(),
    }
}

/// The novel strategy with "Writing Draft" and "Review and Editing" merged
/// into one step that keeps the drafting task's id.
pub fn novel_strategy_merged_ending() -> Strategy {
    let mut s = novel_strategy();
    s.tasks.pop();
    s.key_objects.retain(|o| o.id.as_str() != "obj-5");
    let draft = s.tasks.last_mut().unwrap();
    draft.step_name = "Writing and Editing".into();
    draft.task_content = "Write the full novel and edit it into its final form.".into();
    s
}

/// A linear plan of `n` tasks: task `i` consumes the previous output (task 1
/// consumes the initial brief). Each process is Propose then Finalize.
pub fn chain_strategy(n: usize) -> Strategy {
    use InteractionType::*;
    let board = AgentBoard::new(vec![
        agent("agent-1", "Drafter", "Writes first versions."),
        agent("agent-2", "Reviewer", "Reviews and finalizes."),
    ]);
    let mut key_objects = vec![KeyObject {
        value: Some("Initial brief.".into()),
        ..KeyObject::initial("init-1", "Brief")
    }];
    let mut tasks = Vec::new();
    let mut previous = ObjectId::new("init-1");
    for i in 1..=n {
        let task_id = format!("task-{i}");
        let out_id = format!("obj-{i}");
        key_objects.push(output(&out_id, &format!("Stage {i} Result"), "", &task_id));
        tasks.push(TaskSpec {
            id: TaskId::new(&task_id),
            step_name: format!("Stage {i}"),
            task_content: format!("Advance the work to stage {i}."),
            input_object_ids: vec![previous.clone()],
            output_object_id: ObjectId::new(&out_id),
            team: vec![AgentId::new("agent-1"), AgentId::new("agent-2")],
            process: vec![
                act(
                    "agent-1",
                    Propose,
                    "Draft this stage.",
                    vec![InputRef::KeyObject(previous.clone())],
                ),
                act(
                    "agent-2",
                    Finalize,
                    "Finalize this stage.",
                    vec![InputRef::Action(0)],
                ),
            ],
        });
        previous = ObjectId::new(out_id);
    }
    Strategy {
        goal: Goal::new("Produce the work in stages"),
        key_objects,
        tasks,
        agent_board: board,
    }
}

pub const THEME_ASPECTS: [&str; 3] = [
    "Creative Thinking",
    "Knowledge of AI Ethics",
    "Futuristic Vision",
];
pub const USER_ASPECTS: [&str; 2] = ["AI Tech Understanding", "Love Element Understanding"];

/// Aspect set after the user adds two aspects and deselects "Futuristic Vision".
pub fn theme_aspects_extended() -> AspectSet {
    let mut aspects: Vec<Aspect> = THEME_ASPECTS
        .iter()
        .map(|n| Aspect::new(*n, AspectSource::Llm))
        .collect();
    aspects.extend(
        USER_ASPECTS
            .iter()
            .map(|n| Aspect::new(*n, AspectSource::User)),
    );
    aspects[2].selected = false;
    AspectSet { aspects }
}

/// Scores per agent in board order over the five theme-selection aspects
/// (THEME_ASPECTS then USER_ASPECTS).
pub const THEME_SCORES: [(&str, [u8; 5]); 7] = [
    ("agent-1", [4, 4, 5, 4, 2]),
    ("agent-2", [5, 3, 5, 3, 3]),
    ("agent-3", [4, 5, 4, 5, 1]),
    ("agent-4", [2, 3, 3, 5, 1]),
    ("agent-5", [5, 2, 2, 1, 5]),
    ("agent-6", [3, 3, 2, 2, 4]),
    ("agent-7", [3, 2, 2, 1, 3]),
];

pub fn theme_score_matrix() -> ScoreMatrix {
    let names: Vec<String> = THEME_ASPECTS
        .iter()
        .chain(USER_ASPECTS.iter())
        .map(|s| s.to_string())
        .collect();
    let board = novel_board();
    let rows = THEME_SCORES
        .iter()
        .map(|(id, scores)| {
            let agent = board.get(&AgentId::new(*id)).unwrap();
            let mut score_map = BTreeMap::new();
            let mut rationale_map = BTreeMap::new();
            for (name, score) in names.iter().zip(scores) {
                score_map.insert(name.clone(), *score);
                rationale_map.insert(
                    name.clone(),
                    format!(
                        "{} rates {score} on {name} given their background.",
                        agent.name
                    ),
                );
            }
            ScoreRow {
                agent_id: AgentId::new(*id),
                scores: score_map,
                rationales: rationale_map,
            }
        })
        .collect();
    ScoreMatrix {
        task_id: TaskId::new("task-1"),
        aspects: names,
        rows,
    }
}
