//! Random generators for property tests: valid, executable strategies and
//! projects with sessions and run entries.

use crate::explore::{open_session, SessionSeed};
use crate::model::{
    ActionSpec, AgentBoard, AgentId, AgentProfile, Goal, InputRef, InteractionType, KeyObject,
    ObjectId, Origin, Strategy, TaskId, TaskSpec,
};
use crate::runtime::RunStatus;
use crate::versions::Payload;
use crate::workspace::{Project, RunEntry};
use chrono::DateTime;
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "amber",
    "harbor",
    "quiet",
    "signal",
    "lantern",
    "orbit",
    "meadow",
    "cipher",
    "willow",
    "granite",
    "ember",
    "tide",
    "\"quoted\"",
    "ünïcode",
    "{brace}",
    "line\nbreak",
];

fn phrase(rng: &mut impl Rng, words: usize) -> String {
    (0..words)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn subset<T: Clone>(rng: &mut impl Rng, items: &[T], p: f64) -> Vec<T> {
    items.iter().filter(|_| rng.gen_bool(p)).cloned().collect()
}

pub fn random_board(rng: &mut impl Rng, size: usize) -> AgentBoard {
    AgentBoard::new(
        (1..=size)
            .map(|i| AgentProfile {
                id: AgentId::new(format!("agent-{i}")),
                name: format!("Agent {i} {}", phrase(rng, 1)),
                profile: format!("Specialist in {}.", phrase(rng, 3)),
                avatar: rng.gen_bool(0.3).then(|| format!("avatar-{i}.png")),
            })
            .collect(),
    )
}

/// A strategy that validates with zero errors and can be executed: up to
/// `max_tasks` tasks, each with a non-empty team and 1..=`max_actions`
/// actions ending in a Finalize.
pub fn random_strategy(rng: &mut impl Rng, max_tasks: usize, max_actions: usize) -> Strategy {
    let size = rng.gen_range(1..=6);
    let board = random_board(rng, size);
    let agents: Vec<AgentId> = board.agents.iter().map(|a| a.id.clone()).collect();
    let mut key_objects: Vec<KeyObject> = (1..=rng.gen_range(0..=2))
        .map(|i| KeyObject {
            description: phrase(rng, 4),
            value: rng.gen_bool(0.7).then(|| phrase(rng, 6)),
            ..KeyObject::initial(format!("init-{i}"), format!("Initial {i}"))
        })
        .collect();
    let mut tasks = Vec::new();
    for t in 1..=rng.gen_range(0..=max_tasks) {
        let task_id = TaskId::new(format!("task-{t}"));
        let available: Vec<ObjectId> = key_objects.iter().map(|o| o.id.clone()).collect();
        let inputs = subset(rng, &available, 0.5);
        let output = ObjectId::new(format!("obj-{t}"));
        key_objects.push(KeyObject {
            id: output.clone(),
            name: format!("Output {t}"),
            description: phrase(rng, 3),
            origin: Origin::TaskOutput {
                task_id: task_id.clone(),
            },
            value: None,
        });
        let mut team = subset(rng, &agents, 0.5);
        if team.is_empty() {
            team.push(agents.choose(rng).expect("board is non-empty").clone());
        }
        let len = rng.gen_range(1..=max_actions.max(1));
        let mut process = Vec::with_capacity(len);
        for a in 0..len {
            let last = a + 1 == len;
            let interaction_type = if last {
                InteractionType::Finalize
            } else {
                *[
                    InteractionType::Propose,
                    InteractionType::Critique,
                    InteractionType::Improve,
                ]
                .choose(rng)
                .expect("non-empty")
            };
            let mut important_inputs: Vec<InputRef> = subset(rng, &inputs, 0.5)
                .into_iter()
                .map(InputRef::KeyObject)
                .collect();
            let earlier: Vec<usize> = (0..a).collect();
            important_inputs.extend(subset(rng, &earlier, 0.5).into_iter().map(InputRef::Action));
            if last && important_inputs.is_empty() && a > 0 {
                important_inputs.push(InputRef::Action(a - 1));
            }
            process.push(ActionSpec {
                agent_id: team.choose(rng).expect("team is non-empty").clone(),
                instruction: format!("Action {a}: {}", phrase(rng, 4)),
                interaction_type,
                important_inputs,
            });
        }
        tasks.push(TaskSpec {
            id: task_id,
            step_name: format!("Step {t} {}", phrase(rng, 1)),
            task_content: phrase(rng, 8),
            input_object_ids: inputs,
            output_object_id: output,
            team,
            process,
        });
    }
    Strategy {
        goal: Goal::new(format!("Goal: {}", phrase(rng, 5))),
        key_objects,
        tasks,
        agent_board: board,
    }
}

/// A project with a random current strategy, an optional plan-exploration
/// session holding a few manual edits, and run entries pointing at stored
/// versions.
pub fn random_project(rng: &mut impl Rng) -> Project {
    let strategy = random_strategy(rng, 6, 4);
    let mut project = Project::new(
        format!("project-{}", rng.gen::<u32>()),
        phrase(rng, 2),
        strategy.goal.clone(),
        strategy.agent_board.clone(),
    );
    let current = project.set_strategy(strategy.clone());
    let at = |rng: &mut dyn rand::RngCore| {
        DateTime::from_timestamp(rng.gen_range(1_600_000_000..1_900_000_000), 0).expect("in range")
    };
    if rng.gen_bool(0.7) {
        let seed = SessionSeed::PlanOutline {
            strategy: strategy.clone(),
        };
        let id = project.next_session_id();
        let t0 = at(rng);
        let mut session =
            open_session(&mut project.versions, id, seed, t0).expect("random strategies are valid");
        for _ in 0..rng.gen_range(0..4) {
            let edit = random_strategy(rng, 4, 3);
            let t = at(rng);
            session
                .record_manual_edit(
                    &mut project.versions,
                    Payload::Strategy { strategy: edit },
                    t,
                )
                .expect("random strategies are valid");
        }
        let nodes: Vec<_> = session.nodes.iter().map(|n| n.id.clone()).collect();
        let pick = nodes.choose(rng).expect("root exists").clone();
        session.set_baseline(&pick).expect("node exists");
        if rng.gen_bool(0.5) {
            session.adopted = Some(pick);
        }
        project.exploration_sessions.push(session);
    }
    for i in 1..=rng.gen_range(0..3) {
        let status = match rng.gen_range(0..3) {
            0 => RunStatus::Running,
            1 => RunStatus::Completed,
            _ => RunStatus::Failed {
                task_id: TaskId::new("task-1"),
                action_index: rng.gen_range(0..4),
                code: "provider-failed".into(),
                message: phrase(rng, 3),
            },
        };
        project.runs.push(RunEntry {
            run_id: format!("run-{i}"),
            strategy_version: current.clone(),
            status,
            log: format!("project.runs/run-{i}.json"),
        });
    }
    project
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_strategy;
    use crate::runtime::check_executable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_strategies_are_valid_and_executable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let s = random_strategy(&mut rng, 10, 6);
            let report = validate_strategy(&s);
            assert!(report.is_valid(), "{:?}", report.errors);
            check_executable(&s).unwrap();
        }
    }

    #[test]
    fn generated_projects_resolve() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            random_project(&mut rng).check_references().unwrap();
        }
    }
}
