use super::{InputRef, InteractionType, Origin, Strategy};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;

/// Stable problem codes. The kebab-case wire names are part of the API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueCode {
    EmptyGoal,
    DuplicateObjectId,
    OriginUnknownTask,
    OriginMismatch,
    DuplicateAgentId,
    EmptyProfile,
    DuplicateTaskId,
    EmptyStepName,
    EmptyTaskContent,
    UnknownInputObject,
    ForwardDependency,
    OutputIsInput,
    UnknownOutputObject,
    DuplicateOutput,
    OutputOriginMismatch,
    UnknownAgent,
    DuplicateTeamMember,
    AgentNotInTeam,
    EmptyInstruction,
    InputNotTaskInput,
    ActionRefNotEarlier,
    MissingFinalize,
    FinalizeNotLast,
    // warnings
    EmptyPlan,
    EmptyTeam,
    EmptyProcess,
    FinalizeWithoutInputs,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::EmptyGoal => "empty-goal",
            IssueCode::DuplicateObjectId => "duplicate-object-id",
            IssueCode::OriginUnknownTask => "origin-unknown-task",
            IssueCode::OriginMismatch => "origin-mismatch",
            IssueCode::DuplicateAgentId => "duplicate-agent-id",
            IssueCode::EmptyProfile => "empty-profile",
            IssueCode::DuplicateTaskId => "duplicate-task-id",
            IssueCode::EmptyStepName => "empty-step-name",
            IssueCode::EmptyTaskContent => "empty-task-content",
            IssueCode::UnknownInputObject => "unknown-input-object",
            IssueCode::ForwardDependency => "forward-dependency",
            IssueCode::OutputIsInput => "output-is-input",
            IssueCode::UnknownOutputObject => "unknown-output-object",
            IssueCode::DuplicateOutput => "duplicate-output",
            IssueCode::OutputOriginMismatch => "output-origin-mismatch",
            IssueCode::UnknownAgent => "unknown-agent",
            IssueCode::DuplicateTeamMember => "duplicate-team-member",
            IssueCode::AgentNotInTeam => "agent-not-in-team",
            IssueCode::EmptyInstruction => "empty-instruction",
            IssueCode::InputNotTaskInput => "input-not-task-input",
            IssueCode::ActionRefNotEarlier => "action-ref-not-earlier",
            IssueCode::MissingFinalize => "missing-finalize",
            IssueCode::FinalizeNotLast => "finalize-not-last",
            IssueCode::EmptyPlan => "empty-plan",
            IssueCode::EmptyTeam => "empty-team",
            IssueCode::EmptyProcess => "empty-process",
            IssueCode::FinalizeWithoutInputs => "finalize-without-inputs",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: IssueCode) -> bool {
        self.errors.iter().any(|i| i.code == code)
    }

    pub fn has_warning(&self, code: IssueCode) -> bool {
        self.warnings.iter().any(|i| i.code == code)
    }

    fn error(&mut self, code: IssueCode, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Issue {
            code,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, code: IssueCode, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Issue {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

/// Checks every structural invariant of a strategy and reports all
/// violations. Never fails; the report order is deterministic.
pub fn validate_strategy(strategy: &Strategy) -> ValidationReport {
    let mut report = ValidationReport::default();

    if strategy.goal.is_blank() {
        report.error(IssueCode::EmptyGoal, "goal", "goal text is empty");
    }

    // Agent board.
    let mut agent_ids = HashSet::new();
    for (i, agent) in strategy.agent_board.agents.iter().enumerate() {
        if !agent_ids.insert(&agent.id) {
            report.error(
                IssueCode::DuplicateAgentId,
                format!("agent_board[{i}].id"),
                format!("agent id '{}' appears more than once", agent.id),
            );
        }
        if agent.profile.trim().is_empty() {
            report.error(
                IssueCode::EmptyProfile,
                format!("agent_board[{i}].profile"),
                format!("agent '{}' has no profile", agent.name),
            );
        }
    }

    // Key objects.
    let mut objects = HashMap::new();
    for (i, obj) in strategy.key_objects.iter().enumerate() {
        if objects.insert(&obj.id, obj).is_some() {
            report.error(
                IssueCode::DuplicateObjectId,
                format!("key_objects[{i}].id"),
                format!("object id '{}' appears more than once", obj.id),
            );
        }
        if let Origin::TaskOutput { task_id } = &obj.origin {
            match strategy.task(task_id) {
                None => report.error(
                    IssueCode::OriginUnknownTask,
                    format!("key_objects[{i}].origin"),
                    format!(
                        "object '{}' names unknown producing task '{task_id}'",
                        obj.id
                    ),
                ),
                Some(t) if t.output_object_id != obj.id => report.error(
                    IssueCode::OriginMismatch,
                    format!("key_objects[{i}].origin"),
                    format!(
                        "task '{task_id}' outputs '{}', not '{}'",
                        t.output_object_id, obj.id
                    ),
                ),
                Some(_) => {}
            }
        }
    }

    if strategy.tasks.is_empty() {
        report.warn(IssueCode::EmptyPlan, "tasks", "plan has no tasks");
    }

    // Producer position of every task output, first occurrence wins.
    let mut producer: HashMap<_, usize> = HashMap::new();
    for (j, task) in strategy.tasks.iter().enumerate() {
        producer.entry(&task.output_object_id).or_insert(j);
    }

    let mut task_ids = HashSet::new();
    for (i, task) in strategy.tasks.iter().enumerate() {
        let at = |field: &str| format!("tasks[{i}].{field}");

        if !task_ids.insert(&task.id) {
            report.error(
                IssueCode::DuplicateTaskId,
                at("id"),
                format!("task id '{}' appears more than once", task.id),
            );
        }
        if task.step_name.trim().is_empty() {
            report.error(
                IssueCode::EmptyStepName,
                at("step_name"),
                "step name is empty",
            );
        }
        if task.task_content.trim().is_empty() {
            report.error(
                IssueCode::EmptyTaskContent,
                at("task_content"),
                "task content is empty",
            );
        }

        for input in &task.input_object_ids {
            if input == &task.output_object_id {
                continue;
            }
            match objects.get(input) {
                None => report.error(
                    IssueCode::UnknownInputObject,
                    at("input_object_ids"),
                    format!("input '{input}' is not a known key object"),
                ),
                Some(obj) => match producer.get(input) {
                    Some(&j) if j >= i => report.error(
                        IssueCode::ForwardDependency,
                        at("input_object_ids"),
                        format!("input '{input}' is produced later, by task {j}"),
                    ),
                    Some(_) => {}
                    None if obj.is_initial() => {}
                    None => report.error(
                        IssueCode::UnknownInputObject,
                        at("input_object_ids"),
                        format!("input '{input}' is neither initial nor produced by any task"),
                    ),
                },
            }
        }

        if task.input_object_ids.contains(&task.output_object_id) {
            report.error(
                IssueCode::OutputIsInput,
                at("output_object_id"),
                format!("output '{}' is also an input", task.output_object_id),
            );
        }
        match objects.get(&task.output_object_id) {
            None => report.error(
                IssueCode::UnknownOutputObject,
                at("output_object_id"),
                format!(
                    "output '{}' is not a known key object",
                    task.output_object_id
                ),
            ),
            Some(obj) => {
                let owned =
                    matches!(&obj.origin, Origin::TaskOutput { task_id } if task_id == &task.id);
                if !owned {
                    report.error(
                        IssueCode::OutputOriginMismatch,
                        at("output_object_id"),
                        format!(
                            "object '{}' does not record task '{}' as its origin",
                            obj.id, task.id
                        ),
                    );
                }
            }
        }
        if producer.get(&task.output_object_id) != Some(&i) {
            report.error(
                IssueCode::DuplicateOutput,
                at("output_object_id"),
                format!(
                    "output '{}' is already produced by an earlier task",
                    task.output_object_id
                ),
            );
        }

        let mut members = HashSet::new();
        for member in &task.team {
            if !strategy.agent_board.contains(member) {
                report.error(
                    IssueCode::UnknownAgent,
                    at("team"),
                    format!("agent '{member}' is not on the board"),
                );
            }
            if !members.insert(member) {
                report.error(
                    IssueCode::DuplicateTeamMember,
                    at("team"),
                    format!("agent '{member}' is listed twice"),
                );
            }
        }
        if task.team.is_empty() {
            report.warn(IssueCode::EmptyTeam, at("team"), "no agents assigned yet");
        }

        if task.process.is_empty() {
            report.warn(
                IssueCode::EmptyProcess,
                at("process"),
                "task process not generated yet",
            );
            continue;
        }
        let last = task.process.len() - 1;
        for (a, action) in task.process.iter().enumerate() {
            let act = |field: &str| format!("tasks[{i}].process[{a}].{field}");
            if !members.contains(&action.agent_id) {
                report.error(
                    IssueCode::AgentNotInTeam,
                    act("agent_id"),
                    format!("agent '{}' is not on this task's team", action.agent_id),
                );
            }
            if action.instruction.trim().is_empty() {
                report.error(
                    IssueCode::EmptyInstruction,
                    act("instruction"),
                    "instruction is empty",
                );
            }
            for input in &action.important_inputs {
                match input {
                    InputRef::KeyObject(id) => {
                        if !task.input_object_ids.contains(id) {
                            report.error(
                                IssueCode::InputNotTaskInput,
                                act("important_inputs"),
                                format!("key object '{id}' is not an input of this task"),
                            );
                        }
                    }
                    InputRef::Action(k) => {
                        if *k >= a {
                            report.error(
                                IssueCode::ActionRefNotEarlier,
                                act("important_inputs"),
                                format!("action {k} is not earlier than action {a}"),
                            );
                        }
                    }
                }
            }
            if action.interaction_type == InteractionType::Finalize {
                if a != last {
                    report.error(
                        IssueCode::FinalizeNotLast,
                        format!("tasks[{i}].process[{a}]"),
                        "finalize must be the last action",
                    );
                } else if action.important_inputs.is_empty() {
                    report.warn(
                        IssueCode::FinalizeWithoutInputs,
                        format!("tasks[{i}].process[{a}]"),
                        "finalize has no important inputs; it will see task inputs only",
                    );
                }
            }
        }
        if task.process[last].interaction_type != InteractionType::Finalize {
            report.error(
                IssueCode::MissingFinalize,
                at("process"),
                "process must end with a finalize action",
            );
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{ActionSpec, ObjectId, TaskId};

    #[test]
    fn novel_strategy_is_valid() {
        let report = validate_strategy(&fixtures::novel_strategy());
        assert!(report.errors.is_empty(), "{:?}", report.errors);
    }

    #[test]
    fn empty_plan_only_warns() {
        let mut s = fixtures::novel_strategy();
        s.tasks.clear();
        s.key_objects.retain(|o| o.is_initial());
        let report = validate_strategy(&s);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        assert!(report.has_warning(IssueCode::EmptyPlan));
    }

    #[test]
    fn forward_dependency_is_located() {
        let s = fixtures::chain_strategy(3);
        let mut bad = s.clone();
        // task 0 consumes task 1's output
        let out1 = bad.tasks[1].output_object_id.clone();
        bad.tasks[0].input_object_ids.push(out1);
        let report = validate_strategy(&bad);
        let fwd: Vec<_> = report
            .errors
            .iter()
            .filter(|i| i.code == IssueCode::ForwardDependency)
            .collect();
        assert_eq!(fwd.len(), 1);
        assert_eq!(fwd[0].path, "tasks[0].input_object_ids");
    }

    #[test]
    fn finalize_position_rules() {
        let mut s = fixtures::chain_strategy(1);
        let proc = &mut s.tasks[0].process;
        proc.swap(0, 1);
        let report = validate_strategy(&s);
        assert!(report.has_error(IssueCode::FinalizeNotLast));
        assert!(report.has_error(IssueCode::MissingFinalize));
    }

    #[test]
    fn action_refs_must_point_backward() {
        let mut s = fixtures::chain_strategy(1);
        s.tasks[0].process[0]
            .important_inputs
            .push(InputRef::Action(0));
        let report = validate_strategy(&s);
        assert!(report.has_error(IssueCode::ActionRefNotEarlier));
    }

    #[test]
    fn dangling_references_are_reported() {
        let mut s = fixtures::chain_strategy(2);
        s.tasks[1].team.push("ghost".into());
        s.tasks[1].process.insert(
            0,
            ActionSpec {
                agent_id: "ghost".into(),
                instruction: "haunt".into(),
                interaction_type: InteractionType::Propose,
                important_inputs: vec![InputRef::KeyObject(ObjectId::new("nowhere"))],
            },
        );
        s.key_objects[0].origin = Origin::TaskOutput {
            task_id: TaskId::new("task-99"),
        };
        let report = validate_strategy(&s);
        assert!(report.has_error(IssueCode::UnknownAgent));
        assert!(report.has_error(IssueCode::InputNotTaskInput));
        assert!(report.has_error(IssueCode::OriginUnknownTask));
    }

    #[test]
    fn validation_is_deterministic() {
        let mut s = fixtures::chain_strategy(4);
        s.tasks[2].step_name.clear();
        s.tasks[3].process.clear();
        assert_eq!(validate_strategy(&s), validate_strategy(&s.clone()));
    }
}
