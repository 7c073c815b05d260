use crate::gateway::{PromptTemplate, SchemaId, Stage};

const PLAN_OUTLINE: &str = r#"You are an expert plan outline designer. Carefully analyze the goal below and decompose it into a short sequence of steps that a team of AI agents will carry out one after the other.

Goal: {goal}

Initial key objects provided by the user:
{initial_objects}

For every step give:
- stepName: a clear and concise name summarizing the step
- taskContent: what has to be done in this step
- inputObjects: names of the key objects this step uses; each must be an initial key object or the output of an EARLIER step
- outputObject: the name of the single new key object this step produces (unique, not an initial object)
- outputDescription: one sentence describing that object

Respond with JSON only, shaped like:
{"tasks": [{"stepName": "...", "taskContent": "...", "inputObjects": ["..."], "outputObject": "...", "outputDescription": "..."}]}
"#;

const AGENT_ASSIGNMENT: &str = r#"You are an expert manager. Analyze which abilities the step below requires, read the profile of every candidate agent, and choose the team that should carry the step out.

Overall goal: {goal}

Step:
{task}

Candidate agents:
{board}

Respond with JSON only, listing chosen agent names:
{"team": ["..."]}
"#;

const TASK_PROCESS: &str = r#"You are an expert collaboration coordinator. Read the profile of each agent assigned to the step below and specify, action by action, how they collaborate to complete it.

Overall goal: {goal}

Step:
{task}

Assigned agents:
{team}

For each action give:
- agent: name of the acting agent (must be one of the assigned agents)
- instruction: what the agent should do and how
- interactionType: one of "propose" (put forward something that contributes to the step), "critique" (give feedback on another action's result), "improve" (improve the result of a previous action), "finalize" (deliver the step's final result based on previous actions)
- importantInputs: the earlier information this action needs, as {"keyObject": "<input object name>"} for the step's input key objects or {"action": <zero-based index of an earlier action>}

The last action, and only the last action, must be a finalize.

Respond with JSON only, shaped like:
{"actions": [{"agent": "...", "instruction": "...", "interactionType": "propose", "importantInputs": [{"keyObject": "..."}]}]}
"#;

const ASPECT_DERIVATION: &str = r#"You are an expert manager. Name the three capabilities that matter most for completing the step below. Use at most six words per capability.

Overall goal: {goal}

Step:
{task}

Respond with JSON only:
{"aspects": ["...", "...", "..."]}
"#;

const AGENT_SCORING: &str = r#"You are an expert manager assessing candidate agents for the step below. Score every agent on every capability from 1 (weak) to 5 (excellent) and justify each score in one sentence.

Overall goal: {goal}

Step:
{task}

Capabilities:
{aspects}

Candidate agents:
{board}

Respond with JSON only, one entry per agent and capability:
{"scores": [{"agent": "...", "aspect": "...", "score": 3, "rationale": "..."}]}
"#;

const PLAN_BRANCH: &str = r#"You are an expert plan outline designer revising an existing plan.

Goal: {goal}

Initial key objects:
{initial_objects}

Baseline plan:
{baseline}

Steps before step {branch_point} are fixed and must not be repeated. Rewrite the plan from step {branch_point} onward so that it satisfies this requirement:
{requirement}

{variant}

Reuse a baseline step's exact stepName when you keep that step. Each inputObjects entry must be an initial key object or the output of an earlier step (fixed or new).

Respond with JSON only, listing ONLY the steps from step {branch_point} onward:
{"tasks": [{"stepName": "...", "taskContent": "...", "inputObjects": ["..."], "outputObject": "...", "outputDescription": "..."}]}
"#;

const PROCESS_BRANCH: &str = r#"You are an expert collaboration coordinator revising the process of one step.

Overall goal: {goal}

Step:
{task}

Assigned agents:
{team}

Baseline process:
{baseline}

Actions before action {branch_point} are fixed. Rewrite the process from action {branch_point} onward so that it satisfies this requirement:
{requirement}

{variant}

Number actions from zero across the whole process, fixed actions included; {"action": n} may only refer to an earlier action. Interaction types are "propose", "critique", "improve" and "finalize"; the final action, and only it, must be a finalize.

Respond with JSON only, listing ONLY the actions from action {branch_point} onward:
{"actions": [{"agent": "...", "instruction": "...", "interactionType": "improve", "importantInputs": [{"action": 0}]}]}
"#;

/// The prompt set used by the generator. Bodies can be swapped without
/// touching the pipeline as long as the placeholders stay the same.
#[derive(Debug, Clone)]
pub struct Prompts {
    pub plan_outline: PromptTemplate,
    pub agent_assignment: PromptTemplate,
    pub task_process: PromptTemplate,
    pub aspect_derivation: PromptTemplate,
    pub agent_scoring: PromptTemplate,
    pub plan_branch: PromptTemplate,
    pub process_branch: PromptTemplate,
}

impl Default for Prompts {
    fn default() -> Self {
        let t = |stage, body: &str, names: &[&str], schema| {
            PromptTemplate::new(stage, body, names, Some(schema)).expect("built-in template")
        };
        Self {
            plan_outline: t(
                Stage::PlanOutline,
                PLAN_OUTLINE,
                &["goal", "initial_objects"],
                SchemaId::PlanOutline,
            ),
            agent_assignment: t(
                Stage::AgentAssignment,
                AGENT_ASSIGNMENT,
                &["goal", "task", "board"],
                SchemaId::AgentAssignment,
            ),
            task_process: t(
                Stage::TaskProcess,
                TASK_PROCESS,
                &["goal", "task", "team"],
                SchemaId::TaskProcess,
            ),
            aspect_derivation: t(
                Stage::AspectDerivation,
                ASPECT_DERIVATION,
                &["goal", "task"],
                SchemaId::AspectDerivation,
            ),
            agent_scoring: t(
                Stage::AgentScoring,
                AGENT_SCORING,
                &["goal", "task", "aspects", "board"],
                SchemaId::AgentScoring,
            ),
            plan_branch: t(
                Stage::BranchCompletion,
                PLAN_BRANCH,
                &[
                    "goal",
                    "initial_objects",
                    "baseline",
                    "branch_point",
                    "requirement",
                    "variant",
                ],
                SchemaId::PlanOutline,
            ),
            process_branch: t(
                Stage::BranchCompletion,
                PROCESS_BRANCH,
                &[
                    "goal",
                    "task",
                    "team",
                    "baseline",
                    "branch_point",
                    "requirement",
                    "variant",
                ],
                SchemaId::TaskProcess,
            ),
        }
    }
}
