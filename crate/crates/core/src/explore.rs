//! Exploration sessions: branch forests over plan, process or team
//! versions, baseline selection, adoption, and agent ranking.

use crate::genesis::{AspectSet, BranchRequest, Generator, GenesisError, ScoreMatrix};
use crate::model::{validate_strategy, ActionSpec, AgentId, Issue, Strategy, TaskId};
use crate::versions::{Payload, VersionId, VersionStore};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

pub const MANUAL_EDIT_LABEL: &str = "manual edit";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SessionKind {
    PlanOutline,
    TaskProcess,
    AgentAssignment,
}

impl SessionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionKind::PlanOutline => "planOutline",
            SessionKind::TaskProcess => "taskProcess",
            SessionKind::AgentAssignment => "agentAssignment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BranchNode {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<NodeId>,
    pub payload: VersionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<BranchRequest>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Working state of an agent-assignment session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssignmentState {
    pub aspects: AspectSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreMatrix>,
    pub team: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplorationSession {
    pub id: String,
    pub kind: SessionKind,
    /// Strategy version the session was opened against.
    pub context: VersionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<TaskId>,
    pub nodes: Vec<BranchNode>,
    pub active_baseline: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adopted: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<AssignmentState>,
}

/// What a session starts from.
#[derive(Debug, Clone)]
pub enum SessionSeed {
    PlanOutline {
        strategy: Strategy,
    },
    /// Branches the task's current process.
    TaskProcess {
        strategy: Strategy,
        task_id: TaskId,
    },
    /// Explores the task's current team.
    AgentAssignment {
        strategy: Strategy,
        task_id: TaskId,
        aspects: AspectSet,
        scores: Option<ScoreMatrix>,
    },
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("unknown node '{0}'")]
    UnknownNode(NodeId),
    #[error("version '{0}' is missing from the store")]
    MissingVersion(VersionId),
    #[error("unknown task '{0}'")]
    UnknownTask(TaskId),
    #[error("agent '{0}' is not on the board")]
    UnknownAgent(AgentId),
    #[error("payload is not valid: {}", .0.join("; "))]
    InvalidPayload(Vec<String>),
    #[error("operation needs a {expected} session, this one is {actual}")]
    WrongSessionKind {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("a team must keep at least one agent")]
    EmptyTeamForbidden,
    #[error("no score matrix for this session")]
    NoScores,
    #[error("select at least one aspect to rank by")]
    NoSelectedAspects,
    #[error("session structure is broken: {0}")]
    Forest(String),
    #[error(transparent)]
    Genesis(#[from] GenesisError),
}

impl ExploreError {
    pub fn code(&self) -> &'static str {
        match self {
            ExploreError::UnknownNode(_) => "unknown-node",
            ExploreError::MissingVersion(_) => "missing-version",
            ExploreError::UnknownTask(_) => "unknown-task",
            ExploreError::UnknownAgent(_) => "unknown-agent",
            ExploreError::InvalidPayload(_) => "invalid-payload",
            ExploreError::WrongSessionKind { .. } => "wrong-session-kind",
            ExploreError::EmptyTeamForbidden => "empty-team-forbidden",
            ExploreError::NoScores => "no-scores",
            ExploreError::NoSelectedAspects => "no-aspects",
            ExploreError::Forest(_) => "forest-violation",
            ExploreError::Genesis(e) => e.code(),
        }
    }
}

fn issues(errors: Vec<Issue>) -> ExploreError {
    ExploreError::InvalidPayload(errors.iter().map(ToString::to_string).collect())
}

fn check_strategy(strategy: &Strategy) -> Result<(), ExploreError> {
    let report = validate_strategy(strategy);
    if report.is_valid() {
        Ok(())
    } else {
        Err(issues(report.errors))
    }
}

fn check_process(
    context: &Strategy,
    task_id: &TaskId,
    actions: &[ActionSpec],
) -> Result<(), ExploreError> {
    let index = context
        .task_index(task_id)
        .ok_or_else(|| ExploreError::UnknownTask(task_id.clone()))?;
    let mut candidate = context.clone();
    candidate.tasks[index].process = actions.to_vec();
    let scope = format!("tasks[{index}].");
    let errors: Vec<Issue> = validate_strategy(&candidate)
        .errors
        .into_iter()
        .filter(|i| i.path.starts_with(&scope))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(issues(errors))
    }
}

fn check_team(context: &Strategy, task_id: &TaskId, team: &[AgentId]) -> Result<(), ExploreError> {
    if context.task(task_id).is_none() {
        return Err(ExploreError::UnknownTask(task_id.clone()));
    }
    if team.is_empty() {
        return Err(ExploreError::EmptyTeamForbidden);
    }
    let mut seen = HashSet::new();
    for agent in team {
        if !context.agent_board.contains(agent) {
            return Err(ExploreError::UnknownAgent(agent.clone()));
        }
        if !seen.insert(agent) {
            return Err(ExploreError::InvalidPayload(vec![format!(
                "agent '{agent}' appears twice in the team"
            )]));
        }
    }
    Ok(())
}

/// Checks `payload` as a standalone artifact against the session context.
pub fn check_payload(context: &Strategy, payload: &Payload) -> Result<(), ExploreError> {
    match payload {
        Payload::Strategy { strategy } => check_strategy(strategy),
        Payload::Process { task_id, actions } => check_process(context, task_id, actions),
        Payload::Team { task_id, team } => check_team(context, task_id, team),
    }
}

/// Opens a session whose single root node holds the seed payload.
pub fn open_session(
    store: &mut VersionStore,
    id: impl Into<String>,
    seed: SessionSeed,
    at: DateTime<Utc>,
) -> Result<ExplorationSession, ExploreError> {
    let (kind, strategy, task_id, payload, assignment) = match seed {
        SessionSeed::PlanOutline { strategy } => {
            let payload = Payload::Strategy {
                strategy: strategy.clone(),
            };
            (SessionKind::PlanOutline, strategy, None, payload, None)
        }
        SessionSeed::TaskProcess { strategy, task_id } => {
            let task = strategy
                .task(&task_id)
                .ok_or_else(|| ExploreError::UnknownTask(task_id.clone()))?;
            let payload = Payload::Process {
                task_id: task_id.clone(),
                actions: task.process.clone(),
            };
            (
                SessionKind::TaskProcess,
                strategy,
                Some(task_id),
                payload,
                None,
            )
        }
        SessionSeed::AgentAssignment {
            strategy,
            task_id,
            aspects,
            scores,
        } => {
            let task = strategy
                .task(&task_id)
                .ok_or_else(|| ExploreError::UnknownTask(task_id.clone()))?;
            let team = task.team.clone();
            let payload = Payload::Team {
                task_id: task_id.clone(),
                team: team.clone(),
            };
            let state = AssignmentState {
                aspects,
                scores,
                team,
            };
            (
                SessionKind::AgentAssignment,
                strategy,
                Some(task_id),
                payload,
                Some(state),
            )
        }
    };
    check_strategy(&strategy)?;
    check_payload(&strategy, &payload)?;
    let context = store.put_strategy(strategy);
    let root = NodeId::new("node-1");
    let node = BranchNode {
        id: root.clone(),
        parent_id: None,
        payload: store.put(payload),
        request: None,
        created_at: at,
        label: None,
    };
    Ok(ExplorationSession {
        id: id.into(),
        kind,
        context,
        task_id,
        nodes: vec![node],
        active_baseline: root,
        adopted: None,
        assignment,
    })
}

/// Where to spawn and what to ask for. `baseline` defaults to the session's
/// active baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpawnRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<NodeId>,
    #[serde(flatten)]
    pub branch: BranchRequest,
}

impl ExplorationSession {
    pub fn node(&self, id: &NodeId) -> Option<&BranchNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    fn require(&self, id: &NodeId) -> Result<&BranchNode, ExploreError> {
        self.node(id)
            .ok_or_else(|| ExploreError::UnknownNode(id.clone()))
    }

    pub fn children(&self, id: &NodeId) -> Vec<&BranchNode> {
        self.nodes
            .iter()
            .filter(|n| n.parent_id.as_ref() == Some(id))
            .collect()
    }

    pub fn roots(&self) -> Vec<&BranchNode> {
        self.nodes
            .iter()
            .filter(|n| n.parent_id.is_none())
            .collect()
    }

    pub fn context<'a>(&self, store: &'a VersionStore) -> Result<&'a Strategy, ExploreError> {
        store
            .strategy(&self.context)
            .ok_or_else(|| ExploreError::MissingVersion(self.context.clone()))
    }

    pub fn payload<'a>(
        &self,
        store: &'a VersionStore,
        node: &NodeId,
    ) -> Result<&'a Payload, ExploreError> {
        let version = &self.require(node)?.payload;
        store
            .get(version)
            .ok_or_else(|| ExploreError::MissingVersion(version.clone()))
    }

    fn next_node_id(&self) -> NodeId {
        NodeId::new(format!("node-{}", self.nodes.len() + 1))
    }

    fn expect_kind(&self, kind: SessionKind) -> Result<(), ExploreError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(ExploreError::WrongSessionKind {
                expected: kind.as_str(),
                actual: self.kind.as_str(),
            })
        }
    }

    fn attach(
        &mut self,
        parent: &NodeId,
        payload: VersionId,
        request: Option<BranchRequest>,
        label: Option<String>,
        at: DateTime<Utc>,
    ) -> NodeId {
        let id = self.next_node_id();
        self.nodes.push(BranchNode {
            id: id.clone(),
            parent_id: Some(parent.clone()),
            payload,
            request,
            created_at: at,
            label,
        });
        id
    }

    /// Generates `count` variants of the baseline node and attaches them as
    /// its children. On any failure the session is left untouched.
    pub fn spawn_branches(
        &mut self,
        store: &mut VersionStore,
        generator: &Generator,
        request: &SpawnRequest,
        at: DateTime<Utc>,
    ) -> Result<Vec<NodeId>, ExploreError> {
        let parent = request
            .baseline
            .clone()
            .unwrap_or_else(|| self.active_baseline.clone());
        let base = self.payload(store, &parent)?.clone();
        let payloads: Vec<Payload> = match (self.kind, base) {
            (SessionKind::PlanOutline, Payload::Strategy { strategy }) => generator
                .branch_plan(&strategy, &request.branch)?
                .into_iter()
                .map(|strategy| Payload::Strategy { strategy })
                .collect(),
            (SessionKind::TaskProcess, Payload::Process { task_id, actions }) => {
                let mut context = self.context(store)?.clone();
                let task = context
                    .task_mut(&task_id)
                    .ok_or_else(|| ExploreError::UnknownTask(task_id.clone()))?;
                task.process = actions.clone();
                generator
                    .branch_process(&context, &task_id, &actions, &request.branch)?
                    .into_iter()
                    .map(|actions| Payload::Process {
                        task_id: task_id.clone(),
                        actions,
                    })
                    .collect()
            }
            _ => {
                return Err(ExploreError::WrongSessionKind {
                    expected: "planOutline or taskProcess",
                    actual: self.kind.as_str(),
                })
            }
        };
        let context = self.context(store)?.clone();
        for p in &payloads {
            check_payload(&context, p)?;
        }
        let ids = payloads
            .into_iter()
            .map(|p| {
                let version = store.put(p);
                self.attach(&parent, version, Some(request.branch.clone()), None, at)
            })
            .collect();
        Ok(ids)
    }

    /// Stores a hand-edited payload as a child of the active baseline and
    /// makes it the new baseline. Existing nodes are never modified.
    pub fn record_manual_edit(
        &mut self,
        store: &mut VersionStore,
        payload: Payload,
        at: DateTime<Utc>,
    ) -> Result<NodeId, ExploreError> {
        let base = self.payload(store, &self.active_baseline.clone())?;
        if base.kind() != payload.kind() {
            return Err(ExploreError::InvalidPayload(vec![format!(
                "expected a {} payload, got {}",
                base.kind(),
                payload.kind()
            )]));
        }
        check_payload(self.context(store)?, &payload)?;
        let version = store.put(payload);
        let parent = self.active_baseline.clone();
        let id = self.attach(
            &parent,
            version,
            None,
            Some(MANUAL_EDIT_LABEL.to_string()),
            at,
        );
        self.active_baseline = id.clone();
        Ok(id)
    }

    pub fn set_baseline(&mut self, node: &NodeId) -> Result<(), ExploreError> {
        self.require(node)?;
        self.active_baseline = node.clone();
        Ok(())
    }

    /// Marks `node` adopted and returns its payload for installation.
    pub fn adopt(&mut self, store: &VersionStore, node: &NodeId) -> Result<Payload, ExploreError> {
        let payload = self.payload(store, node)?.clone();
        check_payload(self.context(store)?, &payload)?;
        self.adopted = Some(node.clone());
        Ok(payload)
    }

    pub fn assignment(&self) -> Result<&AssignmentState, ExploreError> {
        self.expect_kind(SessionKind::AgentAssignment)?;
        self.assignment
            .as_ref()
            .ok_or_else(|| ExploreError::Forest("assignment state is missing".into()))
    }

    pub fn assignment_mut(&mut self) -> Result<&mut AssignmentState, ExploreError> {
        self.expect_kind(SessionKind::AgentAssignment)?;
        self.assignment
            .as_mut()
            .ok_or_else(|| ExploreError::Forest("assignment state is missing".into()))
    }

    /// Adds then removes agents from the working team. The result is
    /// recorded as a manual-edit node.
    pub fn edit_team(
        &mut self,
        store: &mut VersionStore,
        add: &[AgentId],
        remove: &[AgentId],
        at: DateTime<Utc>,
    ) -> Result<Vec<AgentId>, ExploreError> {
        let board = &self.context(store)?.agent_board;
        for agent in add.iter().chain(remove) {
            if !board.contains(agent) {
                return Err(ExploreError::UnknownAgent(agent.clone()));
            }
        }
        let mut team = self.assignment()?.team.clone();
        for agent in add {
            if !team.contains(agent) {
                team.push(agent.clone());
            }
        }
        team.retain(|a| !remove.contains(a));
        if team.is_empty() {
            return Err(ExploreError::EmptyTeamForbidden);
        }
        let task_id = self
            .task_id
            .clone()
            .ok_or_else(|| ExploreError::Forest("assignment session has no task".into()))?;
        self.record_manual_edit(
            store,
            Payload::Team {
                task_id,
                team: team.clone(),
            },
            at,
        )?;
        self.assignment_mut()?.team = team.clone();
        Ok(team)
    }

    /// Board agents ranked for the assignment view: the working team first,
    /// then everyone else, each part by descending mean over the selected
    /// aspects, ties in board order.
    pub fn rank_agents(&self, store: &VersionStore) -> Result<Vec<RankedAgent>, ExploreError> {
        let state = self.assignment()?;
        let scores = state.scores.as_ref().ok_or(ExploreError::NoScores)?;
        let board = &self.context(store)?.agent_board;
        rank_agents(
            board.agents.iter().map(|a| &a.id),
            &state.team,
            scores,
            &state.aspects.selected(),
        )
    }

    /// Checks the structural invariants: unique ids, resolvable parents and
    /// payloads, no cycles, request-free roots, existing baseline/adoption.
    pub fn check_forest(&self, store: &VersionStore) -> Result<(), ExploreError> {
        let mut parent_of: HashMap<&NodeId, Option<&NodeId>> = HashMap::new();
        for n in &self.nodes {
            if parent_of.insert(&n.id, n.parent_id.as_ref()).is_some() {
                return Err(ExploreError::Forest(format!(
                    "duplicate node id '{}'",
                    n.id
                )));
            }
            if n.parent_id.is_none() && n.request.is_some() {
                return Err(ExploreError::Forest(format!(
                    "root '{}' carries a request",
                    n.id
                )));
            }
            if !store.contains(&n.payload) {
                return Err(ExploreError::MissingVersion(n.payload.clone()));
            }
        }
        for n in &self.nodes {
            let mut seen = BTreeSet::new();
            let mut cursor = Some(&n.id);
            while let Some(id) = cursor {
                if !seen.insert(id) {
                    return Err(ExploreError::Forest(format!("cycle through '{id}'")));
                }
                cursor = match parent_of.get(id) {
                    Some(parent) => *parent,
                    None => return Err(ExploreError::Forest(format!("dangling parent '{id}'"))),
                };
            }
        }
        if !parent_of.contains_key(&self.active_baseline) {
            return Err(ExploreError::UnknownNode(self.active_baseline.clone()));
        }
        if let Some(a) = &self.adopted {
            if !parent_of.contains_key(a) {
                return Err(ExploreError::UnknownNode(a.clone()));
            }
        }
        if !store.contains(&self.context) {
            return Err(ExploreError::MissingVersion(self.context.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankedAgent {
    pub agent_id: AgentId,
    pub assigned: bool,
    pub mean: f64,
}

/// Ranks `board` (in board order) against `scores` over `selected`.
pub fn rank_agents<'a>(
    board: impl IntoIterator<Item = &'a AgentId>,
    team: &[AgentId],
    scores: &ScoreMatrix,
    selected: &[String],
) -> Result<Vec<RankedAgent>, ExploreError> {
    if selected.is_empty() {
        return Err(ExploreError::NoSelectedAspects);
    }
    let mut rows = Vec::new();
    for agent in board {
        let mean = scores.mean(agent, selected).ok_or(ExploreError::NoScores)?;
        rows.push(RankedAgent {
            agent_id: agent.clone(),
            assigned: team.contains(agent),
            mean,
        });
    }
    // stable: equal keys keep board order
    rows.sort_by(|a, b| b.assigned.cmp(&a.assigned).then(b.mean.total_cmp(&a.mean)));
    Ok(rows)
}
