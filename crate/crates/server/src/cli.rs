//! `coordkit`: the whole pipeline from a terminal, one project file at a time.

use crate::config::Config;
use crate::error::ApiError;
use crate::http;
use crate::provider::build_gateway;
use crate::service::{self, AspectEdit, Service};
use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use coordkit_core::explore::{NodeId, SessionKind, SpawnRequest};
use coordkit_core::gateway::SchemaId;
use coordkit_core::genesis::BranchRequest;
use coordkit_core::model::{validate_strategy, Goal, TaskId};
use coordkit_core::runtime::{EventKind, RunEvent, RunStatus};
use coordkit_core::workspace::{self, ExportFormat, Project};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "coordkit",
    version,
    about = "Design and run coordination strategies for LLM agent teams"
)]
pub struct Cli {
    /// Project file to operate on.
    #[arg(long, global = true, default_value = "project.agentcoord.json")]
    pub project: PathBuf,
    /// LLM provider: `mock` (offline, scripted) or `remote`.
    #[arg(long, global = true)]
    pub provider: Option<String>,
    /// Directory of scripted mock responses.
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    /// Seed for the mock provider and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file (see README).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty project file.
    Init {
        #[arg(long)]
        name: String,
        #[arg(long)]
        goal: String,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Manage the agent board.
    #[command(subcommand)]
    Board(BoardCommand),
    /// Generate a complete strategy: plan, teams and processes.
    Generate {
        /// Replace the project goal (creates the project if the file is missing).
        #[arg(long)]
        goal: Option<String>,
        /// Only draft the plan outline.
        #[arg(long)]
        outline_only: bool,
    },
    /// Spawn alternative versions of the plan or of one task's process.
    #[command(subcommand)]
    Branch(BranchCommand),
    /// Make a branch the working version.
    Adopt {
        #[arg(long)]
        session: String,
        #[arg(long)]
        node: String,
    },
    /// Re-assign a task's team (and regenerate its process if needed).
    Assign {
        /// Task id or step name.
        #[arg(long)]
        task: String,
    },
    /// Score the board on a task's capability aspects and rank the agents.
    Score {
        /// Task id or step name.
        #[arg(long)]
        task: String,
        /// Aspects to rank by, comma separated; unknown names are added.
        #[arg(long, value_delimiter = ',')]
        aspects: Vec<String>,
    },
    /// Execute the current strategy, printing the event stream.
    Run {
        /// Print events as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// List what a result depends on, in execution order.
    Trace {
        /// Key object id (e.g. `obj-7`) or action (`task-2#1`).
        #[arg(long)]
        node: String,
        /// Run to trace (default: the latest).
        #[arg(long)]
        run: Option<String>,
    },
    /// Write a run's results as JSON or Markdown.
    Export {
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the current strategy.
    Validate,
    /// Serve the HTTP API (opening --project if it exists).
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// List the published JSON schemas or print one.
    Schema { slug: Option<String> },
}

#[derive(Debug, Subcommand)]
pub enum BoardCommand {
    /// Replace the board with agents from a JSON file of `{name, profile, avatar?}`.
    Import { file: PathBuf },
    /// Print the board.
    Show,
}

#[derive(Debug, Args)]
pub struct BranchArgs {
    /// What the variants should change.
    #[arg(long)]
    pub requirement: String,
    /// Number of variants (at most 5).
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Index (or task id / step name, for plans) where variants may start to differ.
    #[arg(long, default_value = "0")]
    pub point: String,
    /// Branch from this node instead of the session's baseline.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Session to add to (default: the latest one on the current strategy, or a new one).
    #[arg(long)]
    pub session: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum BranchCommand {
    /// Variants of the plan outline from a task index on.
    Plan(BranchArgs),
    /// Variants of one task's process from an action index on.
    Process {
        /// Task id or step name.
        #[arg(long)]
        task: String,
        #[command(flatten)]
        args: BranchArgs,
    },
}

struct Ctx {
    config: Config,
    service: Service,
    path: PathBuf,
}

impl Ctx {
    fn load(&self) -> Result<Project, ApiError> {
        Ok(workspace::load(&self.path)?)
    }

    fn save(&self, project: &Project) -> Result<(), ApiError> {
        Ok(workspace::save(project, &self.path)?)
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            if let Some(details) = &e.details {
                if let Some(errors) = details.get("errors").and_then(|v| v.as_array()) {
                    for issue in errors {
                        eprintln!(
                            "  {}: {}",
                            issue["path"].as_str().unwrap_or("?"),
                            issue["message"].as_str().unwrap_or("")
                        );
                    }
                } else if let Some(list) = details.get("violations").and_then(|v| v.as_array()) {
                    for v in list {
                        eprintln!("  {}", v.as_str().unwrap_or_default());
                    }
                }
            }
            ExitCode::FAILURE
        }
    }
}

fn io_err(e: std::io::Error) -> ApiError {
    ApiError::new("io-error", e.to_string())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), ApiError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(p) = cli.provider {
        config.provider = p;
    }
    if let Some(f) = cli.fixtures {
        config.fixtures = Some(f);
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Command::Schema { slug } = &cli.command {
        return schema(slug.as_deref(), out);
    }
    if let Command::Serve { host, port } = cli.command {
        if let Some(h) = host {
            config.host = h;
        }
        if let Some(p) = port {
            config.port = p;
        }
        let preload = cli.project.exists().then_some(cli.project.as_path());
        let rt = tokio::runtime::Runtime::new().map_err(io_err)?;
        return rt.block_on(http::serve(&config, preload));
    }
    let (gateway, provider) = build_gateway(&config)?;
    let ctx = Ctx {
        service: Service::new(gateway, provider, config.seed),
        config,
        path: cli.project,
    };
    match cli.command {
        Command::Init { name, goal, force } => init(&ctx, &name, &goal, force, out),
        Command::Board(BoardCommand::Import { file }) => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| ApiError::new("io-error", format!("{}: {e}", file.display())))?;
            let mut project = ctx.load()?;
            let board = ctx.service.import_board(&mut project, &text)?;
            ctx.save(&project)?;
            for a in &board.agents {
                writeln!(out, "{}\t{}", a.id, a.name).map_err(io_err)?;
            }
            Ok(())
        }
        Command::Board(BoardCommand::Show) => {
            let project = ctx.load()?;
            for a in &project.agent_board.agents {
                writeln!(out, "{}\t{}\t{}", a.id, a.name, a.profile).map_err(io_err)?;
            }
            Ok(())
        }
        Command::Generate { goal, outline_only } => generate(&ctx, goal, outline_only, out),
        Command::Branch(cmd) => branch(&ctx, cmd, out),
        Command::Adopt { session, node } => {
            let mut project = ctx.load()?;
            let state = ctx.service.adopt(&mut project, &session, &NodeId(node))?;
            ctx.save(&project)?;
            writeln!(out, "adopted; strategy {}", state.version).map_err(io_err)
        }
        Command::Assign { task } => {
            let mut project = ctx.load()?;
            let outcome = ctx.service.assign(&mut project, &task)?;
            ctx.save(&project)?;
            let names = agent_names(&project, &outcome.team);
            writeln!(out, "team: {}", names.join(", ")).map_err(io_err)?;
            if outcome.process_regenerated {
                writeln!(out, "process regenerated").map_err(io_err)?;
            }
            Ok(())
        }
        Command::Score { task, aspects } => score(&ctx, &task, &aspects, out),
        Command::Run { json } => run_strategy(&ctx, json, out),
        Command::Trace { node, run } => {
            let project = ctx.load()?;
            let record = workspace::load_run(&project, &ctx.path, &pick_run(&project, run)?)?;
            let strategy = service::record_strategy(&project, &record)?;
            let outcome = service::trace(&record, strategy, &node)?;
            for n in &outcome.predecessors {
                writeln!(out, "{n}").map_err(io_err)?;
            }
            Ok(())
        }
        Command::Export {
            format,
            run,
            out: file,
        } => {
            let format: ExportFormat = format
                .parse()
                .map_err(|e: String| ApiError::bad_request(e))?;
            let project = ctx.load()?;
            let record = workspace::load_run(&project, &ctx.path, &pick_run(&project, run)?)?;
            let strategy = service::record_strategy(&project, &record)?;
            let text = workspace::export_result(&record, strategy, format);
            match file {
                Some(path) => {
                    workspace::write_atomic(&path, text.as_bytes())?;
                    writeln!(out, "wrote {}", path.display()).map_err(io_err)
                }
                None => out.write_all(text.as_bytes()).map_err(io_err),
            }
        }
        Command::Validate => {
            let project = ctx.load()?;
            let report = validate_strategy(project.strategy());
            for w in &report.warnings {
                writeln!(out, "warning {}: {}", w.path, w.message).map_err(io_err)?;
            }
            if !report.is_valid() {
                return Err(ApiError::validation(&report));
            }
            writeln!(
                out,
                "ok: {} tasks, {} key objects",
                project.strategy().tasks.len(),
                project.strategy().key_objects.len()
            )
            .map_err(io_err)
        }
        Command::Serve { .. } | Command::Schema { .. } => unreachable!("handled above"),
    }
}

fn schema(slug: Option<&str>, out: &mut dyn Write) -> Result<(), ApiError> {
    match slug {
        None => {
            for s in SchemaId::ALL {
                writeln!(out, "{}", s.slug()).map_err(io_err)?;
            }
            Ok(())
        }
        Some(slug) => {
            let id = SchemaId::from_slug(slug)
                .ok_or_else(|| ApiError::new("unknown-schema", format!("no schema '{slug}'")))?;
            out.write_all(id.document().as_bytes()).map_err(io_err)
        }
    }
}

fn init(
    ctx: &Ctx,
    name: &str,
    goal: &str,
    force: bool,
    out: &mut dyn Write,
) -> Result<(), ApiError> {
    if ctx.path.exists() && !force {
        return Err(ApiError::new(
            "project-exists",
            format!("{} exists (use --force to overwrite)", ctx.path.display()),
        ));
    }
    if goal.trim().is_empty() {
        return Err(ApiError::new("empty-goal", "goal must not be empty"));
    }
    let project = Project::new(
        project_id(&ctx.path),
        name.trim(),
        Goal::new(goal.trim()),
        Default::default(),
    );
    ctx.save(&project)?;
    writeln!(out, "created {}", ctx.path.display()).map_err(io_err)
}

fn project_id(path: &Path) -> String {
    let file = path
        .file_name()
        .and_then(|f| f.to_str())
        .unwrap_or("project");
    let stem = file
        .strip_suffix(workspace::PROJECT_EXTENSION)
        .unwrap_or(file);
    let id: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect();
    if id.trim_matches('-').is_empty() {
        "project".into()
    } else {
        id
    }
}

/// The board to use when the project has none: the mock's own board file,
/// so `generate --goal ...` works offline without a separate import.
fn fallback_board(ctx: &Ctx) -> Option<PathBuf> {
    if ctx.service.provider() != "mock" {
        return None;
    }
    let dir = ctx
        .config
        .fixtures
        .clone()
        .unwrap_or_else(coordkit_core::fixtures::novel_fixture_dir);
    Some(dir.join("board.json")).filter(|p| p.is_file())
}

fn generate(
    ctx: &Ctx,
    goal: Option<String>,
    outline_only: bool,
    out: &mut dyn Write,
) -> Result<(), ApiError> {
    let mut project = if ctx.path.exists() {
        ctx.load()?
    } else {
        let goal = goal.as_deref().ok_or_else(|| {
            ApiError::new(
                "io-error",
                format!(
                    "{} does not exist; run init or pass --goal",
                    ctx.path.display()
                ),
            )
        })?;
        Project::new(
            project_id(&ctx.path),
            goal.trim(),
            Goal::new(goal.trim()),
            Default::default(),
        )
    };
    if project.agent_board.agents.is_empty() {
        if let Some(file) = fallback_board(ctx) {
            eprintln!("note: no agent board; using {}", file.display());
            project.set_board(workspace::import_agent_board(&file)?);
        }
    }
    let state = if outline_only {
        ctx.service
            .generate_outline(&mut project, goal.as_deref())?
    } else {
        ctx.service.generate_full(&mut project, goal.as_deref())?
    };
    ctx.save(&project)?;
    for (i, t) in state.strategy.tasks.iter().enumerate() {
        let team = agent_names(&project, &t.team);
        writeln!(
            out,
            "{}. {} [{}] -> {} ({} actions{})",
            i + 1,
            t.step_name,
            t.id,
            t.output_object_id,
            t.process.len(),
            if team.is_empty() {
                String::new()
            } else {
                format!("; {}", team.join(", "))
            }
        )
        .map_err(io_err)?;
    }
    writeln!(
        out,
        "strategy {} written to {}",
        state.version,
        ctx.path.display()
    )
    .map_err(io_err)
}

fn agent_names(project: &Project, ids: &[coordkit_core::model::AgentId]) -> Vec<String> {
    ids.iter()
        .map(|id| {
            project
                .strategy()
                .agent_board
                .get(id)
                .map_or_else(|| id.to_string(), |a| a.name.clone())
        })
        .collect()
}

fn branch(ctx: &Ctx, cmd: BranchCommand, out: &mut dyn Write) -> Result<(), ApiError> {
    let mut project = ctx.load()?;
    let (kind, task, args) = match cmd {
        BranchCommand::Plan(args) => (SessionKind::PlanOutline, None, args),
        BranchCommand::Process { task, args } => {
            let id = ctx.service.task_id(&project, &task)?;
            (SessionKind::TaskProcess, Some(id), args)
        }
    };
    let session = match args.session.clone() {
        Some(s) => {
            project.session(&s)?;
            s
        }
        None => match ctx.service.latest_session(&project, kind, task.as_ref()) {
            Some(s) => s,
            None => {
                ctx.service
                    .open_session(
                        &mut project,
                        kind,
                        task.as_ref().map(TaskId::as_str),
                        Utc::now(),
                    )?
                    .id
            }
        },
    };
    let point = branch_point(ctx, &project, kind, &args.point)?;
    let request = SpawnRequest {
        baseline: args.baseline.map(NodeId),
        branch: BranchRequest {
            branch_point: point,
            requirement: args.requirement,
            count: args.count,
        },
    };
    let nodes = ctx
        .service
        .spawn(&mut project, &session, &request, Utc::now())?;
    ctx.save(&project)?;
    eprintln!("session {session}: {} branch(es)", nodes.len());
    for n in nodes {
        writeln!(out, "{n}").map_err(io_err)?;
    }
    Ok(())
}

fn branch_point(
    ctx: &Ctx,
    project: &Project,
    kind: SessionKind,
    point: &str,
) -> Result<usize, ApiError> {
    if let Ok(n) = point.trim().parse::<usize>() {
        return Ok(n);
    }
    if kind == SessionKind::PlanOutline {
        let id = ctx.service.task_id(project, point)?;
        return Ok(project.strategy().task_index(&id).expect("resolved task"));
    }
    Err(ApiError::bad_request(format!(
        "--point '{point}' is not an action index"
    )))
}

fn score(ctx: &Ctx, task: &str, aspects: &[String], out: &mut dyn Write) -> Result<(), ApiError> {
    let mut project = ctx.load()?;
    let id = ctx.service.task_id(&project, task)?;
    let session = ctx
        .service
        .open_session(
            &mut project,
            SessionKind::AgentAssignment,
            Some(id.as_str()),
            Utc::now(),
        )?
        .id;
    let derived = ctx.service.edit_aspects(
        &mut project,
        &session,
        &AspectEdit {
            derive: true,
            ..AspectEdit::default()
        },
    )?;
    let wanted: Vec<String> = aspects
        .iter()
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
        .collect();
    let add: Vec<String> = wanted
        .iter()
        .filter(|a| derived.get(a).is_none())
        .cloned()
        .collect();
    ctx.service.edit_aspects(
        &mut project,
        &session,
        &AspectEdit {
            derive: false,
            add,
            select: (!wanted.is_empty()).then(|| wanted.clone()),
        },
    )?;
    let matrix = ctx.service.score_session(&mut project, &session)?;
    let ranking = ctx.service.rank(&project, &session)?;
    ctx.save(&project)?;
    let selected = project.session(&session)?.assignment()?.aspects.selected();
    writeln!(out, "session {session}; ranked by: {}", selected.join(", ")).map_err(io_err)?;
    for (i, r) in ranking.iter().enumerate() {
        let name = agent_names(&project, std::slice::from_ref(&r.agent_id)).remove(0);
        let cells: Vec<String> = selected
            .iter()
            .map(|a| {
                matrix
                    .row(&r.agent_id)
                    .and_then(|row| row.scores.get(a))
                    .map_or("-".into(), u8::to_string)
            })
            .collect();
        writeln!(
            out,
            "{:>2}. {:<24} {:.2}  [{}]{}",
            i + 1,
            name,
            r.mean,
            cells.join(" "),
            if r.assigned { "  assigned" } else { "" }
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn describe(e: &RunEvent) -> String {
    match &e.kind {
        EventKind::RunStarted {
            run_id,
            strategy_version,
        } => format!("run {run_id} on {strategy_version}"),
        EventKind::TaskStarted { task_id } | EventKind::TaskCompleted { task_id } => {
            task_id.to_string()
        }
        EventKind::ActionStarted {
            task_id,
            action_index,
        } => format!("{task_id}#{action_index}"),
        EventKind::ActionRetry {
            task_id,
            action_index,
            attempt,
            message,
        } => format!("{task_id}#{action_index} attempt {attempt}: {message}"),
        EventKind::ActionCompleted { result } => {
            let first: String = result
                .output
                .lines()
                .next()
                .unwrap_or("")
                .chars()
                .take(60)
                .collect();
            format!("{}#{} {}", result.task_id, result.action_index, first)
        }
        EventKind::ObjectMaterialized { object_id, value } => {
            format!("{object_id} ({} chars)", value.chars().count())
        }
        EventKind::RunFinished { status } => match status {
            RunStatus::Completed => "completed".into(),
            RunStatus::Running => "running".into(),
            RunStatus::Failed { code, message, .. } => format!("failed {code}: {message}"),
        },
    }
}

fn run_strategy(ctx: &Ctx, json: bool, out: &mut dyn Write) -> Result<(), ApiError> {
    let mut project = ctx.load()?;
    let run_id = project.next_run_id();
    let mut write_error = None;
    let record = ctx
        .service
        .run(&mut project, Some(&ctx.path), &run_id, &mut |e| {
            let line = if json {
                serde_json::to_string(e).unwrap_or_default()
            } else {
                let value = serde_json::to_value(e).unwrap_or_default();
                format!(
                    "{:>4} {:<19} {}",
                    e.seq,
                    value["type"].as_str().unwrap_or(""),
                    describe(e)
                )
            };
            if let Err(err) = writeln!(out, "{line}") {
                write_error.get_or_insert(err);
            }
        })?;
    ctx.save(&project)?;
    if let Some(e) = write_error {
        return Err(io_err(e));
    }
    match &record.status {
        RunStatus::Failed {
            task_id,
            action_index,
            code,
            message,
        } => {
            let published = crate::error::ERROR_CODES.iter().any(|(c, _)| c == code);
            Err(ApiError::new(
                if published { code } else { "provider-failed" },
                format!("run {run_id} stopped at {task_id}#{action_index}: {message}"),
            ))
        }
        _ => Ok(()),
    }
}

fn pick_run(project: &Project, run: Option<String>) -> Result<String, ApiError> {
    match run {
        Some(r) => Ok(r),
        None => project
            .runs
            .last()
            .map(|r| r.run_id.clone())
            .ok_or_else(|| {
                ApiError::new(
                    "unknown-run",
                    "the project has no runs yet; use `coordkit run`",
                )
            }),
    }
}
