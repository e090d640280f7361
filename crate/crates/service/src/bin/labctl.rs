//! `labctl`: run scheme configs to CSV, serve, seed and smoke-test the lab
//! service.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input. Errors go to
//! stderr as one JSON object per line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use chrono::Utc;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use vlab_core::scheme::{
    builtin_template, builtin_template_files, load_template_file, run_config, validate_config,
    SchemeConfig, SchemeError, SchemeTemplate,
};
use vlab_core::SolverSettings;
use vlab_service::auth::random_token;
use vlab_service::client::{Client, ClientError};
use vlab_service::config::ServeOptions;
use vlab_service::lab::{AssignmentDraft, Caller, NewGroup, NewUser};
use vlab_service::model::{GradeCriteria, QuizQuestion, Role, RunRecord, RunStatus, ValueCheck};
use vlab_service::store::{is_empty_dir, TEMPLATE_DIR};
use vlab_service::{Lab, LabConfig, Server};

const VACUUM_TEMPLATE: &str = "vacuum_station";

#[derive(Parser)]
#[command(
    name = "labctl",
    version,
    about = "Headless operation of the virtual lab service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scheme config and write the result as CSV.
    Run {
        /// Template document (TOML), or the id of a built-in template.
        #[arg(long)]
        template: String,
        /// Config document (JSON); the template defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of output samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Start the API server.
    Serve(ServeOptions),
    /// Initialize a data directory with demo accounts and assignments.
    Seed {
        #[arg(long, env = "LABD_DATA")]
        data: PathBuf,
    },
    /// Smoke-test a running service.
    Check {
        #[arg(long, env = "LABD_ADDR", default_value = vlab_service::config::DEFAULT_ADDR)]
        addr: String,
        #[arg(long)]
        login: String,
        #[arg(long)]
        password: String,
        /// Seconds to wait for the test run.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
    },
}

/// A failed command: exit code and a JSON diagnostic.
struct Failure {
    code: u8,
    body: Value,
}

impl Failure {
    fn runtime(kind: &str, message: impl ToString) -> Self {
        Failure {
            code: 1,
            body: json!({ "error": kind, "message": message.to_string() }),
        }
    }

    fn invalid(message: impl ToString) -> Self {
        Failure {
            code: 2,
            body: json!({ "error": "invalid", "message": message.to_string() }),
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::Invalid(report) => Failure {
                code: 2,
                body: json!({
                    "error": "invalid",
                    "message": format!("invalid config: {report}"),
                    "violations": report.violations,
                }),
            },
            SchemeError::TemplateMismatch { .. }
            | SchemeError::Parse(_)
            | SchemeError::Template { .. } => Failure::invalid(e),
            SchemeError::Io { .. } => Failure::runtime("io", e),
            other => Failure::runtime("simulation", other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            template,
            config,
            out,
            samples,
        } => run(&template, config.as_deref(), out.as_deref(), samples),
        Command::Serve(options) => serve(options),
        Command::Seed { data } => seed(&data),
        Command::Check {
            addr,
            login,
            password,
            timeout,
        } => check(&addr, &login, &password, Duration::from_secs(timeout)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}

fn load_template(arg: &str) -> Result<SchemeTemplate, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(t) = builtin_template(arg) {
            return Ok(t);
        }
    }
    load_template_file(path).map_err(|e| match e {
        SchemeError::Io { ref reason, .. } if path.exists() => {
            Failure::invalid(format!("{}: {reason}", path.display()))
        }
        other => Failure::runtime("io", other),
    })
}

fn run(
    template: &str,
    config: Option<&Path>,
    out: Option<&Path>,
    samples: Option<usize>,
) -> Result<(), Failure> {
    let template = load_template(template)?;
    let mut config = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SchemeConfig>(&text)
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?
        }
        None => template.default_config(),
    };
    if samples.is_some() {
        config.sim_directives.samples = samples;
    }
    let report = validate_config(&template, &config)?;
    if !report.is_valid() {
        return Err(SchemeError::Invalid(report).into());
    }
    let series = run_config(&template, &config, &SolverSettings::default())?;
    let csv = series.to_csv();
    match out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn serve(options: ServeOptions) -> Result<(), Failure> {
    let lab = Lab::open(options.lab_config()).map_err(|e| Failure::runtime("store", e))?;
    let server = Server::start(lab, options.addr).map_err(|e| Failure::runtime("bind", e))?;
    eprintln!(
        "{}",
        json!({ "event": "listening", "addr": server.addr().to_string(), "tier": server.tier() })
    );
    server.join().map_err(|e| Failure::runtime("serve", e))
}

/// Reference check for an assignment: the template defaults' first channel
/// at mid-run.
fn reference_criteria(template: &SchemeTemplate) -> Result<GradeCriteria, Failure> {
    let series = run_config(
        template,
        &template.default_config(),
        &SolverSettings::default(),
    )?;
    let mut checks = Vec::new();
    if let Some(channel) = template.output_channels.first() {
        let times = series.times();
        let probe = times[times.len() / 2];
        let expected = series
            .sample_at(&channel.label, probe)
            .map_err(|e| Failure::runtime("simulation", e))?;
        if expected != 0.0 {
            checks.push(ValueCheck {
                channel: channel.label.clone(),
                probe,
                expected,
                rel_tol: 0.05,
            });
        }
    }
    Ok(GradeCriteria {
        checks,
        property: None,
    })
}

fn seed(data: &Path) -> Result<(), Failure> {
    let empty = is_empty_dir(data).map_err(|e| Failure::runtime("io", e))?;
    if !empty {
        return Err(Failure::runtime(
            "not_empty",
            format!("{} is not empty; refusing to overwrite", data.display()),
        ));
    }
    let templates = data.join(TEMPLATE_DIR);
    std::fs::create_dir_all(&templates)
        .map_err(|e| Failure::runtime("io", format!("{}: {e}", templates.display())))?;
    for (name, text) in builtin_template_files() {
        let path = templates.join(name);
        std::fs::write(&path, text)
            .map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))?;
    }
    let lab = Lab::open(LabConfig {
        data: Some(data.to_path_buf()),
        workers: 0,
        ..LabConfig::default()
    })
    .map_err(|e| Failure::runtime("store", e))?;
    let internal = |e: vlab_service::ApiError| Failure::runtime("seed", e);

    let mut credentials = Vec::new();
    let mut create = |login: &str, role: Role, display: &str| -> Result<String, Failure> {
        let password = random_token(12);
        let user = lab
            .create_user_unchecked(
                None,
                NewUser {
                    login: login.into(),
                    password: password.clone(),
                    role,
                    display_name: Some(display.into()),
                },
            )
            .map_err(internal)?;
        credentials.push(
            json!({ "login": login, "password": password, "role": role, "user_id": user.user_id }),
        );
        Ok(user.user_id)
    };
    let admin_id = create("admin", Role::Administrator, "Administrator")?;
    let teacher_id = create("teacher", Role::Teacher, "Demo Teacher")?;
    let students = vec![
        create("student1", Role::Student, "Student One")?,
        create("student2", Role::Student, "Student Two")?,
    ];
    let caller = |id: &str| Caller {
        user: lab.state().users[id].clone(),
    };
    let group = lab
        .create_group(
            &caller(&admin_id),
            NewGroup {
                name: "Demo group".into(),
                teacher_ids: vec![teacher_id.clone()],
                student_ids: students,
            },
        )
        .map_err(internal)?;

    let teacher = caller(&teacher_id);
    let mut assignments = Vec::new();
    for template in lab.templates().cloned().collect::<Vec<_>>() {
        let quiz = (template.template_id == VACUUM_TEMPLATE).then(|| {
            vec![QuizQuestion {
                question_id: "q1".into(),
                text:
                    "Halving the pumping speed of a single chamber changes the time constant how?"
                        .into(),
                choices: vec![
                    "It halves".into(),
                    "It doubles".into(),
                    "It is unchanged".into(),
                ],
                correct_index: 1,
            }]
        });
        let a = lab
            .create_assignment(
                &teacher,
                AssignmentDraft {
                    group_id: group.group_id.clone(),
                    template_id: template.template_id.clone(),
                    instructions: format!(
                        "Assemble the {} scheme, reproduce the reference configuration and submit the run.",
                        template.title
                    ),
                    references: vec![],
                    due: Utc::now() + chrono::Duration::days(30),
                    criteria: reference_criteria(&template)?,
                    quiz,
                },
            )
            .map_err(internal)?;
        assignments.push(json!({ "assignment_id": a.assignment_id, "template_id": a.template_id }));
    }
    lab.snapshot().map_err(|e| Failure::runtime("store", e))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "data": data.display().to_string(),
            "users": credentials,
            "group_id": group.group_id,
            "assignments": assignments,
        }))
        .expect("json")
    );
    Ok(())
}

fn client_failure(e: ClientError) -> Failure {
    match e {
        ClientError::Transport { .. } => Failure::runtime("connection", e),
        ClientError::Api { status: 401, .. } => Failure::runtime("auth", e),
        other => Failure::runtime("check", other),
    }
}

fn check(addr: &str, login: &str, password: &str, timeout: Duration) -> Result<(), Failure> {
    let mut client = Client::for_addr(addr);
    let health = client.health().map_err(client_failure)?;
    client.login(login, password).map_err(client_failure)?;
    let template: SchemeTemplate = client
        .get(&format!("/templates/{VACUUM_TEMPLATE}"))
        .map_err(client_failure)?;
    let submitted: RunRecord = client
        .post("/runs", &template.default_config())
        .map_err(client_failure)?;
    let run = client
        .wait_run(&submitted.run_id, timeout)
        .map_err(client_failure)?;
    if run.status != RunStatus::Done {
        return Err(Failure::runtime(
            "run_failed",
            run.error.unwrap_or_else(|| "run failed".into()),
        ));
    }
    let csv = client
        .get_text(&format!("/runs/{}/result.csv", run.run_id))
        .map_err(client_failure)?;
    let header: BTreeSet<&str> = csv.lines().next().unwrap_or("").split(',').collect();
    let result_labels: BTreeSet<&str> = run
        .result
        .as_ref()
        .map(|r| r.labels().collect())
        .unwrap_or_default();
    for channel in &template.output_channels {
        let column = format!("{}[{}]", channel.label, channel.unit);
        if !header.contains(column.as_str()) || !result_labels.contains(channel.label.as_str()) {
            return Err(Failure {
                code: 1,
                body: json!({
                    "error": "contract",
                    "message": format!("missing channel `{}`", channel.label),
                    "channel": channel.label,
                }),
            });
        }
    }
    println!(
        "{}",
        json!({
            "status": "ok",
            "health": health,
            "run_id": run.run_id,
            "checksum": run.checksum,
            "channels": template.output_channels.iter().map(|c| &c.label).collect::<Vec<_>>(),
        })
    );
    Ok(())
}
