use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bus::{load_triggers, Dispatcher, EventKind, NewEvent, SpawnOutcome, TRIGGERS_FILE};
use crate::generators::{gen_doc, gen_dictionary, gen_skeleton, gen_sql, render_dictionary, GenError, Generator, TargetKind};
use crate::model::DesignModel;
use crate::parser::pretty_print;
use crate::prototyper::{render_events, EventKind as TEvent, Limits, PrototypeError, ScriptRun, Session, Status};
use crate::repository::{RepoError, RepoStore};

use super::{announce, check_event, exit, model_stem, parse_source, session_end_event, source_name_of, CheckReport,
            WorkbenchConfig, REPO_ENV};

#[derive(Debug, Parser)]
#[command(name = "pictoforge", version, about = "Multi-notation design workbench")]
struct Cli {
    /// Repository directory.
    #[arg(long, global = true, env = REPO_ENV)]
    repo: Option<PathBuf>,
    /// Prototyper step limit.
    #[arg(long, global = true)]
    max_steps: Option<u64>,
    /// Prototyper call depth limit.
    #[arg(long, global = true)]
    max_depth: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenKind {
    Dict,
    Sql,
    Skeleton,
    Doc,
}

impl From<GenKind> for Generator {
    fn from(k: GenKind) -> Self {
        match k {
            GenKind::Dict => Generator::Dict,
            GenKind::Sql => Generator::Sql,
            GenKind::Skeleton => Generator::Skeleton,
            GenKind::Doc => Generator::Doc,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Parse a model file and print its canonical form.
    Parse { file: PathBuf },
    /// Run the consistency checker; one line per finding.
    Check { file: PathBuf },
    /// Generate an artifact. NAME selects the schema (sql) or chart/diagram (skeleton).
    Gen {
        #[arg(value_enum)]
        kind: GenKind,
        file: PathBuf,
        name: Option<String>,
        /// Write `<model>_<kind>.<ext>` into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a dialogue prototype, interactively or from a script of input lines.
    Run {
        file: PathBuf,
        diagram: String,
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Repository operations.
    Repo {
        #[command(subcommand)]
        cmd: RepoCmd,
    },
    /// Event log operations.
    Events {
        #[command(subcommand)]
        cmd: EventsCmd,
    },
    /// Serve the HTTP API on localhost.
    Serve {
        #[arg(long, default_value_t = super::DEFAULT_PORT, value_parser = clap::value_parser!(u16).range(1024..))]
        port: u16,
    },
}

#[derive(Debug, Subcommand)]
enum RepoCmd {
    /// Create an empty store at revision 0.
    Init,
    /// Store a model file as the next revision; requires the lock.
    Commit {
        file: PathBuf,
        #[arg(long, env = "PICTOFORGE_AUTHOR")]
        author: String,
        #[arg(short, long, default_value = "")]
        message: String,
    },
    /// Print a revision as model source.
    Checkout {
        revision: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Take the whole-store lock.
    Lock {
        #[arg(long, env = "PICTOFORGE_AUTHOR")]
        holder: String,
    },
    /// Release the lock.
    Unlock {
        #[arg(long, env = "PICTOFORGE_AUTHOR")]
        holder: String,
    },
    /// List revisions.
    Log,
    /// Export a revision (default: current) as an interchange document.
    Export {
        revision: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Commit the model held in an interchange document.
    Import {
        file: PathBuf,
        #[arg(long, env = "PICTOFORGE_AUTHOR")]
        author: String,
    },
}

#[derive(Debug, Subcommand)]
enum EventsCmd {
    /// Print events from a sequence number on, then follow new ones.
    Tail {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        from: u64,
        /// Stop after the events already in the log.
        #[arg(long)]
        no_follow: bool,
        /// Run matching trigger rules from triggers.conf for each event.
        #[arg(long)]
        dispatch: bool,
    },
}

/// Exit with a code after writing a message to stderr.
struct Fail(i32, String);

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Fail(exit::USAGE, msg.into())
    }

    fn io(msg: impl Into<String>) -> Self {
        Fail(exit::IO, msg.into())
    }
}

impl From<RepoError> for Fail {
    fn from(e: RepoError) -> Self {
        Fail::io(e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::io(format!("IO: {e}"))
    }
}

struct Io<'a> {
    stdin: &'a mut dyn BufRead,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Entry point of the binary: real process arguments and standard streams.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    run_cli(argv, &mut stdin, &mut out, &mut err)
}

/// Runs one command with the given streams and returns the exit code.
pub fn run_cli<I, T>(argv: I, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = out.write_all(text.as_bytes());
                exit::OK
            } else {
                let _ = err.write_all(text.as_bytes());
                exit::USAGE
            };
        }
    };
    let mut io = Io { stdin, out, err };
    let code = match dispatch(cli, &mut io) {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(io.err, "pictoforge: {msg}");
            code
        }
    };
    let _ = io.out.flush();
    code
}

fn limits(cli: &Cli) -> Limits {
    let mut l = Limits::default();
    if let Some(s) = cli.max_steps {
        l.max_steps = s;
    }
    if let Some(d) = cli.max_depth {
        l.max_depth = d;
    }
    l
}

/// The configured repository, if any. Tools that only announce events work
/// without one.
fn optional_repo(cli: &Cli) -> Option<RepoStore> {
    cli.repo.as_ref().and_then(|p| RepoStore::open(p).ok())
}

fn require_repo_path(cli: &Cli) -> Result<PathBuf, Fail> {
    cli.repo.clone().ok_or_else(|| Fail::usage(format!("no repository given (use --repo or {REPO_ENV})")))
}

fn require_repo(cli: &Cli) -> Result<RepoStore, Fail> {
    Ok(RepoStore::open(require_repo_path(cli)?)?)
}

fn read_text(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::io(format!("IO: {}: {e}", path.display())))
}

fn load_model(path: &Path, io: &mut Io) -> Result<DesignModel, Fail> {
    let text = read_text(path)?;
    parse_source(&text, &source_name_of(path)).map_err(|errs| {
        for e in &errs {
            let _ = writeln!(io.err, "{e}");
        }
        Fail(exit::FINDINGS, format!("{} parse error(s)", errs.len()))
    })
}

fn warn_event(io: &mut Io, problem: Option<String>) {
    if let Some(p) = problem {
        let _ = writeln!(io.err, "pictoforge: warning: event not recorded: {p}");
    }
}

fn write_out(io: &mut Io, text: &str) -> Result<(), Fail> {
    io.out.write_all(text.as_bytes())?;
    Ok(())
}

fn dispatch(cli: Cli, io: &mut Io) -> Result<i32, Fail> {
    match &cli.cmd {
        Cmd::Parse { file } => {
            let m = load_model(file, io)?;
            write_out(io, &pretty_print(&m))?;
            Ok(exit::OK)
        }
        Cmd::Check { file } => {
            let m = load_model(file, io)?;
            let report = CheckReport::of(&m);
            for f in &report.findings {
                writeln!(io.out, "{f}")?;
            }
            warn_event(io, announce(optional_repo(&cli).as_ref(), check_event(&m, &report)));
            Ok(if report.errors > 0 { exit::FINDINGS } else { exit::OK })
        }
        Cmd::Gen { kind, file, name, out } => {
            let m = load_model(file, io)?;
            let generator = Generator::from(*kind);
            let text = generate(&m, generator, name.as_deref()).map_err(|e| {
                let code = match e {
                    GenError::SchemaNotFound(_) | GenError::TargetNotFound { .. } => exit::USAGE,
                    _ => exit::FINDINGS,
                };
                Fail(code, e.to_string())
            })?;
            let mut event = NewEvent::new(EventKind::ArtifactGenerated, m.source_name())
                .with("generator", generator.name())
                .with("bytes", text.len().to_string());
            if let Some(n) = name {
                event = event.with("name", n.as_str());
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    let path = dir.join(generator.file_name(model_stem(m.source_name())));
                    fs::write(&path, &text)?;
                    writeln!(io.out, "{}", path.display())?;
                    event = event.with("path", path.display().to_string());
                }
                None => write_out(io, &text)?,
            }
            warn_event(io, announce(optional_repo(&cli).as_ref(), event));
            Ok(exit::OK)
        }
        Cmd::Run { file, diagram, script } => {
            let m = load_model(file, io)?;
            let limits = limits(&cli);
            let session = match script {
                Some(path) => {
                    let lines: Vec<String> = read_text(path)?.lines().map(String::from).collect();
                    let mut s = Session::start_with_limits(&m, diagram, limits).map_err(proto_fail)?;
                    let mut consumed = 0;
                    for l in &lines {
                        if s.status() != Status::Running {
                            break;
                        }
                        s.input(l).map_err(proto_fail)?;
                        consumed += 1;
                    }
                    let run = ScriptRun {
                        transcript: s.transcript().to_vec(),
                        status: s.status(),
                        consumed,
                        unconsumed: lines[consumed..].to_vec(),
                    };
                    write_out(io, &run.render())?;
                    s
                }
                None => interactive(&m, diagram, limits, io)?,
            };
            warn_event(io, announce(optional_repo(&cli).as_ref(), session_end_event(&session)));
            Ok(exit::OK)
        }
        Cmd::Repo { cmd } => repo_cmd(&cli, cmd, io),
        Cmd::Events { cmd: EventsCmd::Tail { from, no_follow, dispatch } } => {
            let repo = require_repo(&cli)?;
            let mut dispatcher = if *dispatch {
                Some(Dispatcher::new(load_triggers(&repo.root().join(TRIGGERS_FILE)).map_err(|e| Fail::io(e.to_string()))?))
            } else {
                None
            };
            let mut tail = repo.events().tail(*from);
            loop {
                let next = if *no_follow { tail.try_next() } else { tail.next().transpose() };
                let ev = match next.map_err(|e| Fail::io(e.to_string()))? {
                    Some(ev) => ev,
                    None => break,
                };
                writeln!(io.out, "{}", ev.to_line())?;
                io.out.flush()?;
                if let Some(d) = dispatcher.as_mut() {
                    for r in d.dispatch(&ev) {
                        match &r.outcome {
                            SpawnOutcome::Ok { .. } => writeln!(io.err, "event {}: rule {} ok", ev.seq, r.rule + 1)?,
                            SpawnOutcome::SpawnFail { reason, .. } => {
                                writeln!(io.err, "event {}: rule {} SPAWN_FAIL: {reason}", ev.seq, r.rule + 1)?
                            }
                        }
                    }
                }
            }
            Ok(exit::OK)
        }
        Cmd::Serve { port } => {
            let mut config = WorkbenchConfig::new(require_repo_path(&cli)?);
            config.listen_port = *port;
            config.limits = limits(&cli);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let server = super::serve(config, |addr| {
                    let _ = writeln!(io.err, "serving on http://{addr}");
                })
                .await
                .map_err(|e| Fail::io(e.to_string()))?;
                tokio::select! {
                    r = server => r.map_err(|e| Fail::io(e.to_string())),
                    _ = tokio::signal::ctrl_c() => Ok(()),
                }
            })?;
            Ok(exit::OK)
        }
    }
}

fn proto_fail(e: PrototypeError) -> Fail {
    match e {
        PrototypeError::NoSuchDiagram(_) => Fail::usage(e.to_string()),
        _ => Fail(exit::FINDINGS, e.to_string()),
    }
}

/// Generator output for the command line. A missing NAME is accepted when
/// the model has exactly one candidate.
pub(super) fn generate(m: &DesignModel, g: Generator, name: Option<&str>) -> Result<String, GenError> {
    match g {
        Generator::Dict => Ok(render_dictionary(&gen_dictionary(m))),
        Generator::Doc => Ok(gen_doc(m)),
        Generator::Sql => {
            let name = match (name, m.schemas()) {
                (Some(n), _) => n.to_string(),
                (None, [only]) => only.name.clone(),
                (None, _) => return Err(GenError::SchemaNotFound(String::new())),
            };
            gen_sql(m, &name)
        }
        Generator::Skeleton => {
            let name = match name {
                Some(n) => n.to_string(),
                None => match (m.charts(), m.diagrams()) {
                    ([only], []) => only.name.clone(),
                    ([], [only]) => only.name.clone(),
                    _ => return Err(GenError::TargetNotFound { kind: "chart or diagram", name: String::new() }),
                },
            };
            let kind = if m.chart(&name).is_some() { TargetKind::Chart } else { TargetKind::Diagram };
            gen_skeleton(m, kind, &name)
        }
    }
}

/// Prompted dialogue on the standard streams. Outputs and control events
/// are printed as in a scripted run; typed input is not echoed back.
fn interactive(m: &DesignModel, diagram: &str, limits: Limits, io: &mut Io) -> Result<Session, Fail> {
    let mut s = Session::start_with_limits(m, diagram, limits).map_err(proto_fail)?;
    let mut shown = 0;
    loop {
        let fresh: Vec<_> = s.transcript()[shown..].iter().filter(|e| e.kind != TEvent::Input || e.detail.is_some()).cloned().collect();
        for e in &fresh {
            if e.kind == TEvent::Input {
                writeln!(io.out, "! {}", e.detail.as_deref().unwrap_or(""))?;
            } else {
                write_out(io, &render_events(std::slice::from_ref(e)))?;
            }
        }
        shown = s.transcript().len();
        if s.status() != Status::Running {
            break;
        }
        write!(io.out, "> ")?;
        io.out.flush()?;
        let mut line = String::new();
        if io.stdin.read_line(&mut line)? == 0 {
            writeln!(io.out)?;
            writeln!(io.out, "! RUNNING")?;
            break;
        }
        s.input(&line).map_err(proto_fail)?;
    }
    Ok(s)
}

fn repo_cmd(cli: &Cli, cmd: &RepoCmd, io: &mut Io) -> Result<i32, Fail> {
    match cmd {
        RepoCmd::Init => {
            let store = RepoStore::init(require_repo_path(cli)?)?;
            writeln!(io.out, "initialized {} at revision 0", store.root().display())?;
        }
        RepoCmd::Commit { file, author, message } => {
            let repo = require_repo(cli)?;
            let m = load_model(file, io)?;
            let rev = repo.commit(&m, author, message)?;
            writeln!(io.out, "revision {} {}", rev.number, rev.model_digest)?;
        }
        RepoCmd::Checkout { revision, out } => {
            let m = require_repo(cli)?.checkout(*revision)?;
            match out {
                Some(p) => fs::write(p, pretty_print(&m))?,
                None => write_out(io, &pretty_print(&m))?,
            }
        }
        RepoCmd::Lock { holder } => {
            let l = require_repo(cli)?.lock(holder)?;
            writeln!(io.out, "locked by {} at {}", l.holder, l.acquired_at)?;
        }
        RepoCmd::Unlock { holder } => {
            require_repo(cli)?.unlock(holder)?;
            writeln!(io.out, "unlocked")?;
        }
        RepoCmd::Log => {
            for r in require_repo(cli)?.revisions()? {
                writeln!(io.out, "{}\t{}\t{}\t{}\t{}", r.number, r.author, r.timestamp, r.model_digest, r.message)?;
            }
        }
        RepoCmd::Export { revision, out } => {
            let repo = require_repo(cli)?;
            let rev = match revision {
                Some(r) => *r,
                None => repo.current_revision()?,
            };
            let doc = repo.export(rev)?;
            match out {
                Some(p) => fs::write(p, doc)?,
                None => write_out(io, &doc)?,
            }
        }
        RepoCmd::Import { file, author } => {
            let repo = require_repo(cli)?;
            let rev = repo.import(&read_text(file)?, author)?;
            writeln!(io.out, "revision {} {}", rev.number, rev.model_digest)?;
        }
    }
    Ok(exit::OK)
}
