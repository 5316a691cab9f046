//! Control integration: an append-only event log shared by all tools, plus
//! trigger rules that launch external commands when matching events appear.
//!
//! Log format, one event per line:
//!
//! ```text
//! seq|kind|subject|revision|timestamp|k1=v1;k2=v2
//! ```
//!
//! `revision` is empty when absent. Inside fields, `\`, `|`, `;`, `=`, line
//! feed and carriage return are escaped as `\\`, `\|`, `\;`, `\=`, `\n`, `\r`.
//!
//! Trigger rules live in `triggers.conf`, one `KIND command template` per
//! line; blank lines and `#` comments are ignored. `{subject}` and
//! `{revision}` in the template are replaced by shell-quoted values, the
//! command runs under `sh -c`, and the event payload arrives on standard
//! input as `key=value` lines.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

pub const LOG_FILE: &str = "events.log";
pub const TRIGGERS_FILE: &str = "triggers.conf";

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum BusError {
    #[error("LOG_IO: {0}")]
    LogIo(String),
    #[error("BAD_TRIGGER: line {line}: {message}")]
    BadTrigger { line: usize, message: String },
}

impl BusError {
    pub fn code(&self) -> &'static str {
        match self {
            BusError::LogIo(_) => "LOG_IO",
            BusError::BadTrigger { .. } => "BAD_TRIGGER",
        }
    }
}

impl From<std::io::Error> for BusError {
    fn from(e: std::io::Error) -> Self {
        BusError::LogIo(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    DiagramCommitted,
    CheckCompleted,
    ArtifactGenerated,
    SessionEnded,
}

impl EventKind {
    pub const ALL: [EventKind; 4] =
        [EventKind::DiagramCommitted, EventKind::CheckCompleted, EventKind::ArtifactGenerated, EventKind::SessionEnded];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::DiagramCommitted => "DIAGRAM_COMMITTED",
            EventKind::CheckCompleted => "CHECK_COMPLETED",
            EventKind::ArtifactGenerated => "ARTIFACT_GENERATED",
            EventKind::SessionEnded => "SESSION_ENDED",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

/// An event before the log assigns its sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEvent {
    pub kind: EventKind,
    pub subject: String,
    pub revision: Option<u64>,
    pub timestamp: u64,
    pub payload: BTreeMap<String, String>,
}

impl NewEvent {
    pub fn new(kind: EventKind, subject: impl Into<String>) -> Self {
        Self { kind, subject: subject.into(), revision: None, timestamp: now_secs(), payload: BTreeMap::new() }
    }

    pub fn revision(mut self, r: u64) -> Self {
        self.revision = Some(r);
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.payload.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub subject: String,
    pub revision: Option<u64>,
    pub timestamp: u64,
    pub payload: BTreeMap<String, String>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            ';' => out.push_str("\\;"),
            '=' => out.push_str("\\="),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(e @ ('\\' | '|' | ';' | '=')) => out.push(e),
                other => return Err(format!("bad escape {other:?}")),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Splits on unescaped `sep` without unescaping.
fn split_raw(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == sep {
            parts.push(&s[start..i]);
            start = i + 1;
        }
    }
    parts.push(&s[start..]);
    parts
}

impl Event {
    pub fn to_line(&self) -> String {
        let payload: Vec<String> =
            self.payload.iter().map(|(k, v)| format!("{}={}", escape(k), escape(v))).collect();
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.seq,
            self.kind,
            escape(&self.subject),
            self.revision.map(|r| r.to_string()).unwrap_or_default(),
            self.timestamp,
            payload.join(";")
        )
    }

    pub fn parse_line(line: &str) -> Result<Event, BusError> {
        let bad = |why: &str| BusError::LogIo(format!("malformed event line ({why}): {line:?}"));
        let fields = split_raw(line, '|');
        if fields.len() != 6 {
            return Err(bad("field count"));
        }
        let unescape = |s: &str| unescape(s).map_err(|e| bad(&e));
        let seq = fields[0].parse::<u64>().map_err(|_| bad("seq"))?;
        let kind = fields[1].parse::<EventKind>().map_err(|e| bad(&e))?;
        let subject = unescape(fields[2])?;
        let revision = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse::<u64>().map_err(|_| bad("revision"))?)
        };
        let timestamp = fields[4].parse::<u64>().map_err(|_| bad("timestamp"))?;
        let mut payload = BTreeMap::new();
        if !fields[5].is_empty() {
            for pair in split_raw(fields[5], ';') {
                let kv = split_raw(pair, '=');
                if kv.len() != 2 {
                    return Err(bad("payload pair"));
                }
                payload.insert(unescape(kv[0])?, unescape(kv[1])?);
            }
        }
        Ok(Event { seq, kind, subject, revision, timestamp, payload })
    }
}

/// Handle on an event log file. Cheap to clone; holds no open file.
#[derive(Debug, Clone)]
pub struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    /// The log of a repository (or any tool directory).
    pub fn in_dir(dir: &Path) -> Self {
        Self::new(dir.join(LOG_FILE))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends an event, assigning the next sequence number under an
    /// exclusive file lock so concurrent emitters stay dense and unique.
    pub fn emit(&self, event: NewEvent) -> Result<Event, BusError> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&self.path)?;
        file.lock()?;
        let result = (|| {
            let mut text = String::new();
            file.seek(SeekFrom::Start(0))?;
            file.read_to_string(&mut text)?;
            let last = match text.lines().rev().find(|l| !l.is_empty()) {
                Some(l) => Event::parse_line(l)?.seq,
                None => 0,
            };
            let ev = Event {
                seq: last + 1,
                kind: event.kind,
                subject: event.subject,
                revision: event.revision,
                timestamp: event.timestamp,
                payload: event.payload,
            };
            let mut line = ev.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
            Ok::<_, BusError>(ev)
        })();
        let _ = file.unlock();
        result
    }

    /// Every event with `seq >= from_seq` currently in the log.
    pub fn read_from(&self, from_seq: u64) -> Result<Vec<Event>, BusError> {
        let mut tail = self.tail(from_seq);
        tail.poll()?;
        Ok(tail.pending.drain(..).collect())
    }

    /// Starts following the log from `from_seq`.
    pub fn tail(&self, from_seq: u64) -> Tail {
        Tail {
            path: self.path.clone(),
            from_seq: from_seq.max(1),
            offset: 0,
            partial: Vec::new(),
            pending: VecDeque::new(),
            closed: Arc::new(AtomicBool::new(false)),
            poll_interval: Duration::from_millis(20),
        }
    }
}

/// Closes a [`Tail`] from another thread.
#[derive(Debug, Clone)]
pub struct TailCloser(Arc<AtomicBool>);

impl TailCloser {
    pub fn close(&self) {
        self.0.store(true, Ordering::SeqCst);
    }
}

/// Follower over an event log. Iterating yields stored events in order,
/// then blocks for new ones until closed.
#[derive(Debug)]
pub struct Tail {
    path: PathBuf,
    from_seq: u64,
    offset: u64,
    partial: Vec<u8>,
    pending: VecDeque<Event>,
    closed: Arc<AtomicBool>,
    poll_interval: Duration,
}

impl Tail {
    pub fn closer(&self) -> TailCloser {
        TailCloser(self.closed.clone())
    }

    /// Reads whatever complete lines were appended since the last poll.
    /// Returns how many new events were queued.
    pub fn poll(&mut self) -> Result<usize, BusError> {
        let mut file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e.into()),
        };
        file.seek(SeekFrom::Start(self.offset))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        self.offset += buf.len() as u64;
        self.partial.extend_from_slice(&buf);
        let mut added = 0;
        while let Some(nl) = self.partial.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.partial.drain(..=nl).collect();
            let line = std::str::from_utf8(&line[..line.len() - 1])
                .map_err(|_| BusError::LogIo("event log is not UTF-8".into()))?;
            if line.is_empty() {
                continue;
            }
            let ev = Event::parse_line(line)?;
            if ev.seq >= self.from_seq {
                self.from_seq = ev.seq + 1;
                self.pending.push_back(ev);
                added += 1;
            }
        }
        Ok(added)
    }

    /// Waits up to `timeout` for the next event.
    pub fn next_timeout(&mut self, timeout: Duration) -> Result<Option<Event>, BusError> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(ev) = self.pending.pop_front() {
                return Ok(Some(ev));
            }
            if self.closed.load(Ordering::SeqCst) {
                return Ok(None);
            }
            if self.poll()? == 0 {
                let now = Instant::now();
                if now >= deadline {
                    return Ok(None);
                }
                std::thread::sleep(self.poll_interval.min(deadline - now));
            }
        }
    }

    /// Non-blocking: the next event if one is already available.
    pub fn try_next(&mut self) -> Result<Option<Event>, BusError> {
        if self.pending.is_empty() {
            self.poll()?;
        }
        Ok(self.pending.pop_front())
    }
}

impl Iterator for Tail {
    type Item = Result<Event, BusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.next_timeout(Duration::from_secs(3600)) {
                Ok(Some(ev)) => return Some(Ok(ev)),
                Ok(None) if self.closed.load(Ordering::SeqCst) => return None,
                Ok(None) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerRule {
    pub kind: EventKind,
    pub command: String,
}

impl TriggerRule {
    pub fn new(kind: EventKind, command: impl Into<String>) -> Result<Self, String> {
        let command = command.into();
        if command.trim().is_empty() {
            return Err("command template is empty".into());
        }
        Ok(Self { kind, command })
    }

    /// The command with `{subject}` and `{revision}` substituted.
    pub fn render(&self, event: &Event) -> String {
        let revision = event.revision.map(|r| r.to_string()).unwrap_or_default();
        self.command
            .replace("{subject}", &shell_quote(&event.subject))
            .replace("{revision}", &shell_quote(&revision))
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

pub fn parse_triggers(text: &str) -> Result<Vec<TriggerRule>, BusError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, command) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let bad = |message: String| BusError::BadTrigger { line: i + 1, message };
        let kind = kind.parse::<EventKind>().map_err(bad)?;
        rules.push(TriggerRule::new(kind, command.trim()).map_err(bad)?);
    }
    Ok(rules)
}

/// Reads `triggers.conf`; a missing file means no rules.
pub fn load_triggers(path: &Path) -> Result<Vec<TriggerRule>, BusError> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_triggers(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpawnOutcome {
    Ok { exit_code: i32 },
    /// The command could not be started or exited unsuccessfully.
    SpawnFail { reason: String, exit_code: Option<i32> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpawnReport {
    pub rule: usize,
    pub command: String,
    pub outcome: SpawnOutcome,
}

impl SpawnReport {
    pub fn failed(&self) -> bool {
        matches!(self.outcome, SpawnOutcome::SpawnFail { .. })
    }
}

/// `key=value` lines fed to triggered commands.
pub fn payload_text(event: &Event) -> String {
    event.payload.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn spawn(rule: usize, command: String, stdin_text: &str) -> SpawnReport {
    let child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => {
            return SpawnReport {
                rule,
                command,
                outcome: SpawnOutcome::SpawnFail { reason: e.to_string(), exit_code: None },
            }
        }
    };
    if let Some(mut stdin) = child.stdin.take() {
        // A command that ignores its input may close the pipe early.
        let _ = stdin.write_all(stdin_text.as_bytes());
    }
    let outcome = match child.wait() {
        Ok(st) if st.success() => SpawnOutcome::Ok { exit_code: 0 },
        Ok(st) => SpawnOutcome::SpawnFail {
            reason: format!("command exited with {st}"),
            exit_code: st.code(),
        },
        Err(e) => SpawnOutcome::SpawnFail { reason: e.to_string(), exit_code: None },
    };
    SpawnReport { rule, command, outcome }
}

/// Runs every rule matching the event's kind once, in rule order. A failing
/// rule does not stop the others.
pub fn bus_dispatch(rules: &[TriggerRule], event: &Event) -> Vec<SpawnReport> {
    let payload = payload_text(event);
    rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == event.kind)
        .map(|(i, r)| spawn(i, r.render(event), &payload))
        .collect()
}

/// Dispatches with exactly-once semantics per (event seq, rule).
#[derive(Debug, Default)]
pub struct Dispatcher {
    rules: Vec<TriggerRule>,
    done: HashSet<(u64, usize)>,
}

impl Dispatcher {
    pub fn new(rules: Vec<TriggerRule>) -> Self {
        Self { rules, done: HashSet::new() }
    }

    pub fn rules(&self) -> &[TriggerRule] {
        &self.rules
    }

    pub fn dispatch(&mut self, event: &Event) -> Vec<SpawnReport> {
        let payload = payload_text(event);
        let mut out = Vec::new();
        for (i, r) in self.rules.iter().enumerate() {
            if r.kind == event.kind && self.done.insert((event.seq, i)) {
                out.push(spawn(i, r.render(event), &payload));
            }
        }
        out
    }
}
