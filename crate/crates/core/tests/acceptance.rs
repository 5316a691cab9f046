//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines print in order.

mod common;

use std::cell::Cell;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pictoforge::bus::{Dispatcher, EventKind, TriggerRule};
use pictoforge::checker::{check_all, check_sc, check_std, CheckCode};
use pictoforge::generators::ddl::parse_ddl;
use pictoforge::generators::{gen_dictionary, gen_sql, GenError};
use pictoforge::model::{model_equal, Cardinality};
use pictoforge::prototyper::{run_script_with_limits, session_run_script, Limits, Session, Status};
use pictoforge::repository::{parse_document, RepoStore};
use pictoforge::workbench::{router, AppState, CheckReport};
use pictoforge::{parse, pretty_print, Severity};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Wall-clock budget shared by the criteria of one group.
struct Budget {
    limit: Duration,
    spent: Cell<Duration>,
}

impl Budget {
    fn new(secs: u64) -> Self {
        Self { limit: Duration::from_secs(secs), spent: Cell::new(Duration::ZERO) }
    }

    fn time(&self, f: impl FnOnce() -> Outcome) -> Outcome {
        let start = Instant::now();
        let detail = f()?;
        let took = start.elapsed();
        self.spent.set(self.spent.get() + took);
        let spent = self.spent.get();
        ensure!(spent <= self.limit, "{detail}; group time {spent:.2?} over {:?}", self.limit);
        Ok(format!("{detail} in {took:.2?} (group {spent:.2?} of {:?})", self.limit))
    }
}

fn js<T: serde::Serialize + ?Sized>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn parser_round_trip() -> Outcome {
    let mut models: Vec<_> = all_fixtures().into_iter().map(|(_, m)| m).collect();
    let fixtures = models.len();
    models.extend((0..60).map(|s| random_model(&mut rng(10_000 + s))));
    for m in &models {
        let text = pretty_print(m);
        let back = parse(&text, m.source_name()).map_err(|e| format!("{}: {e:?}", m.source_name()))?;
        ensure!(model_equal(m, &back), "{} differs after round trip", m.source_name());
        ensure!(pretty_print(&back) == text, "{} printing not idempotent", m.source_name());
    }
    Ok(format!("{fixtures} fixtures + 60 random models"))
}

fn checker_reachability() -> Outcome {
    for seed in 0..100 {
        let m = random_std(&mut rng(20_000 + seed));
        let d = m.diagram("main").unwrap();
        ensure!(d.nodes.len() <= 15, "seed {seed} has {} nodes", d.nodes.len());
        let reached = bfs_reachable(d);
        let expected: BTreeSet<String> =
            d.nodes.iter().filter(|n| !reached.contains(&n.name)).map(|n| format!("main.{}", n.name)).collect();
        let got: BTreeSet<String> = check_std(&m)
            .into_iter()
            .filter(|f| f.code == CheckCode::C002 && f.subject.name.starts_with("main."))
            .map(|f| f.subject.name)
            .collect();
        ensure!(got == expected, "seed {seed}: checker {got:?} oracle {expected:?}");
    }
    Ok("100 diagrams agree with BFS".into())
}

fn checker_charts() -> Outcome {
    for seed in 0..100 {
        let m = random_chart(&mut rng(30_000 + seed));
        let c = &m.charts()[0];
        let f = check_sc(&m);
        let of = |code| f.iter().filter(|x| x.code == code).map(|x| x.subject.name.clone()).collect::<BTreeSet<_>>();
        let q = |s: BTreeSet<String>| s.into_iter().map(|n| format!("c.{n}")).collect::<BTreeSet<_>>();
        ensure!(of(CheckCode::C202) == q(path_cyclic_modules(c)), "seed {seed}: cycle sets differ");
        ensure!(of(CheckCode::C203) == q(path_unreachable_modules(c)), "seed {seed}: unreachable sets differ");
    }
    Ok("100 charts agree with path enumeration".into())
}

fn golden_transcripts() -> Outcome {
    let mut call_return = false;
    let mut guarded = false;
    for (model, root, script, golden) in GOLDEN {
        let m = fixture(model);
        let inputs: Vec<String> = fixture_text(script).lines().map(str::to_string).collect();
        let out = session_run_script(&m, root, &inputs).map_err(|e| e.to_string())?.render();
        ensure!(out == fixture_text(golden), "{model}: transcript differs from {golden}");
        call_return |= out.contains("! CALL ") && out.contains("! RETURN ");
        guarded |= m.diagrams().iter().flat_map(|d| &d.arcs).any(|a| a.guard.is_some());
    }
    ensure!(call_return && guarded, "goldens lack call/return ({call_return}) or guard ({guarded})");
    Ok(format!("{} transcripts byte-identical", GOLDEN.len()))
}

fn loop_limit() -> Outcome {
    let m = fixture("loop.use");
    for max in [10u64, 250, pictoforge::prototyper::DEFAULT_MAX_STEPS] {
        let limits = Limits { max_steps: max, ..Limits::default() };
        let mut s = Session::start_with_limits(&m, "spin", limits).map_err(|e| e.to_string())?;
        while s.status() == Status::Running {
            s.input("x").map_err(|e| e.to_string())?;
        }
        ensure!(s.status() == Status::LimitExceeded, "max {max}: ended {}", s.status());
        ensure!(s.step_count() == max, "max {max}: step_count {}", s.step_count());
    }
    let run = run_script_with_limits(&m, "spin", &vec!["x".into(); 30], Limits { max_steps: 20, ..Limits::default() })
        .map_err(|e| e.to_string())?;
    ensure!(run.status == Status::LimitExceeded, "scripted run ended {}", run.status);
    Ok("LIMIT_EXCEEDED with step_count == max_steps for 10, 250, 10000".into())
}

fn fuzz_no_undefined() -> Outcome {
    let (mut pairs, mut seed, mut inputs) = (0, 0u64, 0usize);
    while pairs < 200 {
        seed += 1;
        let mut r = rng(40_000 + seed);
        let (m, vocab) = random_checkable_dialogue(&mut r);
        if check_all(&m).iter().any(|f| f.severity == Severity::Error) {
            continue;
        }
        pairs += 1;
        let script: Vec<String> = (0..r.gen_range(1..80)).map(|_| vocab.choose(&mut r).unwrap().clone()).collect();
        let limits = Limits { max_steps: 60, max_depth: 8 };
        match run_script_with_limits(&m, &m.diagrams()[0].name, &script, limits) {
            Ok(run) => inputs += run.consumed,
            Err(e) => return Err(format!("seed {seed}: {}", e.code())),
        }
    }
    Ok(format!("200 models, {inputs} inputs, no UNDEFINED_* faults"))
}

fn temp_store() -> Result<(tempfile::TempDir, RepoStore), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let repo = RepoStore::init(dir.path().join("repo")).map_err(|e| e.to_string())?;
    Ok((dir, repo))
}

fn repo_commit_checkout() -> Outcome {
    let (_d, repo) = temp_store()?;
    repo.lock("acc").map_err(|e| e.to_string())?;
    let fixtures = all_fixtures();
    let mut revs = Vec::new();
    for (name, m) in &fixtures {
        revs.push(repo.commit(m, "acc", name).map_err(|e| e.to_string())?.number);
    }
    for ((name, m), rev) in fixtures.iter().zip(revs) {
        ensure!(model_equal(m, &repo.checkout(rev).map_err(|e| e.to_string())?), "{name} differs at revision {rev}");
    }
    Ok(format!("{} fixtures", fixtures.len()))
}

fn repo_export_import() -> Outcome {
    let (_a, src) = temp_store()?;
    let (_b, dst) = temp_store()?;
    src.lock("a").map_err(|e| e.to_string())?;
    dst.lock("b").map_err(|e| e.to_string())?;
    let fixtures = all_fixtures();
    for (name, m) in &fixtures {
        let rev = src.commit(m, "a", "x").map_err(|e| e.to_string())?;
        let doc = src.export(rev.number).map_err(|e| e.to_string())?;
        let (_, parsed) = parse_document(&doc).map_err(|e| e.to_string())?;
        ensure!(model_equal(m, &parsed), "{name}: document model differs");
        let imported = dst.import(&doc, "b").map_err(|e| e.to_string())?;
        ensure!(model_equal(m, &dst.checkout(imported.number).map_err(|e| e.to_string())?), "{name}: import differs");
    }
    Ok(format!("{} fixtures", fixtures.len()))
}

fn repo_lock_race() -> Outcome {
    let (_d, repo) = temp_store()?;
    let bin = env!("CARGO_BIN_EXE_pictoforge");
    for trial in 0..100 {
        let children: Vec<_> = ["p1", "p2"]
            .iter()
            .map(|h| {
                Command::new(bin)
                    .arg("--repo")
                    .arg(repo.root())
                    .args(["repo", "lock", "--holder", h])
                    .stdout(Stdio::null())
                    .stderr(Stdio::null())
                    .spawn()
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        let mut winners = 0;
        for mut c in children {
            winners += c.wait().map_err(|e| e.to_string())?.success() as usize;
        }
        ensure!(winners == 1, "trial {trial}: {winners} winners");
        let holder = repo.lock_status().map_err(|e| e.to_string())?.ok_or("no lock file")?.holder;
        repo.unlock(&holder).map_err(|e| e.to_string())?;
    }
    Ok("100 trials, one winner each".into())
}

fn sql_reparses() -> Outcome {
    let mut generated = 0;
    for seed in 0..100 {
        let m = random_er_schema(&mut rng(50_000 + seed));
        match gen_sql(&m, "s") {
            Ok(sql) => {
                let script = parse_ddl(&sql).map_err(|e| format!("seed {seed}: {e:?}"))?;
                let s = &m.schemas()[0];
                let n_n = s.relations.iter().filter(|r| (r.left.card, r.right.card) == (Cardinality::Many, Cardinality::Many)).count();
                ensure!(script.tables.len() == s.entities.len() + n_n, "seed {seed}: table count");
                generated += 1;
            }
            Err(GenError::NameClash(_)) => {}
            Err(e) => return Err(format!("seed {seed}: {e}")),
        }
    }
    ensure!(generated >= 90, "only {generated} schemas generated");
    Ok(format!("{generated}/100 generated and reparsed"))
}

fn sql_shapes() -> Outcome {
    let sql = gen_sql(&fixture("library.use"), "library").map_err(|e| e.to_string())?;
    let script = parse_ddl(&sql).map_err(|e| format!("{e:?}"))?;
    let refs = |t: &str, c: &str| script.table(t).and_then(|t| t.column(c)).and_then(|c| c.references.clone());
    ensure!(refs("book", "branch_id") == Some(("branch".into(), "id".into())), "1-N foreign key missing");
    ensure!(refs("card", "member_id") == Some(("member".into(), "id".into())), "1-1 foreign key missing");
    let j = script.table("borrows").ok_or("N-N junction table missing")?;
    ensure!(j.primary_key == ["member_id", "book_isbn"], "junction key {:?}", j.primary_key);
    Ok("1-N, 1-1 and N-N shapes".into())
}

fn dictionary_xrefs() -> Outcome {
    let mut models: Vec<_> = all_fixtures().into_iter().map(|(_, m)| m).collect();
    models.extend((0..100).map(|s| random_model(&mut rng(60_000 + s))));
    for m in &models {
        let mut lib: std::collections::BTreeMap<(String, String), BTreeSet<String>> = Default::default();
        for e in gen_dictionary(m) {
            lib.entry((e.name, e.kind.as_str().to_string())).or_default().extend(e.referenced_by.iter().map(ToString::to_string));
        }
        lib.retain(|_, v| !v.is_empty());
        let mut oracle = scan_references(m);
        oracle.retain(|_, v| !v.is_empty());
        ensure!(lib == oracle, "{}: cross references differ", m.source_name());
    }
    Ok(format!("{} models", models.len()))
}

fn bus_commit_event() -> Outcome {
    let (_d, repo) = temp_store()?;
    repo.lock("acc").map_err(|e| e.to_string())?;
    let m = fixture("gate.use");
    repo.commit(&m, "acc", "one").map_err(|e| e.to_string())?;
    let rev = repo.commit(&m, "acc", "two").map_err(|e| e.to_string())?;
    let last = repo.events().read_from(1).map_err(|e| e.to_string())?.pop().ok_or("no events")?;
    ensure!(last.kind == EventKind::DiagramCommitted, "kind {}", last.kind);
    ensure!(last.subject == "gate.use" && last.revision == Some(rev.number), "subject {} revision {:?}", last.subject, last.revision);
    Ok(format!("DIAGRAM_COMMITTED gate.use revision {}", rev.number))
}

fn bus_trigger() -> Outcome {
    let (d, repo) = temp_store()?;
    repo.lock("acc").map_err(|e| e.to_string())?;
    repo.commit(&fixture("kiosk.use"), "acc", "with | odd ; chars = here").map_err(|e| e.to_string())?;
    let event = repo.events().read_from(1).map_err(|e| e.to_string())?.remove(0);
    let out = d.path().join("payload");
    let rule = TriggerRule::new(EventKind::DiagramCommitted, format!("cat >> '{}'", out.display()))?;
    let mut dispatcher = Dispatcher::new(vec![rule]);
    let first = dispatcher.dispatch(&event);
    let second = dispatcher.dispatch(&event);
    ensure!(first.len() == 1 && !first[0].failed() && second.is_empty(), "spawn reports {first:?} {second:?}");
    let expected: String = event.payload.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let got = std::fs::read(&out).map_err(|e| e.to_string())?;
    ensure!(got == expected.as_bytes(), "payload differs: {:?}", String::from_utf8_lossy(&got));
    Ok(format!("one spawn, {} payload bytes exact", got.len()))
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn service_equivalence() -> Outcome {
    let (_d, repo) = temp_store()?;
    repo.lock("acc").map_err(|e| e.to_string())?;
    repo.commit(&fixture("login.use"), "acc", "").map_err(|e| e.to_string())?;
    let state = AppState::new(repo.clone(), Limits::default());

    let (_, model) = call(&state, "GET", "/api/model", None).await;
    ensure!(model == repo.export_value(1).map_err(|e| e.to_string())?, "GET /api/model differs from export");

    for name in ["kiosk.use", "broken.use", "library.use"] {
        let (_, got) = call(&state, "POST", "/api/check", Some(json!({"source": fixture_text(name), "name": name}))).await;
        ensure!(got == js(&CheckReport::of(&fixture(name))), "POST /api/check differs for {name}");
    }

    let (st, created) = call(&state, "POST", "/api/sessions", Some(json!({"root": "login"}))).await;
    ensure!(st == StatusCode::CREATED, "POST /api/sessions: {st}");
    let id = created["id"].as_str().ok_or("no session id")?.to_string();
    let mut direct = Session::start(&fixture("login.use"), "login").map_err(|e| e.to_string())?;
    ensure!(created["transcript"] == js(direct.transcript()), "initial transcript differs");
    for line in fixture_text("login.script").lines() {
        let before = direct.transcript().len();
        direct.input(line).map_err(|e| e.to_string())?;
        let (_, res) = call(&state, "POST", &format!("/api/sessions/{id}/input"), Some(json!({"line": line}))).await;
        ensure!(res["events"] == js(&direct.transcript()[before..]), "input `{line}` events differ");
    }
    let (_, view) = call(&state, "GET", &format!("/api/sessions/{id}"), None).await;
    ensure!(view["transcript"] == js(direct.transcript()), "GET session transcript differs");
    ensure!(view["status"] == direct.status().as_str(), "GET session status differs");

    let (_, sse) = call(&state, "GET", "/api/events?from=1&follow=false", None).await;
    let text = sse.as_str().ok_or("SSE body is not text")?;
    let data: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("data: ")).collect();
    let lines: Vec<String> = repo.events().read_from(1).map_err(|e| e.to_string())?.iter().map(|e| e.to_line()).collect();
    ensure!(data == lines, "GET /api/events differs from the log");
    Ok(format!("6 endpoints, {} events streamed", lines.len()))
}

fn run(label: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS  {label:<34} {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  {label:<34} {detail}");
            false
        }
    }
}

fn main() {
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("runtime");
    let parser = Budget::new(5);
    let checker = Budget::new(10);
    let repository = Budget::new(30);
    let results = [
        run("parser.round_trip", || parser.time(parser_round_trip)),
        run("checker.unreachable_nodes", || checker.time(checker_reachability)),
        run("checker.chart_cycles_and_roots", || checker.time(checker_charts)),
        run("prototyper.golden_transcripts", golden_transcripts),
        run("prototyper.loop_limit", loop_limit),
        run("prototyper.fuzz_no_undefined", fuzz_no_undefined),
        run("repository.commit_checkout", || repository.time(repo_commit_checkout)),
        run("repository.export_import", || repository.time(repo_export_import)),
        run("repository.lock_race", || repository.time(repo_lock_race)),
        run("generators.sql_reparses", sql_reparses),
        run("generators.sql_shapes", sql_shapes),
        run("generators.dictionary_xrefs", dictionary_xrefs),
        run("bus.commit_event", bus_commit_event),
        run("bus.trigger_payload", bus_trigger),
        run("service.headless_equivalence", || runtime.block_on(service_equivalence())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
