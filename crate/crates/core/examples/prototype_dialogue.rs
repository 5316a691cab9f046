//! Drive a dialogue prototype step by step, then replay a whole script.

use pictoforge::parse;
use pictoforge::prototyper::{render_events, run_script_with_limits, Limits, Session, Status};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/login.use");
    let model = parse(&std::fs::read_to_string(path).unwrap(), "login.use").unwrap();

    let mut session = Session::start(&model, "login").expect("model has no errors");
    for line in ["login", "alice", "logout", "yes"] {
        let before = session.transcript().len();
        session.input(line).unwrap();
        print!("{}", render_events(&session.transcript()[before..]));
        println!("   [{} at {}.{}, {:?}]", session.status(), session.diagram(), session.current(), session.bindings());
    }
    assert_eq!(session.status(), Status::Finished);

    let loops = parse(
        &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/loop.use")).unwrap(),
        "loop.use",
    )
    .unwrap();
    let script = vec!["again".to_string(); 20];
    let run = run_script_with_limits(&loops, "spin", &script, Limits { max_steps: 5, ..Limits::default() }).unwrap();
    println!();
    print!("{}", run.render());
}
