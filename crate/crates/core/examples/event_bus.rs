//! Follow the event log while another thread commits, and run a trigger
//! command for each commit.

use std::time::Duration;

use pictoforge::bus::{Dispatcher, EventKind, NewEvent, TriggerRule};
use pictoforge::parse;
use pictoforge::repository::RepoStore;

fn main() {
    let dir = std::env::temp_dir().join(format!("pictoforge-bus-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let repo = RepoStore::init(&dir).unwrap();
    let mut tail = repo.events().tail(1);

    let writer = {
        let repo = repo.clone();
        std::thread::spawn(move || {
            let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/kiosk.use");
            let model = parse(&std::fs::read_to_string(path).unwrap(), "kiosk.use").unwrap();
            repo.lock("ann").unwrap();
            repo.commit(&model, "ann", "first cut").unwrap();
            repo.events().emit(NewEvent::new(EventKind::CheckCompleted, "kiosk.use").with("errors", "0")).unwrap();
        })
    };

    // Triggered commands get the payload on stdin; their own output is discarded.
    let notes = dir.join("notify.log");
    let command = format!("{{ echo {{subject}} r{{revision}}; cat; }} >> '{}'", notes.display());
    let rule = TriggerRule::new(EventKind::DiagramCommitted, command).unwrap();
    let mut dispatcher = Dispatcher::new(vec![rule]);
    for _ in 0..2 {
        let event = tail.next_timeout(Duration::from_secs(5)).unwrap().expect("event within 5s");
        println!("{}", event.to_line());
        for report in dispatcher.dispatch(&event) {
            println!("  rule {} -> {:?}", report.rule, report.outcome);
        }
    }
    writer.join().unwrap();
    print!("notify.log:\n{}", std::fs::read_to_string(&notes).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}
