//! Code skeletons for a structure chart and a dialogue diagram, plus the
//! Markdown design document.

use pictoforge::generators::{gen_doc, gen_skeleton, TargetKind};
use pictoforge::parse;

fn load(name: &str) -> pictoforge::DesignModel {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap(), name).unwrap()
}

fn main() {
    let library = load("library.use");
    print!("{}", gen_skeleton(&library, TargetKind::Chart, "lending").unwrap());
    println!();

    let gate = load("gate.use");
    print!("{}", gen_skeleton(&gate, TargetKind::Diagram, "gate").unwrap());
    println!();

    match gen_skeleton(&gate, TargetKind::Chart, "gate") {
        Err(e) => println!("/* {} */", e.code()),
        Ok(_) => unreachable!("gate is a diagram"),
    }

    println!();
    print!("{}", gen_doc(&gate));
}
