//! Parse a model file and print its canonical text, or the parse errors.
//!
//! cargo run --example parse_and_print -- fixtures/login.use

use pictoforge::{parse, pretty_print};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/login.use".into());
    let text = std::fs::read_to_string(&path).expect("readable model file");
    match parse(&text, &path) {
        Ok(model) => {
            print!("{}", pretty_print(&model));
            eprintln!(
                "{} diagrams, {} schemas, {} charts, {} actions",
                model.diagrams().len(),
                model.schemas().len(),
                model.charts().len(),
                model.actions().len()
            );
        }
        Err(errors) => {
            for e in errors {
                eprintln!("{path}:{e}");
            }
            std::process::exit(1);
        }
    }
}
