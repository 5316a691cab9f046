//! Generate SQL DDL and the data dictionary for the library schema.

use pictoforge::generators::ddl::parse_ddl;
use pictoforge::generators::{gen_dictionary, gen_sql, render_dictionary};
use pictoforge::parse;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/library.use");
    let model = parse(&std::fs::read_to_string(path).unwrap(), "library.use").unwrap();

    let sql = gen_sql(&model, "library").expect("schema is clean");
    print!("{sql}");
    let script = parse_ddl(&sql).expect("output stays inside the DDL subset");
    for t in &script.tables {
        let fks: Vec<String> = t
            .foreign_keys()
            .map(|c| {
                let (table, col) = c.references.as_ref().unwrap();
                format!("{} -> {table}.{col}", c.name)
            })
            .collect();
        println!("-- {}: key ({}) {}", t.name, t.primary_key.join(", "), fks.join(", "));
    }

    println!();
    print!("{}", render_dictionary(&gen_dictionary(&model)));
}
