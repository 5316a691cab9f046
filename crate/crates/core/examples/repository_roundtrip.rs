//! Commit models to a store, read history back, and move a revision to a
//! second store through the JSON interchange document.

use pictoforge::model::model_equal;
use pictoforge::parse;
use pictoforge::repository::{record_counts, RepoStore};

fn main() {
    let dir = std::env::temp_dir().join(format!("pictoforge-example-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let repo = RepoStore::init(dir.join("a")).unwrap();

    repo.lock("ann").unwrap();
    for name in ["gate.use", "library.use"] {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        let model = parse(&std::fs::read_to_string(path).unwrap(), name).unwrap();
        let rev = repo.commit(&model, "ann", &format!("add {name}")).unwrap();
        println!("revision {} by {}: {}", rev.number, rev.author, rev.message);
    }
    if let Err(e) = repo.lock("bob") {
        println!("bob: {}", e.code());
    }

    for rev in repo.revisions().unwrap() {
        let (_, snap) = repo.snapshot(rev.number).unwrap();
        println!("{} {} {:?}", rev.number, rev.source, record_counts(&snap));
    }

    let doc = repo.export(2).unwrap();
    let other = RepoStore::init(dir.join("b")).unwrap();
    other.lock("bob").unwrap();
    let imported = other.import(&doc, "bob").unwrap();
    let same = model_equal(&repo.checkout(2).unwrap(), &other.checkout(imported.number).unwrap());
    println!("imported as revision {} ({}), equal: {same}", imported.number, imported.message);

    repo.unlock("ann").unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
}
