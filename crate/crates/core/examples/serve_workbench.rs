//! Start the HTTP workbench on a free port, make a few requests over a plain
//! socket, then shut down.
//!
//! Pass `--wait` to keep serving until Ctrl-C.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use pictoforge::parse;
use pictoforge::repository::RepoStore;
use pictoforge::workbench::{serve, WorkbenchConfig};

fn request(addr: SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or(out)
}

#[tokio::main]
async fn main() {
    let dir = std::env::temp_dir().join(format!("pictoforge-serve-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let repo = RepoStore::init(&dir).unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/gate.use");
    repo.lock("ann").unwrap();
    repo.commit(&parse(&std::fs::read_to_string(path).unwrap(), "gate.use").unwrap(), "ann", "").unwrap();

    let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut config = WorkbenchConfig::new(&dir);
    config.listen_port = probe.local_addr().unwrap().port().max(1024);
    drop(probe);

    let (tx, rx) = std::sync::mpsc::channel();
    let server = serve(config, move |a| tx.send(a).unwrap()).await.expect("port is free");
    let addr = rx.recv().unwrap();
    println!("listening on http://{addr}");
    let handle = tokio::spawn(server);

    let wait = std::env::args().any(|a| a == "--wait");
    let client = tokio::task::spawn_blocking(move || {
        println!("{}", request(addr, "POST", "/api/check", "{}"));
        let created = request(addr, "POST", "/api/sessions", r#"{"root":"gate"}"#);
        println!("{created}");
        println!("{}", request(addr, "POST", "/api/sessions/s1/input", r#"{"line":"admin"}"#));
    });
    client.await.unwrap();

    if wait {
        tokio::signal::ctrl_c().await.unwrap();
    }
    handle.abort();
    std::fs::remove_dir_all(&dir).unwrap();
}
