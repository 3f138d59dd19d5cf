//! Start the annotation service on a temporary synthetic corpus and talk to
//! it over HTTP.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use namerec::corpus::{synth_generate, write_corpus, SynthParams};
use namerec::service::{HttpServer, Service};

fn call(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> std::io::Result<String> {
    let mut s = TcpStream::connect(addr)?;
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut reply = String::new();
    s.read_to_string(&mut reply)?;
    let status = reply.lines().next().unwrap_or_default().to_string();
    let payload = reply.split_once("\r\n\r\n").map(|(_, b)| b).unwrap_or_default();
    let shown: String = payload.chars().take(160).collect();
    let more = if payload.chars().count() > 160 { " ..." } else { "" };
    Ok(format!("{status}\n  {shown}{more}"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("namerec-service-{}", std::process::id()));
    let docs = synth_generate(4, &SynthParams {
        num_docs: 2,
        max_tokens: 40,
        ..SynthParams::default()
    });
    write_corpus(&docs, &root)?;
    let service = Arc::new(Service::open(&root, None)?);
    let server = HttpServer::bind("127.0.0.1:0")?;
    let addr = server.local_addr().ok_or("no local address")?;
    std::thread::spawn(move || server.run(service, 2));

    let id = &docs[0].doc_id;
    println!("{}", call(addr, "GET", "/docs", "")?);
    println!("{}", call(addr, "GET", &format!("/docs/{id}/mask"), "")?);
    let names = serde_json::to_string(&docs[0].records)?;
    println!("{}", call(addr, "POST", &format!("/docs/{id}/save"), &format!("{{\"version\": 1, \"names\": {names}}}"))?);
    println!("{}", call(addr, "POST", &format!("/docs/{id}/save"), &format!("{{\"version\": 1, \"names\": {names}}}"))?);
    println!("{}", call(addr, "POST", "/compare", &format!("{{\"id\": \"{id}\", \"b\": []}}"))?);
    std::fs::remove_dir_all(&root)?;
    Ok(())
}
