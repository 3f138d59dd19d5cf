use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::{Arc, Barrier};

use serde_json::{json, Value};

use namerec::annotate::{self, NameTemplate};
use namerec::corpus::{read_corpus, read_document_raw, write_document, AnnotatedDocument};
use namerec::labels::TokenLabel;
use namerec::service::{HttpServer, Service};

fn corpus_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus");
    for doc in read_corpus(fixtures).unwrap() {
        write_document(dir.path(), &doc).unwrap();
    }
    dir
}

fn start(root: &Path) -> SocketAddr {
    let service = Arc::new(Service::open(root, None).unwrap());
    let server = HttpServer::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    std::thread::spawn(move || server.run(service, 4));
    addr
}

fn request(addr: SocketAddr, method: &str, path: &str, body: &str) -> (u16, Value) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let (_, payload) = raw.split_once("\r\n\r\n").unwrap();
    (status, serde_json::from_str(payload).unwrap())
}

#[test]
fn serves_fixture_documents() {
    let dir = corpus_copy();
    let addr = start(dir.path());
    let (status, list) = request(addr, "GET", "/docs", "");
    assert_eq!(status, 200);
    assert_eq!(list["docs"].as_array().unwrap().len(), 3);
    let (status, doc) = request(addr, "GET", "/docs/alpha", "");
    assert_eq!(status, 200);
    assert!(doc["text"].as_str().unwrap().starts_with("John Doe is a professor"));
    assert_eq!(doc["names"].as_array().unwrap().len(), 2);
    assert_eq!(doc["version"], 1);
    let (_, masked) = request(addr, "GET", "/docs/alpha/mask", "");
    assert!(masked["masked"].as_str().unwrap().starts_with("ANNOTATED is"));
    let (_, valid) = request(addr, "GET", "/docs/beta/validate", "");
    assert_eq!(valid["passed"], true);
    let (_, suggest) = request(addr, "GET", "/docs/beta/suggest", "");
    assert_eq!(suggest["suggestions"], json!([]));
    assert_eq!(request(addr, "GET", "/docs/missing", "").0, 404);
    assert_eq!(request(addr, "GET", "/nowhere", "").0, 404);
    assert_eq!(request(addr, "DELETE", "/docs/alpha", "").0, 405);
    assert_eq!(request(addr, "POST", "/docs/alpha/save", "{\"version\": 1, \"bogus\": 2}").0, 400);
}

#[test]
fn concurrent_saves_on_one_version_conflict() {
    let dir = corpus_copy();
    let addr = start(dir.path());
    let (_, doc) = request(addr, "GET", "/docs/gamma", "");
    assert_eq!(doc["names"], json!([]));
    let barrier = Arc::new(Barrier::new(2));
    let workers: Vec<_> = ["Contact", "department"]
        .into_iter()
        .map(|word| {
            let barrier = Arc::clone(&barrier);
            std::thread::spawn(move || {
                let text = "Contact the department office for details.\n";
                let position = text.find(word).unwrap();
                let body = json!({
                    "version": 1,
                    "names": [{ "text": word, "positions": [position], "labels": ["Begin_First_Full"] }],
                })
                .to_string();
                barrier.wait();
                request(addr, "POST", "/docs/gamma/save", &body)
            })
        })
        .collect();
    let mut results: Vec<(u16, Value)> = workers.into_iter().map(|w| w.join().unwrap()).collect();
    results.sort_by_key(|r| r.0);
    assert_eq!(results[0].0, 200);
    assert_eq!(results[0].1["version"], 2);
    assert_eq!(results[1].0, 409);
    assert_eq!(results[1].1["current_version"], 2);
    let on_disk = read_document_raw(&dir.path().join("gamma")).unwrap();
    assert_eq!(on_disk.records.len(), 1);
    let (_, doc) = request(addr, "GET", "/docs/gamma", "");
    assert_eq!(doc["version"], 2);
    assert_eq!(doc["names"][0]["text"], on_disk.records[0].text);
}

#[test]
fn invalid_save_is_rejected_without_writing() {
    let dir = corpus_copy();
    let addr = start(dir.path());
    let body = json!({
        "version": 1,
        "names": [{ "text": "John Doe", "positions": [1], "labels": ["Begin_First_Full", "End_Last_Full"] }],
    });
    let (status, reply) = request(addr, "POST", "/docs/alpha/save", &body.to_string());
    assert_eq!(status, 400);
    assert!(!reply["violations"].as_array().unwrap().is_empty());
    assert_eq!(read_document_raw(&dir.path().join("alpha")).unwrap().records.len(), 2);
    assert_eq!(request(addr, "GET", "/docs/alpha", "").1["version"], 1);
}

#[test]
fn workflow_stage_save_group_label_and_resolve() {
    let dir = corpus_copy();
    write_document(
        dir.path(),
        &AnnotatedDocument::new("home", "John Doe teaches . Doe J and Roe K wrote with Doe J ."),
    )
    .unwrap();
    let addr = start(dir.path());
    let save = json!({
        "version": 1,
        "names": [{ "text": "John Doe", "positions": [0], "labels": ["Begin_First_Full", "End_Last_Full"] }],
    });
    let (status, reply) = request(addr, "POST", "/docs/home/save", &save.to_string());
    assert_eq!((status, reply["version"].clone()), (200, json!(2)));

    let group = json!({
        "version": 2,
        "template": "X x",
        "labels": ["Begin_Last_Full", "End_First_Initial"],
    });
    let (status, reply) = request(addr, "POST", "/docs/home/group-label", &group.to_string());
    assert_eq!(status, 200);
    assert_eq!(reply["labelled"].as_array().unwrap().len(), 3);
    assert_eq!(reply["version"], 3);

    // A second annotator forgot one name; the disagreement resolves by saving the union.
    let (_, doc) = request(addr, "GET", "/docs/home", "");
    let mut other = doc["names"].as_array().unwrap().clone();
    other.retain(|r| r["text"] != "John Doe");
    let (_, cmp) = request(addr, "POST", "/compare", &json!({ "id": "home", "b": other }).to_string());
    let found = cmp["disagreements"].as_array().unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0]["kind"], "SpanOnlyInA");
    let (_, cmp) = request(addr, "POST", "/compare", &json!({ "id": "home", "b": doc["names"] }).to_string());
    assert!(cmp["disagreements"].as_array().unwrap().is_empty());

    let (status, _) = request(addr, "POST", "/docs/home/group-label", &group.to_string());
    assert_eq!(status, 409);
    let on_disk = read_document_raw(&dir.path().join("home")).unwrap();
    assert!(annotate::validate(&on_disk).passed());
}

#[test]
fn mutations_equal_the_pure_operations() {
    let dir = corpus_copy();
    let service = Service::open(dir.path(), None).unwrap();
    let before = read_document_raw(&dir.path().join("beta")).unwrap();
    let template: NameTemplate = "X X".parse().unwrap();
    let labels: Vec<TokenLabel> = ["Begin_First_Full", "End_Last_Full"].iter().map(|l| l.parse().unwrap()).collect();
    let (expected, report) = annotate::group_label(&before, &template, &labels).unwrap();

    let body = json!({ "template": "X X", "labels": ["Begin_First_Full", "End_Last_Full"], "dry_run": true });
    let dry = service.handle("POST", "/docs/beta/group-label", &body.to_string());
    assert_eq!(dry.status, 200);
    assert_eq!(dry.body["labelled"], json!(report.labelled));
    assert_eq!(read_document_raw(&dir.path().join("beta")).unwrap(), before);

    let body = json!({ "version": 1, "template": "X X", "labels": ["Begin_First_Full", "End_Last_Full"] });
    let applied = service.handle("POST", "/docs/beta/group-label", &body.to_string());
    assert_eq!(applied.status, 200);
    assert_eq!(read_document_raw(&dir.path().join("beta")).unwrap(), expected);
    assert_eq!(applied.body["names"], json!(expected.records));

    let masked = service.handle("GET", "/docs/beta/mask", "");
    assert_eq!(masked.body["masked"], annotate::mask(&expected).unwrap());
    let validated = service.handle("GET", "/docs/beta/validate", "");
    assert_eq!(validated.body["passed"], annotate::validate(&expected).passed());
}
