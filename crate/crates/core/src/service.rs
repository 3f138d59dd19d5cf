//! Local annotation service. [`Service::handle`] is a pure request/response
//! function over an in-memory corpus; [`HttpServer`] puts it behind HTTP.
//!
//! Messages are JSON objects in the same syntax as the `names.json` sidecar.
//! Every document carries a version that starts at 1 and grows by one on each
//! persisted change; writes name the version they were based on and receive
//! 409 when it is stale.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/docs` | | `{"docs": [{"id", "version", "names"}]}` |
//! | GET | `/docs/{id}` | | `{"id", "version", "text", "names"}` |
//! | GET | `/docs/{id}/mask` | | `{"id", "version", "masked"}` |
//! | GET | `/docs/{id}/validate` | | `{"id", "passed", "violations"}` |
//! | GET | `/docs/{id}/suggest` | | `{"id", "model", "suggestions"}` |
//! | POST | `/docs/{id}/group-label` | `{"version", "template", "labels", "dry_run"?}` | `{"id", "version", "labelled", "collisions", "names"}` |
//! | POST | `/docs/{id}/save` | `{"version", "names"}` | `{"id", "version"}` |
//! | POST | `/compare` | `{"id", "a"?, "b"}` | `{"id", "disagreements"}` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Deserialize;
use serde_json::{json, Value};

use crate::annotate::{compare, group_label, mask, validate, NameTemplate};
use crate::corpus::{read_corpus_raw, write_document, AnnotatedDocument, AnnotationRecord};
use crate::error::{Error, Result};
use crate::labels::TokenLabel;
use crate::model::{suggestions, AnyModel};

/// Environment variable naming the default corpus root.
pub const CORPUS_ENV: &str = "NAMEREC_CORPUS";

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Value,
}

impl Response {
    fn ok(body: Value) -> Self {
        Response { status: 200, body }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Response {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

struct Stored {
    doc: AnnotatedDocument,
    version: u64,
}

pub struct Service {
    root: PathBuf,
    docs: BTreeMap<String, RwLock<Stored>>,
    model: Option<Mutex<AnyModel>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaveRequest {
    version: u64,
    names: Vec<AnnotationRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupLabelRequest {
    version: Option<u64>,
    template: String,
    labels: Vec<String>,
    #[serde(default)]
    dry_run: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    id: String,
    a: Option<Vec<AnnotationRecord>>,
    b: Vec<AnnotationRecord>,
}

fn bad_request(e: impl std::fmt::Display) -> Response {
    Response::error(400, e.to_string())
}

fn parse_body<'a, T: Deserialize<'a>>(body: &'a str) -> std::result::Result<T, Response> {
    serde_json::from_str(body).map_err(|e| bad_request(format!("invalid payload: {e}")))
}

impl Service {
    /// Load every document under `root` without rejecting invalid sidecars;
    /// `validate` reports those.
    pub fn open(root: impl AsRef<Path>, model: Option<AnyModel>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let docs = read_corpus_raw(&root)?
            .into_iter()
            .map(|doc| (doc.doc_id.clone(), RwLock::new(Stored { doc, version: 1 })))
            .collect();
        Ok(Service {
            root,
            docs,
            model: model.map(Mutex::new),
        })
    }

    pub fn document_ids(&self) -> Vec<String> {
        self.docs.keys().cloned().collect()
    }

    pub fn handle(&self, method: &str, path: &str, body: &str) -> Response {
        let path = path.split('?').next().unwrap_or_default();
        let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
        let result = match (method, parts.as_slice()) {
            ("GET", ["docs"]) => Ok(self.list()),
            ("GET", ["docs", id]) => self.with_doc(id, |s| {
                json!({ "id": s.doc.doc_id, "version": s.version, "text": s.doc.text, "names": s.doc.records })
            }),
            ("GET", ["docs", id, "mask"]) => self.read_doc(id).and_then(|s| match mask(&s.doc) {
                Ok(m) => Ok(Response::ok(json!({ "id": s.doc.doc_id, "version": s.version, "masked": m }))),
                Err(e) => Err(bad_request(e)),
            }),
            ("GET", ["docs", id, "validate"]) => self.with_doc(id, |s| {
                let report = validate(&s.doc);
                json!({ "id": s.doc.doc_id, "passed": report.passed(), "violations": report.violations })
            }),
            ("GET", ["docs", id, "suggest"]) => self.suggest(id),
            ("POST", ["docs", id, "group-label"]) => parse_body(body).and_then(|r| self.group_label(id, r)),
            ("POST", ["docs", id, "save"]) => parse_body(body).and_then(|r| self.save(id, r)),
            ("POST", ["compare"]) => parse_body(body).and_then(|r| self.compare(r)),
            (_, ["docs"] | ["docs", _] | ["docs", _, "mask" | "validate" | "suggest" | "group-label" | "save"] | ["compare"]) => {
                Err(Response::error(405, format!("{method} not allowed on {path}")))
            }
            _ => Err(Response::error(404, format!("no endpoint {path}"))),
        };
        result.unwrap_or_else(|e| e)
    }

    fn list(&self) -> Response {
        let docs: Vec<Value> = self
            .docs
            .iter()
            .map(|(id, s)| {
                let s = s.read().expect("document lock");
                json!({ "id": id, "version": s.version, "names": s.doc.records.len() })
            })
            .collect();
        Response::ok(json!({ "docs": docs }))
    }

    fn entry(&self, id: &str) -> std::result::Result<&RwLock<Stored>, Response> {
        self.docs
            .get(id)
            .ok_or_else(|| Response::error(404, format!("no document {id:?}")))
    }

    fn read_doc(&self, id: &str) -> std::result::Result<std::sync::RwLockReadGuard<'_, Stored>, Response> {
        Ok(self.entry(id)?.read().expect("document lock"))
    }

    fn with_doc(&self, id: &str, f: impl FnOnce(&Stored) -> Value) -> std::result::Result<Response, Response> {
        let s = self.read_doc(id)?;
        Ok(Response::ok(f(&s)))
    }

    fn suggest(&self, id: &str) -> std::result::Result<Response, Response> {
        let (text, doc_id) = {
            let s = self.read_doc(id)?;
            (s.doc.text.clone(), s.doc.doc_id.clone())
        };
        let Some(model) = &self.model else {
            return Ok(Response::ok(json!({ "id": doc_id, "model": null, "suggestions": [] })));
        };
        // One inference at a time.
        let model = model.lock().expect("model lock");
        let prediction = model
            .predict_document(&doc_id, &text)
            .map_err(|e| Response::error(500, e.to_string()))?;
        Ok(Response::ok(json!({
            "id": doc_id,
            "model": model.kind(),
            "suggestions": suggestions(&text, &prediction),
        })))
    }

    /// Check the version, apply `change` and persist, all under the document's write lock.
    fn commit(
        &self,
        id: &str,
        version: u64,
        change: impl FnOnce(&AnnotatedDocument) -> std::result::Result<(AnnotatedDocument, Value), Response>,
    ) -> std::result::Result<Response, Response> {
        let mut s = self.entry(id)?.write().expect("document lock");
        if version != s.version {
            return Err(Response {
                status: 409,
                body: json!({ "error": "version conflict", "current_version": s.version }),
            });
        }
        let (doc, mut reply) = change(&s.doc)?;
        write_document(&self.root, &doc).map_err(|e| Response::error(500, e.to_string()))?;
        s.doc = doc;
        s.version += 1;
        reply["id"] = json!(id);
        reply["version"] = json!(s.version);
        Ok(Response::ok(reply))
    }

    fn save(&self, id: &str, req: SaveRequest) -> std::result::Result<Response, Response> {
        self.commit(id, req.version, |current| {
            let doc = AnnotatedDocument {
                records: req.names,
                ..current.clone()
            };
            let report = validate(&doc);
            if !report.passed() {
                return Err(Response {
                    status: 400,
                    body: json!({ "error": "annotations do not validate", "violations": report.violations }),
                });
            }
            Ok((doc, json!({})))
        })
    }

    fn group_label(&self, id: &str, req: GroupLabelRequest) -> std::result::Result<Response, Response> {
        let template: NameTemplate = req.template.parse().map_err(bad_request)?;
        let labels: Vec<TokenLabel> = req
            .labels
            .iter()
            .map(|l| l.parse())
            .collect::<Result<_>>()
            .map_err(bad_request)?;
        let apply = |doc: &AnnotatedDocument| -> std::result::Result<(AnnotatedDocument, Value), Response> {
            let (out, report) = group_label(doc, &template, &labels).map_err(bad_request)?;
            let reply = json!({ "labelled": report.labelled, "collisions": report.collisions, "names": out.records });
            Ok((out, reply))
        };
        if req.dry_run {
            let s = self.read_doc(id)?;
            let (_, mut reply) = apply(&s.doc)?;
            reply["id"] = json!(id);
            reply["version"] = json!(s.version);
            return Ok(Response::ok(reply));
        }
        let version = req
            .version
            .ok_or_else(|| bad_request("invalid payload: version is required unless dry_run is set"))?;
        self.commit(id, version, apply)
    }

    fn compare(&self, req: CompareRequest) -> std::result::Result<Response, Response> {
        let s = self.read_doc(&req.id)?;
        let a = AnnotatedDocument {
            records: req.a.unwrap_or_else(|| s.doc.records.clone()),
            ..s.doc.clone()
        };
        let b = AnnotatedDocument {
            records: req.b,
            ..s.doc.clone()
        };
        let disagreements = compare(&a, &b).map_err(bad_request)?;
        Ok(Response::ok(json!({ "id": req.id, "disagreements": disagreements })))
    }
}

/// A bound HTTP listener; [`HttpServer::run`] blocks serving requests.
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
}

impl HttpServer {
    pub fn bind(addr: &str) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        Ok(HttpServer {
            server: Arc::new(server),
        })
    }

    pub fn local_addr(&self) -> Option<std::net::SocketAddr> {
        self.server.server_addr().to_ip()
    }

    /// Serve with `workers` threads until the process exits.
    pub fn run(self, service: Arc<Service>, workers: usize) {
        let handles: Vec<_> = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&self.server);
                let service = Arc::clone(&service);
                std::thread::spawn(move || {
                    for mut request in server.incoming_requests() {
                        let mut body = String::new();
                        let response = match request.as_reader().read_to_string(&mut body) {
                            Ok(_) => service.handle(request.method().as_str(), request.url(), &body),
                            Err(_) => Response::error(400, "body is not UTF-8"),
                        };
                        let header = tiny_http::Header::from_bytes("Content-Type", "application/json; charset=utf-8")
                            .expect("static header");
                        let reply = tiny_http::Response::from_string(response.body.to_string())
                            .with_status_code(response.status)
                            .with_header(header);
                        let _ = request.respond(reply);
                    }
                })
            })
            .collect();
        for h in handles {
            let _ = h.join();
        }
    }
}
