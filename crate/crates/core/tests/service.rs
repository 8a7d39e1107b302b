mod common;

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use serde_json::{json, Value};
use strokescope::service::{self, handle_job, ModelRegistry, Operation, ServeOptions, MAX_POINTS};

use common::{job, toy_sketch, write_toy_models};

fn http(addr: SocketAddr, method: &str, path: &str, body: &[u8]) -> (u16, Vec<u8>) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "{method} {path} HTTP/1.1\r\nHost: t\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len()).unwrap();
    // the server may answer before reading an oversized body
    let _ = s.write_all(body);
    let mut raw = Vec::new();
    let _ = s.read_to_end(&mut raw);
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("response has a header block");
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, raw[split + 4..].to_vec())
}

fn error_code(body: &[u8]) -> String {
    let v: Value = serde_json::from_slice(body).unwrap();
    v["error"]["code"].as_str().unwrap().to_string()
}

struct Fixture {
    _dir: tempfile::TempDir,
    handle: service::ServerHandle,
    registry: ModelRegistry,
}

fn start() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    write_toy_models(dir.path());
    let handle = service::spawn("127.0.0.1:0", ModelRegistry::load_dir(dir.path()).unwrap(), ServeOptions::default()).unwrap();
    let registry = ModelRegistry::load_dir(dir.path()).unwrap();
    Fixture { _dir: dir, handle, registry }
}

fn body(op: &str, model: Option<&str>, params: Value) -> Vec<u8> {
    let mut v = json!({"operation": op, "sketch": toy_sketch().to_stroke5_value(), "params": params});
    if let Some(m) = model {
        v["model"] = json!(m);
    }
    serde_json::to_vec(&v).unwrap()
}

#[test]
fn http_endpoints_and_errors() {
    let f = start();
    let addr = f.handle.addr();

    let (status, b) = http(addr, "GET", "/health", b"");
    assert_eq!((status, serde_json::from_slice::<Value>(&b).unwrap()), (200, json!({"status": "ok"})));

    let (status, b) = http(addr, "GET", "/v1/models", b"");
    assert_eq!(status, 200);
    let models: Value = serde_json::from_slice(&b).unwrap();
    let listed = models["payload"].to_string();
    assert!(listed.contains("cls") && listed.contains("emb") && listed.contains("photo-0"), "{listed}");

    let (status, b) = http(addr, "POST", "/v1/render", &body("render", None, json!({"renderer": "soft"})));
    assert_eq!(status, 200);
    let v: Value = serde_json::from_slice(&b).unwrap();
    let png = base64_decode(v["artifacts"][0]["data"].as_str().unwrap());
    let info = png::Decoder::new(png.as_slice()).read_info().unwrap().info().clone();
    assert_eq!((info.width, info.height), (64, 64));

    for (op, model, params) in [
        ("attribute", "cls", json!({"mode": "sla", "target": "class:square"})),
        ("attribute", "emb", json!({"mode": "psla", "target": "gallery:photo-1"})),
        ("filter", "emb", json!({"reference": "gallery:photo-2", "delta": 0.3})),
        ("attack", "cls", json!({"mode": "sla", "epsilon": 15})),
        ("reliability", "emb", json!({"true_id": "photo-0"})),
    ] {
        let (status, b) = http(addr, "POST", &format!("/v1/{op}"), &body(op, Some(model), params));
        assert!(status == 200 || (op == "attack" && status == 422), "{op}: {status} {}", String::from_utf8_lossy(&b));
    }

    let (status, b) = http(addr, "POST", "/v1/attribute", b"{not json");
    assert_eq!((status, error_code(&b).as_str()), (400, "bad_request"));
    let (status, b) = http(addr, "POST", "/v1/attribute", &body("attribute", Some("missing"), json!({})));
    assert_eq!((status, error_code(&b).as_str()), (404, "unknown_model"));
    let (status, b) = http(addr, "GET", "/v1/nothing", b"");
    assert_eq!((status, error_code(&b).as_str()), (404, "not_found"));
    let (status, _) = http(addr, "POST", "/v1/train", &body("train", None, json!({})));
    assert_eq!(status, 404);
    let (status, b) = http(addr, "POST", "/v1/render", &body("attack", None, json!({})));
    assert_eq!((status, error_code(&b).as_str()), (400, "bad_request"));
    let (status, b) = http(addr, "POST", "/v1/attack", &body("attack", Some("cls"), json!({"mode": "psla", "epsilon": 0})));
    assert_eq!((status, error_code(&b).as_str()), (422, "budget"));

    let huge = vec![b' '; service::MAX_REQUEST_BYTES + 10];
    let (status, b) = http(addr, "POST", "/v1/render", &huge);
    assert_eq!((status, error_code(&b).as_str()), (413, "payload_too_large"));
    let many: Vec<Value> = (0..=MAX_POINTS).map(|i| json!([i as f64 % 60.0, 3.0, 1, 0, 0])).collect();
    let doc = json!({"operation": "render", "sketch": {"canvas": [64, 64], "points": many}});
    let (status, b) = http(addr, "POST", "/v1/render", &serde_json::to_vec(&doc).unwrap());
    assert_eq!((status, error_code(&b).as_str()), (413, "payload_too_large"));

    f.handle.shutdown();
    drop(f.registry);
}

#[test]
fn repeated_and_concurrent_requests_are_byte_identical() {
    let f = start();
    let addr = f.handle.addr();
    let req = body("attribute", Some("emb"), json!({"mode": "psla", "target": "gallery:photo-3"}));
    let first = http(addr, "POST", "/v1/attribute", &req);
    assert_eq!(first.0, 200);
    let threads: Vec<_> = (0..4)
        .map(|_| {
            let req = req.clone();
            std::thread::spawn(move || http(addr, "POST", "/v1/attribute", &req))
        })
        .collect();
    for t in threads {
        assert_eq!(t.join().unwrap(), first);
    }
    // the HTTP body is the job response serialized
    let direct = handle_job(&f.registry, &serde_json::from_slice(&req).unwrap()).unwrap();
    assert_eq!(direct.to_json().into_bytes(), first.1);
    f.handle.shutdown();
}

#[test]
fn every_operation_is_deterministic_in_process() {
    let f = start();
    let sketch = Some(toy_sketch().to_stroke5_value());
    let jobs = [
        job(Operation::Render, sketch.clone(), None, json!({"renderer": "soft"})),
        job(Operation::Attribute, sketch.clone(), Some("cls"), json!({"mode": "sla"})),
        job(Operation::Filter, sketch.clone(), Some("emb"), json!({"reference": "gallery:photo-1", "stochastic": true, "seed": 4})),
        job(Operation::Attack, sketch.clone(), Some("cls"), json!({"mode": "psla", "epsilon": 3})),
        job(Operation::Reliability, sketch.clone(), Some("emb"), json!({"mode": "psla"})),
        job(Operation::Train, None, None, json!({"kind": "classifier", "n": 20, "epochs": 1, "seed": 9})),
    ];
    for j in &jobs {
        let a = handle_job(&f.registry, j).map(|r| r.to_json()).unwrap_or_else(|e| e.to_json());
        let b = handle_job(&f.registry, j).map(|r| r.to_json()).unwrap_or_else(|e| e.to_json());
        assert_eq!(a, b, "{:?}", j.operation);
    }
    f.handle.shutdown();
}

fn base64_decode(s: &str) -> Vec<u8> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(s).unwrap()
}
