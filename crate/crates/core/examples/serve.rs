//! Starts the HTTP service with an in-memory random classifier, sends one
//! attribution request and shuts down.
//!
//! cargo run --release --example serve

use std::io::{Read, Write};
use std::net::TcpStream;

use strokescope::scorer::Scorer;
use strokescope::service::{self, ModelRegistry, ServeOptions};
use strokescope::synthetic::{attack_corpus, ShapeClass, TOY_CANVAS};

fn post(addr: std::net::SocketAddr, path: &str, body: &str) -> std::io::Result<String> {
    let mut s = TcpStream::connect(addr)?;
    write!(s, "POST {path} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())?;
    let mut out = String::new();
    s.read_to_string(&mut out)?;
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut registry = ModelRegistry::new();
    let side = TOY_CANVAS as usize;
    registry.insert("shapes", Scorer::tiny_conv_classifier(side, side, 3, 1).with_labels(ShapeClass::labels()), None);
    let handle = service::spawn("127.0.0.1:0", registry, ServeOptions::default())?;
    println!("listening on {}", handle.addr());

    let (sketch, _) = attack_corpus(1, 4).remove(0);
    let body = serde_json::json!({
        "operation": "attribute",
        "sketch": sketch.to_stroke5_value(),
        "model": "shapes",
        "params": {"mode": "sla", "target": "class:circle"},
    });
    let response = post(handle.addr(), "/v1/attribute", &body.to_string())?;
    let (head, json) = response.split_once("\r\n\r\n").unwrap_or((&response, ""));
    println!("{}", head.lines().next().unwrap_or(""));
    let v: serde_json::Value = serde_json::from_str(json)?;
    println!("payload: {}", v["payload"]);
    println!("artifacts: {:?}", v["artifacts"].as_array().map(|a| a.iter().map(|x| x["name"].clone()).collect::<Vec<_>>()));
    handle.shutdown();
    Ok(())
}
