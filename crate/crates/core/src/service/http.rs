use std::io::Read;
use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use super::{handle_job, JobRequest, ModelRegistry, Operation, ServiceError, MAX_REQUEST_BYTES};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub workers: usize,
    pub timeout: Duration,
    pub max_request_bytes: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { workers: 4, timeout: Duration::from_secs(30), max_request_bytes: MAX_REQUEST_BYTES }
    }
}

/// A running server; dropping it does not stop it, call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers {
            let _ = w.join();
        }
    }

    pub fn join(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }
}

/// Starts worker threads serving the API on `addr` and returns immediately.
pub fn spawn(addr: &str, registry: ModelRegistry, opts: ServeOptions) -> std::io::Result<ServerHandle> {
    let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
    let registry = Arc::new(registry);
    let workers = (0..opts.workers.max(1))
        .map(|_| {
            let (server, registry, opts) = (server.clone(), registry.clone(), opts.clone());
            std::thread::spawn(move || {
                while let Ok(req) = server.recv() {
                    handle_http(req, &registry, &opts);
                }
            })
        })
        .collect();
    log::info!("listening on http://{bound}");
    Ok(ServerHandle { server, workers, addr: bound })
}

/// Serves until the process exits.
pub fn serve(addr: &str, registry: ModelRegistry, opts: ServeOptions) -> std::io::Result<()> {
    spawn(addr, registry, opts)?.join();
    Ok(())
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

fn handle_http(mut req: Request, registry: &Arc<ModelRegistry>, opts: &ServeOptions) {
    let (status, body) = match route(&mut req, registry, opts) {
        Ok(body) => (200, body),
        Err(e) => {
            log::warn!("{} {}: {e}", req.method(), req.url());
            (e.http_status, e.to_json())
        }
    };
    let _ = req.respond(json_response(status, body));
}

fn route(req: &mut Request, registry: &Arc<ModelRegistry>, opts: &ServeOptions) -> Result<String, ServiceError> {
    let path = req.url().split('?').next().unwrap_or("").to_string();
    match (req.method(), path.as_str()) {
        (Method::Get, "/health") => Ok(json!({"status": "ok"}).to_string()),
        (Method::Get, "/v1/models") => Ok(json!({"status": "ok", "payload": registry.describe()}).to_string()),
        (Method::Post, p) if p.starts_with("/v1/") => {
            let op: Operation = p["/v1/".len()..].parse()?;
            if op == Operation::Train {
                return Err(ServiceError::not_found("training is only available from the command line"));
            }
            if req.body_length().is_some_and(|n| n > opts.max_request_bytes) {
                return Err(ServiceError::too_large(format!("request exceeds {} bytes", opts.max_request_bytes)));
            }
            let mut body = Vec::new();
            req.as_reader()
                .take(opts.max_request_bytes as u64 + 1)
                .read_to_end(&mut body)
                .map_err(|e| ServiceError::bad_request(e.to_string()))?;
            if body.len() > opts.max_request_bytes {
                return Err(ServiceError::too_large(format!("request exceeds {} bytes", opts.max_request_bytes)));
            }
            let mut value: Value =
                serde_json::from_slice(&body).map_err(|e| ServiceError::bad_request(format!("malformed JSON: {e}")))?;
            let obj = value.as_object_mut().ok_or_else(|| ServiceError::bad_request("request must be a JSON object"))?;
            obj.entry("operation").or_insert_with(|| serde_json::to_value(op).expect("operation serializes"));
            let job: JobRequest =
                serde_json::from_value(value).map_err(|e| ServiceError::bad_request(format!("invalid request: {e}")))?;
            if job.operation != op {
                return Err(ServiceError::bad_request(format!("operation {:?} posted to {p}", job.operation)));
            }
            run_with_timeout(registry.clone(), job, opts.timeout).map(|r| r.to_json())
        }
        (Method::Get | Method::Post, _) => Err(ServiceError::not_found(format!("no route for {path}"))),
        (m, _) => Err(ServiceError {
            http_status: 405,
            code: "method_not_allowed",
            message: format!("{m} is not supported"),
        }),
    }
}

fn run_with_timeout(
    registry: Arc<ModelRegistry>,
    job: JobRequest,
    timeout: Duration,
) -> Result<super::JobResponse, ServiceError> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| handle_job(&registry, &job)))
            .unwrap_or_else(|_| Err(ServiceError::internal("job panicked")));
        let _ = tx.send(result);
    });
    match rx.recv_timeout(timeout) {
        Ok(r) => r,
        Err(_) => Err(ServiceError::timeout(format!("job exceeded {} s", timeout.as_secs_f64()))),
    }
}
