//! Request/response transport shared by all services.
//!
//! Services implement [`Handler`] over plain byte bodies. Callers reach them
//! through a [`Transport`]: either in-process ([`LocalTransport`]) or over
//! HTTP/1.1 ([`HttpTransport`] against an [`HttpServer`]).

use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::codec::canonical_json;

/// Largest request or response body accepted by the HTTP transport.
pub const MAX_BODY: u64 = 64 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireRequest {
    pub method: Method,
    /// Path including any query string, e.g. `/resource/<id>/content?token=..`.
    pub path: String,
    pub body: Vec<u8>,
}

impl WireRequest {
    pub fn get(path: impl Into<String>) -> Self {
        WireRequest { method: Method::Get, path: path.into(), body: Vec::new() }
    }

    pub fn post(path: impl Into<String>, body: Vec<u8>) -> Self {
        WireRequest { method: Method::Post, path: path.into(), body }
    }

    /// Path without the query string, split into nonempty segments.
    pub fn segments(&self) -> Vec<&str> {
        let path = self.path.split('?').next().unwrap_or("");
        path.split('/').filter(|s| !s.is_empty()).collect()
    }

    pub fn query_param(&self, key: &str) -> Option<&str> {
        let query = self.path.split_once('?')?.1;
        query.split('&').find_map(|pair| {
            let (k, v) = pair.split_once('=')?;
            (k == key).then_some(v)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// JSON error body returned with every non-2xx status.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl WireResponse {
    pub fn ok<T: Serialize>(body: &T) -> Self {
        match canonical_json(body) {
            Ok(bytes) => WireResponse { status: 200, body: bytes },
            Err(e) => WireResponse::error(500, "internal", &e.to_string()),
        }
    }

    pub fn raw(status: u16, body: Vec<u8>) -> Self {
        WireResponse { status, body }
    }

    pub fn error(status: u16, code: &str, message: &str) -> Self {
        let body = ErrorBody { error: code.to_string(), message: message.to_string() };
        WireResponse {
            status,
            body: canonical_json(&body).unwrap_or_default(),
        }
    }

    pub fn not_found(message: &str) -> Self {
        Self::error(404, "not_found", message)
    }

    pub fn bad_request(message: &str) -> Self {
        Self::error(400, "invalid_input", message)
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn error_body(&self) -> Option<ErrorBody> {
        serde_json::from_slice(&self.body).ok()
    }
}

pub trait Handler: Send + Sync {
    fn handle(&self, request: &WireRequest) -> WireResponse;
}

impl<H: Handler + ?Sized> Handler for Arc<H> {
    fn handle(&self, request: &WireRequest) -> WireResponse {
        (**self).handle(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn call(&self, request: WireRequest) -> Result<WireResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn call(&self, request: WireRequest) -> Result<WireResponse, TransportError> {
        (**self).call(request)
    }
}

/// One captured request/response pair.
#[derive(Clone, Debug)]
pub struct Exchange {
    pub request: WireRequest,
    pub response: WireResponse,
}

/// Records every exchange crossing a [`LocalTransport`].
#[derive(Debug, Default)]
pub struct WireTap {
    exchanges: Mutex<Vec<Exchange>>,
}

impl WireTap {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.exchanges.lock().clone()
    }

    pub fn clear(&self) {
        self.exchanges.lock().clear();
    }
}

/// Calls a handler directly. Bodies are still bytes, so encoding paths are
/// exercised exactly as over the network.
#[derive(Clone)]
pub struct LocalTransport {
    handler: Arc<dyn Handler>,
    tap: Option<Arc<WireTap>>,
}

impl LocalTransport {
    pub fn new(handler: Arc<dyn Handler>) -> Self {
        LocalTransport { handler, tap: None }
    }

    pub fn with_tap(handler: Arc<dyn Handler>, tap: Arc<WireTap>) -> Self {
        LocalTransport { handler, tap: Some(tap) }
    }
}

impl Transport for LocalTransport {
    fn call(&self, request: WireRequest) -> Result<WireResponse, TransportError> {
        let response = self.handler.handle(&request);
        if let Some(tap) = &self.tap {
            tap.exchanges.lock().push(Exchange { request, response: response.clone() });
        }
        Ok(response)
    }
}

/// Blocking HTTP/1.1 client for a service base URL such as `http://127.0.0.1:7300`.
#[derive(Clone)]
pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        if !base.contains("://") {
            base = format!("http://{base}");
        }
        HttpTransport { base, agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }
}

impl Transport for HttpTransport {
    fn call(&self, request: WireRequest) -> Result<WireResponse, TransportError> {
        let url = format!("{}{}", self.base, request.path);
        let result = match request.method {
            Method::Get => self.agent.get(&url).call(),
            Method::Post => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(&request.body[..]),
        };
        let mut response = result.map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(WireResponse { status, body })
    }
}

/// A small threaded HTTP server dispatching to a [`Handler`].
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    stopping: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl HttpServer {
    pub fn bind(addr: &str, handler: Arc<dyn Handler>, workers: usize) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::AddrNotAvailable, e.to_string()))?;
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP socket"))?;
        let server = Arc::new(server);
        let stopping = Arc::new(AtomicBool::new(false));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let handler = Arc::clone(&handler);
                let stopping = Arc::clone(&stopping);
                std::thread::spawn(move || serve_loop(&server, handler.as_ref(), &stopping))
            })
            .collect();
        log::info!("listening on {local}");
        Ok(HttpServer { server, addr: local, stopping, workers })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the worker threads exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.stopping.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        if !self.workers.is_empty() {
            self.stop();
        }
    }
}

fn serve_loop(server: &tiny_http::Server, handler: &dyn Handler, stopping: &AtomicBool) {
    while !stopping.load(Ordering::SeqCst) {
        let mut request = match server.recv() {
            Ok(r) => r,
            Err(_) => break,
        };
        let method = match request.method() {
            tiny_http::Method::Get => Some(Method::Get),
            tiny_http::Method::Post => Some(Method::Post),
            _ => None,
        };
        let mut body = Vec::new();
        let read = request
            .as_reader()
            .take(MAX_BODY + 1)
            .read_to_end(&mut body);
        let response = match (method, read) {
            (None, _) => WireResponse::error(405, "method_not_allowed", "only GET and POST are served"),
            (_, Err(e)) => WireResponse::bad_request(&format!("unreadable body: {e}")),
            (Some(_), Ok(_)) if body.len() as u64 > MAX_BODY => {
                WireResponse::error(413, "too_large", "request body exceeds limit")
            }
            (Some(method), Ok(_)) => handler.handle(&WireRequest {
                method,
                path: request.url().to_string(),
                body,
            }),
        };
        let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
            .expect("static header");
        let reply = tiny_http::Response::from_data(response.body)
            .with_status_code(response.status)
            .with_header(header);
        if let Err(e) = request.respond(reply) {
            log::debug!("client went away: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Handler for Echo {
        fn handle(&self, request: &WireRequest) -> WireResponse {
            match (request.method, request.segments().as_slice()) {
                (Method::Post, ["echo"]) => WireResponse::raw(200, request.body.clone()),
                (Method::Get, ["q"]) => {
                    WireResponse::raw(200, request.query_param("x").unwrap_or("").as_bytes().to_vec())
                }
                _ => WireResponse::not_found("no route"),
            }
        }
    }

    #[test]
    fn query_and_segments() {
        let r = WireRequest::get("/resource/abc/content?token=ff&x=1");
        assert_eq!(r.segments(), vec!["resource", "abc", "content"]);
        assert_eq!(r.query_param("token"), Some("ff"));
        assert_eq!(r.query_param("x"), Some("1"));
        assert_eq!(r.query_param("y"), None);
    }

    #[test]
    fn local_transport_records_exchanges() {
        let tap = WireTap::new();
        let t = LocalTransport::with_tap(Arc::new(Echo), tap.clone());
        let resp = t.call(WireRequest::post("/echo", b"hi".to_vec())).unwrap();
        assert_eq!(resp.body, b"hi");
        assert_eq!(tap.exchanges().len(), 1);
    }

    #[test]
    fn http_roundtrip() {
        let server = HttpServer::bind("127.0.0.1:0", Arc::new(Echo), 2).unwrap();
        let t = HttpTransport::new(server.url());
        let big = vec![b'z'; 200_000];
        let resp = t.call(WireRequest::post("/echo", big.clone())).unwrap();
        assert_eq!(resp.status, 200);
        assert_eq!(resp.body, big);
        let resp = t.call(WireRequest::get("/q?x=42")).unwrap();
        assert_eq!(resp.body, b"42");
        let resp = t.call(WireRequest::get("/nope")).unwrap();
        assert_eq!(resp.status, 404);
        assert_eq!(resp.error_body().unwrap().error, "not_found");
        server.shutdown();
    }
}
