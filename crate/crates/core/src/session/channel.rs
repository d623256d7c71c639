//! Request/response tunnelling through session envelopes.
//!
//! A [`SecureClient`] is itself a [`Transport`], so any wire client can be
//! layered over it unchanged. Each inner request travels as one envelope to
//! `POST /session/message` and the reply comes back as an envelope of the
//! same session.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{SecureEnvelope, SessionError, SessionHandle, SessionStore};
use crate::codec::{base64_bytes, canonical_json, from_json};
use crate::crypto::PublicKey;
use crate::did::Did;
use crate::wire::{Handler, Method, Transport, TransportError, WireRequest, WireResponse};

pub const SESSION_PATH: &str = "/session/message";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InnerRequest {
    method: Method,
    path: String,
    #[serde(with = "base64_bytes")]
    body: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InnerResponse {
    status: u16,
    #[serde(with = "base64_bytes")]
    body: Vec<u8>,
}

fn error_response(e: &SessionError) -> WireResponse {
    let (status, code) = match e {
        SessionError::Expired(_) => (401, "session_expired"),
        SessionError::UnknownSession(_) => (401, "unknown_session"),
        SessionError::Replay { .. } => (409, "replay"),
        SessionError::Malformed(_) => (400, "invalid_input"),
        _ => (401, "authentication"),
    };
    WireResponse::error(status, code, &e.to_string())
}

/// Serves an inner handler behind the session layer.
pub struct SecureService {
    store: Arc<SessionStore>,
    inner: Arc<dyn Handler>,
    allow_plain: bool,
}

impl SecureService {
    pub fn new(store: Arc<SessionStore>, inner: Arc<dyn Handler>) -> Self {
        SecureService { store, inner, allow_plain: false }
    }

    /// Also answer un-enveloped requests directly. Off by default.
    pub fn allow_plain(mut self, allow: bool) -> Self {
        self.allow_plain = allow;
        self
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }

    fn handle_envelope(&self, body: &[u8]) -> WireResponse {
        let envelope: SecureEnvelope = match from_json(body) {
            Ok(e) => e,
            Err(e) => return WireResponse::bad_request(&e.to_string()),
        };
        let plain = match self.store.unwrap(&envelope) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("rejected envelope for session {}: {e}", envelope.session_id);
                return error_response(&e);
            }
        };
        let inner: InnerRequest = match from_json(&plain) {
            Ok(r) => r,
            Err(e) => return WireResponse::bad_request(&e.to_string()),
        };
        let response = self.inner.handle(&WireRequest { method: inner.method, path: inner.path, body: inner.body });
        let reply = InnerResponse { status: response.status, body: response.body };
        let bytes = canonical_json(&reply).expect("response serializes");
        match self.store.wrap(&envelope.session_id, &bytes) {
            Ok(env) => WireResponse::raw(200, env.to_json()),
            Err(e) => error_response(&e),
        }
    }
}

impl Handler for SecureService {
    fn handle(&self, request: &WireRequest) -> WireResponse {
        if request.method == Method::Post && request.path == SESSION_PATH {
            self.handle_envelope(&request.body)
        } else if self.allow_plain {
            self.inner.handle(request)
        } else {
            WireResponse::error(403, "session_required", "requests must travel inside a session envelope")
        }
    }
}

/// Client end of a session with one peer. Starts a new session when the
/// current one expires.
pub struct SecureClient<T: Transport> {
    transport: T,
    store: Arc<SessionStore>,
    peer_did: Did,
    peer_key: PublicKey,
    current: Mutex<Option<SessionHandle>>,
}

impl<T: Transport> SecureClient<T> {
    pub fn new(transport: T, store: Arc<SessionStore>, peer_did: Did, peer_key: PublicKey) -> Self {
        SecureClient { transport, store, peer_did, peer_key, current: Mutex::new(None) }
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }

    pub fn session_id(&self) -> Option<uuid::Uuid> {
        self.current.lock().as_ref().map(|h| h.lock().session_id)
    }

    fn round_trip(&self, current: &mut Option<SessionHandle>, request: &WireRequest) -> Result<WireResponse, TransportError> {
        let now = self.store.now();
        let stale = current.as_ref().is_none_or(|h| h.lock().is_expired(now));
        if stale {
            let handle = self.store.initiate(self.peer_did, self.peer_key).map_err(to_transport)?;
            *current = Some(handle);
        }
        let handle = current.as_ref().expect("session present");
        let inner = InnerRequest { method: request.method, path: request.path.clone(), body: request.body.clone() };
        let bytes = canonical_json(&inner).expect("request serializes");
        let session_id = handle.lock().session_id;
        let envelope = self.store.wrap(&session_id, &bytes).map_err(to_transport)?;
        let response = self.transport.call(WireRequest::post(SESSION_PATH, envelope.to_json()))?;
        if !response.is_success() {
            let detail = response.error_body().map(|b| format!("{}: {}", b.error, b.message));
            return Err(TransportError(format!(
                "session layer returned {}: {}",
                response.status,
                detail.unwrap_or_default()
            )));
        }
        let reply: SecureEnvelope = from_json(&response.body).map_err(|e| TransportError(e.to_string()))?;
        let plain = self.store.unwrap(&reply).map_err(to_transport)?;
        let inner: InnerResponse = from_json(&plain).map_err(|e| TransportError(e.to_string()))?;
        Ok(WireResponse::raw(inner.status, inner.body))
    }
}

fn to_transport(e: SessionError) -> TransportError {
    TransportError(format!("session: {e}"))
}

impl<T: Transport> Transport for SecureClient<T> {
    fn call(&self, request: WireRequest) -> Result<WireResponse, TransportError> {
        let mut current = self.current.lock();
        let result = self.round_trip(&mut current, &request);
        if result.is_err() {
            // A failed exchange leaves counters out of step; start fresh next time.
            *current = None;
        }
        result
    }
}
