//! Session key-derivation envelopes.
//!
//! The initiator derives a symmetric key with PBKDF2 from the concatenated
//! DID pair and a fresh random salt, then ships `{key, salt, session id, ttl}`
//! once under the responder's public key. Every later message is AES-GCM
//! only. The DID-pair password is public knowledge; secrecy of the session
//! key rests entirely on the sealed key transport and the random salt.
//!
//! The opening envelope's key transport is `sealed box || signature`, the
//! initiator's Ed25519 signature over the envelope header and the sealed box.
//! A responder configured with a resolver checks it against the sender's
//! registered key, so there is one signature verification per session.

mod channel;

pub use channel::{SecureClient, SecureService, SESSION_PATH};

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::{SharedClock, Timestamp};
use crate::codec::{base64_bytes, base64_opt, canonical_json};
use crate::crypto::{
    derive_key, open_asymmetric, open_symmetric_with_aad, random_bytes, seal_asymmetric, seal_symmetric_with_aad,
    sign, verify, CryptoError, CryptoMeter, KdfParams, KeyPair, PublicKey, Signature, SymmetricKey,
};
use crate::did::Did;
use crate::vdr::DidResolver;

pub const DEFAULT_SESSION_TTL: u64 = 600;
pub const KDF_SALT_LEN: usize = 16;
const TRANSPORT_VERSION: u8 = 1;
const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("session {0} has expired")]
    Expired(Uuid),
    #[error("unknown session {0}")]
    UnknownSession(Uuid),
    #[error("replayed counter {counter}; last accepted {last}")]
    Replay { counter: u64, last: u64 },
    #[error("envelope failed authentication")]
    Authentication,
    #[error("sender {0} is not the peer of this session")]
    SenderMismatch(Did),
    #[error("key transport rejected: {0}")]
    KeyTransport(String),
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionConfig {
    pub kdf: KdfParams,
    pub ttl: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { kdf: KdfParams::default(), ttl: DEFAULT_SESSION_TTL }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Clone, Debug)]
pub struct SessionContext {
    pub session_id: Uuid,
    pub self_did: Did,
    pub peer_did: Did,
    pub key: SymmetricKey,
    pub kdf_salt: [u8; KDF_SALT_LEN],
    pub created_at: Timestamp,
    pub ttl: u64,
    /// Counter the next outbound envelope will carry.
    pub send_counter: u64,
    /// Highest counter accepted from the peer.
    pub recv_counter: Option<u64>,
    pub role: Role,
    peer_key: Option<PublicKey>,
}

/// `utf8(self_did || peer_did)`, from the initiator's point of view.
pub fn session_password(initiator: &Did, responder: &Did) -> Vec<u8> {
    format!("{initiator}{responder}").into_bytes()
}

pub fn initiate_session(
    self_did: Did,
    peer_did: Did,
    peer_key: PublicKey,
    config: &SessionConfig,
    now: Timestamp,
) -> Result<SessionContext, SessionError> {
    let kdf_salt = random_bytes::<KDF_SALT_LEN>()?;
    let key = derive_key(
        &session_password(&self_did, &peer_did),
        &kdf_salt,
        config.kdf.key_size,
        config.kdf.iterations,
    )?;
    Ok(SessionContext {
        session_id: Uuid::new_v4(),
        self_did,
        peer_did,
        key,
        kdf_salt,
        created_at: now,
        ttl: config.ttl,
        send_counter: 0,
        recv_counter: None,
        role: Role::Initiator,
        peer_key: Some(peer_key),
    })
}

impl SessionContext {
    pub fn expires_at(&self) -> Timestamp {
        self.created_at.plus_secs(self.ttl)
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        now >= self.expires_at()
    }

    /// Seals `payload`. The first outbound envelope of an initiator also
    /// carries the key transport.
    pub fn wrap(&mut self, payload: &[u8], now: Timestamp, meter: &CryptoMeter) -> Result<SecureEnvelope, SessionError> {
        self.wrap_signed(payload, now, meter, None)
    }

    /// Like [`wrap`](Self::wrap); the opening envelope's key transport is
    /// signed with `signer` when given.
    pub fn wrap_signed(
        &mut self,
        payload: &[u8],
        now: Timestamp,
        meter: &CryptoMeter,
        signer: Option<&KeyPair>,
    ) -> Result<SecureEnvelope, SessionError> {
        if self.is_expired(now) {
            return Err(SessionError::Expired(self.session_id));
        }
        let counter = self.send_counter;
        let key_transport = if counter == 0 {
            let peer_key = self
                .peer_key
                .as_ref()
                .ok_or_else(|| SessionError::KeyTransport("no peer key for the opening envelope".into()))?;
            let mut sealed = seal_asymmetric(&self.transport_payload(), peer_key)?;
            meter.record_asym_encrypt();
            if let Some(key) = signer {
                let sig = sign(&transport_signing_bytes(self.session_id, &self.self_did, &sealed), key);
                meter.record_sign();
                sealed.extend_from_slice(&sig.to_bytes());
            }
            Some(sealed)
        } else {
            None
        };
        let aad = header_bytes(self.session_id, &self.self_did, counter);
        let body = seal_symmetric_with_aad(payload, &aad, &self.key)?;
        self.send_counter += 1;
        Ok(SecureEnvelope { session_id: self.session_id, sender_did: self.self_did, counter, body, key_transport })
    }

    /// Opens an envelope of an established session. Counter and expiry are
    /// checked before decryption; the counter only advances on success.
    pub fn open(&mut self, envelope: &SecureEnvelope, now: Timestamp) -> Result<Vec<u8>, SessionError> {
        if envelope.session_id != self.session_id {
            return Err(SessionError::UnknownSession(envelope.session_id));
        }
        if self.is_expired(now) {
            return Err(SessionError::Expired(self.session_id));
        }
        if envelope.sender_did != self.peer_did {
            return Err(SessionError::SenderMismatch(envelope.sender_did));
        }
        if let Some(last) = self.recv_counter {
            if envelope.counter <= last {
                return Err(SessionError::Replay { counter: envelope.counter, last });
            }
        }
        let aad = header_bytes(envelope.session_id, &envelope.sender_did, envelope.counter);
        let payload =
            open_symmetric_with_aad(&envelope.body, &aad, &self.key).map_err(|_| SessionError::Authentication)?;
        self.recv_counter = Some(envelope.counter);
        Ok(payload)
    }

    fn transport_payload(&self) -> Vec<u8> {
        let key = self.key.as_bytes();
        let mut out = Vec::with_capacity(50 + key.len());
        out.push(TRANSPORT_VERSION);
        out.extend_from_slice(self.session_id.as_bytes());
        out.extend_from_slice(&self.kdf_salt);
        out.extend_from_slice(&self.created_at.0.to_be_bytes());
        out.extend_from_slice(&self.ttl.to_be_bytes());
        out.push(key.len() as u8);
        out.extend_from_slice(key);
        out
    }

    /// Builds the responder side from an opened key transport.
    fn from_transport(self_did: Did, peer_did: Did, bytes: &[u8]) -> Result<Self, SessionError> {
        let bad = |m: &str| SessionError::KeyTransport(m.to_string());
        if bytes.len() < 50 || bytes[0] != TRANSPORT_VERSION {
            return Err(bad("unrecognized transport payload"));
        }
        let session_id = Uuid::from_slice(&bytes[1..17]).map_err(|_| bad("bad session id"))?;
        let mut kdf_salt = [0u8; KDF_SALT_LEN];
        kdf_salt.copy_from_slice(&bytes[17..33]);
        let created_at = Timestamp(i64::from_be_bytes(bytes[33..41].try_into().unwrap()));
        let ttl = u64::from_be_bytes(bytes[41..49].try_into().unwrap());
        let key_len = bytes[49] as usize;
        if bytes.len() != 50 + key_len {
            return Err(bad("key length mismatch"));
        }
        let key = SymmetricKey::from_bytes(&bytes[50..])?;
        Ok(SessionContext {
            session_id,
            self_did,
            peer_did,
            key,
            kdf_salt,
            created_at,
            ttl,
            // Counter 0 is reserved for the envelope carrying the transport.
            send_counter: 1,
            recv_counter: None,
            role: Role::Responder,
            peer_key: None,
        })
    }
}

fn transport_signing_bytes(session_id: Uuid, sender: &Did, sealed: &[u8]) -> Vec<u8> {
    let mut out = header_bytes(session_id, sender, 0);
    out.extend_from_slice(sealed);
    out
}

fn header_bytes(session_id: Uuid, sender: &Did, counter: u64) -> Vec<u8> {
    #[derive(Serialize)]
    struct Header<'a> {
        session_id: Uuid,
        sender_did: &'a Did,
        counter: u64,
    }
    canonical_json(&Header { session_id, sender_did: sender, counter }).expect("header serializes")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecureEnvelope {
    pub session_id: Uuid,
    pub sender_did: Did,
    pub counter: u64,
    #[serde(with = "base64_bytes")]
    pub body: Vec<u8>,
    #[serde(default, with = "base64_opt", skip_serializing_if = "Option::is_none")]
    pub key_transport: Option<Vec<u8>>,
}

impl SecureEnvelope {
    pub fn to_json(&self) -> Vec<u8> {
        canonical_json(self).expect("envelope serializes")
    }
}

pub type SessionHandle = Arc<Mutex<SessionContext>>;

/// All sessions of one party, keyed by session id.
pub struct SessionStore {
    self_did: Did,
    keypair: Arc<KeyPair>,
    config: SessionConfig,
    clock: SharedClock,
    meter: CryptoMeter,
    resolver: Option<Arc<dyn DidResolver>>,
    sessions: RwLock<HashMap<Uuid, SessionHandle>>,
}

impl SessionStore {
    pub fn new(self_did: Did, keypair: Arc<KeyPair>, clock: SharedClock) -> Self {
        Self::with_config(self_did, keypair, clock, SessionConfig::default(), CryptoMeter::new())
    }

    pub fn with_config(
        self_did: Did,
        keypair: Arc<KeyPair>,
        clock: SharedClock,
        config: SessionConfig,
        meter: CryptoMeter,
    ) -> Self {
        SessionStore { self_did, keypair, config, clock, meter, resolver: None, sessions: RwLock::new(HashMap::new()) }
    }

    /// Require opening envelopes to carry a key-transport signature that
    /// verifies under the sender's registered key.
    pub fn with_resolver(mut self, resolver: Arc<dyn DidResolver>) -> Self {
        self.resolver = Some(resolver);
        self
    }

    pub fn self_did(&self) -> Did {
        self.self_did
    }

    pub fn meter(&self) -> &CryptoMeter {
        &self.meter
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, session_id: &Uuid) -> Option<SessionHandle> {
        self.sessions.read().get(session_id).cloned()
    }

    pub fn initiate(&self, peer_did: Did, peer_key: PublicKey) -> Result<SessionHandle, SessionError> {
        let ctx = initiate_session(self.self_did, peer_did, peer_key, &self.config, self.clock.now())?;
        let id = ctx.session_id;
        let handle = Arc::new(Mutex::new(ctx));
        self.sessions.write().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn wrap(&self, session_id: &Uuid, payload: &[u8]) -> Result<SecureEnvelope, SessionError> {
        let handle = self.get(session_id).ok_or(SessionError::UnknownSession(*session_id))?;
        let mut ctx = handle.lock();
        ctx.wrap_signed(payload, self.clock.now(), &self.meter, Some(&self.keypair))
    }

    /// Accepts an inbound envelope, installing the session first when it
    /// carries a key transport for an id this store has not seen.
    pub fn unwrap(&self, envelope: &SecureEnvelope) -> Result<Vec<u8>, SessionError> {
        let now = self.clock.now();
        let handle = match (self.get(&envelope.session_id), &envelope.key_transport) {
            (Some(handle), _) => handle,
            (None, None) => return Err(SessionError::UnknownSession(envelope.session_id)),
            (None, Some(transport)) => {
                if envelope.counter != 0 {
                    return Err(SessionError::Malformed("key transport on a non-initial envelope".into()));
                }
                let sealed = self.check_transport_signature(envelope, transport)?;
                let plain = open_asymmetric(sealed, &self.keypair)
                    .map_err(|e| SessionError::KeyTransport(e.to_string()))?;
                self.meter.record_asym_decrypt();
                let ctx = SessionContext::from_transport(self.self_did, envelope.sender_did, &plain)?;
                if ctx.session_id != envelope.session_id {
                    return Err(SessionError::KeyTransport("session id does not match the envelope".into()));
                }
                let mut ctx = ctx;
                let payload = ctx.open(envelope, now)?;
                let handle = Arc::new(Mutex::new(ctx));
                let mut sessions = self.sessions.write();
                if sessions.contains_key(&envelope.session_id) {
                    return Err(SessionError::Replay { counter: 0, last: 0 });
                }
                sessions.insert(envelope.session_id, handle);
                return Ok(payload);
            }
        };
        let mut ctx = handle.lock();
        if envelope.counter == 0 && ctx.role == Role::Responder && envelope.key_transport.is_none() {
            return Err(SessionError::Malformed("opening envelope without key transport".into()));
        }
        ctx.open(envelope, now)
    }

    /// Splits `sealed || signature` and verifies the signature when a
    /// resolver is configured. Without one the trailing signature, if any,
    /// cannot be told apart from the box and is left in place.
    fn check_transport_signature<'a>(
        &self,
        envelope: &SecureEnvelope,
        transport: &'a [u8],
    ) -> Result<&'a [u8], SessionError> {
        let Some(resolver) = &self.resolver else {
            return Ok(strip_signature(transport));
        };
        let sealed = strip_signature(transport);
        if sealed.len() == transport.len() {
            return Err(SessionError::KeyTransport("missing transport signature".into()));
        }
        let sig = &transport[sealed.len()..];
        let sig = Signature::from_bytes(sig)?;
        let key = resolver
            .resolve_key(&envelope.sender_did)
            .map_err(|e| SessionError::KeyTransport(format!("sender key: {e}")))?;
        self.meter.record_verify();
        if !verify(&transport_signing_bytes(envelope.session_id, &envelope.sender_did, sealed), &sig, &key) {
            return Err(SessionError::Authentication);
        }
        Ok(sealed)
    }

    /// Drops expired sessions and returns how many were removed.
    pub fn sweep(&self) -> usize {
        let now = self.clock.now();
        let mut sessions = self.sessions.write();
        let before = sessions.len();
        sessions.retain(|_, h| !h.lock().is_expired(now));
        before - sessions.len()
    }
}

/// A sealed box is 48 bytes longer than its payload and the payload is 50
/// bytes plus a 16- or 32-byte key, so the four possible lengths are
/// distinct and tell whether a signature follows.
fn strip_signature(transport: &[u8]) -> &[u8] {
    let signed = |key: usize| 48 + 50 + key + SIGNATURE_LEN;
    if transport.len() == signed(16) || transport.len() == signed(32) {
        &transport[..transport.len() - SIGNATURE_LEN]
    } else {
        transport
    }
}
