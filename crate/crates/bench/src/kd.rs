//! Key-derivation sessions against per-message public-key wrapping.
//!
//! Two parties exchange `rounds` round trips (0.5 = a single one-way
//! message) of `payload_size` random bytes. Every message is framed into a
//! byte buffer and parsed back on the receiving side, so both modes pay the
//! same copy and framing costs.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use polaris_core::clock::system_clock;
use polaris_core::crypto::{
    generate_keypair, open_asymmetric, open_symmetric, seal_asymmetric, seal_symmetric, sign, verify, CryptoMeter,
    MeterSnapshot, PublicKey, Signature, SymmetricKey, DEFAULT_KEY_SIZE,
};
use polaris_core::did::Did;
use polaris_core::session::{SecureEnvelope, SessionConfig, SessionStore};
use polaris_core::vdr::{DidRegistrar, DidResolver, Registry};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const MAX_PAYLOAD: usize = 16 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdMode {
    /// Fresh content key per message, wrapped to the peer's public key and
    /// signed by the sender.
    PkiPerMessage,
    /// One key transport, then symmetric traffic under the derived key.
    KdSession,
}

impl KdMode {
    pub fn name(self) -> &'static str {
        match self {
            KdMode::PkiPerMessage => "pki-per-message",
            KdMode::KdSession => "kd-session",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "pki" | "pki-per-message" => Some(KdMode::PkiPerMessage),
            "kd" | "kd-session" => Some(KdMode::KdSession),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub payload_size: usize,
    pub rounds: f64,
    pub mode: KdMode,
    pub messages: usize,
    pub total_ms: f64,
    /// Milliseconds per component, summed over all messages.
    pub breakdown: BTreeMap<String, f64>,
    pub meter: MeterSnapshot,
}

impl BenchReport {
    pub fn asymmetric_ops(&self) -> u64 {
        self.meter.asymmetric_ops()
    }
}

/// One-way message count for `rounds`; rejects anything not a multiple of 0.5.
pub fn message_count(rounds: f64) -> Result<usize> {
    let halves = rounds * 2.0;
    ensure!(rounds > 0.0 && halves.fract() == 0.0 && halves.is_finite(), "rounds must be a positive multiple of 0.5");
    Ok(halves as usize)
}

#[derive(Default)]
struct Timer(BTreeMap<&'static str, Duration>);

impl Timer {
    fn time<T>(&mut self, part: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.0.entry(part).or_default() += start.elapsed();
        out
    }

    fn into_ms(self) -> BTreeMap<String, f64> {
        self.0.into_iter().map(|(k, v)| (k.to_string(), v.as_secs_f64() * 1e3)).collect()
    }
}

struct Party {
    did: Did,
    key: Arc<polaris_core::crypto::KeyPair>,
}

fn parties(registry: &Registry) -> Result<[Party; 2]> {
    let mk = |name: &str| -> Result<Party> {
        let key = generate_keypair();
        let did = registry.register_did(&key.public_key(), name)?;
        Ok(Party { did, key: Arc::new(key) })
    };
    Ok([mk("alice")?, mk("bob")?])
}

pub fn bench_kd(payload_size: usize, rounds: f64, mode: KdMode) -> Result<BenchReport> {
    if payload_size > MAX_PAYLOAD {
        bail!("payload_size {payload_size} exceeds {MAX_PAYLOAD}");
    }
    let messages = message_count(rounds)?;
    let payload: Vec<u8> = (0..payload_size).map(|i| (i.wrapping_mul(31) ^ (i >> 7)) as u8).collect();
    let registry = Arc::new(Registry::in_memory());
    let [a, b] = parties(&registry)?;
    let meter = CryptoMeter::new();
    let mut timer = Timer::default();

    let started = Instant::now();
    match mode {
        KdMode::KdSession => kd_exchange(&registry, &a, &b, &payload, messages, &meter, &mut timer)?,
        KdMode::PkiPerMessage => pki_exchange(&registry, &a, &b, &payload, messages, &meter, &mut timer)?,
    }
    let total = started.elapsed();

    Ok(BenchReport {
        scenario: format!("{} x{} {}", payload_size, rounds, mode.name()),
        payload_size,
        rounds,
        mode,
        messages,
        total_ms: total.as_secs_f64() * 1e3,
        breakdown: timer.into_ms(),
        meter: meter.snapshot(),
    })
}

fn kd_exchange(
    registry: &Arc<Registry>,
    a: &Party,
    b: &Party,
    payload: &[u8],
    messages: usize,
    meter: &CryptoMeter,
    timer: &mut Timer,
) -> Result<()> {
    let clock = system_clock();
    let resolver: Arc<dyn DidResolver> = registry.clone();
    let store = |p: &Party| {
        SessionStore::with_config(p.did, p.key.clone(), clock.clone(), SessionConfig::default(), meter.clone())
            .with_resolver(resolver.clone())
    };
    let (sa, sb) = (store(a), store(b));
    // The initiator looks up the peer key once, as a cached resolution.
    let b_key = timer.time("resolve", || registry.resolve_key(&b.did))?;
    let handle = timer.time("session_setup", || sa.initiate(b.did, b_key))?;
    let sid = handle.lock().session_id;

    for i in 0..messages {
        let (from, to) = if i % 2 == 0 { (&sa, &sb) } else { (&sb, &sa) };
        let env = timer.time("wrap", || from.wrap(&sid, payload))?;
        let frame = timer.time("framing", || encode_envelope(&env));
        let env = timer.time("framing", || decode_envelope(&frame))?;
        let out = timer.time("unwrap", || to.unwrap(&env))?;
        ensure!(out == payload, "payload corrupted in transit");
    }
    Ok(())
}

fn pki_exchange(
    registry: &Arc<Registry>,
    a: &Party,
    b: &Party,
    payload: &[u8],
    messages: usize,
    meter: &CryptoMeter,
    timer: &mut Timer,
) -> Result<()> {
    // Each side resolves the other once and caches the key.
    let keys: [PublicKey; 2] = timer.time("resolve", || -> Result<_> {
        Ok([registry.resolve_key(&a.did)?, registry.resolve_key(&b.did)?])
    })?;
    let parties = [a, b];
    for i in 0..messages {
        let (s, r) = if i % 2 == 0 { (0, 1) } else { (1, 0) };
        let (sender, receiver) = (parties[s], parties[r]);

        let content_key = SymmetricKey::random(DEFAULT_KEY_SIZE)?;
        let body = timer.time("sym_encrypt", || seal_symmetric(payload, &content_key))?;
        let wrapped = timer.time("asym_encrypt", || seal_asymmetric(content_key.as_bytes(), &keys[r]))?;
        meter.record_asym_encrypt();
        let sig = timer.time("sign", || sign(&pki_signing_bytes(&wrapped, &body), &sender.key));
        meter.record_sign();
        let frame = timer.time("framing", || encode_pki(&sender.did, &wrapped, &body, &sig));

        let (from, wrapped, body, sig) = timer.time("framing", || decode_pki(&frame))?;
        ensure!(from == sender.did, "sender mismatch");
        let ok = timer.time("verify", || verify(&pki_signing_bytes(&wrapped, &body), &sig, &keys[s]));
        meter.record_verify();
        ensure!(ok, "message signature rejected");
        let raw = timer.time("asym_decrypt", || open_asymmetric(&wrapped, &receiver.key))?;
        meter.record_asym_decrypt();
        let content_key = SymmetricKey::from_bytes(&raw)?;
        let out = timer.time("sym_decrypt", || open_symmetric(&body, &content_key))?;
        ensure!(out == payload, "payload corrupted in transit");
    }
    Ok(())
}

fn pki_signing_bytes(wrapped: &[u8], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + wrapped.len() + body.len());
    out.extend_from_slice(&(wrapped.len() as u64).to_be_bytes());
    out.extend_from_slice(wrapped);
    out.extend_from_slice(body);
    out
}

// Binary frames: length-prefixed fields, big-endian integers.

fn put(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.0.len() >= n, "truncated frame");
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn field(&mut self) -> Result<&'a [u8]> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(len)
    }

    fn did(&mut self) -> Result<Did> {
        std::str::from_utf8(self.field()?)?.parse().context("sender did")
    }
}

pub fn encode_envelope(env: &SecureEnvelope) -> Vec<u8> {
    let mut out = Vec::with_capacity(env.body.len() + 128);
    out.extend_from_slice(env.session_id.as_bytes());
    out.extend_from_slice(&env.counter.to_be_bytes());
    put(&mut out, env.sender_did.to_string().as_bytes());
    match &env.key_transport {
        Some(kt) => {
            out.push(1);
            put(&mut out, kt);
        }
        None => out.push(0),
    }
    put(&mut out, &env.body);
    out
}

pub fn decode_envelope(frame: &[u8]) -> Result<SecureEnvelope> {
    let mut r = Reader(frame);
    let session_id = Uuid::from_slice(r.take(16)?)?;
    let counter = u64::from_be_bytes(r.take(8)?.try_into().unwrap());
    let sender_did = r.did()?;
    let key_transport = match r.take(1)?[0] {
        0 => None,
        1 => Some(r.field()?.to_vec()),
        t => bail!("bad transport flag {t}"),
    };
    let body = r.field()?.to_vec();
    ensure!(r.0.is_empty(), "trailing bytes in frame");
    Ok(SecureEnvelope { session_id, sender_did, counter, body, key_transport })
}

fn encode_pki(from: &Did, wrapped: &[u8], body: &[u8], sig: &Signature) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + wrapped.len() + 128);
    put(&mut out, from.to_string().as_bytes());
    put(&mut out, wrapped);
    out.extend_from_slice(&sig.to_bytes());
    put(&mut out, body);
    out
}

fn decode_pki(frame: &[u8]) -> Result<(Did, Vec<u8>, Vec<u8>, Signature)> {
    let mut r = Reader(frame);
    let from = r.did()?;
    let wrapped = r.field()?.to_vec();
    let sig = Signature::from_bytes(r.take(64)?)?;
    let body = r.field()?.to_vec();
    ensure!(r.0.is_empty(), "trailing bytes in frame");
    Ok((from, wrapped, body, sig))
}
