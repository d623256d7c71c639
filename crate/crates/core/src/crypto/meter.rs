use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Counts public-key operations. Clones share counters.
#[derive(Clone, Debug, Default)]
pub struct CryptoMeter(Arc<Counters>);

#[derive(Debug, Default)]
struct Counters {
    asym_encrypt: AtomicU64,
    asym_decrypt: AtomicU64,
    sign: AtomicU64,
    verify: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterSnapshot {
    pub asym_encrypt: u64,
    pub asym_decrypt: u64,
    pub sign: u64,
    pub verify: u64,
}

impl MeterSnapshot {
    /// Encryptions plus decryptions under public-key cryptography.
    pub fn asymmetric_ops(&self) -> u64 {
        self.asym_encrypt + self.asym_decrypt
    }
}

impl CryptoMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_asym_encrypt(&self) {
        self.0.asym_encrypt.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_asym_decrypt(&self) {
        self.0.asym_decrypt.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_sign(&self) {
        self.0.sign.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_verify(&self) {
        self.0.verify.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MeterSnapshot {
        MeterSnapshot {
            asym_encrypt: self.0.asym_encrypt.load(Ordering::Relaxed),
            asym_decrypt: self.0.asym_decrypt.load(Ordering::Relaxed),
            sign: self.0.sign.load(Ordering::Relaxed),
            verify: self.0.verify.load(Ordering::Relaxed),
        }
    }
}
