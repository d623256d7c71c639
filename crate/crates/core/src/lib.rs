//! Cross-domain access control built from decentralized identifiers,
//! selectively disclosable credentials, a verifiable presentation policy
//! language and per-session key-derivation envelopes.

pub mod access;
pub mod clock;
pub mod codec;
pub mod credential;
pub mod crypto;
pub mod did;
pub mod par;
pub mod presentation;
pub mod session;
pub mod vdr;
pub mod vppl;
pub mod wallet;
pub mod wire;
