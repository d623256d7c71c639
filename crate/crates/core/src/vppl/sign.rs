use super::model::{Policy, PolicySignature};
use super::parse::policy_signing_bytes;
use crate::crypto::{sign, verify, KeyPair};
use crate::did::Did;
use crate::vdr::{DidResolver, VdrError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignatureStatus {
    Valid,
    Invalid,
    Unsigned,
}

/// Signs the canonical form without the signature field. Any previous
/// signature is replaced.
pub fn sign_policy(policy: &Policy, signer_did: Did, key: &KeyPair) -> Policy {
    let value = sign(&policy_signing_bytes(policy), key);
    Policy { signature: Some(PolicySignature { signer_did, value }), ..policy.clone() }
}

/// Resolution failure surfaces as an error, never as `Invalid`.
pub fn verify_policy_signature(policy: &Policy, resolver: &dyn DidResolver) -> Result<SignatureStatus, VdrError> {
    let Some(sig) = &policy.signature else {
        return Ok(SignatureStatus::Unsigned);
    };
    let key = resolver.resolve_key(&sig.signer_did)?;
    Ok(if verify(&policy_signing_bytes(policy), &sig.value, &key) {
        SignatureStatus::Valid
    } else {
        SignatureStatus::Invalid
    })
}
