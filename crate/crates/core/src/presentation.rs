//! Verifiable presentations: selective disclosure across credentials on the
//! holder side, three-step verification on the verifier side.
//!
//! Verification order matters. The holder signature is checked first and
//! its failure rejects everything; then each embedded credential against its
//! issuer's registered key; then each disclosed attribute against the
//! commitment stored under its name.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::Timestamp;
use crate::codec::{canonical_json, hex_array};
use crate::credential::{
    check_credential, AttributeClaim, CredentialStatus, SaltMap, VerifiableCredential,
};
use crate::crypto::{commit_attribute, random_bytes, sign, verify, CryptoError, KeyPair};
use crate::did::Did;
use crate::vdr::{DidResolver, VdrError};
use crate::wallet::Wallet;

pub const PRESENTATION_NONCE_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisclosureSelection {
    pub credential_id: Uuid,
    pub attribute_names: BTreeSet<String>,
}

impl DisclosureSelection {
    pub fn new<I, S>(credential_id: Uuid, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DisclosureSelection {
            credential_id,
            attribute_names: names.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresentationEntry {
    pub vc: VerifiableCredential,
    pub disclosed: Vec<AttributeClaim>,
    pub salts: SaltMap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiablePresentation {
    pub entries: Vec<PresentationEntry>,
    pub holder_did: Did,
    pub created_at: Timestamp,
    /// The verifier this presentation is meant for.
    pub audience: Did,
    #[serde(with = "hex_array")]
    pub nonce: [u8; PRESENTATION_NONCE_LEN],
}

/// Wire form: the presentation fields plus `holder_signature` at top level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPresentation {
    #[serde(flatten)]
    pub vp: VerifiablePresentation,
    pub holder_signature: crate::crypto::Signature,
}

impl SignedPresentation {
    pub fn signing_bytes(vp: &VerifiablePresentation) -> Vec<u8> {
        canonical_json(vp).expect("presentation serializes")
    }

    pub fn to_json(&self) -> Vec<u8> {
        canonical_json(self).expect("presentation serializes")
    }
}

/// An attribute that survived all three verification steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeTriple {
    pub issuer_did: Did,
    pub name: String,
    pub value: String,
}

impl AttributeTriple {
    pub fn new(issuer_did: Did, name: impl Into<String>, value: impl Into<String>) -> Self {
        AttributeTriple { issuer_did, name: name.into(), value: value.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiedAttributes {
    pub triples: Vec<AttributeTriple>,
}

impl std::ops::Deref for VerifiedAttributes {
    type Target = [AttributeTriple];

    fn deref(&self) -> &Self::Target {
        &self.triples
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PresentationError {
    #[error("credential {0} is not in the wallet")]
    UnknownCredential(Uuid),
    #[error("attribute {name:?} is not part of credential {credential_id}")]
    UnknownAttribute { credential_id: Uuid, name: String },
    #[error("holder {0} is not registered")]
    HolderUnknown(Did),
    #[error("holder signature does not verify")]
    HolderSignature,
    #[error("entry {entry}: credential {credential_id} failed: {status:?}")]
    Credential { entry: usize, credential_id: Uuid, status: CredentialStatus },
    #[error("entry {entry}: credential was issued to {subject}, not the presenting holder")]
    HolderMismatch { entry: usize, subject: Did },
    #[error("entry {entry}: malformed disclosure: {reason}")]
    MalformedDisclosure { entry: usize, reason: String },
    #[error("entry {entry}: no commitment for disclosed attribute {name:?}")]
    MissingCommitment { entry: usize, name: String },
    #[error("entry {entry}: commitment mismatch for {name:?}")]
    CommitmentMismatch { entry: usize, name: String },
    #[error(transparent)]
    Registry(#[from] VdrError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl PresentationError {
    /// Which verification step produced the error, if any.
    pub fn step(&self) -> Option<u8> {
        use PresentationError::*;
        match self {
            HolderUnknown(_) | HolderSignature => Some(1),
            Credential { .. } | HolderMismatch { .. } => Some(2),
            MalformedDisclosure { .. } | MissingCommitment { .. } | CommitmentMismatch { .. } => Some(3),
            _ => None,
        }
    }
}

/// Builds and signs a presentation carrying only the selected plaintext
/// claims and their salts; every other attribute stays a digest.
pub fn build_presentation(
    wallet: &Wallet,
    selections: &[DisclosureSelection],
    audience: Did,
    holder_key: &KeyPair,
    now: Timestamp,
) -> Result<SignedPresentation, PresentationError> {
    let mut entries = Vec::with_capacity(selections.len());
    for sel in selections {
        let entry = wallet
            .get(&sel.credential_id)
            .ok_or(PresentationError::UnknownCredential(sel.credential_id))?;
        let mut disclosed = Vec::with_capacity(sel.attribute_names.len());
        for name in &sel.attribute_names {
            let known = entry.vc.h_claims.get(name).is_some() && entry.salts.get(name).is_some();
            let value = entry.claims.get(name).filter(|_| known).ok_or_else(|| {
                PresentationError::UnknownAttribute {
                    credential_id: sel.credential_id,
                    name: name.clone(),
                }
            })?;
            disclosed.push(AttributeClaim::new(name.clone(), value.clone()));
        }
        let salts = entry.salts.restricted_to(sel.attribute_names.iter().map(String::as_str));
        entries.push(PresentationEntry { vc: entry.vc.clone(), disclosed, salts });
    }
    let vp = VerifiablePresentation {
        entries,
        holder_did: *wallet.holder_did(),
        created_at: now,
        audience,
        nonce: random_bytes()?,
    };
    Ok(sign_presentation(vp, holder_key))
}

pub fn sign_presentation(vp: VerifiablePresentation, holder_key: &KeyPair) -> SignedPresentation {
    let holder_signature = sign(&SignedPresentation::signing_bytes(&vp), holder_key);
    SignedPresentation { vp, holder_signature }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VerifyMode {
    /// Any credential or attribute failure rejects the whole presentation.
    #[default]
    Strict,
    /// Failed entries and attributes are dropped and reported; the holder
    /// signature must still verify.
    Permissive,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PresentationReport {
    pub attributes: VerifiedAttributes,
    pub rejected: Vec<PresentationError>,
    /// Commitment-map lookups performed; one per disclosed attribute.
    pub commitment_lookups: usize,
}

/// Strict three-step verification.
pub fn verify_presentation(
    msg: &SignedPresentation,
    resolver: &dyn DidResolver,
    now: Timestamp,
) -> Result<VerifiedAttributes, PresentationError> {
    verify_presentation_with(msg, resolver, now, VerifyMode::Strict).map(|r| r.attributes)
}

pub fn verify_presentation_with(
    msg: &SignedPresentation,
    resolver: &dyn DidResolver,
    now: Timestamp,
    mode: VerifyMode,
) -> Result<PresentationReport, PresentationError> {
    let vp = &msg.vp;

    // step 1: holder authentication
    let holder_key = match resolver.resolve_key(&vp.holder_did) {
        Ok(k) => k,
        Err(VdrError::NotFound(_)) => return Err(PresentationError::HolderUnknown(vp.holder_did)),
        Err(e) => return Err(e.into()),
    };
    if !verify(&SignedPresentation::signing_bytes(vp), &msg.holder_signature, &holder_key) {
        return Err(PresentationError::HolderSignature);
    }

    let mut report = PresentationReport::default();
    let fail = |report: &mut PresentationReport, err: PresentationError| match mode {
        VerifyMode::Strict => Err(err),
        VerifyMode::Permissive => {
            report.rejected.push(err);
            Ok(())
        }
    };

    for (index, entry) in vp.entries.iter().enumerate() {
        // step 2: issuer binding
        let status = check_credential(&entry.vc, resolver, now)?;
        if status != CredentialStatus::Valid {
            fail(&mut report, PresentationError::Credential {
                entry: index,
                credential_id: entry.vc.id(),
                status,
            })?;
            continue;
        }
        if entry.vc.metadata.holder_did != vp.holder_did {
            fail(&mut report, PresentationError::HolderMismatch {
                entry: index,
                subject: entry.vc.metadata.holder_did,
            })?;
            continue;
        }
        if let Err(reason) = disclosure_shape(entry) {
            fail(&mut report, PresentationError::MalformedDisclosure { entry: index, reason })?;
            continue;
        }

        // step 3: attribute-level commitment checks
        let mut accepted = Vec::with_capacity(entry.disclosed.len());
        let mut entry_ok = true;
        for claim in &entry.disclosed {
            report.commitment_lookups += 1;
            let Some(expected) = entry.vc.h_claims.get(&claim.name) else {
                entry_ok = false;
                fail(&mut report, PresentationError::MissingCommitment {
                    entry: index,
                    name: claim.name.clone(),
                })?;
                continue;
            };
            let salt = entry.salts.get(&claim.name).expect("shape checked");
            let recomputed = commit_attribute(&claim.name, &claim.value, salt)?;
            if recomputed != *expected {
                entry_ok = false;
                fail(&mut report, PresentationError::CommitmentMismatch {
                    entry: index,
                    name: claim.name.clone(),
                })?;
                continue;
            }
            accepted.push(AttributeTriple {
                issuer_did: entry.vc.metadata.issuer_did,
                name: claim.name.clone(),
                value: claim.value.clone(),
            });
        }
        debug_assert!(entry_ok || mode == VerifyMode::Permissive);
        report.attributes.triples.extend(accepted);
    }
    Ok(report)
}

/// Disclosed names must be unique and match the salt keys exactly.
fn disclosure_shape(entry: &PresentationEntry) -> Result<(), String> {
    let mut names = HashSet::with_capacity(entry.disclosed.len());
    for claim in &entry.disclosed {
        if !names.insert(claim.name.as_str()) {
            return Err(format!("attribute {:?} disclosed twice", claim.name));
        }
    }
    if names.len() != entry.salts.len() || !entry.salts.0.keys().all(|k| names.contains(k.as_str())) {
        return Err("disclosed names and salt keys differ".into());
    }
    Ok(())
}

/// Verifies many presentations; fans out over rayon with the `parallel` feature.
pub fn verify_batch(
    msgs: &[SignedPresentation],
    resolver: &dyn DidResolver,
    now: Timestamp,
) -> Vec<Result<VerifiedAttributes, PresentationError>> {
    crate::par::map(msgs, |m| verify_presentation(m, resolver, now))
}

pub fn verify_batch_sequential(
    msgs: &[SignedPresentation],
    resolver: &dyn DidResolver,
    now: Timestamp,
) -> Vec<Result<VerifiedAttributes, PresentationError>> {
    msgs.iter().map(|m| verify_presentation(m, resolver, now)).collect()
}
