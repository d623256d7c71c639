//! Credential issuance: challenge–response proof of key possession, salted
//! per-attribute commitments and issuer-signed credentials.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::{SharedClock, Timestamp};
use crate::codec::{canonical_json, hex_array};
use crate::crypto::{
    commit_attribute, random_bytes, sign, verify, Commitment, CryptoError, KeyPair, Salt, Signature,
};
use crate::did::Did;
use crate::vdr::{DidResolver, VdrError};

pub const CHALLENGE_NONCE_LEN: usize = 16;
pub const DEFAULT_CHALLENGE_TTL_SECS: u64 = 120;
pub const DEFAULT_CREDENTIAL_VALIDITY_SECS: u64 = 365 * 24 * 3600;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("attribute name must be nonempty")]
    EmptyAttributeName,
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("incomplete metadata: {0}")]
    IncompleteMetadata(String),
    #[error("holder has not proven possession of its key")]
    NotAuthenticated,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Registry(#[from] VdrError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Challenge {
    #[serde(with = "hex_array")]
    pub nonce: [u8; CHALLENGE_NONCE_LEN],
    pub issued_at: Timestamp,
    pub holder_did: Did,
    /// Lifetime in seconds.
    pub ttl: u64,
}

impl Challenge {
    pub fn expires_at(&self) -> Timestamp {
        self.issued_at.plus_secs(self.ttl)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChallengeResponse {
    pub challenge: Challenge,
    pub signature: Signature,
}

/// Holder side: sign the canonical challenge with the DID's private key.
pub fn answer_challenge(challenge: &Challenge, holder_key: &KeyPair) -> ChallengeResponse {
    let bytes = canonical_json(challenge).expect("challenge serializes");
    ChallengeResponse {
        challenge: challenge.clone(),
        signature: sign(&bytes, holder_key),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeClaim {
    pub name: String,
    pub value: String,
}

impl AttributeClaim {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        AttributeClaim { name: name.into(), value: value.into() }
    }
}

/// Attribute name → commitment digest, indexed for direct lookup.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HashedClaims(pub BTreeMap<String, Commitment>);

impl HashedClaims {
    pub fn get(&self, name: &str) -> Option<&Commitment> {
        self.0.get(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

/// Attribute name → salt. Stays in the holder's wallet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SaltMap(pub BTreeMap<String, Salt>);

impl SaltMap {
    pub fn get(&self, name: &str) -> Option<&Salt> {
        self.0.get(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn restricted_to<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> SaltMap {
        SaltMap(
            names
                .into_iter()
                .filter_map(|n| self.0.get(n).map(|s| (n.to_string(), *s)))
                .collect(),
        )
    }
}

/// One fresh salt per attribute and the commitment map over them.
pub fn build_hclaims(claims: &[AttributeClaim]) -> Result<(HashedClaims, SaltMap), CredentialError> {
    let mut hashed = BTreeMap::new();
    let mut salts = BTreeMap::new();
    for claim in claims {
        if claim.name.is_empty() {
            return Err(CredentialError::EmptyAttributeName);
        }
        if salts.contains_key(&claim.name) {
            return Err(CredentialError::DuplicateAttribute(claim.name.clone()));
        }
        let salt = Salt::random()?;
        hashed.insert(claim.name.clone(), commit_attribute(&claim.name, &claim.value, &salt)?);
        salts.insert(claim.name.clone(), salt);
    }
    Ok((HashedClaims(hashed), SaltMap(salts)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialMetadata {
    pub credential_id: Uuid,
    pub issuer_did: Did,
    pub holder_did: Did,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub schema: String,
}

impl CredentialMetadata {
    fn validate(&self) -> Result<(), CredentialError> {
        if self.schema.is_empty() {
            return Err(CredentialError::IncompleteMetadata("schema is empty".into()));
        }
        if self.expires_at <= self.issued_at {
            return Err(CredentialError::IncompleteMetadata(
                "expires_at must be later than issued_at".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiableCredential {
    pub metadata: CredentialMetadata,
    pub h_claims: HashedClaims,
    pub proof: Signature,
}

impl VerifiableCredential {
    /// `canonical(metadata) ‖ canonical(h_claims)`, the bytes under `proof`.
    pub fn signing_bytes(metadata: &CredentialMetadata, h_claims: &HashedClaims) -> Vec<u8> {
        let mut bytes = canonical_json(metadata).expect("metadata serializes");
        bytes.extend(canonical_json(h_claims).expect("claims serialize"));
        bytes
    }

    pub fn id(&self) -> Uuid {
        self.metadata.credential_id
    }

    pub fn issuer(&self) -> &Did {
        &self.metadata.issuer_did
    }
}

pub fn issue_credential(
    metadata: CredentialMetadata,
    h_claims: HashedClaims,
    issuer_key: &KeyPair,
) -> Result<VerifiableCredential, CredentialError> {
    metadata.validate()?;
    let proof = sign(&VerifiableCredential::signing_bytes(&metadata, &h_claims), issuer_key);
    Ok(VerifiableCredential { metadata, h_claims, proof })
}

/// Why a credential did or did not check out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredentialStatus {
    Valid,
    IssuerUnknown,
    BadSignature,
    Expired,
    NotYetValid,
}

/// Registry transport failures surface as `Err`; everything else is a status.
pub fn check_credential(
    vc: &VerifiableCredential,
    resolver: &dyn DidResolver,
    now: Timestamp,
) -> Result<CredentialStatus, VdrError> {
    let key = match resolver.resolve_key(&vc.metadata.issuer_did) {
        Ok(k) => k,
        Err(VdrError::NotFound(_)) => return Ok(CredentialStatus::IssuerUnknown),
        Err(e) => return Err(e),
    };
    let bytes = VerifiableCredential::signing_bytes(&vc.metadata, &vc.h_claims);
    if !verify(&bytes, &vc.proof, &key) {
        return Ok(CredentialStatus::BadSignature);
    }
    if now < vc.metadata.issued_at {
        return Ok(CredentialStatus::NotYetValid);
    }
    if now >= vc.metadata.expires_at {
        return Ok(CredentialStatus::Expired);
    }
    Ok(CredentialStatus::Valid)
}

pub fn verify_credential(
    vc: &VerifiableCredential,
    resolver: &dyn DidResolver,
    now: Timestamp,
) -> Result<bool, VdrError> {
    check_credential(vc, resolver, now).map(|s| s == CredentialStatus::Valid)
}

/// What the issuer hands back: the signed credential plus the plaintext
/// claims and salts the holder needs for later disclosure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedCredential {
    pub vc: VerifiableCredential,
    pub claims: Vec<AttributeClaim>,
    pub salts: SaltMap,
}

#[derive(Clone, Debug)]
pub struct IssuerConfig {
    pub challenge_ttl_secs: u64,
    pub validity_secs: u64,
    pub schema: String,
}

impl Default for IssuerConfig {
    fn default() -> Self {
        IssuerConfig {
            challenge_ttl_secs: DEFAULT_CHALLENGE_TTL_SECS,
            validity_secs: DEFAULT_CREDENTIAL_VALIDITY_SECS,
            schema: "polaris:identity:v1".into(),
        }
    }
}

/// Issuer role. Pending challenges are shared state with atomic
/// check-and-consume; salts are not retained after issuance.
pub struct Issuer {
    did: Did,
    key: KeyPair,
    resolver: Arc<dyn DidResolver>,
    clock: SharedClock,
    config: IssuerConfig,
    pending: Mutex<HashMap<[u8; CHALLENGE_NONCE_LEN], Challenge>>,
}

impl Issuer {
    pub fn new(
        did: Did,
        key: KeyPair,
        resolver: Arc<dyn DidResolver>,
        clock: SharedClock,
        config: IssuerConfig,
    ) -> Self {
        Issuer { did, key, resolver, clock, config, pending: Mutex::new(HashMap::new()) }
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn create_challenge(&self, holder_did: Did) -> Result<Challenge, CredentialError> {
        let challenge = Challenge {
            nonce: random_bytes()?,
            issued_at: self.clock.now(),
            holder_did,
            ttl: self.config.challenge_ttl_secs,
        };
        self.pending.lock().insert(challenge.nonce, challenge.clone());
        Ok(challenge)
    }

    pub fn is_pending(&self, nonce: &[u8; CHALLENGE_NONCE_LEN]) -> bool {
        let now = self.clock.now();
        self.pending
            .lock()
            .get(nonce)
            .is_some_and(|c| now < c.expires_at())
    }

    pub fn pending_count(&self) -> usize {
        self.pending.lock().len()
    }

    /// Drops expired challenges.
    pub fn sweep(&self) {
        let now = self.clock.now();
        self.pending.lock().retain(|_, c| now < c.expires_at());
    }

    /// True iff the nonce is pending and unexpired and the signature verifies
    /// under the holder's registered key. Consumes the nonce on success.
    pub fn verify_challenge_response(&self, response: &ChallengeResponse) -> Result<bool, VdrError> {
        let challenge = &response.challenge;
        let now = self.clock.now();
        {
            let mut pending = self.pending.lock();
            match pending.get(&challenge.nonce) {
                Some(stored) if stored == challenge => {
                    if now >= stored.expires_at() {
                        pending.remove(&challenge.nonce);
                        return Ok(false);
                    }
                }
                _ => return Ok(false),
            }
        }
        let key = match self.resolver.resolve_key(&challenge.holder_did) {
            Ok(k) => k,
            Err(VdrError::NotFound(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        let bytes = canonical_json(challenge).expect("challenge serializes");
        if !verify(&bytes, &response.signature, &key) {
            return Ok(false);
        }
        // Only one concurrent verifier may win the nonce.
        Ok(self.pending.lock().remove(&challenge.nonce).is_some())
    }

    /// Verifies the response, then signs a credential over fresh commitments.
    pub fn issue(
        &self,
        response: &ChallengeResponse,
        claims: Vec<AttributeClaim>,
    ) -> Result<IssuedCredential, CredentialError> {
        if !self.verify_challenge_response(response)? {
            return Err(CredentialError::NotAuthenticated);
        }
        let (h_claims, salts) = build_hclaims(&claims)?;
        let issued_at = self.clock.now();
        let metadata = CredentialMetadata {
            credential_id: Uuid::new_v4(),
            issuer_did: self.did,
            holder_did: response.challenge.holder_did,
            issued_at,
            expires_at: issued_at.plus_secs(self.config.validity_secs),
            schema: self.config.schema.clone(),
        };
        let vc = issue_credential(metadata, h_claims, &self.key)?;
        Ok(IssuedCredential { vc, claims, salts })
    }
}
