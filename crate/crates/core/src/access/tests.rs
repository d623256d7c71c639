use std::sync::Arc;

use proptest::prelude::*;
use uuid::Uuid;

use super::*;
use crate::clock::{Clock, ManualClock};
use crate::credential::{answer_challenge, AttributeClaim, Issuer, IssuerConfig};
use crate::crypto::{commit_attribute, generate_keypair, KeyPair};
use crate::presentation::{build_presentation, sign_presentation, DisclosureSelection};
use crate::session::{SecureClient, SecureService, SessionStore, SESSION_PATH};
use crate::vdr::{DidRegistrar, Registry};
use crate::vppl::*;
use crate::wallet::Wallet;
use crate::wire::{Handler, LocalTransport, WireTap};

struct World {
    clock: ManualClock,
    registry: Arc<Registry>,
    gov: Issuer,
    other: Issuer,
    holder_did: Did,
    holder_key: KeyPair,
    owner_did: Did,
    owner_key: KeyPair,
    authz: Arc<AuthorizationServer>,
    rs: Arc<ResourceServer>,
}

fn party(registry: &Registry, name: &str) -> (Did, KeyPair) {
    let key = generate_keypair();
    (registry.register_did(&key.public_key(), name).unwrap(), key)
}

fn world_with(config: ResourceServerConfig) -> World {
    let clock = ManualClock::new(crate::clock::Timestamp(1_700_000_000));
    let registry = Arc::new(Registry::in_memory());
    let shared: crate::clock::SharedClock = Arc::new(clock.clone());
    let mk_issuer = |name| {
        let (did, key) = party(&registry, name);
        Issuer::new(did, key, registry.clone(), shared.clone(), IssuerConfig::default())
    };
    let gov = mk_issuer("gov");
    let other = mk_issuer("other");
    let (holder_did, holder_key) = party(&registry, "holder");
    let (owner_did, owner_key) = party(&registry, "owner");
    let authz = Arc::new(AuthorizationServer::new(registry.clone()));
    let rs = Arc::new(ResourceServer::new(
        Arc::new(MemoryContentStore::new()),
        authz.clone(),
        registry.clone(),
        shared,
        config,
    ));
    World { clock, registry, gov, other, holder_did, holder_key, owner_did, owner_key, authz, rs }
}

fn world() -> World {
    world_with(ResourceServerConfig::default())
}

impl World {
    fn wallet(&self, issuer: &Issuer, claims: &[(&str, &str)]) -> Wallet {
        let c = issuer.create_challenge(self.holder_did).unwrap();
        let issued = issuer
            .issue(
                &answer_challenge(&c, &self.holder_key),
                claims.iter().map(|(n, v)| AttributeClaim::new(*n, *v)).collect(),
            )
            .unwrap();
        let mut w = Wallet::new(self.holder_did);
        w.accept(issued, self.registry.as_ref(), self.clock.now()).unwrap();
        w
    }

    fn present(&self, wallet: &Wallet, names: &[&str]) -> SignedPresentation {
        let selections: Vec<_> = wallet
            .credential_ids()
            .map(|id| DisclosureSelection::new(*id, names.iter().copied()))
            .collect();
        build_presentation(wallet, &selections, self.owner_did, &self.holder_key, self.clock.now()).unwrap()
    }

    /// Two rules: under-18 denied, adult with a degree from `gov` permitted.
    fn policy(&self) -> Policy {
        let p = Policy {
            policy_id: Uuid::new_v4(),
            combining: Combining::DenyOverrides,
            rules: vec![
                Rule {
                    conditions: vec![Expression::new("age", Function::Lt, Literal::Int(18), ValueType::Int)],
                    issuers: vec![],
                    decision: Effect::Deny,
                },
                Rule {
                    conditions: vec![
                        Expression::new("age", Function::Ge, Literal::Int(18), ValueType::Int),
                        Expression::new(
                            "degree",
                            Function::In,
                            Literal::List(vec![Literal::Str("MSc".into()), Literal::Str("PhD".into())]),
                            ValueType::String,
                        ),
                    ],
                    issuers: vec![*self.gov.did()],
                    decision: Effect::Permit,
                },
            ],
            signature: None,
        };
        sign_policy(&p, self.owner_did, &self.owner_key)
    }

    fn upload(&self, content: &[u8]) -> ResourceRecord {
        self.rs.upload_resource(self.owner_did, content, "report", &self.policy()).unwrap()
    }
}

#[test]
fn upload_stores_canonical_policy() {
    let w = world();
    let policy = w.policy();
    let a = w.rs.upload_resource(w.owner_did, b"abc", "a", &policy).unwrap();
    let b = w.rs.upload_resource(w.owner_did, b"def", "b", &policy).unwrap();
    assert_ne!(a.resource_id, b.resource_id);
    assert_eq!(w.rs.get_policy_bytes(&a.resource_id).unwrap(), serialize_policy(&policy));
    let stored = w.rs.get_policy(&a.resource_id).unwrap();
    assert_eq!(verify_policy_signature(&stored, w.registry.as_ref()), Ok(SignatureStatus::Valid));
    assert!(matches!(w.rs.get_policy(&Uuid::new_v4()), Err(AccessError::NotFound(_))));
    assert_eq!(w.rs.directory().len(), 2);
}

#[test]
fn upload_policy_checks() {
    let w = world();
    let unsigned = Policy { signature: None, ..w.policy() };
    assert!(matches!(
        w.rs.upload_resource(w.owner_did, b"x", "", &unsigned),
        Err(AccessError::PolicyRejected(_))
    ));
    let by_holder = sign_policy(&unsigned, w.holder_did, &w.holder_key);
    assert!(matches!(
        w.rs.upload_resource(w.owner_did, b"x", "", &by_holder),
        Err(AccessError::PolicyRejected(_))
    ));
    let mut forged = w.policy();
    forged.rules[0].decision = Effect::Permit;
    assert!(matches!(w.rs.upload_resource(w.owner_did, b"x", "", &forged), Err(AccessError::PolicyRejected(_))));
    assert!(matches!(
        w.rs.upload_resource(Did::new_random(), b"x", "", &w.policy()),
        Err(AccessError::InvalidInput(_))
    ));
    assert!(w.rs.directory().is_empty());

    let lax = world_with(ResourceServerConfig { signing_required: false, ..Default::default() });
    let unsigned = Policy { signature: None, ..lax.policy() };
    assert!(lax.rs.upload_resource(lax.owner_did, b"x", "", &unsigned).is_ok());
}

#[test]
fn qualified_requester_gets_content() {
    let w = world();
    let record = w.upload(b"quarterly numbers");
    let wallet = w.wallet(&w.gov, &[("age", "34"), ("degree", "PhD"), ("name", "Ann")]);
    let sp = w.present(&wallet, &["age", "degree"]);
    let attempt = w.rs.request_access(&sp, &record.resource_id);
    let grant = attempt.result.clone().unwrap();
    assert_eq!(
        attempt.stages,
        [Stage::Authenticate, Stage::Freshness, Stage::ConsumeNonce, Stage::FetchPolicy, Stage::Pdp, Stage::OwnerDecision]
    );
    assert_eq!(grant.requester_did, w.holder_did);
    assert_eq!(grant.decision_trace.outcome, Outcome::Permit);
    assert_eq!(grant.expires_at, w.clock.now().plus_secs(DEFAULT_GRANT_TTL));
    assert_eq!(w.rs.fetch_resource(&grant.token, &record.resource_id).unwrap(), b"quarterly numbers");

    // Every binding the PDP saw is backed by a commitment in the credential.
    let entry = wallet.get(&wallet.credential_ids().next().copied().unwrap()).unwrap();
    for b in grant.decision_trace.trace.iter().flat_map(|t| &t.matched_bindings) {
        let salt = entry.salts.get(&b.name).unwrap();
        assert_eq!(entry.vc.h_claims.get(&b.name), Some(&commit_attribute(&b.name, &b.value, salt).unwrap()));
    }
}

#[test]
fn replayed_presentation_is_rejected() {
    let w = world();
    let record = w.upload(b"x");
    let wallet = w.wallet(&w.gov, &[("age", "34"), ("degree", "PhD")]);
    let sp = w.present(&wallet, &["age", "degree"]);
    assert!(w.rs.request_access(&sp, &record.resource_id).result.is_ok());
    let again = w.rs.request_access(&sp, &record.resource_id);
    assert_eq!(again.result, Err(AccessError::Replay));
    assert!(!again.reached(Stage::Pdp));
}

#[test]
fn unlisted_issuer_is_denied() {
    let w = world();
    let record = w.upload(b"x");
    let wallet = w.wallet(&w.other, &[("age", "34"), ("degree", "PhD")]);
    let sp = w.present(&wallet, &["age", "degree"]);
    match w.rs.request_access(&sp, &record.resource_id).result {
        Err(AccessError::Denied(d)) => {
            assert_eq!(d.outcome, Outcome::NotApplicable);
            assert!(d.decision.trace.iter().all(|t| t.outcome == Outcome::NotApplicable));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn under_age_is_denied() {
    let w = world();
    let record = w.upload(b"x");
    let wallet = w.wallet(&w.gov, &[("age", "16"), ("degree", "PhD")]);
    let sp = w.present(&wallet, &["age", "degree"]);
    match w.rs.request_access(&sp, &record.resource_id).result {
        Err(AccessError::Denied(d)) => assert_eq!(d.outcome, Outcome::Deny),
        other => panic!("{other:?}"),
    }
}

#[test]
fn tampered_presentation_never_reaches_pdp() {
    let w = world();
    let record = w.upload(b"x");
    let wallet = w.wallet(&w.gov, &[("age", "16"), ("degree", "PhD")]);
    let mut sp = w.present(&wallet, &["age", "degree"]);
    for d in &mut sp.vp.entries[0].disclosed {
        if d.name == "age" {
            d.value = "40".into();
        }
    }
    // Re-signing by the holder does not help: the commitment still binds.
    let resigned = sign_presentation(sp.vp.clone(), &w.holder_key);
    for msg in [&sp, &resigned] {
        let attempt = w.rs.request_access(msg, &record.resource_id);
        assert!(matches!(attempt.result, Err(AccessError::Authentication { .. })), "{:?}", attempt.result);
        assert!(attempt.stages.is_empty());
    }
    assert_eq!(w.authz.calls(), 0);
}

#[test]
fn audience_and_freshness_are_enforced() {
    let w = world();
    let record = w.upload(b"x");
    let wallet = w.wallet(&w.gov, &[("age", "34"), ("degree", "PhD")]);
    let ids: Vec<_> = wallet.credential_ids().copied().collect();
    let sel = [DisclosureSelection::new(ids[0], ["age", "degree"])];
    let elsewhere = build_presentation(&wallet, &sel, w.holder_did, &w.holder_key, w.clock.now()).unwrap();
    assert!(matches!(
        w.rs.request_access(&elsewhere, &record.resource_id).result,
        Err(AccessError::Authentication { .. })
    ));
    let old = w.present(&wallet, &["age", "degree"]);
    w.clock.advance(DEFAULT_PRESENTATION_MAX_AGE + 1);
    assert!(matches!(w.rs.request_access(&old, &record.resource_id).result, Err(AccessError::Authentication { .. })));
    assert_eq!(w.authz.calls(), 0);
}

#[test]
fn grant_expiry_and_scope() {
    let w = world();
    let a = w.upload(b"A");
    let b = w.upload(b"B");
    let wallet = w.wallet(&w.gov, &[("age", "34"), ("degree", "PhD")]);
    let grant = w.rs.request_access(&w.present(&wallet, &["age", "degree"]), &a.resource_id).result.unwrap();
    assert_eq!(w.rs.fetch_resource(&grant.token, &b.resource_id), Err(AccessError::Grant(GrantError::WrongResource)));
    assert_eq!(w.rs.fetch_resource(&grant.token, &a.resource_id).unwrap(), b"A");
    w.clock.advance(DEFAULT_GRANT_TTL);
    assert_eq!(w.rs.fetch_resource(&grant.token, &a.resource_id), Err(AccessError::Grant(GrantError::Expired)));
    assert_eq!(w.rs.fetch_resource(&[0u8; 5], &a.resource_id), Err(AccessError::Grant(GrantError::Unknown)));
}

#[test]
fn random_tokens_never_fetch() {
    let w = world();
    let record = w.upload(b"secret");
    let wallet = w.wallet(&w.gov, &[("age", "34"), ("degree", "PhD")]);
    w.rs.request_access(&w.present(&wallet, &["age", "degree"]), &record.resource_id).result.unwrap();
    let successes = (0..10_000)
        .filter(|_| {
            let token: [u8; 32] = crate::crypto::random_bytes().unwrap();
            w.rs.fetch_resource(&token, &record.resource_id).is_ok()
        })
        .count();
    assert_eq!(successes, 0);
}

#[test]
fn pdp_rejects_altered_policy() {
    let w = world();
    let mut policy = w.policy();
    policy.rules[1].issuers.clear();
    let attrs = crate::presentation::VerifiedAttributes::default();
    assert!(matches!(w.authz.decide(&policy, &attrs), Err(AccessError::PolicyIntegrity(_))));
    policy.signature.as_mut().unwrap().signer_did = Did::new_random();
    assert!(matches!(w.authz.decide(&policy, &attrs), Err(AccessError::Registry(_))));
}

#[test]
fn owner_hook_can_relax_not_applicable() {
    struct Lenient;
    impl OwnerHook for Lenient {
        fn finalize(&self, _: &ResourceRecord, _: &Did, d: &Decision) -> bool {
            d.outcome != Outcome::Deny
        }
    }
    let w = world();
    let rs = ResourceServer::new(
        Arc::new(MemoryContentStore::new()),
        w.authz.clone(),
        w.registry.clone(),
        Arc::new(w.clock.clone()),
        ResourceServerConfig::default(),
    )
    .with_owner_hook(Arc::new(Lenient));
    let record = rs.upload_resource(w.owner_did, b"x", "", &w.policy()).unwrap();
    let wallet = w.wallet(&w.other, &[("age", "34"), ("degree", "PhD")]);
    assert!(rs.request_access(&w.present(&wallet, &["age", "degree"]), &record.resource_id).result.is_ok());
}

#[test]
fn file_store_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let store = FileContentStore::new(dir.path().join("blobs")).unwrap();
    let id = Uuid::new_v4();
    let loc = store.put(id, b"bytes").unwrap();
    assert!(loc.starts_with("file://"));
    assert_eq!(store.get(&loc).unwrap(), b"bytes");
    assert!(store.get("file:///etc/passwd").is_err());
    assert!(store.get("mem://x").is_err());
}

#[test]
fn full_flow_over_sessions() {
    let w = world();
    let rs_did = w.owner_did;
    let rs_key = Arc::new(w.owner_key.clone());
    let (as_did, as_key) = party(&w.registry, "authorization-server");
    let as_key = Arc::new(as_key);
    let shared: crate::clock::SharedClock = Arc::new(w.clock.clone());

    // AS behind a session service.
    let as_service = Arc::new(SecureService::new(
        Arc::new(SessionStore::new(as_did, as_key.clone(), shared.clone()).with_resolver(w.registry.clone())),
        Arc::new(AuthorizationServer::new(w.registry.clone())),
    ));
    let as_tap = WireTap::new();
    let pdp = AuthzClient::new(SecureClient::new(
        LocalTransport::with_tap(as_service, as_tap.clone()),
        Arc::new(SessionStore::new(rs_did, rs_key.clone(), shared.clone())),
        as_did,
        as_key.public_key(),
    ));

    // RS behind a session service, calling the AS remotely.
    let rs = Arc::new(ResourceServer::new(
        Arc::new(MemoryContentStore::new()),
        Arc::new(pdp),
        w.registry.clone(),
        shared.clone(),
        ResourceServerConfig::default(),
    ));
    let rs_service: Arc<dyn Handler> =
        Arc::new(SecureService::new(
            Arc::new(SessionStore::new(rs_did, rs_key.clone(), shared.clone()).with_resolver(w.registry.clone())),
            rs,
        ));
    let rs_tap = WireTap::new();
    let requester = ResourceClient::new(SecureClient::new(
        LocalTransport::with_tap(rs_service, rs_tap.clone()),
        Arc::new(SessionStore::new(w.holder_did, Arc::new(w.holder_key.clone()), shared)),
        rs_did,
        rs_key.public_key(),
    ));

    let record = requester.upload(w.owner_did, b"over the wire", "doc", &w.policy()).unwrap();
    let (policy, bytes) = requester.get_policy(&record.resource_id).unwrap();
    assert_eq!(bytes, serialize_policy(&policy));
    let wallet = w.wallet(&w.gov, &[("age", "34"), ("degree", "MSc")]);
    let sp = w.present(&wallet, &["age", "degree"]);
    let grant = requester.request_access(&record.resource_id, &sp).result.unwrap();
    assert_eq!(requester.fetch(&record.resource_id, &grant.token_hex()).unwrap(), b"over the wire");
    assert_eq!(requester.request_access(&record.resource_id, &sp).result, Err(AccessError::Replay));
    assert!(matches!(
        requester.fetch(&record.resource_id, &"00".repeat(32)),
        Err(AccessError::Grant(GrantError::Unknown))
    ));

    let all: Vec<_> = rs_tap.exchanges().into_iter().chain(as_tap.exchanges()).collect();
    assert!(all.len() >= 7);
    for x in &all {
        assert_eq!(x.request.path, SESSION_PATH);
        assert_eq!(x.response.status, 200, "session layer itself never fails here");
        assert!(crate::codec::from_json::<crate::session::SecureEnvelope>(&x.request.body).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grant_iff_permit(age in 0u32..40, degree in prop::sample::select(vec!["BSc", "MSc", "PhD"]),
                        from_gov in any::<bool>(), disclose_degree in any::<bool>()) {
        let w = world();
        let record = w.upload(b"x");
        let age = age.to_string();
        let issuer = if from_gov { &w.gov } else { &w.other };
        let wallet = w.wallet(issuer, &[("age", &age), ("degree", degree)]);
        let names: &[&str] = if disclose_degree { &["age", "degree"] } else { &["age"] };
        let sp = w.present(&wallet, names);
        let attrs = crate::presentation::verify_presentation(&sp, w.registry.as_ref(), w.clock.now()).unwrap();
        let expected = evaluate_policy(&w.policy(), &attrs).outcome;
        let result = w.rs.request_access(&sp, &record.resource_id).result;
        match expected {
            Outcome::Permit => prop_assert!(result.is_ok()),
            o => prop_assert!(matches!(result, Err(AccessError::Denied(d)) if d.outcome == o)),
        }
    }
}
