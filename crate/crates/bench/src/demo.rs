//! Scripted run of the whole flow: register, issue, upload, present,
//! authorize, fetch. Each scenario ends in a distinct exit status.

use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Result};
use polaris_core::access::{AccessError, AccessGrant};
use polaris_core::credential::{answer_challenge, AttributeClaim};
use polaris_core::crypto::{generate_keypair, KeyPair};
use polaris_core::did::Did;
use polaris_core::presentation::{build_presentation, DisclosureSelection, SignedPresentation};
use polaris_core::vdr::DidRegistrar;
use polaris_core::vppl::*;
use polaris_core::wallet::Wallet;
use serde::Serialize;
use uuid::Uuid;

use crate::deployment::{Deployment, DeploymentOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DENIED: i32 = 2;
pub const EXIT_AUTH_FAILED: i32 = 3;
pub const EXIT_REPLAY: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Qualified holder obtains a grant and fetches the content.
    Grant,
    /// Holder is under age; the policy denies.
    UnderQualified,
    /// A disclosed value is altered after signing.
    Tampered,
    /// The same signed presentation is submitted twice.
    Replay,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Grant, Scenario::UnderQualified, Scenario::Tampered, Scenario::Replay];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Grant => "grant",
            Scenario::UnderQualified => "under-qualified",
            Scenario::Tampered => "tampered",
            Scenario::Replay => "replay",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Scenario::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Exit status the scenario is expected to end with.
    pub fn expected_exit(self) -> i32 {
        match self {
            Scenario::Grant => EXIT_OK,
            Scenario::UnderQualified => EXIT_DENIED,
            Scenario::Tampered => EXIT_AUTH_FAILED,
            Scenario::Replay => EXIT_REPLAY,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Step {
    pub name: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoReport {
    pub scenario: Scenario,
    pub steps: Vec<Step>,
    pub exit_code: i32,
    /// Name of the step that ended the run, for nonzero exits.
    pub stopped_at: Option<&'static str>,
    pub elapsed_ms: f64,
}

impl DemoReport {
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("[{}] {:<18} {}\n", i + 1, s.name, s.detail));
        }
        out.push_str(&format!("exit {} ({})\n", self.exit_code, self.scenario.name()));
        out
    }
}

struct Run {
    steps: Vec<Step>,
}

impl Run {
    fn step(&mut self, name: &'static str, detail: impl Into<String>) {
        let detail = detail.into();
        log::info!("{name}: {detail}");
        self.steps.push(Step { name, detail });
    }
}

enum Stop {
    Exit(i32, &'static str),
    Fail(anyhow::Error, &'static str),
}

/// The resource owner's policy: anyone under 18 is denied; adults holding
/// an MSc or PhD attested by `issuer` are permitted.
pub fn demo_policy(issuer: Did) -> Policy {
    Policy {
        policy_id: Uuid::new_v4(),
        combining: Combining::DenyOverrides,
        rules: vec![
            Rule {
                conditions: vec![Expression::new("age", Function::Lt, Literal::Int(18), ValueType::Int)],
                issuers: vec![issuer],
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
                issuers: vec![issuer],
                decision: Effect::Permit,
            },
        ],
        signature: None,
    }
}

pub const DEMO_CONTENT: &[u8] = b"clinical-trial-dataset-v3: 4821 anonymised records";

pub fn run_demo(scenario: Scenario, opts: &DeploymentOptions) -> DemoReport {
    let started = Instant::now();
    let mut run = Run { steps: Vec::new() };
    let stop = script(scenario, opts, &mut run).err();
    let (exit_code, stopped_at) = match stop {
        None => (EXIT_OK, None),
        Some(Stop::Exit(code, at)) => (code, Some(at)),
        Some(Stop::Fail(e, at)) => {
            run.step(at, format!("FAILED: {e:#}"));
            (EXIT_FAILURE, Some(at))
        }
    };
    DemoReport { scenario, steps: run.steps, exit_code, stopped_at, elapsed_ms: ms(started.elapsed()) }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn at<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, Stop> {
    r.map_err(|e| Stop::Fail(e, name))
}

fn script(scenario: Scenario, opts: &DeploymentOptions, run: &mut Run) -> std::result::Result<(), Stop> {
    let mut dep = at("deploy", Deployment::start(opts))?;
    run.step("deploy", format!("services up ({})", if opts.http { "http" } else { "in-process" }));

    // 1. identities
    let vdr = dep.vdr();
    let register = |name: &str| -> Result<(Did, KeyPair)> {
        let key = generate_keypair();
        let did = vdr.register_did(&key.public_key(), name)?;
        Ok((did, key))
    };
    let (issuer_did, issuer_key) = at("register-dids", register("issuer"))?;
    let (holder_did, holder_key) = at("register-dids", register("holder"))?;
    let (owner_did, owner_key) = at("register-dids", register("owner"))?;
    run.step("register-dids", format!("issuer {issuer_did}, holder {holder_did}, owner {owner_did}"));

    // 2. credential
    let age = if scenario == Scenario::UnderQualified { "16" } else { "29" };
    let claims = vec![
        AttributeClaim::new("name", "Dana Whitfield"),
        AttributeClaim::new("age", age),
        AttributeClaim::new("degree", "PhD"),
        AttributeClaim::new("nationality", "NZ"),
        AttributeClaim::new("employer", "Harbour Health"),
    ];
    let (issuer_service, issuer) = at("issue-credential", dep.spawn_issuer(issuer_did, issuer_key))?;
    issuer_service.enroll(holder_did, claims);
    let resolver = dep.resolver();
    let wallet = at(
        "issue-credential",
        (|| -> Result<Wallet> {
            let challenge = issuer.challenge(holder_did)?;
            let issued = issuer.issue(answer_challenge(&challenge, &holder_key))?;
            let mut wallet = Wallet::new(holder_did);
            wallet.accept(issued, resolver.as_ref(), dep.clock.now())?;
            Ok(wallet)
        })(),
    )?;
    let credential_id = *wallet.credential_ids().next().expect("one credential");
    run.step("issue-credential", format!("credential {credential_id} with 5 committed attributes"));

    // 3. upload
    let owner_key = Arc::new(owner_key);
    let policy = sign_policy(&demo_policy(issuer_did), owner_did, &owner_key);
    let owner = dep.resource_client(owner_did, owner_key.clone());
    let record = at("upload-resource", owner.upload(owner_did, DEMO_CONTENT, "trial dataset", &policy).map_err(anyhow::Error::from))?;
    run.step(
        "upload-resource",
        format!("resource {} ({} bytes, 2-rule signed policy)", record.resource_id, DEMO_CONTENT.len()),
    );

    // 4. policy retrieval
    let holder_key = Arc::new(holder_key);
    let requester = dep.resource_client(holder_did, holder_key.clone());
    let (fetched_policy, _) = at("fetch-policy", requester.get_policy(&record.resource_id).map_err(anyhow::Error::from))?;
    let status = at("fetch-policy", verify_policy_signature(&fetched_policy, resolver.as_ref()).map_err(anyhow::Error::from))?;
    if status != SignatureStatus::Valid {
        return Err(Stop::Fail(anyhow!("policy signature status {status:?}"), "fetch-policy"));
    }
    let wanted = referenced_attributes(&fetched_policy);
    run.step("fetch-policy", format!("owner signature valid; policy references {wanted:?}"));

    // 5. presentation
    let sel = [DisclosureSelection::new(credential_id, wanted.iter().map(String::as_str))];
    let mut sp = at(
        "present",
        build_presentation(&wallet, &sel, owner_did, &holder_key, dep.clock.now()).map_err(anyhow::Error::from),
    )?;
    if scenario == Scenario::Tampered {
        tamper(&mut sp);
        run.step("present", "disclosed age rewritten after signing");
    } else {
        run.step("present", format!("disclosed {} of 5 attributes", sp.vp.entries[0].disclosed.len()));
    }

    // 6. access
    let attempt = requester.request_access(&record.resource_id, &sp);
    let grant = match attempt.result {
        Ok(g) => g,
        Err(AccessError::Denied(d)) => {
            run.step("request-access", format!("denied: {:?}", d.outcome));
            return Err(Stop::Exit(EXIT_DENIED, "request-access"));
        }
        Err(e @ AccessError::Authentication { .. }) => {
            run.step("request-access", format!("rejected before authorization: {e}"));
            return Err(Stop::Exit(EXIT_AUTH_FAILED, "request-access"));
        }
        Err(e) => return Err(Stop::Fail(e.into(), "request-access")),
    };
    run.step("request-access", format!("granted until {}", grant.expires_at));

    if scenario == Scenario::Replay {
        match requester.request_access(&record.resource_id, &sp).result {
            Err(AccessError::Replay) => {
                run.step("replay", "second submission of the same presentation refused");
                return Err(Stop::Exit(EXIT_REPLAY, "replay"));
            }
            other => return Err(Stop::Fail(anyhow!("replay was not refused: {other:?}"), "replay")),
        }
    }

    // 7. content
    let content = at("fetch-content", fetch(&requester, &record.resource_id, &grant))?;
    if content != DEMO_CONTENT {
        return Err(Stop::Fail(anyhow!("content differs from upload"), "fetch-content"));
    }
    run.step("fetch-content", format!("{} bytes match the upload", content.len()));
    Ok(())
}

fn fetch(
    client: &crate::deployment::SecureResourceClient,
    id: &Uuid,
    grant: &AccessGrant,
) -> Result<Vec<u8>> {
    Ok(client.fetch(id, &grant.token_hex())?)
}

/// Attribute names a policy's conditions mention, in first-use order.
pub fn referenced_attributes(policy: &Policy) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for e in policy.rules.iter().flat_map(|r| &r.conditions) {
        let name = e.attribute_name().to_string();
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

fn tamper(sp: &mut SignedPresentation) {
    for d in &mut sp.vp.entries[0].disclosed {
        if d.name == "age" {
            d.value = "35".into();
        }
    }
}

/// Runs all four scenarios and checks each against its expected exit.
pub fn run_all(opts: &DeploymentOptions) -> Result<Vec<DemoReport>> {
    let reports: Vec<DemoReport> = Scenario::ALL.iter().map(|s| run_demo(*s, opts)).collect();
    for r in &reports {
        if r.exit_code != r.scenario.expected_exit() {
            bail!("scenario {} exited {} (expected {})\n{}", r.scenario.name(), r.exit_code, r.scenario.expected_exit(), r.transcript());
        }
    }
    Ok(reports)
}
