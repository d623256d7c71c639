//! Acceptance suite. Runs every criterion in sequence (timing-sensitive
//! checks must not share the CPU with each other) and prints one line each.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use polaris_bench::demo::run_all;
use polaris_bench::deployment::DeploymentOptions;
use polaris_bench::kd::{bench_kd, KdMode};
use polaris_bench::load::{find_saturation, run_load, LoadOp, SaturationConfig, Target};
use polaris_core::clock::{system_clock, Timestamp};
use polaris_core::credential::{build_hclaims, issue_credential, AttributeClaim, CredentialMetadata};
use polaris_core::crypto::{commit_attribute, generate_keypair, CryptoMeter, KeyPair, PublicKey, Salt};
use polaris_core::did::Did;
use polaris_core::presentation::{
    build_presentation, sign_presentation, verify_presentation, AttributeTriple, DisclosureSelection, SignedPresentation,
};
use polaris_core::session::{SecureEnvelope, SessionConfig, SessionStore};
use polaris_core::vdr::{DidRegistrar, DidResolver, Registry};
use polaris_core::vppl::*;
use polaris_core::wallet::{Wallet, WalletEntry};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use uuid::Uuid;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("selective disclosure soundness and completeness", disclosure),
        ("commitment field binding", field_binding),
        ("policy engine matches brute-force oracle", oracle_equivalence),
        ("issuer binding", issuer_binding),
        ("end-to-end scenarios", end_to_end),
        ("session mechanism", sessions),
        ("kd vs pki trend", kd_trend),
        ("read path saturates above write path", concurrency_shape),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("\n{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// --- 1 ----------------------------------------------------------------------

struct Party {
    did: Did,
    key: KeyPair,
}

fn party(registry: &Registry, name: &str) -> Party {
    let key = generate_keypair();
    Party { did: registry.register_did(&key.public_key(), name).unwrap(), key }
}

fn random_text(rng: &mut StdRng, len: std::ops::Range<usize>) -> String {
    let n = rng.gen_range(len);
    (0..n).map(|_| *b"abcdefghijklmnopqrstuvwxyz0123456789 -".choose(rng).unwrap() as char).collect()
}

fn mutants(sp: &SignedPresentation, holder: &KeyPair, other: &Did, rng: &mut StdRng) -> Vec<(&'static str, SignedPresentation)> {
    let mut out = Vec::new();
    let resign = |sp: SignedPresentation| sign_presentation(sp.vp, holder);
    let entry = &sp.vp.entries[0];
    let pick = rng.gen_range(0..entry.disclosed.len());
    let name = entry.disclosed[pick].name.clone();
    let names: Vec<String> = entry.vc.h_claims.names().map(String::from).collect();
    let hidden = names.choose(rng).unwrap().clone();

    let mut m = sp.clone();
    m.vp.entries[0].disclosed[pick].value.push('x');
    out.push(("value", m.clone()));
    out.push(("value+resign", resign(m)));

    let mut m = sp.clone();
    let bit = rng.gen_range(0..128);
    m.vp.entries[0].salts.0.get_mut(&name).unwrap().as_bytes_mut()[bit / 8] ^= 1 << (bit % 8);
    out.push(("salt", m.clone()));
    out.push(("salt+resign", resign(m)));

    let mut m = sp.clone();
    let bit = rng.gen_range(0..256);
    m.vp.entries[0].vc.h_claims.0.get_mut(&hidden).unwrap().as_bytes_mut()[bit / 8] ^= 1 << (bit % 8);
    out.push(("digest", m.clone()));
    out.push(("digest+resign", resign(m)));

    let mut m = sp.clone();
    let meta = &mut m.vp.entries[0].vc.metadata;
    match rng.gen_range(0..6) {
        0 => meta.credential_id = Uuid::new_v4(),
        1 => meta.issuer_did = *other,
        2 => meta.holder_did = *other,
        3 => meta.issued_at = Timestamp(meta.issued_at.0 - 1),
        4 => meta.expires_at = Timestamp(meta.expires_at.0 + 86_400),
        _ => meta.schema.push('2'),
    }
    out.push(("metadata", m.clone()));
    out.push(("metadata+resign", resign(m)));

    let mut m = sp.clone();
    let bit = rng.gen_range(0..512);
    m.vp.entries[0].vc.proof.as_bytes_mut()[bit / 8] ^= 1 << (bit % 8);
    out.push(("issuer-signature", m.clone()));
    out.push(("issuer-signature+resign", resign(m)));

    let mut m = sp.clone();
    let bit = rng.gen_range(0..512);
    m.holder_signature.as_bytes_mut()[bit / 8] ^= 1 << (bit % 8);
    out.push(("holder-signature", m));
    out
}

fn disclosure() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let registry = Registry::in_memory();
    let issuers: Vec<Party> = (0..3).map(|i| party(&registry, &format!("issuer-{i}"))).collect();
    let holder = party(&registry, "holder");
    let bystander = party(&registry, "bystander");
    let verifier = Did::new_random();
    let now = Timestamp::now();

    let (mut honest, mut mutated) = (0, 0);
    let mut by_kind: BTreeMap<&str, usize> = BTreeMap::new();
    for _ in 0..1000 {
        let n = rng.gen_range(2..=10);
        let claims: Vec<AttributeClaim> =
            (0..n).map(|i| AttributeClaim::new(format!("attr{i}"), random_text(&mut rng, 0..12))).collect();
        let (h_claims, salts) = build_hclaims(&claims).unwrap();
        let issuer = issuers.choose(&mut rng).unwrap();
        let metadata = CredentialMetadata {
            credential_id: Uuid::new_v4(),
            issuer_did: issuer.did,
            holder_did: holder.did,
            issued_at: Timestamp(now.0 - 60),
            expires_at: now.plus_secs(3600),
            schema: "acceptance:v1".into(),
        };
        let vc = issue_credential(metadata, h_claims, &issuer.key).unwrap();
        let id = vc.id();
        let mut wallet = Wallet::new(holder.did);
        wallet.insert_unchecked(WalletEntry {
            vc,
            claims: claims.iter().map(|c| (c.name.clone(), c.value.clone())).collect(),
            salts,
        });

        let k = rng.gen_range(1..=n);
        let mut subset: Vec<&str> = claims.iter().map(|c| c.name.as_str()).collect();
        subset.shuffle(&mut rng);
        subset.truncate(k);
        let sp = build_presentation(&wallet, &[DisclosureSelection::new(id, subset.iter().copied())], verifier, &holder.key, now)
            .unwrap();
        let attrs = verify_presentation(&sp, &registry, now).map_err(|e| format!("honest presentation rejected: {e}"))?;
        ensure(attrs.triples.len() == k, || "honest presentation lost attributes".into())?;
        honest += 1;

        for (kind, m) in mutants(&sp, &holder.key, &bystander.did, &mut rng) {
            ensure(verify_presentation(&m, &registry, now).is_err(), || format!("{kind} mutation accepted"))?;
            *by_kind.entry(kind).or_default() += 1;
            mutated += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{honest}/1000 honest verified, {mutated}/{mutated} mutations rejected across {} kinds", by_kind.len()))
}

// --- 2 ----------------------------------------------------------------------

fn field_binding() -> Check {
    // Characters that resemble length-prefix bytes alongside ordinary text.
    let alphabet = ['\u{0}', '\u{1}', '\u{4}', 'a'];
    let mut strings = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..4 {
        layer = layer.iter().flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}"))).collect();
        strings.extend(layer.iter().cloned());
    }
    let mut shifted = [0u8; 16];
    shifted[..4].copy_from_slice(&[0, 0, 0, 1]);
    let salts = [Salt::from_bytes([0; 16]), Salt::from_bytes([b'a'; 16]), Salt::from_bytes(shifted)];

    let mut seen: HashMap<[u8; 32], (usize, usize, usize)> = HashMap::new();
    let mut total = 0;
    for (si, salt) in salts.iter().enumerate() {
        for (ni, name) in strings.iter().enumerate() {
            for (vi, value) in strings.iter().enumerate() {
                let Ok(c) = commit_attribute(name, value, salt) else { continue };
                total += 1;
                if let Some(prev) = seen.insert(*c.as_bytes(), (ni, vi, si)) {
                    return Err(format!("collision between {prev:?} and {:?}", (ni, vi, si)));
                }
            }
        }
    }
    Ok(format!("{total} distinct triples over {} strings, zero collisions", strings.len()))
}

// --- 3 and 4 ----------------------------------------------------------------

fn did(n: u128) -> Did {
    Did::from_uuid(Uuid::from_u128(n))
}

const INTS: [&str; 5] = ["-1", "0", "1", "2", "x"];
const STRS: [&str; 4] = ["a", "b", "ab", ""];
const BOOLS: [&str; 3] = ["true", "false", "yes"];

/// Reference semantics over raw text.
fn oracle_match(e: &Expression, raw: &str) -> bool {
    let lit_eq = |l: &Literal| match (l, e.value_type) {
        (Literal::Int(t), ValueType::Int) => raw.parse::<i64>().ok() == Some(*t),
        (Literal::Str(t), ValueType::String) => raw == t,
        (Literal::Bool(t), ValueType::Bool) => (raw == "true" && *t) || (raw == "false" && !*t),
        _ => false,
    };
    let parses = match e.value_type {
        ValueType::Int => raw.parse::<i64>().is_ok(),
        ValueType::Bool => raw == "true" || raw == "false",
        ValueType::String => true,
    };
    if !parses {
        return false;
    }
    match (e.function, &e.target) {
        (Function::Eq, t) => lit_eq(t),
        (Function::Ne, t) => !lit_eq(t),
        (Function::In, Literal::List(ts)) => ts.iter().any(lit_eq),
        (Function::Contains, Literal::Str(t)) => raw.contains(t.as_str()),
        (f, Literal::Int(t)) => {
            let v: i64 = raw.parse().unwrap();
            match f {
                Function::Gt => v > *t,
                Function::Ge => v >= *t,
                Function::Lt => v < *t,
                Function::Le => v <= *t,
                _ => unreachable!(),
            }
        }
        _ => unreachable!(),
    }
}

/// Rule outcome letter, plus whether the conditions alone (ignoring the
/// issuer list) would have matched.
fn oracle_rule(rule: &Rule, triples: &[AttributeTriple]) -> (char, bool) {
    let holds = |issuer_bound: bool| {
        rule.conditions.iter().all(|e| {
            triples.iter().any(|t| {
                e.attribute_path == format!("claims.{}", t.name)
                    && oracle_match(e, &t.value)
                    && (!issuer_bound || rule.issuers.is_empty() || rule.issuers.contains(&t.issuer_did))
            })
        })
    };
    let applicable = holds(true);
    let letter = match (applicable, rule.decision) {
        (false, _) => 'n',
        (true, Effect::Permit) => 'p',
        (true, Effect::Deny) => 'd',
    };
    (letter, holds(false))
}

fn oracle_combine(c: Combining, letters: &[char]) -> Outcome {
    let first = |order: [char; 2]| order.into_iter().find(|o| letters.contains(o)).unwrap_or('n');
    let o = match c {
        Combining::PermitOverrides => first(['p', 'd']),
        Combining::DenyOverrides => first(['d', 'p']),
        Combining::FirstApplicable => letters.iter().copied().find(|l| *l != 'n').unwrap_or('n'),
    };
    match o {
        'p' => Outcome::Permit,
        'd' => Outcome::Deny,
        _ => Outcome::NotApplicable,
    }
}

fn random_expression(rng: &mut StdRng) -> Expression {
    match rng.gen_range(0..3) {
        0 => {
            let f = *[Function::Eq, Function::Ne, Function::Gt, Function::Ge, Function::Lt, Function::Le, Function::In]
                .choose(rng)
                .unwrap();
            let target = if f == Function::In {
                Literal::List((0..rng.gen_range(1..3)).map(|_| Literal::Int(rng.gen_range(-1..3))).collect())
            } else {
                Literal::Int(rng.gen_range(-1..3))
            };
            Expression::new("n", f, target, ValueType::Int)
        }
        1 => {
            let f = *[Function::Eq, Function::Ne, Function::Contains, Function::In].choose(rng).unwrap();
            let s = |rng: &mut StdRng| Literal::Str(STRS[rng.gen_range(0..3)].into());
            let target = if f == Function::In { Literal::List(vec![s(rng), s(rng)]) } else { s(rng) };
            Expression::new("s", f, target, ValueType::String)
        }
        _ => {
            let f = *[Function::Eq, Function::Ne, Function::In].choose(rng).unwrap();
            let b = Literal::Bool(rng.gen());
            Expression::new("b", f, if f == Function::In { Literal::List(vec![b]) } else { b }, ValueType::Bool)
        }
    }
}

fn random_case(rng: &mut StdRng) -> (Vec<Rule>, Vec<AttributeTriple>) {
    let rules = (0..rng.gen_range(1..=3))
        .map(|_| Rule {
            conditions: (0..rng.gen_range(1..=3)).map(|_| random_expression(rng)).collect(),
            issuers: [did(1), did(2)].into_iter().filter(|_| rng.gen_bool(0.5)).collect(),
            decision: if rng.gen() { Effect::Permit } else { Effect::Deny },
        })
        .collect();
    let triples = (0..rng.gen_range(0..6))
        .map(|_| {
            let issuer = did(rng.gen_range(1..=3));
            match rng.gen_range(0..3) {
                0 => AttributeTriple::new(issuer, "n", *INTS.choose(rng).unwrap()),
                1 => AttributeTriple::new(issuer, "s", *STRS.choose(rng).unwrap()),
                _ => AttributeTriple::new(issuer, "b", *BOOLS.choose(rng).unwrap()),
            }
        })
        .collect();
    (rules, triples)
}

fn policy(rules: Vec<Rule>, combining: Combining) -> Policy {
    Policy { policy_id: Uuid::from_u128(7), combining, rules, signature: None }
}

fn oracle_equivalence() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let mut compared = 0;
    for case in 0..1500 {
        let (rules, triples) = random_case(&mut rng);
        let letters: Vec<char> = rules.iter().map(|r| oracle_rule(r, &triples).0).collect();
        for c in Combining::ALL {
            let p = policy(rules.clone(), c);
            validate(&p).map_err(|e| format!("generated policy invalid: {e}"))?;
            let got = evaluate_policy(&p, &triples).outcome;
            let want = oracle_combine(c, &letters);
            ensure(got == want, || format!("case {case} {c:?}: engine {got:?}, oracle {want:?}"))?;
            compared += 1;
        }
    }

    // Two-rule table: each rule is forced to permit, deny or not apply.
    use Outcome::{Deny as D, NotApplicable as N, Permit as P};
    let table = [
        (P, P, P, P, P),
        (P, D, P, D, P),
        (P, N, P, P, P),
        (D, P, P, D, D),
        (D, D, D, D, D),
        (D, N, D, D, D),
        (N, P, P, P, P),
        (N, D, D, D, D),
        (N, N, N, N, N),
    ];
    let attrs = [AttributeTriple::new(did(1), "n", "1")];
    let rule = |o: Outcome| Rule {
        conditions: vec![Expression::new("n", Function::Eq, Literal::Int(if o == N { 9 } else { 1 }), ValueType::Int)],
        issuers: vec![],
        decision: if o == D { Effect::Deny } else { Effect::Permit },
    };
    for (a, b, po, dov, fa) in table {
        for (c, want) in [(Combining::PermitOverrides, po), (Combining::DenyOverrides, dov), (Combining::FirstApplicable, fa)] {
            let got = evaluate_policy(&policy(vec![rule(a), rule(b)], c), &attrs).outcome;
            ensure(got == want, || format!("table row ({a:?}, {b:?}) {c:?}: got {got:?}"))?;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{compared} decisions identical, 9-row table matches"))
}

fn issuer_binding() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let mut bound = 0;
    for _ in 0..4000 {
        let (rules, triples) = random_case(&mut rng);
        let decision = evaluate_policy(&policy(rules.clone(), Combining::FirstApplicable), &triples);
        for (i, rule) in rules.iter().enumerate() {
            let (letter, unbound_match) = oracle_rule(rule, &triples);
            if unbound_match && letter == 'n' {
                bound += 1;
                let got = decision.trace[i].outcome;
                ensure(got == Outcome::NotApplicable, || format!("rule {i} with foreign issuers returned {got:?}"))?;
            }
        }
    }
    ensure(bound >= 100, || format!("only {bound} issuer-excluded cases generated"))?;
    Ok(format!("{bound} issuer-excluded rule matches, all not-applicable"))
}

// --- 5 ----------------------------------------------------------------------

fn end_to_end() -> Check {
    let started = Instant::now();
    let reports = run_all(&DeploymentOptions::default()).map_err(|e| format!("{e:#}"))?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    let codes: Vec<String> = reports.iter().map(|r| format!("{}={}", r.scenario.name(), r.exit_code)).collect();
    Ok(codes.join(", "))
}

// --- 6 ----------------------------------------------------------------------

struct Pair {
    a: SessionStore,
    b: SessionStore,
    meter: CryptoMeter,
}

fn pair(registry: &Arc<Registry>) -> Pair {
    let meter = CryptoMeter::new();
    let store = |name: &str| {
        let key = generate_keypair();
        let did = registry.register_did(&key.public_key(), name).unwrap();
        SessionStore::with_config(did, Arc::new(key), system_clock(), SessionConfig::default(), meter.clone())
            .with_resolver(registry.clone())
    };
    Pair { a: store("a"), b: store("b"), meter }
}

fn sessions() -> Check {
    let registry = Arc::new(Registry::in_memory());
    let mut rng = StdRng::seed_from_u64(0x5eed_0006);

    for n in [1usize, 10, 100] {
        let p = pair(&registry);
        let b_key = key_of(&registry, &p.b);
        let sid = p.a.initiate(p.b.self_did(), b_key).unwrap().lock().session_id;
        for i in 0..n {
            let (from, to) = if i % 2 == 0 { (&p.a, &p.b) } else { (&p.b, &p.a) };
            let msg = format!("message {i}").into_bytes();
            let env = from.wrap(&sid, &msg).map_err(|e| e.to_string())?;
            ensure(to.unwrap(&env).map_err(|e| e.to_string())? == msg, || "payload changed".into())?;
        }
        let ops = p.meter.snapshot().asymmetric_ops();
        ensure(ops == 2, || format!("{ops} asymmetric operations for {n} messages"))?;
    }

    let p = pair(&registry);
    let sid = p.a.initiate(p.b.self_did(), key_of(&registry, &p.b)).unwrap().lock().session_id;
    let mut delivered: Vec<SecureEnvelope> = Vec::new();
    let mut rejected = 0;
    let mut honest = 0;
    let send = |i: usize| p.a.wrap(&sid, format!("honest {i}").as_bytes()).unwrap();
    let first = send(0);
    p.b.unwrap(&first).unwrap();
    delivered.push(first);
    for i in 0..1000 {
        let fresh = send(i + 1);
        let attack = match rng.gen_range(0..5) {
            0 => delivered.choose(&mut rng).unwrap().clone(),
            1 => {
                let mut e = fresh.clone();
                let bit = rng.gen_range(0..e.body.len() * 8);
                e.body[bit / 8] ^= 1 << (bit % 8);
                e
            }
            2 => {
                let mut e = fresh.clone();
                e.counter += rng.gen_range(1..1000);
                e
            }
            3 => {
                let mut e = fresh.clone();
                e.sender_did = Did::new_random();
                e
            }
            _ => {
                let mut e = fresh.clone();
                e.session_id = Uuid::new_v4();
                e
            }
        };
        if p.b.unwrap(&attack).is_err() {
            rejected += 1;
        }
        // The genuine message still goes through after each attempt.
        p.b.unwrap(&fresh).map_err(|e| format!("honest delivery {i} failed after an attack: {e}"))?;
        honest += 1;
        delivered.push(fresh);
    }
    ensure(rejected == 1000, || format!("{rejected}/1000 adversarial deliveries rejected"))?;

    let big: Vec<u8> = (0..1usize << 20).map(|i| (i % 251) as u8).collect();
    let env = p.a.wrap(&sid, &big).unwrap();
    ensure(p.b.unwrap(&env).map_err(|e| e.to_string())? == big, || "1 MiB payload corrupted".into())?;
    Ok(format!("2 asymmetric ops at N=1,10,100; 1000/1000 attacks rejected, {honest} honest interleaved; 1 MiB intact"))
}

fn key_of(registry: &Registry, store: &SessionStore) -> PublicKey {
    registry.resolve_key(&store.self_did()).unwrap()
}

// --- 7 ----------------------------------------------------------------------

fn kd_trend() -> Check {
    let started = Instant::now();
    let kd = bench_kd(1 << 20, 5.0, KdMode::KdSession).map_err(|e| e.to_string())?;
    let pki = bench_kd(1 << 20, 5.0, KdMode::PkiPerMessage).map_err(|e| e.to_string())?;
    let ratio = kd.total_ms / pki.total_ms;
    ensure(started.elapsed() < Duration::from_secs(120), || "took over 2 minutes".into())?;
    ensure(kd.asymmetric_ops() == 2 && pki.asymmetric_ops() == 20, || {
        format!("asymmetric ops kd={} pki={}", kd.asymmetric_ops(), pki.asymmetric_ops())
    })?;
    let detail = format!("kd {:.1} ms, pki {:.1} ms, ratio {ratio:.2}", kd.total_ms, pki.total_ms);
    ensure(ratio <= 0.5, || detail.clone())?;
    Ok(detail)
}

// --- 8 ----------------------------------------------------------------------

fn concurrency_shape() -> Check {
    let cfg = SaturationConfig::default();
    let mut lines = Vec::new();
    let mut saturation = Vec::new();
    for op in [LoadOp::Resolve, LoadOp::Register] {
        let target = Target::new(op).map_err(|e| e.to_string())?;
        let sat = find_saturation(&target, &cfg).map_err(|e| e.to_string())?;
        ensure(sat.saturation_rate > 0.0, || format!("{} never sustained {}/s", op.name(), cfg.start_rate))?;
        let half = run_load(&target, sat.saturation_rate / 2.0, cfg.probe, &cfg.load).map_err(|e| e.to_string())?;
        ensure(half.success_rate == 1.0, || {
            format!("{} success {:.4} at half of {:.0}/s", op.name(), half.success_rate, sat.saturation_rate)
        })?;
        lines.push(format!("{} saturates at {:.0}/s (success 1.0 at {:.0}/s)", op.name(), sat.saturation_rate, half.target_rate));
        saturation.push(sat.saturation_rate);
    }
    let detail = lines.join("; ");
    ensure(saturation[0] > saturation[1], || detail.clone())?;
    Ok(detail)
}
