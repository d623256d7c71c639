use proptest::prelude::*;
use uuid::Uuid;

use super::*;
use crate::crypto::generate_keypair;
use crate::did::Did;
use crate::presentation::{AttributeTriple, VerifiedAttributes};
use crate::vdr::{DidRegistrar, Registry, VdrError};

const MINIMAL: &str = r#"{
  "policy_id": "0b0e2f5c-8a34-4f6e-9d3c-2a1b7c9d4e11",
  "combining": "permit-overrides",
  "rules": [{"decision": "permit", "issuers": [],
             "conditions": [{"attr": "claims.age", "fn": ">=", "value": 18, "type": "int"}]}]
}"#;

fn did(n: u128) -> Did {
    Did::from_uuid(Uuid::from_u128(n))
}

fn age_rule(issuers: Vec<Did>, decision: Effect) -> Rule {
    Rule {
        conditions: vec![Expression::new("age", Function::Ge, Literal::Int(18), ValueType::Int)],
        issuers,
        decision,
    }
}

fn policy(rules: Vec<Rule>, combining: Combining) -> Policy {
    Policy { policy_id: Uuid::from_u128(7), rules, combining, signature: None }
}

#[test]
fn minimal_document_parses() {
    let p = parse_policy(MINIMAL.as_bytes()).unwrap();
    assert_eq!(p.rules.len(), 1);
    assert_eq!(p.combining, Combining::PermitOverrides);
    assert_eq!(p.rules[0].conditions[0].attribute_name(), "age");
    assert!(p.signature.is_none());
}

#[test]
fn ordering_on_string_is_incompatible() {
    let text = MINIMAL.replace(r#""value": 18, "type": "int""#, r#""value": "18", "type": "string""#);
    match parse_policy(text.as_bytes()) {
        Err(PolicyError::Incompatible { rule: 0, expression: 0, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn compatibility_table() {
    let ok = |f, v, t| {
        let e = Expression::new("x", f, v, t);
        validate(&policy(vec![Rule { conditions: vec![e], issuers: vec![], decision: Effect::Permit }], Combining::FirstApplicable))
            .is_ok()
    };
    assert!(ok(Function::Lt, Literal::Int(1), ValueType::Int));
    assert!(!ok(Function::Lt, Literal::Bool(true), ValueType::Bool));
    assert!(!ok(Function::Ge, Literal::Str("a".into()), ValueType::Int));
    assert!(ok(Function::In, Literal::List(vec![Literal::Str("a".into())]), ValueType::String));
    assert!(!ok(Function::In, Literal::Str("a".into()), ValueType::String));
    assert!(!ok(Function::In, Literal::List(vec![Literal::Int(1)]), ValueType::String));
    assert!(ok(Function::Contains, Literal::Str("a".into()), ValueType::String));
    assert!(!ok(Function::Contains, Literal::Int(1), ValueType::Int));
    assert!(ok(Function::Eq, Literal::Bool(false), ValueType::Bool));
    assert!(!ok(Function::Ne, Literal::Int(1), ValueType::String));
    assert!(!ok(Function::Eq, Literal::List(vec![]), ValueType::String));
}

#[test]
fn syntax_error_reports_position() {
    match parse_policy(b"{\n  \"policy_id\": ,\n}") {
        Err(PolicyError::Syntax { line: 2, column, .. }) => assert!(column > 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn schema_errors_name_the_field() {
    let cases = [
        (MINIMAL.replace("\"fn\"", "\"op\""), "rules[0].conditions[0].op"),
        (MINIMAL.replace("claims.age", "age"), "rules[0].conditions[0].attr"),
        (MINIMAL.replace("claims.age", "claims.person.age"), "rules[0].conditions[0].attr"),
        (MINIMAL.replace("permit-overrides", "majority"), "combining"),
        (MINIMAL.replace("\"permit\"", "\"allow\""), "rules[0].decision"),
        (MINIMAL.replace("\"issuers\": []", "\"issuers\": [\"did:web:x\"]"), "rules[0].issuers[0]"),
        (MINIMAL.replace("0b0e2f5c", "zzzz"), "policy_id"),
        (MINIMAL.replace(r#""value": 18"#, r#""value": 1.5"#), "rules[0].conditions[0].value"),
    ];
    for (text, want) in cases {
        match parse_policy(text.as_bytes()) {
            Err(PolicyError::Schema { path, .. }) => assert_eq!(path, want),
            other => panic!("{want}: {other:?}"),
        }
    }
    let empty = r#"{"policy_id":"0b0e2f5c-8a34-4f6e-9d3c-2a1b7c9d4e11","combining":"deny-overrides","rules":[]}"#;
    assert!(matches!(parse_policy(empty.as_bytes()), Err(PolicyError::Schema { path, .. }) if path == "rules"));
}

#[test]
fn serialization_is_canonical() {
    let p = parse_policy(MINIMAL.as_bytes()).unwrap();
    let a = serialize_policy(&p);
    assert_eq!(a, serialize_policy(&p));
    assert_eq!(serialize_policy(&parse_policy(&a).unwrap()), a);
    assert!(!a.contains(&b' '));
    assert!(a.starts_with(b"{\"combining\":"));
}

#[test]
fn signing_excludes_signature_field() {
    let kp = generate_keypair();
    let p = parse_policy(MINIMAL.as_bytes()).unwrap();
    let signed = sign_policy(&p, did(1), &kp);
    assert_eq!(policy_signing_bytes(&signed), serialize_policy(&p));
    let text = serialize_policy(&signed);
    assert_eq!(parse_policy(&text).unwrap(), signed);
}

#[test]
fn signature_tri_state() {
    let vdr = Registry::in_memory();
    let kp = generate_keypair();
    let owner = vdr.register_did(&kp.public_key(), &Uuid::new_v4().to_string()).unwrap();
    let p = parse_policy(MINIMAL.as_bytes()).unwrap();
    assert_eq!(verify_policy_signature(&p, &vdr), Ok(SignatureStatus::Unsigned));

    let signed = sign_policy(&p, owner, &kp);
    assert_eq!(verify_policy_signature(&signed, &vdr), Ok(SignatureStatus::Valid));

    let mut flipped = signed.clone();
    flipped.rules[0].decision = Effect::Deny;
    assert_eq!(verify_policy_signature(&flipped, &vdr), Ok(SignatureStatus::Invalid));

    let mut stranger = signed.clone();
    stranger.signature.as_mut().unwrap().signer_did = did(99);
    assert!(matches!(verify_policy_signature(&stranger, &vdr), Err(VdrError::NotFound(_))));
}

#[test]
fn expression_examples() {
    let age = Expression::new("age", Function::Ge, Literal::Int(18), ValueType::Int);
    assert!(evaluate_expression(&age, "25"));
    assert!(evaluate_expression(&age, "18"));
    assert!(!evaluate_expression(&age, "17"));
    assert!(!evaluate_expression(&age, "abc"));
    assert_eq!(check_expression(&age, "abc"), ExprResult::CoercionFailed);
    for bad in ["+25", "", "-", "2 5", "25.0", "99999999999999999999"] {
        assert_eq!(check_expression(&age, bad), ExprResult::CoercionFailed, "{bad:?}");
    }
    assert!(!evaluate_expression(&age, "-40"));

    let degree = Expression::new("degree", Function::Eq, Literal::Str("PhD".into()), ValueType::String);
    assert!(evaluate_expression(&degree, "PhD"));
    assert!(!evaluate_expression(&degree, "phd"));

    let member = Expression::new(
        "role",
        Function::In,
        Literal::List(vec![Literal::Str("doctor".into()), Literal::Str("nurse".into())]),
        ValueType::String,
    );
    assert!(evaluate_expression(&member, "nurse"));
    assert!(!evaluate_expression(&member, "admin"));

    let has = Expression::new("dept", Function::Contains, Literal::Str("onc".into()), ValueType::String);
    assert!(evaluate_expression(&has, "oncology"));

    let flag = Expression::new("verified", Function::Eq, Literal::Bool(true), ValueType::Bool);
    assert!(evaluate_expression(&flag, "true"));
    assert_eq!(check_expression(&flag, "True"), ExprResult::CoercionFailed);
}

#[test]
fn rule_examples() {
    let gov = did(1);
    let other = did(2);
    let rule = age_rule(vec![gov], Effect::Permit);
    let t = evaluate_rule(&rule, 0, &[AttributeTriple::new(gov, "age", "25")]);
    assert_eq!(t.outcome, Outcome::Permit);
    assert_eq!(t.matched_bindings.len(), 1);
    assert_eq!(t.matched_bindings[0].issuer_did, gov);

    let t = evaluate_rule(&rule, 0, &[AttributeTriple::new(other, "age", "25")]);
    assert_eq!(t.outcome, Outcome::NotApplicable);

    let any = age_rule(vec![], Effect::Deny);
    assert_eq!(evaluate_rule(&any, 0, &[AttributeTriple::new(other, "age", "25")]).outcome, Outcome::Deny);

    let mut two = age_rule(vec![], Effect::Permit);
    two.conditions.push(Expression::new("degree", Function::Eq, Literal::Str("PhD".into()), ValueType::String));
    let attrs = [AttributeTriple::new(gov, "age", "25"), AttributeTriple::new(gov, "degree", "MSc")];
    assert_eq!(evaluate_rule(&two, 0, &attrs).outcome, Outcome::NotApplicable);

    let t = evaluate_rule(&rule, 0, &[AttributeTriple::new(gov, "age", "old")]);
    assert_eq!(t.outcome, Outcome::NotApplicable);
    assert_eq!(t.coercion_failures.len(), 1);
}

#[test]
fn later_triple_can_satisfy() {
    let gov = did(1);
    let rule = age_rule(vec![gov], Effect::Permit);
    let attrs = [
        AttributeTriple::new(did(2), "age", "30"),
        AttributeTriple::new(gov, "age", "12"),
        AttributeTriple::new(gov, "age", "40"),
    ];
    let t = evaluate_rule(&rule, 0, &attrs);
    assert_eq!(t.outcome, Outcome::Permit);
    assert_eq!(t.matched_bindings[0].triple, 2);
}

#[test]
fn zero_applicable_rules() {
    let p = policy(vec![age_rule(vec![], Effect::Permit)], Combining::PermitOverrides);
    let d = evaluate_policy(&p, &[]);
    assert_eq!(d.outcome, Outcome::NotApplicable);
    assert_eq!(d.trace.len(), 1);
}

#[test]
fn combining_truth_table() {
    use Outcome::{Deny as D, NotApplicable as N, Permit as P};
    // (first, second) -> (permit-overrides, deny-overrides, first-applicable)
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
    for (a, b, po, dov, fa) in table {
        assert_eq!(combine(Combining::PermitOverrides, &[a, b]), po, "{a:?} {b:?}");
        assert_eq!(combine(Combining::DenyOverrides, &[a, b]), dov, "{a:?} {b:?}");
        assert_eq!(combine(Combining::FirstApplicable, &[a, b]), fa, "{a:?} {b:?}");
    }
    assert_eq!(combine(Combining::FirstApplicable, &[N, D, P]), D);
}

#[test]
fn policy_trace_matches_rules() {
    let gov = did(1);
    let p = policy(
        vec![
            Rule {
                conditions: vec![Expression::new("age", Function::Lt, Literal::Int(18), ValueType::Int)],
                issuers: vec![],
                decision: Effect::Deny,
            },
            age_rule(vec![gov], Effect::Permit),
        ],
        Combining::DenyOverrides,
    );
    let d = evaluate_policy(&p, &[AttributeTriple::new(gov, "age", "25")]);
    assert_eq!(d.outcome, Outcome::Permit);
    assert_eq!(d.trace.iter().map(|t| t.outcome).collect::<Vec<_>>(), vec![Outcome::NotApplicable, Outcome::Permit]);
    let batch = vec![
        VerifiedAttributes { triples: vec![AttributeTriple::new(gov, "age", "10")] },
        VerifiedAttributes { triples: vec![AttributeTriple::new(gov, "age", "30")] },
    ];
    assert_eq!(evaluate_batch(&p, &batch), evaluate_batch_sequential(&p, &batch));
    assert_eq!(evaluate_batch(&p, &batch)[0].outcome, Outcome::Deny);
}

const NAMES: [&str; 3] = ["age", "role", "member"];

fn arb_expression() -> impl Strategy<Value = Expression> {
    prop_oneof![
        (prop::sample::select(Function::ALL.to_vec()), 0i64..4).prop_map(|(f, v)| {
            let f = if f == Function::In || f == Function::Contains { Function::Eq } else { f };
            Expression::new("age", f, Literal::Int(v), ValueType::Int)
        }),
        (0usize..4, any::<bool>()).prop_map(|(v, list)| {
            let roles = ["a", "b", "ab", "c"];
            if list {
                Expression::new(
                    "role",
                    Function::In,
                    Literal::List(roles[..=v].iter().map(|r| Literal::Str(r.to_string())).collect()),
                    ValueType::String,
                )
            } else {
                Expression::new("role", Function::Contains, Literal::Str(roles[v].into()), ValueType::String)
            }
        }),
        any::<bool>().prop_map(|b| Expression::new("member", Function::Ne, Literal::Bool(b), ValueType::Bool)),
    ]
}

fn arb_rule() -> impl Strategy<Value = Rule> {
    (
        prop::collection::vec(arb_expression(), 1..=3),
        prop::collection::vec((1u128..=2).prop_map(did), 0..=2),
        prop::bool::ANY.prop_map(|p| if p { Effect::Permit } else { Effect::Deny }),
    )
        .prop_map(|(conditions, issuers, decision)| Rule { conditions, issuers, decision })
}

fn arb_policy() -> impl Strategy<Value = Policy> {
    (
        prop::collection::vec(arb_rule(), 1..=3),
        prop::sample::select(Combining::ALL.to_vec()),
        any::<u128>(),
    )
        .prop_map(|(rules, combining, id)| Policy { policy_id: Uuid::from_u128(id), rules, combining, signature: None })
}

fn arb_triples() -> impl Strategy<Value = Vec<AttributeTriple>> {
    let values = ["0", "1", "3", "a", "ab", "true", "false", "x"];
    prop::collection::vec(
        ((1u128..=2), 0usize..NAMES.len(), prop::sample::select(values.to_vec()))
            .prop_map(|(i, n, v)| AttributeTriple::new(did(i), NAMES[n], v)),
        0..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_serialize_roundtrip(p in arb_policy()) {
        let bytes = serialize_policy(&p);
        let back = parse_policy(&bytes).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(serialize_policy(&back), bytes);
    }

    #[test]
    fn override_algorithms_ignore_rule_order(p in arb_policy(), attrs in arb_triples(), seed in any::<u64>()) {
        prop_assume!(p.combining != Combining::FirstApplicable);
        let before = evaluate_policy(&p, &attrs).outcome;
        let mut shuffled = p.clone();
        let n = shuffled.rules.len();
        shuffled.rules.rotate_left((seed as usize) % n);
        if seed & 1 == 1 {
            shuffled.rules.reverse();
        }
        prop_assert_eq!(evaluate_policy(&shuffled, &attrs).outcome, before);
    }

    #[test]
    fn permit_overrides_is_monotone(p in arb_policy(), attrs in arb_triples(), extra in arb_triples()) {
        let p = Policy { combining: Combining::PermitOverrides, ..p };
        if evaluate_policy(&p, &attrs).outcome == Outcome::Permit {
            let mut more = attrs.clone();
            more.extend(extra);
            prop_assert_eq!(evaluate_policy(&p, &more).outcome, Outcome::Permit);
        }
    }
}
