//! JSON text format for policies.
//!
//! ```json
//! {"policy_id": "<uuid>", "combining": "permit-overrides",
//!  "rules": [{"decision": "permit", "issuers": ["did:polaris:..."],
//!             "conditions": [{"attr": "claims.age", "fn": ">=", "value": 18, "type": "int"}]}],
//!  "signature": {"signer_did": "did:polaris:...", "value": "<base64>"}}
//! ```
//!
//! Unknown fields are rejected. Every invariant is checked at parse time.

use serde_json::{Map, Value};
use uuid::Uuid;

use super::model::*;
use super::PolicyError;
use crate::codec::canonical_json;
use crate::crypto::Signature;
use crate::did::Did;

pub fn parse_policy(text: &[u8]) -> Result<Policy, PolicyError> {
    let value: Value = serde_json::from_slice(text).map_err(|e| PolicyError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    policy_from_value(&value)
}

/// Canonical bytes of the whole policy, signature included when present.
pub fn serialize_policy(policy: &Policy) -> Vec<u8> {
    canonical_json(policy).expect("policy serializes")
}

/// Canonical bytes of the policy with the signature field left out.
pub fn policy_signing_bytes(policy: &Policy) -> Vec<u8> {
    let unsigned = Policy { signature: None, ..policy.clone() };
    serialize_policy(&unsigned)
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> PolicyError {
    PolicyError::Schema { path: path.into(), message: message.into() }
}

fn object<'a>(value: &'a Value, path: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>, PolicyError> {
    let map = value.as_object().ok_or_else(|| schema(path, "expected an object"))?;
    if let Some(unknown) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        let at = if path.is_empty() { unknown.clone() } else { format!("{path}.{unknown}") };
        return Err(schema(at, "unknown field"));
    }
    Ok(map)
}

fn field<'a>(map: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, PolicyError> {
    map.get(key).ok_or_else(|| schema(join(path, key), "missing field"))
}

fn string<'a>(map: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a str, PolicyError> {
    field(map, path, key)?
        .as_str()
        .ok_or_else(|| schema(join(path, key), "expected a string"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

pub(crate) fn policy_from_value(value: &Value) -> Result<Policy, PolicyError> {
    let map = object(value, "", &["policy_id", "combining", "rules", "signature"])?;
    let policy_id = Uuid::parse_str(string(map, "", "policy_id")?)
        .map_err(|e| schema("policy_id", format!("not a UUID: {e}")))?;
    let combining_name = string(map, "", "combining")?;
    let combining = Combining::from_name(combining_name)
        .ok_or_else(|| schema("combining", format!("unknown combining algorithm {combining_name:?}")))?;
    let rules_value = field(map, "", "rules")?
        .as_array()
        .ok_or_else(|| schema("rules", "expected an array"))?;
    let rules = rules_value
        .iter()
        .enumerate()
        .map(|(i, r)| rule_from_value(r, i))
        .collect::<Result<Vec<_>, _>>()?;
    let signature = match map.get("signature") {
        None | Some(Value::Null) => None,
        Some(sig) => Some(signature_from_value(sig)?),
    };
    let policy = Policy { policy_id, rules, combining, signature };
    super::validate(&policy)?;
    Ok(policy)
}

fn rule_from_value(value: &Value, index: usize) -> Result<Rule, PolicyError> {
    let path = format!("rules[{index}]");
    let map = object(value, &path, &["decision", "issuers", "conditions"])?;
    let decision = match string(map, &path, "decision")? {
        "permit" => Effect::Permit,
        "deny" => Effect::Deny,
        other => return Err(schema(join(&path, "decision"), format!("unknown decision {other:?}"))),
    };
    let issuers = match map.get("issuers") {
        None => Vec::new(),
        Some(v) => v
            .as_array()
            .ok_or_else(|| schema(join(&path, "issuers"), "expected an array"))?
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let at = format!("{path}.issuers[{j}]");
                let text = d.as_str().ok_or_else(|| schema(&at, "expected a DID string"))?;
                text.parse::<Did>().map_err(|e| schema(&at, e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let conditions = field(map, &path, "conditions")?
        .as_array()
        .ok_or_else(|| schema(join(&path, "conditions"), "expected an array"))?
        .iter()
        .enumerate()
        .map(|(j, c)| expression_from_value(c, &format!("{path}.conditions[{j}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Rule { conditions, issuers, decision })
}

fn expression_from_value(value: &Value, path: &str) -> Result<Expression, PolicyError> {
    let map = object(value, path, &["attr", "fn", "value", "type"])?;
    let attribute_path = string(map, path, "attr")?.to_string();
    let fn_name = string(map, path, "fn")?;
    let function = Function::from_symbol(fn_name)
        .ok_or_else(|| schema(join(path, "fn"), format!("unknown function {fn_name:?}")))?;
    let type_name = string(map, path, "type")?;
    let value_type = ValueType::from_name(type_name)
        .ok_or_else(|| schema(join(path, "type"), format!("unknown type {type_name:?}")))?;
    let target = literal_from_value(field(map, path, "value")?, &join(path, "value"), true)?;
    Ok(Expression { attribute_path, function, target, value_type })
}

fn literal_from_value(value: &Value, path: &str, allow_list: bool) -> Result<Literal, PolicyError> {
    match value {
        Value::String(s) => Ok(Literal::Str(s.clone())),
        Value::Bool(b) => Ok(Literal::Bool(*b)),
        Value::Number(n) => n
            .as_i64()
            .map(Literal::Int)
            .ok_or_else(|| schema(path, "only 64-bit integers are supported")),
        Value::Array(items) if allow_list => items
            .iter()
            .enumerate()
            .map(|(i, v)| literal_from_value(v, &format!("{path}[{i}]"), false))
            .collect::<Result<Vec<_>, _>>()
            .map(Literal::List),
        Value::Array(_) => Err(schema(path, "nested lists are not allowed")),
        _ => Err(schema(path, "expected a string, integer, boolean or list")),
    }
}

fn signature_from_value(value: &Value) -> Result<PolicySignature, PolicyError> {
    let map = object(value, "signature", &["signer_did", "value"])?;
    let signer_did = string(map, "signature", "signer_did")?
        .parse::<Did>()
        .map_err(|e| schema("signature.signer_did", e.to_string()))?;
    let value: Signature = serde_json::from_value(field(map, "signature", "value")?.clone())
        .map_err(|e| schema("signature.value", e.to_string()))?;
    Ok(PolicySignature { signer_did, value })
}
