use serde::{Deserialize, Serialize};

use super::model::*;
use crate::did::Did;
use crate::par;
use crate::presentation::{AttributeTriple, VerifiedAttributes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Permit,
    Deny,
    NotApplicable,
}

impl From<Effect> for Outcome {
    fn from(e: Effect) -> Self {
        match e {
            Effect::Permit => Outcome::Permit,
            Effect::Deny => Outcome::Deny,
        }
    }
}

/// A triple that satisfied one expression of a rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub expression: usize,
    pub triple: usize,
    pub issuer_did: Did,
    pub name: String,
    pub value: String,
}

/// A disclosed value that could not be coerced to the expression's type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoercionFailure {
    pub expression: usize,
    pub triple: usize,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub rule_index: usize,
    pub outcome: Outcome,
    pub matched_bindings: Vec<Binding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coercion_failures: Vec<CoercionFailure>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub trace: Vec<RuleTrace>,
}

impl Decision {
    pub fn is_permit(&self) -> bool {
        self.outcome == Outcome::Permit
    }
}

/// Result of testing one disclosed value against one expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExprResult {
    True,
    False,
    CoercionFailed,
}

fn coerce(value: &str, ty: ValueType) -> Option<Literal> {
    match ty {
        ValueType::String => Some(Literal::Str(value.to_string())),
        ValueType::Int => {
            let digits = value.strip_prefix('-').unwrap_or(value);
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            value.parse().ok().map(Literal::Int)
        }
        ValueType::Bool => match value {
            "true" => Some(Literal::Bool(true)),
            "false" => Some(Literal::Bool(false)),
            _ => None,
        },
    }
}

pub fn check_expression(expr: &Expression, value: &str) -> ExprResult {
    let Some(v) = coerce(value, expr.value_type) else {
        return ExprResult::CoercionFailed;
    };
    let hit = match (expr.function, &v, &expr.target) {
        (Function::Eq, v, t) => v == t,
        (Function::Ne, v, t) => v != t,
        (Function::Ge, Literal::Int(a), Literal::Int(b)) => a >= b,
        (Function::Le, Literal::Int(a), Literal::Int(b)) => a <= b,
        (Function::Gt, Literal::Int(a), Literal::Int(b)) => a > b,
        (Function::Lt, Literal::Int(a), Literal::Int(b)) => a < b,
        (Function::In, v, Literal::List(items)) => items.contains(v),
        (Function::Contains, Literal::Str(a), Literal::Str(b)) => a.contains(b.as_str()),
        _ => false,
    };
    if hit {
        ExprResult::True
    } else {
        ExprResult::False
    }
}

/// Total: coercion failure is simply `false`.
pub fn evaluate_expression(expr: &Expression, value: &str) -> bool {
    check_expression(expr, value) == ExprResult::True
}

/// Every condition needs a triple with the right name, a true comparison and
/// an acceptable issuer. One triple may satisfy several conditions.
pub fn evaluate_rule(rule: &Rule, index: usize, attrs: &[AttributeTriple]) -> RuleTrace {
    let mut matched_bindings = Vec::new();
    let mut coercion_failures = Vec::new();
    let mut all = true;
    for (e, expr) in rule.conditions.iter().enumerate() {
        let name = expr.attribute_name();
        let mut found = None;
        for (t, triple) in attrs.iter().enumerate() {
            if triple.name != name {
                continue;
            }
            match check_expression(expr, &triple.value) {
                ExprResult::CoercionFailed => {
                    coercion_failures.push(CoercionFailure { expression: e, triple: t, value: triple.value.clone() })
                }
                ExprResult::False => {}
                ExprResult::True => {
                    if rule.issuers.is_empty() || rule.issuers.contains(&triple.issuer_did) {
                        found = Some((t, triple));
                        break;
                    }
                }
            }
        }
        match found {
            Some((t, triple)) => matched_bindings.push(Binding {
                expression: e,
                triple: t,
                issuer_did: triple.issuer_did,
                name: triple.name.clone(),
                value: triple.value.clone(),
            }),
            None => all = false,
        }
    }
    let outcome = if all { rule.decision.into() } else { Outcome::NotApplicable };
    RuleTrace { rule_index: index, outcome, matched_bindings, coercion_failures }
}

pub fn combine(combining: Combining, outcomes: &[Outcome]) -> Outcome {
    let any = |o: Outcome| outcomes.contains(&o);
    match combining {
        Combining::PermitOverrides if any(Outcome::Permit) => Outcome::Permit,
        Combining::PermitOverrides if any(Outcome::Deny) => Outcome::Deny,
        Combining::DenyOverrides if any(Outcome::Deny) => Outcome::Deny,
        Combining::DenyOverrides if any(Outcome::Permit) => Outcome::Permit,
        Combining::FirstApplicable => outcomes
            .iter()
            .copied()
            .find(|o| *o != Outcome::NotApplicable)
            .unwrap_or(Outcome::NotApplicable),
        _ => Outcome::NotApplicable,
    }
}

pub fn evaluate_policy(policy: &Policy, attrs: &[AttributeTriple]) -> Decision {
    let trace: Vec<RuleTrace> = policy
        .rules
        .iter()
        .enumerate()
        .map(|(i, rule)| evaluate_rule(rule, i, attrs))
        .collect();
    let outcomes: Vec<Outcome> = trace.iter().map(|t| t.outcome).collect();
    Decision { outcome: combine(policy.combining, &outcomes), trace }
}

/// Evaluates one policy against many attribute sets.
pub fn evaluate_batch(policy: &Policy, batch: &[VerifiedAttributes]) -> Vec<Decision> {
    par::map(batch, |attrs| evaluate_policy(policy, attrs))
}

pub fn evaluate_batch_sequential(policy: &Policy, batch: &[VerifiedAttributes]) -> Vec<Decision> {
    batch.iter().map(|attrs| evaluate_policy(policy, attrs)).collect()
}
