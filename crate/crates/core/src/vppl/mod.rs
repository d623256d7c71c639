//! Policy language: data model, JSON text format, signing and the decision
//! engine that evaluates policies against verified attribute triples.

mod eval;
mod model;
mod parse;
mod sign;

pub use eval::*;
pub use model::*;
pub use parse::{parse_policy, policy_signing_bytes, serialize_policy};
pub use sign::{sign_policy, verify_policy_signature, SignatureStatus};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("rule {rule}, expression {expression}: {message}")]
    Incompatible { rule: usize, expression: usize, message: String },
}

/// Checks every structural invariant of a policy value.
pub fn validate(policy: &Policy) -> Result<(), PolicyError> {
    if policy.rules.is_empty() {
        return Err(PolicyError::Schema { path: "rules".into(), message: "at least one rule is required".into() });
    }
    for (r, rule) in policy.rules.iter().enumerate() {
        if rule.conditions.is_empty() {
            return Err(PolicyError::Schema {
                path: format!("rules[{r}].conditions"),
                message: "at least one condition is required".into(),
            });
        }
        for (e, expr) in rule.conditions.iter().enumerate() {
            check_path(&expr.attribute_path).map_err(|message| PolicyError::Schema {
                path: format!("rules[{r}].conditions[{e}].attr"),
                message,
            })?;
            check_compatible(expr).map_err(|message| PolicyError::Incompatible { rule: r, expression: e, message })?;
        }
    }
    Ok(())
}

fn check_path(path: &str) -> Result<(), String> {
    let name = path
        .strip_prefix(CLAIMS_PREFIX)
        .ok_or_else(|| format!("attribute path must start with {CLAIMS_PREFIX:?}"))?;
    if name.is_empty() {
        return Err("attribute name is empty".into());
    }
    if name.contains('.') {
        return Err("nested attribute paths are not supported".into());
    }
    Ok(())
}

fn check_compatible(expr: &Expression) -> Result<(), String> {
    let ty = expr.value_type;
    let f = expr.function;
    match f {
        _ if f.is_ordering() && ty != ValueType::Int => Err(format!("`{f}` requires type int")),
        Function::In => match &expr.target {
            Literal::List(items) if items.iter().all(|i| i.matches_type(ty)) => Ok(()),
            Literal::List(_) => Err("list elements must match the declared type".into()),
            _ => Err("`in` requires a list value".into()),
        },
        Function::Contains if ty != ValueType::String => Err("`contains` requires type string".into()),
        _ if expr.target.matches_type(ty) => Ok(()),
        _ => Err(format!("value does not match declared type {ty:?}")),
    }
}

#[cfg(test)]
mod tests;
