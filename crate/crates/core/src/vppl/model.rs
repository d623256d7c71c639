use std::fmt;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

use crate::crypto::Signature;
use crate::did::Did;

/// Prefix every attribute path carries; the remainder is the attribute name.
pub const CLAIMS_PREFIX: &str = "claims.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Function {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "in")]
    In,
    #[serde(rename = "contains")]
    Contains,
}

impl Function {
    pub const ALL: [Function; 8] = [
        Function::Eq,
        Function::Ne,
        Function::Ge,
        Function::Le,
        Function::Gt,
        Function::Lt,
        Function::In,
        Function::Contains,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Function::Eq => "==",
            Function::Ne => "!=",
            Function::Ge => ">=",
            Function::Le => "<=",
            Function::Gt => ">",
            Function::Lt => "<",
            Function::In => "in",
            Function::Contains => "contains",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Function::ALL.into_iter().find(|f| f.symbol() == s)
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, Function::Ge | Function::Le | Function::Gt | Function::Lt)
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Int,
    Bool,
}

impl ValueType {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "string" => Some(ValueType::String),
            "int" => Some(ValueType::Int),
            "bool" => Some(ValueType::Bool),
            _ => None,
        }
    }
}

/// A typed target value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Str(String),
    Int(i64),
    Bool(bool),
    List(Vec<Literal>),
}

impl Literal {
    pub fn matches_type(&self, ty: ValueType) -> bool {
        matches!(
            (self, ty),
            (Literal::Str(_), ValueType::String)
                | (Literal::Int(_), ValueType::Int)
                | (Literal::Bool(_), ValueType::Bool)
        )
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Literal::Str(v) => s.serialize_str(v),
            Literal::Int(v) => s.serialize_i64(*v),
            Literal::Bool(v) => s.serialize_bool(*v),
            Literal::List(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
        }
    }
}

/// One atomic predicate `(attribute path, function, target, type)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Expression {
    #[serde(rename = "attr")]
    pub attribute_path: String,
    #[serde(rename = "fn")]
    pub function: Function,
    #[serde(rename = "value")]
    pub target: Literal,
    #[serde(rename = "type")]
    pub value_type: ValueType,
}

impl Expression {
    pub fn new(attribute: &str, function: Function, target: Literal, value_type: ValueType) -> Self {
        Expression {
            attribute_path: format!("{CLAIMS_PREFIX}{attribute}"),
            function,
            target,
            value_type,
        }
    }

    /// The flat attribute name this path addresses.
    pub fn attribute_name(&self) -> &str {
        self.attribute_path
            .strip_prefix(CLAIMS_PREFIX)
            .unwrap_or(&self.attribute_path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Permit,
    Deny,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Rule {
    pub conditions: Vec<Expression>,
    /// Acceptable issuers; empty accepts any registered issuer.
    pub issuers: Vec<Did>,
    pub decision: Effect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Combining {
    #[serde(rename = "permit-overrides")]
    PermitOverrides,
    #[serde(rename = "deny-overrides")]
    DenyOverrides,
    #[serde(rename = "first-applicable")]
    FirstApplicable,
}

impl Combining {
    pub const ALL: [Combining; 3] =
        [Combining::PermitOverrides, Combining::DenyOverrides, Combining::FirstApplicable];

    pub fn name(self) -> &'static str {
        match self {
            Combining::PermitOverrides => "permit-overrides",
            Combining::DenyOverrides => "deny-overrides",
            Combining::FirstApplicable => "first-applicable",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Combining::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PolicySignature {
    pub signer_did: Did,
    pub value: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Policy {
    pub policy_id: Uuid,
    pub rules: Vec<Rule>,
    pub combining: Combining,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature: Option<PolicySignature>,
}

/// Deserializing goes through the validating parser, so a `Policy` embedded
/// in a larger message obeys the same rules as a policy file.
impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        super::parse::policy_from_value(&value).map_err(serde::de::Error::custom)
    }
}
