//! Values and domains of high-level variables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Task output. `Yes` is class 0 and `No` class 1 in every logit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

impl Label {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Yes => 0,
            Label::No => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Yes
        } else {
            Label::No
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Yes => "Yes",
            Label::No => "No",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Yes" | "yes" => Ok(Label::Yes),
            "No" | "no" => Ok(Label::No),
            other => Err(Error::Spec(format!("not a label: `{other}`"))),
        }
    }
}

/// Exact money amount in half-cents. Task inputs are whole cents; the
/// midpoint of two cent amounts can land on a half cent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Amount(i64);

impl Amount {
    pub fn from_cents(cents: i64) -> Self {
        Amount(2 * cents)
    }

    pub fn from_half_cents(h: i64) -> Self {
        Amount(h)
    }

    pub fn half_cents(self) -> i64 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 200.0
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cents = self.0.div_euclid(2);
        let sign = if cents < 0 { "-" } else { "" };
        let c = cents.abs();
        write!(f, "{sign}{}.{:02}", c / 100, c % 100)?;
        if self.0.rem_euclid(2) == 1 {
            f.write_str("5")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Boolean,
    Real,
    Interval,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Real(Amount),
    /// Closed interval `[lo, hi]`.
    Interval(Amount, Amount),
    Label(Label),
}

impl Value {
    pub fn domain(&self) -> Domain {
        match self {
            Value::Bool(_) => Domain::Boolean,
            Value::Real(_) => Domain::Real,
            Value::Interval(..) => Domain::Interval,
            Value::Label(_) => Domain::Label,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Label(l) => Some(*l == Label::Yes),
            _ => None,
        }
    }

    pub fn as_amount(&self) -> Option<Amount> {
        match self {
            Value::Real(a) => Some(*a),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<Label> {
        match self {
            Value::Label(l) => Some(*l),
            _ => None,
        }
    }

    /// Casts into `domain` where that is lossless (booleans to labels and
    /// back); otherwise the domains must already agree.
    pub fn coerce(self, domain: Domain) -> Result<Value> {
        match (self, domain) {
            (v, d) if v.domain() == d => Ok(v),
            (Value::Bool(b), Domain::Label) => Ok(Value::Label(Label::from_bool(b))),
            (Value::Label(l), Domain::Boolean) => Ok(Value::Bool(l == Label::Yes)),
            (v, d) => Err(Error::Spec(format!("value {v} does not lie in domain {d:?}"))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Real(a) => write!(f, "{a}"),
            Value::Interval(lo, hi) => write!(f, "[{lo}, {hi}]"),
            Value::Label(l) => write!(f, "{l}"),
        }
    }
}
