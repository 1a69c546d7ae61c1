//! The four Price Tagging hypotheses, the input translation `tau`, and
//! loading models from JSON documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::causal::model::{Arg, CausalModel, Expr, Variable, VariableSetting};
use crate::causal::value::{Amount, Domain, Value};
use crate::error::{Error, Result};
use crate::target::TaskInstance;

pub const LOWER: &str = "lower";
pub const UPPER: &str = "upper";
pub const AMOUNT: &str = "amount";
pub const ANSWER: &str = "answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    LeftBoundary,
    LeftAndRightBoundary,
    MidpointDistance,
    BracketIdentity,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 4] = [
        Hypothesis::LeftBoundary,
        Hypothesis::LeftAndRightBoundary,
        Hypothesis::MidpointDistance,
        Hypothesis::BracketIdentity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::LeftBoundary => "LeftBoundary",
            Hypothesis::LeftAndRightBoundary => "LeftAndRightBoundary",
            Hypothesis::MidpointDistance => "MidpointDistance",
            Hypothesis::BracketIdentity => "BracketIdentity",
        }
    }

    pub fn model(self) -> CausalModel {
        let v = Arg::var;
        let inputs = || {
            vec![
                Variable::input(LOWER, Domain::Real),
                Variable::input(UPPER, Domain::Real),
                Variable::input(AMOUNT, Domain::Real),
            ]
        };
        let mut vars = inputs();
        match self {
            Hypothesis::LeftBoundary => {
                vars.push(
                    Variable::computed("above_lower", Domain::Boolean, &[AMOUNT, LOWER], Expr::Ge(v(AMOUNT), v(LOWER)))
                        .alignable(),
                );
                vars.push(Variable::computed(
                    ANSWER,
                    Domain::Label,
                    &["above_lower", AMOUNT, UPPER],
                    Expr::Conjunction(vec![v("above_lower"), Arg::Expr(Box::new(Expr::Le(v(AMOUNT), v(UPPER))))]),
                ));
            }
            Hypothesis::LeftAndRightBoundary => {
                vars.push(
                    Variable::computed("above_lower", Domain::Boolean, &[AMOUNT, LOWER], Expr::Ge(v(AMOUNT), v(LOWER)))
                        .alignable(),
                );
                vars.push(
                    Variable::computed("below_upper", Domain::Boolean, &[AMOUNT, UPPER], Expr::Le(v(AMOUNT), v(UPPER)))
                        .alignable(),
                );
                vars.push(Variable::computed(
                    ANSWER,
                    Domain::Label,
                    &["above_lower", "below_upper"],
                    Expr::Conjunction(vec![v("above_lower"), v("below_upper")]),
                ));
            }
            Hypothesis::MidpointDistance => {
                vars.push(
                    Variable::computed("midpoint", Domain::Real, &[LOWER, UPPER], Expr::Midpoint(v(LOWER), v(UPPER)))
                        .alignable(),
                );
                vars.push(Variable::computed(
                    "distance",
                    Domain::Real,
                    &[AMOUNT, "midpoint"],
                    Expr::AbsoluteDistance(v(AMOUNT), v("midpoint")),
                ));
                vars.push(Variable::computed(
                    "half_width",
                    Domain::Real,
                    &[LOWER, UPPER],
                    Expr::HalfDistance(v(UPPER), v(LOWER)),
                ));
                vars.push(Variable::computed(
                    ANSWER,
                    Domain::Label,
                    &["distance", "half_width"],
                    Expr::Le(v("distance"), v("half_width")),
                ));
            }
            Hypothesis::BracketIdentity => {
                vars.push(
                    Variable::computed("bracket", Domain::Interval, &[LOWER, UPPER], Expr::Interval(v(LOWER), v(UPPER)))
                        .alignable(),
                );
                vars.push(Variable::computed(
                    ANSWER,
                    Domain::Label,
                    &[AMOUNT, "bracket"],
                    Expr::IntervalMembership(v(AMOUNT), v("bracket")),
                ));
            }
        }
        CausalModel::new(self.name(), vars, ANSWER).expect("builtin hypotheses are well formed")
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Hypothesis::ALL
            .into_iter()
            .find(|h| h.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Hypothesis(format!("unknown hypothesis `{s}`")))
    }
}

/// Builds one of the four builtin models by name.
pub fn make_hypothesis(name: &str) -> Result<CausalModel> {
    Ok(name.parse::<Hypothesis>()?.model())
}

/// High-level input setting of a task instance.
pub fn tau(instance: &TaskInstance) -> VariableSetting {
    let [l, u, x] = instance.cents();
    VariableSetting::new()
        .with(LOWER, Value::Real(Amount::from_cents(l as i64)))
        .with(UPPER, Value::Real(Amount::from_cents(u as i64)))
        .with(AMOUNT, Value::Real(Amount::from_cents(x as i64)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    name: String,
    output: String,
    variables: Vec<Variable>,
}

/// Parses a model document:
/// `{"name": …, "output": …, "variables": [{"name", "domain", "parents", "mechanism", "alignable"}]}`.
pub fn model_from_json(text: &str) -> Result<CausalModel> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    CausalModel::new(&doc.name, doc.variables, &doc.output)
}

/// Serializes a model into the document format read by [`model_from_json`].
pub fn model_to_json(model: &CausalModel) -> Result<String> {
    let doc = serde_json::json!({
        "name": model.name(),
        "output": model.output(),
        "variables": model.variables(),
    });
    Ok(serde_json::to_string_pretty(&doc)?)
}
