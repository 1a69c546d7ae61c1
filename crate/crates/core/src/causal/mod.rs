//! High-level causal models and interchange interventions on them.

mod hypotheses;
mod model;
mod value;

pub use hypotheses::{make_hypothesis, model_from_json, model_to_json, tau, Hypothesis, AMOUNT, ANSWER, LOWER, UPPER};
pub use model::{Arg, CausalModel, Expr, Interchange, InterventionSpec, Variable, VariableSetting};
pub use value::{Amount, Domain, Label, Value};
