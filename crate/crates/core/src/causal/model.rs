//! Deterministic causal models over named variables, and interchange
//! interventions on them.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::causal::value::{Amount, Domain, Label, Value};
use crate::error::{Error, Result};

/// Operand of a mechanism: either a parent variable or a nested expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Var(String),
    Expr(Box<Expr>),
}

impl Arg {
    pub fn var(name: &str) -> Self {
        Arg::Var(name.to_string())
    }

    fn eval(&self, values: &HashMap<&str, Value>) -> Result<Value> {
        match self {
            Arg::Var(name) => values
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::Spec(format!("mechanism reads unset variable `{name}`"))),
            Arg::Expr(e) => e.eval(values),
        }
    }

    fn collect_refs<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Arg::Var(name) => {
                out.insert(name);
            }
            Arg::Expr(e) => e.collect_refs(out),
        }
    }
}

/// Builtin mechanism vocabulary. Comparisons are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "kebab-case")]
pub enum Expr {
    /// `a ≥ b`
    Ge(Arg, Arg),
    /// `a ≤ b`
    Le(Arg, Arg),
    /// Logical and of booleans.
    #[serde(rename = "and")]
    Conjunction(Vec<Arg>),
    /// `(a + b) / 2`
    Midpoint(Arg, Arg),
    /// `|a − b|`
    AbsoluteDistance(Arg, Arg),
    /// `|a − b| / 2`
    HalfDistance(Arg, Arg),
    /// Closed interval `[lo, hi]`.
    Interval(Arg, Arg),
    /// `value ∈ interval`
    IntervalMembership(Arg, Arg),
}

fn amount(v: Value, op: &str) -> Result<Amount> {
    v.as_amount().ok_or_else(|| Error::Spec(format!("{op} expects real operands, got {v}")))
}

fn boolean(v: Value, op: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| Error::Spec(format!("{op} expects boolean operands, got {v}")))
}

fn halve(h: i64, op: &str) -> Result<Amount> {
    if h % 2 != 0 {
        return Err(Error::Spec(format!("{op} leaves the half-cent grid")));
    }
    Ok(Amount::from_half_cents(h / 2))
}

impl Expr {
    pub fn eval(&self, values: &HashMap<&str, Value>) -> Result<Value> {
        Ok(match self {
            Expr::Ge(a, b) => Value::Bool(amount(a.eval(values)?, "ge")? >= amount(b.eval(values)?, "ge")?),
            Expr::Le(a, b) => Value::Bool(amount(a.eval(values)?, "le")? <= amount(b.eval(values)?, "le")?),
            Expr::Conjunction(args) => {
                let mut all = true;
                for a in args {
                    all &= boolean(a.eval(values)?, "and")?;
                }
                Value::Bool(all)
            }
            Expr::Midpoint(a, b) => {
                let s = amount(a.eval(values)?, "midpoint")?.half_cents()
                    + amount(b.eval(values)?, "midpoint")?.half_cents();
                Value::Real(halve(s, "midpoint")?)
            }
            Expr::AbsoluteDistance(a, b) => {
                let d = amount(a.eval(values)?, "absolute-distance")?.half_cents()
                    - amount(b.eval(values)?, "absolute-distance")?.half_cents();
                Value::Real(Amount::from_half_cents(d.abs()))
            }
            Expr::HalfDistance(a, b) => {
                let d = amount(a.eval(values)?, "half-distance")?.half_cents()
                    - amount(b.eval(values)?, "half-distance")?.half_cents();
                Value::Real(halve(d.abs(), "half-distance")?)
            }
            Expr::Interval(lo, hi) => {
                let lo = amount(lo.eval(values)?, "interval")?;
                let hi = amount(hi.eval(values)?, "interval")?;
                Value::Interval(lo, hi)
            }
            Expr::IntervalMembership(v, iv) => {
                let x = amount(v.eval(values)?, "interval-membership")?;
                match iv.eval(values)? {
                    Value::Interval(lo, hi) => Value::Bool(lo <= x && x <= hi),
                    other => {
                        return Err(Error::Spec(format!("interval-membership expects an interval, got {other}")))
                    }
                }
            }
        })
    }

    fn collect_refs<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Conjunction(args) => args.iter().for_each(|a| a.collect_refs(out)),
            Expr::Ge(a, b)
            | Expr::Le(a, b)
            | Expr::Midpoint(a, b)
            | Expr::AbsoluteDistance(a, b)
            | Expr::HalfDistance(a, b)
            | Expr::Interval(a, b)
            | Expr::IntervalMembership(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    /// Variable names the expression reads.
    pub fn references(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
    /// Empty for input variables.
    #[serde(default)]
    pub parents: Vec<String>,
    /// `None` marks an input variable.
    #[serde(default)]
    pub mechanism: Option<Expr>,
    /// Intermediate variables that alignment search may map to a subspace.
    #[serde(default)]
    pub alignable: bool,
}

impl Variable {
    pub fn input(name: &str, domain: Domain) -> Self {
        Self { name: name.into(), domain, parents: vec![], mechanism: None, alignable: false }
    }

    pub fn computed(name: &str, domain: Domain, parents: &[&str], mechanism: Expr) -> Self {
        Self {
            name: name.into(),
            domain,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            mechanism: Some(mechanism),
            alignable: false,
        }
    }

    pub fn alignable(mut self) -> Self {
        self.alignable = true;
        self
    }

    pub fn is_input(&self) -> bool {
        self.mechanism.is_none()
    }
}

/// Assignment of values to (some or all) variables, ordered by name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VariableSetting(BTreeMap<String, Value>);

impl VariableSetting {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: Value) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One interchange: every variable in `targets` takes the value it has
/// when the model runs on `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interchange {
    pub targets: Vec<String>,
    pub source: VariableSetting,
}

/// Interchanges with pairwise-disjoint target sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterventionSpec {
    pub interchanges: Vec<Interchange>,
}

impl InterventionSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, targets: &[&str], source: VariableSetting) -> Self {
        self.interchanges.push(Interchange {
            targets: targets.iter().map(|t| t.to_string()).collect(),
            source,
        });
        self
    }
}

/// Acyclic deterministic causal model. Variables are kept in a
/// topological order fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalModel {
    name: String,
    variables: Vec<Variable>,
    output: String,
    index: HashMap<String, usize>,
}

impl CausalModel {
    /// Validates the variable list and orders it topologically.
    pub fn new(name: &str, variables: Vec<Variable>, output: &str) -> Result<Self> {
        let mut by_name: HashMap<String, Variable> = HashMap::new();
        let mut declared = Vec::new();
        for v in variables {
            if by_name.contains_key(&v.name) {
                return Err(Error::Spec(format!("duplicate variable `{}`", v.name)));
            }
            declared.push(v.name.clone());
            by_name.insert(v.name.clone(), v);
        }
        for v in by_name.values() {
            match &v.mechanism {
                None if !v.parents.is_empty() => {
                    return Err(Error::Spec(format!("input `{}` declares parents", v.name)))
                }
                None if v.alignable => {
                    return Err(Error::Spec(format!("input `{}` cannot be alignable", v.name)))
                }
                None => {}
                Some(m) => {
                    for p in &v.parents {
                        if !by_name.contains_key(p) {
                            return Err(Error::Spec(format!("`{}` has unknown parent `{p}`", v.name)));
                        }
                    }
                    for r in m.references() {
                        if !v.parents.iter().any(|p| p == r) {
                            return Err(Error::Spec(format!(
                                "mechanism of `{}` reads `{r}`, which is not a declared parent",
                                v.name
                            )));
                        }
                    }
                }
            }
        }
        let out = by_name
            .get(output)
            .ok_or_else(|| Error::Spec(format!("unknown output variable `{output}`")))?;
        if out.is_input() {
            return Err(Error::Spec("output must not be an input variable".into()));
        }

        // Kahn's algorithm, breaking ties by declaration order.
        let mut order: Vec<String> = Vec::with_capacity(declared.len());
        let mut placed: BTreeSet<String> = BTreeSet::new();
        while order.len() < declared.len() {
            let next = declared.iter().find(|n| {
                !placed.contains(*n) && by_name[*n].parents.iter().all(|p| placed.contains(p))
            });
            match next {
                Some(n) => {
                    placed.insert(n.clone());
                    order.push(n.clone());
                }
                None => return Err(Error::Spec("mechanism graph has a cycle".into())),
            }
        }
        let variables: Vec<Variable> = order.iter().map(|n| by_name.remove(n).expect("placed")).collect();
        let index = variables.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();
        Ok(Self { name: name.to_string(), variables, output: output.to_string(), index })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Variables in evaluation order.
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.index.get(name).map(|&i| &self.variables[i])
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(|v| v.is_input())
    }

    /// Alignable intermediate variables, in evaluation order.
    pub fn alignable(&self) -> Vec<&str> {
        self.variables.iter().filter(|v| v.alignable).map(|v| v.name.as_str()).collect()
    }

    /// Transitive children of `name`, excluding `name` itself.
    pub fn descendants(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![name.to_string()];
        while let Some(cur) = frontier.pop() {
            for v in &self.variables {
                if v.parents.contains(&cur) && out.insert(v.name.clone()) {
                    frontier.push(v.name.clone());
                }
            }
        }
        out
    }

    /// Complete setting of all variables for an input setting.
    pub fn evaluate(&self, input: &VariableSetting) -> Result<VariableSetting> {
        self.evaluate_clamped(input, &BTreeMap::new())
    }

    /// Output value for an input setting.
    pub fn output_label(&self, input: &VariableSetting) -> Result<Label> {
        let full = self.evaluate(input)?;
        self.label_of(&full)
    }

    fn label_of(&self, full: &VariableSetting) -> Result<Label> {
        full.get(&self.output)
            .and_then(|v| v.as_label())
            .ok_or_else(|| Error::Spec(format!("output `{}` is not a label", self.output)))
    }

    /// Evaluation where clamped variables ignore their mechanisms.
    fn evaluate_clamped(&self, input: &VariableSetting, clamps: &BTreeMap<String, Value>) -> Result<VariableSetting> {
        let mut values: HashMap<&str, Value> = HashMap::with_capacity(self.variables.len());
        for v in &self.variables {
            let value = if let Some(c) = clamps.get(&v.name) {
                *c
            } else if let Some(m) = &v.mechanism {
                m.eval(&values)?
            } else {
                input.get(&v.name).ok_or_else(|| Error::IncompleteInput(v.name.clone()))?
            };
            values.insert(v.name.as_str(), value.coerce(v.domain)?);
        }
        Ok(VariableSetting(values.into_iter().map(|(k, v)| (k.to_string(), v)).collect()))
    }

    fn validate_spec(&self, spec: &InterventionSpec) -> Result<()> {
        let mut seen = BTreeSet::new();
        for ic in &spec.interchanges {
            for t in &ic.targets {
                let var = self
                    .variable(t)
                    .ok_or_else(|| Error::Spec(format!("intervention target `{t}` is not a variable")))?;
                if var.is_input() {
                    return Err(Error::Spec(format!("intervention target `{t}` is an input variable")));
                }
                if !seen.insert(t.clone()) {
                    return Err(Error::Spec(format!("target `{t}` appears in more than one target set")));
                }
            }
        }
        Ok(())
    }

    /// Full setting of the model on `base` after clamping each target set
    /// to its value under the corresponding source.
    pub fn interchange_setting(&self, base: &VariableSetting, spec: &InterventionSpec) -> Result<VariableSetting> {
        self.validate_spec(spec)?;
        let mut clamps = BTreeMap::new();
        for ic in &spec.interchanges {
            let src = self.evaluate(&ic.source)?;
            for t in &ic.targets {
                clamps.insert(t.clone(), src.get(t).expect("evaluated"));
            }
        }
        self.evaluate_clamped(base, &clamps)
    }

    /// Output label on `base` under the interchange intervention `spec`.
    pub fn interchange_intervene(&self, base: &VariableSetting, spec: &InterventionSpec) -> Result<Label> {
        let full = self.interchange_setting(base, spec)?;
        self.label_of(&full)
    }
}
