//! Counterfactual datasets: base and source inputs, which variables are
//! interchanged, and the label the high-level model assigns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{tau, CausalModel, InterventionSpec, Label};
use crate::error::{Error, Result};
use crate::target::{EncodedInput, TaskInstance};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualExample {
    pub base: TaskInstance,
    /// One entry per alignable variable; `None` leaves it on the base.
    pub sources: Vec<Option<TaskInstance>>,
    pub label: Label,
}

impl CounterfactualExample {
    /// Names of the interchanged variables, given the model's slot order.
    pub fn intervened<'a>(&self, slots: &[&'a str]) -> Vec<&'a str> {
        slots.iter().zip(&self.sources).filter(|(_, s)| s.is_some()).map(|(v, _)| *v).collect()
    }

    pub fn encoded_sources(&self) -> Vec<Option<EncodedInput>> {
        self.sources.iter().map(|s| s.map(|t| t.encode())).collect()
    }
}

/// How examples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Equal counts of the four (base gold, counterfactual label) cells,
    /// so leaving the base untouched scores exactly one half.
    #[default]
    Balanced,
    /// Plain i.i.d. draws.
    Iid,
}

/// Interchange label of `model` for one example.
pub fn counterfactual_label(
    model: &CausalModel,
    base: &TaskInstance,
    sources: &[Option<TaskInstance>],
) -> Result<Label> {
    let slots = model.alignable();
    if sources.len() != slots.len() {
        return Err(Error::Arity { expected: slots.len(), got: sources.len() });
    }
    let mut spec = InterventionSpec::new();
    for (v, s) in slots.iter().zip(sources) {
        if let Some(s) = s {
            spec = spec.with(&[v], tau(s));
        }
    }
    model.interchange_intervene(&tau(base), &spec)
}

/// One draw: base and a single source, interchanged into a uniformly
/// chosen non-empty subset of the alignable variables.
fn draw(model: &CausalModel, k: usize, rng: &mut ChaCha8Rng) -> Result<CounterfactualExample> {
    let base = TaskInstance::sample(rng);
    let source = TaskInstance::sample(rng);
    let subset = rng.random_range(1..(1u32 << k));
    let sources: Vec<Option<TaskInstance>> =
        (0..k).map(|j| if subset & (1 << j) != 0 { Some(source) } else { None }).collect();
    let label = counterfactual_label(model, &base, &sources)?;
    Ok(CounterfactualExample { base, sources, label })
}

pub fn gen_counterfactual_dataset(model: &CausalModel, n: usize, seed: u64) -> Result<Vec<CounterfactualExample>> {
    gen_counterfactual_dataset_with(model, n, seed, Sampling::Balanced)
}

pub fn gen_counterfactual_dataset_with(
    model: &CausalModel,
    n: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<Vec<CounterfactualExample>> {
    let k = model.alignable().len();
    if k == 0 {
        return Err(Error::Hypothesis(format!("model `{}` has no alignable variable", model.name())));
    }
    if k > 16 {
        return Err(Error::Hypothesis("too many alignable variables".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match sampling {
        Sampling::Iid => (0..n).map(|_| draw(model, k, &mut rng)).collect(),
        Sampling::Balanced => {
            // quota per (base gold, counterfactual label) cell
            let mut quota = [n / 4; 4];
            for q in quota.iter_mut().take(n % 4) {
                *q += 1;
            }
            let mut out = Vec::with_capacity(n);
            let mut misses = 0usize;
            while out.len() < n {
                let ex = draw(model, k, &mut rng)?;
                let cell = 2 * ex.base.gold().index() + ex.label.index();
                if quota[cell] > 0 {
                    quota[cell] -= 1;
                    out.push(ex);
                    misses = 0;
                } else {
                    misses += 1;
                    if misses > 1_000_000 {
                        return Err(Error::Hypothesis(format!(
                            "model `{}` cannot fill every (gold, counterfactual) cell",
                            model.name()
                        )));
                    }
                }
            }
            out.shuffle(&mut rng);
            Ok(out)
        }
    }
}
