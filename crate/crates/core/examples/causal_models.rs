//! The four price-tagging hypotheses: evaluation, interchange
//! interventions, and the JSON model format.

use bdas::causal::{model_from_json, model_to_json, tau, Hypothesis, InterventionSpec};
use bdas::target::TaskInstance;

fn main() -> bdas::Result<()> {
    let base = TaskInstance::new(250, 750, 150)?;
    let source = TaskInstance::new(350, 850, 950)?;
    println!("base {base:?} -> {}", base.gold());
    println!("source {source:?} -> {}", source.gold());

    for h in Hypothesis::ALL {
        let model = h.model();
        let slots = model.alignable();
        let mut spec = InterventionSpec::new();
        for v in &slots {
            spec = spec.with(&[v], tau(&source));
        }
        let label = model.interchange_intervene(&tau(&base), &spec)?;
        println!("{h:<22} alignable {slots:?}: base with source values -> {label}");
    }

    let json = model_to_json(&Hypothesis::MidpointDistance.model())?;
    let back = model_from_json(&json)?;
    assert_eq!(back, Hypothesis::MidpointDistance.model());
    println!("\n{json}");
    Ok(())
}
