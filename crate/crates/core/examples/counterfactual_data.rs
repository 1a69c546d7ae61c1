//! Counterfactual datasets for each hypothesis, balanced and i.i.d.
//!
//! Usage: counterfactual_data [n]

use bdas::bdas::{gen_counterfactual_dataset_with, Sampling};
use bdas::causal::Hypothesis;

fn main() -> bdas::Result<()> {
    let n = std::env::args().nth(1).map_or(10_000, |s| s.parse().expect("count"));
    for h in Hypothesis::ALL {
        let model = h.model();
        for sampling in [Sampling::Balanced, Sampling::Iid] {
            let data = gen_counterfactual_dataset_with(&model, n, 0, sampling)?;
            let yes = data.iter().filter(|e| e.label.index() == 0).count();
            let same = data.iter().filter(|e| e.label == e.base.gold()).count();
            println!(
                "{h:<22} {sampling:?}: {:.3} Yes, {:.3} unchanged from the base gold",
                yes as f64 / n as f64,
                same as f64 / n as f64
            );
        }
    }
    let model = Hypothesis::LeftAndRightBoundary.model();
    let slots = model.alignable();
    for e in gen_counterfactual_dataset_with(&model, 5, 1, Sampling::Balanced)? {
        let src = e.sources.iter().flatten().next().expect("one source");
        println!("{:?} <- {:?} into {:?}: {}", e.base, src, e.intervened(&slots), e.label);
    }
    Ok(())
}
