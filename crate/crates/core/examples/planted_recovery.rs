//! Recovers the hidden alignment of a planted network.
//!
//! Usage: planted_recovery [net-hypothesis] [probe-hypothesis] [width_penalty] [seed]

use std::time::Instant;

use bdas::bdas::{boundary_dynamics, train_alignment, TrainConfig};
use bdas::causal::Hypothesis;
use bdas::target::build_planted_net;

fn main() -> bdas::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let planted: Hypothesis = args.first().map_or("LeftBoundary", String::as_str).parse()?;
    let probe: Hypothesis = args.get(1).map_or(planted.name(), String::as_str).parse()?;
    let mut cfg = TrainConfig::default();
    if let Some(p) = args.get(2) {
        cfg.width_penalty = p.parse().expect("width penalty");
    }
    let seed = args.get(3).map_or(0, |s| s.parse().expect("seed"));

    let net = build_planted_net(&planted.model(), 16, 7)?;
    let model = probe.model();
    for (name, site) in [("planted", net.planted_site().expect("planted net")), ("control", net.control_site())] {
        let t = Instant::now();
        let out = train_alignment(&net, &site, &model, &cfg, seed)?;
        let dyn_ = boundary_dynamics(&out.log, site.width)?;
        println!(
            "{planted} net, {probe} probe, {name} site {site}: test IIA {:.4} (best step {}), {:?}, final snapped width {}, {:.1}s",
            out.test_iia,
            out.best_step,
            dyn_.class,
            dyn_.final_snapped,
            t.elapsed().as_secs_f64()
        );
        for e in &out.log {
            println!(
                "  step {:4}  beta {:8.4}  eval {:.3}  widths {:?}  loss {:.4}",
                e.step,
                e.beta,
                e.eval_iia,
                e.widths.iter().map(|w| format!("{w:.2}")).collect::<Vec<_>>(),
                e.loss
            );
        }
    }
    Ok(())
}
