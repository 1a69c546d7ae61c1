//! Boundary widths over training: an aligned site shrinks to a few
//! dimensions while its IIA holds; an unused site shrinks to nothing.

use bdas::bdas::{boundary_dynamics, train_alignment, write_log_csv, TrainConfig};
use bdas::causal::Hypothesis;
use bdas::target::build_planted_net;

fn main() -> bdas::Result<()> {
    let model = Hypothesis::LeftAndRightBoundary.model();
    let net = build_planted_net(&model, 16, 2)?;
    let cfg = TrainConfig::default();
    let planted = net.planted_site().expect("planted nets have a planted site");
    for (name, site) in [("planted", planted), ("control", net.control_site())] {
        let out = train_alignment(&net, &site, &model, &cfg, 0)?;
        let d = boundary_dynamics(&out.log, site.width)?;
        println!("{name} site {site}: {:?}, final snapped width {}, test IIA {:.3}", d.class, d.final_snapped, out.test_iia);
        for p in &d.series {
            println!(
                "  step {:4}  width/half {:.3}  snapped/half {:.3}  eval IIA {:.3}",
                p.step, p.normalized_width, p.snapped_width, p.eval_iia
            );
        }
        if let Some(dir) = std::env::args().nth(1) {
            write_log_csv(&std::path::Path::new(&dir).join(format!("{name}.csv")), &out.log)?;
        }
    }
    Ok(())
}
