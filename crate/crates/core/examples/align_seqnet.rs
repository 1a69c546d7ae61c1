//! Searches a trained sequence network for each hypothesis at a few
//! residual-stream sites.
//!
//! ```text
//! cargo run --release --example align_seqnet -- <net_stem> [layer:position ...]
//! ```
//!
//! Without sites, the last separator and the final token are swept at
//! every layer, plus the control site.

use std::path::Path;
use std::time::Instant;

use bdas::bdas::{sweep, TrainConfig};
use bdas::causal::Hypothesis;
use bdas::target::{Network, SEQ_LEN};

fn main() -> bdas::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let stem = args.first().expect("usage: align_seqnet <net_stem> [layer:position ...]");
    let net = Network::load(Path::new(stem))?;
    let sites = if args.len() > 1 {
        args[1..]
            .iter()
            .map(|s| {
                let (l, p) = s.split_once(':').expect("layer:position");
                net.site(l.parse().expect("layer"), p.parse().expect("position"))
            })
            .collect::<bdas::Result<Vec<_>>>()?
    } else {
        (0..net.layers())
            .flat_map(|l| [SEQ_LEN - 5, SEQ_LEN - 1].map(|p| net.site(l, p)))
            .collect::<bdas::Result<Vec<_>>>()?
    };
    let cfg = TrainConfig::default();
    for h in Hypothesis::ALL {
        let t = Instant::now();
        let result = sweep(&net, &sites, &h.model(), &cfg, &[0], 1)?;
        let m = &result.heatmap;
        println!("{h} (task accuracy {:.3}, {:.0}s)", m.task_acc, t.elapsed().as_secs_f64());
        for c in &m.cells {
            let scaled = c.iia.and_then(|v| m.scaled(v));
            println!("  L{}P{:<2} IIA {:?}  scaled {:?}", c.layer, c.position, c.iia, scaled);
        }
    }
    Ok(())
}
