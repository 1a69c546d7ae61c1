//! Sweeps every site of a planted net under each hypothesis, writes one
//! heatmap per hypothesis, and prints the summary table against the
//! planted hypothesis.
//!
//! Usage: sweep_heatmap [out_dir] [jobs]

use std::path::PathBuf;

use bdas::bdas::{sweep, TrainConfig};
use bdas::causal::Hypothesis;
use bdas::cli::{report, summary_text};
use bdas::target::build_planted_net;

fn main() -> bdas::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sweep_heatmaps".into()));
    let jobs = args.next().map_or(1, |s| s.parse().expect("jobs"));
    let planted = Hypothesis::LeftBoundary;
    let net = build_planted_net(&planted.model(), 16, 7)?;
    let cfg = TrainConfig::default();

    let mut paths = Vec::new();
    for h in Hypothesis::ALL {
        let result = sweep(&net, &net.sites(), &h.model(), &cfg, &[0, 1], jobs)?;
        let stem = out.join(h.name());
        result.heatmap.save(&stem)?;
        for c in &result.heatmap.cells {
            println!("{h:<22} L{}P{}: {:?}", c.layer, c.position, c.iia);
        }
        paths.push(stem.with_extension("csv"));
    }
    let rows = report(&paths, Some(&out.join(planted.name()).with_extension("csv")))?;
    print!("\n{}", summary_text(&rows));
    Ok(())
}
