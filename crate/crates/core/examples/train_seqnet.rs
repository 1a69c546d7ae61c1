//! Trains a small decoder on the price-tagging task and saves it.
//!
//! ```text
//! cargo run --release --example train_seqnet -- [layers] [width] [train_size] [epochs] [out_stem]
//! ```

use std::time::Instant;

use bdas::target::{train_task_net, Network, SeqNetSpec, TaskTrainSpec};

fn main() -> bdas::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let width = arg(1, 32);
    let arch = SeqNetSpec { layers: arg(0, 2), width, heads: 4, mlp_width: 4 * width };
    let spec = TaskTrainSpec { train_size: arg(2, 20_000), epochs: arg(3, 4), ..TaskTrainSpec::default() };
    let start = Instant::now();
    let net = train_task_net(arch, &spec, 0)?;
    println!(
        "{} layers, width {}: held-out accuracy {:.4} after {:.1}s",
        arch.layers,
        arch.width,
        net.test_accuracy().unwrap_or(f64::NAN),
        start.elapsed().as_secs_f64()
    );
    if let Some(stem) = args.get(4) {
        Network::Seq(net).save(std::path::Path::new(stem))?;
        println!("saved {stem}.bin / {stem}.json");
    }
    Ok(())
}
