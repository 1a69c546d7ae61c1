//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdas::bdas::{
    boundary_dynamics, eval_alignment, gen_counterfactual_dataset, eval_iia, objective_on_tape, sweep,
    train_alignment, AlignmentClass, CounterfactualExample, PreparedSet, TrainConfig,
};
use bdas::causal::{tau, Hypothesis, Label};
use bdas::cli::{run, Command, CommonArgs};
use bdas::intervene::{
    hard_splice, masks_from_boundaries, snap_masks, soft_splice, upper_len, AlignmentState, RotationParams,
};
use bdas::numkernel::linalg::orthogonality_error;
use bdas::numkernel::{grad_check, Tape, Tensor};
use bdas::target::{build_planted_net, Network, SeqNet, SeqNetSpec, TaskInstance, MAX_CENTS, MAX_WIDTH, MIN_WIDTH};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

const D: usize = 16;
const NET_SEED: u64 = 7;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Counterfactual answer from cent values alone.
fn oracle(h: Hypothesis, base: &TaskInstance, sources: &[Option<TaskInstance>]) -> Label {
    let pick = |j: usize| sources[j].unwrap_or(*base);
    let (l, u, x) = (base.lower() as i64, base.upper() as i64, base.amount() as i64);
    Label::from_bool(match h {
        Hypothesis::LeftBoundary => pick(0).amount() >= pick(0).lower() && x <= u,
        Hypothesis::LeftAndRightBoundary => pick(0).amount() >= pick(0).lower() && pick(1).amount() <= pick(1).upper(),
        Hypothesis::MidpointDistance => (2 * x - (pick(0).lower() as i64 + pick(0).upper() as i64)).abs() <= u - l,
        Hypothesis::BracketIdentity => pick(0).lower() as i64 <= x && x <= pick(0).upper() as i64,
    })
}

struct Shared {
    net: Network,
    cfg: TrainConfig,
    matched: bdas::bdas::TrainOutcome,
    train_secs: f64,
}

fn shared() -> Shared {
    let net = build_planted_net(&Hypothesis::LeftBoundary.model(), D, NET_SEED).unwrap();
    let cfg = TrainConfig::default();
    let site = net.planted_site().unwrap();
    let t = Instant::now();
    let matched = train_alignment(&net, &site, &Hypothesis::LeftBoundary.model(), &cfg, 0).unwrap();
    Shared { train_secs: t.elapsed().as_secs_f64(), net, cfg, matched }
}

fn c1_planted_recovery(s: &Shared) -> Check {
    let iia = s.matched.test_iia;
    let steps = s.cfg.total_steps();
    ensure(
        iia >= 0.99 && s.train_secs < 300.0 && s.cfg.epochs == 3 && s.cfg.train_size == 20_000,
        format!("test IIA {iia:.4} (>= 0.99) after {steps} steps, {:.1}s (< 300s)", s.train_secs),
    )
}

fn c2_discrimination(s: &Shared) -> Check {
    let site = s.net.planted_site().unwrap();
    let mismatched = train_alignment(&s.net, &site, &Hypothesis::BracketIdentity.model(), &s.cfg, 0)
        .map_err(|e| e.to_string())?;
    let gap = s.matched.test_iia - mismatched.test_iia;
    let result =
        sweep(&s.net, &s.net.sites(), &Hypothesis::LeftBoundary.model(), &s.cfg, &[0], 1).map_err(|e| e.to_string())?;
    let h = &result.heatmap;
    let best = h.max_cell().ok_or("empty heatmap")?;
    let control = h.cell(h.control.0, h.control.1).and_then(|c| c.iia).ok_or("missing control cell")?;
    ensure(
        gap >= 0.10 && (best.layer, best.position) == (site.layer, site.position) && control <= 0.55,
        format!(
            "matching {:.3} vs BracketIdentity {:.3} (gap {gap:.3} >= 0.10); sweep max at L{}P{} (planted {site}); control {control:.3} (<= 0.55)",
            s.matched.test_iia, mismatched.test_iia, best.layer, best.position
        ),
    )
}

fn two_variable_run(s: &Shared) -> Result<(Network, bdas::bdas::TrainOutcome), String> {
    let model = Hypothesis::LeftAndRightBoundary.model();
    let net = build_planted_net(&model, D, NET_SEED).map_err(|e| e.to_string())?;
    let site = net.planted_site().unwrap();
    let out = train_alignment(&net, &site, &model, &s.cfg, 0).map_err(|e| e.to_string())?;
    Ok((net, out))
}

fn c3_two_variables(s: &Shared, two: &(Network, bdas::bdas::TrainOutcome)) -> Check {
    let (net, out) = two;
    let model = Hypothesis::LeftAndRightBoundary.model();
    let site = net.planted_site().unwrap();
    let test = gen_counterfactual_dataset(&model, s.cfg.test_size, s.cfg.test_seed).map_err(|e| e.to_string())?;
    let alignment = out.state.freeze().map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for pattern in [[true, false], [false, true], [true, true]] {
        let subset: Vec<CounterfactualExample> =
            test.iter().filter(|e| e.sources.iter().map(Option::is_some).eq(pattern)).cloned().collect();
        parts.push(eval_alignment(net, &site, &alignment, &subset).map_err(|e| e.to_string())?);
    }
    ensure(
        out.test_iia >= 0.95 && parts.iter().all(|&v| v >= 0.95),
        format!(
            "joint IIA {:.4}; above_lower only {:.4}, below_upper only {:.4}, both {:.4} (each >= 0.95)",
            out.test_iia, parts[0], parts[1], parts[2]
        ),
    )
}

fn c4_dynamics(s: &Shared, two: &(Network, bdas::bdas::TrainOutcome)) -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, log) in [("LeftBoundary", &s.matched.log), ("LeftAndRightBoundary", &two.1.log)] {
        let d = boundary_dynamics(log, D).map_err(|e| e.to_string())?;
        let last = log.last().unwrap();
        let initial = D / 2;
        let holds = last.eval_iia >= d.peak_iia - 0.02;
        ok &= d.class == AlignmentClass::Aligned && 2 * d.final_snapped <= initial && holds;
        details.push(format!(
            "{name}: snapped width {}/{initial}, final IIA {:.3} vs peak {:.3}",
            d.final_snapped, last.eval_iia, d.peak_iia
        ));
    }
    let control =
        train_alignment(&s.net, &s.net.control_site(), &Hypothesis::LeftBoundary.model(), &s.cfg, 0).map_err(|e| e.to_string())?;
    let d = boundary_dynamics(&control.log, D).map_err(|e| e.to_string())?;
    ok &= d.class == AlignmentClass::Unaligned;
    details.push(format!("control: {:?} (snapped width {})", d.class, d.final_snapped));
    ensure(ok, details.join("; "))
}

fn c5_soft_hard(_: &Shared) -> Check {
    let mut g = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    let mut same = 0;
    let configs = 100;
    for i in 0..configs {
        let h = Hypothesis::ALL[i % 4];
        let d = g.random_range(8..=20);
        let net = if i % 5 == 4 {
            let spec = SeqNetSpec { layers: 2, width: d - d % 2, heads: 2, mlp_width: 16 };
            Network::Seq(SeqNet::init(spec, i as u64, 0.5).map_err(|e| e.to_string())?)
        } else {
            build_planted_net(&h.model(), d, i as u64).map_err(|e| e.to_string())?
        };
        let sites = net.sites();
        let site = sites[g.random_range(0..sites.len())];
        let d = site.width;
        let r = RotationParams::from_upper(d, (0..upper_len(d)).map(|_| g.random_range(-1.5..1.5)).collect())
            .and_then(|p| p.materialize())
            .map_err(|e| e.to_string())?;
        let k = g.random_range(1..=2);
        let mut b = vec![0.0];
        for _ in 0..k {
            let last = b[b.len() - 1];
            b.push(last + g.random_range(0.3..(d as f64 / k as f64)));
        }
        let snapped = snap_masks(&masks_from_boundaries(&b, d, g.random_range(0.01..2.0)));
        let n = 6;
        let draw = |g: &mut ChaCha8Rng| (0..n).map(|_| TaskInstance::sample(g).encode()).collect::<Vec<_>>();
        let bases = draw(&mut g);
        let base = net.capture_batch(&bases, &site).map_err(|e| e.to_string())?;
        let sources: Vec<Tensor> =
            (0..k).map(|_| net.capture_batch(&draw(&mut g), &site)).collect::<bdas::Result<_>>().map_err(|e| e.to_string())?;
        let hard = hard_splice(&r, &snapped, &base, &sources).map_err(|e| e.to_string())?;
        let soft = soft_splice(&r, &snapped, &base, &sources).map_err(|e| e.to_string())?;
        worst = worst.max(hard.max_abs_diff(&soft));
        let logits = |act: Tensor| -> bdas::Result<Vec<usize>> {
            let mut tape = Tape::new();
            let a = tape.constant(act);
            let out = net.forward_from_site(&mut tape, &bases, &site, a)?;
            Ok(tape.value(out).argmax_rows())
        };
        if logits(hard).map_err(|e| e.to_string())? == logits(soft).map_err(|e| e.to_string())? {
            same += 1;
        }
    }
    ensure(
        worst < 1e-9 && same == configs,
        format!("max |soft - hard| activation {worst:.2e} (< 1e-9); identical argmax {same}/{configs}"),
    )
}

fn c6_oracles(_: &Shared) -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for h in Hypothesis::ALL {
        let data = gen_counterfactual_dataset(&h.model(), 10_000, 6).map_err(|e| e.to_string())?;
        let agree = data.iter().filter(|e| e.label == oracle(h, &e.base, &e.sources)).count();
        ok &= agree == 10_000;
        details.push(format!("{h} {agree}/10000"));
    }
    let mut grid = Vec::new();
    'outer: for lower in (0..=MAX_CENTS).step_by(23) {
        for width in (MIN_WIDTH..=MAX_WIDTH).step_by(47) {
            for amount in (0..=MAX_CENTS).step_by(19) {
                if let Ok(t) = TaskInstance::new(lower, lower + width, amount) {
                    grid.push(t);
                    if grid.len() == 10_000 {
                        break 'outer;
                    }
                }
            }
        }
    }
    for h in Hypothesis::ALL {
        let m = h.model();
        let agree = grid.iter().filter(|t| m.output_label(&tau(t)).ok() == Some(t.gold())).count();
        ok &= agree == grid.len() && grid.len() == 10_000;
        details.push(format!("{h} gold {agree}/{}", grid.len()));
    }
    ensure(ok, details.join(", "))
}

fn c7_numerics(s: &Shared) -> Check {
    let r = s.matched.state.rotation.materialize().map_err(|e| e.to_string())?;
    let orth = orthogonality_error(&r);
    let mut worst = 0.0_f64;
    for h in Hypothesis::ALL {
        let m = h.model();
        let net = build_planted_net(&m, 8, 3).map_err(|e| e.to_string())?;
        let site = net.planted_site().unwrap();
        let set = PreparedSet::new(&net, &site, &gen_counterfactual_dataset(&m, 32, 1).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let k = m.alignable().len();
        let n = upper_len(8);
        let mut g = ChaCha8Rng::seed_from_u64(9);
        let mut p: Vec<f64> = (0..n).map(|_| g.random_range(-0.3..0.3)).collect();
        p.extend((0..k).map(|_| g.random_range(-1.5..-0.5)));
        let err = grad_check(
            |tape: &mut Tape, p| {
                let u = tape.slice_cols(p, 0, n)?;
                let raw = tape.slice_cols(p, n, k)?;
                let beta = tape.constant(Tensor::scalar(1.5)?);
                objective_on_tape(tape, &net, &site, &set, u, raw, beta, 1.0)
            },
            &Tensor::row(p).map_err(|e| e.to_string())?,
            1e-6,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max(err);
    }
    ensure(
        orth < 1e-5 && worst < 1e-4,
        format!("trained ||R^T R - I||_inf {orth:.2e} (< 1e-5); full-objective gradient rel. error {worst:.2e} (< 1e-4)"),
    )
}

fn c8_chance(s: &Shared) -> Check {
    let m = Hypothesis::LeftBoundary.model();
    let test = gen_counterfactual_dataset(&m, 1000, 8).map_err(|e| e.to_string())?;
    let slots = vec!["above_lower".to_string()];
    let mut control = Vec::new();
    let mut planted = Vec::new();
    for seed in 0..20 {
        let state = AlignmentState::random(D, slots.clone(), 0.1, seed).map_err(|e| e.to_string())?;
        control.push(eval_iia(&s.net, &s.net.control_site(), &state, &test).map_err(|e| e.to_string())?);
        planted.push(eval_iia(&s.net, &s.net.planted_site().unwrap(), &state, &test).map_err(|e| e.to_string())?);
    }
    let in_range = |v: f64| (0.45..=0.55).contains(&v);
    let mean = planted.iter().sum::<f64>() / planted.len() as f64;
    let (lo, hi) = control.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    ensure(
        control.iter().all(|&v| in_range(v)) && in_range(mean),
        format!(
            "control site: 20 random states in [{lo:.3}, {hi:.3}]; planted site: Monte-Carlo mean {mean:.3} over 20 states (range [0.45, 0.55])"
        ),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn c9_reporting(_: &Shared) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let header = "hypothesis,layer,position,iia,iia_scaled,best_seed\n";
    let a = [0.52, 0.61, 0.90, 0.74, 0.55, 0.68];
    let b = [0.50, 0.50, 0.50, 0.50, 0.50, 0.50];
    let fixture = |vals: &[f64]| {
        let mut s = header.to_string();
        for (i, v) in vals.iter().enumerate() {
            s.push_str(&format!("LeftBoundary,{},{},{v:.6},,0\n", i / 3, i % 3));
        }
        s
    };
    write(dir.path(), "alpha.csv", &fixture(&a));
    write(dir.path(), "flat.csv", &fixture(&b));
    let cfg = write(dir.path(), "report.json", r#"{ "heatmaps": ["alpha.csv", "flat.csv"], "reference": "alpha.csv" }"#);
    let out = dir.path().join("out");
    let args = CommonArgs { config: cfg, out: Some(out.clone()), seeds: None, jobs: None };
    run(&Command::Report(args)).map_err(|e| e.to_string())?;
    let csv = std::fs::read_to_string(out.join("summary.csv")).map_err(|e| e.to_string())?;
    // independent statistics: two-pass population variance, reported x100
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64;
    let expected = format!(
        "experiment,task_acc,iia_max,correlation,variance_x100\nalpha,NA,0.90,1.00,{:.2}\nflat,NA,0.50,NA,0.00\n",
        100.0 * var
    );
    if csv == expected {
        Ok(format!("summary.csv matches independent statistics (IIA_max 0.90, self-correlation 1.00, variance x100 {:.2})", 100.0 * var))
    } else {
        Err(format!("summary.csv {csv:?}, expected {expected:?}"))
    }
}

const SWEEP: &str = r#"{
  "hypothesis": "LeftBoundary",
  "net": { "kind": "planted-mlp", "width": 16, "seed": 7 },
  "sites": "all",
  "seeds": [0, 1],
  "train": { "train_size": 6000 }
}"#;

fn c10_determinism(_: &Shared) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write(dir.path(), "sweep.json", SWEEP);
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", 1), ("b", 2)] {
        let out = dir.path().join(name);
        let args = CommonArgs { config: cfg.clone(), out: Some(out.clone()), seeds: None, jobs: Some(jobs) };
        let done = run(&Command::Sweep(args)).map_err(|e| e.to_string())?;
        outputs.push((out, done.artifacts));
    }
    let csvs: Vec<&String> = outputs[0].1.iter().filter(|n| n.ends_with(".csv")).collect();
    let identical = csvs
        .iter()
        .filter(|n| std::fs::read(outputs[0].0.join(n)).ok() == std::fs::read(outputs[1].0.join(n)).ok())
        .count();
    ensure(
        identical == csvs.len() && csvs.len() == 9 && outputs[0].1 == outputs[1].1,
        format!("{identical}/{} heatmap and log CSVs byte-identical across two runs (1 and 2 jobs)", csvs.len()),
    )
}

fn main() {
    let s = shared();
    let two = two_variable_run(&s);
    let two_ref = two.as_ref();
    let criteria: Vec<Criterion> = vec![
        ("planted recovery", Box::new(|| c1_planted_recovery(&s))),
        ("hypothesis discrimination", Box::new(|| c2_discrimination(&s))),
        ("two-variable case", Box::new(|| c3_two_variables(&s, two_ref.map_err(Clone::clone)?))),
        ("boundary dynamics", Box::new(|| c4_dynamics(&s, two_ref.map_err(Clone::clone)?))),
        ("soft/hard equivalence", Box::new(|| c5_soft_hard(&s))),
        ("oracle equivalence", Box::new(|| c6_oracles(&s))),
        ("numerics", Box::new(|| c7_numerics(&s))),
        ("chance floor", Box::new(|| c8_chance(&s))),
        ("reporting parity", Box::new(|| c9_reporting(&s))),
        ("determinism", Box::new(|| c10_determinism(&s))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
