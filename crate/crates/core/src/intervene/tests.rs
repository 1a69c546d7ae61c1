#![allow(clippy::single_range_in_vec_init)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::causal::{tau, Hypothesis, InterventionSpec, Label};
use crate::error::Error;
use crate::numkernel::linalg::{orthogonality_error, random_rotation, Lu};
use crate::numkernel::{grad_check, Tape, Tensor};
use crate::target::{build_planted_net, EncodedInput, Network, SeqNet, SeqNetSpec, TaskInstance};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn inputs(n: usize, seed: u64) -> Vec<EncodedInput> {
    let mut r = rng(seed);
    (0..n).map(|_| TaskInstance::sample(&mut r).encode()).collect()
}

#[test]
fn zero_skew_is_identity() {
    let r = RotationParams::identity(6).materialize().unwrap();
    assert_eq!(r, Tensor::identity(6));
}

#[test]
fn planar_cayley_matches_closed_form() {
    for a in [-3.0, -0.4, 0.0, 0.25, 1.0, 7.5] {
        let r = RotationParams::from_upper(2, vec![a]).unwrap().materialize().unwrap();
        let t = 2.0 * f64::atan(a);
        let expected = Tensor::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap();
        assert!(r.max_abs_diff(&expected) < 1e-14, "a = {a}");
        for c in 0..2 {
            let norm = (r.get(0, c).powi(2) + r.get(1, c).powi(2)).sqrt();
            assert!((norm - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn random_cayley_is_special_orthogonal_with_checked_gradient() {
    let mut g = rng(1);
    let d = 16;
    let p = RotationParams::from_upper(d, (0..upper_len(d)).map(|_| g.random_range(-1.0..1.0)).collect()).unwrap();
    let r = p.materialize().unwrap();
    assert!(orthogonality_error(&r) < 1e-10);
    assert!((Lu::factor(&r).unwrap().determinant() - 1.0).abs() < 1e-9);

    let target = random_tensor(&mut g, d, d);
    let x = random_tensor(&mut g, 3, d);
    let err = grad_check(
        |tape, u| {
            let r = rotation_on_tape(tape, u, d)?;
            let x = tape.constant(x.clone());
            let y = tape.matmul(x, r)?;
            let y = tape.tanh(y)?;
            let t = tape.constant(target.clone().select_rows(&[0, 1, 2])?);
            let diff = tape.sub(y, t)?;
            let sq = tape.mul(diff, diff)?;
            tape.sum(sq)
        },
        &p.as_row(),
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn saturated_masks_are_indicators() {
    let m = masks_from_boundaries(&[0.0, 4.0], 8, 1e-4);
    let expected = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    for (a, b) in m.mask(0).iter().zip(expected) {
        assert!((a - b).abs() < 1e-8);
    }
    let empty = masks_from_boundaries(&[0.0, 0.0], 8, 1e-3);
    assert!(empty.mask(0).iter().all(|&v| v < 1e-8));

    let p = BoundaryParams::from_boundaries(&[0.0, 2.0, 5.0], 8, 1e-4).unwrap();
    let snapped = snap_masks(&p.masks(8));
    assert_eq!(snapped, MaskSet::from_ranges(8, &[0..2, 2..5]).unwrap());
}

#[test]
fn warm_masks_are_smooth_and_differentiable() {
    let d = 16;
    let p = BoundaryParams::half_space(2, 50.0).unwrap();
    let m = p.masks(d);
    for j in 0..2 {
        // at β = 50 every entry is close to σ(0)² = ¼ and varies slowly
        assert!(m.mask(j).iter().all(|&v| (0.2..0.3).contains(&v)));
    }
    let weights = Tensor::row((0..d).map(|k| (k as f64 * 0.7).sin()).collect()).unwrap();
    for beta in [50.0, 1.0, 0.3] {
        let err = grad_check(
            |tape, raw| {
                let b = tape.constant(Tensor::scalar(beta)?);
                let masks = masks_on_tape(tape, raw, b, d)?;
                let w = tape.constant(weights.clone());
                let a = tape.mul(masks[0], w)?;
                let b2 = tape.mul(masks[1], masks[1])?;
                let s = tape.add(a, b2)?;
                tape.sum(s)
            },
            &Tensor::row(vec![-1.3, -0.2]).unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "β = {beta}: {err}");
    }
    // and in the temperature itself
    let raw = p.raw_row();
    let err = grad_check(
        |tape, beta| {
            let r = tape.constant(raw.clone());
            let masks = masks_on_tape(tape, r, beta, d)?;
            let s = tape.add(masks[0], masks[1])?;
            tape.sum(s)
        },
        &Tensor::scalar(2.0).unwrap(),
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn tape_masks_match_direct_evaluation() {
    let p = BoundaryParams::new(vec![-0.7, -2.0, 0.4], 0.8).unwrap();
    let d = 10;
    let mut tape = Tape::new();
    let raw = tape.constant(p.raw_row());
    let beta = tape.constant(Tensor::scalar(p.beta()).unwrap());
    let vars = masks_on_tape(&mut tape, raw, beta, d).unwrap();
    let direct = p.masks(d);
    for (j, v) in vars.iter().enumerate() {
        for (a, b) in tape.value(*v).data().iter().zip(direct.mask(j)) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn snapping_rules() {
    let m = MaskSet::new(4, vec![vec![0.9, 0.6, 0.4, 0.1]]).unwrap();
    assert_eq!(snap_masks(&m).mask(0), &[1.0, 1.0, 0.0, 0.0]);
    let tie = MaskSet::new(3, vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
    let s = snap_masks(&tie);
    assert_eq!(s.mask(0), &[1.0, 1.0, 0.0]);
    assert_eq!(s.mask(1), &[0.0, 0.0, 1.0]);
    assert!(s.residual().iter().all(|&r| r == 0.0 || r == 1.0));
}

proptest! {
    #[test]
    fn soft_masks_never_oversubscribe(raw in prop::collection::vec(-5.0f64..2.0, 1..3), beta in 0.01f64..60.0, d in 2usize..20) {
        let m = BoundaryParams::new(raw, beta).unwrap().masks(d);
        for k in 0..d {
            let s: f64 = (0..m.slots()).map(|j| m.mask(j)[k]).sum();
            prop_assert!(s <= 1.0 + 1e-6);
            prop_assert!((0..m.slots()).all(|j| (0.0..=1.0).contains(&m.mask(j)[k])));
        }
        let snapped = snap_masks(&m);
        prop_assert!(snapped.check_partition().is_ok());
        for k in 0..d {
            let s: f64 = (0..m.slots()).map(|j| snapped.mask(j)[k]).sum::<f64>() + snapped.residual()[k];
            prop_assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn boundaries_are_monotone_and_in_range(raw in prop::collection::vec(-6.0f64..3.0, 1..5), d in 1usize..64) {
        let b = BoundaryParams::new(raw, 1.0).unwrap().boundaries(d);
        prop_assert_eq!(b[0], 0.0);
        for w in b.windows(2) {
            prop_assert!(w[1] >= w[0]);
            prop_assert!(w[1] < d as f64 + 1e-12);
            prop_assert!(w[1] > w[0] || w[1] == d as f64);
        }
    }

    #[test]
    fn projections_reconstruct(seed in 0u64..1000, cut in 1usize..7) {
        let mut g = rng(seed);
        let d = 8;
        let r = random_rotation(d, &mut g);
        let v = random_tensor(&mut g, 1, d);
        let part = MaskSet::from_ranges(d, &[0..cut, cut..8]).unwrap();
        let y = v.matmul(&r.transpose()).unwrap();
        let mut total = Tensor::zeros(1, d);
        let residual = part.residual();
        for m in (0..part.slots()).map(|j| part.mask(j).to_vec()).chain([residual]) {
            let proj = Tensor::row(y.data().iter().zip(&m).map(|(a, b)| a * b).collect()).unwrap().matmul(&r).unwrap();
            total = total.add(&proj).unwrap();
        }
        prop_assert!(total.max_abs_diff(&v) < 1e-12);
    }
}

fn tiny_seq() -> Network {
    Network::Seq(SeqNet::init(SeqNetSpec { layers: 2, width: 8, heads: 2, mlp_width: 16 }, 3, 0.46).unwrap())
}

fn nets() -> Vec<Network> {
    vec![build_planted_net(&Hypothesis::LeftAndRightBoundary.model(), 8, 2).unwrap(), tiny_seq()]
}

#[test]
fn identity_interventions_are_bitwise_noops() {
    let xs = inputs(16, 4);
    let mut g = rng(5);
    for net in nets() {
        let d = net.width();
        let r = random_rotation(d, &mut g);
        let part = MaskSet::from_ranges(d, &[0..3, 5..7]).unwrap();
        let zero = MaskSet::new(d, vec![vec![0.0; d]; 2]).unwrap();
        let plain = net.forward_batch(&xs).unwrap();
        for site in net.sites() {
            let same: Vec<Vec<Option<EncodedInput>>> = xs.iter().map(|x| vec![Some(*x), Some(*x)]).collect();
            let hard = hard_dii_batch(&net, &site, &r, &part, &xs, &same).unwrap();
            assert_eq!(hard, plain);
            let others: Vec<Vec<Option<EncodedInput>>> =
                xs.iter().rev().map(|x| vec![Some(*x), Some(*x)]).collect();
            let soft = soft_dii_batch(&net, &site, &r, &zero, &xs, &others).unwrap();
            assert_eq!(soft, plain);
        }
    }
}

#[test]
fn identity_rotation_is_a_coordinate_splice() {
    let mut g = rng(6);
    let d = 8;
    let base = random_tensor(&mut g, 5, d);
    let src = random_tensor(&mut g, 5, d);
    let part = MaskSet::from_ranges(d, &[0..3]).unwrap();
    let out = hard_splice(&Tensor::identity(d), &part, &base, std::slice::from_ref(&src)).unwrap();
    for i in 0..5 {
        for k in 0..d {
            let expected = if k < 3 { src.get(i, k) } else { base.get(i, k) };
            assert!((out.get(i, k) - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn delta_form_matches_the_projection_form() {
    let mut g = rng(7);
    let d = 10;
    let r = random_rotation(d, &mut g);
    let base = random_tensor(&mut g, 4, d);
    let srcs = [random_tensor(&mut g, 4, d), random_tensor(&mut g, 4, d)];
    let masks = BoundaryParams::new(vec![-1.0, -0.5], 0.7).unwrap().masks(d);
    let got = soft_splice(&r, &masks, &base, &srcs).unwrap();
    // Rᵀ((1 − ΣM) ∘ R h_b + Σ M_j ∘ R h_j), rows as vectors
    let rt = r.transpose();
    let yb = base.matmul(&rt).unwrap();
    let ys: Vec<Tensor> = srcs.iter().map(|s| s.matmul(&rt).unwrap()).collect();
    let res = masks.residual();
    let mut mixed = vec![0.0; 4 * d];
    for i in 0..4 {
        for k in 0..d {
            mixed[i * d + k] = res[k] * yb.get(i, k)
                + (0..2).map(|j| masks.mask(j)[k] * ys[j].get(i, k)).sum::<f64>();
        }
    }
    let expected = Tensor::new(4, d, mixed).unwrap().matmul(&r).unwrap();
    assert!(got.max_abs_diff(&expected) < 1e-12);
}

#[test]
fn soft_with_binary_masks_equals_hard() {
    let mut g = rng(8);
    let xs = inputs(8, 9);
    let nets = nets();
    for trial in 0..100 {
        let net = &nets[trial % 2];
        let d = net.width();
        let site = net.sites()[trial % net.sites().len()];
        let r = random_rotation(d, &mut g);
        let cut = g.random_range(0..d);
        let end = g.random_range(cut..=d);
        let part = MaskSet::from_ranges(d, &[0..cut, cut..end]).unwrap();
        let base = net.capture_batch(&xs, &site).unwrap();
        let srcs: Vec<Tensor> = (0..2)
            .map(|j| {
                let order: Vec<EncodedInput> = (0..xs.len()).map(|i| xs[(i + 1 + j + trial) % xs.len()]).collect();
                net.capture_batch(&order, &site).unwrap()
            })
            .collect();
        let hard = hard_splice(&r, &part, &base, &srcs).unwrap();
        let soft = soft_splice(&r, &part, &base, &srcs).unwrap();
        assert!(hard.max_abs_diff(&soft) < 1e-9, "trial {trial}");
        let sources: Vec<Vec<Option<EncodedInput>>> =
            (0..xs.len()).map(|i| (0..2).map(|j| Some(xs[(i + 1 + j + trial) % xs.len()])).collect()).collect();
        let lh = hard_dii_batch(net, &site, &r, &part, &xs, &sources).unwrap();
        let ls = soft_dii_batch(net, &site, &r, &part, &xs, &sources).unwrap();
        assert_eq!(lh.argmax_rows(), ls.argmax_rows(), "trial {trial}");
    }
}

#[test]
fn annealed_soft_output_approaches_hard() {
    let mut g = rng(10);
    let d = 12;
    let r = random_rotation(d, &mut g);
    let base = random_tensor(&mut g, 6, d);
    let src = random_tensor(&mut g, 6, d);
    let b = [0.0, 3.3, 7.6];
    let hard_part = snap_masks(&masks_from_boundaries(&b, d, 1e-6));
    let hard = hard_splice(&r, &hard_part, &base, &[src.clone(), src.clone()]).unwrap();
    let steps = 200;
    let gaps: Vec<f64> = (0..steps)
        .map(|t| {
            let beta = 50.0 * (0.1f64 / 50.0).powf(t as f64 / (steps - 1) as f64);
            let soft = soft_splice(&r, &masks_from_boundaries(&b, d, beta), &base, &[src.clone(), src.clone()]).unwrap();
            soft.max_abs_diff(&hard)
        })
        .collect();
    for w in gaps[steps - 10..].windows(2) {
        assert!(w[1] <= w[0], "{gaps:?}");
    }
    assert!(gaps[steps - 1] < gaps[0]);
}

#[test]
fn partition_and_arity_errors() {
    let net = tiny_seq();
    let site = net.site(1, 3).unwrap();
    let x = inputs(3, 1);
    let r = Tensor::identity(8);
    let soft = MaskSet::new(8, vec![vec![0.3; 8]]).unwrap();
    assert!(matches!(hard_dii(&net, &site, &r, &soft, &x[0], &[x[1]]), Err(Error::Partition(_))));
    let part = MaskSet::from_ranges(8, &[0..2]).unwrap();
    assert!(matches!(hard_dii(&net, &site, &r, &part, &x[0], &[x[1], x[2]]), Err(Error::Arity { .. })));
    let overlap = MaskSet::new(8, vec![vec![1.0; 8], vec![1.0; 8]]).unwrap();
    assert!(matches!(overlap.check_partition(), Err(Error::Partition(_))));
}

#[test]
fn planted_truth_reproduces_high_level_interchanges() {
    let mut g = rng(11);
    for h in Hypothesis::ALL {
        let model = h.model();
        let Network::Planted(p) = build_planted_net(&model, 16, 21).unwrap() else { unreachable!() };
        let truth = p.truth();
        let net = Network::Planted(p);
        let site = net.planted_site().unwrap();
        let part = MaskSet::from_ranges(16, &truth.blocks).unwrap();
        let r = truth.rotation.transpose();
        let slots = model.alignable();
        let n = 1000;
        let bases: Vec<TaskInstance> = (0..n).map(|_| TaskInstance::sample(&mut g)).collect();
        let sources: Vec<Vec<TaskInstance>> =
            (0..n).map(|_| (0..slots.len()).map(|_| TaskInstance::sample(&mut g)).collect()).collect();
        let xs: Vec<EncodedInput> = bases.iter().map(|t| t.encode()).collect();
        let srcs: Vec<Vec<Option<EncodedInput>>> =
            sources.iter().map(|s| s.iter().map(|t| Some(t.encode())).collect()).collect();
        let pred = hard_dii_batch(&net, &site, &r, &part, &xs, &srcs).unwrap().argmax_rows();
        for i in 0..n {
            let mut spec = InterventionSpec::new();
            for (j, v) in slots.iter().enumerate() {
                spec = spec.with(&[v], tau(&sources[i][j]));
            }
            let want = model.interchange_intervene(&tau(&bases[i]), &spec).unwrap();
            assert_eq!(Label::from_index(pred[i]), want, "{h} example {i}");
        }
    }
}

#[test]
fn state_save_load_and_freeze() {
    let dir = tempfile::tempdir().unwrap();
    let s = AlignmentState::random(6, vec!["a".into(), "b".into()], 0.5, 3).unwrap();
    let stem = dir.path().join("state");
    s.save(&stem).unwrap();
    assert_eq!(AlignmentState::load(&stem).unwrap(), s);
    let frozen = s.freeze().unwrap();
    assert!(orthogonality_error(&frozen.rotation) < 1e-12);
    assert!(frozen.partition.is_binary());

    let init = AlignmentState::initial(16, vec!["a".into()], 50.0, 0).unwrap();
    assert_eq!(init.rotation.materialize().unwrap(), Tensor::identity(16));
    assert!((init.boundaries.widths(16)[0] - 8.0).abs() < 1e-12);
}
