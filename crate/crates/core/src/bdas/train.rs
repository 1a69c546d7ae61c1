//! The alignment objective, its optimisation, and IIA evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bdas::config::TrainConfig;
use crate::bdas::dataset::{gen_counterfactual_dataset_with, CounterfactualExample};
use crate::causal::CausalModel;
use crate::error::{Error, Result};
use crate::intervene::{hard_splice, masks_on_tape, rotation_on_tape, splice_on_tape, Alignment, AlignmentState};
use crate::numkernel::{Adam, Tape, Tensor, Var};
use crate::target::{ActivationSite, EncodedInput, Network};

const CHUNK: usize = 1000;

/// Counterfactual examples with their site activations precomputed.
/// `sources[j]` rows equal the base rows where slot `j` is not intervened.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub inputs: Vec<EncodedInput>,
    pub base: Tensor,
    pub sources: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl PreparedSet {
    pub fn new(net: &Network, site: &ActivationSite, examples: &[CounterfactualExample]) -> Result<Self> {
        net.check_site(site)?;
        let k = examples.first().map_or(0, |e| e.sources.len());
        if let Some(e) = examples.iter().find(|e| e.sources.len() != k) {
            return Err(Error::Arity { expected: k, got: e.sources.len() });
        }
        let inputs: Vec<EncodedInput> = examples.iter().map(|e| e.base.encode()).collect();
        let d = site.width;
        let mut base = Vec::with_capacity(examples.len() * d);
        let mut sources = vec![Vec::with_capacity(examples.len() * d); k];
        for (chunk, xs) in examples.chunks(CHUNK).zip(inputs.chunks(CHUNK)) {
            let b = net.capture_batch(xs, site)?;
            // every example has exactly one source instance shared by its active slots
            let src_inputs: Vec<EncodedInput> = chunk
                .iter()
                .zip(xs)
                .map(|(e, x)| e.sources.iter().flatten().next().map_or(*x, |s| s.encode()))
                .collect();
            let s = net.capture_batch(&src_inputs, site)?;
            for (i, e) in chunk.iter().enumerate() {
                for (j, slot) in e.sources.iter().enumerate() {
                    let row = if slot.is_some() { s.row_slice(i) } else { b.row_slice(i) };
                    sources[j].extend_from_slice(row);
                }
            }
            base.extend_from_slice(b.data());
        }
        let n = examples.len();
        Ok(Self {
            inputs,
            base: Tensor::new(n, d, base)?,
            sources: sources.into_iter().map(|s| Tensor::new(n, d, s)).collect::<Result<_>>()?,
            labels: examples.iter().map(|e| e.label.index()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn slots(&self) -> usize {
        self.sources.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            inputs: idx.iter().map(|&i| self.inputs[i]).collect(),
            base: self.base.select_rows(idx)?,
            sources: self.sources.iter().map(|s| s.select_rows(idx)).collect::<Result<_>>()?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Records the training objective: mean cross entropy of the soft
/// intervention against the counterfactual labels, plus
/// `width_penalty · (total width / d)`.
#[allow(clippy::too_many_arguments)]
pub fn objective_on_tape(
    tape: &mut Tape,
    net: &Network,
    site: &ActivationSite,
    batch: &PreparedSet,
    upper: Var,
    raw: Var,
    beta: Var,
    width_penalty: f64,
) -> Result<Var> {
    let d = site.width;
    let r = rotation_on_tape(tape, upper, d)?;
    let masks = masks_on_tape(tape, raw, beta, d)?;
    let base = tape.constant(batch.base.clone());
    let sources: Vec<Var> = batch.sources.iter().map(|s| tape.constant(s.clone())).collect();
    let act = splice_on_tape(tape, r, &masks, base, &sources)?;
    let logits = net.forward_from_site(tape, &batch.inputs, site, act)?;
    let ce = tape.cross_entropy(logits, &batch.labels)?;
    if width_penalty == 0.0 {
        return Ok(ce);
    }
    let inc = tape.softplus(raw)?;
    let total = tape.sum(inc)?;
    let total = tape.clamp_max(total, 1.0)?;
    let pen = tape.scale(total, width_penalty)?;
    tape.add(ce, pen)
}

/// Fraction of examples whose hard-intervention argmax equals the
/// counterfactual label.
pub fn eval_prepared(net: &Network, site: &ActivationSite, alignment: &Alignment, set: &PreparedSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    if set.slots() != alignment.partition.slots() {
        return Err(Error::Arity { expected: alignment.partition.slots(), got: set.slots() });
    }
    let mut hits = 0usize;
    for start in (0..set.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(set.len())).collect();
        let part = set.subset(&idx)?;
        let act = hard_splice(&alignment.rotation, &alignment.partition, &part.base, &part.sources)?;
        let mut tape = Tape::new();
        let a = tape.constant(act);
        let logits = net.forward_from_site(&mut tape, &part.inputs, site, a)?;
        hits += tape.value(logits).argmax_rows().iter().zip(&part.labels).filter(|(p, l)| p == l).count();
    }
    Ok(hits as f64 / set.len() as f64)
}

/// IIA of a state on a test set, with masks snapped at the state's
/// current temperature.
pub fn eval_iia(
    net: &Network,
    site: &ActivationSite,
    state: &AlignmentState,
    testset: &[CounterfactualExample],
) -> Result<f64> {
    if testset.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    eval_alignment(net, site, &state.freeze()?, testset)
}

/// IIA of a frozen alignment.
pub fn eval_alignment(
    net: &Network,
    site: &ActivationSite,
    alignment: &Alignment,
    testset: &[CounterfactualExample],
) -> Result<f64> {
    if testset.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    eval_prepared(net, site, alignment, &PreparedSet::new(net, site, testset)?)
}

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub beta: f64,
    pub eval_iia: f64,
    /// Continuous slot widths `b_{j+1} − b_j`.
    pub widths: Vec<f64>,
    /// Mean training loss over the steps since the previous entry.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint with the best in-training eval IIA.
    pub state: AlignmentState,
    pub best_step: usize,
    pub best_eval_iia: f64,
    /// The state after the last step.
    pub final_state: AlignmentState,
    pub log: Vec<LogEntry>,
    /// IIA of the best checkpoint on the held-out test set.
    pub test_iia: f64,
    /// Majority-label frequency of the test set's counterfactual labels.
    pub test_base_rate: f64,
}

fn divergence(e: Error) -> Error {
    match e {
        Error::NonFinite(m) => Error::Divergence(m),
        other => other,
    }
}

/// Data seeds for one run: training and eval sets follow `seed`, the
/// test set follows `cfg.test_seed`.
fn data_seeds(seed: u64) -> (u64, u64) {
    let train = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    (train, train ^ 0xD1B5_4A32_D192_ED03)
}

pub fn train_alignment(
    net: &Network,
    site: &ActivationSite,
    model: &CausalModel,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net.check_site(site)?;
    let slots: Vec<String> = model.alignable().iter().map(|s| s.to_string()).collect();
    let d = site.width;
    if slots.is_empty() || slots.len() > d / 2 {
        return Err(Error::Capacity(format!("{} slots do not fit a width-{d} site", slots.len())));
    }
    let (train_seed, eval_seed) = data_seeds(seed);
    let train = gen_counterfactual_dataset_with(model, cfg.train_size, train_seed, cfg.sampling)?;
    let eval = gen_counterfactual_dataset_with(model, cfg.eval_size, eval_seed, cfg.sampling)?;
    let test = gen_counterfactual_dataset_with(model, cfg.test_size, cfg.test_seed, cfg.sampling)?;
    let train = PreparedSet::new(net, site, &train)?;
    let eval = PreparedSet::new(net, site, &eval)?;
    let test = PreparedSet::new(net, site, &test)?;

    let total = cfg.total_steps();
    let mut state = AlignmentState::initial(d, slots, cfg.beta_start, seed)?;
    let mut params = [state.rotation.as_row(), state.boundaries.raw_row()];
    let mut opt_rot = Adam::new(cfg.lr_rotation);
    let mut opt_bnd = Adam::new(cfg.lr_boundary);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let sync = |state: &mut AlignmentState, params: &[Tensor; 2], beta: f64| -> Result<()> {
        state.rotation = crate::intervene::RotationParams::from_upper(d, params[0].to_vec()).map_err(divergence)?;
        state.boundaries.set_raw(params[1].to_vec()).map_err(divergence)?;
        state.boundaries.set_beta(beta)
    };
    let evaluate = |state: &AlignmentState| -> Result<f64> { eval_prepared(net, site, &state.freeze()?, &eval) };

    let mut log = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, state.clone());
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let mut step = 0usize;
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch) {
            if step == total {
                break 'epochs;
            }
            let beta = cfg.beta_at(step, total);
            let batch = train.subset(idx)?;
            let mut tape = Tape::new();
            let u = tape.param(params[0].clone());
            let raw = tape.param(params[1].clone());
            let b = tape.constant(Tensor::scalar(beta)?);
            let loss = objective_on_tape(&mut tape, net, site, &batch, u, raw, b, cfg.width_penalty)
                .map_err(divergence)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence(format!("loss is {value} at step {step}")));
            }
            if step == 0 {
                let iia = evaluate(&state)?;
                log.push(LogEntry {
                    step: 0,
                    beta,
                    eval_iia: iia,
                    widths: state.boundaries.widths(d),
                    loss: value,
                });
                best = (iia, 0, state.clone());
            }
            let grads = tape.backward(loss).map_err(divergence)?;
            let gu = grads.get_or_zeros(u, 1, params[0].cols());
            let gr = grads.get_or_zeros(raw, 1, params[1].cols());
            let [pu, pr] = &mut params;
            opt_rot.step(std::slice::from_mut(pu), &[gu]).map_err(divergence)?;
            opt_bnd.step(std::slice::from_mut(pr), &[gr]).map_err(divergence)?;
            step += 1;
            loss_sum += value;
            loss_n += 1;
            sync(&mut state, &params, cfg.beta_at(step, total))?;
            if step.is_multiple_of(cfg.eval_every) || step == total {
                let iia = evaluate(&state)?;
                log.push(LogEntry {
                    step,
                    beta: state.boundaries.beta(),
                    eval_iia: iia,
                    widths: state.boundaries.widths(d),
                    loss: loss_sum / loss_n as f64,
                });
                loss_sum = 0.0;
                loss_n = 0;
                if iia >= best.0 {
                    best = (iia, step, state.clone());
                }
            }
        }
    }
    let (best_eval_iia, best_step, best_state) = best;
    let test_iia = eval_prepared(net, site, &best_state.freeze()?, &test)?;
    let yes = test.labels.iter().filter(|&&l| l == 0).count() as f64 / test.len() as f64;
    Ok(TrainOutcome {
        state: best_state,
        best_step,
        best_eval_iia,
        final_state: state,
        log,
        test_iia,
        test_base_rate: yes.max(1.0 - yes),
    })
}
