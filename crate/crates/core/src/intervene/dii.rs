//! Distributed interchange interventions, hard and soft.
//!
//! Both are computed in delta form,
//! `h* = h_b + Σ_j ((h_{s_j} − h_b) Rᵀ ∘ M_j) R`,
//! which for orthogonal `R` equals `Rᵀ((1 − ΣM_j) ∘ R h_b + Σ_j M_j ∘ R h_{s_j})`
//! and is exactly `h_b` whenever every source equals the base.

use crate::error::{Error, Result};
use crate::intervene::masks::MaskSet;
use crate::numkernel::{Tape, Tensor, Var};
use crate::target::{ActivationSite, EncodedInput, Network};

/// Records the intervened activation. `sources[j]` is `[batch, d]`; rows
/// equal to the base leave slot `j` inactive for that example.
pub fn splice_on_tape(tape: &mut Tape, r: Var, masks: &[Var], base: Var, sources: &[Var]) -> Result<Var> {
    if masks.len() != sources.len() {
        return Err(Error::Arity { expected: masks.len(), got: sources.len() });
    }
    let rt = tape.transpose(r)?;
    let mut acc: Option<Var> = None;
    for (&m, &s) in masks.iter().zip(sources) {
        let diff = tape.sub(s, base)?;
        let y = tape.matmul(diff, rt)?;
        let y = tape.mul_row(y, m)?;
        acc = Some(match acc {
            None => y,
            Some(a) => tape.add(a, y)?,
        });
    }
    let Some(acc) = acc else { return Ok(base) };
    let back = tape.matmul(acc, r)?;
    tape.add(base, back)
}

/// Hard intervention on precomputed activations: for each slot only the
/// selected rows of `R` take part, so unselected directions stay exact.
pub fn hard_splice(r: &Tensor, partition: &MaskSet, base: &Tensor, sources: &[Tensor]) -> Result<Tensor> {
    partition.check_partition()?;
    if sources.len() != partition.slots() {
        return Err(Error::Arity { expected: partition.slots(), got: sources.len() });
    }
    let d = partition.width();
    if r.shape() != [d, d] || base.cols() != d {
        return Err(Error::Dimension(format!("rotation {:?}, base {:?}, width {d}", r.shape(), base.shape())));
    }
    let mut out = base.clone();
    for (j, src) in sources.iter().enumerate() {
        let idx = partition.indices(j);
        if idx.is_empty() {
            continue;
        }
        let rows = r.select_rows(&idx)?;
        let diff = src.sub(base)?;
        let y = diff.matmul(&rows.transpose())?;
        out = out.add(&y.matmul(&rows)?)?;
    }
    Ok(out)
}

fn activations(net: &Network, site: &ActivationSite, xs: &[EncodedInput]) -> Result<Tensor> {
    net.capture_batch(xs, site)
}

/// Per-slot source activations for a batch; `None` leaves the slot on the base.
fn source_activations(
    net: &Network,
    site: &ActivationSite,
    base: &Tensor,
    bases: &[EncodedInput],
    sources: &[Vec<Option<EncodedInput>>],
    slots: usize,
) -> Result<Vec<Tensor>> {
    if sources.len() != bases.len() {
        return Err(Error::Arity { expected: bases.len(), got: sources.len() });
    }
    if let Some(s) = sources.iter().find(|s| s.len() != slots) {
        return Err(Error::Arity { expected: slots, got: s.len() });
    }
    (0..slots)
        .map(|j| {
            let xs: Vec<EncodedInput> = sources.iter().zip(bases).map(|(s, b)| s[j].unwrap_or(*b)).collect();
            let mut act = activations(net, site, &xs)?;
            // rows without a source are taken from the base bit for bit
            if sources.iter().any(|s| s[j].is_none()) {
                let d = base.cols();
                let mut data = act.to_vec();
                for (i, s) in sources.iter().enumerate() {
                    if s[j].is_none() {
                        data[i * d..(i + 1) * d].copy_from_slice(base.row_slice(i));
                    }
                }
                act = Tensor::new(act.rows(), d, data)?;
            }
            Ok(act)
        })
        .collect()
}

/// Hard interventions for a batch; `sources[i][j]` feeds slot `j` of example `i`.
pub fn hard_dii_batch(
    net: &Network,
    site: &ActivationSite,
    r: &Tensor,
    partition: &MaskSet,
    bases: &[EncodedInput],
    sources: &[Vec<Option<EncodedInput>>],
) -> Result<Tensor> {
    partition.check_partition()?;
    let base = activations(net, site, bases)?;
    let src = source_activations(net, site, &base, bases, sources, partition.slots())?;
    let act = hard_splice(r, partition, &base, &src)?;
    let mut tape = Tape::new();
    let a = tape.constant(act);
    let logits = net.forward_from_site(&mut tape, bases, site, a)?;
    Ok(tape.value(logits).clone())
}

/// Logits of one hard intervention with one source per slot.
pub fn hard_dii(
    net: &Network,
    site: &ActivationSite,
    r: &Tensor,
    partition: &MaskSet,
    base: &EncodedInput,
    sources: &[EncodedInput],
) -> Result<Tensor> {
    if sources.len() != partition.slots() {
        return Err(Error::Arity { expected: partition.slots(), got: sources.len() });
    }
    let src: Vec<Option<EncodedInput>> = sources.iter().copied().map(Some).collect();
    hard_dii_batch(net, site, r, partition, std::slice::from_ref(base), &[src])
}

/// Soft interventions for a batch, weighting each slot by its mask.
pub fn soft_dii_batch(
    net: &Network,
    site: &ActivationSite,
    r: &Tensor,
    masks: &MaskSet,
    bases: &[EncodedInput],
    sources: &[Vec<Option<EncodedInput>>],
) -> Result<Tensor> {
    let base = activations(net, site, bases)?;
    let src = source_activations(net, site, &base, bases, sources, masks.slots())?;
    let mut tape = Tape::new();
    let rv = tape.constant(r.clone());
    let mv: Vec<Var> = masks.rows().into_iter().map(|m| tape.constant(m)).collect();
    let bv = tape.constant(base);
    let sv: Vec<Var> = src.into_iter().map(|s| tape.constant(s)).collect();
    let act = splice_on_tape(&mut tape, rv, &mv, bv, &sv)?;
    let logits = net.forward_from_site(&mut tape, bases, site, act)?;
    Ok(tape.value(logits).clone())
}

pub fn soft_dii(
    net: &Network,
    site: &ActivationSite,
    r: &Tensor,
    masks: &MaskSet,
    base: &EncodedInput,
    sources: &[EncodedInput],
) -> Result<Tensor> {
    if sources.len() != masks.slots() {
        return Err(Error::Arity { expected: masks.slots(), got: sources.len() });
    }
    let src: Vec<Option<EncodedInput>> = sources.iter().copied().map(Some).collect();
    soft_dii_batch(net, site, r, masks, std::slice::from_ref(base), &[src])
}

/// Intervened activations alone, soft version, for comparisons at the site.
pub fn soft_splice(r: &Tensor, masks: &MaskSet, base: &Tensor, sources: &[Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let rv = tape.constant(r.clone());
    let mv: Vec<Var> = masks.rows().into_iter().map(|m| tape.constant(m)).collect();
    let bv = tape.constant(base.clone());
    let sv: Vec<Var> = sources.iter().map(|s| tape.constant(s.clone())).collect();
    let out = splice_on_tape(&mut tape, rv, &mv, bv, &sv)?;
    Ok(tape.value(out).clone())
}
