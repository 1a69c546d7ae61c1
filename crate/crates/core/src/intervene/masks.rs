//! Learnable subspace boundaries and the sigmoid masks they induce.
//!
//! Mask entry `k` of slot `j` is `σ((c_k − b_j)/β) · σ((b_{j+1} − c_k)/β)`
//! where `c_k = k + ½` is the centre of coordinate `k` (0-based). At
//! saturation slot `j` therefore selects the coordinates whose cells lie
//! in `[b_j, b_{j+1})`.

use crate::error::{Error, Result};
use crate::numkernel::{sigmoid, softplus, softplus_inv, Tape, Tensor, Var};

/// `k` unconstrained increments. With `b_0 = 0`,
/// `b_j = min(d, d · Σ_{i<j} softplus(raw_i))` for `j = 1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryParams {
    raw: Vec<f64>,
    beta: f64,
}

impl BoundaryParams {
    pub fn new(raw: Vec<f64>, beta: f64) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Dimension("at least one mask slot is required".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("boundary parameters".into()));
        }
        check_beta(beta)?;
        Ok(Self { raw, beta })
    }

    /// `k` slots sharing half of the space equally.
    pub fn half_space(k: usize, beta: f64) -> Result<Self> {
        Self::new(vec![softplus_inv(0.5 / k as f64); k], beta)
    }

    /// Parameters whose boundaries are exactly `b` (with `b[0] = 0`,
    /// strictly increasing, `b[k] < d`).
    pub fn from_boundaries(b: &[f64], d: usize, beta: f64) -> Result<Self> {
        if b.len() < 2 || b[0] != 0.0 || b.windows(2).any(|w| w[1] <= w[0]) || b[b.len() - 1] >= d as f64 {
            return Err(Error::Dimension(format!("boundaries {b:?} are not 0 = b0 < … < bk < {d}")));
        }
        let raw = b.windows(2).map(|w| softplus_inv((w[1] - w[0]) / d as f64)).collect();
        Self::new(raw, beta)
    }

    pub fn slots(&self) -> usize {
        self.raw.len()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        check_beta(beta)?;
        self.beta = beta;
        Ok(())
    }

    pub fn set_raw(&mut self, raw: Vec<f64>) -> Result<()> {
        *self = Self::new(raw, self.beta)?;
        Ok(())
    }

    pub fn raw_row(&self) -> Tensor {
        Tensor::row(self.raw.clone()).expect("finite by construction")
    }

    /// `b_0 = 0, b_1, …, b_k`.
    pub fn boundaries(&self, d: usize) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.raw.len() + 1);
        b.push(0.0);
        let mut acc = 0.0;
        for &r in &self.raw {
            acc += softplus(r);
            b.push((d as f64 * acc).min(d as f64));
        }
        b
    }

    /// Slot widths `b_{j+1} − b_j` in dimensions.
    pub fn widths(&self, d: usize) -> Vec<f64> {
        self.boundaries(d).windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn masks(&self, d: usize) -> MaskSet {
        masks_from_boundaries(&self.boundaries(d), d, self.beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Dimension(format!("temperature must be positive, got {beta}")));
    }
    Ok(())
}

fn centre(k: usize) -> f64 {
    k as f64 + 0.5
}

/// Masks for explicit boundaries `b_0 ≤ … ≤ b_k`.
pub fn masks_from_boundaries(b: &[f64], d: usize, beta: f64) -> MaskSet {
    let masks = b
        .windows(2)
        .map(|w| (0..d).map(|k| sigmoid((centre(k) - w[0]) / beta) * sigmoid((w[1] - centre(k)) / beta)).collect())
        .collect();
    MaskSet { d, masks }
}

/// `k` masks over `d` coordinates; the residual `1 − Σ M_j` keeps the base.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    d: usize,
    masks: Vec<Vec<f64>>,
}

impl MaskSet {
    pub fn new(d: usize, masks: Vec<Vec<f64>>) -> Result<Self> {
        for m in &masks {
            if m.len() != d {
                return Err(Error::Dimension(format!("mask of length {} for width {d}", m.len())));
            }
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Partition("mask entries must lie in [0, 1]".into()));
            }
        }
        Ok(Self { d, masks })
    }

    /// Binary masks selecting the given index ranges.
    pub fn from_ranges(d: usize, ranges: &[std::ops::Range<usize>]) -> Result<Self> {
        let masks = ranges.iter().map(|r| (0..d).map(|k| if r.contains(&k) { 1.0 } else { 0.0 }).collect()).collect();
        let set = Self::new(d, masks)?;
        set.check_partition()?;
        Ok(set)
    }

    pub fn width(&self) -> usize {
        self.d
    }

    pub fn slots(&self) -> usize {
        self.masks.len()
    }

    pub fn mask(&self, j: usize) -> &[f64] {
        &self.masks[j]
    }

    pub fn residual(&self) -> Vec<f64> {
        (0..self.d).map(|k| 1.0 - self.masks.iter().map(|m| m[k]).sum::<f64>()).collect()
    }

    pub fn is_binary(&self) -> bool {
        self.masks.iter().flatten().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Errors unless every mask is binary and no coordinate is claimed twice.
    pub fn check_partition(&self) -> Result<()> {
        if !self.is_binary() {
            return Err(Error::Partition("masks are not binary".into()));
        }
        if self.residual().iter().any(|&r| r < 0.0) {
            return Err(Error::Partition("mask slots overlap".into()));
        }
        Ok(())
    }

    /// Coordinates selected by slot `j` of a binary set.
    pub fn indices(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&k| self.masks[j][k] >= 0.5).collect()
    }

    /// Number of coordinates selected across slots of a binary set.
    pub fn total_width(&self) -> usize {
        (0..self.slots()).map(|j| self.indices(j).len()).sum()
    }

    pub fn rows(&self) -> Vec<Tensor> {
        self.masks.iter().map(|m| Tensor::row(m.clone()).expect("finite")).collect()
    }
}

/// Thresholds at ½; a coordinate claimed by several slots goes to the lowest.
pub fn snap_masks(m: &MaskSet) -> MaskSet {
    let mut taken = vec![false; m.d];
    let masks = m
        .masks
        .iter()
        .map(|mask| {
            mask.iter()
                .enumerate()
                .map(|(k, &v)| {
                    if v >= 0.5 && !taken[k] {
                        taken[k] = true;
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    MaskSet { d: m.d, masks }
}

/// Records the masks on the tape as `[1, d]` rows, differentiable in the
/// raw increments `raw` (`[1, k]`) and the temperature `beta` (`[1, 1]`).
pub fn masks_on_tape(tape: &mut Tape, raw: Var, beta: Var, d: usize) -> Result<Vec<Var>> {
    let k = tape.shape(raw)[1];
    let inc = tape.softplus(raw)?;
    let cum = tape.cumsum_cols(inc)?;
    let b = tape.scale(cum, d as f64)?;
    let b = tape.clamp_max(b, d as f64)?;
    let centres = tape.constant(Tensor::row((0..d).map(centre).collect())?);
    let mut lower = None;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let upper = tape.slice_cols(b, j, 1)?;
        // σ((c − b_j)/β), with b_0 = 0
        let left = match lower {
            None => tape.div_scalar(centres, beta)?,
            Some(bj) => {
                let neg = tape.scale(bj, -1.0)?;
                let shifted = tape.add_scalar(centres, neg)?;
                tape.div_scalar(shifted, beta)?
            }
        };
        let left = tape.sigmoid(left)?;
        // σ((b_{j+1} − c)/β)
        let neg_c = tape.scale(centres, -1.0)?;
        let right = tape.add_scalar(neg_c, upper)?;
        let right = tape.div_scalar(right, beta)?;
        let right = tape.sigmoid(right)?;
        out.push(tape.mul(left, right)?);
        lower = Some(upper);
    }
    Ok(out)
}
