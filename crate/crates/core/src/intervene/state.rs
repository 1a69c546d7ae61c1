//! Learnable alignment state, its frozen snapshots, and persistence.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervene::masks::{snap_masks, BoundaryParams, MaskSet};
use crate::intervene::rotation::{upper_len, RotationParams};
use crate::io::{f64_bytes, f64_from_bytes, write_atomic};
use crate::numkernel::Tensor;

/// Rotation and boundary parameters plus the variable map: slot `j`
/// holds the high-level variable `slots[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentState {
    pub rotation: RotationParams,
    pub boundaries: BoundaryParams,
    pub slots: Vec<String>,
    pub seed: u64,
}

/// Frozen alignment: an explicit orthogonal matrix and binary masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub rotation: Tensor,
    pub partition: MaskSet,
}

impl Alignment {
    pub fn new(rotation: Tensor, partition: MaskSet) -> Result<Self> {
        partition.check_partition()?;
        if rotation.shape() != [partition.width(), partition.width()] {
            return Err(Error::Dimension(format!(
                "rotation {:?} for masks of width {}",
                rotation.shape(),
                partition.width()
            )));
        }
        Ok(Self { rotation, partition })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    d: usize,
    k: usize,
    slots: Vec<String>,
    seed: u64,
}

impl AlignmentState {
    /// `R = I` and `k` slots sharing half the space.
    pub fn initial(d: usize, slots: Vec<String>, beta: f64, seed: u64) -> Result<Self> {
        let k = slots.len();
        if k == 0 {
            return Err(Error::Dimension("an alignment needs at least one slot".into()));
        }
        Ok(Self { rotation: RotationParams::identity(d), boundaries: BoundaryParams::half_space(k, beta)?, slots, seed })
    }

    /// Random rotation parameters and random boundaries, for chance baselines.
    pub fn random(d: usize, slots: Vec<String>, beta: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper = (0..upper_len(d)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let raw = (0..slots.len()).map(|_| rng.random_range(-4.0..0.0)).collect();
        Ok(Self {
            rotation: RotationParams::from_upper(d, upper)?,
            boundaries: BoundaryParams::new(raw, beta)?,
            slots,
            seed,
        })
    }

    pub fn width(&self) -> usize {
        self.rotation.width()
    }

    pub fn masks(&self) -> MaskSet {
        self.boundaries.masks(self.width())
    }

    /// Materialised rotation with masks snapped at the current temperature.
    pub fn freeze(&self) -> Result<Alignment> {
        Alignment::new(self.rotation.materialize()?, snap_masks(&self.masks()))
    }

    /// Writes `<stem>.bin` (skew entries, raw increments, β) and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let (bin, json) = self.encode()?;
        write_atomic(&stem.with_extension("bin"), &bin)?;
        write_atomic(&stem.with_extension("json"), &json)
    }

    /// The `.bin` payload and `.json` sidecar contents.
    pub fn encode(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut payload = self.rotation.upper().to_vec();
        payload.extend_from_slice(self.boundaries.raw());
        payload.push(self.boundaries.beta());
        let sidecar = Sidecar { d: self.width(), k: self.slots.len(), slots: self.slots.clone(), seed: self.seed };
        Ok((f64_bytes(&payload), serde_json::to_string_pretty(&sidecar)?.into_bytes()))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let payload = f64_from_bytes(&std::fs::read(stem.with_extension("bin"))?)?;
        let n = upper_len(sidecar.d);
        if payload.len() != n + sidecar.k + 1 || sidecar.slots.len() != sidecar.k {
            return Err(Error::Decode(format!(
                "alignment payload of {} values does not match d = {}, k = {}",
                payload.len(),
                sidecar.d,
                sidecar.k
            )));
        }
        Ok(Self {
            rotation: RotationParams::from_upper(sidecar.d, payload[..n].to_vec())?,
            boundaries: BoundaryParams::new(payload[n..n + sidecar.k].to_vec(), payload[n + sidecar.k])?,
            slots: sidecar.slots,
            seed: sidecar.seed,
        })
    }
}
