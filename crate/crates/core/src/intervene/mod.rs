//! Rotations, boundary masks, and distributed interchange interventions.

mod dii;
mod masks;
mod rotation;
mod state;

pub use dii::{hard_dii, hard_dii_batch, hard_splice, soft_dii, soft_dii_batch, soft_splice, splice_on_tape};
pub use masks::{masks_from_boundaries, masks_on_tape, snap_masks, BoundaryParams, MaskSet};
pub use rotation::{rotation_on_tape, upper_len, RotationParams};
pub use state::{Alignment, AlignmentState};

#[cfg(test)]
mod tests;
