//! Orthogonal matrices through the Cayley transform of a skew-symmetric
//! matrix: `R = (I − A)(I + A)⁻¹`.

use crate::error::{Error, Result};
use crate::numkernel::linalg::Lu;
use crate::numkernel::{Tape, Tensor, Var};

/// Strict upper triangle of `A`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationParams {
    d: usize,
    upper: Vec<f64>,
}

pub fn upper_len(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

impl RotationParams {
    /// `A = 0`, so `R = I`.
    pub fn identity(d: usize) -> Self {
        Self { d, upper: vec![0.0; upper_len(d)] }
    }

    pub fn from_upper(d: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != upper_len(d) {
            return Err(Error::Dimension(format!("{} skew entries for width {d}", upper.len())));
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rotation parameters".into()));
        }
        Ok(Self { d, upper })
    }

    pub fn width(&self) -> usize {
        self.d
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Parameters as a `1 × d(d−1)/2` row, the shape the tape works on.
    pub fn as_row(&self) -> Tensor {
        Tensor::new(1, self.upper.len().max(1), if self.upper.is_empty() { vec![0.0] } else { self.upper.clone() })
            .expect("finite by construction")
    }

    pub fn skew(&self) -> Tensor {
        let d = self.d;
        let mut a = vec![0.0; d * d];
        let mut k = 0;
        for i in 0..d {
            for j in i + 1..d {
                a[i * d + j] = self.upper[k];
                a[j * d + i] = -self.upper[k];
                k += 1;
            }
        }
        Tensor::new(d, d, a).expect("finite")
    }

    /// The orthogonal matrix `R`.
    pub fn materialize(&self) -> Result<Tensor> {
        let a = self.skew();
        let i = Tensor::identity(self.d);
        let lu = Lu::factor(&i.add(&a)?)?;
        lu.solve(&i.sub(&a)?)
    }
}

/// Records `R` on the tape as a function of the upper-triangle row `u`.
pub fn rotation_on_tape(tape: &mut Tape, u: Var, d: usize) -> Result<Var> {
    let a = tape.skew_from_upper(u, d)?;
    let i = tape.constant(Tensor::identity(d));
    let plus = tape.add(i, a)?;
    let minus = tape.sub(i, a)?;
    tape.solve(plus, minus)
}
