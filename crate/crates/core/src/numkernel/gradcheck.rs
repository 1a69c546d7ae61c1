//! Central finite-difference check of tape gradients.

use crate::error::{Error, Result};
use crate::numkernel::{Tape, Tensor, Var};

/// Compares the tape gradient of a scalar function with central
/// differences at step `eps` and returns
/// `max_i |analytic_i − fd_i| / (|fd_i| + 1e-12)`.
///
/// `f` receives a fresh tape and the parameter node and must return a
/// `1 × 1` node.
pub fn grad_check<F>(f: F, params: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let p = tape.param(params.clone());
    let out = f(&mut tape, p)?;
    let analytic = tape.backward(out)?.get_or_zeros(p, params.rows(), params.cols());

    let eval = |data: Vec<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let t = Tensor::new(params.rows(), params.cols(), data)?;
        let p = tape.param(t);
        let out = f(&mut tape, p)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        Ok(v)
    };

    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let mut plus = params.to_vec();
        plus[i] += eps;
        let mut minus = params.to_vec();
        minus[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let rel = (analytic.data()[i] - fd).abs() / (fd.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
