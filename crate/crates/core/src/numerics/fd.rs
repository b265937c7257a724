use crate::error::{Error, Result};

/// Central finite differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h`.
///
/// This is the oracle every analytic gradient in the crate is checked
/// against, so it deliberately knows nothing about the models.
pub fn finite_difference_gradient<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = f(&point)?;
        point[i] = orig - h;
        let minus = f(&point)?;
        point[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite at coordinate {i} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
