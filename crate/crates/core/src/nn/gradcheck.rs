//! Central finite-difference gradient verification.
//!
//! Only the forward pass is used here, so the result is independent of
//! [`Mlp::backward`](super::Mlp::backward).

use super::Mlp;
use crate::error::Result;

/// Entries smaller than this are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Numerical gradient of `sum_k weights[k] * net(input)[k]` with respect to
/// every parameter, by central differences with step `h`.
pub fn numerical_gradient(net: &Mlp, input: &[f64], weights: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = net.clone();
    let loss = |n: &Mlp| -> Result<f64> {
        Ok(n.infer(input)?.iter().zip(weights).map(|(y, w)| y * w).sum())
    };
    let mut grad = Vec::with_capacity(net.num_params());
    for i in 0..net.num_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss(&probe)?;
        probe.params_mut()[i] = orig - h;
        let down = loss(&probe)?;
        probe.params_mut()[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`, maximised over entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

/// Compares backpropagation against central differences for one input.
pub fn check(net: &Mlp, input: &[f64], weights: &[f64], h: f64) -> Result<f64> {
    let (_, cache) = net.forward(input)?;
    let analytic = net.backward(&cache, weights)?;
    let numeric = numerical_gradient(net, input, weights, h)?;
    Ok(max_relative_error(&analytic, &numeric))
}
