//! Finite-difference utilities for validating analytic gradients. The
//! training stack is hand-written, so every layer's backward pass is held
//! against central differences in tests, and the acceptance gate repeats
//! the exercise on the fusion head and the small backbone.

/// Central-difference derivative with respect to one scalar slot.
/// `eval_at` writes the candidate value into the slot and returns the
/// loss; it is called one final time with `orig` to restore state.
pub fn fd_grad(orig: f64, mut eval_at: impl FnMut(f64) -> f64, h: f64) -> f64 {
    let plus = eval_at(orig + h);
    let minus = eval_at(orig - h);
    let _ = eval_at(orig);
    (plus - minus) / (2.0 * h)
}

/// Relative disagreement between two derivative estimates, floored so that
/// near-zero gradients compare absolutely.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
