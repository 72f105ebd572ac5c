//! Polynomial-spline KANs and their lowering to networks that mix ReLU and monomial
//! activations.
//!
//! A spline with pieces `P_1 … P_k` split at `b_1 < … < b_{k−1}` is rewritten as
//!
//! ```text
//! P_1(x) + Σ_i (P_{i+1}^{b_i} − P_i^{b_i})(relu(x − b_i)),   P^b(y) := P(y + b)
//! ```
//!
//! Each term vanishes for `x ≤ b_i`, so the sum telescopes to `P_i(x)` on piece `i`.
//! `P_1(x)` itself is realized as `P_1(relu(x)) + P_1(−relu(−x)) − P_1(0)` so the
//! result holds for negative inputs too.

mod monomial;
mod poly;

pub use monomial::{
    bspline_to_monomial_relu, monomial_relu_to_spline_kan, spline_kan_to_monomial_relu, MonomialReluBlock,
    MonomialReluNetwork,
};
pub use poly::{eval_poly, shift_poly, PolySegmentSpline, SplineKan, SplineKanLayer, MAX_DEGREE};
