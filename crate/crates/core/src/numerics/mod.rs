//! Small deterministic dense linear algebra and loss primitives.
//!
//! Everything here is `f64` and single-threaded; the rest of the crate
//! builds on these types rather than a general tensor library.

mod fd;
mod loss;
mod matrix;
mod rng;
mod vector;

pub use fd::finite_diff_grad;
pub use loss::{cross_entropy, log_sum_exp, softmax};
pub use matrix::Matrix;
pub use rng::RngState;
pub use vector::{dot, Vector};

pub(crate) use vector::axpy;

pub(crate) use loss::{cross_entropy_slice, softmax_slice};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[-1.0]), 0);
    }
}
