//! Radial numerical toolkit for a singular fourth-order conformal equation:
//! sharp-constant bookkeeping, exact radial power-sum calculus against a
//! finite-difference oracle, conformally flat curvature coefficients and
//! validity thresholds, concentrating test-function energy expansions, a
//! constrained Sobolev-quotient minimizer, and the kernel-decay exponent
//! algebra of the regularity theory.

pub mod bubble;
pub mod conformal;
pub mod constants;
pub mod grid;
pub mod minimizer;
pub mod powersum;
pub mod quad;
pub mod regularity;
pub mod report;
