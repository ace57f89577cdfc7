//! Numerical workbench for singular integrals invariant under Zygmund
//! dilations `(x1, x2, x3) -> (s*x1, t*x2, s*t*x3)`.
//!
//! The crate provides, at desk scale:
//!
//! * [`geometry`] — intervals, Zygmund rectangles, dilations, dyadic
//!   enumeration and reflected rectangles;
//! * [`kernels`] — the Zygmund kernel calculus (`D_theta`, `size_Z`), the
//!   Nagel–Wainger kernel, non-degeneracy witnesses and bound checkers;
//! * [`fields`] — symbols `b`, grid functions and midpoint quadrature;
//! * [`operators`] — direct-quadrature `T`, `T*`, commutator pairings,
//!   off-diagonal constants, partial kernels and Riesz potentials;
//! * [`awf`] — approximate weak factorization and oscillation certificates;
//! * [`norms`] — `osc`, `bmo_Z`, `bmo_Z^alpha`, the Hölder characterization
//!   and Muckenhoupt-type weight constants over Zygmund rectangles;
//! * [`compact`] — compactness obstructions: disjoint subsequence selection,
//!   shrinking-scale oscillation probes and constancy-forcing chains;
//! * [`multiplier`] — the explicit Fefferman–Pipher multiplier audit.
//!
//! All quadratures are tensor-product midpoint rules on separated supports;
//! convergence is certified by refinement doubling, never by adaptivity.
//! Operations are pure and deterministic: parallel sweeps reduce in a fixed
//! order, so identical inputs produce bitwise identical outputs.

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values;
// the positive-form comparison clippy prefers would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod awf;
pub mod compact;
pub mod fields;
pub mod geometry;
pub mod kernels;
pub mod multiplier;
pub mod norms;
pub mod operators;
pub mod sum;
