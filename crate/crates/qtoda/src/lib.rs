//! Exact arithmetic for quantum torus operators acting on the charged
//! free-fermion Fock space, together with Toda-lattice tau function
//! evaluation for three solvable models (melting crystal partition
//! functions, topological vertex amplitudes, double Hurwitz numbers).
//!
//! All coefficients are Laurent polynomials over arbitrary-precision
//! rationals in a square root `x` of the quantization parameter `q`,
//! a grading variable `Q`, and a bounded set of time variables.
//! Truncation orders are tracked per variable so that every reported
//! equality is an honest statement about a verified window.

pub mod crystal;
pub mod fock;
pub mod hurwitz;
pub mod operators;
pub mod qlaurent;
pub mod qtorus;
pub mod report;
pub mod tau;
