//! Fast decoupled AC power flow with classical and simulated HHL linear
//! solvers, a statevector simulator with Pauli-trajectory noise, and the
//! diagnostics used to compare them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod fdlf;
pub mod hhl;
pub mod linalg;
pub mod netmodel;
pub mod noise;
pub mod qsim;
