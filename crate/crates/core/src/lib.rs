//! Mild solutions of impulsive neutral integro-differential equations with
//! infinite delay, together with hypothesis checks and almost periodicity
//! diagnostics.

pub mod almost_periodicity;
pub mod cli;
pub mod config;
pub mod expr;
pub mod heat;
pub mod hypothesis;
pub mod io;
pub mod phase_space;
pub mod quadrature;
pub mod semigroup;
pub mod solver;
pub mod trajectory;
