//! Correlation-tree perturbation engine for a two-branch (forward/backward)
//! boson algebra: finite mode grids, an exact truncated-Fock oracle for the
//! von Neumann dynamics, directed-tree combinatorics, a normal-ordered Wick
//! engine, oscillatory-Gaussian diagram amplitudes, and Bogoliubov-Parasiuk
//! moment subtraction with time-translation-invariant counterterms.

pub mod corrdyn;
pub mod fock;

pub mod friedrichs;
pub mod gausscalc;
pub mod linalg;
pub mod modespace;
pub mod quad;
pub mod renorm;

pub mod treealg;
pub mod verify;


pub use num_complex::Complex64 as C64;

/// Absolute/relative closeness used across oracle comparisons.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / denom
}
