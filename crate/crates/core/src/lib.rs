//! Fair, handover-aware downlink resource allocation for LEO constellations.
//!
//! The crate simulates a Walker-delta constellation serving fixed geographic
//! cells and allocates per-slot OFDMA frames to the cells with two
//! strategies:
//!
//! * a **global** optimizer that solves a relaxed proportional-fair problem
//!   with a reweighted-l1 sparsity penalty (projected gradient ascent with an
//!   exact box-plus-budget projection), then rounds and repairs the result;
//! * a **distributed** baseline that first matches every cell to one
//!   satellite by a weight rule and then solves each satellite's local
//!   log-utility allocation in closed form (capped water-filling).
//!
//! The pipeline runs from orbital geometry (`orbital`), through the cell grid
//! and population (`geodata`) and the link budget (`linkbudget`), to the
//! solvers (`solver`, `allocator`) and per-slot performance metrics
//! (`metrics`). `simrunner` orchestrates whole episodes and parameter sweeps
//! and backs the `leofair` CLI.

pub mod allocator;
pub mod error;
pub mod geo;
pub mod geodata;
pub mod linkbudget;
pub mod metrics;
pub mod orbital;
pub mod simrunner;
pub mod solver;

pub use error::SimError;
