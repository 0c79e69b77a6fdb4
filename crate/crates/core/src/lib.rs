//! Sketch-and-project Kaczmarz solvers with Gaussian sketches, convergence
//! rate bounds, Monte Carlo checks of the probabilistic lemmas behind them,
//! and an experiment harness.

pub mod error;
pub mod linalg;
pub mod rng;
pub mod sketch;
pub mod solver;
pub mod bounds;
pub mod models;
pub mod verify;
pub mod harness;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SpectralSummary};
pub use sketch::{SketchDraw, SketchKind, SketchSpec};
