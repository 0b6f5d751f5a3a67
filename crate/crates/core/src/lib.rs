//! Episodic path planning against an unknown capture intensity.
//!
//! An evader repeatedly escapes a square domain. Each episode it plans the
//! minimum-risk path for a lower-confidence estimate of the intensity (Fast
//! Marching on the Eikonal equation), runs it against the true intensity and
//! learns from the right-censored outcome, either with a piecewise-constant
//! MLE per cell or with Gaussian-process regression on `log K`.

pub mod censored;
pub mod eikonal;
pub mod episode;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod grid;
pub mod path;
pub mod planner;
pub mod scenario;
pub mod svg;

pub use error::{Error, Result};
pub use grid::{CellId, Domain, ObsGrid, PdeGrid, Point, ScalarField};
pub use scenario::Scenario;
