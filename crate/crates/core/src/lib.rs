//! Reflected dynamics and differential games on the nonnegative orthant.

pub mod costs;
pub mod dynamics;
pub mod game;
pub mod geometry;
pub mod presets;
mod linalg;
pub mod solver;

pub use costs::{CostBranch, CostError, CostFamily};
pub use dynamics::{DynamicsError, SampledPath};
pub use geometry::{ConstraintGeometry, GeometryError, ProjectionResult};
pub use solver::{OrthantGrid, SolverError, ValueField};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod book_geometry {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod book_dynamics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/costs.md")]
pub mod book_costs {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solvers.md")]
pub mod book_solvers {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/games.md")]
pub mod book_games {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/networks.md")]
pub mod book_networks {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}
