//! Dense linear-programming and convex-projection kernel.
//!
//! Everything here is a pure function of its inputs. The forecaster uses the
//! simplex solver for the per-trial approachability step and the l1-ball
//! projection for its target set; the metrics layer uses the solver for the
//! distance to the correlated-equilibrium polytope.

mod grid;
mod projection;
mod simplex;

pub use grid::{lattice_cardinality, lattice_point, lattice_resolution, simplex_grid, GridError, DEFAULT_GRID_CAP};
pub use projection::{project_l2_onto_l1_ball, project_l2_onto_l1_ball_with_threshold};
pub use simplex::{solve_lp, LinearProgram, LpError, LpSolution, LpStatus};

/// Numerical tolerances shared by the kernel and its callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Row feasibility of an optimal LP solution, relative to the row norm.
    pub feasibility: f64,
    /// Slack allowed on the l1 norm of a projected vector.
    pub projection: f64,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot: f64,
    /// Reduced costs above `-optimality` count as non-improving.
    pub optimality: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    feasibility: 1e-9,
    projection: 1e-12,
    pivot: 1e-11,
    optimality: 1e-10,
};
