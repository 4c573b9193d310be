//! Finite-volume discretization of the degenerate operator on `(0, 1)`,
//! weighted norms and implicit time stepping.

mod grid;
pub mod io;
mod norms;
mod operator;
mod step;
mod tridiag;

pub use grid::{dot, l2, FieldKind, Grid, StateField};
pub use norms::{norm_h1a, norm_h1a_sq, seminorm_h1a_sq};
pub use operator::{assemble_operator, drift, stiffness, DegenerateOperator};
pub use step::{
    energy_growth_ok, solve_trajectory, step_adjoint_backward, step_forward, Stepper, TimeScheme,
    Trajectory,
};
pub use tridiag::{SymPenta, Tridiagonal};
