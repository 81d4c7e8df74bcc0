//! Quasistatic delamination of a Kelvin-Voigt visco-elastic body glued to a
//! rigid obstacle through a brittle adhesive, under unilateral frictionless
//! contact.
//!
//! Each time step solves two convex problems: a bound-constrained quadratic
//! program for the displacement with the bond field frozen, then a local
//! closed-form update of the bond field driven by the stored adhesive
//! energy. The energy ledger tracks stored energy, viscous and adhesive
//! dissipation, and boundary work, exposing the residual of the discrete
//! energy balance; the adaptive driver refines viscosity and time step
//! jointly under an L1 gate on that residual. A closed-form slider oracle
//! provides ground truth for verification.

pub mod driver;
pub mod energy;
pub mod fem;
pub mod model;
pub mod oracle;
pub mod qp;
pub mod sparse;
pub mod stepper;

pub use driver::{run_adaptive, sweep_grid, AdaptiveOutcome, DriverConfig};
pub use energy::EnergyLedger;
pub use fem::AssembledOperators;
pub use model::{
    build_rect_mesh, validate_initial_state, AdhesiveLaw, BoundaryTag, LoadProgram, MaterialKV,
    Mesh2D, MeshLayout, SimState,
};
pub use oracle::{SliderOracle, SliderParams};
pub use qp::KktDiagnostics;
pub use stepper::{Problem, QpOptions, RunSummary, Simulation, StepReport};
