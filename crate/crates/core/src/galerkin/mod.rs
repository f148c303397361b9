//! Divergence-free spectral Galerkin discretization on the straight periodic
//! channel and its semi-implicit Euler–Maruyama integrator.

mod basis;
mod integrate;
mod operators;

pub use basis::{build_basis, wall_profile, GalerkinBasis, Mode, VelocitySample, XFun};
pub use integrate::{
    cross_section_flux, velocity_eval, EnergyLedger, FwSource, SimConfig, Simulator, Trajectory,
};
pub use operators::{assemble_operators, BasisTable, OperatorSet, QuadGrid, ShearProfile};
