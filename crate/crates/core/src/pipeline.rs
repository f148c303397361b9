//! Flux path to basic field in one call.

use crate::basic_field::{blend_stream, BasicField, ChannelGeometry, InnerStream, WALL_TOL};
use crate::error::Result;
use crate::heat_kernel::{solve_heat, uniform_y_grid, HeatSolution, KernelConfig};
use crate::signals::{gen_flux, FluxKind, FluxSignal, TimeGrid};
use crate::volterra::{solve_volterra, VolterraResult};

/// Default Picard tolerance for the flux inversion.
pub const VOLTERRA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub kind: FluxKind,
    pub nu: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_trunc: usize,
    pub seed: u64,
    /// Number of `y` intervals of the stored `w₁` table (evaluation is analytic).
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldBuild {
    pub flux: FluxSignal,
    pub kernel: KernelConfig,
    pub volterra: VolterraResult,
    pub heat: HeatSolution,
}

impl FieldBuild {
    pub fn field(&self, geometry: &ChannelGeometry) -> Result<BasicField> {
        blend_stream(&InnerStream::matching(&self.heat), &self.heat, geometry, WALL_TOL)
    }
}

/// `F → f` by Volterra inversion, then `f → w₁` by the heat series.
pub fn build_field(spec: &FieldSpec) -> Result<FieldBuild> {
    let grid = TimeGrid::new(spec.t_end, spec.dt)?;
    let kernel = KernelConfig::new(spec.nu, spec.n_trunc, spec.t_end)?;
    let flux = gen_flux(spec.kind, &grid, spec.seed)?;
    let volterra = solve_volterra(&flux.dfdt, &grid, &kernel, VOLTERRA_TOL)?;
    let heat = solve_heat(&volterra.f, &uniform_y_grid(spec.ny), &kernel)?;
    Ok(FieldBuild {
        flux,
        kernel,
        volterra,
        heat,
    })
}
