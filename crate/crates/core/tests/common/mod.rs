#![allow(dead_code)]

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stochan_core::heat_kernel::HeatSolution;
use stochan_core::pipeline::{build_field, FieldSpec};
use stochan_core::signals::FluxKind;

/// Outlet profile for a ramp flux `F(t) = slope·t`, `ν = 1`, 64 modes.
pub fn ramp_heat(slope: f64, t_end: f64, dt: f64) -> HeatSolution {
    build_field(&FieldSpec {
        kind: FluxKind::Ramp { slope },
        nu: 1.0,
        t_end,
        dt,
        n_trunc: 64,
        seed: 1,
        ny: 50,
    })
    .unwrap()
    .heat
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}
