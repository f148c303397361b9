//! Inversion of the flux map.
//!
//! The forcing `f` that drives a prescribed flux `F` solves the second-kind
//! Volterra equation `f = ∂ₜF + 𝒦f` with `𝒦ψ = −H∗ψ = 8ν Σ_n ∫₀ᵗ e^{−λ_n(t−s)}ψ(s) ds`.
//! Modes `n < N` are convolved exactly (piecewise-linear `ψ`). Modes `n ≥ N` relax
//! within a fraction of a step, so they act as the multiplier
//! `τ_N = (8/π²) Σ_{n≥N} (2n+1)⁻²` on `ψ(t)`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::heat_kernel::{kernel_h, modal_convolution, KernelConfig};
use crate::quadrature::gauss_legendre;
use crate::signals::{trapezoid, ForcingSignal, TimeGrid};

/// `(8/π²) Σ_{n≥N} (2n+1)⁻²`.
pub fn tail_mass(n_trunc: usize) -> f64 {
    let head: f64 = (0..n_trunc)
        .rev()
        .map(|n| {
            let k = (2 * n + 1) as f64;
            1.0 / (k * k)
        })
        .sum();
    (1.0 - 8.0 / (PI * PI) * head).max(0.0)
}

fn l2(values: &[f64], dt: f64) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    trapezoid(&sq, dt).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    /// `‖H‖_{L¹(0,T)}` by quadrature.
    pub rho: f64,
    /// Closed form `1 − h(T)`.
    pub one_minus_h: f64,
}

/// `ρ = ‖H‖_{L¹(0,T)}`: `1 − h(ε)` on `[0, ε]` plus Gauss–Legendre quadrature of
/// `|H|` on log-spaced panels over `[ε, T]`, with `ε = 37/λ_N`.
pub fn contraction_rho(cfg: &KernelConfig) -> Result<Contraction> {
    if !(cfg.t_end > 0.0) {
        return Err(Error::Domain(format!("T = {} must be positive", cfg.t_end)));
    }
    cfg.validate()?;
    let t = cfg.t_end;
    let one_minus_h = 1.0 - kernel_h(t, cfg)?.value;
    let eps = 37.0 / cfg.lambda(cfg.n_trunc);
    let rho = if eps >= t {
        one_minus_h
    } else {
        let near = 1.0 - kernel_h(eps, cfg)?.value;
        let panels = 64;
        let ratio = (t / eps).ln();
        let lambdas = cfg.lambdas();
        let mut integral = 0.0;
        for p in 0..panels {
            let a = eps * (ratio * p as f64 / panels as f64).exp();
            let b = if p + 1 == panels {
                t
            } else {
                eps * (ratio * (p + 1) as f64 / panels as f64).exp()
            };
            let rule = gauss_legendre(16, a, b);
            integral += rule.integrate(|s| {
                8.0 * cfg.nu * lambdas.iter().rev().map(|l| (-l * s).exp()).sum::<f64>()
            });
        }
        near + integral
    };
    if !(rho < 1.0) || rho > one_minus_h + 1e-8 {
        return Err(Error::Numerical(format!(
            "contraction factor {rho} inconsistent with 1 − h(T) = {one_minus_h}"
        )));
    }
    Ok(Contraction { rho, one_minus_h })
}

fn check_grid(len: usize, grid: &TimeGrid, cfg: &KernelConfig) -> Result<()> {
    if len != grid.len() {
        return config(format!(
            "path has {len} samples but the grid has {}",
            grid.len()
        ));
    }
    if (cfg.t_end - grid.t_end).abs() > 1e-12 * grid.t_end {
        return config(format!(
            "kernel horizon {} differs from grid horizon {}",
            cfg.t_end, grid.t_end
        ));
    }
    Ok(())
}

/// `[𝒦ψ](t_k) = −∫₀^{t_k} H(t_k − s) ψ(s) ds`.
pub fn apply_k(psi: &[f64], grid: &TimeGrid, cfg: &KernelConfig) -> Result<Vec<f64>> {
    check_grid(psi.len(), grid, cfg)?;
    Ok(apply_k_unchecked(psi, grid, cfg, tail_mass(cfg.n_trunc)))
}

fn apply_k_unchecked(psi: &[f64], grid: &TimeGrid, cfg: &KernelConfig, tau: f64) -> Vec<f64> {
    let len = psi.len();
    let modes = modal_convolution(&cfg.lambdas(), psi, grid.dt);
    let mut out = vec![0.0; len];
    for n in 0..cfg.n_trunc {
        for (o, a) in out.iter_mut().zip(&modes[n * len..(n + 1) * len]) {
            *o += a;
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o *= 8.0 * cfg.nu;
        if k > 0 {
            *o += tau * psi[k];
        }
    }
    out
}

/// Flux `F = h∗f` and its derivative, consistent with the truncated operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardFlux {
    pub flux: Vec<f64>,
    pub dfdt: Vec<f64>,
}

pub fn forward_flux(f: &ForcingSignal, cfg: &KernelConfig) -> Result<ForwardFlux> {
    check_grid(f.values.len(), &f.grid, cfg)?;
    let len = f.values.len();
    let lambdas = cfg.lambdas();
    let modes = modal_convolution(&lambdas, &f.values, f.grid.dt);
    let mut flux = vec![0.0; len];
    let mut dfdt = vec![0.0; len];
    for n in (0..cfg.n_trunc).rev() {
        let k = (2 * n + 1) as f64;
        let c = 8.0 / (PI * PI * k * k);
        let row = &modes[n * len..(n + 1) * len];
        for j in 0..len {
            flux[j] += c * row[j];
            dfdt[j] += c * (f.values[j] - lambdas[n] * row[j]);
        }
    }
    dfdt[0] += tail_mass(cfg.n_trunc) * f.values[0];
    Ok(ForwardFlux { flux, dfdt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraResult {
    pub f: ForcingSignal,
    pub iterations: usize,
    pub rho: f64,
    /// `sup_k |f − 𝒦f − ∂ₜF|` of the returned iterate.
    pub residual: f64,
    /// `‖f_n − f_{n−1}‖_{L²}` per iteration.
    pub gaps: Vec<f64>,
    pub dfdt: Vec<f64>,
}

pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Picard iteration `f_n = ∂ₜF + 𝒦f_{n−1}` from `f_0 = ∂ₜF`.
///
/// Stops once the gap certifies an `L²` error below `tol` (`gap ≤ tol(1−ρ)/ρ`) or
/// the gap reaches the roundoff floor, and the sup residual is below `tol`.
pub fn solve_volterra(
    dfdt: &[f64],
    grid: &TimeGrid,
    cfg: &KernelConfig,
    tol: f64,
) -> Result<VolterraResult> {
    solve_volterra_with_limit(dfdt, grid, cfg, tol, DEFAULT_MAX_ITER)
}

pub fn solve_volterra_with_limit(
    dfdt: &[f64],
    grid: &TimeGrid,
    cfg: &KernelConfig,
    tol: f64,
    max_iter: usize,
) -> Result<VolterraResult> {
    if !(tol > 0.0) {
        return config(format!("tolerance must be positive, got {tol}"));
    }
    check_grid(dfdt.len(), grid, cfg)?;
    if let Some(k) = dfdt.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite flux derivative at index {k}")));
    }
    let rho = contraction_rho(cfg)?.rho;
    let tau = tail_mass(cfg.n_trunc);
    let certificate = tol * (1.0 - rho) / rho.max(f64::MIN_POSITIVE);
    let mut f = dfdt.to_vec();
    let mut gaps = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let kf = apply_k_unchecked(&f, grid, cfg, tau);
        let next: Vec<f64> = dfdt.iter().zip(&kf).map(|(g, k)| g + k).collect();
        let diff: Vec<f64> = next.iter().zip(&f).map(|(a, b)| a - b).collect();
        let gap = l2(&diff, grid.dt);
        let sup = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let floor = 64.0 * f64::EPSILON * l2(&next, grid.dt).max(f64::MIN_POSITIVE);
        gaps.push(gap);
        f = next;
        if (gap <= certificate || gap <= floor) && sup <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence { iterations, gap });
        }
    }
    let kf = apply_k_unchecked(&f, grid, cfg, tau);
    let residual = f
        .iter()
        .zip(&kf)
        .zip(dfdt)
        .map(|((f, k), g)| (f - k - g).abs())
        .fold(0.0, f64::max);
    if residual > tol {
        return Err(Error::Convergence {
            iterations,
            gap: residual,
        });
    }
    Ok(VolterraResult {
        f: ForcingSignal::new(*grid, f, 0.25)?,
        iterations,
        rho,
        residual,
        gaps,
        dfdt: dfdt.to_vec(),
    })
}

impl VolterraResult {
    /// CSV `(t, dFdt, f, residual)` with the pointwise residual of the fixed point.
    pub fn write_csv<W: Write>(&self, mut out: W, cfg: &KernelConfig) -> Result<()> {
        let grid = self.f.grid;
        let kf = apply_k(&self.f.values, &grid, cfg)?;
        writeln!(out, "t,dFdt,f,residual")?;
        for k in 0..grid.len() {
            let r = self.f.values[k] - kf[k] - self.dfdt[k];
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                grid.t(k),
                self.dfdt[k],
                self.f.values[k],
                r
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(t: f64) -> (TimeGrid, KernelConfig) {
        (
            TimeGrid::new(t, 1e-3).unwrap(),
            KernelConfig::new(1.0, 64, t).unwrap(),
        )
    }

    #[test]
    fn rho_matches_closed_form() {
        let (_, cfg) = setup(1.0);
        let c = contraction_rho(&cfg).unwrap();
        assert!((c.rho - c.one_minus_h).abs() <= 1e-8);
        assert!(c.rho < 1.0);
    }

    #[test]
    fn rho_shrinks_with_horizon() {
        let mut last = f64::INFINITY;
        for t in [1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-6] {
            let r = contraction_rho(&KernelConfig::new(1.0, 64, t).unwrap()).unwrap().rho;
            assert!(r < last);
            last = r;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn k_of_zero_and_one() {
        let (grid, cfg) = setup(1.0);
        let zero = apply_k(&vec![0.0; grid.len()], &grid, &cfg).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let one = apply_k(&vec![1.0; grid.len()], &grid, &cfg).unwrap();
        for k in (0..grid.len()).step_by(37) {
            let expect = 1.0 - kernel_h(grid.t(k), &cfg).unwrap().value;
            assert!((one[k] - expect).abs() < 1e-10, "k={k}");
        }
        assert!(apply_k(&[1.0; 3], &grid, &cfg).is_err());
    }

    #[test]
    fn zero_flux_derivative() {
        let (grid, cfg) = setup(1.0);
        let r = solve_volterra(&vec![0.0; grid.len()], &grid, &cfg, 1e-10).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.f.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn steady_flux_limit() {
        let grid = TimeGrid::new(2.0, 1e-3).unwrap();
        let cfg = KernelConfig::new(1.0, 64, 2.0).unwrap();
        let f = ForcingSignal::from_fn(grid, |_| 1.0).unwrap();
        let fw = forward_flux(&f, &cfg).unwrap();
        assert_eq!(fw.flux[0], 0.0);
        assert!((fw.flux[grid.n_steps] - 1.0 / 12.0).abs() < 1e-6);
    }

    #[test]
    fn bad_tolerance() {
        let (grid, cfg) = setup(1.0);
        assert!(solve_volterra(&vec![0.0; grid.len()], &grid, &cfg, 0.0).is_err());
    }
}
