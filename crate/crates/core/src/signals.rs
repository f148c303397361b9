//! Stochastic inputs: time grids, flux paths, forcing paths, Brownian increments
//! and the additive noise model.
//!
//! Randomness comes from ChaCha8 streams. Every stream is keyed by
//! `(seed, tag, index)` through a SplitMix64 hash, so path `j` of an ensemble can
//! be regenerated without touching paths `0..j`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// Stream tags keep flux, noise and sampling randomness independent for one seed.
pub mod stream {
    pub const FLUX: u64 = 0x01;
    pub const NOISE: u64 = 0x02;
    pub const SAMPLING: u64 = 0x03;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 64-bit key for stream `index` under `tag` of a master seed.
pub fn stream_key(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

/// Independent generator for stream `index` under `tag`.
pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, tag, index))
}

/// Uniform grid `t_k = k·dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return config(format!("time step must be positive and finite, got {dt}"));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return config(format!("horizon must be positive and finite, got {t_end}"));
        }
        let steps = (t_end / dt).round();
        if !(1.0..=1e9).contains(&steps) {
            return config(format!("T/dt = {} is not a usable step count", t_end / dt));
        }
        let n_steps = steps as usize;
        if (n_steps as f64 * dt - t_end).abs() > 1e-9 * t_end {
            return config(format!("T = {t_end} is not an integer multiple of dt = {dt}"));
        }
        Ok(Self { t_end, dt, n_steps })
    }

    /// Number of grid points (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t(k)).collect()
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return config("refinement factor must be positive");
        }
        Ok(Self {
            t_end: self.t_end,
            dt: self.t_end / (self.n_steps * factor) as f64,
            n_steps: self.n_steps * factor,
        })
    }
}

/// Brownian increments, one row per step, one column per noise mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    pub dt: f64,
    pub n_steps: usize,
    pub n_modes: usize,
    data: Vec<f64>,
}

impl BrownianIncrements {
    pub fn zeros(grid: &TimeGrid, n_modes: usize) -> Self {
        Self {
            dt: grid.dt,
            n_steps: grid.n_steps,
            n_modes,
            data: vec![0.0; grid.n_steps * n_modes],
        }
    }

    /// Increments of step `j` (from `t_j` to `t_{j+1}`).
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_modes..(j + 1) * self.n_modes]
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.n_modes + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_steps).map(|j| self.get(j, k)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sums blocks of `factor` consecutive steps: the same Brownian path on a grid
    /// with `factor` times the step.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return config(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.n_steps
            ));
        }
        let n_steps = self.n_steps / factor;
        let mut data = vec![0.0; n_steps * self.n_modes];
        for j in 0..n_steps {
            for r in 0..factor {
                let src = self.row(j * factor + r);
                for (d, s) in data[j * self.n_modes..(j + 1) * self.n_modes]
                    .iter_mut()
                    .zip(src)
                {
                    *d += s;
                }
            }
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            n_steps,
            n_modes: self.n_modes,
            data,
        })
    }
}

/// Increments for noise stream `path` of `seed`.
pub fn gen_brownian_path(
    seed: u64,
    path: u64,
    grid: &TimeGrid,
    n_modes: usize,
) -> Result<BrownianIncrements> {
    if !(grid.dt > 0.0) {
        return config("brownian increments need dt > 0");
    }
    if n_modes == 0 {
        return config("brownian increments need at least one mode");
    }
    let mut rng = stream_rng(seed, stream::NOISE, path);
    let scale = grid.dt.sqrt();
    let data = (0..grid.n_steps * n_modes)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    Ok(BrownianIncrements {
        dt: grid.dt,
        n_steps: grid.n_steps,
        n_modes,
        data,
    })
}

/// Increments for the first noise stream of `seed`.
pub fn gen_brownian_increments(
    seed: u64,
    grid: &TimeGrid,
    n_modes: usize,
) -> Result<BrownianIncrements> {
    gen_brownian_path(seed, 0, grid, n_modes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluxKind {
    /// `F(t) = slope·t`.
    Ramp { slope: f64 },
    /// `F(t) = amplitude·sin(omega·t)`.
    Sinusoid { amplitude: f64, omega: f64 },
    /// `sigma`-scaled Brownian path convolved with a triweight bump of half-width `width`.
    SmoothedBrownian { sigma: f64, width: f64 },
}

impl FluxKind {
    pub fn name(&self) -> &'static str {
        match self {
            FluxKind::Ramp { .. } => "ramp",
            FluxKind::Sinusoid { .. } => "sinusoid",
            FluxKind::SmoothedBrownian { .. } => "smoothed_brownian",
        }
    }
}

/// Sampled flux `F(t)` and its derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSignal {
    pub grid: TimeGrid,
    pub flux: Vec<f64>,
    pub dfdt: Vec<f64>,
    pub seed: u64,
    pub kind: FluxKind,
}

pub fn gen_flux(kind: FluxKind, grid: &TimeGrid, seed: u64) -> Result<FluxSignal> {
    let times = grid.times();
    let (flux, dfdt) = match kind {
        FluxKind::Ramp { slope } => {
            if !slope.is_finite() {
                return config("ramp slope must be finite");
            }
            (
                times.iter().map(|t| slope * t).collect(),
                vec![slope; times.len()],
            )
        }
        FluxKind::Sinusoid { amplitude, omega } => {
            if !(amplitude.is_finite() && omega.is_finite()) {
                return config("sinusoid amplitude and frequency must be finite");
            }
            (
                times.iter().map(|t| amplitude * (omega * t).sin()).collect(),
                times
                    .iter()
                    .map(|t| amplitude * omega * (omega * t).cos())
                    .collect(),
            )
        }
        FluxKind::SmoothedBrownian { sigma, width } => {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return config("smoothed_brownian sigma must be finite and non-negative");
            }
            if !(width >= 2.0 * grid.dt) {
                return config(format!(
                    "smoothing width {width} is below 2·dt = {}: derivative not resolvable",
                    2.0 * grid.dt
                ));
            }
            let flux = smoothed_brownian(sigma, width, grid, seed);
            let dfdt = differentiate(&flux, grid.dt);
            (flux, dfdt)
        }
    };
    Ok(FluxSignal {
        grid: *grid,
        flux,
        dfdt,
        seed,
        kind,
    })
}

fn smoothed_brownian(sigma: f64, width: f64, grid: &TimeGrid, seed: u64) -> Vec<f64> {
    let m = (width / grid.dt).ceil() as usize;
    let n_ext = grid.len() + 2 * m;
    let mut rng = stream_rng(seed, stream::FLUX, 0);
    let scale = sigma * grid.dt.sqrt();
    let mut path = Vec::with_capacity(n_ext);
    let mut b = 0.0;
    path.push(b);
    for _ in 1..n_ext {
        let z: f64 = StandardNormal.sample(&mut rng);
        b += scale * z;
        path.push(b);
    }
    let kernel: Vec<f64> = (0..=2 * m)
        .map(|i| {
            let s = (i as f64 - m as f64) * grid.dt / width;
            let v = 1.0 - s * s;
            if v > 0.0 {
                v * v * v
            } else {
                0.0
            }
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let smooth: Vec<f64> = (0..grid.len())
        .map(|k| {
            kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * path[k + 2 * m - i])
                .sum::<f64>()
                / norm
        })
        .collect();
    let s0 = smooth[0];
    smooth.into_iter().map(|v| v - s0).collect()
}

/// Centered differences inside, second-order one-sided differences at the ends.
pub fn differentiate(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => vec![(values[1] - values[0]) / dt; 2],
        _ => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt);
            for k in 1..n - 1 {
                d[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);
            }
            d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt);
            d
        }
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

impl FluxSignal {
    /// Trapezoid estimate of `∫₀ᵀ |∂ₜF|² dt`.
    pub fn moment_statistic(&self) -> f64 {
        let sq: Vec<f64> = self.dfdt.iter().map(|d| d * d).collect();
        trapezoid(&sq, self.grid.dt)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,F,dFdt")?;
        for k in 0..self.grid.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.grid.t(k),
                self.flux[k],
                self.dfdt[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub pass: bool,
    /// Ensemble mean of the per-path statistics.
    pub statistic: f64,
    pub per_path: Vec<f64>,
    pub bound: f64,
}

/// Compares the (ensemble-mean) trapezoid moment `∫|∂ₜF|²` with `c1`.
pub fn check_moment_bound(paths: &[FluxSignal], c1: f64) -> MomentCheck {
    let per_path: Vec<f64> = paths.iter().map(FluxSignal::moment_statistic).collect();
    let statistic = if per_path.is_empty() {
        0.0
    } else {
        per_path.iter().sum::<f64>() / per_path.len() as f64
    };
    MomentCheck {
        pass: statistic.is_finite() && statistic <= c1,
        statistic,
        per_path,
        bound: c1,
    }
}

/// Sampled forcing `f(t)` with its discrete Hölder constant for exponent `holder_gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSignal {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub holder_gamma: f64,
    pub holder_l: f64,
}

impl ForcingSignal {
    pub fn new(grid: TimeGrid, values: Vec<f64>, holder_gamma: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return config(format!(
                "forcing has {} samples, grid has {}",
                values.len(),
                grid.len()
            ));
        }
        if !(holder_gamma > 0.0 && holder_gamma < 0.5) {
            return config(format!("Hölder exponent {holder_gamma} outside (0, 1/2)"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite forcing sample at index {k}")));
        }
        let holder_l = holder_quotient(&grid, &values, holder_gamma);
        Ok(Self {
            grid,
            values,
            holder_gamma,
            holder_l,
        })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.times().into_iter().map(f).collect();
        Self::new(grid, values, 0.25)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            holder_gamma: 0.25,
            holder_l: 0.0,
        }
    }

    /// True when every grid pair satisfies the stored Hölder bound.
    pub fn holder_check(&self) -> bool {
        holder_quotient(&self.grid, &self.values, self.holder_gamma) <= self.holder_l * (1.0 + 1e-12)
    }

    /// Squared `L²(0,T)` norm by the trapezoid rule.
    pub fn l2_norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        trapezoid(&sq, self.grid.dt)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,f")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.grid.t(k), v)?;
        }
        Ok(())
    }
}

fn holder_quotient(grid: &TimeGrid, values: &[f64], gamma: f64) -> f64 {
    let n = values.len();
    let pow: Vec<f64> = (0..n).map(|d| (d as f64 * grid.dt).powf(gamma)).collect();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let q = (values[j] - values[i]).abs() / pow[j - i];
            best = best.max(q);
        }
    }
    best
}

/// Additive noise `g dW = Σ σ_k ĝ_k dW_k` on the first `K` basis modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: Vec<f64>,
}

impl NoiseModel {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return config("noise amplitudes must be finite and non-negative");
        }
        Ok(Self { sigma })
    }

    /// `σ_k = σ₀·k^{-3/2}` for `k = 1..=n_modes`.
    pub fn decaying(sigma0: f64, n_modes: usize) -> Result<Self> {
        Self::new((1..=n_modes).map(|k| sigma0 * (k as f64).powf(-1.5)).collect())
    }

    pub fn none() -> Self {
        Self { sigma: Vec::new() }
    }

    pub fn n_modes(&self) -> usize {
        self.sigma.len()
    }

    /// `Tr(g*g) = Σ σ_k²`.
    pub fn trace(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }

    /// Same profile scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.sigma.iter().map(|s| s * factor).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_steps() {
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(1.0, -1e-3).is_err());
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        let g = TimeGrid::new(1.0, 1e-3).unwrap();
        assert_eq!(g.n_steps, 1000);
        assert_eq!(g.t(1000), 1.0);
    }

    #[test]
    fn increments_zero_mean_and_variance() {
        let grid = TimeGrid::new(100.0, 1e-3).unwrap();
        let dw = gen_brownian_increments(0, &grid, 1).unwrap();
        let n = dw.n_steps as f64;
        let mean = dw.as_slice().iter().sum::<f64>() / n;
        let var = dw.as_slice().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let sd_mean = (grid.dt / n).sqrt();
        assert!(mean.abs() < 4.0 * sd_mean, "mean {mean}");
        assert!((var / grid.dt - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn increments_deterministic_and_seed_sensitive() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let a = gen_brownian_increments(0, &grid, 3).unwrap();
        let b = gen_brownian_increments(0, &grid, 3).unwrap();
        let c = gen_brownian_increments(1, &grid, 3).unwrap();
        assert_eq!(a, b);
        let differ = a
            .as_slice()
            .iter()
            .zip(c.as_slice())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differ as f64 >= 0.99 * a.as_slice().len() as f64);
    }

    #[test]
    fn coarsen_sums_blocks() {
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let dw = gen_brownian_increments(3, &grid, 2).unwrap();
        let c = dw.coarsen(2).unwrap();
        assert_eq!(c.n_steps, 2);
        assert_eq!(c.get(1, 1), dw.get(2, 1) + dw.get(3, 1));
        assert!(dw.coarsen(3).is_err());
    }

    #[test]
    fn ramp_flux() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let f = gen_flux(FluxKind::Ramp { slope: 2.0 }, &grid, 0).unwrap();
        assert_eq!(f.flux[0], 0.0);
        assert!((f.flux[1000] - 2.0).abs() < 1e-15);
        assert!((f.moment_statistic() - 4.0).abs() < 1e-12);
        let unit = gen_flux(FluxKind::Ramp { slope: 1.0 }, &grid, 0).unwrap();
        assert_eq!(unit.moment_statistic(), 1.0);
    }

    #[test]
    fn sinusoid_moment() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let f = gen_flux(
            FluxKind::Sinusoid {
                amplitude: 1.0,
                omega: two_pi,
            },
            &grid,
            0,
        )
        .unwrap();
        assert_eq!(f.flux[0], 0.0);
        let exact = 2.0 * std::f64::consts::PI.powi(2);
        assert!((f.moment_statistic() - exact).abs() < 1e-6);
    }

    #[test]
    fn smoothed_brownian_checks() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let bad = gen_flux(
            FluxKind::SmoothedBrownian {
                sigma: 1.0,
                width: 1e-4,
            },
            &grid,
            7,
        );
        assert!(matches!(bad, Err(Error::Config(_))));
        let f = gen_flux(
            FluxKind::SmoothedBrownian {
                sigma: 1.0,
                width: 0.02,
            },
            &grid,
            7,
        )
        .unwrap();
        assert_eq!(f.flux[0], 0.0);
        // Independent recomputation, panel by panel.
        let mut panels = 0.0;
        for k in 0..grid.n_steps {
            panels += 0.5 * grid.dt * (f.dfdt[k].powi(2) + f.dfdt[k + 1].powi(2));
        }
        let s = f.moment_statistic();
        assert!(s.is_finite());
        assert!((s - panels).abs() <= 1e-12 * s.max(1.0));
        let again = gen_flux(f.kind, &grid, 7).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn moment_ensemble_mean() {
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let paths: Vec<_> = (0..64)
            .map(|s| {
                gen_flux(
                    FluxKind::SmoothedBrownian {
                        sigma: 1.0,
                        width: 0.05,
                    },
                    &grid,
                    s,
                )
                .unwrap()
            })
            .collect();
        let check = check_moment_bound(&paths, f64::INFINITY);
        assert!(check.statistic.is_finite() && check.statistic > 0.0);
        assert_eq!(check.per_path.len(), 64);
    }

    #[test]
    fn forcing_holder_self_check() {
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let f = ForcingSignal::from_fn(grid, |t| (5.0 * t).sin() + t.sqrt()).unwrap();
        assert!(f.holder_check());
        assert!(f.holder_l > 0.0);
        assert!(ForcingSignal::new(grid, vec![0.0; 3], 0.25).is_err());
        assert!(ForcingSignal::new(grid, vec![0.0; grid.len()], 0.5).is_err());
    }

    #[test]
    fn noise_trace() {
        let n = NoiseModel::decaying(2.0, 3).unwrap();
        let expect = 4.0 * (1.0 + 2f64.powi(-3) + 3f64.powi(-3));
        assert!((n.trace() - expect).abs() < 1e-14);
        assert!(NoiseModel::new(vec![-1.0]).is_err());
    }

    #[test]
    fn flux_csv_header_and_precision() {
        let grid = TimeGrid::new(1.0, 0.5).unwrap();
        let f = gen_flux(FluxKind::Ramp { slope: 1.0 / 3.0 }, &grid, 0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,F,dFdt"));
        let row: Vec<f64> = lines
            .nth(2)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(row[1], 1.0 / 3.0);
    }
}
