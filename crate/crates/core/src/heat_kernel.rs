//! Series kernels of the outlet heat problem and its solution.
//!
//! With `λ_n = ν(2n+1)²π²`:
//!
//! * `K(y,t) = (4/π) Σ (2n+1)⁻¹ e^{−λ_n t} sin((2n+1)πy)`
//! * `h(t)   = (8/π²) Σ (2n+1)⁻² e^{−λ_n t}`, with `H = h′ = −8ν Σ e^{−λ_n t}`
//! * `w₁(y,t) = (4/π) Σ a_n(t)/(2n+1) sin((2n+1)πy)`, `a_n(t) = ∫₀ᵗ f(s) e^{−λ_n(t−s)} ds`
//!
//! The modal integrals `a_n` are advanced by an exact exponential recursion for
//! the piecewise-linear interpolant of `f`, which is stable for stiff modes and
//! second-order accurate in `dt`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::signals::{ForcingSignal, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub nu: f64,
    pub n_trunc: usize,
    pub t_end: f64,
}

impl KernelConfig {
    pub fn new(nu: f64, n_trunc: usize, t_end: f64) -> Result<Self> {
        let cfg = Self { nu, n_trunc, t_end };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return config(format!("viscosity must be positive, got {}", self.nu));
        }
        if self.n_trunc == 0 {
            return config("series truncation must keep at least one mode");
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return config(format!("horizon must be positive, got {}", self.t_end));
        }
        Ok(())
    }

    /// Decay rate `λ_n = ν(2n+1)²π²` of mode `n`.
    pub fn lambda(&self, n: usize) -> f64 {
        let k = (2 * n + 1) as f64;
        self.nu * k * k * PI * PI
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.n_trunc).map(|n| self.lambda(n)).collect()
    }
}

/// A truncated series value and a bound on the dropped tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Σ_{n≥N} e^{−λ_n t}` is bounded by its first term over `1 − q`, `q = e^{−8νπ²(N+1)t}`.
fn geometric_factor(cfg: &KernelConfig, t: f64) -> f64 {
    let q = (-8.0 * cfg.nu * PI * PI * (cfg.n_trunc + 1) as f64 * t).exp();
    (-cfg.lambda(cfg.n_trunc) * t).exp() / (1.0 - q)
}

pub fn kernel_k(y: f64, t: f64, cfg: &KernelConfig) -> Result<SeriesValue> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside [0, 1]")));
    }
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("kernel K undefined for t = {t} < 0")));
    }
    if y == 0.0 || y == 1.0 {
        return Ok(SeriesValue {
            value: 0.0,
            tail_bound: 0.0,
        });
    }
    if t == 0.0 {
        return Ok(SeriesValue {
            value: 1.0,
            tail_bound: 0.0,
        });
    }
    let mut s = 0.0;
    for n in 0..cfg.n_trunc {
        let k = (2 * n + 1) as f64;
        s += (-cfg.lambda(n) * t).exp() * (k * PI * y).sin() / k;
    }
    let tail = 4.0 / PI / (2 * cfg.n_trunc + 1) as f64 * geometric_factor(cfg, t);
    Ok(SeriesValue {
        value: 4.0 / PI * s,
        tail_bound: tail,
    })
}

/// Midpoint-rule estimate (with first correction) of `Σ_{n≥N} (2n+1)⁻² e^{−a(2n+1)²}`, `a = νπ²t`.
fn h_tail_estimate(cfg: &KernelConfig, t: f64) -> f64 {
    let u = 2.0 * cfg.n_trunc as f64;
    let a = cfg.nu * PI * PI * t;
    let e = (-a * u * u).exp();
    // Euler–Maclaurin correction of the midpoint rule: g′(N − 1/2)/24.
    let correction = -e * (4.0 / u.powi(3) + 4.0 * a / u) / 24.0;
    if a == 0.0 {
        return 0.5 / u + correction;
    }
    0.5 * (e / u - (PI * a).sqrt() * libm::erfc(a.sqrt() * u)) + correction
}

/// Flux kernel `h(t)`: the partial sum to `N − 1` plus a closed-form estimate of the
/// remaining tail. The bound covers the whole tail, not the estimate's error.
pub fn kernel_h(t: f64, cfg: &KernelConfig) -> Result<SeriesValue> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("kernel h undefined for t = {t} < 0")));
    }
    // Sum small terms first.
    let mut s = 0.0;
    for n in (0..cfg.n_trunc).rev() {
        let k = (2 * n + 1) as f64;
        s += (-cfg.lambda(n) * t).exp() / (k * k);
    }
    s += h_tail_estimate(cfg, t);
    let coarse = 1.0 / (4.0 * cfg.n_trunc as f64);
    let tail = if t > 0.0 {
        coarse.min(geometric_factor(cfg, t) / ((2 * cfg.n_trunc + 1) as f64).powi(2))
    } else {
        coarse
    };
    Ok(SeriesValue {
        value: 8.0 / (PI * PI) * s,
        tail_bound: 8.0 / (PI * PI) * tail,
    })
}

/// `H(t) = h′(t) = −8ν Σ e^{−λ_n t}`; the series diverges at `t = 0`.
pub fn kernel_hdot(t: f64, cfg: &KernelConfig) -> Result<SeriesValue> {
    if t <= 0.0 || t.is_nan() {
        return Err(Error::Domain(format!(
            "H(t) is singular at t = 0 and undefined for t < 0 (got t = {t})"
        )));
    }
    let mut s = 0.0;
    for n in (0..cfg.n_trunc).rev() {
        s += (-cfg.lambda(n) * t).exp();
    }
    Ok(SeriesValue {
        value: -8.0 * cfg.nu * s,
        tail_bound: 8.0 * cfg.nu * geometric_factor(cfg, t),
    })
}

/// Bound on `|a_n|`-tail of the solution as `‖f‖/(π√(2ν)) · Σ_{n≥N}(2n+1)⁻²`,
/// using `Σ_{n≥N}(2n+1)⁻² ≤ 1/(4N)`. The tail of `w₁` itself is `4/π` times this.
pub fn truncation_bound(cfg: &KernelConfig, f_l2_norm: f64) -> f64 {
    f_l2_norm / (PI * (2.0 * cfg.nu).sqrt()) / (4.0 * cfg.n_trunc as f64)
}

/// Weights of the exact one-step integral `∫₀^dt e^{−λ(dt−s)} g(s) ds` for linear `g`:
/// `decay·a + left·g(0) + right·g(dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ExpStep {
    pub decay: f64,
    pub left: f64,
    pub right: f64,
}

impl ExpStep {
    pub fn new(lambda: f64, dt: f64) -> Self {
        let x = lambda * dt;
        // phi1 = (1 − e^{−x})/x, phi2 = (x − 1 + e^{−x})/x².
        let (phi1, phi2) = if x < 0.1 {
            let mut p1 = 0.0;
            let mut p2 = 0.0;
            let mut term = 1.0; // (−x)^j / j!
            for j in 0..16 {
                p1 += term / (j + 1) as f64;
                p2 += term / ((j + 1) * (j + 2)) as f64;
                term *= -x / (j + 1) as f64;
            }
            (p1, p2)
        } else {
            let em = (-x).exp_m1();
            (-em / x, (x + em) / (x * x))
        };
        Self {
            decay: (-x).exp(),
            left: dt * (phi1 - phi2),
            right: dt * phi2,
        }
    }

    #[inline]
    pub fn advance(&self, a: f64, g0: f64, g1: f64) -> f64 {
        self.decay * a + self.left * g0 + self.right * g1
    }
}

/// Modal integrals `a_n(t_k)` for every mode, stored mode-major (`n * len + k`).
pub(crate) fn modal_convolution(lambdas: &[f64], values: &[f64], dt: f64) -> Vec<f64> {
    let len = values.len();
    let mut out = vec![0.0; lambdas.len() * len];
    for (n, &lam) in lambdas.iter().enumerate() {
        let step = ExpStep::new(lam, dt);
        let row = &mut out[n * len..(n + 1) * len];
        for k in 1..len {
            row[k] = step.advance(row[k - 1], values[k - 1], values[k]);
        }
    }
    out
}

/// Point values of the outlet profile and its derivatives at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfilePoint {
    /// Stream function `∫₀^y w₁`.
    pub psi: f64,
    pub w1: f64,
    pub w1_y: f64,
    pub w1_yy: f64,
    pub w1_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatResidual {
    /// `f(t)(S_N(y) − 1)`: the part caused by truncating the sine series of `1`.
    pub truncation_max: f64,
    /// Centered time difference of `w₁` against the modal derivative.
    pub quadrature_max: f64,
    /// `max |D_t w₁ − ν w₁_yy − f|` over interior points and interior times.
    pub total_max: f64,
}

/// Outlet profile `w₁(y,t)` on a `y`-grid over the forcing's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSolution {
    pub config: KernelConfig,
    pub y_grid: Vec<f64>,
    pub t_grid: TimeGrid,
    pub forcing: ForcingSignal,
    /// `w₁`, `∂ₜw₁`, `∂²_y w₁` stored time-major (`k * ny + j`).
    pub w1: Vec<f64>,
    pub w1_t: Vec<f64>,
    pub w1_yy: Vec<f64>,
    /// Bound on the truncated tail of `w₁` (sup over `y` and `t`).
    pub tail_bound: f64,
    modes: Vec<f64>,
}

pub fn solve_heat(f: &ForcingSignal, y_grid: &[f64], cfg: &KernelConfig) -> Result<HeatSolution> {
    cfg.validate()?;
    if y_grid.is_empty() || f.values.is_empty() {
        return config("heat solve needs non-empty time and y grids");
    }
    if let Some(y) = y_grid.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::Domain(format!("y = {y} outside [0, 1]")));
    }
    let grid = f.grid;
    let nt = grid.len();
    let n = cfg.n_trunc;
    let modes = modal_convolution(&cfg.lambdas(), &f.values, grid.dt);
    let ny = y_grid.len();
    let mut w1 = vec![0.0; nt * ny];
    let mut w1_t = vec![0.0; nt * ny];
    let mut w1_yy = vec![0.0; nt * ny];
    // sin((2n+1)πy) table, mode-major.
    let sines: Vec<f64> = (0..n)
        .flat_map(|m| {
            let k = (2 * m + 1) as f64;
            y_grid.iter().map(move |y| (k * PI * y).sin())
        })
        .collect();
    for k in 0..nt {
        let (a, b, c) = (
            &mut w1[k * ny..(k + 1) * ny],
            &mut w1_t[k * ny..(k + 1) * ny],
            &mut w1_yy[k * ny..(k + 1) * ny],
        );
        for m in 0..n {
            let am = modes[m * nt + k];
            let km = (2 * m + 1) as f64;
            let s = &sines[m * ny..(m + 1) * ny];
            let cw = 4.0 / PI * am / km;
            let cyy = -4.0 * PI * km * am;
            for j in 0..ny {
                a[j] += cw * s[j];
                c[j] += cyy * s[j];
            }
        }
        for j in 0..ny {
            b[j] = cfg.nu * c[j] + f.values[k];
        }
    }
    let tail_bound = 4.0 / PI * truncation_bound(cfg, f.l2_norm_sq().sqrt());
    Ok(HeatSolution {
        config: *cfg,
        y_grid: y_grid.to_vec(),
        t_grid: grid,
        forcing: f.clone(),
        w1,
        w1_t,
        w1_yy,
        tail_bound,
        modes,
    })
}

impl HeatSolution {
    pub fn ny(&self) -> usize {
        self.y_grid.len()
    }

    /// `w₁(y_j, t_k)`.
    pub fn w1_at(&self, j: usize, k: usize) -> f64 {
        self.w1[k * self.ny() + j]
    }

    /// Modal integral `a_n(t_k)`.
    pub fn mode(&self, n: usize, k: usize) -> f64 {
        self.modes[n * self.t_grid.len() + k]
    }

    /// Profile and derivatives at an arbitrary `y` (extended oddly outside `[0,1]`).
    pub fn eval(&self, y: f64, k: usize) -> ProfilePoint {
        let mut p = ProfilePoint::default();
        let nt = self.t_grid.len();
        for m in 0..self.config.n_trunc {
            let a = self.modes[m * nt + k];
            if a == 0.0 {
                continue;
            }
            let km = (2 * m + 1) as f64;
            let (s, c) = (km * PI * y).sin_cos();
            p.psi += 4.0 / (PI * PI) * a / (km * km) * (1.0 - c);
            p.w1 += 4.0 / PI * a / km * s;
            p.w1_y += 4.0 * a * c;
            p.w1_yy += -4.0 * PI * km * a * s;
        }
        p.w1_t = self.config.nu * p.w1_yy + self.forcing.values[k];
        p
    }

    /// Flux `∫₀¹ w₁ dy = (8/π²) Σ a_n/(2n+1)²` at `t_k`.
    pub fn flux(&self, k: usize) -> f64 {
        let nt = self.t_grid.len();
        let mut s = 0.0;
        for m in (0..self.config.n_trunc).rev() {
            let km = (2 * m + 1) as f64;
            s += self.modes[m * nt + k] / (km * km);
        }
        8.0 / (PI * PI) * s
    }

    /// `sup_y |∂_y w₁(y,t_k)| = 4|Σ a_n|`, attained at the walls for the odd-mode sum
    /// only when all `a_n` share a sign, so the maximum is also scanned on a fine grid.
    pub fn max_slope(&self, k: usize) -> f64 {
        let wall = self.eval(0.0, k).w1_y.abs();
        let scan = (0..=400)
            .map(|i| self.eval(i as f64 / 800.0, k).w1_y.abs())
            .fold(0.0, f64::max);
        wall.max(scan)
    }

    /// Split PDE residual over interior `y` points and interior times.
    pub fn residual(&self) -> HeatResidual {
        let nt = self.t_grid.len();
        let ny = self.ny();
        let dt = self.t_grid.dt;
        let n = self.config.n_trunc;
        let partial: Vec<f64> = self
            .y_grid
            .iter()
            .map(|y| {
                4.0 / PI
                    * (0..n)
                        .map(|m| {
                            let km = (2 * m + 1) as f64;
                            (km * PI * y).sin() / km
                        })
                        .sum::<f64>()
            })
            .collect();
        let mut out = HeatResidual {
            truncation_max: 0.0,
            quadrature_max: 0.0,
            total_max: 0.0,
        };
        for k in 1..nt.saturating_sub(1) {
            let f = self.forcing.values[k];
            for j in 0..ny {
                let y = self.y_grid[j];
                if y <= 0.0 || y >= 1.0 {
                    continue;
                }
                let fd = (self.w1[(k + 1) * ny + j] - self.w1[(k - 1) * ny + j]) / (2.0 * dt);
                let total = fd - self.config.nu * self.w1_yy[k * ny + j] - f;
                let trunc = f * (partial[j] - 1.0);
                out.total_max = out.total_max.max(total.abs());
                out.truncation_max = out.truncation_max.max(trunc.abs());
                out.quadrature_max = out.quadrature_max.max((total - trunc).abs());
            }
        }
        out
    }

    /// Long-format CSV `(y, t, w1)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "y,t,w1")?;
        for k in 0..self.t_grid.len() {
            let t = self.t_grid.t(k);
            for (j, y) in self.y_grid.iter().enumerate() {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", y, t, self.w1_at(j, k))?;
            }
        }
        Ok(())
    }

    /// Little-endian `f64` triples `(y, t, w1)` in the same order as the CSV.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        for k in 0..self.t_grid.len() {
            let t = self.t_grid.t(k);
            for (j, y) in self.y_grid.iter().enumerate() {
                out.write_all(&y.to_le_bytes())?;
                out.write_all(&t.to_le_bytes())?;
                out.write_all(&self.w1_at(j, k).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// `n + 1` equispaced points on `[0, 1]`.
pub fn uniform_y_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|j| j as f64 / n as f64).collect()
}
