use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operators::OperatorSet;
use crate::basic_field::BasicField;
use crate::error::{config, Error, Result};
use crate::quadrature::composite_gauss_legendre;
use crate::signals::{gen_brownian_path, BrownianIncrements, NoiseModel, TimeGrid};

/// Projected residual forcing `(f_w, e_k)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FwSource {
    /// The straight channel: `f_w ≡ 0`.
    #[default]
    Zero,
    /// Coefficient vectors sampled every `dt`, held piecewise constant.
    Sampled { dt: f64, coeffs: Vec<DVector<f64>> },
}

impl FwSource {
    fn at(&self, t: f64) -> Option<&DVector<f64>> {
        match self {
            Self::Zero => None,
            Self::Sampled { dt, coeffs } => {
                let k = ((t / dt) + 1e-9).floor() as usize;
                coeffs.get(k.min(coeffs.len().saturating_sub(1)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub noise: NoiseModel,
    pub fw: FwSource,
    /// Discount rate `δ` of the weighted ledger columns.
    pub delta: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return config(format!("viscosity must be positive, got {}", self.nu));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return config(format!("discount rate must be non-negative, got {}", self.delta));
        }
        TimeGrid::new(self.t_end, self.dt).map(|_| ())
    }
}

/// Per-step energy bookkeeping of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub delta: f64,
    pub t: Vec<f64>,
    /// `|v|² = Σ a_j²`.
    pub l2: Vec<f64>,
    /// `‖v‖² = aᵀAa`.
    pub dirichlet: Vec<f64>,
    pub l2_disc: Vec<f64>,
    pub dirichlet_disc: Vec<f64>,
    /// Running `Σ 2σ_k ΔW_k a_k` (left-point).
    pub stochastic: Vec<f64>,
    /// Running `Tr(g*g)·t`.
    pub trace: Vec<f64>,
    /// `(F̃(v_j), v_j)` at the start of each step.
    pub drift_dot: Vec<f64>,
}

impl EnergyLedger {
    fn new(delta: f64, capacity: usize) -> Self {
        Self {
            delta,
            t: Vec::with_capacity(capacity),
            l2: Vec::with_capacity(capacity),
            dirichlet: Vec::with_capacity(capacity),
            l2_disc: Vec::with_capacity(capacity),
            dirichlet_disc: Vec::with_capacity(capacity),
            stochastic: Vec::with_capacity(capacity),
            trace: Vec::with_capacity(capacity),
            drift_dot: Vec::with_capacity(capacity),
        }
    }

    fn record(&mut self, t: f64, a: &DVector<f64>, ops: &OperatorSet) {
        let l2 = a.norm_squared();
        let d = ops.dirichlet(a);
        let w = (-self.delta * t).exp();
        self.t.push(t);
        self.l2.push(l2);
        self.dirichlet.push(d);
        self.l2_disc.push(l2 * w);
        self.dirichlet_disc.push(d * w);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// One simulated path with the noise that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub path: u64,
    pub dt: f64,
    pub states: Vec<DVector<f64>>,
    pub noise: BrownianIncrements,
    pub sigma: Vec<f64>,
    pub ledger: EnergyLedger,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Rows `path,t,l2,dirichlet`.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "path,t,l2,dirichlet")?;
        }
        let l = &self.ledger;
        for i in 0..l.len() {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                self.path, l.t[i], l.l2[i], l.dirichlet[i]
            )?;
        }
        Ok(())
    }

    /// Little-endian: `u64` step count plus one, `u64` mode count, then the
    /// coefficient vectors as `f64`, one after another.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        out.write_all(&(self.states.len() as u64).to_le_bytes())?;
        out.write_all(&(n as u64).to_le_bytes())?;
        for s in &self.states {
            for v in s.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Semi-implicit Euler–Maruyama integrator: implicit Stokes, explicit
/// convection, coupling, forcing and noise.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub ops: &'a OperatorSet,
    pub cfg: SimConfig,
    pub grid: TimeGrid,
    /// Shear-profile samples per step (0 for a frozen profile).
    stride: usize,
    factor: Cholesky<f64, Dyn>,
}

impl<'a> Simulator<'a> {
    pub fn new(ops: &'a OperatorSet, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = TimeGrid::new(cfg.t_end, cfg.dt)?;
        if cfg.noise.n_modes() > ops.n() {
            return config(format!(
                "{} noise modes exceed the {} basis modes",
                cfg.noise.n_modes(),
                ops.n()
            ));
        }
        if let FwSource::Sampled { coeffs, dt } = &cfg.fw {
            if !(*dt > 0.0) || coeffs.is_empty() || coeffs.iter().any(|c| c.len() != ops.n()) {
                return config("sampled forcing must hold one coefficient vector per sample");
            }
        }
        let stride = if ops.shear.n_times <= 1 {
            0
        } else {
            let m = (cfg.dt / ops.shear.dt).round();
            if m < 1.0 || (m * ops.shear.dt - cfg.dt).abs() > 1e-9 * cfg.dt {
                return config(format!(
                    "step {} is not a multiple of the shear sampling step {}",
                    cfg.dt, ops.shear.dt
                ));
            }
            let m = m as usize;
            if grid.n_steps * m > ops.shear.n_times - 1 {
                return config("simulation horizon exceeds the shear profile");
            }
            m
        };
        let n = ops.n();
        let m = DMatrix::identity(n, n) + &ops.a * (cfg.nu * cfg.dt);
        let factor = Cholesky::new(m)
            .ok_or_else(|| Error::Numerical("implicit Stokes matrix is not positive definite".into()))?;
        Ok(Self {
            ops,
            cfg,
            grid,
            stride,
            factor,
        })
    }

    pub fn shear_index(&self, j: usize) -> usize {
        j * self.stride
    }

    fn coupling_index(&self, j: usize) -> Option<usize> {
        (self.ops.shear.n_times > 1).then(|| self.shear_index(j))
    }

    /// `F̃(v) = −νAa − [B(a,a) + B₁(w)a + B₂(w)a] + (f_w, e)` at step `j`.
    pub fn drift(&self, a: &DVector<f64>, j: usize) -> DVector<f64> {
        let mut d = -(&self.ops.a * a) * self.cfg.nu - self.ops.convection(a, self.coupling_index(j));
        if let Some(fw) = self.cfg.fw.at(self.grid.t(j)) {
            d += fw;
        }
        d
    }

    /// One step from `t_j`; returns the new state and `(F̃(a), a)`.
    pub fn step_em(&self, a: &DVector<f64>, j: usize, dw: &[f64]) -> Result<(DVector<f64>, f64)> {
        let dt = self.cfg.dt;
        let conv = self.ops.convection(a, self.coupling_index(j));
        let stokes = &self.ops.a * a;
        let mut explicit = -conv;
        if let Some(fw) = self.cfg.fw.at(self.grid.t(j)) {
            explicit += fw;
        }
        let drift_dot = a.dot(&explicit) - self.cfg.nu * a.dot(&stokes);
        let mut rhs = a + explicit * dt;
        for (k, (s, w)) in self.cfg.noise.sigma.iter().zip(dw).enumerate() {
            rhs[k] += s * w;
        }
        let next = self.factor.solve(&rhs);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at step {}", j + 1)));
        }
        Ok((next, drift_dot))
    }

    pub fn noise_for(&self, seed: u64, path: u64) -> Result<BrownianIncrements> {
        if self.cfg.noise.n_modes() == 0 {
            Ok(BrownianIncrements::zeros(&self.grid, 0))
        } else {
            gen_brownian_path(seed, path, &self.grid, self.cfg.noise.n_modes())
        }
    }

    pub fn simulate(&self, seed: u64, path: u64, v0: Option<&DVector<f64>>) -> Result<Trajectory> {
        let noise = self.noise_for(seed, path)?;
        self.simulate_with_noise(seed, path, v0, noise)
    }

    pub fn simulate_with_noise(
        &self,
        seed: u64,
        path: u64,
        v0: Option<&DVector<f64>>,
        noise: BrownianIncrements,
    ) -> Result<Trajectory> {
        let n = self.ops.n();
        if noise.n_steps != self.grid.n_steps || noise.n_modes != self.cfg.noise.n_modes() {
            return Err(Error::Misuse(format!(
                "noise record has {}×{} increments, expected {}×{}",
                noise.n_steps,
                noise.n_modes,
                self.grid.n_steps,
                self.cfg.noise.n_modes()
            )));
        }
        let a0 = match v0 {
            Some(v) if v.len() != n => {
                return config(format!("initial state has {} entries, expected {n}", v.len()))
            }
            Some(v) => v.clone(),
            None => DVector::zeros(n),
        };
        let trace = self.cfg.noise.trace();
        let mut ledger = EnergyLedger::new(self.cfg.delta, self.grid.len());
        let mut states = Vec::with_capacity(self.grid.len());
        ledger.record(0.0, &a0, self.ops);
        ledger.stochastic.push(0.0);
        ledger.trace.push(0.0);
        states.push(a0);
        let mut stoch = 0.0;
        for j in 0..self.grid.n_steps {
            let dw = noise.row(j);
            let a = &states[j];
            let (next, drift_dot) = self.step_em(a, j, dw)?;
            stoch += 2.0
                * self
                    .cfg
                    .noise
                    .sigma
                    .iter()
                    .zip(dw)
                    .enumerate()
                    .map(|(k, (s, w))| s * w * a[k])
                    .sum::<f64>();
            let t = self.grid.t(j + 1);
            ledger.record(t, &next, self.ops);
            ledger.stochastic.push(stoch);
            ledger.trace.push(trace * t);
            ledger.drift_dot.push(drift_dot);
            states.push(next);
        }
        Ok(Trajectory {
            seed,
            path,
            dt: self.cfg.dt,
            states,
            noise,
            sigma: self.cfg.noise.sigma.clone(),
            ledger,
        })
    }

    /// Independent paths `0..n_paths`, run concurrently; output order is by path index.
    pub fn ensemble(&self, seed: u64, n_paths: usize) -> Result<Vec<Trajectory>> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|p| self.simulate(seed, p, None))
            .collect()
    }
}

/// Velocity of `u = v + w` at `(x, y)` and basic-field time sample `k`.
pub fn velocity_eval(
    ops: &OperatorSet,
    a: &DVector<f64>,
    field: &BasicField,
    x: f64,
    y: f64,
    k: usize,
) -> Result<[f64; 2]> {
    if !(0.0..=ops.basis.length).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!(
            "point ({x}, {y}) lies outside the periodic channel of length {}",
            ops.basis.length
        )));
    }
    let w = field.velocity(x, y, k)?;
    let v = ops.basis.eval(a, x, y);
    Ok([v.u[0] + w[0], v.u[1] + w[1]])
}

/// `∫₀¹ u_x(x, y) dy` of `u = v + w` by composite Gauss–Legendre (16 panels of 32),
/// fine enough for the highest retained outlet mode.
pub fn cross_section_flux(
    ops: &OperatorSet,
    a: &DVector<f64>,
    field: &BasicField,
    x: f64,
    k: usize,
) -> Result<f64> {
    let rule = composite_gauss_legendre(32, 16, 0.0, 1.0);
    let mut acc = 0.0;
    for (y, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * velocity_eval(ops, a, field, x, *y, k)?[0];
    }
    Ok(acc)
}
