//! Numerical certificates for the energy, monotonicity and uniqueness inequalities.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basic_field::{BasicField, BetaConstants};
use crate::error::{config, Error, Result};
use crate::galerkin::{cross_section_flux, OperatorSet, Simulator, Trajectory};
use crate::signals::{stream, stream_rng, trapezoid};

pub use crate::galerkin::EnergyLedger;

/// Machine-readable outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub statistic: f64,
    pub tolerance: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoResidual {
    pub series: Vec<f64>,
    pub max: f64,
    pub l1: f64,
    /// Mean of `|residual_j|` over steps.
    pub mean_abs: f64,
}

/// `Δ|v|² − 2(F̃(v_j), v_j)Δt − 2Σ σ_k ΔW_k a_j[k] − Tr(g*g)Δt` per step, with the
/// stochastic term rebuilt from the stored noise increments.
pub fn ito_residual(tr: &Trajectory) -> Result<ItoResidual> {
    let l = &tr.ledger;
    let n_steps = tr.states.len().saturating_sub(1);
    if tr.noise.n_steps != n_steps || tr.noise.n_modes != tr.sigma.len() {
        return Err(Error::Misuse(format!(
            "noise record covers {} steps of {} modes, trajectory has {} steps of {} modes",
            tr.noise.n_steps,
            tr.noise.n_modes,
            n_steps,
            tr.sigma.len()
        )));
    }
    if l.drift_dot.len() != n_steps || l.l2.len() != n_steps + 1 {
        return Err(Error::Misuse("ledger does not match the trajectory".into()));
    }
    let trace: f64 = tr.sigma.iter().map(|s| s * s).sum();
    let series: Vec<f64> = (0..n_steps)
        .map(|j| {
            let a = &tr.states[j];
            let stoch: f64 = tr
                .sigma
                .iter()
                .zip(tr.noise.row(j))
                .enumerate()
                .map(|(k, (s, w))| s * w * a[k])
                .sum();
            (l.l2[j + 1] - l.l2[j]) - 2.0 * l.drift_dot[j] * tr.dt - 2.0 * stoch - trace * tr.dt
        })
        .collect();
    let l1: f64 = series.iter().map(|r| r.abs()).sum();
    Ok(ItoResidual {
        max: series.iter().fold(0.0, |m, r| m.max(r.abs())),
        mean_abs: if series.is_empty() { 0.0 } else { l1 / series.len() as f64 },
        l1,
        series,
    })
}

/// `|v|²` in the ledger against `Σ a_j²` from the stored states.
pub fn ledger_consistency(tr: &Trajectory) -> f64 {
    tr.states
        .iter()
        .zip(&tr.ledger.l2)
        .map(|(s, l)| (s.norm_squared() - l).abs() / l.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Sampled norms of the projected residual forcing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FwNorms {
    pub dt: f64,
    /// `|f_w(t)|²`.
    pub l2_sq: Vec<f64>,
    /// `‖f_w(t)‖²_{V′}`.
    pub dual_sq: Vec<f64>,
}

impl FwNorms {
    fn discounted_l2(&self, delta: f64) -> f64 {
        if self.l2_sq.is_empty() {
            return 0.0;
        }
        let v: Vec<f64> = self
            .l2_sq
            .iter()
            .enumerate()
            .map(|(k, f)| f * (-delta * k as f64 * self.dt).exp())
            .collect();
        trapezoid(&v, self.dt)
    }

    fn dual(&self) -> f64 {
        if self.dual_sq.is_empty() {
            0.0
        } else {
            trapezoid(&self.dual_sq, self.dt)
        }
    }
}

/// Data entering the assembled right-hand side besides the paths themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriInputs {
    pub nu: f64,
    pub t_end: f64,
    /// `Tr(g*g)`, constant in time.
    pub trace: f64,
    pub fw: FwNorms,
}

/// `S = sup_t [β₂₀²/ν + 2β₂₁(t) + 2β₂₂(t)]` from measured constants.
pub fn growth_constant(beta: &BetaConstants, nu: f64) -> f64 {
    let b0 = beta.beta20 * beta.beta20 / nu;
    beta.beta21
        .iter()
        .zip(&beta.beta22)
        .map(|(a, b)| b0 + 2.0 * a + 2.0 * b)
        .fold(b0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub delta: f64,
    /// `E[sup_t |v|²e^{−δt}] + 2ν E∫‖v‖²e^{−δt}`.
    pub lhs: f64,
    pub rhs: f64,
    pub mc_stderr: f64,
    /// `E[sup_t |v|²] + 2ν E∫‖v‖²` and its bound.
    pub lhs_undiscounted: f64,
    pub rhs_undiscounted: f64,
    pub mc_stderr_undiscounted: f64,
    pub growth: f64,
    pub trace_integral: f64,
    pub n_paths: usize,
    pub pass: bool,
}

fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo left side against the Gronwall-assembled bound
/// `(|v₀|² + (2/δ)∫|f_w|²e^{−δt} + 10∫Tr e^{−δt}) · (1 + 2 S T e^{S T})`, and the
/// undiscounted variant with `2∫‖f_w‖²_{V′} + 10∫Tr`.
pub fn apriori_check(
    ledgers: &[EnergyLedger],
    inputs: &AprioriInputs,
    beta: &BetaConstants,
) -> Result<AprioriReport> {
    if ledgers.len() < 2 {
        return config("the a-priori check needs at least two paths");
    }
    let delta = ledgers[0].delta;
    if !(delta > 0.0) {
        return config(format!("discount rate must be positive, got {delta}"));
    }
    if ledgers.iter().any(|l| l.delta != delta || l.len() < 2) {
        return Err(Error::Misuse("ledgers disagree on the discount rate or are empty".into()));
    }
    let dt = ledgers[0].t[1] - ledgers[0].t[0];
    let nu = inputs.nu;
    let mut disc = Vec::with_capacity(ledgers.len());
    let mut plain = Vec::with_capacity(ledgers.len());
    for l in ledgers {
        let sup_d = l.l2_disc.iter().fold(0.0f64, |m, v| m.max(*v));
        let sup_p = l.l2.iter().fold(0.0f64, |m, v| m.max(*v));
        disc.push(sup_d + 2.0 * nu * trapezoid(&l.dirichlet_disc, dt));
        plain.push(sup_p + 2.0 * nu * trapezoid(&l.dirichlet, dt));
    }
    let v0 = ledgers.iter().map(|l| l.l2[0]).sum::<f64>() / ledgers.len() as f64;
    let (lhs, se) = mean_stderr(&disc);
    let (lhs_u, se_u) = mean_stderr(&plain);
    let t = inputs.t_end;
    let s = growth_constant(beta, nu);
    let factor = 1.0 + 2.0 * (s * t).exp() * s * t;
    let trace_disc = inputs.trace * (1.0 - (-delta * t).exp()) / delta;
    let rhs = (v0 + 2.0 / delta * inputs.fw.discounted_l2(delta) + 10.0 * trace_disc) * factor;
    let rhs_u = (v0 + 2.0 * inputs.fw.dual() + 10.0 * inputs.trace * t) * factor;
    let values = [lhs, rhs, lhs_u, rhs_u, se, se_u];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite a-priori terms {values:?}")));
    }
    Ok(AprioriReport {
        delta,
        lhs,
        rhs,
        mc_stderr: se,
        lhs_undiscounted: lhs_u,
        rhs_undiscounted: rhs_u,
        mc_stderr_undiscounted: se_u,
        growth: s,
        trace_integral: trace_disc,
        n_paths: ledgers.len(),
        pass: lhs <= rhs + 2.0 * se && lhs_u <= rhs_u + 2.0 * se_u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub rho_ball: f64,
    pub poincare: f64,
    pub n_samples: usize,
    pub rejections: usize,
    /// Largest `(F(v)−F(x), z) + Λ|z|²` over the samples.
    pub max_violation: f64,
    /// Largest value divided by its energy scale `ν‖z‖² + |Λ||z|²`.
    pub max_relative: f64,
    pub pass: bool,
}

pub const MONOTONICITY_TOL: f64 = 1e-8;

/// `Λ = ν/(2C) − β₂₀²/ν − |η₂₁| − |η₂₂| − 27ϱ⁴/(4ν³)`.
pub fn monotonicity_lambda(nu: f64, poincare: f64, beta: &BetaConstants, rho_ball: f64) -> f64 {
    nu / (2.0 * poincare)
        - beta.beta20 * beta.beta20 / nu
        - beta.eta21.abs()
        - beta.eta22.abs()
        - 27.0 * rho_ball.powi(4) / (4.0 * nu.powi(3))
}

/// `F(v) = −νAv − B(v,v) − B₁(w)v − B₂(w)v` at shear sample `k` (no forcing).
pub fn operator_f(ops: &OperatorSet, nu: f64, a: &DVector<f64>, k: Option<usize>) -> DVector<f64> {
    -(&ops.a * a) * nu - ops.convection(a, k)
}

fn random_direction(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Samples `x` in the `L⁴` ball of radius `ϱ` (rejection on a random amplitude)
/// and unrestricted `v`, evaluating the monotonicity expression at a random shear sample.
pub fn monotonicity_check(
    ops: &OperatorSet,
    nu: f64,
    beta: &BetaConstants,
    rho_ball: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if !(rho_ball > 0.0 && rho_ball.is_finite()) {
        return config(format!("ball radius must be positive, got {rho_ball}"));
    }
    if n_samples == 0 {
        return config("monotonicity check needs at least one sample");
    }
    let lambda = monotonicity_lambda(nu, ops.poincare, beta, rho_ball);
    let mut rng = stream_rng(seed, stream::SAMPLING, 0);
    let n = ops.n();
    let n_times = ops.shear.n_times;
    let budget = 100 * n_samples;
    let mut rejections = 0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_relative = f64::NEG_INFINITY;
    let mut pass = true;
    for _ in 0..n_samples {
        let x = loop {
            let dir = random_direction(&mut rng, n);
            let unit = ops.l4_norm4(&dir).powf(0.25);
            let amp = rng.random::<f64>() * 1.25 * rho_ball / unit;
            let x = dir * amp;
            if ops.l4_norm4(&x).powf(0.25) <= rho_ball {
                break x;
            }
            rejections += 1;
            if rejections >= budget {
                return Err(Error::Domain(format!(
                    "no admissible sample in the L4 ball of radius {rho_ball} after {budget} rejections; the ball is too small"
                )));
            }
        };
        let vdir = random_direction(&mut rng, n);
        let vunit = ops.l4_norm4(&vdir).powf(0.25);
        let v = vdir * (rng.random::<f64>() * 2.0 * rho_ball / vunit);
        let k = (n_times > 1).then(|| rng.random_range(0..n_times));
        let z = &v - &x;
        let value = (operator_f(ops, nu, &v, k) - operator_f(ops, nu, &x, k)).dot(&z)
            + lambda * z.norm_squared();
        let scale = nu * ops.dirichlet(&z) + lambda.abs() * z.norm_squared();
        if value > MONOTONICITY_TOL * scale {
            pass = false;
        }
        max_violation = max_violation.max(value);
        if scale > 0.0 {
            max_relative = max_relative.max(value / scale);
        }
    }
    Ok(MonotonicityReport {
        lambda,
        rho_ball,
        poincare: ops.poincare,
        n_samples,
        rejections,
        max_violation,
        max_relative,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub epsilon: f64,
    /// `C(ω) = β₂₀²/ν + |η₂₁| + |η₂₂| − ν/(2C)`.
    pub c_omega: f64,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    /// `e^{−r(t)}|ϑ(t)|²`.
    pub weighted: Vec<f64>,
    /// Largest one-step increase of the weighted series.
    pub max_increase: f64,
    pub slack: f64,
    pub pass: bool,
}

pub fn gronwall_c(nu: f64, poincare: f64, beta: &BetaConstants) -> f64 {
    beta.beta20 * beta.beta20 / nu + beta.eta21.abs() + beta.eta22.abs() - nu / (2.0 * poincare)
}

/// Weighted difference series of two noise-matched paths; `y = reference`.
pub fn gronwall_series(
    ops: &OperatorSet,
    nu: f64,
    c_omega: f64,
    perturbed: &Trajectory,
    reference: &Trajectory,
) -> Result<GronwallReport> {
    if perturbed.noise != reference.noise || perturbed.sigma != reference.sigma {
        return Err(Error::Misuse("trajectories are driven by different noise".into()));
    }
    if perturbed.states.len() != reference.states.len() {
        return Err(Error::Misuse("trajectories have different lengths".into()));
    }
    let dt = reference.dt;
    let l4: Vec<f64> = reference.states.iter().map(|s| ops.l4_norm4(s)).collect();
    let k = 27.0 / (2.0 * nu.powi(3));
    let mut r = Vec::with_capacity(l4.len());
    let mut acc = 0.0;
    for (j, v) in l4.iter().enumerate() {
        if j > 0 {
            acc += 0.5 * dt * (l4[j - 1] + v);
        }
        r.push(2.0 * c_omega * j as f64 * dt + k * acc);
    }
    let weighted: Vec<f64> = perturbed
        .states
        .iter()
        .zip(&reference.states)
        .zip(&r)
        .map(|((a, b), r)| (-r).exp() * (a - b).norm_squared())
        .collect();
    let eps2 = weighted[0];
    let slack = 1e-8 * eps2;
    let max_increase = weighted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GronwallReport {
        epsilon: eps2.sqrt(),
        c_omega,
        t: reference.ledger.t.clone(),
        r,
        pass: weighted.len() < 2 || max_increase <= slack,
        max_increase,
        slack,
        weighted,
    })
}

/// Runs the noise-matched pair from `0` and `ε e₁` and evaluates the weighted series.
pub fn gronwall_uniqueness(
    sim: &Simulator,
    beta: &BetaConstants,
    seed: u64,
    eps: f64,
) -> Result<GronwallReport> {
    let n = sim.ops.n();
    let noise = sim.noise_for(seed, 0)?;
    let reference = sim.simulate_with_noise(seed, 0, None, noise.clone())?;
    let v0 = DVector::from_fn(n, |r, _| if r == 0 { eps } else { 0.0 });
    let perturbed = sim.simulate_with_noise(seed, 0, Some(&v0), noise)?;
    let c = gronwall_c(sim.cfg.nu, sim.ops.poincare, beta);
    gronwall_series(sim.ops, sim.cfg.nu, c, &perturbed, &reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxAudit {
    pub stations: Vec<f64>,
    pub times: Vec<usize>,
    /// Largest `|∫u_x dy − F(t)| / max(|F(t)|, 1e-12)`.
    pub max_relative_error: f64,
    pub max_pairwise: f64,
    pub max_divergence: f64,
    pub pass: bool,
}

pub const FLUX_TOL: f64 = 1e-6;
pub const DIVERGENCE_TOL: f64 = 1e-8;

/// Cross-section flux of `u = v + w` at `stations` for `(heat sample, state)` pairs,
/// plus the pointwise divergence at a fixed lattice of interior points.
pub fn flux_and_divergence_audit(
    ops: &OperatorSet,
    field: &BasicField,
    samples: &[(usize, &DVector<f64>)],
    stations: &[f64],
    target: impl Fn(usize) -> f64,
) -> Result<FluxAudit> {
    if stations.is_empty() || samples.is_empty() {
        return config("flux audit needs stations and samples");
    }
    let mut max_rel = 0.0f64;
    let mut max_pair = 0.0f64;
    let mut max_div = 0.0f64;
    for (k, a) in samples {
        let f = target(*k);
        let fluxes = stations
            .iter()
            .map(|x| cross_section_flux(ops, a, field, *x, *k))
            .collect::<Result<Vec<f64>>>()?;
        for (i, q) in fluxes.iter().enumerate() {
            max_rel = max_rel.max((q - f).abs() / f.abs().max(1e-12));
            for p in &fluxes[..i] {
                max_pair = max_pair.max((q - p).abs() / f.abs().max(1e-12));
            }
        }
        for ix in 0..7 {
            for iy in 1..8 {
                let x = ops.basis.length * (ix as f64 + 0.5) / 7.0;
                let y = iy as f64 / 8.0;
                let g = ops.basis.eval(a, x, y).grad;
                let gw = field.point(x, y, *k)?.grad;
                max_div = max_div.max((g[0][0] + g[1][1] + gw[0][0] + gw[1][1]).abs());
            }
        }
    }
    Ok(FluxAudit {
        stations: stations.to_vec(),
        times: samples.iter().map(|s| s.0).collect(),
        max_relative_error: max_rel,
        max_pairwise: max_pair,
        max_divergence: max_div,
        pass: max_rel <= FLUX_TOL && max_pair <= FLUX_TOL && max_div <= DIVERGENCE_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnReport {
    pub n_samples: usize,
    pub violations: usize,
    /// Largest `‖φ‖⁴_{L⁴} / (2|φ|²‖∇φ‖²)`.
    pub max_ratio: f64,
}

/// `‖φ‖⁴_{L⁴} ≤ 2|φ|²‖∇φ‖²` on random basis combinations, all norms by quadrature.
pub fn gagliardo_nirenberg_check(ops: &OperatorSet, n_samples: usize, seed: u64) -> GnReport {
    let mut rng = stream_rng(seed, stream::SAMPLING, 1);
    let n = ops.n();
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for i in 0..n_samples {
        // Alternate white and energy-weighted spectra.
        let mut phi = random_direction(&mut rng, n);
        if i % 2 == 1 {
            for (j, p) in phi.iter_mut().enumerate() {
                *p /= 1.0 + j as f64;
            }
        }
        let lhs = ops.l4_norm4(&phi);
        let rhs = 2.0 * ops.l2_quadrature(&phi) * ops.gradient_quadrature(&phi);
        if lhs > rhs {
            violations += 1;
        }
        max_ratio = max_ratio.max(lhs / rhs);
    }
    GnReport {
        n_samples,
        violations,
        max_ratio,
    }
}

/// CSV of `(t, value)` pairs.
pub fn write_series_csv<W: Write>(mut out: W, header: &str, t: &[f64], values: &[f64]) -> Result<()> {
    writeln!(out, "t,{header}")?;
    for (t, v) in t.iter().zip(values) {
        writeln!(out, "{t:.16e},{v:.16e}")?;
    }
    Ok(())
}
