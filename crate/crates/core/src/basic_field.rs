//! The flux-carrying basic field `w`.
//!
//! Two geometries are supported.
//!
//! * `Straight`: the unit-width channel. Here `w = (w₁(y,t), 0)` and `P = −x f(t)`.
//! * `TwoOutlet`: the lower wall `y = b(x)` climbs by `offset` over the junction
//!   `[x_l, x_r]`, and the upper wall is `b(x) + 1`.
//!
//! With `η = y − b(x)`, the inner stream function is the clamped cubic
//! `ψ̂ = F(t)·(3η² − 2η³)`. It is blended into the outlet stream function
//! `Ψ(η,t) = ∫₀^η w₁` over `ε₀`-wide zones on either side of the junction:
//! `ψ = (1 − Λ(x))ψ̂ + Λ(x)Ψ`. Velocities and gradients are analytic, so
//! `∇·w = 0` holds identically.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::heat_kernel::{HeatSolution, ProfilePoint};
use crate::quadrature::{composite_gauss_legendre, gauss_legendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Straight,
    TwoOutlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub kind: GeometryKind,
    /// Streamwise extent `[0, length]` of the modelled region.
    pub length: f64,
    /// Vertical shift of the second outlet relative to the first.
    pub offset: f64,
    pub junction_start: f64,
    pub junction_end: f64,
    pub epsilon0: f64,
}

impl ChannelGeometry {
    pub fn straight(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return config(format!("channel length must be positive, got {length}"));
        }
        Ok(Self {
            kind: GeometryKind::Straight,
            length,
            offset: 0.0,
            junction_start: 0.0,
            junction_end: 0.0,
            epsilon0: 0.0,
        })
    }

    /// Junction `[x_l, x_r]` inside `[0, length]`; `epsilon0 = None` selects
    /// `0.2·(x_r − x_l)`.
    pub fn two_outlet(
        length: f64,
        junction_start: f64,
        junction_end: f64,
        offset: f64,
        epsilon0: Option<f64>,
    ) -> Result<Self> {
        let eps = epsilon0.unwrap_or(0.2 * (junction_end - junction_start));
        let g = Self {
            kind: GeometryKind::TwoOutlet,
            length,
            offset,
            junction_start,
            junction_end,
            epsilon0: eps,
        };
        if !(junction_end > junction_start) {
            return config("junction must have positive length");
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return config(format!("mollifier width must be positive, got {eps}"));
        }
        if !offset.is_finite() {
            return config("outlet offset must be finite");
        }
        let (a, b) = g.blend_extent();
        if !(a > 0.0 && b < length) {
            return config(format!(
                "blend region [{a}, {b}] is not strictly inside [0, {length}]"
            ));
        }
        Ok(g)
    }

    /// `[x_l − ε₀, x_r + ε₀]`: the junction plus both blend zones.
    pub fn blend_extent(&self) -> (f64, f64) {
        match self.kind {
            GeometryKind::Straight => (0.0, 0.0),
            GeometryKind::TwoOutlet => (
                self.junction_start - self.epsilon0,
                self.junction_end + self.epsilon0,
            ),
        }
    }

    pub fn in_blend(&self, x: f64) -> bool {
        let (a, b) = self.blend_extent();
        self.kind == GeometryKind::TwoOutlet && x > a && x < b
    }

    /// Lower wall `b(x)` and its first two derivatives.
    pub fn lower_wall(&self, x: f64) -> [f64; 3] {
        if self.kind == GeometryKind::Straight {
            return [0.0; 3];
        }
        let len = self.junction_end - self.junction_start;
        let u = ((x - self.junction_start) / len).clamp(0.0, 1.0);
        let (u2, v) = (u * u, 1.0 - u);
        let s = u2 * u2 * (35.0 - 84.0 * u + 70.0 * u2 - 20.0 * u2 * u);
        let s1 = 140.0 * u2 * u * v * v * v;
        let s2 = 420.0 * u2 * v * v * (1.0 - 2.0 * u);
        [self.offset * s, self.offset * s1 / len, self.offset * s2 / (len * len)]
    }

    /// Blend weight `Λ(x)` towards the outlet profile and its derivatives.
    pub fn blend_weight(&self, x: f64) -> [f64; 3] {
        if self.kind == GeometryKind::Straight {
            return [1.0, 0.0, 0.0];
        }
        let l = mollified_step_derivs(self.junction_start - x, self.epsilon0);
        let r = mollified_step_derivs(x - self.junction_end, self.epsilon0);
        [l[0] + r[0], r[1] - l[1], l[2] + r[2]]
    }

    /// Whether `(x, y)` lies in the closed channel, with tolerance `tol` on the walls.
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        let b = self.lower_wall(x)[0];
        let inside_x = match self.kind {
            GeometryKind::Straight => x.is_finite(),
            GeometryKind::TwoOutlet => (0.0..=self.length).contains(&x),
        };
        inside_x && y >= b - tol && y <= b + 1.0 + tol
    }

    /// Plain-text `key=value` block.
    pub fn to_config_block(&self) -> String {
        let kind = match self.kind {
            GeometryKind::Straight => "straight",
            GeometryKind::TwoOutlet => "two_outlet",
        };
        format!(
            "geometry={kind}\nlength={:?}\noffset={:?}\njunction_start={:?}\njunction_end={:?}\nepsilon0={:?}\n",
            self.length, self.offset, self.junction_start, self.junction_end, self.epsilon0
        )
    }
}

fn bump(s: f64) -> [f64; 3] {
    if s <= 0.0 {
        return [0.0; 3];
    }
    let p = (-1.0 / s).exp();
    if p == 0.0 {
        return [0.0; 3];
    }
    let p1 = p / (s * s);
    let p2 = p * (1.0 / s.powi(4) - 2.0 / s.powi(3));
    [p, p1, p2]
}

/// `λ(ξ)` and its first two derivatives: a `C^∞` monotone step from 0 at `ξ ≤ 0`
/// to 1 at `ξ ≥ ε₀`, built from `e^{−1/s}`.
pub fn mollified_step_derivs(xi: f64, epsilon0: f64) -> [f64; 3] {
    let s = xi / epsilon0;
    if s <= 0.0 {
        return [0.0; 3];
    }
    if s >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let [p, p1, p2] = bump(s);
    let [q, q1m, q2m] = bump(1.0 - s);
    // Derivatives of q(s) = φ(1 − s).
    let (q1, q2) = (-q1m, q2m);
    let d = p + q;
    let n = p1 * q - p * q1;
    let dn = p2 * q - p * q2;
    let dd = p1 + q1;
    let g = p / d;
    let g1 = n / (d * d);
    let g2 = (dn * d - 2.0 * n * dd) / (d * d * d);
    [g, g1 / epsilon0, g2 / (epsilon0 * epsilon0)]
}

pub fn mollified_step(xi: f64, epsilon0: f64) -> f64 {
    mollified_step_derivs(xi, epsilon0)[0]
}

/// `P(x,t) = −x·f(t)`.
pub fn pressure_p(x: f64, f: f64) -> f64 {
    -x * f
}

/// Inner stream function `ψ̂ = F(t)·H(η)` with `H(η) = 3η² − 2η³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerStream {
    /// Upper-wall value `F(t_k)`; the lower wall carries 0.
    pub wall_flux: Vec<f64>,
}

impl InnerStream {
    /// Wall values equal to the flux realized by the outlet profile.
    pub fn matching(heat: &HeatSolution) -> Self {
        Self {
            wall_flux: (0..heat.t_grid.len()).map(|k| heat.flux(k)).collect(),
        }
    }

    pub fn from_flux(flux: &[f64]) -> Self {
        Self {
            wall_flux: flux.to_vec(),
        }
    }
}

fn hermite(eta: f64) -> [f64; 3] {
    [
        eta * eta * (3.0 - 2.0 * eta),
        6.0 * eta * (1.0 - eta),
        6.0 - 12.0 * eta,
    ]
}

/// Stream function, velocity and velocity gradient at a point.
/// `grad[i][j] = ∂_j w_i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldPoint {
    pub psi: f64,
    pub u: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicField {
    pub geometry: ChannelGeometry,
    /// Outlet solution shared by both unit-width outlets.
    pub heat: HeatSolution,
    pub inner: InnerStream,
}

/// Default tolerance for wall-value agreement, relative to `max|F|`.
pub const WALL_TOL: f64 = 1e-6;

/// Blends `ψ̂` with the outlet stream function. Fails if `ψ̂`'s upper-wall value
/// differs from the outlet flux by more than `tol·max(1, max|F|)`.
pub fn blend_stream(
    psi_hat: &InnerStream,
    heat: &HeatSolution,
    geometry: &ChannelGeometry,
    tol: f64,
) -> Result<BasicField> {
    let nt = heat.t_grid.len();
    if psi_hat.wall_flux.len() != nt {
        return config(format!(
            "inner stream has {} samples, outlet solution has {nt}",
            psi_hat.wall_flux.len()
        ));
    }
    let scale = psi_hat
        .wall_flux
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    for (k, f) in psi_hat.wall_flux.iter().enumerate() {
        let outlet = heat.flux(k);
        if (f - outlet).abs() > tol * scale {
            return Err(Error::Construction(format!(
                "upper-wall value {f} of the inner stream function differs from the outlet flux {outlet} at step {k}"
            )));
        }
    }
    Ok(BasicField {
        geometry: *geometry,
        heat: heat.clone(),
        inner: psi_hat.clone(),
    })
}

impl BasicField {
    /// Straight channel with `w = (w₁, 0)`.
    pub fn straight(heat: &HeatSolution, length: f64) -> Result<Self> {
        blend_stream(
            &InnerStream::matching(heat),
            heat,
            &ChannelGeometry::straight(length)?,
            WALL_TOL,
        )
    }

    pub fn n_times(&self) -> usize {
        self.heat.t_grid.len()
    }

    /// Combines an outlet profile sample at `η = y − b(x)` with the blend.
    pub fn combine(&self, x: f64, prof: &ProfilePoint, eta: f64, k: usize) -> FieldPoint {
        let [lam, lam1, lam2] = self.geometry.blend_weight(x);
        let [_, b1, b2] = self.geometry.lower_wall(x);
        let f = self.inner.wall_flux[k];
        let [h, h1, h2] = hermite(eta);
        let om = 1.0 - lam;
        let g = f * h - prof.psi;
        let g1 = f * h1 - prof.w1;
        let g2 = f * h2 - prof.w1_y;
        let psi = prof.psi + om * g;
        let psi_y = prof.w1 + om * g1;
        let psi_yy = prof.w1_y + om * g2;
        let psi_x = -lam1 * g - b1 * psi_y;
        let psi_xy = -lam1 * g1 - b1 * psi_yy;
        let psi_xx = -lam2 * g + lam1 * b1 * g1 - b2 * psi_y - b1 * psi_xy;
        FieldPoint {
            psi,
            u: [psi_y, -psi_x],
            grad: [[psi_xy, psi_yy], [-psi_xx, -psi_xy]],
        }
    }

    /// Field at `(x, y)` and time index `k`, without a domain check.
    pub fn point_unchecked(&self, x: f64, y: f64, k: usize) -> FieldPoint {
        let eta = y - self.geometry.lower_wall(x)[0];
        let prof = self.heat.eval(eta, k);
        self.combine(x, &prof, eta, k)
    }

    pub fn point(&self, x: f64, y: f64, k: usize) -> Result<FieldPoint> {
        if k >= self.n_times() {
            return Err(Error::Domain(format!("time index {k} outside the grid")));
        }
        if !self.geometry.contains(x, y, 1e-12) {
            return Err(Error::Domain(format!("point ({x}, {y}) outside the channel")));
        }
        Ok(self.point_unchecked(x, y, k))
    }

    pub fn velocity(&self, x: f64, y: f64, k: usize) -> Result<[f64; 2]> {
        Ok(self.point(x, y, k)?.u)
    }

    /// Pressure `−x f(t_k)`.
    pub fn pressure(&self, x: f64, k: usize) -> f64 {
        pressure_p(x, self.heat.forcing.values[k])
    }

    /// `∫ w_x dy` across the vertical section at `x`.
    pub fn flux_through(&self, x: f64, k: usize) -> f64 {
        let b = self.geometry.lower_wall(x)[0];
        let rule = composite_gauss_legendre(32, 8, b, b + 1.0);
        rule.integrate(|y| self.point_unchecked(x, y, k).u[0])
    }

    /// Stream function sampled on the `(x, η)` grid covering the blend region,
    /// row-major in `x`. For the straight channel the grid spans `[0, length]`.
    pub fn psi_grid(&self, nx: usize, n_eta: usize, k: usize) -> Vec<[f64; 3]> {
        let (x0, x1) = self.sample_extent();
        let mut out = Vec::with_capacity(nx * n_eta);
        for i in 0..nx {
            let x = x0 + (x1 - x0) * i as f64 / (nx.max(2) - 1) as f64;
            let b = self.geometry.lower_wall(x)[0];
            for j in 0..n_eta {
                let y = b + j as f64 / (n_eta.max(2) - 1) as f64;
                out.push([x, y, self.point_unchecked(x, y, k).psi]);
            }
        }
        out
    }

    /// Sampling window: the blend region padded by `ε₀` on each side.
    pub fn sample_extent(&self) -> (f64, f64) {
        match self.geometry.kind {
            GeometryKind::Straight => (0.0, self.geometry.length),
            GeometryKind::TwoOutlet => {
                let (a, b) = self.geometry.blend_extent();
                let e = self.geometry.epsilon0;
                ((a - e).max(0.0), (b + e).min(self.geometry.length))
            }
        }
    }

    /// CSV `(x, y, t, w_x, w_y)` on an `nx × n_eta` grid at every `stride`-th time.
    pub fn write_velocity_csv<W: Write>(
        &self,
        mut out: W,
        nx: usize,
        n_eta: usize,
        stride: usize,
    ) -> Result<()> {
        writeln!(out, "x,y,t,w_x,w_y")?;
        let (x0, x1) = self.sample_extent();
        for k in (0..self.n_times()).step_by(stride.max(1)) {
            let t = self.heat.t_grid.t(k);
            for i in 0..nx {
                let x = x0 + (x1 - x0) * i as f64 / (nx.max(2) - 1) as f64;
                let b = self.geometry.lower_wall(x)[0];
                for j in 0..n_eta {
                    let y = b + j as f64 / (n_eta.max(2) - 1) as f64;
                    let u = self.point_unchecked(x, y, k).u;
                    writeln!(out, "{x:.16e},{y:.16e},{t:.16e},{:.16e},{:.16e}", u[0], u[1])?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaConstants {
    /// `sup |w|` over the blend region per time sample (zero for the straight channel).
    pub beta10: Vec<f64>,
    pub beta11: f64,
    pub beta12: f64,
    /// `‖∇w‖_{L²(0,T; L²(blend region))}`.
    pub beta20: f64,
    /// `sup_y |∂_y w₁(y,t)|` per time sample, one per outlet.
    pub beta21: Vec<f64>,
    pub beta22: Vec<f64>,
    /// `η₂ᵢ = √(π/(4ν)·‖f‖²_{L²(0,T)})`.
    pub eta21: f64,
    pub eta22: f64,
    /// Whether `β₂ᵢ(t) ≤ η₂ᵢ` held at every sample.
    pub eta_dominates: bool,
}

impl BetaConstants {
    pub fn max_beta2(&self) -> f64 {
        self.beta21
            .iter()
            .chain(&self.beta22)
            .fold(0.0, |m, v| m.max(*v))
    }
}

pub fn beta_constants(field: &BasicField) -> BetaConstants {
    let heat = &field.heat;
    let nt = field.n_times();
    let nu = heat.config.nu;
    // |w₁| and |∂_y w₁| are symmetric about y = 1/2.
    let scan: Vec<(f64, f64)> = (0..nt)
        .map(|k| {
            (0..=200).fold((0.0f64, 0.0f64), |(a, b), i| {
                let p = heat.eval(i as f64 / 400.0, k);
                (a.max(p.w1.abs()), b.max(p.w1_y.abs()))
            })
        })
        .collect();
    let beta1 = scan.iter().fold(0.0f64, |m, s| m.max(s.0));
    let beta2: Vec<f64> = scan.iter().map(|s| s.1).collect();
    let eta = (PI / (4.0 * nu) * heat.forcing.l2_norm_sq()).sqrt();
    let eta_dominates = beta2.iter().all(|b| *b <= eta * (1.0 + 1e-12));

    let (beta10, beta20) = match field.geometry.kind {
        GeometryKind::Straight => (vec![0.0; nt], 0.0),
        GeometryKind::TwoOutlet => junction_norms(field),
    };
    BetaConstants {
        beta10,
        beta11: beta1,
        beta12: beta1,
        beta20,
        beta21: beta2.clone(),
        beta22: beta2,
        eta21: eta,
        eta22: eta,
        eta_dominates,
    }
}

fn junction_norms(field: &BasicField) -> (Vec<f64>, f64) {
    let (a, b) = field.geometry.blend_extent();
    let xs = composite_gauss_legendre(8, 8, a, b);
    let etas = gauss_legendre(24, 0.0, 1.0);
    let nt = field.n_times();
    let mut sup = vec![0.0; nt];
    let mut energy = vec![0.0; nt];
    for k in 0..nt {
        let profiles: Vec<ProfilePoint> = etas.nodes.iter().map(|e| field.heat.eval(*e, k)).collect();
        let mut acc = 0.0;
        for (x, wx) in xs.nodes.iter().zip(&xs.weights) {
            for ((e, we), prof) in etas.nodes.iter().zip(&etas.weights).zip(&profiles) {
                let p = field.combine(*x, prof, *e, k);
                let g = p.grad;
                acc += wx * we * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2));
                sup[k] = f64::max(sup[k], p.u[0].hypot(p.u[1]));
            }
        }
        energy[k] = acc;
    }
    let beta20 = crate::signals::trapezoid(&energy, field.heat.t_grid.dt).sqrt();
    (sup, beta20)
}

/// Residual forcing `f_w = νΔw − w·∇w − w_t − ∇P` sampled on the blend grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwField {
    pub times: Vec<usize>,
    /// Sample points `(x, y)`.
    pub points: Vec<[f64; 2]>,
    pub in_blend: Vec<bool>,
    /// `f_w`, time-major (`slot * n_points + p`).
    pub values: Vec<[f64; 2]>,
    /// `max |f_w|` at points outside the blend region.
    pub outside_max: f64,
    /// Same stencil applied to the pure outlet solution.
    pub outlet_residual_max: f64,
    pub support_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwGrid {
    pub nx: usize,
    pub n_eta: usize,
    /// Use every `time_stride`-th interior time sample.
    pub time_stride: usize,
    /// Finite-difference step in space.
    pub h: f64,
}

impl Default for FwGrid {
    fn default() -> Self {
        Self {
            nx: 49,
            n_eta: 25,
            time_stride: 50,
            h: 1e-3,
        }
    }
}

pub fn forcing_fw(field: &BasicField, grid: &FwGrid) -> Result<FwField> {
    if grid.nx < 2 || grid.n_eta < 3 || !(grid.h > 0.0) {
        return config("f_w grid needs nx ≥ 2, n_eta ≥ 3 and h > 0");
    }
    let nt = field.n_times();
    if nt < 3 {
        return config("f_w needs at least three time samples");
    }
    let times: Vec<usize> = (1..nt - 1).step_by(grid.time_stride.max(1)).collect();
    let (x0, x1) = field.sample_extent();
    let mut points = Vec::with_capacity(grid.nx * grid.n_eta);
    for i in 0..grid.nx {
        let x = x0 + (x1 - x0) * i as f64 / (grid.nx - 1) as f64;
        let b = field.geometry.lower_wall(x)[0];
        for j in 0..grid.n_eta {
            points.push([x, b + j as f64 / (grid.n_eta - 1) as f64]);
        }
    }
    let in_blend: Vec<bool> = points.iter().map(|p| field.geometry.in_blend(p[0])).collect();
    if field.geometry.kind == GeometryKind::Straight {
        return Ok(FwField {
            values: vec![[0.0; 2]; times.len() * points.len()],
            times,
            points,
            in_blend,
            outside_max: 0.0,
            outlet_residual_max: 0.0,
            support_ok: true,
        });
    }
    let nu = field.heat.config.nu;
    let dt = field.heat.t_grid.dt;
    let h = grid.h;
    // Outside the blend region the field is the outlet profile of the nearer outlet.
    let outlet_wall = |x: f64| {
        if x < field.geometry.junction_start {
            0.0
        } else {
            field.geometry.offset
        }
    };
    let outlet = |x: f64, y: f64, k: usize| -> [f64; 2] {
        [field.heat.eval(y - outlet_wall(x), k).w1, 0.0]
    };
    let blended = |x: f64, y: f64, k: usize| field.point_unchecked(x, y, k).u;
    let mut values = Vec::with_capacity(times.len() * points.len());
    let mut outside_max = 0.0f64;
    let mut outlet_residual_max = 0.0f64;
    for &k in &times {
        let f = field.heat.forcing.values[k];
        for (p, blend) in points.iter().zip(&in_blend) {
            let (x, y) = (p[0], p[1]);
            let c = field.point_unchecked(x, y, k);
            let fw = stencil_residual(&blended, c.u, c.grad, x, y, k, h, dt, nu, f);
            if !blend {
                outside_max = outside_max.max(fw[0].hypot(fw[1]));
                let prof = field.heat.eval(y - outlet_wall(x), k);
                let og = [[0.0, prof.w1_y], [0.0, 0.0]];
                let r = stencil_residual(&outlet, [prof.w1, 0.0], og, x, y, k, h, dt, nu, f);
                outlet_residual_max = outlet_residual_max.max(r[0].hypot(r[1]));
            }
            values.push(fw);
        }
    }
    let support_ok = outside_max <= 10.0 * outlet_residual_max + 1e-12;
    Ok(FwField {
        times,
        points,
        in_blend,
        values,
        outside_max,
        outlet_residual_max,
        support_ok,
    })
}

#[allow(clippy::too_many_arguments)]
fn stencil_residual(
    u: &dyn Fn(f64, f64, usize) -> [f64; 2],
    c: [f64; 2],
    grad: [[f64; 2]; 2],
    x: f64,
    y: f64,
    k: usize,
    h: f64,
    dt: f64,
    nu: f64,
    f: f64,
) -> [f64; 2] {
    let e = u(x + h, y, k);
    let w = u(x - h, y, k);
    let n = u(x, y + h, k);
    let s = u(x, y - h, k);
    let later = u(x, y, k + 1);
    let earlier = u(x, y, k - 1);
    let mut out = [0.0; 2];
    for i in 0..2 {
        let lap = (e[i] + w[i] + n[i] + s[i] - 4.0 * c[i]) / (h * h);
        let conv = c[0] * grad[i][0] + c[1] * grad[i][1];
        let dtw = (later[i] - earlier[i]) / (2.0 * dt);
        // −∇P = (f, 0).
        let gp = if i == 0 { f } else { 0.0 };
        out[i] = nu * lap - conv - dtw + gp;
    }
    out
}

impl FwField {
    pub fn write_csv<W: Write>(&self, mut out: W, dt: f64) -> Result<()> {
        writeln!(out, "x,y,t,fw_x,fw_y")?;
        let np = self.points.len();
        for (slot, k) in self.times.iter().enumerate() {
            let t = *k as f64 * dt;
            for (p, pt) in self.points.iter().enumerate() {
                let v = self.values[slot * np + p];
                writeln!(
                    out,
                    "{:.16e},{:.16e},{t:.16e},{:.16e},{:.16e}",
                    pt[0], pt[1], v[0], v[1]
                )?;
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v[0].hypot(v[1])))
    }
}
