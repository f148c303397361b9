use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::basis::GalerkinBasis;
use crate::error::{config, Error, Result};
use crate::heat_kernel::HeatSolution;
use crate::quadrature::gauss_legendre;
use crate::signals::{stream, stream_rng};

/// Tensor-product rule: uniform trapezoid in `x` (exact for trigonometric
/// polynomials of degree below `nx`), Gauss–Legendre in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Weight of each point, `x`-fastest ordering (`iy * nx + ix`).
    pub weights: Vec<f64>,
}

impl QuadGrid {
    /// Resolves the quartic `L⁴` integrand and the cubic trilinear integrand exactly.
    pub fn for_basis(basis: &GalerkinBasis, y_nodes: Option<usize>) -> Self {
        let nx = 4 * basis.kx + 2;
        let ny = y_nodes.unwrap_or((3 * basis.my).max(2 * basis.my + 8));
        let xs: Vec<f64> = (0..nx).map(|i| basis.length * i as f64 / nx as f64).collect();
        let rule = gauss_legendre(ny, 0.0, 1.0);
        let wx = basis.length / nx as f64;
        let weights = rule
            .weights
            .iter()
            .flat_map(|wy| std::iter::repeat_n(wx * wy, nx))
            .collect();
        Self {
            xs,
            ys: rule.nodes,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, q: usize) -> (f64, f64) {
        let nx = self.xs.len();
        (self.xs[q % nx], self.ys[q / nx])
    }
}

/// Basis values at quadrature points: six stacked blocks of `Q` rows
/// `[u_x; u_y; ∂_x u_x; ∂_y u_x; ∂_x u_y; ∂_y u_y]`, one column per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    pub q: usize,
    pub values: DMatrix<f64>,
}

impl BasisTable {
    pub fn new(basis: &GalerkinBasis, grid: &QuadGrid) -> Self {
        let q = grid.len();
        let n = basis.len();
        let mut values = DMatrix::zeros(6 * q, n);
        for j in 0..n {
            let mut col = values.column_mut(j);
            for p in 0..q {
                let (x, y) = grid.point(p);
                let e = basis.eval_mode(j, x, y);
                col[p] = e.u[0];
                col[q + p] = e.u[1];
                col[2 * q + p] = e.grad[0][0];
                col[3 * q + p] = e.grad[0][1];
                col[4 * q + p] = e.grad[1][0];
                col[5 * q + p] = e.grad[1][1];
            }
        }
        Self { q, values }
    }
}

/// `w = (w₁(y,t), 0)` and `∂_y w₁` at the quadrature `y`-nodes for every time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ShearProfile {
    pub dt: f64,
    pub ny: usize,
    pub n_times: usize,
    pub w: Vec<f64>,
    pub w_y: Vec<f64>,
}

impl ShearProfile {
    pub fn from_heat(heat: &HeatSolution, ys: &[f64]) -> Self {
        let n_times = heat.t_grid.len();
        let mut w = Vec::with_capacity(n_times * ys.len());
        let mut w_y = Vec::with_capacity(n_times * ys.len());
        for k in 0..n_times {
            for y in ys {
                let p = heat.eval(*y, k);
                w.push(p.w1);
                w_y.push(p.w1_y);
            }
        }
        Self {
            dt: heat.t_grid.dt,
            ny: ys.len(),
            n_times,
            w,
            w_y,
        }
    }

    pub fn zeros(ys: &[f64], dt: f64, n_times: usize) -> Self {
        Self {
            dt,
            ny: ys.len(),
            n_times,
            w: vec![0.0; n_times * ys.len()],
            w_y: vec![0.0; n_times * ys.len()],
        }
    }

    pub fn at(&self, k: usize) -> (&[f64], &[f64]) {
        let r = k * self.ny..(k + 1) * self.ny;
        (&self.w[r.clone()], &self.w_y[r])
    }

    pub fn max_slope(&self, k: usize) -> f64 {
        self.at(k).1.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Assembled Galerkin operators on the straight periodic channel.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub basis: GalerkinBasis,
    pub grid: QuadGrid,
    pub table: BasisTable,
    /// Dirichlet form `A_ij = ∫∇e_i : ∇e_j` (mass matrix is the identity).
    pub a: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Squared-form Poincaré constant `C = 1/λ_min(A)`, `|z|² ≤ C‖z‖²`.
    pub poincare: f64,
    pub shear: ShearProfile,
}

impl OperatorSet {
    pub fn n(&self) -> usize {
        self.basis.len()
    }

    pub fn q(&self) -> usize {
        self.table.q
    }

    /// `[u_x; u_y; ∂_x u_x; ∂_y u_x; ∂_x u_y; ∂_y u_y]` of `Σ a_j e_j` at quadrature points.
    pub fn fields(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.table.values * a
    }

    /// `(g, e_k)` for a vector field sampled as `[g_x; g_y]` at quadrature points.
    pub fn project(&self, g: &DVector<f64>) -> DVector<f64> {
        let q = self.q();
        let mut weighted = g.clone();
        for p in 0..q {
            weighted[p] *= self.grid.weights[p];
            weighted[q + p] *= self.grid.weights[p];
        }
        self.table.values.rows(0, 2 * q).tr_mul(&weighted)
    }

    /// Coefficients of `B(u,u) + B₁(w)u + B₂(w)u`, i.e. `b(u,u,e_k) + b(w,u,e_k) + b(u,w,e_k)`,
    /// with `w` taken at time sample `k_w` (`None` drops the coupling).
    pub fn convection(&self, a: &DVector<f64>, k_w: Option<usize>) -> DVector<f64> {
        let q = self.q();
        let f = self.fields(a);
        let ny = self.grid.ys.len();
        let nx = self.grid.xs.len();
        let mut g = DVector::zeros(2 * q);
        let (w, wy) = match k_w {
            Some(k) => {
                let (w, wy) = self.shear.at(k);
                (Some(w), Some(wy))
            }
            None => (None, None),
        };
        for iy in 0..ny {
            let (wv, wyv) = match (w, wy) {
                (Some(w), Some(wy)) => (w[iy], wy[iy]),
                _ => (0.0, 0.0),
            };
            for ix in 0..nx {
                let p = iy * nx + ix;
                let (ux, uy) = (f[p], f[q + p]);
                let (dxux, dyux, dxuy, dyuy) = (f[2 * q + p], f[3 * q + p], f[4 * q + p], f[5 * q + p]);
                g[p] = ux * dxux + uy * dyux + wv * dxux + uy * wyv;
                g[q + p] = ux * dxuy + uy * dyuy + wv * dxuy;
            }
        }
        self.project(&g)
    }

    /// `b(u, v, φ)` by quadrature for coefficient vectors.
    pub fn trilinear(&self, u: &DVector<f64>, v: &DVector<f64>, phi: &DVector<f64>) -> f64 {
        let q = self.q();
        let (fu, fv, fp) = (self.fields(u), self.fields(v), self.fields(phi));
        (0..q)
            .map(|p| {
                let (ux, uy) = (fu[p], fu[q + p]);
                let cx = ux * fv[2 * q + p] + uy * fv[3 * q + p];
                let cy = ux * fv[4 * q + p] + uy * fv[5 * q + p];
                self.grid.weights[p] * (cx * fp[p] + cy * fp[q + p])
            })
            .sum()
    }

    /// `b(w, u, v)` with `w` at time sample `k`.
    pub fn trilinear_w_first(&self, k: usize, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let q = self.q();
        let nx = self.grid.xs.len();
        let (w, _) = self.shear.at(k);
        let (fu, fv) = (self.fields(u), self.fields(v));
        (0..q)
            .map(|p| {
                let wv = w[p / nx];
                self.grid.weights[p] * wv * (fu[2 * q + p] * fv[p] + fu[4 * q + p] * fv[q + p])
            })
            .sum()
    }

    /// `b(u, w, v) = ∫ u_y ∂_y w₁ v_x` with `w` at time sample `k`.
    pub fn trilinear_w_middle(&self, k: usize, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let q = self.q();
        let nx = self.grid.xs.len();
        let (_, wy) = self.shear.at(k);
        let (fu, fv) = (self.fields(u), self.fields(v));
        (0..q)
            .map(|p| self.grid.weights[p] * fu[q + p] * wy[p / nx] * fv[p])
            .sum()
    }

    /// `B1[k][j] = b(w, e_j, e_k)` and `B2[k][j] = b(e_j, w, e_k)` at time sample `k_w`.
    pub fn coupling_matrices(&self, k_w: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.q();
        let n = self.n();
        let nx = self.grid.xs.len();
        let (w, wy) = self.shear.at(k_w);
        let t = &self.table.values;
        let mut b1 = DMatrix::zeros(n, n);
        let mut b2 = DMatrix::zeros(n, n);
        for p in 0..q {
            let wq = self.grid.weights[p];
            let (wv, wyv) = (w[p / nx], wy[p / nx]);
            for j in 0..n {
                let (dxux, dxuy, uy_j) = (t[(2 * q + p, j)], t[(4 * q + p, j)], t[(q + p, j)]);
                for k in 0..n {
                    let (ux_k, uy_k) = (t[(p, k)], t[(q + p, k)]);
                    b1[(k, j)] += wq * wv * (dxux * ux_k + dxuy * uy_k);
                    b2[(k, j)] += wq * uy_j * wyv * ux_k;
                }
            }
        }
        (b1, b2)
    }

    /// Full tensor `b(e_i, e_j, e_k)` stored `(i·n + j)·n + k`.
    pub fn trilinear_tensor(&self) -> Vec<f64> {
        let q = self.q();
        let n = self.n();
        let t = &self.table.values;
        let vel = t.rows(0, 2 * q);
        let mut weighted = vel.clone_owned();
        for j in 0..n {
            for p in 0..q {
                weighted[(p, j)] *= self.grid.weights[p];
                weighted[(q + p, j)] *= self.grid.weights[p];
            }
        }
        let blocks: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                // (e_i · ∇) e_j sampled as [x; y] rows.
                let mut g = DMatrix::zeros(2 * q, n);
                for j in 0..n {
                    for p in 0..q {
                        let (ux, uy) = (t[(p, i)], t[(q + p, i)]);
                        g[(p, j)] = ux * t[(2 * q + p, j)] + uy * t[(3 * q + p, j)];
                        g[(q + p, j)] = ux * t[(4 * q + p, j)] + uy * t[(5 * q + p, j)];
                    }
                }
                let m = g.tr_mul(&weighted);
                let mut out = Vec::with_capacity(n * n);
                for j in 0..n {
                    for k in 0..n {
                        out.push(m[(j, k)]);
                    }
                }
                out
            })
            .collect();
        blocks.concat()
    }

    /// `‖φ‖⁴_{L⁴}` by quadrature.
    pub fn l4_norm4(&self, a: &DVector<f64>) -> f64 {
        let q = self.q();
        let f = self.fields(a);
        (0..q)
            .map(|p| {
                let s = f[p] * f[p] + f[q + p] * f[q + p];
                self.grid.weights[p] * s * s
            })
            .sum()
    }

    /// `‖φ‖² = aᵀAa`.
    pub fn dirichlet(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(&self.a * a))
    }

    /// `|φ|²` by quadrature (equal to `Σ a_j²` for an orthonormal basis).
    pub fn l2_quadrature(&self, a: &DVector<f64>) -> f64 {
        let q = self.q();
        let f = self.fields(a);
        (0..q)
            .map(|p| self.grid.weights[p] * (f[p] * f[p] + f[q + p] * f[q + p]))
            .sum()
    }

    /// `‖∇φ‖²` by quadrature.
    pub fn gradient_quadrature(&self, a: &DVector<f64>) -> f64 {
        let q = self.q();
        let f = self.fields(a);
        (0..q)
            .map(|p| {
                self.grid.weights[p]
                    * (2..6).map(|b| f[b * q + p] * f[b * q + p]).sum::<f64>()
            })
            .sum()
    }

    /// Norm of `B₂(w)` as a map `V → V′`: largest singular value of `A^{-1/2} B2 A^{-1/2}`.
    pub fn b2_operator_norm(&self, k_w: usize) -> Result<f64> {
        let (_, b2) = self.coupling_matrices(k_w);
        let chol = nalgebra::Cholesky::new(self.a.clone())
            .ok_or_else(|| Error::Numerical("Stokes matrix is not positive definite".into()))?;
        let l = chol.l();
        let x = l
            .solve_lower_triangular(&b2)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let y = l
            .solve_lower_triangular(&x.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let svd = y.svd(false, false);
        Ok(svd.singular_values.iter().fold(0.0, |m, v| m.max(*v)))
    }
}

/// Builds the Stokes matrix and quadrature tables, then self-tests the discrete
/// antisymmetry `b(u,u,u) = b(w,u,u) = 0`.
pub fn assemble_operators(
    basis: &GalerkinBasis,
    shear: Option<&HeatSolution>,
    y_nodes: Option<usize>,
) -> Result<OperatorSet> {
    if basis.is_empty() {
        return config("empty basis");
    }
    let grid = QuadGrid::for_basis(basis, y_nodes);
    if grid.ys.len() < 2 * basis.my + 7 {
        return Err(Error::Construction(format!(
            "{} y-nodes cannot integrate the quartic terms of My = {} exactly",
            grid.ys.len(),
            basis.my
        )));
    }
    let table = BasisTable::new(basis, &grid);
    let q = table.q;
    let n = basis.len();
    let grads = table.values.rows(2 * q, 4 * q);
    let mut weighted = grads.clone_owned();
    for j in 0..n {
        for b in 0..4 {
            for p in 0..q {
                weighted[(b * q + p, j)] *= grid.weights[p];
            }
        }
    }
    let mut a = grads.tr_mul(&weighted);
    a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    if !(eigenvalues[0] > 0.0) {
        return Err(Error::Numerical(format!(
            "Stokes matrix not positive definite (λ_min = {})",
            eigenvalues[0]
        )));
    }
    let shear = match shear {
        Some(h) => ShearProfile::from_heat(h, &grid.ys),
        None => ShearProfile::zeros(&grid.ys, 1.0, 1),
    };
    let ops = OperatorSet {
        basis: basis.clone(),
        grid,
        table,
        poincare: 1.0 / eigenvalues[0],
        eigenvalues,
        a,
        shear,
    };
    self_test(&ops)?;
    Ok(ops)
}

fn self_test(ops: &OperatorSet) -> Result<()> {
    let mut rng = stream_rng(0x5e1f, stream::SAMPLING, 0);
    let n = ops.n();
    for trial in 0..3 {
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scale = ops.l2_quadrature(&u).sqrt() * ops.dirichlet(&u) + f64::MIN_POSITIVE;
        let b = ops.trilinear(&u, &u, &u);
        let k = trial * (ops.shear.n_times - 1) / 2;
        let bw = ops.trilinear_w_first(k, &u, &u);
        let wscale = ops.shear.at(k).0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            * ops.l2_quadrature(&u).sqrt()
            * ops.dirichlet(&u).sqrt()
            + f64::MIN_POSITIVE;
        if b.abs() > 1e-10 * scale || bw.abs() > 1e-10 * wscale {
            return Err(Error::Construction(format!(
                "quadrature under-resolves the trilinear form: b(u,u,u) = {b:e}, b(w,u,u) = {bw:e}"
            )));
        }
    }
    Ok(())
}
