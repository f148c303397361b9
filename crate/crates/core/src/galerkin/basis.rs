use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::quadrature::gauss_legendre;

/// Streamwise factor of a stream function: `1`, `cos(κx)` or `sin(κx)`, `κ = 2πk/L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum XFun {
    Const,
    Cos(usize),
    Sin(usize),
}

impl XFun {
    /// `X`, `X′`, `X″` at `x`.
    pub fn eval(&self, x: f64, length: f64) -> [f64; 3] {
        match *self {
            XFun::Const => [1.0, 0.0, 0.0],
            XFun::Cos(k) => {
                let w = 2.0 * PI * k as f64 / length;
                let (s, c) = (w * x).sin_cos();
                [c, -w * s, -w * w * c]
            }
            XFun::Sin(k) => {
                let w = 2.0 * PI * k as f64 / length;
                let (s, c) = (w * x).sin_cos();
                [s, w * c, -w * w * s]
            }
        }
    }

    /// `∫₀ᴸ X²` and `∫₀ᴸ X′²`.
    fn norms(&self, length: f64) -> (f64, f64) {
        match *self {
            XFun::Const => (length, 0.0),
            XFun::Cos(k) | XFun::Sin(k) => {
                let w = 2.0 * PI * k as f64 / length;
                (0.5 * length, 0.5 * length * w * w)
            }
        }
    }
}

/// Clamped wall-normal profile `s_m(y) = y²(1−y)² P_m(2y−1)` with two derivatives.
pub fn wall_profile(m: usize, y: f64) -> [f64; 3] {
    let p = y - y * y;
    let dp = 1.0 - 2.0 * y;
    let q = p * p;
    let q1 = 2.0 * p * dp;
    let q2 = 2.0 * dp * dp - 4.0 * p;
    let x = 2.0 * y - 1.0;
    // Legendre P_m and its first two derivatives in x.
    let (mut l0, mut l1) = ([1.0, 0.0, 0.0], [x, 1.0, 0.0]);
    let l = if m == 0 {
        l0
    } else {
        for j in 1..m {
            let jf = j as f64;
            let mut next = [0.0; 3];
            for d in 0..3 {
                let lower = if d > 0 { d as f64 * l1[d - 1] } else { 0.0 };
                next[d] = ((2.0 * jf + 1.0) * (x * l1[d] + lower) - jf * l0[d]) / (jf + 1.0);
            }
            l0 = l1;
            l1 = next;
        }
        l1
    };
    let (lv, ld, ldd) = (l[0], 2.0 * l[1], 4.0 * l[2]);
    [
        q * lv,
        q1 * lv + q * ld,
        q2 * lv + 2.0 * q1 * ld + q * ldd,
    ]
}

/// One orthonormal basis velocity `e = curl(X(x)·S(y))`, `S = Σ_m c_m s_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub xfun: XFun,
    pub coeffs: Vec<f64>,
}

/// Velocity and gradient of one field at a point; `grad[i][j] = ∂_j u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocitySample {
    pub u: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinBasis {
    pub kx: usize,
    pub my: usize,
    pub length: f64,
    pub modes: Vec<Mode>,
}

impl GalerkinBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `S`, `S′`, `S″` of mode `j` at `y`.
    fn profile(&self, j: usize, y: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (m, c) in self.modes[j].coeffs.iter().enumerate() {
            let s = wall_profile(m, y);
            for d in 0..3 {
                out[d] += c * s[d];
            }
        }
        out
    }

    /// Velocity and gradient of mode `j`: `e = (X S′, −X′ S)`.
    pub fn eval_mode(&self, j: usize, x: f64, y: f64) -> VelocitySample {
        let [xv, x1, x2] = self.modes[j].xfun.eval(x, self.length);
        let [s, s1, s2] = self.profile(j, y);
        VelocitySample {
            u: [xv * s1, -x1 * s],
            grad: [[x1 * s1, xv * s2], [-x2 * s, -x1 * s1]],
        }
    }

    /// `Σ a_j e_j` at `(x, y)`.
    pub fn eval(&self, a: &DVector<f64>, x: f64, y: f64) -> VelocitySample {
        let mut out = VelocitySample::default();
        for j in 0..self.len() {
            if a[j] == 0.0 {
                continue;
            }
            let e = self.eval_mode(j, x, y);
            for i in 0..2 {
                out.u[i] += a[j] * e.u[i];
                for d in 0..2 {
                    out.grad[i][d] += a[j] * e.grad[i][d];
                }
            }
        }
        out
    }
}

/// Divergence-free basis on the periodic unit-width channel of period `length`:
/// `Kx` cosine and sine pairs plus the streamwise-constant block, each with `My`
/// wall-normal profiles, orthonormalized in `L²` block by block and ordered by
/// increasing Dirichlet energy.
pub fn build_basis(kx: usize, my: usize, length: f64) -> Result<GalerkinBasis> {
    if my == 0 {
        return config("basis needs at least one wall-normal mode (My ≥ 1)");
    }
    if !(length.is_finite() && length > 0.0) {
        return config(format!("period must be positive, got {length}"));
    }
    let rule = gauss_legendre(my + 6, 0.0, 1.0);
    let table: Vec<Vec<[f64; 3]>> = (0..my)
        .map(|m| rule.nodes.iter().map(|y| wall_profile(m, *y)).collect())
        .collect();
    let mut xfuns = vec![XFun::Const];
    for k in 1..=kx {
        xfuns.push(XFun::Cos(k));
        xfuns.push(XFun::Sin(k));
    }
    let mut modes = Vec::with_capacity(xfuns.len() * my);
    for xf in &xfuns {
        let (c1, c2) = xf.norms(length);
        let gram = |coef: &DMatrix<f64>| -> DMatrix<f64> {
            // Gram matrix of the current combinations (columns of coef).
            let cols = coef.ncols();
            let mut g = DMatrix::zeros(cols, cols);
            for (q, w) in rule.weights.iter().enumerate() {
                let mut s = DVector::zeros(cols);
                let mut s1 = DVector::zeros(cols);
                for a in 0..cols {
                    for m in 0..my {
                        s[a] += coef[(m, a)] * table[m][q][0];
                        s1[a] += coef[(m, a)] * table[m][q][1];
                    }
                }
                g += (c1 * &s1 * s1.transpose() + c2 * &s * s.transpose()) * *w;
            }
            g
        };
        let mut coef = DMatrix::<f64>::identity(my, my);
        for _pass in 0..2 {
            let g = gram(&coef);
            let chol = nalgebra::Cholesky::new(g).ok_or_else(|| {
                Error::Construction(format!(
                    "Gram matrix of the wall-normal profiles is numerically singular for My = {my}; use a smaller My"
                ))
            })?;
            let linv = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(my, my))
                .ok_or_else(|| Error::Construction("triangular inverse failed".into()))?;
            coef = &coef * linv.transpose();
        }
        for a in 0..my {
            modes.push(Mode {
                xfun: *xf,
                coeffs: coef.column(a).iter().copied().collect(),
            });
        }
    }
    let mut basis = GalerkinBasis {
        kx,
        my,
        length,
        modes,
    };
    // Order by Dirichlet energy; stable sort keeps ties deterministic.
    let energy: Vec<f64> = (0..basis.len())
        .map(|j| {
            let (c1, c2) = basis.modes[j].xfun.norms(length);
            let w2 = if c1 > 0.0 { c2 / c1 } else { 0.0 };
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(y, w)| {
                    let [s, s1, s2] = basis.profile(j, *y);
                    // |∇e|² integrated in x: X′²S′² + X²S″² + X″²S² + X′²S′².
                    w * c1 * (2.0 * w2 * s1 * s1 + s2 * s2 + w2 * w2 * s * s)
                })
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|a, b| energy[*a].total_cmp(&energy[*b]));
    basis.modes = order.iter().map(|j| basis.modes[*j].clone()).collect();
    Ok(basis)
}
