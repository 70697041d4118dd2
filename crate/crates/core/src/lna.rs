//! Linear-noise approximation: the stationary covariance of `(A, B)` solves
//! `PΣ + ΣPᵀ + D = 0` with `P` the drift Jacobian and `D` the diffusion matrix
//! at the deterministic fixed point.

use crate::analytics::SystemParams;
use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

/// Label recorded in reports for the nonlinear linearization used here.
pub const CONVENTION: &str =
    "linearized at a*=F/gamma_A; P21=E[Q]R'(a*); D22=E[Q^2]R(a*)+gamma_B b*";

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LnaSystem {
    /// `P`, units 1/time.
    pub drift: Mat2,
    /// `D`, units counts²/time.
    pub diffusion: Mat2,
    /// `(a*, b*)`.
    pub fixed_point: (f64, f64),
}

impl LnaSystem {
    /// Linearizes about `a* = F/γ_A`. The `A` dynamics are autonomous, so no
    /// self-consistent coupling with `b*` is needed.
    pub fn build(params: &SystemParams) -> Result<Self> {
        let a_star = params.lambda().get();
        let rate = params.rate();
        let r = rate.eval_real(a_star)?;
        let dr = rate.derivative(a_star)?;
        let q1 = params.burst().mean();
        let q2 = params.burst().second_moment();
        let (ga, gb) = (params.gamma_a(), params.gamma_b());
        let b_star = q1 * r / gb;
        Ok(Self {
            drift: [[-ga, 0.0], [q1 * dr, -gb]],
            diffusion: [[params.f() + ga * a_star, 0.0], [0.0, q2 * r + gb * b_star]],
            fixed_point: (a_star, b_star),
        })
    }

    pub fn solve(&self) -> Result<Mat2> {
        lyapunov_solve_2x2(&self.drift, &self.diffusion)
    }
}

pub fn is_hurwitz(p: &Mat2) -> bool {
    let tr = p[0][0] + p[1][1];
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    tr < 0.0 && det > 0.0
}

/// Symmetric `Σ` with `PΣ + ΣPᵀ + D = 0` for Hurwitz `P` and symmetric `D`.
///
/// Lower-triangular `P` (the case built here) is solved by forward
/// substitution; otherwise the 3×3 system in `(Σ11, Σ12, Σ22)` is solved by
/// Cramer's rule.
pub fn lyapunov_solve_2x2(p: &Mat2, d: &Mat2) -> Result<Mat2> {
    if !is_hurwitz(p) {
        return Err(Error::NotHurwitz);
    }
    let (s11, s12, s22) = if p[0][1] == 0.0 {
        let s11 = -d[0][0] / (2.0 * p[0][0]);
        let s12 = -(p[1][0] * s11 + d[0][1]) / (p[0][0] + p[1][1]);
        let s22 = -(2.0 * p[1][0] * s12 + d[1][1]) / (2.0 * p[1][1]);
        (s11, s12, s22)
    } else {
        let m = [
            [2.0 * p[0][0], 2.0 * p[0][1], 0.0],
            [p[1][0], p[0][0] + p[1][1], p[0][1]],
            [0.0, 2.0 * p[1][0], 2.0 * p[1][1]],
        ];
        let rhs = [-d[0][0], -d[0][1], -d[1][1]];
        let det = det3(&m);
        let col = |j: usize| {
            let mut mj = m;
            for (row, r) in mj.iter_mut().zip(rhs) {
                row[j] = r;
            }
            det3(&mj) / det
        };
        (col(0), col(1), col(2))
    };
    Ok([[s11, s12], [s12, s22]])
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `max |PΣ + ΣPᵀ + D|`.
pub fn residual_max(p: &Mat2, sigma: &Mat2, d: &Mat2) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut v = d[i][j];
            for k in 0..2 {
                v += p[i][k] * sigma[k][j] + sigma[i][k] * p[j][k];
            }
            worst = worst.max(libm::fabs(v));
        }
    }
    worst
}
