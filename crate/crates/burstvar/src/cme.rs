//! Stationary solve of the master equation truncated to
//! `{0..a_max} × {0..b_max}`.
//!
//! Transitions that would leave the grid are deleted together with their
//! diagonal share, so the truncated generator stays conservative. The flux
//! through deleted transitions is kept as `leak` and turned into the
//! reported `mass_defect`.
//!
//! States are grouped into levels of constant `a`. Between levels only the
//! scalar moves `F` (up) and `γ_A a` (down) exist, so the chain is a
//! level-dependent quasi-birth-death process and is solved exactly by linear
//! level reduction: `X_{a_max} = L_{a_max}`,
//! `X_{a-1} = L_{a-1} - γ_A a F X_a^{-1}`, `π_0 X_0 = 0`,
//! `π_a = -F π_{a-1} X_a^{-1}`.
//!
//! `−X_a` is an M-matrix with row sums `γ_A a`, so its inverse is formed by
//! elimination on off-diagonals and row sums only, and `π_0` by GTH state
//! reduction. No step subtracts, which keeps tiny probabilities accurate.
//! The result is checked against the sparse generator.

use std::io::Write;

use burstvar_core::numerics::poisson_pmf_table;
use burstvar_core::SystemParams;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CmeError {
    #[error("grid too small along {axis}: estimated mass beyond the grid {mass:e}")]
    GridTooSmall { axis: &'static str, mass: f64 },
    #[error("stationary solve did not converge: relative residual {residual:e}")]
    NonConverged { residual: f64 },
    #[error("grid of {states} states exceeds the cap of {cap}")]
    TooLarge { states: u64, cap: u64 },
    #[error(transparent)]
    Model(#[from] burstvar_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmeOptions {
    /// Fixed grid; `None` means sized from the analytics.
    pub a_max: Option<u64>,
    pub b_max: Option<u64>,
    /// Accepted `mass_defect`.
    pub mass_tol: f64,
    /// Accepted relative residual `‖πQ‖₁ / Σ π|q_ss|`.
    pub residual_tol: f64,
    /// Largest `(a_max+1)(b_max+1)`.
    pub max_states: u64,
    /// Largest `(a_max+1)(b_max+1)²`, the dense storage of the reduction.
    pub max_block_entries: u64,
    /// Times `b_max` may be doubled when the defect is too large.
    pub max_doublings: u32,
}

impl Default for CmeOptions {
    fn default() -> Self {
        Self {
            a_max: None,
            b_max: None,
            mass_tol: 1e-10,
            residual_tol: 1e-12,
            max_states: 4_000_000,
            max_block_entries: 20_000_000,
            max_doublings: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedCme {
    pub a_max: u64,
    pub b_max: u64,
    /// `π(a, b)` at index `a·(b_max+1) + b`.
    #[serde(skip)]
    pub stationary: Vec<f64>,
    pub mass_defect: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CmeMoments {
    pub mean_a: f64,
    pub var_a: f64,
    pub mean_b: f64,
    pub var_b: f64,
    pub cov_ab: f64,
}

/// Outgoing transitions of `(a, b)` retained on the grid, and the total
/// rate of the deleted ones.
fn transitions(
    params: &SystemParams,
    a_max: u64,
    b_max: u64,
    a: u64,
    b: u64,
    mut emit: impl FnMut(u64, u64, f64),
) -> f64 {
    let mut leak = 0.0;
    if a < a_max {
        emit(a + 1, b, params.f());
    } else {
        leak += params.f();
    }
    if a > 0 {
        emit(a - 1, b, params.gamma_a() * a as f64);
    }
    let r = params.rate().eval(a);
    if r > 0.0 {
        for (q, p) in params.burst().support() {
            if b + q <= b_max {
                emit(a, b + q, r * p);
            } else {
                leak += r * p;
            }
        }
    }
    if b > 0 {
        emit(a, b - 1, params.gamma_b() * b as f64);
    }
    leak
}

/// Truncated generator, rows indexed by the source state. Row sums are zero.
pub fn generator(params: &SystemParams, a_max: u64, b_max: u64) -> CsrMatrix<f64> {
    let nb = b_max + 1;
    let n = ((a_max + 1) * nb) as usize;
    let mut coo = CooMatrix::new(n, n);
    for a in 0..=a_max {
        for b in 0..=b_max {
            let s = (a * nb + b) as usize;
            let mut out = 0.0;
            transitions(params, a_max, b_max, a, b, |a2, b2, rate| {
                coo.push(s, (a2 * nb + b2) as usize, rate);
                out += rate;
            });
            coo.push(s, s, -out);
        }
    }
    CsrMatrix::from(&coo)
}

/// `a_max = λ + 10√λ + 10`, `b_max = max(E[B] + 12·sqrt(bound), 3·max Q)`.
pub fn default_grid(params: &SystemParams, rel_tol: f64) -> Result<(u64, u64), CmeError> {
    let lambda = params.lambda().get();
    let a_max = (lambda + 10.0 * lambda.sqrt() + 10.0).ceil() as u64;
    let mean_b = burstvar_core::analytics::mean_b(params, rel_tol)?;
    let bound = burstvar_core::analytics::variance_bound(params, rel_tol)?;
    let b_max =
        ((mean_b + 12.0 * bound.max(0.0).sqrt()).ceil() as u64).max(3 * params.burst().max_q());
    Ok((a_max, b_max))
}

fn check_size(a_max: u64, b_max: u64, opts: &CmeOptions) -> Result<(), CmeError> {
    let (na, nb) = (a_max + 1, b_max + 1);
    let states = na.saturating_mul(nb);
    if states > opts.max_states {
        return Err(CmeError::TooLarge {
            states,
            cap: opts.max_states,
        });
    }
    if states.saturating_mul(nb) > opts.max_block_entries {
        return Err(CmeError::TooLarge {
            states,
            cap: opts.max_block_entries / nb,
        });
    }
    Ok(())
}

/// Solves on a fixed grid.
pub fn solve_stationary(
    params: &SystemParams,
    a_max: u64,
    b_max: u64,
    opts: &CmeOptions,
) -> Result<TruncatedCme, CmeError> {
    check_size(a_max, b_max, opts)?;
    let lambda = params.lambda().get();
    let pmf = poisson_pmf_table(lambda, a_max);
    let a_tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    if a_tail > 1e-10 {
        return Err(CmeError::GridTooSmall {
            axis: "A",
            mass: a_tail,
        });
    }
    let stationary = reduce(params, a_max, b_max)?;
    let cme = finish(params, a_max, b_max, stationary, opts)?;
    if cme.mass_defect > opts.mass_tol {
        return Err(CmeError::GridTooSmall {
            axis: "B",
            mass: cme.mass_defect,
        });
    }
    Ok(cme)
}

/// Solves on the configured or default grid, doubling `b_max` while the
/// mass defect exceeds the tolerance.
pub fn solve_auto(
    params: &SystemParams,
    rel_tol: f64,
    opts: &CmeOptions,
) -> Result<TruncatedCme, CmeError> {
    let (a_def, b_def) = default_grid(params, rel_tol)?;
    let a_max = opts.a_max.unwrap_or(a_def);
    let mut b_max = opts.b_max.unwrap_or(b_def);
    let mut tries = 0;
    loop {
        match solve_stationary(params, a_max, b_max, opts) {
            Err(CmeError::GridTooSmall { axis: "B", .. }) if tries < opts.max_doublings => {
                b_max = 2 * b_max + 1;
                tries += 1;
            }
            other => return other,
        }
    }
}

/// Within-level off-diagonal rates of level `a`, row-major `nb × nb`, zero
/// diagonal.
fn level_rates(params: &SystemParams, a_max: u64, b_max: u64, a: u64) -> Vec<f64> {
    let nb = (b_max + 1) as usize;
    let mut m = vec![0.0; nb * nb];
    for b in 0..=b_max {
        transitions(params, a_max, b_max, a, b, |a2, b2, rate| {
            if a2 == a && b2 != b {
                m[b as usize * nb + b2 as usize] += rate;
            }
        });
    }
    m
}

/// Inverse of the M-matrix `A = diag(excess + Σ_j off_ij) - off`.
///
/// Elimination carries the row excesses instead of the diagonal, so every
/// update adds terms of one sign and the (nonnegative) inverse is accurate
/// entrywise. `off` is consumed; its diagonal is ignored.
fn m_matrix_inverse(mut off: Vec<f64>, mut excess: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let d = excess[k] + (k + 1..n).map(|j| off[k * n + j]).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        diag[k] = d;
        for i in k + 1..n {
            let l = off[i * n + k] / d;
            if l == 0.0 {
                continue;
            }
            off[i * n + k] = l;
            for j in k + 1..n {
                if j != i {
                    off[i * n + j] += l * off[k * n + j];
                }
            }
            excess[i] += l * excess[k];
        }
    }
    // A = L U with L unit lower (entries -off[i][j], j < i) and U upper
    // (diagonal `diag`, entries -off[i][j], j > i)
    let mut inv = vec![0.0; n * n];
    let mut y = vec![0.0; n];
    for c in 0..n {
        y.iter_mut().for_each(|v| *v = 0.0);
        y[c] = 1.0;
        for i in c + 1..n {
            let mut acc = 0.0;
            for j in c..i {
                acc += off[i * n + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc += off[i * n + j] * inv[j * n + c];
            }
            inv[i * n + c] = acc / diag[i];
        }
    }
    Some(inv)
}

/// Stationary vector of the conservative generator with off-diagonal rates
/// `off`, by Grassmann-Taksar-Heyman state reduction.
fn gth_stationary(mut off: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for k in (1..n).rev() {
        let d: f64 = (0..k).map(|j| off[k * n + j]).sum();
        if !(d > 0.0) {
            return None;
        }
        for i in 0..k {
            let w = off[i * n + k] / d;
            if w == 0.0 {
                continue;
            }
            for j in 0..k {
                if j != i {
                    off[i * n + j] += w * off[k * n + j];
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let d: f64 = (0..k).map(|j| off[k * n + j]).sum();
        pi[k] = (0..k).map(|i| pi[i] * off[i * n + k]).sum::<f64>() / d;
    }
    Some(pi)
}

fn singular() -> CmeError {
    CmeError::NonConverged {
        residual: f64::INFINITY,
    }
}

/// `−X_a` has off-diagonals `L_a + γ_A (a+1) F N_{a+1}` with
/// `N = (−X)^{-1} ≥ 0`, and row sums exactly `γ_A a`.
fn reduce(params: &SystemParams, a_max: u64, b_max: u64) -> Result<Vec<f64>, CmeError> {
    let nb = (b_max + 1) as usize;
    let f = params.f();
    let ga = params.gamma_a();
    // inverses[a-1] = N_a for a = 1..=a_max
    let mut inverses: Vec<Vec<f64>> = Vec::with_capacity(a_max as usize);
    let mut off = level_rates(params, a_max, b_max, a_max);
    for a in (1..=a_max).rev() {
        let excess = vec![ga * a as f64; nb];
        let inv = m_matrix_inverse(off, excess, nb).ok_or_else(singular)?;
        off = level_rates(params, a_max, b_max, a - 1);
        let c = ga * a as f64 * f;
        for (o, v) in off.iter_mut().zip(&inv) {
            *o += c * v;
        }
        for b in 0..nb {
            off[b * nb + b] = 0.0;
        }
        inverses.push(inv);
    }
    inverses.reverse();
    let mut level = gth_stationary(off, nb).ok_or_else(singular)?;
    let mut pi = Vec::with_capacity((a_max as usize + 1) * nb);
    pi.extend_from_slice(&level);
    let mut next = vec![0.0; nb];
    for inv in &inverses {
        // π_a = F π_{a-1} N_a
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, p) in level.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let row = &inv[i * nb..(i + 1) * nb];
            for (n, r) in next.iter_mut().zip(row) {
                *n += f * p * r;
            }
        }
        std::mem::swap(&mut level, &mut next);
        pi.extend_from_slice(&level);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

fn finish(
    params: &SystemParams,
    a_max: u64,
    b_max: u64,
    stationary: Vec<f64>,
    opts: &CmeOptions,
) -> Result<TruncatedCme, CmeError> {
    let q = generator(params, a_max, b_max);
    let n = stationary.len();
    let mut flow = vec![0.0; n];
    let mut scale = 0.0;
    for (row, p) in q.row_iter().zip(&stationary) {
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            flow[*j] += p * v;
        }
    }
    for (s, p) in stationary.iter().enumerate() {
        let diag = q.get_entry(s, s).map(|e| e.into_value()).unwrap_or(0.0);
        scale += p * diag.abs();
    }
    let residual = if scale > 0.0 {
        flow.iter().map(|v| v.abs()).sum::<f64>() / scale
    } else {
        0.0
    };
    if !(residual <= opts.residual_tol) {
        return Err(CmeError::NonConverged { residual });
    }
    let nb = b_max + 1;
    let mut leak_flux = 0.0;
    for a in 0..=a_max {
        for b in 0..=b_max {
            let p = stationary[(a * nb + b) as usize];
            if p > 0.0 {
                leak_flux += p * transitions(params, a_max, b_max, a, b, |_, _, _| {});
            }
        }
    }
    let mass_defect = leak_flux / params.gamma_a().min(params.gamma_b());
    Ok(TruncatedCme {
        a_max,
        b_max,
        stationary,
        mass_defect,
        residual,
    })
}

impl TruncatedCme {
    pub fn prob(&self, a: u64, b: u64) -> f64 {
        if a > self.a_max || b > self.b_max {
            return 0.0;
        }
        self.stationary[(a * (self.b_max + 1) + b) as usize]
    }

    fn states(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        let nb = self.b_max + 1;
        self.stationary
            .iter()
            .enumerate()
            .map(move |(s, p)| (s as u64 / nb, s as u64 % nb, *p))
    }

    pub fn a_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.a_max as usize + 1];
        for (a, _, p) in self.states() {
            m[a as usize] += p;
        }
        m
    }

    pub fn moments(&self) -> CmeMoments {
        let (mut ma, mut mb) = (0.0, 0.0);
        for (a, b, p) in self.states() {
            ma += a as f64 * p;
            mb += b as f64 * p;
        }
        let (mut va, mut vb, mut c) = (0.0, 0.0, 0.0);
        for (a, b, p) in self.states() {
            let (da, db) = (a as f64 - ma, b as f64 - mb);
            va += da * da * p;
            vb += db * db * p;
            c += da * db * p;
        }
        CmeMoments {
            mean_a: ma,
            var_a: va,
            mean_b: mb,
            var_b: vb,
            cov_ab: c,
        }
    }

    /// CSV `a,b,probability` over every grid state.
    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["a", "b", "probability"])?;
        for (a, b, p) in self.states() {
            out.write_record([a.to_string(), b.to_string(), p.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
