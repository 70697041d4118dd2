//! Fast invariant checks for `burstvar validate`.

use burstvar_core::analytics::{
    correlation_lower_bound, covariance_ab, variance_bound, variance_linear_exact, variance_series,
};
use burstvar_core::charlier::{psi, sigma_by_difference, sigma_by_projection};
use burstvar_core::lna::{residual_max, LnaSystem};
use burstvar_core::numerics::{factorial, poisson_inner_product, Growth};
use burstvar_core::{BurstDistribution, BurstKind, PoissonMean, RateFunction, SystemParams};

use crate::cme::{solve_auto, CmeOptions};
use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn series_monotone(p: &SystemParams, tol: f64) -> Result<String, String> {
    let bound = variance_bound(p, tol).map_err(|e| e.to_string())?;
    let mut prev = bound;
    for n in 1..=20 {
        let v = variance_series(p, n, tol).map_err(|e| e.to_string())?.value;
        if v < prev * (1.0 - 1e-13) {
            return Err(format!("order {n}: {v} < {prev}"));
        }
        prev = v;
    }
    Ok(format!("bound {bound:.6e} <= series {prev:.6e}"))
}

fn correlation_range(p: &SystemParams, tol: f64) -> Result<String, String> {
    match correlation_lower_bound(p, tol) {
        Ok(c) => ensure((-1.0..=1.0).contains(&c), format!("{c:.6}")),
        Err(burstvar_core::Error::DegenerateVariance) => Ok("bound is zero".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn lna_residual(p: &SystemParams) -> Result<String, String> {
    let sys = match LnaSystem::build(p) {
        Ok(s) => s,
        Err(burstvar_core::Error::NotDifferentiable) => return Ok("rate has no real extension".into()),
        Err(e) => return Err(e.to_string()),
    };
    let s = sys.solve().map_err(|e| e.to_string())?;
    let d_max = sys.diffusion.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let r = residual_max(&sys.drift, &s, &sys.diffusion);
    ensure(r <= 1e-12 * d_max && rel(s[0][0], p.lambda().get()) <= 1e-14, format!("residual {r:.2e}"))
}

fn orthogonality(lambda: f64) -> Result<String, String> {
    let lam = PoissonMean::new(lambda).map_err(|e| e.to_string())?;
    let g = |n: usize| Growth::Polynomial { coeff: 1.0, degree: n as u32, shift: lambda.max(1.0) };
    let mut worst: f64 = 0.0;
    for n in 0..=8 {
        for m in 0..=n {
            let e = poisson_inner_product(|a| psi(n, a, lambda), |a| psi(m, a, lambda), g(n).times(g(m)), lam, 1e-25)
                .map_err(|e| e.to_string())?
                .value;
            let err = if n == m {
                let want = factorial(n as u64) * lambda.powi(n as i32);
                rel(e, want) / 1e-8
            } else {
                e.abs() / 1e-10
            };
            worst = worst.max(err);
        }
    }
    ensure(worst <= 1.0, format!("λ={lambda}: worst error {worst:.3} of tolerance"))
}

fn route_agreement() -> Result<String, String> {
    let rate = RateFunction::Polynomial { coeffs: vec![0.3, 1.1, 0.2, 0.05] };
    let mut worst: f64 = 0.0;
    for lambda in [1.0, 5.0] {
        let lam = PoissonMean::new(lambda).map_err(|e| e.to_string())?;
        for n in 0..=5 {
            let d = sigma_by_difference(|a| rate.eval(a), n, lambda, 12).map_err(|e| e.to_string())?.value;
            let p = sigma_by_projection(&rate, n, lam, 1e-12).map_err(|e| e.to_string())?;
            let scale = d.abs().max(p.abs());
            worst = worst.max(if scale > 1e-10 { (d - p).abs() / scale / 1e-8 } else { (d - p).abs() / 1e-10 });
        }
    }
    ensure(worst <= 1.0, format!("worst error {worst:.3} of tolerance"))
}

fn linear_exactness(burst: BurstKind) -> Result<String, String> {
    let q = BurstDistribution::new(burst).map_err(|e| e.to_string())?;
    let p = SystemParams::new(2.0, 0.5, 1.5, RateFunction::Linear { rc: 0.7 }, q).map_err(|e| e.to_string())?;
    let b = variance_bound(&p, 1e-12).map_err(|e| e.to_string())?;
    let x = variance_linear_exact(&p).map_err(|e| e.to_string())?;
    let l = LnaSystem::build(&p).and_then(|s| s.solve()).map_err(|e| e.to_string())?[1][1];
    let worst = rel(b, x).max(rel(l, x));
    ensure(worst <= 1e-10, format!("bound {b:.12e}, lyapunov {l:.12e}"))
}

fn cme_sandwich() -> Result<String, String> {
    let q = BurstDistribution::new(BurstKind::TruncGeometric { p: 0.5, m_n: 21 }).map_err(|e| e.to_string())?;
    let rate = RateFunction::hill(2.0, 5.0).map_err(|e| e.to_string())?;
    let p = SystemParams::new(1.0, 0.2, 0.5, rate, q).map_err(|e| e.to_string())?;
    let cme = solve_auto(&p, 1e-12, &CmeOptions::default()).map_err(|e| e.to_string())?;
    let m = cme.moments();
    let b = variance_bound(&p, 1e-12).map_err(|e| e.to_string())?;
    let s = variance_series(&p, 20, 1e-12).map_err(|e| e.to_string())?.value;
    let c = covariance_ab(&p, 1e-12).map_err(|e| e.to_string())?;
    ensure(
        b < m.var_b && rel(s, m.var_b) <= 1e-2 && rel(c, m.cov_ab) <= 1e-4,
        format!("bound {b:.6} < var {:.6}, series {s:.6}", m.var_b),
    )
}

pub fn run_checks(cfg: &RunConfig) -> Vec<Check> {
    let point = cfg.params(cfg.axes.report_lambda, cfg.system.gamma_b);
    let mut out = Vec::new();
    match &point {
        Ok(p) => {
            out.push(check("series is monotone above the bound", series_monotone(p, cfg.rel_tol)));
            out.push(check("correlation bound lies in [-1, 1]", correlation_range(p, cfg.rel_tol)));
            out.push(check("LNA Lyapunov residual", lna_residual(p)));
        }
        Err(e) => out.push(check("configured point", Err(e.to_string()))),
    }
    for lambda in [0.5, 2.0, 10.0] {
        out.push(check("psi orthogonality", orthogonality(lambda)));
    }
    out.push(check("sigma routes agree", route_agreement()));
    out.push(check("linear rate is exact", linear_exactness(cfg.system.burst)));
    out.push(check("master-equation sandwich", cme_sandwich()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        let checks = run_checks(&RunConfig::default());
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(checks.len(), 9);
    }
}
