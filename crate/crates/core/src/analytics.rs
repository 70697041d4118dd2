//! Closed-form stationary moments of `B`.
//!
//! With `λ = F/γ_A`, `σ_n` the Charlier coefficients of `R` about `λ` and
//! `w_n = σ_n² n! λ^n`, the stationary variance of `B` is
//!
//! ```text
//! var(B) = [(E[Q²] - E[Q]) σ_0 + 2 E[Q]² Σ_{n>=1} w_n / (nγ_A + γ_B)] / (2γ_B)
//!          + E[Q] σ_0 / γ_B
//! ```
//!
//! Every summand is nonnegative, so keeping only `n = 1` gives a lower bound.
//! For linear `R` all `σ_n` with `n >= 2` vanish and the bound is exact.

use alloc::string::String;

use crate::burst::BurstDistribution;
use crate::charlier::{self, CharlierExpansion, Projections};
use crate::error::{Error, Result};
use crate::lna;
use crate::numerics::PoissonMean;
use crate::rate::RateFunction;

/// Parameters of the full reaction system. `λ = F/γ_A` is always derived,
/// never supplied.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemParams {
    f: f64,
    gamma_a: f64,
    gamma_b: f64,
    rate: RateFunction,
    burst: BurstDistribution,
}

impl SystemParams {
    pub fn new(
        f: f64,
        gamma_a: f64,
        gamma_b: f64,
        rate: RateFunction,
        burst: BurstDistribution,
    ) -> Result<Self> {
        for (field, v) in [("F", f), ("gamma_a", gamma_a), ("gamma_b", gamma_b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam {
                    field,
                    reason: "must be finite and > 0",
                });
            }
        }
        rate.validate()?;
        let lambda = f / gamma_a;
        let a_check = libm::ceil(lambda + 10.0 * libm::sqrt(lambda) + 10.0) as u64;
        rate.check_nonnegative(a_check)?;
        Ok(Self {
            f,
            gamma_a,
            gamma_b,
            rate,
            burst,
        })
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn gamma_a(&self) -> f64 {
        self.gamma_a
    }

    pub fn gamma_b(&self) -> f64 {
        self.gamma_b
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn burst(&self) -> &BurstDistribution {
        &self.burst
    }

    pub fn lambda(&self) -> PoissonMean {
        PoissonMean::new(self.f / self.gamma_a).expect("validated rates give a positive mean")
    }

    fn project(&self, n_max: usize, rel_tol: f64) -> Result<Projections> {
        charlier::project(
            |a| self.rate.eval(a),
            self.rate.growth(),
            self.lambda(),
            n_max,
            rel_tol,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentOptions {
    /// Maximum Charlier order for the series variance.
    pub order: usize,
    pub rel_tol: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            order: charlier::DEFAULT_ORDER,
            rel_tol: 1e-12,
        }
    }
}

/// `(σ_0, σ_1)`.
pub fn sigma01(params: &SystemParams, rel_tol: f64) -> Result<(f64, f64)> {
    let p = params.project(1, rel_tol)?;
    Ok((p.sigma(0), p.sigma(1)))
}

/// `E[B] = E[Q] σ_0 / γ_B`.
pub fn mean_b(params: &SystemParams, rel_tol: f64) -> Result<f64> {
    let (s0, _) = sigma01(params, rel_tol)?;
    Ok(params.burst.mean() * s0 / params.gamma_b)
}

fn bound_from_sigmas(params: &SystemParams, s0: f64, s1: f64) -> f64 {
    let (ga, gb) = (params.gamma_a, params.gamma_b);
    let (q1, q2) = (params.burst.mean(), params.burst.second_moment());
    let lambda = params.lambda().get();
    (s0 * (ga + gb) * (q2 + q1) + 2.0 * s1 * s1 * q1 * q1 * lambda) / (2.0 * gb * (gb + ga))
}

/// Lower bound on `var(B)` from `σ_0` and `σ_1` alone.
pub fn variance_bound(params: &SystemParams, rel_tol: f64) -> Result<f64> {
    let (s0, s1) = sigma01(params, rel_tol)?;
    Ok(bound_from_sigmas(params, s0, s1))
}

/// Series variance truncated at some order.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeriesVariance {
    pub value: f64,
    pub order: usize,
    /// Contribution of the last retained order to `value`.
    pub last_term: f64,
}

/// `var(B)` with the Charlier sum cut at `n = order`.
pub fn variance_series(
    params: &SystemParams,
    order: usize,
    rel_tol: f64,
) -> Result<SeriesVariance> {
    if order == 0 {
        return Err(Error::InvalidParam {
            field: "order",
            reason: "must be >= 1",
        });
    }
    let p = params.project(order, rel_tol)?;
    let weights = (0..=order).map(|n| p.weight(n));
    Ok(series_from_weights(params, p.sigma(0), weights))
}

/// Series variance from `σ_0` and the weights `w_n = σ_n² n! λ^n`, `n >= 0`
/// (`w_0` is ignored).
fn series_from_weights(
    params: &SystemParams,
    s0: f64,
    weights: impl Iterator<Item = f64>,
) -> SeriesVariance {
    let (ga, gb) = (params.gamma_a, params.gamma_b);
    let (q1, q2) = (params.burst.mean(), params.burst.second_moment());
    let base = (q2 - q1) * s0 / (2.0 * gb) + q1 * s0 / gb;
    let mut sum = crate::numerics::CompensatedSum::default();
    let mut last_term = 0.0;
    let mut order = 0;
    for (n, w) in weights.enumerate().skip(1) {
        let term = q1 * q1 * w / (gb * (n as f64 * ga + gb));
        sum.add(term);
        last_term = term;
        order = n;
    }
    SeriesVariance {
        value: base + sum.value(),
        order,
        last_term,
    }
}

/// Series variance of a precomputed expansion (centre must be `λ`).
pub fn variance_series_from(
    params: &SystemParams,
    expansion: &CharlierExpansion,
) -> SeriesVariance {
    let lambda = expansion.r();
    let mut norm = 1.0;
    let weights = expansion.coeffs().iter().enumerate().map(move |(n, s)| {
        if n > 0 {
            norm *= n as f64 * lambda;
        }
        s * s * norm
    });
    series_from_weights(params, expansion.coeffs()[0], weights)
}

/// `cov(A, B) = E[Q] σ_1 λ / (γ_A + γ_B)`; exact for any `R`.
pub fn covariance_ab(params: &SystemParams, rel_tol: f64) -> Result<f64> {
    let (_, s1) = sigma01(params, rel_tol)?;
    Ok(covariance_from_sigma1(params, s1))
}

fn covariance_from_sigma1(params: &SystemParams, s1: f64) -> f64 {
    params.burst.mean() * s1 * params.lambda().get() / (params.gamma_a + params.gamma_b)
}

/// `cov(A,B) / (√λ √bound)`. A lower bound on the correlation when `σ_1 >= 0`.
pub fn correlation_lower_bound(params: &SystemParams, rel_tol: f64) -> Result<f64> {
    let (s0, s1) = sigma01(params, rel_tol)?;
    correlation_from_sigmas(params, s0, s1)
}

fn correlation_from_sigmas(params: &SystemParams, s0: f64, s1: f64) -> Result<f64> {
    let bound = bound_from_sigmas(params, s0, s1);
    if !(bound > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let cov = covariance_from_sigma1(params, s1);
    Ok(cov / (libm::sqrt(params.lambda().get()) * libm::sqrt(bound)))
}

/// Exact `var(B)` for `R(a) = R_c a`.
pub fn variance_linear_exact(params: &SystemParams) -> Result<f64> {
    let RateFunction::Linear { rc } = *params.rate() else {
        return Err(Error::WrongRateKind);
    };
    let (ga, gb) = (params.gamma_a, params.gamma_b);
    let (q1, q2) = (params.burst.mean(), params.burst.second_moment());
    let lambda = params.lambda().get();
    Ok(rc * lambda * ((ga + gb) * (q2 + q1) + 2.0 * rc * q1 * q1) / (2.0 * gb * (ga + gb)))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentReport {
    pub mean_a: f64,
    pub var_a: f64,
    pub mean_b: f64,
    pub var_bound: f64,
    pub var_series: f64,
    /// Charlier order actually retained after the early-stop rule.
    pub series_order: usize,
    /// Contribution of the last retained order to `var_series`.
    pub series_last_term: f64,
    pub cov_ab: f64,
    /// `None` when the variance bound is zero.
    pub corr_lower_bound: Option<f64>,
    pub var_linear_exact: Option<f64>,
    /// `None` for rates without a real extension.
    pub lna_var: Option<f64>,
    pub sigma0: f64,
    pub sigma1: f64,
    /// The correlation expression is a lower bound only for `σ_1 >= 0`.
    pub sigma1_sign: i8,
    pub rel_tol: f64,
    pub max_order: usize,
    /// Last Poisson index retained in the projections.
    pub poisson_a_max: u64,
    pub lna_convention: String,
}

pub fn moment_report(params: &SystemParams, opts: MomentOptions) -> Result<MomentReport> {
    let lambda = params.lambda();
    let proj = params.project(opts.order, opts.rel_tol)?;
    let (s0, s1) = (proj.sigma(0), proj.sigma(1));
    let expansion =
        CharlierExpansion::by_projection(params.rate(), lambda, opts.order, opts.rel_tol)?;
    let series = variance_series_from(params, &expansion);
    let var_linear_exact = match variance_linear_exact(params) {
        Ok(v) => Some(v),
        Err(Error::WrongRateKind) => None,
        Err(e) => return Err(e),
    };
    let lna_var = match lna::LnaSystem::build(params).and_then(|s| s.solve()) {
        Ok(sigma) => Some(sigma[1][1]),
        Err(Error::NotDifferentiable) => None,
        Err(e) => return Err(e),
    };
    let sign = if s1 > 0.0 {
        1
    } else if s1 < 0.0 {
        -1
    } else {
        0
    };
    Ok(MomentReport {
        mean_a: lambda.get(),
        var_a: lambda.get(),
        mean_b: params.burst.mean() * s0 / params.gamma_b,
        var_bound: bound_from_sigmas(params, s0, s1),
        var_series: series.value,
        series_order: series.order,
        series_last_term: series.last_term,
        cov_ab: covariance_from_sigma1(params, s1),
        corr_lower_bound: correlation_from_sigmas(params, s0, s1).ok(),
        var_linear_exact,
        lna_var,
        sigma0: s0,
        sigma1: s1,
        sigma1_sign: sign,
        rel_tol: opts.rel_tol,
        max_order: opts.order,
        poisson_a_max: proj.a_max,
        lna_convention: String::from(lna::CONVENTION),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burst::BurstKind;

    const TOL: f64 = 1e-12;

    fn q(kind: BurstKind) -> BurstDistribution {
        BurstDistribution::new(kind).unwrap()
    }

    fn linear_unit() -> SystemParams {
        // λ = 4, γ_A = γ_B = 1, Q ≡ 1
        SystemParams::new(
            4.0,
            1.0,
            1.0,
            RateFunction::Linear { rc: 1.0 },
            q(BurstKind::Deterministic { q0: 1 }),
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn mean_b_examples() {
        let p = SystemParams::new(
            1.0,
            1.0,
            0.1,
            RateFunction::Constant { c: 0.5 },
            q(BurstKind::Uniform { a: 1, b: 3 }),
        )
        .unwrap();
        assert!(rel(mean_b(&p, TOL).unwrap(), 10.0) < 1e-13);
        assert!(rel(mean_b(&linear_unit(), TOL).unwrap(), 4.0) < 1e-13);
    }

    #[test]
    fn linear_unit_values() {
        let p = linear_unit();
        assert!(rel(variance_bound(&p, TOL).unwrap(), 6.0) < 1e-12);
        assert!(rel(variance_linear_exact(&p).unwrap(), 6.0) < 1e-14);
        assert!(rel(covariance_ab(&p, TOL).unwrap(), 2.0) < 1e-12);
        let rho = correlation_lower_bound(&p, TOL).unwrap();
        assert!(rel(rho, 2.0 / (2.0 * libm::sqrt(6.0))) < 1e-12);
        for n in 1..=10 {
            let s = variance_series(&p, n, TOL).unwrap();
            assert!(rel(s.value, 6.0) < 1e-12, "N={n}");
        }
    }

    #[test]
    fn constant_rate_collapses() {
        let c = 0.7;
        let burst = q(BurstKind::TruncGeometric { p: 0.5, m_n: 21 });
        let (q1, q2) = (burst.mean(), burst.second_moment());
        let p = SystemParams::new(2.0, 0.5, 0.3, RateFunction::Constant { c }, burst).unwrap();
        let want = c * (q2 + q1) / (2.0 * 0.3);
        assert!(rel(variance_bound(&p, TOL).unwrap(), want) < 1e-12);
        assert!(covariance_ab(&p, TOL).unwrap().abs() < 1e-14);
        assert!(correlation_lower_bound(&p, TOL).unwrap().abs() < 1e-14);
    }

    #[test]
    fn zero_rate_is_degenerate() {
        let p = SystemParams::new(
            1.0,
            1.0,
            1.0,
            RateFunction::Constant { c: 0.0 },
            q(BurstKind::Deterministic { q0: 1 }),
        )
        .unwrap();
        assert_eq!(
            correlation_lower_bound(&p, TOL),
            Err(Error::DegenerateVariance)
        );
    }

    #[test]
    fn series_order_one_is_the_bound() {
        let p = SystemParams::new(
            1.0,
            0.2,
            0.5,
            RateFunction::hill(2.0, 5.0).unwrap(),
            q(BurstKind::TruncGeometric { p: 0.5, m_n: 21 }),
        )
        .unwrap();
        let b = variance_bound(&p, TOL).unwrap();
        let s1 = variance_series(&p, 1, TOL).unwrap();
        assert!(rel(s1.value, b) < 1e-12);
        let mut prev = s1.value;
        for n in 2..=20 {
            let s = variance_series(&p, n, TOL).unwrap().value;
            assert!(s >= prev, "N={n}: {s} < {prev}");
            prev = s;
        }
        assert!(prev > b);
    }

    #[test]
    fn linear_exact_requires_linear_rate() {
        let p = SystemParams::new(
            1.0,
            1.0,
            1.0,
            RateFunction::Constant { c: 1.0 },
            q(BurstKind::Deterministic { q0: 1 }),
        )
        .unwrap();
        assert_eq!(variance_linear_exact(&p), Err(Error::WrongRateKind));
    }

    #[test]
    fn linear_exact_vanishes_with_rate() {
        let p = SystemParams::new(
            3.0,
            1.0,
            2.0,
            RateFunction::Linear { rc: 0.0 },
            q(BurstKind::Uniform { a: 1, b: 4 }),
        )
        .unwrap();
        assert_eq!(variance_linear_exact(&p).unwrap(), 0.0);
    }

    #[test]
    fn invalid_system() {
        let r = SystemParams::new(
            0.0,
            1.0,
            1.0,
            RateFunction::Linear { rc: 1.0 },
            q(BurstKind::Deterministic { q0: 1 }),
        );
        assert!(matches!(r, Err(Error::InvalidParam { field: "F", .. })));
    }

    #[test]
    fn report_is_consistent() {
        let p = SystemParams::new(
            1.0,
            0.01,
            0.01,
            RateFunction::hill(9.0, 100.0).unwrap(),
            q(BurstKind::Uniform { a: 1, b: 16 }),
        )
        .unwrap();
        let r = moment_report(&p, MomentOptions::default()).unwrap();
        assert_eq!(r.mean_a, 100.0);
        assert!(r.var_bound < r.var_series);
        assert_eq!(r.sigma1_sign, 1);
        assert!(r.var_linear_exact.is_none());
        assert!(r.lna_var.is_some());
        assert!(rel(r.mean_b, 100.0 * 8.5 * r.sigma0) < 1e-12);
    }
}
