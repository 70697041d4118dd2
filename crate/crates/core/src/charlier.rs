//! Shifted Charlier basis `ψ_n` and the coefficients `σ_n` of
//! `R(a) = Σ σ_n ψ_n(a)`.
//!
//! `ψ_n(a) = Σ_k C(n,k) (-r)^k (a)_{n-k}` is the monic Charlier polynomial
//! centred at `r`. With `r = λ` the family is orthogonal under Poisson(λ):
//! `E[ψ_n ψ_m] = n! λ^n δ_nm`.
//!
//! Coefficients can be obtained two ways:
//! * [`sigma_by_difference`]: the Newton series, re-summed onto `ψ_n`
//!   (alternating forward differences, fragile for non-polynomial `R`);
//! * [`sigma_by_projection`]: `σ_n = E[ψ_n R] / (n! λ^n)`, the canonical route.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{
    binomial, factorial, falling_factorial, forward_difference_with_scale, poisson_pmf_table_dd,
    truncation_point, CompensatedSum, DoubleDouble, Growth, PoissonMean,
};
use crate::rate::RateFunction;

/// Highest expansion order accepted.
pub const MAX_ORDER: usize = 30;

/// Default expansion order.
pub const DEFAULT_ORDER: usize = 20;

/// `ψ_n(a)` by the three-term recurrence
/// `ψ_{n+1} = (a - n - r) ψ_n - n r ψ_{n-1}`.
pub fn psi(n: usize, a: u64, r: f64) -> f64 {
    let mut buf = vec![0.0; n + 1];
    psi_all(a as f64, r, &mut buf);
    buf[n]
}

/// Fills `out[n] = ψ_n(a)` for `n < out.len()`.
pub fn psi_all(a: f64, r: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = a - r;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (a - nf - r) * out[n] - nf * r * out[n - 1];
    }
}

/// `ψ_n(a)` by the defining binomial sum. Exact in structure but loses
/// precision to cancellation once `r^n` dwarfs the result.
pub fn psi_binomial(n: usize, a: u64, r: f64) -> f64 {
    let mut sum = CompensatedSum::default();
    for k in 0..=n {
        let term = binomial(n as u64, k as u64)
            * libm::pow(-r, k as f64)
            * falling_factorial(a, (n - k) as u64);
        sum.add(term);
    }
    sum.value()
}

/// Partial sum of the Newton-series route with a convergence report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceSum {
    pub value: f64,
    /// `|last nonzero term| / |partial sum|`.
    pub last_term_rel: f64,
    pub k_max: usize,
}

/// `σ_n = Σ_{k=n}^{k_max} C(k,n) Δ^k R(0)/k! · r^{k-n}`.
pub fn sigma_by_difference(
    f: impl Fn(u64) -> f64,
    n: usize,
    r: f64,
    k_max: usize,
) -> Result<DifferenceSum> {
    if k_max < n {
        return Err(Error::InvalidParam {
            field: "k_max",
            reason: "must be >= n",
        });
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidParam {
            field: "r",
            reason: "must be finite and > 0",
        });
    }
    let mut sum = CompensatedSum::default();
    let mut last = 0.0f64;
    let mut prev: Option<f64> = None;
    let mut growing = 0;
    for k in n..=k_max {
        let (diff, scale) = forward_difference_with_scale(&f, k)?;
        let weight =
            binomial(k as u64, n as u64) / factorial(k as u64) * libm::pow(r, (k - n) as f64);
        let term = diff * weight;
        let floor = 8.0 * f64::EPSILON * scale * weight;
        if libm::fabs(term) <= floor {
            // cancellation noise, not signal
            prev = None;
            growing = 0;
            continue;
        }
        if let Some(p) = prev {
            if libm::fabs(term) > libm::fabs(p) {
                growing += 1;
                if growing >= 5 {
                    return Err(Error::Unstable {
                        order: k,
                        last_term: term,
                    });
                }
            } else {
                growing = 0;
            }
        }
        prev = Some(term);
        last = term;
        sum.add(term);
    }
    let value = sum.value();
    let last_term_rel = if value != 0.0 {
        libm::fabs(last / value)
    } else if last == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(DifferenceSum {
        value,
        last_term_rel,
        k_max,
    })
}

/// Poisson projections `E[ψ_n R]` for `n = 0..=n_max`, in one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub lambda: f64,
    /// `E[ψ_n R]`.
    pub inner: Vec<f64>,
    /// `n! λ^n = E[ψ_n²]`.
    pub norms: Vec<f64>,
    /// Last Poisson index retained.
    pub a_max: u64,
}

impl Projections {
    pub fn sigma(&self, n: usize) -> f64 {
        self.inner[n] / self.norms[n]
    }

    /// `σ_n² n! λ^n`, the share of `E[R²]` carried by order `n`.
    pub fn weight(&self, n: usize) -> f64 {
        self.inner[n] * self.inner[n] / self.norms[n]
    }
}

/// Computes `E[ψ_n(A) f(A)]`, `A ~ Poisson(λ)`, for every `n <= n_max`, with
/// the truncation point chosen so that each integrand's tail is below
/// `rel_tol` relative to its absolute sum.
pub fn project(
    f: impl Fn(u64) -> f64,
    growth: Growth,
    lambda: PoissonMean,
    n_max: usize,
    rel_tol: f64,
) -> Result<Projections> {
    if n_max > MAX_ORDER {
        return Err(Error::OrderTooLarge(n_max));
    }
    if matches!(growth, Growth::Unknown) {
        return Err(Error::NonConvergent("integrand growth class is unknown"));
    }
    let lam = lambda.get();
    let psi_growth = |n: usize| Growth::Polynomial {
        coeff: 1.0,
        degree: n as u32,
        shift: lam.max(1.0),
    };
    let mut m = libm::ceil(lam + 10.0 * libm::sqrt(lam) + 10.0 + 2.0 * n_max as f64) as u64;
    let mut psi = vec![0.0; n_max + 1];
    loop {
        let p = poisson_pmf_table_dd(lam, m);
        let mut sums = vec![DoubleDouble::ZERO; n_max + 1];
        let mut abs = vec![0.0; n_max + 1];
        for (a, pa) in p.iter().enumerate() {
            if pa.hi == 0.0 {
                continue;
            }
            let fa = f(a as u64);
            if fa == 0.0 {
                continue;
            }
            psi_all(a as f64, lam, &mut psi);
            for n in 0..=n_max {
                let v = DoubleDouble::product(psi[n], fa).mul(*pa);
                sums[n] = sums[n].add(v);
                abs[n] += libm::fabs(v.hi);
            }
        }
        let mut needed = m;
        for n in 0..=n_max {
            let g = psi_growth(n).times(growth);
            needed = needed.max(truncation_point(&g, lam, rel_tol, abs[n])?);
        }
        if needed <= m {
            let norms = (0..=n_max)
                .map(|n| factorial(n as u64) * libm::pow(lam, n as f64))
                .collect();
            return Ok(Projections {
                lambda: lam,
                inner: sums.iter().map(|s| s.to_f64()).collect(),
                norms,
                a_max: m,
            });
        }
        m = needed;
    }
}

/// `σ_n = E[ψ_n R] / (n! λ^n)` with `r = λ`.
pub fn sigma_by_projection(
    f: &RateFunction,
    n: usize,
    lambda: PoissonMean,
    rel_tol: f64,
) -> Result<f64> {
    Ok(project(|a| f.eval(a), f.growth(), lambda, n, rel_tol)?.sigma(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Route {
    ForwardDifference,
    PoissonProjection,
}

/// A finite expansion `Σ_{n<=N} σ_n ψ_n(a)` about centre `r`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CharlierExpansion {
    r: f64,
    coeffs: Vec<f64>,
    route: Route,
    /// Weight `σ_N² N! r^N` of the last retained order.
    tail_estimate: f64,
}

impl CharlierExpansion {
    /// Projection route about `r = λ`. Orders are added up to `max_order`,
    /// stopping early once two consecutive weights `σ_n² n! λ^n` fall below
    /// `rel_tol` times the accumulated weight.
    pub fn by_projection(
        f: &RateFunction,
        lambda: PoissonMean,
        max_order: usize,
        rel_tol: f64,
    ) -> Result<Self> {
        let proj = project(|a| f.eval(a), f.growth(), lambda, max_order, rel_tol)?;
        let mut coeffs = vec![proj.sigma(0)];
        let mut total = proj.weight(0);
        let mut small_run = 0;
        let mut tail_estimate = proj.weight(0);
        for n in 1..=max_order {
            let w = proj.weight(n);
            coeffs.push(proj.sigma(n));
            tail_estimate = w;
            total += w;
            if w <= rel_tol * total {
                small_run += 1;
                if small_run >= 2 {
                    break;
                }
            } else {
                small_run = 0;
            }
        }
        Ok(Self {
            r: lambda.get(),
            coeffs,
            route: Route::PoissonProjection,
            tail_estimate,
        })
    }

    /// Newton-series route about an arbitrary centre `r`, each coefficient
    /// summed to `k_max`.
    pub fn by_difference(
        f: impl Fn(u64) -> f64,
        r: f64,
        order: usize,
        k_max: usize,
    ) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::OrderTooLarge(order));
        }
        let coeffs = (0..=order)
            .map(|n| sigma_by_difference(&f, n, r, k_max.max(n)).map(|s| s.value))
            .collect::<Result<Vec<_>>>()?;
        let last = coeffs[order];
        Ok(Self {
            r,
            tail_estimate: last * last * factorial(order as u64) * libm::pow(r, order as f64),
            coeffs,
            route: Route::ForwardDifference,
        })
    }

    pub fn from_coeffs(r: f64, coeffs: Vec<f64>, route: Route) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > MAX_ORDER + 1 {
            return Err(Error::OrderTooLarge(coeffs.len().saturating_sub(1)));
        }
        let n = coeffs.len() - 1;
        Ok(Self {
            r,
            tail_estimate: coeffs[n] * coeffs[n] * factorial(n as u64) * libm::pow(r, n as f64),
            coeffs,
            route,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn tail_estimate(&self) -> f64 {
        self.tail_estimate
    }

    /// `Σ_n σ_n ψ_n(a)`.
    pub fn reconstruct(&self, a: u64) -> f64 {
        let mut psi = vec![0.0; self.coeffs.len()];
        psi_all(a as f64, self.r, &mut psi);
        let mut s = CompensatedSum::default();
        for (c, p) in self.coeffs.iter().zip(&psi) {
            s.add(c * p);
        }
        s.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lam(x: f64) -> PoissonMean {
        PoissonMean::new(x).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0, 9, 2.5), 1.0);
        assert_eq!(psi(1, 7, 3.0), 4.0);
        assert_eq!(psi(2, 3, 1.0), 1.0);
        assert_eq!(psi_binomial(2, 3, 1.0), 1.0);
    }

    #[test]
    fn recurrence_matches_binomial_sum() {
        for n in 0..=10 {
            for a in 0..25 {
                for &r in &[0.5, 1.0, 3.5] {
                    let x = psi(n, a, r);
                    let y = psi_binomial(n, a, r);
                    assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "n={n} a={a} r={r}");
                }
            }
        }
    }

    #[test]
    fn difference_route_examples() {
        let rc = 1.7;
        let s1 = sigma_by_difference(|a| rc * a as f64, 1, 4.2, 6).unwrap();
        assert!((s1.value - rc).abs() < 1e-14);

        let c = 0.3;
        assert_eq!(sigma_by_difference(|_| c, 0, 2.0, 5).unwrap().value, c);
        for n in 1..5 {
            assert_eq!(sigma_by_difference(|_| c, n, 2.0, 8).unwrap().value, 0.0);
        }

        let s2 = sigma_by_difference(|a| (a * a) as f64, 2, 1.0, 6).unwrap();
        assert!((s2.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn difference_route_rejects_bad_kmax() {
        assert!(sigma_by_difference(|a| a as f64, 3, 1.0, 2).is_err());
    }

    #[test]
    fn difference_route_flags_blowup() {
        // 3^a has Δ^k f(0) = 2^k; with r = 10 terms grow like (20)^k/k!
        let r = sigma_by_difference(|a| libm::pow(3.0, a as f64), 0, 10.0, 30);
        assert!(matches!(r, Err(Error::Unstable { .. })), "{r:?}");
    }

    #[test]
    fn projection_examples() {
        let rc = 0.8;
        let linear = RateFunction::Linear { rc };
        let s0 = sigma_by_projection(&linear, 0, lam(3.0), 1e-12).unwrap();
        assert!((s0 - rc * 3.0).abs() < 1e-12);

        let one = RateFunction::Constant { c: 1.0 };
        let s1 = sigma_by_projection(&one, 1, lam(6.0), 1e-12).unwrap();
        assert!(s1.abs() < 1e-12);

        let hill = RateFunction::hill(2.0, 5.0).unwrap();
        let s0 = sigma_by_projection(&hill, 0, lam(5.0), 1e-12).unwrap();
        let direct = crate::numerics::poisson_expectation(&hill, lam(5.0), 1e-12).unwrap();
        assert!((s0 - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn linear_expansion_has_two_terms() {
        let e = CharlierExpansion::by_projection(
            &RateFunction::Linear { rc: 2.0 },
            lam(4.0),
            20,
            1e-12,
        )
        .unwrap();
        assert!((e.coeffs()[0] - 8.0).abs() < 1e-12);
        assert!((e.coeffs()[1] - 2.0).abs() < 1e-12);
        for c in &e.coeffs()[2..] {
            assert!(c.abs() < 1e-10);
        }
        assert!(
            e.order() < 20,
            "early stop expected, got order {}",
            e.order()
        );
    }

    #[test]
    fn reconstruct_examples() {
        let e = CharlierExpansion::by_difference(|a| 3.0 * a as f64, 2.0, 1, 4).unwrap();
        assert_eq!(e.coeffs(), &[6.0, 3.0]);
        assert_eq!(e.reconstruct(4), 12.0);

        let c = CharlierExpansion::from_coeffs(1.3, vec![5.0], Route::PoissonProjection).unwrap();
        for a in 0..10 {
            assert_eq!(c.reconstruct(a), 5.0);
        }

        let sq = CharlierExpansion::by_difference(|a| (a * a) as f64, 1.0, 2, 6).unwrap();
        assert!((sq.reconstruct(3) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn order_limit() {
        let f = RateFunction::Constant { c: 1.0 };
        assert_eq!(
            CharlierExpansion::by_projection(&f, lam(1.0), 31, 1e-12),
            Err(Error::OrderTooLarge(31))
        );
    }
}
