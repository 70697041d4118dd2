//! Exact-integer combinatorics and truncated Poisson expectations.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Mean of the stationary Poisson law of `A`, `λ = F/γ_A`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoissonMean(f64);

impl PoissonMean {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParam {
                field: "lambda",
                reason: "must be finite and > 0",
            });
        }
        Ok(Self(lambda))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// `(a)_k = a(a-1)...(a-k+1)`, with `(a)_0 = 1`.
///
/// Products are carried in `u128` while they fit, so the result is exact up to
/// the final rounding to `f64`.
pub fn falling_factorial(a: u64, k: u64) -> f64 {
    if k > a {
        return 0.0;
    }
    let mut exact: u128 = 1;
    for n in 0..k {
        match exact.checked_mul((a - n) as u128) {
            Some(v) => exact = v,
            None => {
                let mut acc = exact as f64;
                for m in n..k {
                    acc *= (a - m) as f64;
                }
                return acc;
            }
        }
    }
    exact as f64
}

/// Falling factorial of a real argument, `x(x-1)...(x-k+1)`.
pub fn falling_factorial_real(x: f64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, n| acc * (x - n as f64))
}

/// Exact binomial coefficient, `None` on `u128` overflow.
pub fn binomial_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step
        c = c.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(c)
}

pub fn binomial(n: u64, k: u64) -> f64 {
    match binomial_exact(n, k) {
        Some(c) => c as f64,
        None => libm::exp(ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)),
    }
}

pub fn factorial(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, m| acc * m as f64)
}

pub fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// Largest difference order accepted by [`forward_difference_at_zero`].
pub const MAX_DIFFERENCE_ORDER: usize = 60;

/// `Δ^k f(0) = Σ_j (-1)^{k-j} C(k,j) f(j)`.
pub fn forward_difference_at_zero(f: impl Fn(u64) -> f64, k: usize) -> Result<f64> {
    Ok(forward_difference_with_scale(f, k)?.0)
}

/// Like [`forward_difference_at_zero`], also returning `Σ_j C(k,j) |f(j)|`,
/// the magnitude against which cancellation error should be judged.
pub fn forward_difference_with_scale(f: impl Fn(u64) -> f64, k: usize) -> Result<(f64, f64)> {
    if k > MAX_DIFFERENCE_ORDER {
        return Err(Error::Overflow(k));
    }
    let mut sum = CompensatedSum::default();
    let mut scale = 0.0;
    for j in 0..=k as u64 {
        let w = binomial_exact(k as u64, j).ok_or(Error::Overflow(k))? as f64;
        let fj = f(j);
        let term = w * fj;
        scale += libm::fabs(term);
        if (k as u64 - j) % 2 == 0 {
            sum.add(term);
        } else {
            sum.add(-term);
        }
    }
    Ok((sum.value(), scale))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Growth envelope of an integrand on the nonnegative integers.
///
/// Used to bound the discarded Poisson tail. `Polynomial` means
/// `|f(a)| <= coeff * (a + shift)^degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Growth {
    Bounded(f64),
    Polynomial { coeff: f64, degree: u32, shift: f64 },
    Unknown,
}

impl Growth {
    pub fn envelope(&self, a: f64) -> Option<f64> {
        match *self {
            Growth::Bounded(m) => Some(libm::fabs(m)),
            Growth::Polynomial {
                coeff,
                degree,
                shift,
            } => Some(libm::fabs(coeff) * libm::pow(a + shift, degree as f64)),
            Growth::Unknown => None,
        }
    }

    /// Envelope of a pointwise product.
    pub fn times(self, other: Growth) -> Growth {
        use Growth::*;
        match (self, other) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (Bounded(m1), Bounded(m2)) => Bounded(m1 * m2),
            (
                Bounded(m),
                Polynomial {
                    coeff,
                    degree,
                    shift,
                },
            )
            | (
                Polynomial {
                    coeff,
                    degree,
                    shift,
                },
                Bounded(m),
            ) => Polynomial {
                coeff: coeff * m,
                degree,
                shift,
            },
            (
                Polynomial {
                    coeff: c1,
                    degree: d1,
                    shift: s1,
                },
                Polynomial {
                    coeff: c2,
                    degree: d2,
                    shift: s2,
                },
            ) => Polynomial {
                coeff: c1 * c2,
                degree: d1 + d2,
                shift: s1.max(s2).max(1.0),
            },
        }
    }

    /// Envelope of a pointwise sum.
    pub fn plus(self, other: Growth) -> Growth {
        use Growth::*;
        match (self, other) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (Bounded(m1), Bounded(m2)) => Bounded(libm::fabs(m1) + libm::fabs(m2)),
            (a, b) => {
                let (c1, d1, s1) = a.as_poly();
                let (c2, d2, s2) = b.as_poly();
                // (a+s)^d <= (a+s')^d' for s' >= max(s, 1), d' >= d
                Polynomial {
                    coeff: libm::fabs(c1) + libm::fabs(c2),
                    degree: d1.max(d2),
                    shift: s1.max(s2).max(1.0),
                }
            }
        }
    }

    fn as_poly(self) -> (f64, u32, f64) {
        match self {
            Growth::Bounded(m) => (m, 0, 1.0),
            Growth::Polynomial {
                coeff,
                degree,
                shift,
            } => (coeff, degree, shift),
            Growth::Unknown => (f64::INFINITY, 0, 1.0),
        }
    }

    /// Upper bound on `Σ_{a > m} envelope(a) p(a)` for `p` the Poisson(λ) pmf,
    /// by dominating the tail with a geometric series. `None` when the ratio
    /// test does not yet apply at `m`.
    fn tail_bound(&self, lambda: f64, m: u64) -> Option<f64> {
        let first = (m + 1) as f64;
        let env = self.envelope(first)?;
        if env == 0.0 {
            return Some(0.0);
        }
        let (degree, shift) = match *self {
            Growth::Bounded(_) => (0.0, 0.0),
            Growth::Polynomial { degree, shift, .. } => (degree as f64, shift),
            Growth::Unknown => return None,
        };
        let growth_ratio = if degree == 0.0 {
            1.0
        } else {
            libm::pow((first + 1.0 + shift) / (first + shift), degree)
        };
        let ratio = growth_ratio * lambda / (first + 1.0);
        if ratio >= 1.0 {
            return None;
        }
        let log_p = -lambda + first * libm::log(lambda) - ln_factorial(m + 1);
        Some(env * libm::exp(log_p) / (1.0 - ratio))
    }
}

/// Poisson pmf on `0..=a_max`, built outward from the mode so that neither
/// tail underflows prematurely for large `λ`.
pub fn poisson_pmf_table(lambda: f64, a_max: u64) -> Vec<f64> {
    poisson_pmf_table_dd(lambda, a_max)
        .into_iter()
        .map(DoubleDouble::to_f64)
        .collect()
}

/// As [`poisson_pmf_table`], with each entry as an unevaluated sum. The
/// ratios away from the mode are carried in double-double, so entries keep
/// ~1 ulp accuracy relative to `p(mode)`.
pub fn poisson_pmf_table_dd(lambda: f64, a_max: u64) -> Vec<DoubleDouble> {
    let len = a_max as usize + 1;
    let mut p = alloc::vec![DoubleDouble::ZERO; len];
    let mode = (libm::floor(lambda) as u64).min(a_max);
    let p_mode = libm::exp(-lambda + mode as f64 * libm::log(lambda) - ln_factorial(mode));
    p[mode as usize] = DoubleDouble::from(p_mode);
    for a in (0..mode as usize).rev() {
        p[a] = p[a + 1].mul(DoubleDouble::quotient((a + 1) as f64, lambda));
    }
    for a in mode as usize..len - 1 {
        p[a + 1] = p[a].mul(DoubleDouble::quotient(lambda, (a + 1) as f64));
    }
    p
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Self {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn fast_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self {
            hi: s,
            lo: b - (s - a),
        }
    }

    /// `x·y` exactly.
    pub fn product(x: f64, y: f64) -> Self {
        let h = x * y;
        Self {
            hi: h,
            lo: libm::fma(x, y, -h),
        }
    }

    /// `x/y` to double-double accuracy.
    pub fn quotient(x: f64, y: f64) -> Self {
        let q = x / y;
        Self::fast_two_sum(q, libm::fma(-q, y, x) / y)
    }

    pub fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let u = Self::fast_two_sum(s.hi, s.lo + t.hi);
        Self::fast_two_sum(u.hi, u.lo + t.lo)
    }

    pub fn mul(self, o: Self) -> Self {
        let p = Self::product(self.hi, o.hi);
        Self::fast_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            Self {
                hi: -self.hi,
                lo: -self.lo,
            }
        } else {
            self
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Result of a truncated Poisson expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Expectation {
    pub value: f64,
    /// `Σ |f(a)| p(a)` over the retained range.
    pub abs_sum: f64,
    /// Last retained index.
    pub a_max: u64,
    /// Rigorous bound on the discarded tail.
    pub tail_bound: f64,
}

/// Truncation point for which the tail of `growth` under Poisson(λ) is below
/// `rel_tol` times `scale`, by `a_max = ceil(λ + c√λ + c²)` with growing `c`.
pub fn truncation_point(growth: &Growth, lambda: f64, rel_tol: f64, scale: f64) -> Result<u64> {
    if matches!(growth, Growth::Unknown) {
        return Err(Error::NonConvergent("integrand growth class is unknown"));
    }
    let sq = libm::sqrt(lambda);
    let mut c = 3.0;
    while c < 200.0 {
        let m = libm::ceil(lambda + c * sq + c * c) as u64;
        if let Some(t) = growth.tail_bound(lambda, m) {
            if t <= rel_tol * scale || t < f64::MIN_POSITIVE {
                return Ok(m);
            }
        }
        c *= 1.25;
    }
    Err(Error::NonConvergent("tail bound not reached"))
}

/// `E_P[f(A)]` for `A ~ Poisson(λ)`, truncated where the tail bound drops
/// below `rel_tol` relative to `Σ |f| p`.
pub fn poisson_expectation_with(
    f: impl Fn(u64) -> f64,
    growth: Growth,
    lambda: PoissonMean,
    rel_tol: f64,
) -> Result<Expectation> {
    expectation_dd(|a| DoubleDouble::from(f(a)), growth, lambda, rel_tol)
}

/// `E_P[f(A) g(A)]` with the products formed exactly. Use this when the
/// result is expected to cancel far below `E_P[|f g|]`; `growth` bounds
/// `|f g|`.
pub fn poisson_inner_product(
    f: impl Fn(u64) -> f64,
    g: impl Fn(u64) -> f64,
    growth: Growth,
    lambda: PoissonMean,
    rel_tol: f64,
) -> Result<Expectation> {
    expectation_dd(
        |a| DoubleDouble::product(f(a), g(a)),
        growth,
        lambda,
        rel_tol,
    )
}

fn expectation_dd(
    f: impl Fn(u64) -> DoubleDouble,
    growth: Growth,
    lambda: PoissonMean,
    rel_tol: f64,
) -> Result<Expectation> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidParam {
            field: "rel_tol",
            reason: "must be > 0",
        });
    }
    if matches!(growth, Growth::Unknown) {
        return Err(Error::NonConvergent("integrand growth class is unknown"));
    }
    let lambda = lambda.get();
    // start from the bulk; the tail test below extends the range if needed
    let mut m = libm::ceil(lambda + 10.0 * libm::sqrt(lambda) + 10.0) as u64;
    loop {
        let p = poisson_pmf_table_dd(lambda, m);
        let mut sum = DoubleDouble::ZERO;
        let mut abs = DoubleDouble::ZERO;
        for (a, pa) in p.iter().enumerate() {
            if pa.hi == 0.0 {
                continue;
            }
            let v = f(a as u64).mul(*pa);
            sum = sum.add(v);
            abs = abs.add(v.abs());
        }
        let abs_sum = abs.to_f64();
        let needed = truncation_point(&growth, lambda, rel_tol, abs_sum)?;
        if needed <= m {
            let tail_bound = growth.tail_bound(lambda, m).unwrap_or(f64::INFINITY);
            return Ok(Expectation {
                value: sum.to_f64(),
                abs_sum,
                a_max: m,
                tail_bound,
            });
        }
        m = needed;
    }
}

/// `E_P[R(A)]` for a rate function with a declared growth class.
pub fn poisson_expectation(
    f: &crate::rate::RateFunction,
    lambda: PoissonMean,
    rel_tol: f64,
) -> Result<f64> {
    Ok(poisson_expectation_with(|a| f.eval(a), f.growth(), lambda, rel_tol)?.value)
}
