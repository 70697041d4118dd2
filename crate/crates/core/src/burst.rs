//! Burst-size laws `Q` on the positive integers.
//!
//! Every distribution is stored as an explicit finite pmf; `E[Q]` and `E[Q²]`
//! are always recomputed from that pmf so analytics, simulation and the
//! master-equation oracle see identical moments.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// Reference truncation for the Poisson and geometric families.
pub const DEFAULT_TRUNCATION: u64 = 21;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum BurstKind {
    Deterministic {
        q0: u64,
    },
    /// Uniform on `{a..b}`.
    Uniform {
        a: u64,
        b: u64,
    },
    /// Mass `∝ λ^{q-1} e^{-λ}/(q-1)!` on `{1..m_n}`.
    TruncShiftPoisson {
        lambda_q: f64,
        m_n: u64,
    },
    /// Mass `∝ p(1-p)^{q-1}` on `{1..m_n}`.
    TruncGeometric {
        p: f64,
        m_n: u64,
    },
    /// `Q = 1 + Binomial(n, p)`, support `{1..n+1}`.
    ShiftedBinomial {
        n: u64,
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BurstDistribution {
    kind: BurstKind,
    /// Smallest value in the support; `pmf[i]` is the mass of `min_q + i`.
    min_q: u64,
    pmf: Vec<f64>,
    /// Running sums of `pmf`, last entry forced to 1.
    cdf: Vec<f64>,
    mean: f64,
    second_moment: f64,
}

impl BurstDistribution {
    pub fn new(kind: BurstKind) -> Result<Self> {
        let invalid = |field, reason| Err(Error::InvalidParam { field, reason });
        let (min_q, weights): (u64, Vec<f64>) = match kind {
            BurstKind::Deterministic { q0 } => {
                if q0 < 1 {
                    return invalid("burst.q0", "must be >= 1");
                }
                (q0, alloc::vec![1.0])
            }
            BurstKind::Uniform { a, b } => {
                if a < 1 {
                    return invalid("burst.a", "must be >= 1");
                }
                if b < a {
                    return invalid("burst.b", "must be >= a");
                }
                (a, alloc::vec![1.0; (b - a + 1) as usize])
            }
            BurstKind::TruncShiftPoisson { lambda_q, m_n } => {
                if !(lambda_q.is_finite() && lambda_q > 0.0) {
                    return invalid("burst.lambda_q", "must be finite and > 0");
                }
                if m_n < 1 {
                    return invalid("burst.m_n", "must be >= 1");
                }
                // λ^{q-1}/(q-1)! by recurrence; the common e^{-λ} cancels
                let mut w = Vec::with_capacity(m_n as usize);
                let mut t = 1.0;
                for q in 1..=m_n {
                    w.push(t);
                    t *= lambda_q / q as f64;
                }
                (1, w)
            }
            BurstKind::TruncGeometric { p, m_n } => {
                if !(p > 0.0 && p <= 1.0) {
                    return invalid("burst.p", "must lie in (0, 1]");
                }
                if m_n < 1 {
                    return invalid("burst.m_n", "must be >= 1");
                }
                let w = (0..m_n).map(|k| p * libm::pow(1.0 - p, k as f64)).collect();
                (1, w)
            }
            BurstKind::ShiftedBinomial { n, p } => {
                if !(0.0..=1.0).contains(&p) {
                    return invalid("burst.p", "must lie in [0, 1]");
                }
                let w = (0..=n)
                    .map(|k| {
                        crate::numerics::binomial(n, k)
                            * libm::pow(p, k as f64)
                            * libm::pow(1.0 - p, (n - k) as f64)
                    })
                    .collect();
                (1, w)
            }
        };
        Ok(Self::from_weights(kind, min_q, weights))
    }

    fn from_weights(kind: BurstKind, min_q: u64, weights: Vec<f64>) -> Self {
        let mut total = CompensatedSum::default();
        weights.iter().for_each(|w| total.add(*w));
        let total = total.value();
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let (mean, second_moment) = moments_of(min_q, &pmf);
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut run = CompensatedSum::default();
        for p in &pmf {
            run.add(*p);
            cdf.push(run.value());
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Self {
            kind,
            min_q,
            pmf,
            cdf,
            mean,
            second_moment,
        }
    }

    pub fn kind(&self) -> BurstKind {
        self.kind
    }

    pub fn min_q(&self) -> u64 {
        self.min_q
    }

    pub fn max_q(&self) -> u64 {
        self.min_q + self.pmf.len() as u64 - 1
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `P(Q = q)`.
    pub fn prob(&self, q: u64) -> f64 {
        if q < self.min_q {
            return 0.0;
        }
        self.pmf
            .get((q - self.min_q) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// `P(Q <= q)`.
    pub fn cdf(&self, q: u64) -> f64 {
        if q < self.min_q {
            return 0.0;
        }
        self.cdf
            .get((q - self.min_q) as usize)
            .copied()
            .unwrap_or(1.0)
    }

    /// `(q, P(Q = q))` over the support.
    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .map(move |(i, p)| (self.min_q + i as u64, *p))
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Inversion of the cumulative table at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> u64 {
        let i = self.cdf.partition_point(|c| *c <= u);
        self.min_q + i.min(self.cdf.len() - 1) as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.pmf.len() == 1 {
            return self.min_q;
        }
        self.quantile(rng.random::<f64>())
    }
}

fn moments_of(min_q: u64, pmf: &[f64]) -> (f64, f64) {
    let mut m1 = CompensatedSum::default();
    let mut m2 = CompensatedSum::default();
    for (i, p) in pmf.iter().enumerate() {
        let q = (min_q + i as u64) as f64;
        m1.add(q * p);
        m2.add(q * q * p);
    }
    (m1.value(), m2.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> [BurstKind; 5] {
        [
            BurstKind::Deterministic { q0: 3 },
            BurstKind::Uniform { a: 1, b: 16 },
            BurstKind::TruncShiftPoisson {
                lambda_q: 8.0,
                m_n: DEFAULT_TRUNCATION,
            },
            BurstKind::TruncGeometric {
                p: 0.5,
                m_n: DEFAULT_TRUNCATION,
            },
            BurstKind::ShiftedBinomial { n: 20, p: 0.4 },
        ]
    }

    #[test]
    fn examples() {
        let d = BurstDistribution::new(BurstKind::Deterministic { q0: 1 }).unwrap();
        assert_eq!((d.mean(), d.second_moment()), (1.0, 1.0));

        let u = BurstDistribution::new(BurstKind::Uniform { a: 1, b: 16 }).unwrap();
        assert!((u.mean() - 8.5).abs() < 1e-14);
        assert!((u.second_moment() - 93.5).abs() < 1e-12);

        let g = BurstDistribution::new(BurstKind::TruncGeometric { p: 0.5, m_n: 21 }).unwrap();
        let x = libm::pow(2.0, -21.0);
        let oracle = 2.0 * (1.0 - (1.0 + 21.0 / 2.0) * x) / (1.0 - x);
        assert!((g.mean() - oracle).abs() < 1e-6);
    }

    #[test]
    fn pmf_invariants() {
        for kind in all_kinds() {
            let d = BurstDistribution::new(kind).unwrap();
            let total: f64 = d.pmf().iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "{kind:?}");
            assert!(d.pmf().iter().all(|p| *p >= 0.0));
            assert!(d.min_q() >= 1);
            let (m1, m2) = d.support().fold((0.0, 0.0), |(a, b), (q, p)| {
                (a + q as f64 * p, b + (q * q) as f64 * p)
            });
            assert!((m1 - d.mean()).abs() <= 1e-14 * d.mean());
            assert!((m2 - d.second_moment()).abs() <= 1e-14 * d.second_moment());
        }
    }

    #[test]
    fn shifted_binomial_support() {
        let d = BurstDistribution::new(BurstKind::ShiftedBinomial { n: 20, p: 0.4 }).unwrap();
        assert_eq!((d.min_q(), d.max_q()), (1, 21));
        assert!((d.mean() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params() {
        assert!(BurstDistribution::new(BurstKind::Uniform { a: 0, b: 3 }).is_err());
        assert!(BurstDistribution::new(BurstKind::Uniform { a: 4, b: 3 }).is_err());
        assert!(BurstDistribution::new(BurstKind::TruncGeometric { p: 0.0, m_n: 5 }).is_err());
        assert!(BurstDistribution::new(BurstKind::TruncShiftPoisson {
            lambda_q: -1.0,
            m_n: 5
        })
        .is_err());
        assert!(BurstDistribution::new(BurstKind::Deterministic { q0: 0 }).is_err());
    }

    #[test]
    fn inversion() {
        let d = BurstDistribution::new(BurstKind::Deterministic { q0: 4 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(d.sample(&mut rng), 4);
        let u = BurstDistribution::new(BurstKind::Uniform { a: 1, b: 2 }).unwrap();
        assert_eq!(u.quantile(0.3), 1);
        assert_eq!(u.quantile(0.5), 2);
        assert_eq!(u.quantile(0.999), 2);
        assert_eq!(u.quantile(0.0), 1);
    }
}
