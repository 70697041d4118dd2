//! Rate functions `R(a)` for the B-birth channel.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Growth;

/// Nonnegative rate of the burst channel as a function of the copy number of `A`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum RateFunction {
    Constant {
        c: f64,
    },
    Linear {
        rc: f64,
    },
    /// `(a/A_0)^n_h / (1 + (a/A_0)^n_h)`.
    Hill {
        n_h: f64,
        a0: f64,
    },
    /// `Σ_k coeffs[k] a^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `values[a]` on the table, `tail` beyond it.
    Tabulated {
        values: Vec<f64>,
        tail: f64,
    },
    /// `(1-θ)·base + θ·target`.
    Blend {
        theta: f64,
        base: Box<RateFunction>,
        target: Box<RateFunction>,
    },
}

impl RateFunction {
    pub fn hill(n_h: f64, a0: f64) -> Result<Self> {
        let r = RateFunction::Hill { n_h, a0 };
        r.validate()?;
        Ok(r)
    }

    pub fn blend(theta: f64, base: RateFunction, target: RateFunction) -> Result<Self> {
        let r = RateFunction::Blend {
            theta,
            base: Box::new(base),
            target: Box::new(target),
        };
        r.validate()?;
        Ok(r)
    }

    /// Structural parameter checks. Nonnegativity on the integers is checked
    /// separately over a finite range by [`RateFunction::check_nonnegative`].
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason| Err(Error::InvalidParam { field, reason });
        match self {
            RateFunction::Constant { c } if !(c.is_finite() && *c >= 0.0) => {
                bad("rate.c", "must be finite and >= 0")
            }
            RateFunction::Linear { rc } if !(rc.is_finite() && *rc >= 0.0) => {
                bad("rate.rc", "must be finite and >= 0")
            }
            RateFunction::Hill { n_h, a0 } => {
                if !(n_h.is_finite() && *n_h > 0.0) {
                    bad("rate.n_h", "must be finite and > 0")
                } else if !(a0.is_finite() && *a0 > 0.0) {
                    bad("rate.a0", "must be finite and > 0")
                } else {
                    Ok(())
                }
            }
            RateFunction::Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                bad("rate.coeffs", "must be finite")
            }
            RateFunction::Tabulated { values, tail } => {
                if values
                    .iter()
                    .chain(core::iter::once(tail))
                    .any(|v| !(v.is_finite() && *v >= 0.0))
                {
                    bad("rate.values", "must be finite and >= 0")
                } else {
                    Ok(())
                }
            }
            RateFunction::Blend {
                theta,
                base,
                target,
            } => {
                if !(0.0..=1.0).contains(theta) {
                    return bad("rate.theta", "must lie in [0, 1]");
                }
                base.validate()?;
                target.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: u64) -> f64 {
        match self {
            RateFunction::Tabulated { values, tail } => {
                values.get(a as usize).copied().unwrap_or(*tail)
            }
            RateFunction::Blend {
                theta,
                base,
                target,
            } => (1.0 - theta) * base.eval(a) + theta * target.eval(a),
            other => other
                .eval_real(a as f64)
                .expect("only tabulated rates lack a real extension"),
        }
    }

    /// Closed-form extension to real arguments.
    pub fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(match self {
            RateFunction::Constant { c } => *c,
            RateFunction::Linear { rc } => rc * x,
            RateFunction::Hill { n_h, a0 } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let u = libm::pow(x / a0, *n_h);
                    if u.is_infinite() {
                        1.0
                    } else {
                        u / (1.0 + u)
                    }
                }
            }
            RateFunction::Polynomial { coeffs } => horner(coeffs, x),
            RateFunction::Tabulated { .. } => return Err(Error::NotDifferentiable),
            RateFunction::Blend {
                theta,
                base,
                target,
            } => (1.0 - theta) * base.eval_real(x)? + theta * target.eval_real(x)?,
        })
    }

    /// `dR/da` of the real extension.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(match self {
            RateFunction::Constant { .. } => 0.0,
            RateFunction::Linear { rc } => *rc,
            RateFunction::Hill { n_h, a0 } => {
                if x <= 0.0 {
                    // one-sided derivative at the origin
                    match n_h.partial_cmp(&1.0) {
                        Some(core::cmp::Ordering::Greater) => 0.0,
                        Some(core::cmp::Ordering::Equal) => 1.0 / a0,
                        _ => f64::INFINITY,
                    }
                } else {
                    let u = libm::pow(x / a0, *n_h);
                    if u.is_infinite() {
                        0.0
                    } else {
                        n_h * u / (x * (1.0 + u) * (1.0 + u))
                    }
                }
            }
            RateFunction::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| k as f64 * c)
                    .collect();
                horner(&d, x)
            }
            RateFunction::Tabulated { .. } => return Err(Error::NotDifferentiable),
            RateFunction::Blend {
                theta,
                base,
                target,
            } => (1.0 - theta) * base.derivative(x)? + theta * target.derivative(x)?,
        })
    }

    pub fn growth(&self) -> Growth {
        match self {
            RateFunction::Constant { c } => Growth::Bounded(*c),
            RateFunction::Linear { rc } => Growth::Polynomial {
                coeff: *rc,
                degree: 1,
                shift: 0.0,
            },
            RateFunction::Hill { .. } => Growth::Bounded(1.0),
            RateFunction::Polynomial { coeffs } => {
                let coeff: f64 = coeffs.iter().map(|c| libm::fabs(*c)).sum();
                match coeffs.iter().rposition(|c| *c != 0.0) {
                    None => Growth::Bounded(0.0),
                    Some(0) => Growth::Bounded(coeff),
                    // |Σ c_k a^k| <= (Σ|c_k|)(a+1)^d
                    Some(d) => Growth::Polynomial {
                        coeff,
                        degree: d as u32,
                        shift: 1.0,
                    },
                }
            }
            RateFunction::Tabulated { values, tail } => {
                Growth::Bounded(values.iter().copied().fold(*tail, f64::max))
            }
            RateFunction::Blend {
                theta,
                base,
                target,
            } => scale(base.growth(), 1.0 - theta).plus(scale(target.growth(), *theta)),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, RateFunction::Linear { .. })
    }

    /// Returns the first `a <= a_max` with a negative or non-finite rate.
    pub fn check_nonnegative(&self, a_max: u64) -> Result<()> {
        for a in 0..=a_max {
            let v = self.eval(a);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam {
                    field: "rate",
                    reason: "must be finite and nonnegative on the Poisson range of A",
                });
            }
        }
        Ok(())
    }
}

fn scale(g: Growth, s: f64) -> Growth {
    match g {
        Growth::Bounded(m) => Growth::Bounded(m * s),
        Growth::Polynomial {
            coeff,
            degree,
            shift,
        } => Growth::Polynomial {
            coeff: coeff * s,
            degree,
            shift,
        },
        Growth::Unknown => Growth::Unknown,
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
