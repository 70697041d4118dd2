use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam {
        field: &'static str,
        reason: &'static str,
    },
    /// The integrand's growth class gives no usable tail bound.
    #[error("Poisson expectation cannot be bounded: {0}")]
    NonConvergent(&'static str),
    #[error("binomial weights overflow for difference order {0}")]
    Overflow(usize),
    /// Forward-difference terms grew for several consecutive orders.
    #[error("forward-difference series unstable at order {order} (last term {last_term:e})")]
    Unstable { order: usize, last_term: f64 },
    #[error("expansion order {0} exceeds the supported maximum of 30")]
    OrderTooLarge(usize),
    #[error("variance bound is zero, correlation undefined")]
    DegenerateVariance,
    #[error("operation requires a linear rate function")]
    WrongRateKind,
    #[error("rate function has no derivative on the reals")]
    NotDifferentiable,
    #[error("drift matrix is not Hurwitz")]
    NotHurwitz,
}
