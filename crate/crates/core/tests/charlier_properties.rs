use burstvar_core::charlier::{psi, psi_binomial, sigma_by_difference, sigma_by_projection};
use burstvar_core::numerics::{
    binomial, factorial, falling_factorial, poisson_expectation_with, poisson_inner_product, Growth,
};
use burstvar_core::{CharlierExpansion, PoissonMean, RateFunction};
use proptest::prelude::*;

fn lam(x: f64) -> PoissonMean {
    PoissonMean::new(x).unwrap()
}

fn psi_growth(n: usize, r: f64) -> Growth {
    Growth::Polynomial {
        coeff: 1.0,
        degree: n as u32,
        shift: r.max(1.0),
    }
}

#[test]
fn orthogonality() {
    for &l in &[0.5f64, 2.0, 10.0] {
        for n in 0..=8 {
            for m in 0..=8 {
                // Σ|ψ_n ψ_m| p reaches ~1e12, so an absolute 1e-10 needs the
                // tail cut far below the default relative tolerance
                let e = poisson_inner_product(
                    |a| psi(n, a, l),
                    |a| psi(m, a, l),
                    psi_growth(n, l).times(psi_growth(m, l)),
                    lam(l),
                    1e-25,
                )
                .unwrap()
                .value;
                if n == m {
                    let want = factorial(n as u64) * l.powi(n as i32);
                    assert!(
                        (e - want).abs() <= 1e-8 * want,
                        "λ={l} n={n}: {e} vs {want}"
                    );
                } else {
                    assert!(e.abs() <= 1e-10, "λ={l} n={n} m={m}: {e}");
                }
            }
        }
    }
}

#[test]
fn first_moment_identity() {
    for &l in &[0.5f64, 2.0, 10.0] {
        for n in 0..=8 {
            let e = poisson_expectation_with(|a| psi(n, a, l), psi_growth(n, l), lam(l), 1e-12)
                .unwrap()
                .value;
            let want = if n == 0 { 1.0 } else { 0.0 };
            assert!((e - want).abs() <= 1e-10, "λ={l} n={n}: {e}");
        }
    }
}

#[test]
fn falling_factorial_in_psi_basis() {
    for &r in &[1.0f64, 3.5] {
        for a in 0..=30u64 {
            for k in 0..=8usize {
                let rhs: f64 = (0..=k)
                    .map(|n| binomial(k as u64, n as u64) * r.powi((k - n) as i32) * psi(n, a, r))
                    .sum();
                let lhs = falling_factorial(a, k as u64);
                assert!(
                    (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
                    "r={r} a={a} k={k}: {lhs} vs {rhs}"
                );
            }
        }
    }
}

#[test]
fn recurrence_stays_accurate_where_binomial_sum_cancels() {
    // at λ = 150 the defining sum has terms ~ λ^n; the recurrence must still
    // reproduce the orthogonality norm
    let l = 150.0;
    let n = 12;
    let e = poisson_expectation_with(
        |a| psi(n, a, l) * psi(n, a, l),
        psi_growth(n, l).times(psi_growth(n, l)),
        lam(l),
        1e-12,
    )
    .unwrap()
    .value;
    let want = factorial(n as u64) * l.powi(n as i32);
    assert!((e - want).abs() <= 1e-9 * want);
    // the explicit sum is visibly worse at the same point
    let a = 150;
    let rec = psi(n, a, l);
    let sum = psi_binomial(n, a, l);
    assert!((rec - sum).abs() > 1e-6 * rec.abs());
}

fn poly_strategy() -> impl Strategy<Value = Vec<f64>> {
    (0usize..=5).prop_flat_map(|d| proptest::collection::vec(0.0f64..2.0, d + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn routes_agree_on_polynomials(coeffs in poly_strategy(), n in 0usize..=5, use_five in any::<bool>()) {
        let l = if use_five { 5.0 } else { 1.0 };
        let rate = RateFunction::Polynomial { coeffs: coeffs.clone() };
        let by_diff = sigma_by_difference(|a| rate.eval(a), n, l, 12).unwrap().value;
        let by_proj = sigma_by_projection(&rate, n, lam(l), 1e-12).unwrap();
        let scale = by_diff.abs().max(by_proj.abs());
        if scale > 1e-10 {
            prop_assert!((by_diff - by_proj).abs() <= 1e-8 * scale, "{by_diff} vs {by_proj}");
        } else {
            prop_assert!((by_diff - by_proj).abs() <= 1e-10);
        }
    }

    #[test]
    fn polynomial_reconstruction(coeffs in poly_strategy(), r in 0.5f64..6.0) {
        let d = coeffs.len() - 1;
        let rate = RateFunction::Polynomial { coeffs };
        let e = CharlierExpansion::by_difference(|a| rate.eval(a), r, d, d).unwrap();
        for a in 0..=50u64 {
            let want = rate.eval(a);
            let got = e.reconstruct(a);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "a={a}: {got} vs {want}");
        }
    }

    #[test]
    fn linear_coefficients_vanish_beyond_one(rc in 0.0f64..3.0, l in 0.2f64..50.0) {
        let e = CharlierExpansion::by_projection(&RateFunction::Linear { rc }, lam(l), 10, 1e-12).unwrap();
        for c in e.coeffs().iter().skip(2) {
            prop_assert!(c.abs() <= 1e-10);
        }
    }
}
