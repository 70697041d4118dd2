use burstvar::cme::{solve_auto, solve_stationary, CmeOptions};
use burstvar_core::analytics::{covariance_ab, mean_b, variance_bound, variance_series};
use burstvar_core::numerics::poisson_pmf_table;
use burstvar_core::{BurstDistribution, BurstKind, RateFunction, SystemParams};

fn params(rate: RateFunction, f: f64, ga: f64, gb: f64, burst: BurstKind) -> SystemParams {
    SystemParams::new(f, ga, gb, rate, BurstDistribution::new(burst).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn small_hill_instances() -> Vec<SystemParams> {
    vec![
        params(
            RateFunction::hill(2.0, 5.0).unwrap(),
            1.0,
            0.2,
            0.5,
            BurstKind::TruncGeometric { p: 0.5, m_n: 21 },
        ),
        params(
            RateFunction::hill(4.0, 8.0).unwrap(),
            3.0,
            0.5,
            1.0,
            BurstKind::Uniform { a: 1, b: 4 },
        ),
        params(
            RateFunction::hill(1.0, 2.0).unwrap(),
            2.0,
            1.0,
            0.3,
            BurstKind::TruncShiftPoisson { lambda_q: 2.0, m_n: 10 },
        ),
        params(
            RateFunction::hill(6.0, 10.0).unwrap(),
            12.0,
            1.0,
            2.0,
            BurstKind::ShiftedBinomial { n: 4, p: 0.5 },
        ),
    ]
}

#[test]
fn a_marginal_is_poisson() {
    for p in small_hill_instances() {
        let cme = solve_auto(&p, 1e-12, &CmeOptions::default()).unwrap();
        let pois = poisson_pmf_table(p.lambda().get(), cme.a_max);
        let tail = 1.0 - pois.iter().sum::<f64>();
        let tv: f64 = cme
            .a_marginal()
            .iter()
            .zip(&pois)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            + tail.max(0.0);
        assert!(0.5 * tv <= 1e-8, "{tv}");
    }
}

#[test]
fn agrees_with_closed_forms() {
    for p in small_hill_instances() {
        let cme = solve_auto(&p, 1e-12, &CmeOptions::default()).unwrap();
        assert!(cme.mass_defect < 1e-10);
        assert!(cme.residual <= 1e-12);
        let total: f64 = cme.stationary.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        assert!(cme.stationary.iter().all(|v| *v >= 0.0));
        let m = cme.moments();
        assert!(rel(m.mean_b, mean_b(&p, 1e-12).unwrap()) <= 1e-8);
        assert!(rel(m.cov_ab, covariance_ab(&p, 1e-12).unwrap()) <= 1e-6);
        let bound = variance_bound(&p, 1e-12).unwrap();
        assert!(bound < m.var_b, "{bound} vs {}", m.var_b);
        let series = variance_series(&p, 20, 1e-12).unwrap().value;
        assert!(rel(series, m.var_b) <= 1e-6, "{series} vs {}", m.var_b);
    }
}

#[test]
fn sandwich_gap_closes_toward_linear() {
    let hill = RateFunction::hill(3.0, 5.0).unwrap();
    let linear = RateFunction::Linear { rc: 0.1 };
    let mut gaps = Vec::new();
    for theta in [0.0, 0.25, 0.5, 1.0] {
        let rate = RateFunction::blend(theta, linear.clone(), hill.clone()).unwrap();
        let p = params(rate, 1.0, 0.2, 0.5, BurstKind::Uniform { a: 1, b: 3 });
        let cme = solve_auto(&p, 1e-12, &CmeOptions::default()).unwrap();
        let v = cme.moments().var_b;
        let bound = variance_bound(&p, 1e-12).unwrap();
        assert!(bound <= v * (1.0 + 1e-10), "θ={theta}: {bound} > {v}");
        gaps.push((v - bound) / v);
    }
    assert!(gaps[0].abs() <= 1e-9, "{gaps:?}");
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
}

#[test]
fn grid_doubling_is_stable() {
    let opts = CmeOptions::default();
    for p in small_hill_instances() {
        let a = solve_auto(&p, 1e-12, &opts).unwrap();
        let b = solve_stationary(&p, 2 * a.a_max, 2 * a.b_max, &opts).unwrap();
        let (ma, mb) = (a.moments(), b.moments());
        // 1e-12 is the floor set by the solver residual
        let defect = a.mass_defect.max(b.mass_defect);
        let allowed = 10.0 * defect + 1e-12;
        assert!(rel(ma.mean_b, mb.mean_b) <= allowed, "{} vs {}", ma.mean_b, mb.mean_b);
        // mass moved past b_max enters second moments with weight up to
        // (b_max + max Q)² relative to the variance
        let reach = (a.b_max + p.burst().max_q()) as f64;
        let weight = reach * reach / mb.var_b;
        for (x, y) in [(ma.var_b, mb.var_b), (ma.cov_ab, mb.cov_ab)] {
            assert!(rel(x, y) <= allowed * weight, "{x} vs {y}");
        }
    }
}

#[test]
fn linear_reference_instance() {
    let p = params(
        RateFunction::Linear { rc: 1.0 },
        4.0,
        1.0,
        1.0,
        BurstKind::Deterministic { q0: 1 },
    );
    let cme = solve_stationary(&p, 40, 80, &CmeOptions::default()).unwrap();
    assert!((cme.moments().var_b - 6.0).abs() <= 1e-6);
}
