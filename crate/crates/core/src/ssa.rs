//! Gillespie direct-method simulation of the bursty two-species system and
//! ensemble estimation of stationary moments.
//!
//! Each trajectory draws from its own ChaCha8 stream (`stream = index`) under
//! the master seed, so results do not depend on how trajectories are
//! scheduled. States are sampled on a fixed time grid after burn-in; each
//! trajectory is one batch for the batch-means standard errors.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::SystemParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SsaConfig {
    pub n_traj: usize,
    pub t_burn: f64,
    pub t_sample: f64,
    pub sample_dt: f64,
    pub seed: u64,
}

impl SsaConfig {
    /// Burn-in of ten slowest relaxation times, sampling every half of the
    /// fastest one.
    pub fn defaults_for(params: &SystemParams, n_traj: usize, t_sample: f64, seed: u64) -> Self {
        let slow = (1.0 / params.gamma_a()).max(1.0 / params.gamma_b());
        let fast = params.gamma_a().max(params.gamma_b());
        Self {
            n_traj,
            t_burn: 10.0 * slow,
            t_sample,
            sample_dt: 0.5 / fast,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    field,
                    reason: "must be finite and > 0",
                })
            }
        };
        positive("ssa.t_burn", self.t_burn)?;
        positive("ssa.t_sample", self.t_sample)?;
        positive("ssa.sample_dt", self.sample_dt)?;
        if self.n_traj == 0 {
            return Err(Error::InvalidParam {
                field: "ssa.n_traj",
                reason: "must be >= 1",
            });
        }
        Ok(())
    }

    /// Grid points per trajectory: `t_burn + k·dt` for `k·dt < t_sample`.
    pub fn samples_per_traj(&self) -> usize {
        let k = libm::ceil(self.t_sample / self.sample_dt) as usize;
        k.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    BirthA,
    DeathA,
    /// Burst of the given size.
    BirthB(u64),
    DeathB,
}

#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub a: u64,
    pub b: u64,
    pub t: f64,
    rng: ChaCha8Rng,
}

impl TrajectoryState {
    /// Empty system at `t = 0` on stream `stream` of `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            a: 0,
            b: 0,
            t: 0.0,
            rng,
        }
    }

    pub fn with_counts(mut self, a: u64, b: u64) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    /// Draws the waiting time and the next event without applying it.
    fn draw(&mut self, params: &SystemParams) -> Result<(f64, Event)> {
        let w = [
            params.f(),
            params.gamma_a() * self.a as f64,
            params.rate().eval(self.a),
            params.gamma_b() * self.b as f64,
        ];
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParam {
                field: "F",
                reason: "all propensities vanish",
            });
        }
        // 1 - U lies in (0, 1]
        let wait = -libm::log(1.0 - self.rng.random::<f64>()) / total;
        let mut target = self.rng.random::<f64>() * total;
        let mut chosen = 3;
        for (i, wi) in w.iter().enumerate() {
            if target < *wi {
                chosen = i;
                break;
            }
            target -= wi;
        }
        // guard against round-off selecting a zero-propensity channel
        while w[chosen] == 0.0 {
            chosen -= 1;
        }
        let event = match chosen {
            0 => Event::BirthA,
            1 => Event::DeathA,
            2 => Event::BirthB(params.burst().sample(&mut self.rng)),
            _ => Event::DeathB,
        };
        Ok((wait, event))
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::BirthA => self.a += 1,
            Event::DeathA => self.a -= 1,
            Event::BirthB(q) => self.b += q,
            Event::DeathB => self.b -= 1,
        }
    }

    /// Advances by one reaction.
    pub fn step(&mut self, params: &SystemParams) -> Result<Event> {
        let (wait, event) = self.draw(params)?;
        self.t += wait;
        self.apply(event);
        Ok(event)
    }
}

/// Per-trajectory sample moments (central moments about the trajectory's
/// own mean, normalized by the sample count).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryMoments {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub m2_a: f64,
    pub m2_b: f64,
    pub c_ab: f64,
    /// Burst events fired during the sampling window.
    pub bursts: u64,
    /// Total B produced by bursts during the sampling window.
    pub burst_mass: u64,
}

#[derive(Default)]
struct Welford {
    n: usize,
    ma: f64,
    mb: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
}

impl Welford {
    fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        let n = self.n as f64;
        let da = a - self.ma;
        let db = b - self.mb;
        self.ma += da / n;
        self.mb += db / n;
        self.saa += da * (a - self.ma);
        self.sbb += db * (b - self.mb);
        self.sab += da * (b - self.mb);
    }
}

/// Runs trajectory `index` from an empty system through burn-in and the
/// sampling window, calling `on_sample(t, a, b)` at each grid point.
pub fn run_trajectory(
    params: &SystemParams,
    cfg: &SsaConfig,
    index: usize,
    mut on_sample: impl FnMut(f64, u64, u64),
) -> Result<TrajectoryMoments> {
    cfg.validate()?;
    let mut state = TrajectoryState::new(cfg.seed, index as u64);
    let total = cfg.samples_per_traj();
    let mut k = 0usize;
    let mut next = cfg.t_burn;
    let mut acc = Welford::default();
    let mut bursts = 0;
    let mut burst_mass = 0;
    loop {
        let (wait, event) = state.draw(params)?;
        let t_next = state.t + wait;
        while next < t_next && k < total {
            on_sample(next, state.a, state.b);
            acc.push(state.a as f64, state.b as f64);
            k += 1;
            next = cfg.t_burn + k as f64 * cfg.sample_dt;
        }
        if k == total {
            break;
        }
        if let Event::BirthB(q) = event {
            if t_next >= cfg.t_burn {
                bursts += 1;
                burst_mass += q;
            }
        }
        state.t = t_next;
        state.apply(event);
    }
    let n = acc.n as f64;
    Ok(TrajectoryMoments {
        n: acc.n,
        mean_a: acc.ma,
        mean_b: acc.mb,
        m2_a: acc.saa / n,
        m2_b: acc.sbb / n,
        c_ab: acc.sab / n,
        bursts,
        burst_mass,
    })
}

/// Pooled stationary moments with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub n_samples: usize,
    pub mean_a: f64,
    pub var_a: f64,
    pub mean_b: f64,
    pub var_b: f64,
    pub cov_ab: f64,
    pub corr_ab: f64,
    pub se_mean_a: f64,
    pub se_var_a: f64,
    pub se_mean_b: f64,
    pub se_var_b: f64,
    pub se_cov_ab: f64,
    pub se_corr_ab: f64,
    /// Burst events observed over all sampling windows.
    pub bursts: u64,
}

impl EnsembleStats {
    /// Reduces per-trajectory moments in index order. Batches must have equal
    /// sample counts.
    pub fn from_batches(batches: &[TrajectoryMoments]) -> Self {
        let k = batches.len();
        let kf = k as f64;
        let n_samples: usize = batches.iter().map(|b| b.n).sum();
        let mean = |f: &dyn Fn(&TrajectoryMoments) -> f64| -> f64 {
            let mut s = crate::numerics::CompensatedSum::default();
            batches.iter().for_each(|b| s.add(f(b)));
            s.value() / kf
        };
        let ma = mean(&|b| b.mean_a);
        let mb = mean(&|b| b.mean_b);
        // per-batch second moments about the pooled means
        let va_i = |b: &TrajectoryMoments| b.m2_a + (b.mean_a - ma) * (b.mean_a - ma);
        let vb_i = |b: &TrajectoryMoments| b.m2_b + (b.mean_b - mb) * (b.mean_b - mb);
        let cab_i = |b: &TrajectoryMoments| b.c_ab + (b.mean_a - ma) * (b.mean_b - mb);
        let var_a = mean(&va_i);
        let var_b = mean(&vb_i);
        let cov_ab = mean(&cab_i);
        let corr = |va: f64, vb: f64, c: f64| {
            if va > 0.0 && vb > 0.0 {
                (c / libm::sqrt(va * vb)).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        };
        let corr_ab = corr(var_a, var_b, cov_ab);
        let se = |f: &dyn Fn(&TrajectoryMoments) -> f64, center: f64| -> f64 {
            if k < 2 {
                return f64::NAN;
            }
            let ss: f64 = batches
                .iter()
                .map(|b| (f(b) - center) * (f(b) - center))
                .sum();
            libm::sqrt(ss / (kf - 1.0) / kf)
        };
        Self {
            n_traj: k,
            n_samples,
            mean_a: ma,
            var_a,
            mean_b: mb,
            var_b,
            cov_ab,
            corr_ab,
            se_mean_a: se(&|b| b.mean_a, ma),
            se_var_a: se(&va_i, var_a),
            se_mean_b: se(&|b| b.mean_b, mb),
            se_var_b: se(&vb_i, var_b),
            se_cov_ab: se(&cab_i, cov_ab),
            se_corr_ab: se(&|b| corr(va_i(b), vb_i(b), cab_i(b)), corr_ab),
            bursts: batches.iter().map(|b| b.bursts).sum(),
        }
    }
}

/// Runs `cfg.n_traj` trajectories sequentially and pools them.
pub fn estimate_stationary(params: &SystemParams, cfg: &SsaConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    let batches = (0..cfg.n_traj)
        .map(|i| run_trajectory(params, cfg, i, |_, _, _| {}))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleStats::from_batches(&batches))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burst::{BurstDistribution, BurstKind};
    use crate::rate::RateFunction;

    fn params(rate: RateFunction, burst: BurstKind) -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, rate, BurstDistribution::new(burst).unwrap()).unwrap()
    }

    #[test]
    fn empty_system_only_births_a() {
        let p = params(
            RateFunction::Linear { rc: 1.0 },
            BurstKind::Deterministic { q0: 1 },
        );
        let mut s = TrajectoryState::new(7, 0);
        assert_eq!(s.step(&p).unwrap(), Event::BirthA);
        assert_eq!((s.a, s.b), (1, 0));
        assert!(s.t > 0.0);
    }

    #[test]
    fn replay_is_identical() {
        let p = params(
            RateFunction::hill(2.0, 5.0).unwrap(),
            BurstKind::TruncGeometric { p: 0.5, m_n: 21 },
        );
        let run = || {
            let mut s = TrajectoryState::new(99, 3);
            (0..500).map(|_| s.step(&p).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn counts_never_negative() {
        let p = params(
            RateFunction::Linear { rc: 2.0 },
            BurstKind::Uniform { a: 1, b: 4 },
        );
        let mut s = TrajectoryState::new(5, 0).with_counts(1, 1);
        for _ in 0..20_000 {
            match s.step(&p).unwrap() {
                Event::DeathA => assert!(s.a < u64::MAX),
                Event::DeathB => assert!(s.b < u64::MAX),
                _ => {}
            }
        }
    }

    #[test]
    fn zero_rate_leaves_b_empty() {
        let p = params(
            RateFunction::Constant { c: 0.0 },
            BurstKind::Deterministic { q0: 1 },
        );
        let cfg = SsaConfig {
            n_traj: 4,
            t_burn: 5.0,
            t_sample: 50.0,
            sample_dt: 0.5,
            seed: 1,
        };
        let st = estimate_stationary(&p, &cfg).unwrap();
        assert_eq!(st.mean_b, 0.0);
        assert_eq!(st.var_b, 0.0);
        assert_eq!(st.cov_ab, 0.0);
        assert_eq!(st.n_samples, 400);
    }

    #[test]
    fn sampling_grid_size() {
        let cfg = SsaConfig {
            n_traj: 1,
            t_burn: 1.0,
            t_sample: 10.0,
            sample_dt: 0.5,
            seed: 0,
        };
        assert_eq!(cfg.samples_per_traj(), 20);
        let p = params(
            RateFunction::Linear { rc: 1.0 },
            BurstKind::Deterministic { q0: 1 },
        );
        let mut times = Vec::new();
        run_trajectory(&p, &cfg, 0, |t, _, _| times.push(t)).unwrap();
        assert_eq!(times.len(), 20);
        assert_eq!(times[0], 1.0);
        assert_eq!(times[19], 10.5);
    }

    #[test]
    fn bad_config() {
        let cfg = SsaConfig {
            n_traj: 0,
            t_burn: 1.0,
            t_sample: 1.0,
            sample_dt: 0.1,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }
}
