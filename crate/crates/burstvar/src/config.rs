//! TOML run configuration. The defaults are the reference sweep setup:
//! `F = 1`, `γ_B = 0.01`, Hill(9, 100), `Q ~ Uniform{1..16}`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use burstvar_core::{BurstDistribution, BurstKind, RateFunction, SsaConfig, SystemParams};
use serde::{Deserialize, Serialize};

use crate::cme::CmeOptions;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bound,
    Series,
    Lna,
    Ssa,
    Cme,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Bound, Method::Series, Method::Lna, Method::Ssa, Method::Cme];
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bound" => Ok(Method::Bound),
            "series" => Ok(Method::Series),
            "lna" => Ok(Method::Lna),
            "ssa" => Ok(Method::Ssa),
            "cme" => Ok(Method::Cme),
            other => Err(CliError::Config(format!("unknown method `{other}`"))),
        }
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>, CliError> {
    let mut out: Vec<Method> = Vec::new();
    for m in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("empty method list".into()));
    }
    Ok(out)
}

/// A list of axis values, given explicitly or as an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Axis {
    Values(Vec<f64>),
    Linspace { start: f64, stop: f64, n: usize },
    /// Evenly spaced in `log10`.
    Logspace { start: f64, stop: f64, n: usize },
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        let spaced = |start: f64, stop: f64, n: usize, f: &dyn Fn(f64) -> f64| -> Vec<f64> {
            if n == 1 {
                return vec![start];
            }
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        stop
                    } else if i == 0 {
                        start
                    } else {
                        f(i as f64 / (n - 1) as f64)
                    }
                })
                .collect()
        };
        match *self {
            Axis::Values(ref v) => v.clone(),
            Axis::Linspace { start, stop, n } => {
                spaced(start, stop, n, &|t| start + t * (stop - start))
            }
            Axis::Logspace { start, stop, n } => {
                let (l0, l1) = (start.log10(), stop.log10());
                spaced(start, stop, n, &|t| 10f64.powf(l0 + t * (l1 - l0)))
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        let pts = self.points();
        if pts.is_empty() {
            return Err(CliError::Config(format!("axis `{name}` is empty")));
        }
        if let Some(bad) = pts.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(CliError::Config(format!("axis `{name}` has non-positive value {bad}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub f: f64,
    pub gamma_b: f64,
    pub rate: RateFunction,
    pub burst: BurstKind,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            f: 1.0,
            gamma_b: 0.01,
            rate: RateFunction::Hill { n_h: 9.0, a0: 100.0 },
            burst: BurstKind::Uniform { a: 1, b: 16 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxesSection {
    /// Values of `E[A] = λ`; each point sets `γ_A = F/λ`.
    pub lambda: Axis,
    /// Grid axis; defaults to the single value `system.gamma_b`.
    pub gamma_b: Option<Axis>,
    /// The point used by `report`.
    pub report_lambda: f64,
}

impl Default for AxesSection {
    fn default() -> Self {
        Self {
            lambda: Axis::Logspace { start: 0.1, stop: 200.0, n: 40 },
            gamma_b: None,
            report_lambda: 100.0,
        }
    }
}

/// Unset times are derived per point from the relaxation rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsaSection {
    pub n_traj: usize,
    pub t_burn: Option<f64>,
    pub t_sample: Option<f64>,
    pub sample_dt: Option<f64>,
    /// Default sampling window in units of the slowest relaxation time.
    pub window_relaxations: f64,
}

impl Default for SsaSection {
    fn default() -> Self {
        Self {
            n_traj: 64,
            t_burn: None,
            t_sample: None,
            sample_dt: None,
            window_relaxations: 200.0,
        }
    }
}

impl SsaSection {
    pub fn for_point(&self, params: &SystemParams, seed: u64) -> SsaConfig {
        let slow = (1.0 / params.gamma_a()).max(1.0 / params.gamma_b());
        let base = SsaConfig::defaults_for(params, self.n_traj, self.window_relaxations * slow, seed);
        SsaConfig {
            t_burn: self.t_burn.unwrap_or(base.t_burn),
            t_sample: self.t_sample.unwrap_or(base.t_sample),
            sample_dt: self.sample_dt.unwrap_or(base.sample_dt),
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// `report` only: dump trajectory 0 as `trajectory.csv`.
    pub trajectory: bool,
    /// `report` only: dump the CME solution as `stationary.csv`.
    pub stationary: bool,
    pub gnuplot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trajectory: false,
            stationary: false,
            gnuplot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rel_tol: f64,
    pub series_order: usize,
    pub methods: Vec<Method>,
    pub out: PathBuf,
    pub system: SystemSection,
    pub axes: AxesSection,
    pub ssa: SsaSection,
    pub cme: CmeOptions,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            rel_tol: 1e-12,
            series_order: burstvar_core::charlier::DEFAULT_ORDER,
            methods: Method::ALL.to_vec(),
            out: PathBuf::from("out"),
            system: SystemSection::default(),
            axes: AxesSection::default(),
            ssa: SsaSection::default(),
            cme: CmeOptions::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn wants(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.axes.lambda.points()
    }

    pub fn gamma_bs(&self) -> Vec<f64> {
        match &self.axes.gamma_b {
            Some(axis) => axis.points(),
            None => vec![self.system.gamma_b],
        }
    }

    /// The model at `E[A] = lambda` with decay rate `gamma_b`.
    pub fn params(&self, lambda: f64, gamma_b: f64) -> Result<SystemParams, CliError> {
        let burst = BurstDistribution::new(self.system.burst)?;
        let f = self.system.f;
        Ok(SystemParams::new(f, f / lambda, gamma_b, self.system.rate.clone(), burst)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Config("empty method list".into()));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(CliError::Config("rel_tol must lie in (0, 1)".into()));
        }
        if self.series_order == 0 || self.series_order > burstvar_core::charlier::MAX_ORDER {
            return Err(CliError::Config(format!(
                "series_order must lie in 1..={}",
                burstvar_core::charlier::MAX_ORDER
            )));
        }
        self.axes.lambda.validate("lambda")?;
        if let Some(g) = &self.axes.gamma_b {
            g.validate("gamma_b")?;
        }
        if self.ssa.n_traj == 0 {
            return Err(CliError::Config("ssa.n_traj must be >= 1".into()));
        }
        if !(self.ssa.window_relaxations.is_finite() && self.ssa.window_relaxations > 0.0) {
            return Err(CliError::Config("ssa.window_relaxations must be > 0".into()));
        }
        for lambda in self.lambdas().into_iter().chain([self.axes.report_lambda]) {
            for gb in self.gamma_bs().into_iter().chain([self.system.gamma_b]) {
                let p = self.params(lambda, gb)?;
                self.ssa.for_point(&p, 0).validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_sweep_setup() {
        let c = RunConfig::default();
        let pts = c.lambdas();
        assert_eq!(pts.len(), 40);
        assert_eq!(pts[0], 0.1);
        assert_eq!(pts[39], 200.0);
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(c.gamma_bs(), vec![0.01]);
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_nested_sections() {
        let text = r#"
            seed = 7
            methods = ["bound", "cme"]
            [system]
            f = 1.0
            gamma_b = 0.5
            rate = { kind = "hill", n_h = 2.0, a0 = 5.0 }
            burst = { kind = "trunc_geometric", p = 0.5, m_n = 21 }
            [axes]
            lambda = { values = [5.0] }
            gamma_b = { linspace = { start = 0.1, stop = 1.0, n = 5 } }
            [cme]
            max_doublings = 2
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.methods, vec![Method::Bound, Method::Cme]);
        assert_eq!(c.gamma_bs(), vec![0.1, 0.325, 0.55, 0.775, 1.0]);
        assert_eq!(c.cme.max_doublings, 2);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        let c = RunConfig::from_toml("[system]\ngamma_b = -1.0").unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let c = RunConfig::from_toml("[axes]\nlambda = { values = [] }").unwrap();
        assert!(c.validate().is_err());
        assert!(parse_methods("bound,foo").is_err());
        assert_eq!(parse_methods("lna, bound,lna").unwrap(), vec![Method::Lna, Method::Bound]);
    }
}
