//! Sweep, grid and single-point drivers and their file outputs.
//!
//! Points are evaluated on the rayon pool and collected in axis order, and
//! every SSA run draws from a seed derived from the master seed and the
//! point index, so output files depend only on the config.
//!
//! Cells that could not be produced hold a marker instead of a number:
//! `NA` (method not requested or not defined for this rate), `SKIP` (the
//! CME grid exceeds its caps) and `ERR` (the method failed; the message is in
//! the JSON sidecar).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use burstvar_core::analytics::moment_report;
use burstvar_core::{EnsembleStats, MomentOptions, MomentReport, SsaConfig, SystemParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cme::{solve_auto, CmeError, CmeMoments, TruncatedCme};
use crate::config::{Method, RunConfig};
use crate::ensemble::{dump_trajectory, estimate_parallel};
use crate::error::CliError;

pub const SWEEP_HEADER: [&str; 9] = [
    "MeanA",
    "BoundVarB",
    "SeriesVarB",
    "VarFromLNA",
    "VarB_SSA",
    "VarB_SSA_SE",
    "VarB_CME",
    "CovAB",
    "MeanB",
];

pub const GRID_HEADER: [&str; 9] = [
    "gamma_B",
    "MeanA",
    "RelErrBoundPct",
    "RelErrLnaPct",
    "Reference",
    "VarRef",
    "VarRefSE",
    "BoundVarB",
    "VarFromLNA",
];

pub const BURST_CONVENTION: &str = "Q >= 1; truncated laws renormalized on {1..m_n}; shifted_binomial is 1 + Bin(n, p)";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    Na,
    Skip,
    Err,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Value(v) => write!(f, "{v:?}"),
            Cell::Na => f.write_str("NA"),
            Cell::Skip => f.write_str("SKIP"),
            Cell::Err => f.write_str("ERR"),
        }
    }
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    NotRun,
    Skipped(String),
    Failed(String),
    Done(T),
}

impl<T> Outcome<T> {
    pub fn done(&self) -> Option<&T> {
        match self {
            Outcome::Done(v) => Some(v),
            _ => None,
        }
    }

    fn cell(&self, f: impl Fn(&T) -> f64) -> Cell {
        match self {
            Outcome::NotRun => Cell::Na,
            Outcome::Skipped(_) => Cell::Skip,
            Outcome::Failed(_) => Cell::Err,
            Outcome::Done(v) => Cell::Value(f(v)),
        }
    }

    fn status(&self) -> Value {
        match self {
            Outcome::NotRun => json!("not_run"),
            Outcome::Skipped(m) => json!({ "skipped": m }),
            Outcome::Failed(m) => json!({ "error": m }),
            Outcome::Done(_) => json!("ok"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmeSummary {
    pub a_max: u64,
    pub b_max: u64,
    pub mass_defect: f64,
    pub residual: f64,
    pub moments: CmeMoments,
}

impl From<&TruncatedCme> for CmeSummary {
    fn from(c: &TruncatedCme) -> Self {
        Self {
            a_max: c.a_max,
            b_max: c.b_max,
            mass_defect: c.mass_defect,
            residual: c.residual,
            moments: c.moments(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub lambda: f64,
    pub gamma_b: f64,
    pub analytics: Result<MomentReport, String>,
    pub ssa_config: Option<SsaConfig>,
    pub ssa: Outcome<EnsembleStats>,
    pub cme: Outcome<CmeSummary>,
}

/// Per-point stream seed: SplitMix64 finalizer over the master seed and index.
pub fn point_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn moment_options(cfg: &RunConfig) -> MomentOptions {
    MomentOptions {
        order: cfg.series_order,
        rel_tol: cfg.rel_tol,
    }
}

fn run_cme(cfg: &RunConfig, params: &SystemParams) -> (Outcome<CmeSummary>, Option<TruncatedCme>) {
    match solve_auto(params, cfg.rel_tol, &cfg.cme) {
        Ok(c) => (Outcome::Done(CmeSummary::from(&c)), Some(c)),
        Err(e @ CmeError::TooLarge { .. }) => (Outcome::Skipped(e.to_string()), None),
        Err(e) => (Outcome::Failed(e.to_string()), None),
    }
}

fn run_ssa(params: &SystemParams, ssa: &SsaConfig) -> Outcome<EnsembleStats> {
    match estimate_parallel(params, ssa) {
        Ok(s) => Outcome::Done(s),
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

/// How a point chooses which oracles to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OracleMode {
    /// Every requested oracle.
    All,
    /// SSA only where the CME is unavailable.
    Reference,
}

fn evaluate(cfg: &RunConfig, lambda: f64, gamma_b: f64, index: u64, mode: OracleMode) -> PointResult {
    let params = match cfg.params(lambda, gamma_b) {
        Ok(p) => p,
        Err(e) => {
            return PointResult {
                lambda,
                gamma_b,
                analytics: Err(e.to_string()),
                ssa_config: None,
                ssa: Outcome::Failed(e.to_string()),
                cme: Outcome::Failed(e.to_string()),
            }
        }
    };
    let analytics = moment_report(&params, moment_options(cfg)).map_err(|e| e.to_string());
    let cme = if cfg.wants(Method::Cme) {
        run_cme(cfg, &params).0
    } else {
        Outcome::NotRun
    };
    let need_ssa = cfg.wants(Method::Ssa) && (mode == OracleMode::All || cme.done().is_none());
    let ssa_config = need_ssa.then(|| cfg.ssa.for_point(&params, point_seed(cfg.seed, index)));
    let ssa = match &ssa_config {
        Some(s) => run_ssa(&params, s),
        None => Outcome::NotRun,
    };
    PointResult {
        lambda,
        gamma_b,
        analytics,
        ssa_config,
        ssa,
        cme,
    }
}

fn analytic_cell(r: &Result<MomentReport, String>, want: bool, f: impl Fn(&MomentReport) -> Option<f64>) -> Cell {
    match r {
        _ if !want => Cell::Na,
        Err(_) => Cell::Err,
        Ok(r) => f(r).map_or(Cell::Na, Cell::Value),
    }
}

fn point_json(p: &PointResult) -> Value {
    json!({
        "lambda": p.lambda,
        "gamma_b": p.gamma_b,
        "analytics": match &p.analytics {
            Ok(r) => json!({ "series_order": r.series_order, "series_last_term": r.series_last_term, "poisson_a_max": r.poisson_a_max, "sigma0": r.sigma0, "sigma1": r.sigma1 }),
            Err(e) => json!({ "error": e }),
        },
        "ssa": {
            "status": p.ssa.status(),
            "config": p.ssa_config,
            "stats": p.ssa.done(),
        },
        "cme": {
            "status": p.cme.status(),
            "result": p.cme.done(),
        },
    })
}

fn metadata(cfg: &RunConfig, kind: &str) -> Result<Value, CliError> {
    let burst = burstvar_core::BurstDistribution::new(cfg.system.burst)?;
    Ok(json!({
        "kind": kind,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "series_order": cfg.series_order,
        "rel_tol": cfg.rel_tol,
        "lambda_grid": cfg.lambdas(),
        "gamma_b_grid": cfg.gamma_bs(),
        "burst": {
            "m_n": burst.max_q(),
            "min_q": burst.min_q(),
            "mean": burst.mean(),
            "second_moment": burst.second_moment(),
            "convention": BURST_CONVENTION,
        },
        "markers": {
            "NA": "method not requested or undefined for this rate",
            "SKIP": "master-equation grid exceeds its size caps",
            "ERR": "method failed; see points[].*.status",
        },
    }))
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra string column per row, placed at `text_col`.
    pub text: Option<(usize, Vec<String>)>,
    pub sidecar: Value,
}

impl Table {
    pub fn write_csv(&self, w: impl Write) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            if let Some((col, text)) = &self.text {
                rec.insert(*col, text[i].clone());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let text_col = self.text.as_ref().map(|(c, _)| *c);
        let idx = self.header.iter().position(|h| h == name)?;
        if Some(idx) == text_col {
            return None;
        }
        let idx = match text_col {
            Some(c) if idx > c => idx - 1,
            _ => idx,
        };
        Some(self.rows.iter().map(|r| r[idx].clone()).collect())
    }
}

pub fn run_sweep(cfg: &RunConfig) -> Result<(Table, Vec<PointResult>), CliError> {
    cfg.validate()?;
    let gb = cfg.system.gamma_b;
    let points: Vec<PointResult> = cfg
        .lambdas()
        .into_par_iter()
        .enumerate()
        .map(|(i, l)| evaluate(cfg, l, gb, i as u64, OracleMode::All))
        .collect();
    let rows = points
        .iter()
        .map(|p| {
            let a = &p.analytics;
            vec![
                Cell::Value(p.lambda),
                analytic_cell(a, cfg.wants(Method::Bound), |r| Some(r.var_bound)),
                analytic_cell(a, cfg.wants(Method::Series), |r| Some(r.var_series)),
                analytic_cell(a, cfg.wants(Method::Lna), |r| r.lna_var),
                p.ssa.cell(|s| s.var_b),
                p.ssa.cell(|s| s.se_var_b),
                p.cme.cell(|c| c.moments.var_b),
                analytic_cell(a, true, |r| Some(r.cov_ab)),
                analytic_cell(a, true, |r| Some(r.mean_b)),
            ]
        })
        .collect();
    let mut sidecar = metadata(cfg, "sweep")?;
    sidecar["columns"] = json!(SWEEP_HEADER);
    sidecar["points"] = points.iter().map(point_json).collect();
    let table = Table {
        header: SWEEP_HEADER.iter().map(|s| s.to_string()).collect(),
        rows,
        text: None,
        sidecar,
    };
    Ok((table, points))
}

fn rel_err_pct(reference: Option<f64>, est: &Cell) -> Cell {
    match (reference, est) {
        (Some(r), Cell::Value(e)) if r > 0.0 => Cell::Value(100.0 * (r - e).abs() / r),
        (Some(_), Cell::Value(_)) => Cell::Err,
        (_, Cell::Na) => Cell::Na,
        _ => Cell::Err,
    }
}

pub fn run_grid(cfg: &RunConfig) -> Result<(Table, Vec<PointResult>), CliError> {
    cfg.validate()?;
    if !cfg.wants(Method::Cme) && !cfg.wants(Method::Ssa) {
        return Err(CliError::Config("grid needs a reference method (cme or ssa)".into()));
    }
    let cells: Vec<(f64, f64)> = cfg
        .gamma_bs()
        .into_iter()
        .flat_map(|g| cfg.lambdas().into_iter().map(move |l| (g, l)))
        .collect();
    let points: Vec<PointResult> = cells
        .into_par_iter()
        .enumerate()
        .map(|(i, (g, l))| evaluate(cfg, l, g, i as u64, OracleMode::Reference))
        .collect();
    let mut labels = Vec::with_capacity(points.len());
    let rows = points
        .iter()
        .map(|p| {
            let (label, var_ref, se) = match (p.cme.done(), p.ssa.done()) {
                (Some(c), _) => ("cme", Some(c.moments.var_b), Cell::Na),
                (None, Some(s)) => ("ssa", Some(s.var_b), Cell::Value(s.se_var_b)),
                _ => ("none", None, Cell::Err),
            };
            labels.push(label.to_string());
            let bound = analytic_cell(&p.analytics, true, |r| Some(r.var_bound));
            let lna = analytic_cell(&p.analytics, true, |r| r.lna_var);
            vec![
                Cell::Value(p.gamma_b),
                Cell::Value(p.lambda),
                rel_err_pct(var_ref, &bound),
                rel_err_pct(var_ref, &lna),
                var_ref.map_or(Cell::Err, Cell::Value),
                se,
                bound,
                lna,
            ]
        })
        .collect();
    let mut sidecar = metadata(cfg, "grid")?;
    sidecar["columns"] = json!(GRID_HEADER);
    sidecar["points"] = points
        .iter()
        .zip(&labels)
        .map(|(p, l)| {
            let mut v = point_json(p);
            v["reference"] = json!(l);
            v
        })
        .collect();
    let table = Table {
        header: GRID_HEADER.iter().map(|s| s.to_string()).collect(),
        rows,
        text: Some((4, labels)),
        sidecar,
    };
    Ok((table, points))
}

const SWEEP_GP: &str = "\
set datafile separator ','
set datafile missing 'NA'
set terminal pngcairo size 900,600
set output 'sweep.png'
set logscale xy
set xlabel 'E[A]'
set ylabel 'var(B)'
set key top left
plot 'sweep.csv' using 1:2 with lines title 'bound', \\
     '' using 1:3 with lines dashtype 2 title 'series', \\
     '' using 1:4 with lines title 'LNA', \\
     '' using 1:5:6 with yerrorbars title 'SSA', \\
     '' using 1:7 with points pt 6 title 'CME'
";

const GRID_GP: &str = "\
set datafile separator ','
set terminal pngcairo size 1200,500
set output 'grid.png'
set view map
set xlabel 'E[A]'
set ylabel 'gamma_B'
set cbrange [0:60]
set multiplot layout 1,2
set title 'relative error of the bound (%)'
splot 'grid.csv' using 2:1:3 with points pt 5 ps 3 palette notitle
set title 'relative error of the LNA (%)'
splot 'grid.csv' using 2:1:4 with points pt 5 ps 3 palette notitle
unset multiplot
";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes `<name>.csv`, `<name>.json` and optionally `<name>.gp` into `dir`.
pub fn write_table(cfg: &RunConfig, table: &Table, dir: &Path, name: &str) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    fs::write(&csv_path, table.csv_bytes()?)?;
    let json_path = dir.join(format!("{name}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&table.sidecar)? + "\n")?;
    let mut written = vec![csv_path, json_path];
    if cfg.output.gnuplot {
        let gp = dir.join(format!("{name}.gp"));
        fs::write(&gp, if name == "grid" { GRID_GP } else { SWEEP_GP })?;
        written.push(gp);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub lambda: f64,
    pub f: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub moments: MomentReport,
    pub ssa_config: Option<SsaConfig>,
    pub ssa: Option<EnsembleStats>,
    pub ssa_status: Value,
    pub cme: Option<CmeSummary>,
    pub cme_status: Value,
}

/// Single point at `axes.report_lambda`, `system.gamma_b`. Analytics failures
/// are numerical errors; oracle failures are recorded in the report.
pub fn run_report(cfg: &RunConfig, dir: Option<&Path>) -> Result<PointReport, CliError> {
    cfg.validate()?;
    let lambda = cfg.axes.report_lambda;
    let params = cfg.params(lambda, cfg.system.gamma_b)?;
    let moments = moment_report(&params, moment_options(cfg))?;
    let (cme, solved) = if cfg.wants(Method::Cme) {
        run_cme(cfg, &params)
    } else {
        (Outcome::NotRun, None)
    };
    let ssa_config = cfg.wants(Method::Ssa).then(|| cfg.ssa.for_point(&params, point_seed(cfg.seed, 0)));
    let ssa = match &ssa_config {
        Some(s) => run_ssa(&params, s),
        None => Outcome::NotRun,
    };
    let report = PointReport {
        lambda,
        f: params.f(),
        gamma_a: params.gamma_a(),
        gamma_b: params.gamma_b(),
        moments,
        ssa_config,
        ssa: ssa.done().copied(),
        ssa_status: ssa.status(),
        cme: cme.done().cloned(),
        cme_status: cme.status(),
    };
    if let Some(dir) = dir {
        create_dir(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        if cfg.output.trajectory {
            if let Some(s) = &ssa_config {
                let f = fs::File::create(dir.join("trajectory.csv"))?;
                dump_trajectory(&params, s, 0, std::io::BufWriter::new(f))?;
            }
        }
        if cfg.output.stationary {
            if let Some(c) = &solved {
                let f = fs::File::create(dir.join("stationary.csv"))?;
                c.write_csv(std::io::BufWriter::new(f))?;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Axis, RunConfig};

    fn small() -> RunConfig {
        let mut c = RunConfig::from_toml(
            r#"
            methods = ["bound", "series", "lna", "cme"]
            [system]
            gamma_b = 0.5
            rate = { kind = "hill", n_h = 2.0, a0 = 5.0 }
            burst = { kind = "trunc_geometric", p = 0.5, m_n = 21 }
            "#,
        )
        .unwrap();
        c.axes.lambda = Axis::Values(vec![2.0, 5.0]);
        c
    }

    #[test]
    fn single_point_bound_only() {
        let mut c = small();
        c.methods = vec![Method::Bound];
        c.axes.lambda = Axis::Values(vec![5.0]);
        let (t, pts) = run_sweep(&c).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(pts[0].ssa, Outcome::NotRun);
        let text = String::from_utf8(t.csv_bytes().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "5.0");
        assert!(row[1].parse::<f64>().is_ok());
        assert_eq!(&row[2..7], &["NA"; 5]);
    }

    #[test]
    fn oversized_cme_is_skipped() {
        let mut c = small();
        c.cme.max_states = 10;
        let (t, _) = run_sweep(&c).unwrap();
        assert!(t.column("VarB_CME").unwrap().iter().all(|x| *x == Cell::Skip));
    }

    #[test]
    fn one_cell_grid() {
        let mut c = small();
        c.axes.lambda = Axis::Values(vec![5.0]);
        let (t, _) = run_grid(&c).unwrap();
        assert_eq!(t.rows.len(), 1);
        let text = String::from_utf8(t.csv_bytes().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), GRID_HEADER.join(","));
        assert!(text.lines().nth(1).unwrap().contains(",cme,"));
        let e = t.column("RelErrBoundPct").unwrap()[0].value().unwrap();
        assert!(e > 0.0 && e < 1.0);
    }

    #[test]
    fn seeds_differ_per_point() {
        assert_ne!(point_seed(1, 0), point_seed(1, 1));
        assert_ne!(point_seed(1, 0), point_seed(2, 0));
        assert_eq!(point_seed(9, 4), point_seed(9, 4));
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let (t, _) = run_sweep(&c).unwrap();
        let files = write_table(&c, &t, dir.path(), "sweep").unwrap();
        assert_eq!(files.len(), 3);
        let meta: Value = serde_json::from_slice(&fs::read(&files[1]).unwrap()).unwrap();
        assert_eq!(meta["burst"]["m_n"], 21);
        assert_eq!(meta["points"].as_array().unwrap().len(), 2);
    }
}
