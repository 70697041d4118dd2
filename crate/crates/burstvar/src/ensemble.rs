//! Parallel SSA ensembles. Trajectory `i` always uses stream `i` of the
//! master seed and batches are pooled in index order, so results equal the
//! sequential estimator bit for bit.

use std::io::Write;

use burstvar_core::ssa::{run_trajectory, EnsembleStats, SsaConfig, TrajectoryMoments};
use burstvar_core::{Result, SystemParams};
use rayon::prelude::*;

pub fn estimate_parallel(params: &SystemParams, cfg: &SsaConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    let batches = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| run_trajectory(params, cfg, i, |_, _, _| {}))
        .collect::<Result<Vec<TrajectoryMoments>>>()?;
    Ok(EnsembleStats::from_batches(&batches))
}

/// Reruns trajectory `index` and writes its sampled states as CSV `t,a,b`.
pub fn dump_trajectory(
    params: &SystemParams,
    cfg: &SsaConfig,
    index: usize,
    w: impl Write,
) -> std::result::Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "a", "b"])?;
    let mut err = None;
    run_trajectory(params, cfg, index, |t, a, b| {
        if err.is_none() {
            if let Err(e) = out.write_record([t.to_string(), a.to_string(), b.to_string()]) {
                err = Some(e);
            }
        }
    })
    .map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))?;
    if let Some(e) = err {
        return Err(e);
    }
    out.flush()?;
    Ok(())
}
