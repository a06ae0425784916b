//! Named Monte-Carlo experiments producing CI-bearing result tables.
//!
//! Runs fan out over rayon and are collected in trial order, so a config
//! (seed included) fixes every row regardless of the thread count.

mod classic;
mod config;
mod local;
mod outlets;
mod table;

use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

pub use classic::exp_classic;
pub use config::{ExperimentConfig, EXPERIMENTS};
pub use local::{exp_local_laws, tv_difference};
pub use outlets::{exp_outlet_growth, exp_pond_volume, exp_ratio_density, exp_tau_decay, exp_tau_tail};
pub use table::{est_cells, num, Column, Gate, ResultTable, CI_SUFFIX};

use crate::error::{Error, Result};
use crate::weights::{trial_seed, WeightField};

pub mod stream {
    pub const TAU_TAIL: u64 = 0xe0;
    pub const POND_VOLUME: u64 = 0xe1;
    pub const OUTLET_GROWTH: u64 = 0xe2;
    pub const TAU_DECAY: u64 = 0xe3;
    pub const RATIO_DENSITY: u64 = 0xe4;
    pub const CLASSIC: u64 = 0xe5;
    pub const BOOTSTRAP: u64 = 0xe6;
}

/// Run `f` on the fields of trials `0..trials`, in parallel, keeping trial order.
pub(crate) fn per_trial<T, F>(seed: u64, tag: u64, trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, WeightField) -> Result<T> + Sync + Send,
{
    (0..trials).into_par_iter().map(|i| f(i, WeightField::new(trial_seed(seed, tag, i)))).collect()
}

/// Run the experiment named by the config.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let mut table = match cfg.name.as_str() {
        "exp_tau_tail" => exp_tau_tail(cfg)?,
        "exp_pond_volume" => exp_pond_volume(cfg)?,
        "exp_outlet_growth" => exp_outlet_growth(cfg)?,
        "exp_tau_decay" => exp_tau_decay(cfg)?,
        "exp_ratio_density" => exp_ratio_density(cfg)?,
        "exp_local_laws" => exp_local_laws(cfg)?,
        "exp_classic" => exp_classic(cfg)?,
        other => return Err(Error::Unsupported(format!("unknown experiment {other:?}"))),
    };
    table.meta.insert("config".into(), serde_json::Value::Object(cfg.echo()));
    table.meta.insert("wall_time_s".into(), json!(start.elapsed().as_secs_f64()));
    table.meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    Ok(table)
}

/// Run the experiment and write its CSV and JSON files.
pub fn run_to_files(cfg: &ExperimentConfig) -> Result<(ResultTable, std::path::PathBuf, std::path::PathBuf)> {
    let table = run(cfg)?;
    let (c, j) = table.write_files(&cfg.output)?;
    Ok((table, c, j))
}

pub(crate) fn check_trials(trials: u64, min: u64) -> Result<()> {
    if trials < min {
        return Err(Error::Domain(format!("need at least {min} trials, got {trials}")));
    }
    Ok(())
}
