//! Master-equation oracle, parallel ensembles, run configuration and the
//! sweep/grid drivers behind the `burstvar` CLI.

pub mod cme;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod run;
pub mod validate;
