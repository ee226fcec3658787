//! Dataset reduction, random starts, sweeps and their file formats.

pub mod dataset;
pub mod init;
pub mod io;
pub mod sweep;

pub use dataset::{reduce_dataset, Dataset, ReductionResult};
pub use init::{random_init, scalar_from_summary, InitLaw};
pub use io::{read_sweep_csv, read_trajectory_json, write_sweep_csv, write_trajectory_json, TrajectoryDump};
pub use sweep::{spearman, sweep, sweep_stats, with_worker_pool, EtaGrid, SweepConfig, SweepRow, SweepStats, SWEEP_COLUMNS};
