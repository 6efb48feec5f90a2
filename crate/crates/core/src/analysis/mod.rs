//! Shift-error bounds for pooling, their empirical validation, and the
//! zero-padding contamination probe.

pub mod bounds;
pub mod probe;
pub mod sweep;

pub use bounds::{
    capped_relative_bound, consecutive_sample_bound, pooling_error_bound, PoolingBoundInput,
};
pub use probe::{
    probe_layers, shiftability_report, shiftability_report_band_limited, zero_padding_probe,
    ProbeReport, ProbeRow, Recommendation, ShiftabilityReport, StageBound, CONTAMINATION_EPS,
};
pub use sweep::{
    default_fs_list, default_pool_len_list, default_steps, empirical_pool_shift_error,
    random_bound_checks, sweep_fs, sweep_pool_len, BoundCheck, ShiftError, SweepResult, SweepRow,
};
