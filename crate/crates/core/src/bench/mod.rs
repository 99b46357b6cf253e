//! Workload generation, lockstep verification, sweeps and traces.

mod fit;
mod run;
mod verify;
mod workload;

pub use fit::fit_through_origin;
pub use run::{
    build, run_point, sweep, trace, write_csv, BenchRow, Selection, Store, Structure, CSV_HEADER, TRACE_HEADER,
};
pub use verify::{verify, Answer, Disagreement, VerifyOptions, VerifyReport};
pub use workload::{KeyDist, Mix, Op, Workload, WorkloadSpec};
