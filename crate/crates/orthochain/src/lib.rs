//! Experiment runner for `orthochain-core`.
//!
//! Experiments are described by an [`ExperimentSpec`], either built in code
//! or loaded from a JSON [`ConfigFile`]. [`run`] dispatches on the kind and
//! returns CSV rows plus a one-line summary. All runners are pure functions
//! of their [`ExperimentSpec`]: seeds are derived from the master seed and
//! the parameter tuple, and results are merged in job order, so the thread
//! count never changes the output.
//!
//! ```
//! use orthochain::{record::to_csv_string, run, ExperimentKind, ExperimentSpec, SeedPlan};
//!
//! let spec = ExperimentSpec {
//!     d: vec![16],
//!     depth: 5,
//!     seeds: SeedPlan::Count(2),
//!     ..ExperimentSpec::defaults(ExperimentKind::Chain)
//! };
//! let out = run(&spec).unwrap();
//! assert!(to_csv_string(&out.records).starts_with("kind,n,d,layer,seed,metric,value\n"));
//! ```

pub mod battery;
mod error;
pub mod fit;
pub mod record;
pub mod runners;
pub mod spec;

pub use error::{ExperimentError, Result};
pub use runners::{run, ExperimentOutput};
pub use spec::{ConfigFile, ExperimentKind, ExperimentSpec, SeedPlan};
