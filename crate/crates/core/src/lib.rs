//! Scheduling for batch job shops with sequence-dependent setups, transport
//! times, finite buffers and deadlines.
//!
//! * [`model`]: instances and the operation-time formula.
//! * [`env`]: the event-driven decision environment.
//! * [`policies`]: dispatching rules, exact search, tabular and neural learners.
//! * [`eval`]: schedule validation, KPIs, Gantt rendering and export.
//! * [`io`]: instance documents, order catalogs and the random generator.

pub mod env;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod policies;

pub use env::{Action, Env, Features, Observation, RewardConfig};
pub use error::{Error, Result};
pub use eval::{compute_kpis, validate_schedule, Kpis, Schedule};
pub use model::{Instance, SetupId};
