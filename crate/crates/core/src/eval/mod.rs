//! Schedule validation, KPIs, Gantt rendering and export.

mod export;
mod gantt;
mod kpis;
mod schedule;
mod validate;

pub use export::{intervals_csv, ScheduleDoc, SCHEDULE_FORMAT};
pub use gantt::{render_gantt, GanttFormat};
pub use kpis::{compute_kpis, Kpis};
pub use schedule::{IntervalKind, OpTiming, Schedule, ScheduledInterval};
pub use validate::{validate_schedule, Violation, ViolationCode};
