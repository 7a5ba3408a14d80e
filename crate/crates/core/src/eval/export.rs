use serde::{Deserialize, Serialize};

use super::{Kpis, Schedule, ScheduledInterval};
use crate::error::{Error, Result};
use crate::model::Instance;

pub const SCHEDULE_FORMAT: &str = "batchshop-schedule";

/// Versioned schedule export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDoc {
    pub format: String,
    pub version: u32,
    pub instance_hash: String,
    pub intervals: Vec<ScheduledInterval>,
    pub completion: Vec<Option<f64>>,
    pub kpis: Kpis,
}

impl ScheduleDoc {
    pub fn new(schedule: &Schedule, kpis: Kpis) -> Self {
        ScheduleDoc {
            format: SCHEDULE_FORMAT.to_string(),
            version: 1,
            instance_hash: schedule.instance_hash.clone(),
            intervals: schedule.intervals.clone(),
            completion: schedule.completion.clone(),
            kpis,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            instance_hash: self.instance_hash.clone(),
            intervals: self.intervals.clone(),
            completion: self.completion.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScheduleDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.format != SCHEDULE_FORMAT {
            return Err(Error::Parse(format!("not a schedule document (format '{}')", doc.format)));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

/// One CSV row per interval.
pub fn intervals_csv(instance: &Instance, schedule: &Schedule) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["job", "op", "machine", "kind", "start", "end", "setup"]).unwrap();
    for iv in &schedule.intervals {
        let job = iv.job.map(|j| instance.jobs[j].name.clone()).unwrap_or_default();
        let op = iv.op_index.map(|o| (o + 1).to_string()).unwrap_or_default();
        let machine = &instance.machines[iv.machine];
        let setup = machine.setups.get(iv.setup.0).cloned().unwrap_or_default();
        w.write_record([job, op, machine.name.clone(), iv.kind.as_str().to_string(), iv.start.to_string(), iv.end.to_string(), setup])
            .unwrap();
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}
