//! Human-readable instance documents.
//!
//! Field names follow the column headers of the usual operation list
//! (machine, machine setup, machining time, quantity, volume, deadline).
//! Machines and setups are referenced by name; the document is resolved to
//! index-based [`Instance`] values on parse and rendered back by name.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BufferSpec, Instance, Job, Machine, Operation, SetupId};

pub const INSTANCE_FORMAT: &str = "batchshop-instance";
pub const INSTANCE_VERSION: u32 = 1;

/// The bundled 3 jobs x 3 machines example.
pub const PAPER_3X3: &str = include_str!("../../data/paper3x3.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub format: String,
    pub version: u32,
    pub machines: Vec<MachineDoc>,
    pub transport: Vec<Vec<f64>>,
    pub buffers: Vec<BufferDoc>,
    #[serde(default)]
    pub jobs: Vec<JobDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineDoc {
    pub name: String,
    /// Setup labels, the first one being the neutral setup.
    pub setups: Vec<String>,
    pub setup_time: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferDoc {
    pub machine: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobDoc {
    pub name: String,
    pub quantity: u32,
    pub deadline: f64,
    pub operations: Vec<OperationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationDoc {
    pub machine: String,
    pub setup: String,
    pub machining_time: f64,
    pub volume: f64,
}

impl InstanceDoc {
    pub fn from_instance(inst: &Instance) -> Self {
        let machines = inst
            .machines
            .iter()
            .map(|m| MachineDoc { name: m.name.clone(), setups: m.setups.clone(), setup_time: m.setup_time.clone() })
            .collect();
        let buffers = inst
            .buffers
            .iter()
            .map(|b| BufferDoc { machine: inst.machines[b.machine].name.clone(), capacity: b.capacity })
            .collect();
        let jobs = inst
            .jobs
            .iter()
            .map(|j| JobDoc {
                name: j.name.clone(),
                quantity: j.batch_size,
                deadline: j.deadline,
                operations: j
                    .ops
                    .iter()
                    .map(|op| {
                        let m = &inst.machines[op.machine];
                        OperationDoc {
                            machine: m.name.clone(),
                            setup: m.setups[op.setup.0].clone(),
                            machining_time: op.unit_time,
                            volume: op.volume,
                        }
                    })
                    .collect(),
            })
            .collect();
        InstanceDoc {
            format: INSTANCE_FORMAT.to_string(),
            version: INSTANCE_VERSION,
            machines,
            transport: inst.transport.clone(),
            buffers,
            jobs,
        }
    }

    /// Resolves names to indices and validates the result.
    pub fn into_instance(self) -> Result<Instance> {
        if self.format != INSTANCE_FORMAT {
            return Err(Error::invalid("format", format!("expected '{INSTANCE_FORMAT}', got '{}'", self.format)));
        }
        if self.version != INSTANCE_VERSION {
            return Err(Error::invalid("version", format!("unsupported version {}", self.version)));
        }
        let mut by_name = HashMap::new();
        for (i, m) in self.machines.iter().enumerate() {
            if by_name.insert(m.name.as_str(), i).is_some() {
                return Err(Error::invalid(format!("machines[{i}].name"), format!("duplicate machine '{}'", m.name)));
            }
        }
        let machine_idx = |path: String, name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(path, format!("unknown machine '{name}'")))
        };

        let machines: Vec<Machine> = self
            .machines
            .iter()
            .enumerate()
            .map(|(i, m)| Machine { id: i, name: m.name.clone(), setups: m.setups.clone(), setup_time: m.setup_time.clone() })
            .collect();

        let mut buffers: Vec<Option<BufferSpec>> = vec![None; machines.len()];
        for (i, b) in self.buffers.iter().enumerate() {
            let k = machine_idx(format!("buffers[{i}].machine"), &b.machine)?;
            if buffers[k].is_some() {
                return Err(Error::invalid(format!("buffers[{i}]"), format!("second buffer for machine '{}'", b.machine)));
            }
            buffers[k] = Some(BufferSpec { machine: k, capacity: b.capacity });
        }
        let buffers = buffers
            .into_iter()
            .enumerate()
            .map(|(k, b)| b.ok_or_else(|| Error::invalid("buffers", format!("machine '{}' has no buffer", machines[k].name))))
            .collect::<Result<Vec<_>>>()?;

        let mut jobs = Vec::with_capacity(self.jobs.len());
        for (i, j) in self.jobs.into_iter().enumerate() {
            let mut ops = Vec::with_capacity(j.operations.len());
            for (o, op) in j.operations.iter().enumerate() {
                let path = format!("jobs[{i}].operations[{o}]");
                let k = machine_idx(format!("{path}.machine"), &op.machine)?;
                let setup = machines[k].setups.iter().position(|s| *s == op.setup).ok_or_else(|| {
                    Error::invalid(format!("{path}.setup"), format!("machine '{}' has no setup '{}'", op.machine, op.setup))
                })?;
                ops.push(Operation { machine: k, setup: SetupId(setup), unit_time: op.machining_time, volume: op.volume });
            }
            jobs.push(Job { id: i, name: j.name, batch_size: j.quantity, deadline: j.deadline, ops });
        }

        let inst = Instance { machines, jobs, buffers, transport: self.transport };
        inst.validate()?;
        Ok(inst)
    }
}

pub fn parse_instance(text: &str, format: Format) -> Result<Instance> {
    let doc: InstanceDoc = match format {
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
    };
    doc.into_instance()
}

pub fn serialize_instance(inst: &Instance, format: Format) -> String {
    let doc = InstanceDoc::from_instance(inst);
    match format {
        Format::Toml => toml::to_string(&doc).expect("instance document serializes to TOML"),
        Format::Json => serde_json::to_string_pretty(&doc).expect("instance document serializes to JSON"),
    }
}

pub fn paper_instance() -> Instance {
    parse_instance(PAPER_3X3, Format::Toml).expect("bundled instance is valid")
}

/// Loads an instance from a path, or the bundled example when given `paper3x3`.
pub fn load_instance(spec: &str) -> Result<Instance> {
    if spec == "paper3x3" {
        return Ok(paper_instance());
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text, Format::from_path(path))
}
