//! Line-delimited trajectory logs: one header line, then one JSON record per step.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Action, Env, Features, Observation, RewardConfig};
use crate::error::{Error, Result};
use crate::model::Instance;

pub const TRAJECTORY_FORMAT: &str = "batchshop-trajectory";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
    pub instance_hash: String,
    pub config: RewardConfig,
    pub features: Features,
}

/// The observation is the one the action was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub clock: f64,
    pub action: Action,
    pub reward: f64,
    pub observation: Observation,
}

pub fn write_trajectory<W: Write>(mut out: W, header: &TrajectoryHeader, records: &[TrajectoryRecord]) -> Result<()> {
    let json = |e: serde_json::Error| Error::Parse(e.to_string());
    writeln!(out, "{}", serde_json::to_string(header).map_err(json)?)?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).map_err(json)?)?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<(TrajectoryHeader, Vec<TrajectoryRecord>)> {
    let mut lines = input.lines();
    let header_line = lines.next().ok_or_else(|| Error::Parse("empty trajectory log".into()))??;
    let header: TrajectoryHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::Parse(format!("trajectory header: {e}")))?;
    if header.format != TRAJECTORY_FORMAT {
        return Err(Error::Parse(format!("not a trajectory log (format '{}')", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("trajectory line {}: {e}", i + 2)))?);
    }
    Ok((header, records))
}

/// Re-executes the logged actions and checks that every observation and
/// reward serializes to the same bytes as in the log.
pub fn replay_trajectory(instance: Arc<Instance>, header: &TrajectoryHeader, records: &[TrajectoryRecord]) -> Result<Env> {
    if header.instance_hash != instance.content_hash() {
        return Err(Error::Mismatch("trajectory was recorded on a different instance".into()));
    }
    let mut env = Env::new(instance, header.config, header.features)?;
    for r in records {
        let live = serde_json::to_string(&env.observe()).expect("observation serializes");
        let logged = serde_json::to_string(&r.observation).expect("observation serializes");
        if live != logged {
            return Err(Error::Mismatch(format!("observation differs at step {}", r.step)));
        }
        let result = env.step(r.action)?;
        if result.reward.to_bits() != r.reward.to_bits() {
            return Err(Error::Mismatch(format!("reward differs at step {}: {} vs {}", r.step, result.reward, r.reward)));
        }
    }
    Ok(env)
}

impl TrajectoryHeader {
    pub fn new(instance: &Instance, config: RewardConfig, features: Features) -> Self {
        TrajectoryHeader {
            format: TRAJECTORY_FORMAT.to_string(),
            version: 1,
            instance_hash: instance.content_hash(),
            config,
            features,
        }
    }
}
