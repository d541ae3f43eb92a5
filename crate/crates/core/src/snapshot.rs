//! Versioned JSON snapshots of a construction state.
//!
//! Every collection is written in a fixed order (Γ keys and Δ strings
//! length-lex, constraints by id, deputies by index) so equal states give
//! identical bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintLedger};
use crate::deputies::{DeputyRecord, DeputyRegistry};
use crate::engine::{ConstructionState, Event, RunConfig};
use crate::focus::FocusState;
use crate::kernel::{BinaryString, NumTuple};
use crate::scheduler::{FreshCounter, ScheduleConfig};
use crate::tables::{DeltaEntry, DeltaTable, GammaEntry, GammaTable};

pub const FORMAT: &str = "deputy-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("malformed snapshot: {0}")]
pub struct MalformedSnapshot(pub String);

#[derive(Serialize, Deserialize)]
struct GammaRow {
    key: BinaryString,
    value: BinaryString,
    stage: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct DeltaRow {
    xi: BinaryString,
    args: NumTuple,
    bit: u8,
    stage: u64,
    origin: BinaryString,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format: String,
    version: u32,
    config: RunConfig,
    stage: u64,
    fresh: FreshCounter,
    gamma: Vec<GammaRow>,
    delta: Vec<DeltaRow>,
    constraints: Vec<Constraint>,
    deputies: Vec<DeputyRecord>,
    focus: Option<FocusState>,
    events: Vec<Event>,
}

/// Serializes `state` canonically.
pub fn save(state: &ConstructionState) -> Vec<u8> {
    let mut gamma: Vec<GammaRow> = state
        .gamma
        .iter()
        .map(|(k, e)| GammaRow { key: k.clone(), value: e.value.clone(), stage: e.stage })
        .collect();
    gamma.sort_by(|a, b| a.key.cmp(&b.key));
    let mut delta: Vec<DeltaRow> = state
        .delta
        .iter()
        .map(|(xi, args, e)| DeltaRow {
            xi: xi.clone(),
            args: args.clone(),
            bit: e.bit,
            stage: e.stage,
            origin: e.origin.clone(),
        })
        .collect();
    delta.sort_by(|a, b| (&a.xi, &a.args).cmp(&(&b.xi, &b.args)));
    let snapshot = Snapshot {
        format: FORMAT.into(),
        version: VERSION,
        config: state.config.clone(),
        stage: state.stage,
        fresh: state.fresh,
        gamma,
        delta,
        constraints: state.constraints.iter().cloned().collect(),
        deputies: state.deputies.iter().cloned().collect(),
        focus: state.focus.clone(),
        events: state.events.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&snapshot).expect("snapshot types always serialize");
    bytes.push(b'\n');
    bytes
}

fn malformed(detail: impl Into<String>) -> MalformedSnapshot {
    MalformedSnapshot(detail.into())
}

/// Parses a snapshot and rebuilds the state's indexes.
///
/// Only structural invariants are checked here; semantic ones are the
/// verifier's job, so mutated states still load.
pub fn load(bytes: &[u8]) -> Result<ConstructionState, MalformedSnapshot> {
    let s: Snapshot = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
    if s.format != FORMAT {
        return Err(malformed(format!("unknown format `{}`", s.format)));
    }
    if s.version != VERSION {
        return Err(malformed(format!("unsupported version {}", s.version)));
    }
    let n = s.config.n;
    if n == 0 {
        return Err(malformed("n must be positive"));
    }
    if s.focus.is_some() != matches!(s.config.schedule, ScheduleConfig::Focused { .. }) {
        return Err(malformed("focus state does not match the schedule"));
    }

    let mut gamma = GammaTable::new();
    gamma.remove(&BinaryString::empty());
    for w in s.gamma.windows(2) {
        if w[0].key >= w[1].key {
            return Err(malformed(format!("Γ keys out of order at `{}`", w[1].key)));
        }
    }
    for row in s.gamma {
        gamma.insert_unchecked(row.key, GammaEntry { value: row.value, stage: row.stage });
    }

    let mut delta = DeltaTable::new();
    for row in s.delta {
        if row.bit > 1 {
            return Err(malformed(format!("Δ bit {} at `{}`", row.bit, row.xi)));
        }
        if delta.get(&row.xi, &row.args).is_some() {
            return Err(malformed(format!("duplicate Δ entry at `{}` {}", row.xi, row.args)));
        }
        delta.insert_unchecked(row.xi, row.args, DeltaEntry { bit: row.bit, stage: row.stage, origin: row.origin });
    }

    let mut constraints = ConstraintLedger::new(n);
    let mut last_id = None;
    for c in s.constraints {
        if last_id.is_some_and(|id| id >= c.id) {
            return Err(malformed(format!("constraint ids out of order at #{}", c.id)));
        }
        if n < 2 || c.layer > n - 2 || c.args.len() as u32 != n - 1 - c.layer {
            return Err(malformed(format!("constraint #{} has the wrong shape for n = {n}", c.id)));
        }
        if c.value > 1 {
            return Err(malformed(format!("constraint #{} has value {}", c.id, c.value)));
        }
        last_id = Some(c.id);
        constraints.insert_unchecked(c);
    }

    let mut deputies = DeputyRegistry::new(n);
    for (i, r) in s.deputies.into_iter().enumerate() {
        if r.index != i as u64 {
            return Err(malformed(format!("deputy #{} stored at position {i}", r.index)));
        }
        if r.layer >= n {
            return Err(malformed(format!("deputy #{} has layer {}", r.index, r.layer)));
        }
        deputies.push_unchecked(r);
    }

    Ok(ConstructionState {
        config: s.config,
        stage: s.stage,
        gamma,
        delta,
        constraints,
        deputies,
        fresh: s.fresh,
        events: s.events,
        focus: s.focus,
    })
}
