//! Finite-stage construction of the deputy tables Γ, Δ and d, with the
//! constraint ledger, the requirement schedule, an independent verifier and
//! a path sampler.

pub mod constraints;
pub mod deputies;
pub mod dot;
pub mod engine;
pub mod focus;
pub mod kernel;
pub mod mutate;
pub mod sampler;
pub mod scheduler;
pub mod snapshot;
pub mod tables;
pub mod verifier;

pub use constraints::{Constraint, ConstraintLedger, LedgerError, NewConstraint, Provenance};
pub use deputies::{Anchor, DeputyError, DeputyRecord, DeputyRegistry};
pub use engine::{run, run_with, ConstructionState, EngineError, Event, Outcome, RunConfig, RunOptions};
pub use kernel::{BinaryString, KernelError, Lex, NumTuple};
pub use tables::{DeltaEntry, DeltaTable, GammaEntry, GammaTable, TableError};
pub use scheduler::{requirement_at, FreshCounter, Requirement, ScheduleConfig};
pub use dot::{export_dot, View};
pub use sampler::{Strategy, Verdict};
pub use snapshot::{load, save, MalformedSnapshot};
pub use verifier::{verify, verify_all, Check, Violation};
