//! Stage-by-stage execution of the module actions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintLedger, LedgerError, NewConstraint, Provenance};
use crate::deputies::{Anchor, DeputyError, DeputyRegistry};
use crate::focus::FocusState;
use crate::kernel::{extend_ones_zero, BinaryString, NumTuple};
use crate::scheduler::{requirement_at, FreshCounter, FreshOverflow, Requirement, ScheduleConfig};
use crate::tables::{DeltaTable, GammaTable, TableError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: u32,
    pub stages: u64,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaDef {
    pub xi: BinaryString,
    pub args: NumTuple,
    pub bit: u8,
}

/// What an acting module changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fresh: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_key: Option<BinaryString>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deputy: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicas: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum SkipReason {
    AlreadySatisfied,
    NoOp,
    NotADeputy,
    AlreadyDefined,
    AlreadyConstrained { by: u64 },
    BitZero,
    Malformed { detail: String },
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    Acted(Action),
    Skipped(SkipReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub stage: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<Requirement>,
    pub outcome: Outcome,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Defect {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Deputy(#[from] DeputyError),
    #[error(transparent)]
    Fresh(#[from] FreshOverflow),
    #[error("freshness violated: drew {drawn} but {present} already occurs in the state")]
    Stale { drawn: u64, present: u64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("stage {stage}, {requirement}: {defect}")]
pub struct EngineError {
    pub stage: u64,
    pub requirement: String,
    pub defect: Defect,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Rescan the whole state before every stage to confirm freshness.
    pub paranoid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionState {
    pub config: RunConfig,
    /// Number of stages executed so far.
    pub stage: u64,
    pub gamma: GammaTable,
    pub delta: DeltaTable,
    pub constraints: ConstraintLedger,
    pub deputies: DeputyRegistry,
    pub fresh: FreshCounter,
    pub events: Vec<Event>,
    pub focus: Option<FocusState>,
}

type Acted = Result<Outcome, Defect>;

impl ConstructionState {
    pub fn new(n: u32, schedule: ScheduleConfig) -> Self {
        assert!(n >= 1, "n must be positive");
        let focus = match &schedule {
            ScheduleConfig::Canonical => None,
            ScheduleConfig::Focused { root, bound } => Some(FocusState::new(n, root.clone(), *bound)),
        };
        let mut fresh = FreshCounter::default();
        if let ScheduleConfig::Focused { root, bound } = &schedule {
            // The focus parameters count as recorded numerals.
            fresh.observe(root.len()).ok();
            fresh.observe(*bound).ok();
        }
        Self {
            config: RunConfig { n, stages: 0, schedule },
            stage: 0,
            gamma: GammaTable::new(),
            delta: DeltaTable::new(),
            constraints: ConstraintLedger::new(n),
            deputies: DeputyRegistry::new(n),
            fresh,
            events: Vec::new(),
            focus,
        }
    }

    pub fn n(&self) -> u32 {
        self.config.n
    }

    /// Executes one stage.
    pub fn step(&mut self, opts: RunOptions) -> Result<(), EngineError> {
        let s = self.stage;
        let (code, requirement, malformed) = match &self.config.schedule {
            ScheduleConfig::Canonical => {
                let sch = requirement_at(self.n(), s);
                match sch.requirement {
                    Ok(r) => (Some(sch.code), Some(r), None),
                    Err(detail) => (Some(sch.code), None, Some(SkipReason::Malformed { detail })),
                }
            }
            ScheduleConfig::Focused { .. } => {
                let mut focus = self.focus.take().expect("focused run without focus state");
                let pick = focus.pick(s, self);
                self.focus = Some(focus);
                match pick {
                    Some(r) => (None, Some(r), None),
                    None => (None, None, Some(SkipReason::Unavailable)),
                }
            }
        };
        let floor = if opts.paranoid { Some(self.max_numeral()) } else { None };
        let outcome = match (&requirement, malformed) {
            (_, Some(reason)) => Outcome::Skipped(reason),
            (Some(r), None) => self.act(s, r).map_err(|defect| EngineError {
                stage: s,
                requirement: r.to_string(),
                defect,
            })?,
            (None, None) => unreachable!(),
        };
        if let (Some(present), Outcome::Acted(Action { fresh: Some(drawn), .. })) = (floor, &outcome) {
            if *drawn <= present {
                return Err(EngineError {
                    stage: s,
                    requirement: requirement.map(|r| r.to_string()).unwrap_or_default(),
                    defect: Defect::Stale { drawn: *drawn, present },
                });
            }
        }
        let event = Event { stage: s, code, requirement, outcome };
        if let Some(mut focus) = self.focus.take() {
            focus.after_stage(&event, self);
            self.focus = Some(focus);
        }
        self.events.push(event);
        self.stage += 1;
        self.config.stages = self.stage;
        Ok(())
    }

    /// Dispatches a well-formed requirement to its module.
    pub fn act(&mut self, s: u64, r: &Requirement) -> Acted {
        match r {
            Requirement::P { sigma, m } => self.act_p(s, sigma, *m),
            Requirement::D0 { .. } => Ok(Outcome::Skipped(SkipReason::NoOp)),
            Requirement::Dk { k, sigma, tau } => self.act_dk(s, *k, sigma, tau),
            Requirement::Drho { rho } => self.act_drho(s, rho),
            Requirement::Q0 { sigma, args } => self.act_q0(s, sigma, args),
            Requirement::Qmid { k, sigma, args } => self.act_qmid(s, *k, sigma, args),
            Requirement::Qtop { sigma, x } => self.act_qtop(s, sigma, *x),
        }
    }

    fn note(&mut self, s: &BinaryString) -> Result<(), Defect> {
        Ok(self.fresh.observe(s.len())?)
    }

    fn note_tuple(&mut self, t: &NumTuple) -> Result<(), Defect> {
        for &x in &t.0 {
            self.fresh.observe(x)?;
        }
        Ok(())
    }

    /// Defines Γ at `σ⟨1^l0⟩` as `Γ(σ)⟨1^l0⟩` and returns the key and value.
    fn extend_gamma(&mut self, s: u64, sigma: &BinaryString, l: u64) -> Result<(BinaryString, BinaryString), Defect> {
        let key = extend_ones_zero(sigma, l);
        let value = extend_ones_zero(&self.gamma.eval(sigma), l);
        self.gamma.define(&key, value.clone(), s)?;
        self.note(&key)?;
        self.note(&value)?;
        Ok((key, value))
    }

    fn define_delta(&mut self, s: u64, xi: &BinaryString, args: &NumTuple, bit: u8, origin: &BinaryString) -> Result<DeltaDef, Defect> {
        self.delta.define(xi, args, bit, origin.clone(), s)?;
        self.note_tuple(args)?;
        Ok(DeltaDef { xi: xi.clone(), args: args.clone(), bit })
    }

    fn impose(&mut self, c: NewConstraint) -> Result<u64, Defect> {
        let (loc, args, threshold) = (c.loc.clone(), c.args.clone(), c.threshold);
        let id = self.constraints.impose(c)?;
        self.note(&loc)?;
        self.note_tuple(&args)?;
        self.fresh.observe(threshold)?;
        Ok(id)
    }

    /// Whether `Δ(Γ(τ); x⃗)` is defined for some τ comparable with σ.
    pub fn delta_defined_comparable(&self, sigma: &BinaryString, args: &NumTuple) -> bool {
        delta_defined_comparable(&self.gamma, &self.delta, sigma, args)
    }

    fn act_p(&mut self, s: u64, sigma: &BinaryString, m: u64) -> Acted {
        if p_satisfied(&self.gamma, sigma, m) {
            return Ok(Outcome::Skipped(SkipReason::AlreadySatisfied));
        }
        let l = self.fresh.fresh()?;
        let (key, _) = self.extend_gamma(s, sigma, l)?;
        Ok(Outcome::Acted(Action { fresh: Some(l), gamma_key: Some(key), ..Action::default() }))
    }

    /// Replicates every constraint located strictly between `low` and `high`
    /// (and below `max_layer`, if given) to `image`.
    fn replicate(
        &mut self,
        s: u64,
        low: &BinaryString,
        high: &BinaryString,
        max_layer: Option<u32>,
        image: &BinaryString,
    ) -> Result<Vec<u64>, Defect> {
        let sources: Vec<_> = self
            .constraints
            .active_at(high)
            .into_iter()
            .filter(|c| low.is_proper_prefix_of(&c.loc) && c.loc != *high)
            .filter(|c| max_layer.is_none_or(|m| c.layer < m))
            .cloned()
            .collect();
        let mut ids = Vec::with_capacity(sources.len());
        for c in sources {
            ids.push(self.impose(NewConstraint {
                layer: c.layer,
                loc: image.clone(),
                args: c.args,
                threshold: c.threshold,
                value: c.value,
                provenance: Provenance::Replica { origin: c.id, stage: s },
            })?);
        }
        Ok(ids)
    }

    fn act_dk(&mut self, s: u64, k: u32, sigma: &BinaryString, tau: &BinaryString) -> Acted {
        let is_deputy = self
            .deputies
            .lookup(sigma)
            .is_some_and(|r| r.image == *tau && r.layer == k);
        if !is_deputy {
            return Ok(Outcome::Skipped(SkipReason::NotADeputy));
        }
        let anchor = Anchor::Pair { sigma: sigma.clone(), tau: tau.clone() };
        let nu_bar = self.deputies.least_unserved(tau, &anchor);
        let l = self.fresh.fresh()?;
        let nu = extend_ones_zero(&nu_bar, l);
        let image = extend_ones_zero(sigma, nu.len());
        let index = self.deputies.define(nu.clone(), image.clone(), k - 1, anchor, s)?;
        self.note(&nu)?;
        self.note(&image)?;
        let value = extend_ones_zero(&self.gamma.eval(&nu), nu.len());
        self.gamma.define(&image, value.clone(), s)?;
        self.note(&value)?;
        let replicas = self.replicate(s, tau, &nu, Some(k - 1), &image)?;
        Ok(Outcome::Acted(Action {
            fresh: Some(l),
            gamma_key: Some(image),
            deputy: Some(index as u64),
            replicas,
            ..Action::default()
        }))
    }

    fn act_drho(&mut self, s: u64, rho: &BinaryString) -> Acted {
        let anchor = Anchor::Rho { rho: rho.clone() };
        let sigma_bar = self.deputies.least_unserved(&rho.with_bit(false), &anchor);
        let l = self.fresh.fresh()?;
        let sigma = extend_ones_zero(&sigma_bar, l);
        let image = extend_ones_zero(rho, sigma.len());
        let index = self.deputies.define(sigma.clone(), image.clone(), self.n() - 1, anchor, s)?;
        self.note(&sigma)?;
        self.note(&image)?;
        let value = extend_ones_zero(&self.gamma.eval(&sigma), sigma.len());
        self.gamma.define(&image, value.clone(), s)?;
        self.note(&value)?;
        let replicas = self.replicate(s, rho, &sigma, None, &image)?;
        Ok(Outcome::Acted(Action {
            fresh: Some(l),
            gamma_key: Some(image),
            deputy: Some(index as u64),
            replicas,
            ..Action::default()
        }))
    }

    fn act_q0(&mut self, s: u64, sigma: &BinaryString, args: &NumTuple) -> Acted {
        if self.delta_defined_comparable(sigma, args) {
            return Ok(Outcome::Skipped(SkipReason::AlreadyDefined));
        }
        let l = self.fresh.fresh()?;
        let (key, xi) = self.extend_gamma(s, sigma, l)?;
        let bit = obeyed_value(&self.constraints, 0, args, sigma)
            .unwrap_or_else(|| bit_at(sigma, args.first().unwrap_or(0)));
        let delta = self.define_delta(s, &xi, args, bit, &key)?;
        Ok(Outcome::Acted(Action { fresh: Some(l), gamma_key: Some(key), delta: Some(delta), ..Action::default() }))
    }

    fn act_qmid(&mut self, s: u64, k: u32, sigma: &BinaryString, args: &NumTuple) -> Acted {
        if let Some(c) = self.constraints.find_matching(k - 1, args, sigma).first() {
            return Ok(Outcome::Skipped(SkipReason::AlreadyConstrained { by: c.id }));
        }
        let l = self.fresh.fresh()?;
        let loc = extend_ones_zero(sigma, l);
        let value = obeyed_value(&self.constraints, k, args, sigma)
            .unwrap_or_else(|| bit_at(sigma, args.first().unwrap_or(0)));
        let id = self.impose(NewConstraint {
            layer: k - 1,
            loc,
            args: args.clone(),
            threshold: l,
            value,
            provenance: Provenance::QImposed { stage: s },
        })?;
        Ok(Outcome::Acted(Action { fresh: Some(l), constraint: Some(id), ..Action::default() }))
    }

    fn act_qtop(&mut self, s: u64, sigma: &BinaryString, x: u64) -> Acted {
        let n = self.n();
        let bit = bit_at(sigma, x);
        let single = NumTuple(vec![x]);
        if n == 1 {
            if bit == 0 {
                return Ok(Outcome::Skipped(SkipReason::BitZero));
            }
            if self.delta_defined_comparable(sigma, &single) {
                return Ok(Outcome::Skipped(SkipReason::AlreadyDefined));
            }
            let l = self.fresh.fresh()?;
            let (key, xi) = self.extend_gamma(s, sigma, l)?;
            let delta = self.define_delta(s, &xi, &single, 1, &key)?;
            return Ok(Outcome::Acted(Action { fresh: Some(l), gamma_key: Some(key), delta: Some(delta), ..Action::default() }));
        }
        if let Some(c) = self.constraints.find_matching(n - 2, &single, sigma).first() {
            return Ok(Outcome::Skipped(SkipReason::AlreadyConstrained { by: c.id }));
        }
        let l = self.fresh.fresh()?;
        let loc = extend_ones_zero(sigma, l);
        let imposed = |layer, args, value| NewConstraint {
            layer,
            loc: loc.clone(),
            args,
            threshold: l,
            value,
            provenance: Provenance::QImposed { stage: s },
        };
        let action = if bit == 1 {
            let id = self.impose(imposed(n - 2, single, 1))?;
            Action { fresh: Some(l), constraint: Some(id), ..Action::default() }
        } else if n == 2 {
            let (key, xi) = self.extend_gamma(s, sigma, l)?;
            let delta = self.define_delta(s, &xi, &NumTuple(vec![x, l]), 0, &key)?;
            Action { fresh: Some(l), gamma_key: Some(key), delta: Some(delta), ..Action::default() }
        } else {
            let id = self.impose(imposed(n - 3, NumTuple(vec![x, l]), 0))?;
            Action { fresh: Some(l), constraint: Some(id), ..Action::default() }
        };
        Ok(Outcome::Acted(action))
    }

    /// Largest numeral occurring anywhere in the state.
    pub fn max_numeral(&self) -> u64 {
        let mut m = 0u64;
        for (k, e) in self.gamma.iter() {
            m = m.max(k.len()).max(e.value.len());
        }
        for (xi, args, _) in self.delta.iter() {
            m = m.max(xi.len()).max(args.max_entry().unwrap_or(0));
        }
        for c in self.constraints.iter() {
            m = m.max(c.loc.len()).max(c.threshold).max(c.args.max_entry().unwrap_or(0));
        }
        for r in self.deputies.iter() {
            m = m.max(r.source.len()).max(r.image.len());
        }
        for e in &self.events {
            if let Outcome::Acted(Action { fresh: Some(l), .. }) = e.outcome {
                m = m.max(l);
            }
        }
        m
    }
}

/// σ(x), reading past the end as 0.
pub fn bit_at(sigma: &BinaryString, x: u64) -> u8 {
    sigma.bit(x).map_or(0, u8::from)
}

/// Whether some τ ⊇ σ already has `|Γ(τ)| > m`.
pub fn p_satisfied(gamma: &GammaTable, sigma: &BinaryString, m: u64) -> bool {
    gamma.eval(sigma).len() > m || gamma.extension_entries(sigma).any(|(_, e)| e.value.len() > m)
}

/// Value demanded by an active `c(layer, ·, x⃗↾(|x⃗|−1), x̄, i)` at σ with
/// `last(x⃗) > x̄`, if any.
pub fn obeyed_value(ledger: &ConstraintLedger, layer: u32, args: &NumTuple, sigma: &BinaryString) -> Option<u8> {
    let last = args.last()?;
    ledger
        .active_matching(layer, &args.init(), sigma)
        .into_iter()
        .find(|c| last > c.threshold)
        .map(|c| c.value)
}

pub fn delta_defined_comparable(
    gamma: &GammaTable,
    delta: &DeltaTable,
    sigma: &BinaryString,
    args: &NumTuple,
) -> bool {
    if delta.entries_for(args).next().is_none() {
        return false;
    }
    if delta.eval(&gamma.eval(sigma), args).is_some() {
        return true;
    }
    // Above σ only explicit keys change Γ, so look for a key extending σ
    // whose value extends some Δ key of this tuple.
    delta
        .entries_for(args)
        .any(|(xi, _)| gamma.carriers(xi).any(|k| sigma.is_prefix_of(k)))
}

pub fn run(n: u32, stages: u64, schedule: ScheduleConfig) -> Result<ConstructionState, EngineError> {
    run_with(n, stages, schedule, RunOptions::default())
}

pub fn run_with(
    n: u32,
    stages: u64,
    schedule: ScheduleConfig,
    opts: RunOptions,
) -> Result<ConstructionState, EngineError> {
    let mut state = ConstructionState::new(n, schedule);
    for _ in 0..stages {
        state.step(opts)?;
    }
    Ok(state)
}
