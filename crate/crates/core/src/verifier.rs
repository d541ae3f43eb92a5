//! Independent checks of a construction state.
//!
//! Every check is a pure function of the state and reports a named
//! `Violation` only when its predicate literally fails. None of them reuse
//! the engine's decision code.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{bit_at, Action, ConstructionState, Event, Outcome, SkipReason};
use crate::kernel::{extend_ones_zero, BinaryString, NumTuple};
use crate::scheduler::{requirement_at, Requirement, ScheduleConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    /// Offending ids or strings.
    pub subjects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u64>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.check)?;
        if let Some(s) = self.stage {
            write!(f, " stage {s}")?;
        }
        write!(f, " {}: {}", self.subjects.join(", "), self.detail)
    }
}

fn violation(check: &str, subjects: Vec<String>, stage: Option<u64>, detail: String) -> Violation {
    Violation { check: check.to_string(), subjects, stage, detail }
}

/// The check families, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Codes,
    Tables,
    Constraints,
    TopLayer,
    Replication,
    Progress,
    Readback,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Codes,
        Check::Tables,
        Check::Constraints,
        Check::TopLayer,
        Check::Replication,
        Check::Progress,
        Check::Readback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Codes => "codes",
            Check::Tables => "tables",
            Check::Constraints => "constraints",
            Check::TopLayer => "top-layer",
            Check::Replication => "replication",
            Check::Progress => "progress",
            Check::Readback => "readback",
        }
    }

    /// Whether the check has anything to say for this arity.
    pub fn applies(self, n: u32) -> bool {
        match self {
            Check::TopLayer => n > 1,
            Check::Readback => n == 1,
            _ => true,
        }
    }

    pub fn run(self, state: &ConstructionState) -> Vec<Violation> {
        match self {
            Check::Codes => check_codes(state),
            Check::Tables => check_tables(state),
            Check::Constraints => check_constraints(state),
            Check::TopLayer => check_top_layer(state),
            Check::Replication => check_replication(state),
            Check::Progress => check_progress(state),
            Check::Readback => check_readback_n1(state),
        }
    }

    /// Parses `all` or a comma-separated list of check names.
    pub fn parse_list(s: &str) -> Result<Vec<Check>, String> {
        if s == "all" {
            return Ok(Check::ALL.to_vec());
        }
        s.split(',').map(|p| p.trim().parse()).collect()
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check `{s}`"))
    }
}

/// Runs the selected checks that apply to the state's arity.
pub fn verify(state: &ConstructionState, checks: &[Check]) -> Vec<Violation> {
    let n = state.n();
    checks.iter().filter(|c| c.applies(n)).flat_map(|c| c.run(state)).collect()
}

pub fn verify_all(state: &ConstructionState) -> Vec<Violation> {
    verify(state, &Check::ALL)
}

/// First position in `[from, to)` where `s` is not 1 (positions past the end
/// count as not 1).
fn first_non_one(s: &BinaryString, from: u64, to: u64) -> Option<u64> {
    if from >= to {
        return None;
    }
    let mut start = 0;
    for run in s.runs() {
        let end = start + run.len;
        if !run.bit && end > from && start < to {
            return Some(start.max(from));
        }
        start = end;
    }
    (start < to).then(|| start.max(from))
}

pub fn check_codes(state: &ConstructionState) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = state.n();
    for (k, e) in state.gamma.iter() {
        if !(k.is_empty() || k.ends_in_zero()) {
            out.push(violation("C1-C2-shape", vec![k.to_string()], e.stage, "Γ key neither empty nor ending in 0".into()));
        }
    }
    for (xi, args, e) in state.delta.iter() {
        if !xi.ends_in_zero() {
            out.push(violation(
                "C1-C2-shape",
                vec![xi.to_string(), args.to_string()],
                Some(e.stage),
                "Δ key does not end in 0".into(),
            ));
        }
    }
    for r in state.deputies.iter() {
        let base = r.anchor.base();
        if r.image != extend_ones_zero(base, r.source.len()) {
            out.push(violation(
                "C3-deputy-shape",
                vec![format!("deputy #{}", r.index), r.image.to_string()],
                Some(r.stage),
                format!("image is not `{base}` followed by 1^{}0", r.source.len()),
            ));
        }
        if r.layer == n - 1 {
            let mut start = 0;
            for run in r.source.runs() {
                if run.bit {
                    if let Some(p) = first_non_one(&r.image, start, start + run.len) {
                        out.push(violation(
                            "C5-one-bits",
                            vec![format!("deputy #{}", r.index)],
                            Some(r.stage),
                            format!("source has 1 at position {p} but the image does not"),
                        ));
                        break;
                    }
                }
                start += run.len;
            }
        }
    }
    // Activity is decided by 0-ending locations only, so appending 1s to a
    // string never changes the active set.
    let locs: BTreeSet<&BinaryString> = state.constraints.iter().map(|c| &c.loc).collect();
    for loc in locs {
        let ids = |s: &BinaryString| state.constraints.active_at(s).iter().map(|c| c.id).collect::<Vec<_>>();
        let here = ids(loc);
        for k in 1..=3 {
            let mut up = loc.clone();
            up.push_run(true, k);
            if ids(&up) != here {
                out.push(violation("C4-activity", vec![up.to_string()], None, "active set changes under trailing 1s".into()));
            }
        }
    }
    out
}

pub fn check_tables(state: &ConstructionState) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, e) in state.gamma.iter() {
        if k.is_empty() {
            continue;
        }
        let parent = state.gamma.prefix_entries(&k.restrict(k.len() - 1)).into_iter().next();
        if let Some((p, pe)) = parent {
            if !pe.value.is_prefix_of(&e.value) {
                out.push(violation(
                    "gamma-monotone",
                    vec![p.to_string(), k.to_string()],
                    e.stage,
                    format!("Γ(`{k}`) = `{}` does not extend Γ(`{p}`) = `{}`", e.value, pe.value),
                ));
            }
        }
    }
    for args in state.delta.tuples() {
        let keys: BTreeMap<crate::kernel::Lex, u8> = state
            .delta
            .entries_for(args)
            .map(|(k, e)| (crate::kernel::Lex(k.clone()), e.bit))
            .collect();
        for (k, e) in state.delta.entries_for(args) {
            if k.is_empty() {
                continue;
            }
            let below = crate::kernel::prefix_keys(&keys, &k.restrict(k.len() - 1));
            for (p, bit) in below {
                if *bit != e.bit {
                    out.push(violation(
                        "delta-consistent",
                        vec![p.to_string(), k.to_string(), args.to_string()],
                        Some(e.stage),
                        format!("comparable keys carry bits {bit} and {}", e.bit),
                    ));
                }
            }
        }
    }
    for r in state.deputies.iter() {
        let (gs, gt) = (state.gamma.eval(&r.source), state.gamma.eval(&r.image));
        if !gs.is_proper_prefix_of(&gt) {
            out.push(violation(
                "d-gamma",
                vec![format!("deputy #{}", r.index)],
                Some(r.stage),
                format!("Γ(image) = `{gt}` does not strictly extend Γ(source) = `{gs}`"),
            ));
        }
    }
    out
}

pub fn check_constraints(state: &ConstructionState) -> Vec<Violation> {
    let mut out = Vec::new();
    let ledger = &state.constraints;
    for c in ledger.iter() {
        for d in ledger.find_matching(c.layer, &c.args, &c.loc) {
            if d.id > c.id && !(d.loc == c.loc && d.threshold == c.threshold && d.value == c.value) {
                out.push(violation(
                    "constraint-uniqueness",
                    vec![format!("#{}", c.id), format!("#{}", d.id)],
                    Some(d.stage()),
                    "same layer and arguments at comparable locations but different constraints".into(),
                ));
            }
        }
    }
    // Lower constraints against the constraint one layer up.
    for d in ledger.iter() {
        let Some(x) = d.args.last() else { continue };
        let init = d.args.init();
        for c in ledger.comparable_with(&d.loc) {
            if c.layer != d.layer + 1 || c.args != init || x <= c.threshold {
                continue;
            }
            if d.value != c.value {
                out.push(violation(
                    "obedience",
                    vec![format!("#{}", c.id), format!("#{}", d.id)],
                    Some(d.stage()),
                    format!("demands {} past threshold {} but got {}", c.value, c.threshold, d.value),
                ));
            }
            if !c.loc.is_prefix_of(&d.loc) {
                out.push(violation(
                    "threshold-order",
                    vec![format!("#{}", c.id), format!("#{}", d.id)],
                    Some(d.stage()),
                    format!("`{}` does not extend `{}`", d.loc, c.loc),
                ));
            }
        }
    }
    // Δ entries against layer-0 constraints.
    for (xi, args, e) in state.delta.iter() {
        let Some(x) = args.last() else { continue };
        let init = args.init();
        let mut carriers: BTreeSet<&BinaryString> = state.gamma.carriers(xi).collect();
        carriers.insert(&e.origin);
        let mut seen = BTreeSet::new();
        for mu in carriers {
            for c in ledger.comparable_with(mu) {
                if c.layer != 0 || c.args != init || x <= c.threshold || !seen.insert(c.id) {
                    continue;
                }
                if e.bit != c.value {
                    out.push(violation(
                        "obedience",
                        vec![format!("#{}", c.id), xi.to_string(), args.to_string()],
                        Some(e.stage),
                        format!("Δ bit {} under a constraint demanding {}", e.bit, c.value),
                    ));
                }
            }
        }
        for c in ledger.comparable_with(&e.origin) {
            if c.layer == 0 && c.args == init && x > c.threshold && !c.loc.is_prefix_of(&e.origin) {
                out.push(violation(
                    "threshold-order",
                    vec![format!("#{}", c.id), e.origin.to_string(), args.to_string()],
                    Some(e.stage),
                    format!("Δ value introduced at `{}` below the location `{}`", e.origin, c.loc),
                ));
            }
        }
    }
    out
}

pub fn check_top_layer(state: &ConstructionState) -> Vec<Violation> {
    let n = state.n();
    if n < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for c in state.constraints.iter().filter(|c| c.layer == n - 2) {
        if c.value == 0 {
            out.push(violation(
                "top-layer-value",
                vec![format!("#{}", c.id)],
                Some(c.stage()),
                "top-layer constraint with value 0".into(),
            ));
        } else if let [x] = c.args.0[..] {
            if bit_at(&c.loc, x) != 1 {
                out.push(violation(
                    "top-layer-bit",
                    vec![format!("#{}", c.id)],
                    Some(c.stage()),
                    format!("demands {x} ∈ G at `{}`, which has no 1 there", c.loc),
                ));
            }
        }
    }
    out
}

type Signature = (u32, NumTuple, u64, u8);

fn signatures(state: &ConstructionState, at: &BinaryString, below: u32) -> Vec<Signature> {
    let mut v: Vec<Signature> = state
        .constraints
        .active_at(at)
        .into_iter()
        .filter(|c| c.layer < below)
        .map(|c| (c.layer, c.args.clone(), c.threshold, c.value))
        .collect();
    v.sort();
    v
}

pub fn check_replication(state: &ConstructionState) -> Vec<Violation> {
    let mut out = Vec::new();
    for r in state.deputies.iter() {
        let (s, t) = (signatures(state, &r.source, r.layer), signatures(state, &r.image, r.layer));
        if s != t {
            let missing: Vec<_> = s.iter().filter(|x| !t.contains(x)).collect();
            let extra: Vec<_> = t.iter().filter(|x| !s.contains(x)).collect();
            out.push(violation(
                "replication",
                vec![format!("deputy #{}", r.index)],
                Some(r.stage),
                format!("{} constraint(s) missing at the image, {} without a source counterpart", missing.len(), extra.len()),
            ));
        }
    }
    out
}

/// The state as it stood at the start of a stage, read off the stage stamps.
struct Before<'a> {
    state: &'a ConstructionState,
    stage: u64,
}

impl Before<'_> {
    fn gamma(&self, sigma: &BinaryString) -> BinaryString {
        self.state
            .gamma
            .prefix_entries(sigma)
            .into_iter()
            .find(|(_, e)| e.stage.is_none_or(|s| s < self.stage))
            .map(|(_, e)| e.value.clone())
            .unwrap_or_default()
    }

    fn p_satisfied(&self, sigma: &BinaryString, m: u64) -> bool {
        self.gamma(sigma).len() > m
            || self
                .state
                .gamma
                .extension_entries(sigma)
                .any(|(_, e)| e.stage.is_none_or(|s| s < self.stage) && e.value.len() > m)
    }

    fn delta_defined_comparable(&self, sigma: &BinaryString, args: &NumTuple) -> bool {
        let here = self.gamma(sigma);
        self.state.delta.entries_for(args).filter(|(_, e)| e.stage < self.stage).any(|(xi, _)| {
            xi.is_prefix_of(&here)
                || self.state.gamma.carriers(xi).any(|k| {
                    sigma.is_prefix_of(k)
                        && self.state.gamma.get(k).and_then(|e| e.stage).is_some_and(|s| s < self.stage)
                })
        })
    }

    fn constrained_by(&self, id: u64, layer: u32, args: &NumTuple, sigma: &BinaryString) -> bool {
        self.state.constraints.get(id).is_some_and(|c| {
            c.stage() < self.stage && c.layer == layer && c.args == *args && c.loc.comparable(sigma)
        })
    }

    fn is_deputy(&self, k: u32, sigma: &BinaryString, tau: &BinaryString) -> bool {
        self.state
            .deputies
            .lookup(sigma)
            .is_some_and(|r| r.stage < self.stage && r.image == *tau && r.layer == k)
    }
}

fn skip_holds(state: &ConstructionState, e: &Event, reason: &SkipReason) -> Result<(), String> {
    let before = Before { state, stage: e.stage };
    let n = state.n();
    let fail = |what: &str| Err(what.to_string());
    match (reason, &e.requirement) {
        (SkipReason::Malformed { .. }, None) => match state.config.schedule {
            ScheduleConfig::Canonical if requirement_at(n, e.stage).requirement.is_err() => Ok(()),
            _ => fail("stage code decodes to a well-formed requirement"),
        },
        (SkipReason::Unavailable, None) => {
            let t = e.stage / 2;
            let j = (t + 1).trailing_zeros() as usize;
            let open = match state.deputies.get(j.wrapping_sub(1)) {
                Some(r) => r.stage >= e.stage,
                None => true,
            };
            if !matches!(state.config.schedule, ScheduleConfig::Focused { .. }) {
                fail("only focused schedules leave a lane empty")
            } else if e.stage % 2 == 1 || (j >= 1 && open) {
                Ok(())
            } else {
                fail("the deputy lane had a record to serve")
            }
        }
        (SkipReason::NoOp, Some(Requirement::D0 { .. })) => Ok(()),
        (SkipReason::AlreadySatisfied, Some(Requirement::P { sigma, m })) => {
            if before.p_satisfied(sigma, *m) {
                Ok(())
            } else {
                fail("no extension had a long enough Γ value")
            }
        }
        (SkipReason::NotADeputy, Some(Requirement::Dk { k, sigma, tau })) => {
            if before.is_deputy(*k, sigma, tau) {
                fail("the pair was a deputy record of that layer")
            } else {
                Ok(())
            }
        }
        (SkipReason::AlreadyDefined, Some(Requirement::Q0 { sigma, args })) => {
            if before.delta_defined_comparable(sigma, args) {
                Ok(())
            } else {
                fail("Δ was undefined along every comparable string")
            }
        }
        (SkipReason::AlreadyDefined, Some(Requirement::Qtop { sigma, x })) if n == 1 => {
            if before.delta_defined_comparable(sigma, &NumTuple(vec![*x])) {
                Ok(())
            } else {
                fail("Δ was undefined along every comparable string")
            }
        }
        (SkipReason::BitZero, Some(Requirement::Qtop { sigma, x })) if n == 1 => {
            if bit_at(sigma, *x) == 0 {
                Ok(())
            } else {
                fail("the bit was 1")
            }
        }
        (SkipReason::AlreadyConstrained { by }, Some(Requirement::Qmid { k, sigma, args })) => {
            if before.constrained_by(*by, k - 1, args, sigma) {
                Ok(())
            } else {
                fail("the named constraint did not match")
            }
        }
        (SkipReason::AlreadyConstrained { by }, Some(Requirement::Qtop { sigma, x })) if n > 1 => {
            if before.constrained_by(*by, n - 2, &NumTuple(vec![*x]), sigma) {
                Ok(())
            } else {
                fail("the named constraint did not match")
            }
        }
        _ => fail("reason does not apply to this requirement"),
    }
}

fn acted_holds(state: &ConstructionState, r: &Requirement, a: &Action) -> Result<(), String> {
    let n = state.n();
    let key_over = |sigma: &BinaryString| -> Result<BinaryString, String> {
        let key = a.gamma_key.as_ref().ok_or("no Γ key recorded")?;
        let e = state.gamma.get(key).ok_or_else(|| format!("Γ key `{key}` is gone"))?;
        if !sigma.is_prefix_of(key) {
            return Err(format!("Γ key `{key}` does not extend `{sigma}`"));
        }
        Ok(e.value.clone())
    };
    let delta_there = |value: &BinaryString| -> Result<(), String> {
        let d = a.delta.as_ref().ok_or("no Δ definition recorded")?;
        if !d.xi.is_prefix_of(value) || state.delta.get(&d.xi, &d.args).is_none() {
            return Err(format!("Δ entry at (`{}`; {}) is gone", d.xi, d.args));
        }
        Ok(())
    };
    let constraint_there = |sigma: &BinaryString| -> Result<(), String> {
        let id = a.constraint.ok_or("no constraint recorded")?;
        match state.constraints.get(id) {
            Some(c) if sigma.is_prefix_of(&c.loc) => Ok(()),
            Some(_) => Err(format!("constraint #{id} is not above `{sigma}`")),
            None => Err(format!("constraint #{id} is gone")),
        }
    };
    match r {
        Requirement::P { sigma, m } => {
            let v = key_over(sigma)?;
            if v.len() > *m {
                Ok(())
            } else {
                Err(format!("Γ value has length {} ≤ {m}", v.len()))
            }
        }
        Requirement::Q0 { sigma, .. } => delta_there(&key_over(sigma)?),
        Requirement::Qmid { sigma, .. } => constraint_there(sigma),
        Requirement::Qtop { sigma, x } if n == 1 => {
            let v = key_over(sigma)?;
            delta_there(&v)?;
            match state.delta.eval(&v, &NumTuple(vec![*x])) {
                Some(1) => Ok(()),
                _ => Err(format!("no Δ witness for {x} ∈ G")),
            }
        }
        Requirement::Qtop { sigma, .. } => {
            if a.constraint.is_some() {
                constraint_there(sigma)
            } else {
                delta_there(&key_over(sigma)?)
            }
        }
        Requirement::Drho { .. } | Requirement::Dk { .. } => {
            let idx = a.deputy.ok_or("no deputy recorded")?;
            if state.deputies.get(idx as usize).is_none() {
                return Err(format!("deputy #{idx} is gone"));
            }
            let key = a.gamma_key.as_ref().ok_or("no Γ key recorded")?;
            if state.gamma.get(key).is_none() {
                return Err(format!("Γ key `{key}` is gone"));
            }
            Ok(())
        }
        Requirement::D0 { .. } => Err("D(0, …) never acts".into()),
    }
}

pub fn check_progress(state: &ConstructionState) -> Vec<Violation> {
    let mut out = Vec::new();
    if state.events.len() as u64 != state.stage {
        out.push(violation(
            "progress",
            vec![],
            None,
            format!("{} events logged for {} stages", state.events.len(), state.stage),
        ));
    }
    for (i, e) in state.events.iter().enumerate() {
        if e.stage != i as u64 {
            out.push(violation("progress", vec![], Some(e.stage), format!("event {i} carries stage {}", e.stage)));
            continue;
        }
        let res = match (&e.outcome, &e.requirement) {
            (Outcome::Skipped(reason), _) => skip_holds(state, e, reason),
            (Outcome::Acted(a), Some(r)) => acted_holds(state, r, a),
            (Outcome::Acted(_), None) => Err("acted without a requirement".into()),
        };
        if let Err(detail) = res {
            let subject = e.requirement.as_ref().map(|r| r.to_string()).unwrap_or_default();
            out.push(violation("progress", vec![subject], Some(e.stage), detail));
        }
    }
    out
}

pub fn check_readback_n1(state: &ConstructionState) -> Vec<Violation> {
    if state.n() != 1 {
        return Vec::new();
    }
    // Group the strings to test by the Γ key governing them.
    let mut groups: HashMap<BinaryString, BTreeSet<BinaryString>> = HashMap::new();
    let mut add = |s: &BinaryString| {
        let g = state.gamma.governing_key(s).cloned().unwrap_or_default();
        groups.entry(g).or_default().insert(s.clone());
    };
    for (k, _) in state.gamma.iter() {
        add(k);
    }
    for r in state.deputies.iter() {
        add(&r.source);
        add(&r.image);
    }
    let mut out = Vec::new();
    for (xi, args, e) in state.delta.iter() {
        let (&[x], 1) = (&args.0[..], e.bit) else { continue };
        for key in state.gamma.carriers(xi) {
            for s in groups.get(key).into_iter().flatten() {
                if x < s.len() && bit_at(s, x) == 0 {
                    out.push(violation(
                        "readback",
                        vec![s.to_string(), x.to_string()],
                        Some(e.stage),
                        format!("Δ(Γ(σ); {x}) = 1 but σ({x}) = 0"),
                    ));
                }
            }
        }
    }
    out
}
