//! Finite pseudo-generic paths through a state and limit approximations of
//! Δ_k along them.
//!
//! A path is grown in steps. Each step jumps into the length-lex least
//! witness that properly extends the current path, or appends the strategy's
//! default bit when there is none. Witnesses are the strings acting events
//! left behind (the Γ key or deputy image they defined).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{ConstructionState, Outcome};
use crate::kernel::{extension_keys, BinaryString, Lex, NumTuple};
use crate::scheduler::Requirement;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    Zeros,
    Ones,
    /// Default bit 0, but position x is 1 and witnesses clashing with that
    /// are ignored.
    ForceOne { x: u64 },
    /// Start from σ, then behave like `Zeros`.
    Through { sigma: BinaryString },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Zeros => write!(f, "zeros"),
            Strategy::Ones => write!(f, "ones"),
            Strategy::ForceOne { x } => write!(f, "force:{x}"),
            Strategy::Through { sigma } => write!(f, "through:{sigma}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "zeros" => Ok(Strategy::Zeros),
            None if s == "ones" => Ok(Strategy::Ones),
            Some(("force", x)) => x
                .parse()
                .map(|x| Strategy::ForceOne { x })
                .map_err(|e| format!("bad position `{x}`: {e}")),
            Some(("through", sigma)) => sigma
                .parse()
                .map(|sigma| Strategy::Through { sigma })
                .map_err(|e| format!("bad string `{sigma}`: {e}")),
            _ => Err(format!("unknown strategy `{s}` (zeros, ones, force:<x>, through:<σ>)")),
        }
    }
}

impl Strategy {
    fn default_bit(&self, position: u64) -> bool {
        match self {
            Strategy::Ones => true,
            Strategy::ForceOne { x } => position == *x,
            _ => false,
        }
    }

    fn admits(&self, w: &BinaryString) -> bool {
        match self {
            Strategy::ForceOne { x } => w.bit(*x) != Some(false),
            _ => true,
        }
    }
}

/// A witness met by a path: the requirement, its stage and the string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Met {
    pub stage: u64,
    pub requirement: Requirement,
    pub witness: BinaryString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoGeneric {
    pub path: BinaryString,
    pub met: Vec<Met>,
}

/// Witness strings of acting events, keyed lexicographically.
pub fn witnesses(state: &ConstructionState) -> BTreeMap<Lex, Vec<(u64, Requirement)>> {
    let mut out: BTreeMap<Lex, Vec<(u64, Requirement)>> = BTreeMap::new();
    for e in &state.events {
        if let (Outcome::Acted(a), Some(r)) = (&e.outcome, &e.requirement) {
            if let Some(key) = &a.gamma_key {
                out.entry(Lex(key.clone())).or_default().push((e.stage, r.clone()));
            }
        }
    }
    out
}

/// Grows a path for `steps` steps.
pub fn build_path(state: &ConstructionState, steps: u64, strategy: &Strategy) -> PseudoGeneric {
    build_path_with(&witnesses(state), steps, strategy)
}

/// `build_path` over a precomputed witness map.
pub fn build_path_with(
    witnesses: &BTreeMap<Lex, Vec<(u64, Requirement)>>,
    steps: u64,
    strategy: &Strategy,
) -> PseudoGeneric {
    let mut path = match strategy {
        Strategy::Through { sigma } => sigma.clone(),
        _ => BinaryString::empty(),
    };
    let mut met = Vec::new();
    let record = |path: &BinaryString, met: &mut Vec<Met>| {
        if let Some(list) = witnesses.get(&Lex(path.clone())) {
            for (stage, requirement) in list {
                met.push(Met { stage: *stage, requirement: requirement.clone(), witness: path.clone() });
            }
        }
    };
    record(&path, &mut met);
    for _ in 0..steps {
        let next = extension_keys(witnesses, &path)
            .map(|(w, _)| w)
            .filter(|w| w.len() > path.len() && strategy.admits(w))
            .min_by(|a, b| a.cmp_length_lex(b))
            .cloned();
        match next {
            Some(w) => path = w,
            None => {
                let bit = strategy.default_bit(path.len());
                path.push(bit);
            }
        }
        record(&path, &mut met);
    }
    PseudoGeneric { path, met }
}

/// `{x < |path| : Δ(Γ(path); x) = 1}`.
pub fn readback(state: &ConstructionState, path: &BinaryString) -> BTreeSet<u64> {
    let value = state.gamma.eval(path);
    state
        .delta
        .tuples()
        .filter(|t| t.len() == 1 && t.0[0] < path.len())
        .filter(|t| state.delta.eval(&value, t) == Some(1))
        .map(|t| t.0[0])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Stable { bit: u8, from: u64 },
    /// Last index seen with value 0 and with value 1.
    Oscillating { zero_at: u64, one_at: u64 },
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitEval {
    pub k: u32,
    pub args: NumTuple,
    /// Defined values `(y, v(y))` in increasing y.
    pub values: Vec<(u64, u8)>,
    /// Agreeing tail values needed for a stable verdict.
    pub min_stable: usize,
    pub verdict: Verdict,
}

pub const DEFAULT_MIN_STABLE: usize = 2;

/// The verdict a value list supports.
pub fn verdict_of(values: &[(u64, u8)], min_stable: usize) -> Verdict {
    let Some(&(_, last)) = values.last() else {
        return Verdict::InsufficientData;
    };
    let tail = values.iter().rev().take_while(|(_, v)| *v == last).count();
    if tail >= min_stable.max(1) {
        return Verdict::Stable { bit: last, from: values[values.len() - tail].0 };
    }
    let last_with = |b: u8| values.iter().rev().find(|(_, v)| *v == b).map(|(y, _)| *y);
    match (last_with(0), last_with(1)) {
        (Some(zero_at), Some(one_at)) => Verdict::Oscillating { zero_at, one_at },
        _ => Verdict::InsufficientData,
    }
}

/// Second-to-last arguments y for which some Δ tuple extends `args⟨y⟩` to
/// the full length n.
fn indices(state: &ConstructionState, args: &NumTuple) -> BTreeSet<u64> {
    let n = state.n() as usize;
    state
        .delta
        .tuples()
        .filter(|t| t.len() == n && t.len() > args.len() && t.0.starts_with(&args.0))
        .map(|t| t.0[args.len()])
        .collect()
}

/// The value of Δ_k at `args` along `path`, if the finite data decide it.
/// For k = 0 this is Δ itself; above that a stable verdict one level down.
pub fn level_value(
    state: &ConstructionState,
    path: &BinaryString,
    k: u32,
    args: &NumTuple,
    min_stable: usize,
) -> Option<u8> {
    if k == 0 {
        return state.delta.eval(&state.gamma.eval(path), args);
    }
    match limit_eval(state, path, k - 1, args, min_stable).verdict {
        Verdict::Stable { bit, .. } => Some(bit),
        _ => None,
    }
}

/// Approximates `Δ_{k+1}(Γ(path); args) = lim_y Δ_k(Γ(path); args⟨y⟩)`.
pub fn limit_eval(
    state: &ConstructionState,
    path: &BinaryString,
    k: u32,
    args: &NumTuple,
    min_stable: usize,
) -> LimitEval {
    let values: Vec<(u64, u8)> = indices(state, args)
        .into_iter()
        .filter_map(|y| level_value(state, path, k, &args.with(y), min_stable).map(|v| (y, v)))
        .collect();
    let verdict = verdict_of(&values, min_stable);
    LimitEval { k, args: args.clone(), values, min_stable, verdict }
}

/// A post-threshold value along a path that contradicts an active constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub constraint: u64,
    pub y: u64,
    pub value: u8,
}

/// Checks every constraint active along `path` against the level values
/// observed past its threshold.
pub fn obedience_disagreements(
    state: &ConstructionState,
    path: &BinaryString,
    min_stable: usize,
) -> Vec<Disagreement> {
    let mut out = Vec::new();
    for c in state.constraints.active_at(path) {
        for y in indices(state, &c.args).into_iter().filter(|&y| y > c.threshold) {
            if let Some(v) = level_value(state, path, c.layer, &c.args.with(y), min_stable) {
                if v != c.value {
                    out.push(Disagreement { constraint: c.id, y, value: v });
                }
            }
        }
    }
    out
}

/// Two Δ values 0 and 1 at `⟨|ρ|, y⟩` for distinct y, read off one string θ
/// comparable with an extension of `ρ⟨0⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OscillationWitness {
    pub x: u64,
    pub theta: BinaryString,
    pub zero: (u64, BinaryString),
    pub one: (u64, BinaryString),
    /// Γ keys below θ, shortest first.
    pub chain: Vec<BinaryString>,
}

impl OscillationWitness {
    /// Recomputes both Δ values from the state.
    pub fn revalidate(&self, state: &ConstructionState) -> bool {
        let value = state.gamma.eval(&self.theta);
        let at = |y: u64| state.delta.eval(&value, &NumTuple(vec![self.x, y]));
        self.zero.0 != self.one.0 && at(self.zero.0) == Some(0) && at(self.one.0) == Some(1)
    }
}

/// Searches the strings the state mentions for an oscillation at `x = |ρ|`.
/// The length-lex least θ wins.
pub fn oscillation_witness(state: &ConstructionState, rho: &BinaryString) -> Option<OscillationWitness> {
    if state.n() != 2 {
        return None;
    }
    let x = rho.len();
    let ys: Vec<u64> = indices(state, &NumTuple(vec![x])).into_iter().collect();
    if ys.is_empty() {
        return None;
    }
    let below = rho.with_bit(false);
    let mut candidates: BTreeSet<BinaryString> = BTreeSet::new();
    candidates.extend(state.gamma.iter().map(|(k, _)| k.clone()));
    for r in state.deputies.iter() {
        candidates.insert(r.source.clone());
        candidates.insert(r.image.clone());
    }
    candidates.extend(state.constraints.iter().map(|c| c.loc.clone()));
    for theta in candidates.into_iter().filter(|t| t.comparable(&below)) {
        let value = state.gamma.eval(&theta);
        let mut first = [None, None];
        for &y in &ys {
            let args = NumTuple(vec![x, y]);
            if let Some((key, e)) = state.delta.deciding_entry(&value, &args) {
                let slot = &mut first[e.bit as usize];
                if slot.is_none() {
                    *slot = Some((y, key.clone()));
                }
            }
        }
        if let [Some(zero), Some(one)] = first {
            let mut chain: Vec<BinaryString> =
                state.gamma.prefix_entries(&theta).into_iter().map(|(k, _)| k.clone()).collect();
            chain.reverse();
            return Some(OscillationWitness { x, theta, zero, one, chain });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::ScheduleConfig;

    fn b(s: &str) -> BinaryString {
        s.parse().unwrap()
    }

    #[test]
    fn empty_state_paths_are_default() {
        let st = ConstructionState::new(1, ScheduleConfig::Canonical);
        assert_eq!(build_path(&st, 5, &Strategy::Zeros).path, b("00000"));
        assert_eq!(build_path(&st, 3, &Strategy::Ones).path, b("111"));
        assert_eq!(build_path(&st, 4, &Strategy::ForceOne { x: 2 }).path, b("0010"));
        assert!(readback(&st, &b("0101")).is_empty());
        assert!(oscillation_witness(&ConstructionState::new(2, ScheduleConfig::Canonical), &b("")).is_none());
    }

    #[test]
    fn strategy_text_round_trips() {
        for s in ["zeros", "ones", "force:7", "through:0110"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        assert!("sideways".parse::<Strategy>().is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(verdict_of(&[], 2), Verdict::InsufficientData);
        assert_eq!(verdict_of(&[(3, 1)], 2), Verdict::InsufficientData);
        assert_eq!(verdict_of(&[(1, 0), (4, 1), (9, 1)], 2), Verdict::Stable { bit: 1, from: 4 });
        assert_eq!(verdict_of(&[(1, 1), (4, 0)], 2), Verdict::Oscillating { zero_at: 4, one_at: 1 });
        assert_eq!(verdict_of(&[(1, 1)], 1), Verdict::Stable { bit: 1, from: 1 });
    }

    #[test]
    fn force_one_survives_witnesses() {
        let st = crate::engine::run(1, 300, ScheduleConfig::Canonical).unwrap();
        for x in 0..6 {
            let p = build_path(&st, 6, &Strategy::ForceOne { x }).path;
            assert_eq!(p.bit(x), Some(true));
        }
    }

    #[test]
    fn paths_meet_witnesses() {
        let st = crate::engine::run(1, 2000, ScheduleConfig::Canonical).unwrap();
        let p = build_path(&st, 4, &Strategy::Zeros);
        assert!(!p.met.is_empty());
        assert!(p.met.iter().all(|m| m.witness.is_prefix_of(&p.path)));
        assert!(!st.gamma.eval(&p.path).is_empty());
    }
}
