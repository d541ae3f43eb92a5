//! The focused schedule: a fair schedule on a sub-universe around a root ρ.
//!
//! Even stages form the deputy lane. Stage `2t` serves lane index
//! `j = trailing_zeros(t + 1)`: `j = 0` is `D(ρ)`, `j ≥ 1` is the D-module of
//! deputy record `j − 1`, resolved to its actual `(k, σ, τ)`. Every index
//! recurs with density `2^−(j+1)`.
//!
//! Odd stages probe a short list of target strings extending ρ with P and Q
//! templates whose numeric parameters come from a small pool. A new target
//! has its templates tried newest-first, after which all targets share a
//! round robin. Targets are ρ, ρ⟨0⟩, ρ⟨1⟩, the first `bound + 1` deputy
//! images of layer n−1 and constraint locations, the first key each such
//! location yields under an obeyed Q(0)-module, and each lower-layer deputy
//! image whose source passes a Γ key strictly above its anchor (one per key).
//! Targets whose Γ value has fresh length multiply the fresh counter when
//! probed, so the list is kept this sparse on purpose.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::deputies::Anchor;
use crate::engine::{obeyed_value, ConstructionState, Event, Outcome};
use crate::kernel::{BinaryString, NumTuple};
use crate::scheduler::Requirement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Root,
    TopImage,
    ConstraintLoc,
    ProbeKey,
    Importing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub string: BinaryString,
    pub kind: TargetKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusState {
    n: u32,
    root: BinaryString,
    bound: u64,
    targets: Vec<Target>,
    /// Templates of new targets; the last element is scheduled next.
    pending: Vec<Requirement>,
    cursor: u64,
    template_cursor: Vec<u64>,
    probed_locs: BTreeSet<BinaryString>,
    imported: BTreeSet<BinaryString>,
    seen_deputies: usize,
    seen_constraints: u64,
}

impl FocusState {
    pub fn new(n: u32, root: BinaryString, bound: u64) -> Self {
        let mut f = Self {
            n,
            root: root.clone(),
            bound,
            targets: Vec::new(),
            pending: Vec::new(),
            cursor: 0,
            template_cursor: Vec::new(),
            probed_locs: BTreeSet::new(),
            imported: BTreeSet::new(),
            seen_deputies: 0,
            seen_constraints: 0,
        };
        let empty = ConstructionState::new(n, crate::scheduler::ScheduleConfig::Canonical);
        for s in [root.clone(), root.with_bit(false), root.with_bit(true)] {
            f.add_target(s, TargetKind::Root, &empty);
        }
        f
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    /// Numeric parameters tried at `t`.
    fn pool(&self, t: &BinaryString, state: &ConstructionState) -> Vec<u64> {
        let cap = 3 * (self.bound as usize + 1) + 1;
        let mut pool = vec![self.root.len()];
        pool.extend(0..=self.bound);
        for c in state.constraints.active_at(t) {
            pool.extend((0..=self.bound).map(|i| c.threshold + 1 + i));
        }
        let mut seen = BTreeSet::new();
        pool.retain(|x| seen.insert(*x));
        pool.truncate(cap);
        pool
    }

    fn templates(&self, t: &BinaryString, state: &ConstructionState) -> Vec<Requirement> {
        let pool = self.pool(t, state);
        let n = self.n;
        let fits = |args: &NumTuple| args.max_entry().is_none_or(|m| m < t.len());
        let mut out = Vec::new();
        if n > 1 {
            out.extend(
                tuples(&pool, n as usize)
                    .filter(fits)
                    .take(2 * pool.len())
                    .map(|args| Requirement::Q0 { sigma: t.clone(), args }),
            );
        }
        out.extend(
            pool.iter()
                .filter(|&&x| x < t.len())
                .map(|&x| Requirement::Qtop { sigma: t.clone(), x }),
        );
        for k in 1..n.saturating_sub(1) {
            out.extend(
                tuples(&pool, (n - k) as usize)
                    .filter(fits)
                    .take(pool.len())
                    .map(|args| Requirement::Qmid { k, sigma: t.clone(), args }),
            );
        }
        out.push(Requirement::P { sigma: t.clone(), m: self.bound });
        out
    }

    fn add_target(&mut self, string: BinaryString, kind: TargetKind, state: &ConstructionState) {
        let mut templates = self.templates(&string, state);
        templates.reverse();
        self.pending.extend(templates);
        self.targets.push(Target { string, kind });
        self.template_cursor.push(0);
    }

    /// The requirement for stage `s`, or `None` if the lane has nothing yet.
    pub fn pick(&mut self, s: u64, state: &ConstructionState) -> Option<Requirement> {
        let t = s / 2;
        if s.is_multiple_of(2) {
            let j = (t + 1).trailing_zeros() as usize;
            if j == 0 {
                return Some(Requirement::Drho { rho: self.root.clone() });
            }
            let r = state.deputies.get(j - 1)?;
            return Some(if r.layer == 0 {
                Requirement::D0 { sigma: r.source.clone(), tau: r.image.clone() }
            } else {
                Requirement::Dk { k: r.layer, sigma: r.source.clone(), tau: r.image.clone() }
            });
        }
        if let Some(r) = self.pending.pop() {
            return Some(r);
        }
        if self.targets.is_empty() {
            return None;
        }
        let i = (self.cursor % self.targets.len() as u64) as usize;
        self.cursor += 1;
        let templates = self.templates(&self.targets[i].string, state);
        if templates.is_empty() {
            return None;
        }
        let q = (self.template_cursor[i] % templates.len() as u64) as usize;
        self.template_cursor[i] += 1;
        Some(templates[q].clone())
    }

    /// Grows the target list from what the stage just produced.
    pub fn after_stage(&mut self, event: &Event, state: &ConstructionState) {
        let n = self.n;
        while self.seen_deputies < state.deputies.len() {
            let r = state.deputies.get(self.seen_deputies).expect("record in range").clone();
            self.seen_deputies += 1;
            if !self.root.is_prefix_of(&r.image) {
                continue;
            }
            if r.layer == n - 1 {
                if r.index <= self.bound {
                    self.add_target(r.image, TargetKind::TopImage, state);
                }
            } else if let Anchor::Pair { tau, .. } = &r.anchor {
                let key = state.gamma.governing_key(&r.source).cloned().unwrap_or_default();
                if key.len() > tau.len() && self.imported.insert(key) {
                    self.add_target(r.image, TargetKind::Importing, state);
                }
            }
        }
        while self.seen_constraints < state.constraints.next_id() {
            let id = self.seen_constraints;
            self.seen_constraints += 1;
            if let Some(c) = state.constraints.get(id) {
                if id <= self.bound && self.root.is_prefix_of(&c.loc) {
                    self.add_target(c.loc.clone(), TargetKind::ConstraintLoc, state);
                }
            }
        }
        if let (Some(Requirement::Q0 { sigma, args }), Outcome::Acted(action)) = (&event.requirement, &event.outcome) {
            let at_loc = self
                .targets
                .iter()
                .any(|t| t.kind == TargetKind::ConstraintLoc && t.string == *sigma);
            if at_loc
                && !self.probed_locs.contains(sigma)
                && obeyed_value(&state.constraints, 0, args, sigma).is_some()
            {
                if let Some(key) = &action.gamma_key {
                    self.probed_locs.insert(sigma.clone());
                    self.add_target(key.clone(), TargetKind::ProbeKey, state);
                }
            }
        }
    }
}

/// Tuples of the given length over `pool`, ordered lexicographically by
/// position in the pool.
fn tuples(pool: &[u64], len: usize) -> impl Iterator<Item = NumTuple> + '_ {
    let total = pool.len().checked_pow(len as u32).unwrap_or(usize::MAX);
    (0..total).map(move |mut i| {
        let mut digits = vec![0u64; len];
        for d in digits.iter_mut().rev() {
            *d = pool[i % pool.len()];
            i /= pool.len();
        }
        NumTuple(digits)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_order_follows_pool() {
        let got: Vec<_> = tuples(&[5, 0], 2).map(|t| t.0).collect();
        assert_eq!(got, vec![vec![5, 5], vec![5, 0], vec![0, 5], vec![0, 0]]);
    }

    #[test]
    fn deputy_lane_follows_ruler_sequence() {
        let state = ConstructionState::new(2, crate::scheduler::ScheduleConfig::Canonical);
        let mut f = FocusState::new(2, BinaryString::empty(), 1);
        assert!(matches!(f.pick(0, &state), Some(Requirement::Drho { .. })));
        // no deputy yet, so lane index 1 has nothing to serve
        assert_eq!(f.pick(2, &state), None);
        assert!(matches!(f.pick(4, &state), Some(Requirement::Drho { .. })));
    }
}
