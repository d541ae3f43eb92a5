//! Seeded corruptions of a clean state, one per invariant family.
//!
//! Each mutation picks the first site (in a fixed order) where the change
//! breaks exactly one invariant, so a sound verifier reports exactly the
//! targeted violation and nothing else.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constraints::{Constraint, Provenance};
use crate::deputies::{Anchor, DeputyRecord};
use crate::engine::{ConstructionState, Outcome, SkipReason};
use crate::kernel::{extend_ones_zero, BinaryString, NumTuple};
use crate::scheduler::Requirement;
use crate::tables::{DeltaEntry, GammaEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationKind {
    DeputyShape,
    OneBits,
    GammaMonotone,
    DeltaConsistency,
    DGamma,
    Uniqueness,
    Obedience,
    Threshold,
    TopLayerValue,
    MissingReplica,
}

impl MutationKind {
    pub const ALL: [MutationKind; 10] = [
        MutationKind::DeputyShape,
        MutationKind::OneBits,
        MutationKind::GammaMonotone,
        MutationKind::DeltaConsistency,
        MutationKind::DGamma,
        MutationKind::Uniqueness,
        MutationKind::Obedience,
        MutationKind::Threshold,
        MutationKind::TopLayerValue,
        MutationKind::MissingReplica,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutationKind::DeputyShape => "deputy-shape",
            MutationKind::OneBits => "one-bits",
            MutationKind::GammaMonotone => "gamma-monotone",
            MutationKind::DeltaConsistency => "delta-consistency",
            MutationKind::DGamma => "d-gamma",
            MutationKind::Uniqueness => "uniqueness",
            MutationKind::Obedience => "obedience",
            MutationKind::Threshold => "threshold",
            MutationKind::TopLayerValue => "top-layer-value",
            MutationKind::MissingReplica => "missing-replica",
        }
    }

    /// The violation name the mutation must trigger.
    pub fn target(self) -> &'static str {
        match self {
            MutationKind::DeputyShape => "C3-deputy-shape",
            MutationKind::OneBits => "C5-one-bits",
            MutationKind::GammaMonotone => "gamma-monotone",
            MutationKind::DeltaConsistency => "delta-consistent",
            MutationKind::DGamma => "d-gamma",
            MutationKind::Uniqueness => "constraint-uniqueness",
            MutationKind::Obedience => "obedience",
            MutationKind::Threshold => "threshold-order",
            MutationKind::TopLayerValue => "top-layer-value",
            MutationKind::MissingReplica => "replication",
        }
    }

    /// Applies the mutation, describing what changed, or `None` if the state
    /// has no suitable site.
    pub fn apply(self, state: &mut ConstructionState) -> Option<String> {
        match self {
            MutationKind::DeputyShape => deputy_shape(state),
            MutationKind::OneBits => one_bits(state),
            MutationKind::GammaMonotone => gamma_monotone(state),
            MutationKind::DeltaConsistency => delta_consistency(state),
            MutationKind::DGamma => d_gamma(state),
            MutationKind::Uniqueness => uniqueness(state),
            MutationKind::Obedience => obedience(state),
            MutationKind::Threshold => threshold(state),
            MutationKind::TopLayerValue => top_layer_value(state),
            MutationKind::MissingReplica => missing_replica(state),
        }
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MutationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        MutationKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mutation `{s}`"))
    }
}

/// A length no string in the state reaches.
fn big(state: &ConstructionState) -> u64 {
    state.max_numeral() + 1
}

/// Moves a top-layer deputy's image to `base⟨1^B0⟩` for a B that is not the
/// source length, carrying its Γ value along.
fn deputy_shape(state: &mut ConstructionState) -> Option<String> {
    let n = state.n();
    let b = big(state);
    let r = state
        .deputies
        .iter()
        .find(|r| r.layer == n - 1 && state.constraints.iter().all(|c| c.loc != r.image))?
        .clone();
    let new_image = extend_ones_zero(r.anchor.base(), b);
    let entry = state.gamma.get(&r.image)?.clone();
    state.gamma.insert_unchecked(new_image.clone(), entry);
    let index = r.index as usize;
    state.deputies.replace_unchecked(index, DeputyRecord { image: new_image.clone(), ..r });
    Some(format!("deputy #{index} image moved to `{new_image}`"))
}

/// Re-anchors a top-layer deputy on `source↾p⟨0⟩` for a 1-position p of the
/// source, so the image has the right shape but a 0 where the source has 1.
fn one_bits(state: &mut ConstructionState) -> Option<String> {
    let n = state.n();
    let mut found = None;
    'records: for r in state.deputies.iter().filter(|r| r.layer == n - 1) {
        let Some(old) = state.gamma.get(&r.image) else { continue };
        let mut start = 0;
        for run in r.source.runs() {
            if run.bit {
                let p = start;
                let base = r.source.restrict(p).with_bit(false);
                let image = extend_ones_zero(&base, r.source.len());
                let parent_ok = state
                    .gamma
                    .governing_key(&image.restrict(image.len() - 1))
                    .is_some_and(|g| g.len() <= p);
                let fresh = state.gamma.extension_entries(&image).next().is_none()
                    && state.deputies.lookup_image(&image).is_none()
                    && state.deputies.iter().all(|d| !image.is_prefix_of(&d.source) && !image.is_prefix_of(&d.image))
                    && state.constraints.iter().all(|c| !image.is_prefix_of(&c.loc));
                let reads_clean = state.delta.tuples().filter(|t| t.len() == 1).all(|t| {
                    let x = t.0[0];
                    state.delta.eval(&old.value, t) != Some(1) || x >= image.len() || image.bit(x) == Some(true)
                });
                if parent_ok && fresh && reads_clean {
                    found = Some((r.clone(), base, image, old.clone()));
                    break 'records;
                }
            }
            start += run.len;
        }
    }
    let (r, base, image, entry) = found?;
    state.gamma.insert_unchecked(image.clone(), entry);
    let index = r.index as usize;
    state.deputies.replace_unchecked(
        index,
        DeputyRecord { image: image.clone(), anchor: Anchor::Rho { rho: base }, ..r },
    );
    Some(format!("deputy #{index} re-anchored with image `{image}`"))
}

/// Adds a Γ key just above an existing one whose value is the existing
/// value cut short by one bit.
fn gamma_monotone(state: &mut ConstructionState) -> Option<String> {
    let b = big(state);
    let (key, entry) = state.gamma.iter().find(|(k, e)| !k.is_empty() && !e.value.is_empty())?;
    let (key, entry) = (key.clone(), entry.clone());
    let above = extend_ones_zero(&key, b);
    let value = entry.value.restrict(entry.value.len() - 1);
    state.gamma.insert_unchecked(above.clone(), GammaEntry { value, stage: Some(state.stage) });
    Some(format!("Γ(`{above}`) truncated below Γ(`{key}`)"))
}

/// Adds an opposite Δ bit at an extension of an existing Δ key.
fn delta_consistency(state: &mut ConstructionState) -> Option<String> {
    let b = big(state);
    let (xi, args, e) = state.delta.iter().next().map(|(x, a, e)| (x.clone(), a.clone(), e.clone()))?;
    let key = extend_ones_zero(&xi, b);
    state.delta.insert_unchecked(key.clone(), args.clone(), DeltaEntry { bit: 1 - e.bit, ..e });
    Some(format!("Δ(`{key}`; {args}) set against Δ(`{xi}`; {args})"))
}

/// Sets Γ(image) to Γ(source) for a deputy whose image key is a leaf.
fn d_gamma(state: &mut ConstructionState) -> Option<String> {
    let skipped_p: Vec<(u64, &BinaryString, u64)> = state
        .events
        .iter()
        .filter(|e| matches!(e.outcome, Outcome::Skipped(SkipReason::AlreadySatisfied)))
        .filter_map(|e| match &e.requirement {
            Some(Requirement::P { sigma, m }) => Some((e.stage, sigma, *m)),
            _ => None,
        })
        .collect();
    // A skipped P(σ, m) must stay satisfied without the image's old value.
    let still_satisfied = |image: &BinaryString, new_len: u64| {
        skipped_p.iter().all(|&(stage, sigma, m)| {
            let before = |e: &GammaEntry| e.stage.is_none_or(|s| s < stage);
            !sigma.is_prefix_of(image)
                || new_len > m
                || state.gamma.prefix_entries(sigma).into_iter().find(|(_, e)| before(e)).is_some_and(|(_, e)| e.value.len() > m)
                || state.gamma.extension_entries(sigma).any(|(k, e)| k != image && before(e) && e.value.len() > m)
        })
    };
    let (index, image, value) = state.deputies.iter().find_map(|r| {
        state.gamma.get(&r.image)?;
        if state.gamma.extension_entries(&r.image).nth(1).is_some() {
            return None;
        }
        let parent = state.gamma.eval(&r.image.restrict(r.image.len() - 1));
        let value = state.gamma.eval(&r.source);
        if !parent.is_prefix_of(&value) || !still_satisfied(&r.image, value.len()) {
            return None;
        }
        Some((r.index, r.image.clone(), value))
    })?;
    let mut entry = state.gamma.get(&image)?.clone();
    entry.value = value;
    state.gamma.insert_unchecked(image.clone(), entry);
    Some(format!("Γ at the image of deputy #{index} set to Γ(source)"))
}

/// Duplicates a constraint further up with a different threshold.
fn uniqueness(state: &mut ConstructionState) -> Option<String> {
    let b = big(state);
    let c = state.constraints.iter().next()?.clone();
    let id = state.constraints.next_id();
    let loc = extend_ones_zero(&c.loc, b);
    state.constraints.insert_unchecked(Constraint {
        id,
        loc,
        threshold: b + 1,
        provenance: Provenance::QImposed { stage: state.stage },
        ..c.clone()
    });
    Some(format!("constraint #{id} duplicates #{} with another threshold", c.id))
}

/// Layer-0 constraints governing a Δ entry past their threshold.
fn governed<'a>(
    state: &'a ConstructionState,
    args: &'a NumTuple,
    e: &'a DeltaEntry,
) -> impl Iterator<Item = &'a Constraint> + 'a {
    let last = args.last().unwrap_or(0);
    let init = args.init();
    state
        .constraints
        .comparable_with(&e.origin)
        .into_iter()
        .filter(move |c| c.layer == 0 && c.args == init && last > c.threshold)
}

/// Flips a Δ bit that a layer-0 constraint decides.
fn obedience(state: &mut ConstructionState) -> Option<String> {
    let (xi, args, e) = state
        .delta
        .iter()
        .find(|(_, args, e)| governed(state, args, e).next().is_some())
        .map(|(x, a, e)| (x.clone(), a.clone(), e.clone()))?;
    state.delta.insert_unchecked(xi.clone(), args.clone(), DeltaEntry { bit: 1 - e.bit, ..e });
    Some(format!("Δ(`{xi}`; {args}) flipped against its constraint"))
}

/// Moves an obeyed layer-0 constraint above the key that introduced the Δ
/// value it governs.
fn threshold(state: &mut ConstructionState) -> Option<String> {
    let b = big(state);
    let referenced: BTreeSet<u64> = state
        .events
        .iter()
        .filter_map(|e| match e.outcome {
            Outcome::Skipped(SkipReason::AlreadyConstrained { by }) => Some(by),
            _ => None,
        })
        .chain(state.constraints.iter().filter_map(|c| c.provenance.origin()))
        .collect();
    let free = |c: &Constraint| {
        !referenced.contains(&c.id)
            && state.deputies.iter().all(|r| {
                r.layer <= c.layer || !(c.loc.is_prefix_of(&r.source) || c.loc.is_prefix_of(&r.image))
            })
    };
    let pick = state.delta.iter().find_map(|(_, args, e)| {
        governed(state, args, e)
            .find(|c| {
                c.loc.is_prefix_of(&e.origin) && free(c)
            })
            .map(|c| (c.clone(), e.origin.clone()))
    });
    if let Some((c, eta)) = pick {
        let loc = extend_ones_zero(&eta, b);
        let id = c.id;
        state.constraints.insert_unchecked(Constraint { loc: loc.clone(), ..c });
        return Some(format!("constraint #{id} moved up to `{loc}`"));
    }
    // Otherwise place a lower constraint just above an upper one's location.
    let (c, loc) = state.constraints.iter().filter(|c| c.layer > 0).find_map(|c| {
        (0..c.loc.len()).rev().map(|j| c.loc.restrict(j)).find(|loc| {
            state
                .constraints
                .comparable_with(loc)
                .into_iter()
                .all(|u| u.layer != c.layer || u.args != c.args || u.value == c.value)
                && state.deputies.iter().all(|r| r.layer < c.layer || loc.is_prefix_of(&r.source) == loc.is_prefix_of(&r.image))
        }).map(|loc| (c, loc))
    })?;
    let id = state.constraints.next_id();
    let lower = Constraint {
        id,
        layer: c.layer - 1,
        loc,
        args: c.args.with(b),
        threshold: b,
        value: c.value,
        provenance: Provenance::QImposed { stage: state.stage },
    };
    let what = format!("constraint #{id} placed at `{}` above #{}", lower.loc, c.id);
    state.constraints.insert_unchecked(lower);
    Some(what)
}

/// Injects a value-0 constraint at the top layer on a fresh branch.
fn top_layer_value(state: &mut ConstructionState) -> Option<String> {
    let n = state.n();
    if n < 2 {
        return None;
    }
    let b = big(state);
    let id = state.constraints.next_id();
    state.constraints.insert_unchecked(Constraint {
        id,
        layer: n - 2,
        loc: extend_ones_zero(&BinaryString::empty(), b),
        args: NumTuple(vec![0]),
        threshold: b,
        value: 0,
        provenance: Provenance::QImposed { stage: state.stage },
    });
    Some(format!("constraint #{id} demands value 0 at the top layer"))
}

/// Removes a replica nothing else refers to.
fn missing_replica(state: &mut ConstructionState) -> Option<String> {
    let mut referenced: BTreeSet<u64> = state.constraints.iter().filter_map(|c| c.provenance.origin()).collect();
    for e in &state.events {
        if let Outcome::Skipped(SkipReason::AlreadyConstrained { by }) = e.outcome {
            referenced.insert(by);
        }
    }
    let spare = state
        .constraints
        .iter()
        .find(|c| matches!(c.provenance, Provenance::Replica { .. }) && !referenced.contains(&c.id))
        .map(|c| c.id);
    if let Some(id) = spare {
        state.constraints.remove(id);
        return Some(format!("replica #{id} removed"));
    }
    // Every replica is load-bearing, so plant an image-only constraint instead.
    let n = state.n();
    let b = big(state);
    let r = state.deputies.iter().find(|r| {
        r.layer > 0
            && state.deputies.iter().all(|o| {
                o.index == r.index || o.layer == 0 || r.image.is_prefix_of(&o.source) == r.image.is_prefix_of(&o.image)
            })
    })?;
    let (index, loc) = (r.index, r.image.clone());
    let id = state.constraints.next_id();
    state.constraints.insert_unchecked(Constraint {
        id,
        layer: 0,
        loc,
        args: NumTuple(vec![b; n as usize - 1]),
        threshold: b,
        value: 1,
        provenance: Provenance::QImposed { stage: state.stage },
    });
    Some(format!("constraint #{id} planted at the image of deputy #{index} only"))
}
