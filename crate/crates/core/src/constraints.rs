//! The Q-constraint store.
//!
//! A constraint `c(k, ζ, x⃗, x̄, i)` is active at μ iff `ζ ⊆ μ`. Every location
//! ends in 0, so a constraint active at `ρ⟨1^k⟩` is already active at ρ.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{comparable_keys_with, prefix_keys_with, BinaryString, Lex, NumTuple};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("malformed constraint: {0}")]
    Shape(String),
    #[error("uniqueness violation: new c({layer}, {loc}, {args}) clashes with constraint #{existing}")]
    Uniqueness { layer: u32, loc: BinaryString, args: NumTuple, existing: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    QImposed { stage: u64 },
    Replica { origin: u64, stage: u64 },
}

impl Provenance {
    pub fn stage(&self) -> u64 {
        match *self {
            Provenance::QImposed { stage } | Provenance::Replica { stage, .. } => stage,
        }
    }

    pub fn origin(&self) -> Option<u64> {
        match *self {
            Provenance::Replica { origin, .. } => Some(origin),
            Provenance::QImposed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: u64,
    pub layer: u32,
    pub loc: BinaryString,
    pub args: NumTuple,
    pub threshold: u64,
    pub value: u8,
    pub provenance: Provenance,
}

impl Constraint {
    pub fn stage(&self) -> u64 {
        self.provenance.stage()
    }

    pub fn is_active_at(&self, mu: &BinaryString) -> bool {
        self.loc.is_prefix_of(mu)
    }

    /// Same `(loc, x̄, i)`.
    pub fn agrees_with(&self, other: &Constraint) -> bool {
        self.loc == other.loc && self.threshold == other.threshold && self.value == other.value
    }
}

/// Parameters of a constraint about to be imposed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewConstraint {
    pub layer: u32,
    pub loc: BinaryString,
    pub args: NumTuple,
    pub threshold: u64,
    pub value: u8,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintLedger {
    n: u32,
    items: BTreeMap<u64, Constraint>,
    by_loc: BTreeMap<Lex, Vec<u64>>,
    /// Constraints located at a string ending in 1.
    odd_locs: usize,
    next_id: u64,
}

impl ConstraintLedger {
    pub fn new(n: u32) -> Self {
        Self { n, items: BTreeMap::new(), by_loc: BTreeMap::new(), odd_locs: 0, next_id: 0 }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Constraints in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.items.values()
    }

    pub fn get(&self, id: u64) -> Option<&Constraint> {
        self.items.get(&id)
    }

    fn check_shape(&self, c: &NewConstraint) -> Result<(), LedgerError> {
        if self.n < 2 || c.layer > self.n - 2 {
            return Err(LedgerError::Shape(format!("layer {} out of range for n = {}", c.layer, self.n)));
        }
        let want = (self.n - 1 - c.layer) as usize;
        if c.args.len() != want {
            return Err(LedgerError::Shape(format!(
                "layer {} needs {want} arguments, got {}",
                c.layer,
                c.args.len()
            )));
        }
        if !c.loc.ends_in_zero() {
            return Err(LedgerError::Shape(format!("location `{}` does not end in 0", c.loc)));
        }
        if c.value > 1 {
            return Err(LedgerError::Shape(format!("value {} is not a bit", c.value)));
        }
        if c.layer == self.n - 2 && c.value == 0 {
            return Err(LedgerError::Shape("top-layer constraint with value 0".into()));
        }
        Ok(())
    }

    /// Appends `c` under a fresh id.
    pub fn impose(&mut self, c: NewConstraint) -> Result<u64, LedgerError> {
        self.check_shape(&c)?;
        if let Some(other) = self
            .find_matching(c.layer, &c.args, &c.loc)
            .into_iter()
            .find(|o| !(o.loc == c.loc && o.threshold == c.threshold && o.value == c.value))
        {
            return Err(LedgerError::Uniqueness {
                layer: c.layer,
                loc: c.loc,
                args: c.args,
                existing: other.id,
            });
        }
        let id = self.next_id;
        self.insert_unchecked(Constraint {
            id,
            layer: c.layer,
            loc: c.loc,
            args: c.args,
            threshold: c.threshold,
            value: c.value,
            provenance: c.provenance,
        });
        Ok(id)
    }

    /// Inserts a fully formed constraint, bypassing every check.
    pub fn insert_unchecked(&mut self, c: Constraint) {
        self.next_id = self.next_id.max(c.id + 1);
        if let Some(old) = self.items.remove(&c.id) {
            self.unindex(&old);
        }
        self.by_loc.entry(Lex(c.loc.clone())).or_default().push(c.id);
        self.odd_locs += usize::from(c.loc.last() == Some(true));
        self.items.insert(c.id, c);
    }

    pub fn remove(&mut self, id: u64) -> Option<Constraint> {
        let c = self.items.remove(&id)?;
        self.unindex(&c);
        Some(c)
    }

    fn unindex(&mut self, c: &Constraint) {
        self.odd_locs -= usize::from(c.loc.last() == Some(true));
        let key = Lex(c.loc.clone());
        if let Some(ids) = self.by_loc.get_mut(&key) {
            ids.retain(|&i| i != c.id);
            if ids.is_empty() {
                self.by_loc.remove(&key);
            }
        }
    }

    /// Every constraint whose location is an initial segment of μ, by id.
    pub fn active_at(&self, mu: &BinaryString) -> Vec<&Constraint> {
        let mut out: Vec<&Constraint> = prefix_keys_with(&self.by_loc, mu, self.odd_locs > 0)
            .into_iter()
            .flat_map(|(_, ids)| ids.iter().map(|id| &self.items[id]))
            .collect();
        out.sort_by_key(|c| c.id);
        out
    }

    /// Active constraints at μ with the given layer and arguments.
    pub fn active_matching(&self, layer: u32, args: &NumTuple, mu: &BinaryString) -> Vec<&Constraint> {
        self.active_at(mu)
            .into_iter()
            .filter(|c| c.layer == layer && &c.args == args)
            .collect()
    }

    /// Constraints with the given layer and arguments located comparably with σ.
    pub fn find_matching(&self, layer: u32, args: &NumTuple, sigma: &BinaryString) -> Vec<&Constraint> {
        let mut out: Vec<&Constraint> = comparable_keys_with(&self.by_loc, sigma, self.odd_locs > 0)
            .flat_map(|(_, ids)| ids.iter().map(|id| &self.items[id]))
            .filter(|c| c.layer == layer && &c.args == args)
            .collect();
        out.sort_by_key(|c| c.id);
        out
    }

    /// Constraints located comparably with σ.
    pub fn comparable_with(&self, sigma: &BinaryString) -> Vec<&Constraint> {
        let mut out: Vec<&Constraint> = comparable_keys_with(&self.by_loc, sigma, self.odd_locs > 0)
            .flat_map(|(_, ids)| ids.iter().map(|id| &self.items[id]))
            .collect();
        out.sort_by_key(|c| c.id);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> BinaryString {
        s.parse().unwrap()
    }

    fn c(layer: u32, loc: &str, args: &[u64], threshold: u64, value: u8) -> NewConstraint {
        NewConstraint {
            layer,
            loc: b(loc),
            args: NumTuple(args.to_vec()),
            threshold,
            value,
            provenance: Provenance::QImposed { stage: 0 },
        }
    }

    #[test]
    fn impose_examples() {
        let mut l = ConstraintLedger::new(3);
        assert_eq!(l.impose(c(0, "110", &[0, 1], 2, 1)).unwrap(), 0);
        assert!(matches!(
            l.impose(c(0, "1100", &[0, 1], 5, 0)),
            Err(LedgerError::Uniqueness { existing: 0, .. })
        ));
        assert_eq!(l.impose(c(0, "00", &[0, 1], 5, 0)).unwrap(), 1);
        // a different tuple at a comparable location is fine
        assert!(l.impose(c(0, "1100", &[0, 2], 5, 0)).is_ok());
    }

    #[test]
    fn impose_shape_errors() {
        let mut l = ConstraintLedger::new(2);
        assert!(matches!(l.impose(c(0, "10", &[0], 1, 0)), Err(LedgerError::Shape(_))));
        assert!(matches!(l.impose(c(0, "1", &[0], 1, 1)), Err(LedgerError::Shape(_))));
        assert!(matches!(l.impose(c(1, "10", &[0], 1, 1)), Err(LedgerError::Shape(_))));
        assert!(matches!(l.impose(c(0, "10", &[0, 1], 1, 1)), Err(LedgerError::Shape(_))));
        let mut one = ConstraintLedger::new(1);
        assert!(one.impose(c(0, "10", &[], 1, 1)).is_err());
    }

    #[test]
    fn active_at_examples() {
        let mut l = ConstraintLedger::new(3);
        l.impose(c(0, "110", &[0, 1], 2, 1)).unwrap();
        assert_eq!(l.active_at(&b("11011")).len(), 1);
        assert!(l.active_at(&b("11")).is_empty());
        assert_eq!(l.active_at(&b("1101")), l.active_at(&b("110")));
    }

    #[test]
    fn find_matching_examples() {
        let mut l = ConstraintLedger::new(3);
        l.impose(c(1, "10", &[3], 4, 1)).unwrap();
        assert_eq!(l.find_matching(1, &NumTuple(vec![3]), &b("1011")).len(), 1);
        assert_eq!(l.find_matching(1, &NumTuple(vec![3]), &b("1")).len(), 1);
        assert!(l.find_matching(1, &NumTuple(vec![3]), &b("00")).is_empty());
        assert!(l.find_matching(0, &NumTuple(vec![3]), &b("10")).is_empty());
    }

    #[test]
    fn remove_keeps_index_consistent() {
        let mut l = ConstraintLedger::new(3);
        l.impose(c(1, "10", &[3], 4, 1)).unwrap();
        l.impose(c(1, "0", &[3], 4, 1)).unwrap();
        assert!(l.remove(0).is_some());
        assert!(l.active_at(&b("101")).is_empty());
        assert_eq!(l.next_id(), 2);
    }
}
