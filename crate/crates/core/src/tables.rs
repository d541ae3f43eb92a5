//! Finite approximations of the functionals Γ and Δ.
//!
//! Only explicit entries are stored and every key is ε or ends in 0. Lookups
//! close the tables under continuity, so `Γ(σ⟨1^k⟩) = Γ(σ)` and
//! `Δ(ξ⟨1^k⟩) = Δ(ξ)` hold by construction of `gamma_eval`/`delta_eval`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{extension_keys, longest_prefix_key_with, prefix_keys_with, BinaryString, Lex, NumTuple};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("key `{0}` is neither empty nor ends in 0")]
    KeyShape(BinaryString),
    #[error("Γ monotonicity violation at `{key}`: {detail}")]
    Monotonicity { key: BinaryString, detail: String },
    #[error("conflicting Δ definition at (`{xi}`; {args}): {detail}")]
    ConflictingDefinition { xi: BinaryString, args: NumTuple, detail: String },
}

/// One explicit Γ entry. `stage` is `None` only for the seeded root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaEntry {
    pub value: BinaryString,
    pub stage: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GammaTable {
    entries: BTreeMap<Lex, GammaEntry>,
    /// Keys grouped by value, so the keys whose value extends a string form
    /// a contiguous range.
    by_value: BTreeMap<Lex, Vec<BinaryString>>,
    /// Keys ending in 1; only unchecked inserts create them.
    odd_keys: usize,
}

impl Default for GammaTable {
    fn default() -> Self {
        Self::new()
    }
}

impl GammaTable {
    /// A table holding only the root entry `ε ↦ ε`.
    pub fn new() -> Self {
        let mut table = Self { entries: BTreeMap::new(), by_value: BTreeMap::new(), odd_keys: 0 };
        table.insert_unchecked(
            BinaryString::empty(),
            GammaEntry { value: BinaryString::empty(), stage: None },
        );
        table
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &BinaryString) -> Option<&GammaEntry> {
        self.entries.get(&Lex(key.clone()))
    }

    pub fn contains_key(&self, key: &BinaryString) -> bool {
        self.get(key).is_some()
    }

    /// Entries in lexicographic key order.
    pub fn iter(&self) -> impl Iterator<Item = (&BinaryString, &GammaEntry)> {
        self.entries.iter().map(|(Lex(k), v)| (k, v))
    }

    /// Γ(σ): the value at the longest key that is an initial segment of σ.
    pub fn eval(&self, sigma: &BinaryString) -> BinaryString {
        longest_prefix_key_with(&self.entries, sigma, self.odd_keys > 0)
            .map(|(_, e)| e.value.clone())
            .unwrap_or_default()
    }

    /// The longest key that is an initial segment of σ.
    pub fn governing_key(&self, sigma: &BinaryString) -> Option<&BinaryString> {
        longest_prefix_key_with(&self.entries, sigma, self.odd_keys > 0).map(|(k, _)| k)
    }

    /// Keys that are initial segments of σ, longest first.
    pub fn prefix_entries(&self, sigma: &BinaryString) -> Vec<(&BinaryString, &GammaEntry)> {
        prefix_keys_with(&self.entries, sigma, self.odd_keys > 0)
    }

    /// Keys extending σ, σ included.
    pub fn extension_entries<'a>(
        &'a self,
        sigma: &'a BinaryString,
    ) -> impl Iterator<Item = (&'a BinaryString, &'a GammaEntry)> + 'a {
        extension_keys(&self.entries, sigma)
    }

    /// Adds `σ ↦ ξ`.
    pub fn define(
        &mut self,
        sigma: &BinaryString,
        xi: BinaryString,
        stage: u64,
    ) -> Result<(), TableError> {
        if !sigma.ends_in_zero() {
            return Err(TableError::KeyShape(sigma.clone()));
        }
        if self.contains_key(sigma) {
            return Err(TableError::Monotonicity {
                key: sigma.clone(),
                detail: "key already defined".into(),
            });
        }
        let current = self.eval(sigma);
        if !current.is_proper_prefix_of(&xi) {
            return Err(TableError::Monotonicity {
                key: sigma.clone(),
                detail: format!("`{xi}` does not strictly extend Γ = `{current}`"),
            });
        }
        if let Some((k, _)) = self.extension_entries(sigma).next() {
            return Err(TableError::Monotonicity {
                key: sigma.clone(),
                detail: format!("existing key `{k}` already extends it"),
            });
        }
        self.insert_unchecked(sigma.clone(), GammaEntry { value: xi, stage: Some(stage) });
        Ok(())
    }

    /// Keys whose value extends ξ.
    pub fn carriers<'a>(&'a self, xi: &'a BinaryString) -> impl Iterator<Item = &'a BinaryString> + 'a {
        extension_keys(&self.by_value, xi).flat_map(|(_, keys)| keys.iter())
    }

    /// Inserts or replaces an entry without any checks.
    pub fn insert_unchecked(&mut self, key: BinaryString, entry: GammaEntry) {
        self.remove(&key);
        self.by_value.entry(Lex(entry.value.clone())).or_default().push(key.clone());
        self.odd_keys += usize::from(key.last() == Some(true));
        self.entries.insert(Lex(key), entry);
    }

    pub fn remove(&mut self, key: &BinaryString) -> Option<GammaEntry> {
        let old = self.entries.remove(&Lex(key.clone()))?;
        self.odd_keys -= usize::from(key.last() == Some(true));
        let v = Lex(old.value.clone());
        if let Some(keys) = self.by_value.get_mut(&v) {
            keys.retain(|k| k != key);
            if keys.is_empty() {
                self.by_value.remove(&v);
            }
        }
        Some(old)
    }
}

/// One explicit Δ entry. `origin` is the Γ key whose definition produced the
/// string this entry is keyed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub bit: u8,
    pub stage: u64,
    pub origin: BinaryString,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaTable {
    by_args: BTreeMap<NumTuple, BTreeMap<Lex, DeltaEntry>>,
    odd_keys: usize,
}

impl DeltaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.by_args.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries as `(ξ, x⃗, entry)`, grouped by tuple then lexicographic ξ.
    pub fn iter(&self) -> impl Iterator<Item = (&BinaryString, &NumTuple, &DeltaEntry)> {
        self.by_args
            .iter()
            .flat_map(|(args, m)| m.iter().map(move |(Lex(xi), e)| (xi, args, e)))
    }

    /// Tuples with at least one entry.
    pub fn tuples(&self) -> impl Iterator<Item = &NumTuple> {
        self.by_args.keys()
    }

    pub fn get(&self, xi: &BinaryString, args: &NumTuple) -> Option<&DeltaEntry> {
        self.by_args.get(args)?.get(&Lex(xi.clone()))
    }

    /// Entries for one tuple.
    pub fn entries_for<'a>(
        &'a self,
        args: &NumTuple,
    ) -> impl Iterator<Item = (&'a BinaryString, &'a DeltaEntry)> + 'a {
        self.by_args.get(args).into_iter().flat_map(|m| m.iter().map(|(Lex(k), e)| (k, e)))
    }

    /// The keyed entry deciding Δ(ξ; x⃗), if any.
    pub fn deciding_entry(
        &self,
        xi: &BinaryString,
        args: &NumTuple,
    ) -> Option<(&BinaryString, &DeltaEntry)> {
        longest_prefix_key_with(self.by_args.get(args)?, xi, self.odd_keys > 0)
    }

    pub fn eval(&self, xi: &BinaryString, args: &NumTuple) -> Option<u8> {
        self.deciding_entry(xi, args).map(|(_, e)| e.bit)
    }

    /// Adds `Δ(ξ; x⃗) = bit`.
    pub fn define(
        &mut self,
        xi: &BinaryString,
        args: &NumTuple,
        bit: u8,
        origin: BinaryString,
        stage: u64,
    ) -> Result<(), TableError> {
        if !xi.ends_in_zero() {
            return Err(TableError::KeyShape(xi.clone()));
        }
        let conflict = |detail: String| TableError::ConflictingDefinition {
            xi: xi.clone(),
            args: args.clone(),
            detail,
        };
        if bit > 1 {
            return Err(conflict(format!("value {bit} is not a bit")));
        }
        if let Some((k, e)) = self.deciding_entry(xi, args) {
            return Err(conflict(format!("already decided as {} at `{k}`", e.bit)));
        }
        let map = self.by_args.entry(args.clone()).or_default();
        if let Some((k, _)) = extension_keys(map, xi).next() {
            return Err(conflict(format!("extension `{k}` already keyed")));
        }
        map.insert(Lex(xi.clone()), DeltaEntry { bit, stage, origin });
        Ok(())
    }

    pub fn insert_unchecked(&mut self, xi: BinaryString, args: NumTuple, entry: DeltaEntry) {
        let odd = xi.last() == Some(true);
        if self.by_args.entry(args).or_default().insert(Lex(xi), entry).is_none() {
            self.odd_keys += usize::from(odd);
        }
    }

    pub fn remove(&mut self, xi: &BinaryString, args: &NumTuple) -> Option<DeltaEntry> {
        let map = self.by_args.get_mut(args)?;
        let e = map.remove(&Lex(xi.clone()));
        if e.is_some() {
            self.odd_keys -= usize::from(xi.last() == Some(true));
        }
        if map.is_empty() {
            self.by_args.remove(args);
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(s: &str) -> BinaryString {
        s.parse().unwrap()
    }

    fn t(v: &[u64]) -> NumTuple {
        NumTuple(v.to_vec())
    }

    #[test]
    fn gamma_eval_examples() {
        let mut g = GammaTable::new();
        assert_eq!(g.eval(&b("101")), b(""));
        g.define(&b("1110"), b("1110"), 0).unwrap();
        assert_eq!(g.eval(&b("11101")), b("1110"));
        assert_eq!(g.eval(&b("111")), b(""));
        assert_eq!(g.eval(&b("1110")), b("1110"));
    }

    #[test]
    fn gamma_define_errors() {
        let mut g = GammaTable::new();
        assert!(matches!(
            g.define(&b("0"), b(""), 0),
            Err(TableError::Monotonicity { .. })
        ));
        assert!(matches!(g.define(&b("01"), b("1"), 0), Err(TableError::KeyShape(_))));
        g.define(&b("00"), b("0"), 0).unwrap();
        g.define(&b("10"), b("1"), 0).unwrap();
        // a key below an existing one cannot be added afterwards
        assert!(g.define(&b("0"), b("1"), 0).is_err());
        // nor can a value fail to extend its governing value
        assert!(g.define(&b("0010"), b("1"), 0).is_err());
        g.define(&b("0010"), b("00"), 0).unwrap();
    }

    #[test]
    fn delta_examples() {
        let mut d = DeltaTable::new();
        assert_eq!(d.eval(&b("10"), &t(&[0, 5])), None);
        d.define(&b("10"), &t(&[0, 5]), 1, b("10"), 0).unwrap();
        assert_eq!(d.eval(&b("1011"), &t(&[0, 5])), Some(1));
        assert_eq!(d.eval(&b("10"), &t(&[0, 4])), None);
        assert!(matches!(
            d.define(&b("1010"), &t(&[0, 5]), 0, b("1010"), 1),
            Err(TableError::ConflictingDefinition { .. })
        ));
        d.define(&b("00"), &t(&[0, 5]), 0, b("00"), 1).unwrap();
        assert_eq!(d.len(), 2);
        // an entry below an existing one is rejected as well
        assert!(d.define(&b("0"), &t(&[0, 5]), 0, b("0"), 2).is_err());
    }

    proptest! {
        #[test]
        fn closure_under_trailing_ones(keys in prop::collection::vec(prop::collection::vec(any::<bool>(), 0..6), 0..8), q in prop::collection::vec(any::<bool>(), 0..8), k in 0u64..5) {
            let mut g = GammaTable::new();
            let mut d = DeltaTable::new();
            for (i, bits) in keys.iter().enumerate() {
                let mut key = BinaryString::from_bits(bits.clone());
                key.push(false);
                let val = g.eval(&key).concat(&key);
                let _ = g.define(&key, val.clone(), i as u64);
                let _ = d.define(&val, &t(&[1]), (i % 2) as u8, key.clone(), i as u64);
            }
            let q = BinaryString::from_bits(q);
            let mut q1 = q.clone();
            q1.push_run(true, k);
            prop_assert_eq!(g.eval(&q1), g.eval(&q));
            prop_assert_eq!(d.eval(&q1, &t(&[1])), d.eval(&q, &t(&[1])));
            // continuity along the prefixes of q
            for m in 0..=q.len() {
                prop_assert!(g.eval(&q.restrict(m)).is_prefix_of(&g.eval(&q)));
            }
        }
    }
}
