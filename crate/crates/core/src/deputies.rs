//! The partial injection d together with the layer and anchor of every
//! deputy it defines.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{extend_ones_zero, extension_keys, BinaryString, Lex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeputyError {
    #[error("injectivity violation: {0}")]
    Injectivity(String),
    #[error("malformed deputy `{from}` ↦ `{image}`: {detail}")]
    Shape { from: BinaryString, image: BinaryString, detail: String },
}

/// Which module defined a deputy: `D(ρ)` for layer n−1, `D(k, σ, τ)` for the
/// layer below a k-deputy `τ = d(σ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Anchor {
    Rho { rho: BinaryString },
    Pair { sigma: BinaryString, tau: BinaryString },
}

impl Anchor {
    /// The string the image is built on: ρ, or σ for a pair anchor.
    pub fn base(&self) -> &BinaryString {
        match self {
            Anchor::Rho { rho } => rho,
            Anchor::Pair { sigma, .. } => sigma,
        }
    }

    /// The string every source must extend: ρ⟨0⟩, or τ for a pair anchor.
    pub fn source_root(&self) -> BinaryString {
        match self {
            Anchor::Rho { rho } => rho.with_bit(false),
            Anchor::Pair { tau, .. } => tau.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeputyRecord {
    pub index: u64,
    pub source: BinaryString,
    pub image: BinaryString,
    pub layer: u32,
    pub anchor: Anchor,
    pub stage: u64,
}

#[derive(Debug, Clone)]
pub struct DeputyRegistry {
    n: u32,
    records: Vec<DeputyRecord>,
    by_source: HashMap<BinaryString, usize>,
    by_image: HashMap<BinaryString, usize>,
    by_anchor: HashMap<Anchor, BTreeMap<Lex, usize>>,
    /// Last answer of `least_unserved` per (anchor, base) as (depth, suffix).
    /// Served sets only grow between rebuilds, so the answer never moves back.
    frontier: RefCell<HashMap<(Anchor, BinaryString), (u64, u64)>>,
}

impl PartialEq for DeputyRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.records == other.records
    }
}

impl Eq for DeputyRegistry {}

impl DeputyRegistry {
    pub fn new(n: u32) -> Self {
        Self {
            n,
            records: Vec::new(),
            by_source: HashMap::new(),
            by_image: HashMap::new(),
            by_anchor: HashMap::new(),
            frontier: RefCell::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in definition order.
    pub fn iter(&self) -> impl Iterator<Item = &DeputyRecord> {
        self.records.iter()
    }

    pub fn get(&self, index: usize) -> Option<&DeputyRecord> {
        self.records.get(index)
    }

    pub fn lookup(&self, source: &BinaryString) -> Option<&DeputyRecord> {
        self.by_source.get(source).map(|&i| &self.records[i])
    }

    pub fn lookup_image(&self, image: &BinaryString) -> Option<&DeputyRecord> {
        self.by_image.get(image).map(|&i| &self.records[i])
    }

    fn check_shape(
        &self,
        source: &BinaryString,
        image: &BinaryString,
        layer: u32,
        anchor: &Anchor,
    ) -> Result<(), String> {
        if layer >= self.n {
            return Err(format!("layer {layer} out of range for n = {}", self.n));
        }
        match anchor {
            Anchor::Rho { .. } if layer != self.n - 1 => {
                return Err("a ρ-anchored deputy must sit at layer n−1".into())
            }
            Anchor::Pair { .. } if layer == self.n - 1 => {
                return Err("a pair-anchored deputy cannot sit at layer n−1".into())
            }
            _ => {}
        }
        let root = anchor.source_root();
        let extends_root = match anchor {
            Anchor::Rho { .. } => root.is_prefix_of(source),
            Anchor::Pair { .. } => root.is_proper_prefix_of(source),
        };
        if !extends_root {
            return Err(format!("source does not extend `{root}`"));
        }
        if *image != extend_ones_zero(anchor.base(), source.len()) {
            return Err(format!("image is not `{}⟨1^{}0⟩`", anchor.base(), source.len()));
        }
        Ok(())
    }

    pub fn define(
        &mut self,
        source: BinaryString,
        image: BinaryString,
        layer: u32,
        anchor: Anchor,
        stage: u64,
    ) -> Result<usize, DeputyError> {
        if let Some(r) = self.lookup(&source) {
            return Err(DeputyError::Injectivity(format!(
                "`{source}` already has deputy `{}`",
                r.image
            )));
        }
        if let Some(r) = self.lookup_image(&image) {
            return Err(DeputyError::Injectivity(format!(
                "`{image}` is already the deputy of `{}`",
                r.source
            )));
        }
        self.check_shape(&source, &image, layer, &anchor)
            .map_err(|detail| DeputyError::Shape { from: source.clone(), image: image.clone(), detail })?;
        let index = self.records.len();
        self.push_unchecked(DeputyRecord { index: index as u64, source, image, layer, anchor, stage });
        Ok(index)
    }

    /// Appends a record without checks; indexes are rebuilt from its fields.
    pub fn push_unchecked(&mut self, record: DeputyRecord) {
        let i = self.records.len();
        self.by_source.insert(record.source.clone(), i);
        self.by_image.insert(record.image.clone(), i);
        self.by_anchor
            .entry(record.anchor.clone())
            .or_default()
            .insert(Lex(record.source.clone()), i);
        self.records.push(record);
    }

    /// Replaces record `index` in place, keeping indexes consistent.
    pub fn replace_unchecked(&mut self, index: usize, record: DeputyRecord) {
        let mut records = std::mem::take(&mut self.records);
        records[index] = record;
        *self = DeputyRegistry::new(self.n);
        for r in records {
            self.push_unchecked(r);
        }
    }

    /// Whether some record with this anchor has a source extending `nu_bar`.
    pub fn has_served_extension(&self, nu_bar: &BinaryString, anchor: &Anchor) -> bool {
        self.by_anchor
            .get(anchor)
            .is_some_and(|m| extension_keys(m, nu_bar).next().is_some())
    }

    /// Sources served under `anchor`, in lexicographic order.
    pub fn served_sources<'a>(&'a self, anchor: &Anchor) -> impl Iterator<Item = &'a BinaryString> + 'a {
        self.by_anchor.get(anchor).into_iter().flat_map(|m| m.keys().map(|Lex(s)| s))
    }

    /// Length-lexicographically least `ν̄ ⊇ base` such that no source served
    /// under `anchor` extends `ν̄`.
    pub fn least_unserved(&self, base: &BinaryString, anchor: &Anchor) -> BinaryString {
        let key = (anchor.clone(), base.clone());
        let (mut depth, mut i) = self.frontier.borrow().get(&key).copied().unwrap_or((0, 0));
        loop {
            let candidate = with_binary_suffix(base, i, depth);
            if !self.has_served_extension(&candidate, anchor) {
                self.frontier.borrow_mut().insert(key, (depth, i));
                return candidate;
            }
            if depth < 64 && i + 1 < (1u64 << depth) {
                i += 1;
            } else {
                depth += 1;
                i = 0;
            }
        }
    }

    /// Same answer as `least_unserved`, computed from scratch.
    pub fn least_unserved_scan(&self, base: &BinaryString, anchor: &Anchor) -> BinaryString {
        let served: Vec<&BinaryString> = match self.by_anchor.get(anchor) {
            Some(m) => extension_keys(m, base).map(|(s, _)| s).collect(),
            None => Vec::new(),
        };
        let mut depth = 0u64;
        loop {
            // Served strings cut down to this depth, already in lexicographic
            // (hence numeric) order since `served` is sorted.
            let mut cut: Vec<BinaryString> = served
                .iter()
                .filter(|s| s.len() >= base.len() + depth)
                .map(|s| s.restrict(base.len() + depth))
                .collect();
            cut.dedup();
            let full = depth < 64 && (cut.len() as u128) >= (1u128 << depth);
            if !full {
                let mut i = 0u64;
                for p in &cut {
                    if *p == with_binary_suffix(base, i, depth) {
                        i += 1;
                    } else {
                        break;
                    }
                }
                return with_binary_suffix(base, i, depth);
            }
            depth += 1;
        }
    }
}

/// `base` followed by the `depth`-bit big-endian binary form of `i`.
fn with_binary_suffix(base: &BinaryString, i: u64, depth: u64) -> BinaryString {
    let mut s = base.clone();
    for j in (0..depth).rev() {
        s.push(j < 64 && (i >> j) & 1 == 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::least_extension;
    use proptest::prelude::*;

    fn b(s: &str) -> BinaryString {
        s.parse().unwrap()
    }

    fn rho_eps() -> Anchor {
        Anchor::Rho { rho: b("") }
    }

    #[test]
    fn define_and_lookup() {
        let mut r = DeputyRegistry::new(2);
        r.define(b("0110"), b("11110"), 1, rho_eps(), 3).unwrap();
        let rec = r.lookup(&b("0110")).unwrap();
        assert_eq!(rec.image.len(), 4 + 1);
        assert!(r.lookup(&b("0")).is_none());
        assert!(r.lookup(&b("011")).is_none());
        assert!(matches!(
            r.define(b("0110"), b("111110"), 1, rho_eps(), 4),
            Err(DeputyError::Injectivity(_))
        ));
        // wrong image shape
        assert!(matches!(
            r.define(b("00"), b("1111"), 1, rho_eps(), 4),
            Err(DeputyError::Shape { .. })
        ));
    }

    #[test]
    fn served_extension_queries() {
        let mut r = DeputyRegistry::new(2);
        r.define(b("0110"), b("11110"), 1, rho_eps(), 3).unwrap();
        assert!(r.has_served_extension(&b("0"), &rho_eps()));
        assert!(!r.has_served_extension(&b("00"), &rho_eps()));
        let pair = Anchor::Pair { sigma: b("0110"), tau: b("11110") };
        assert!(!r.has_served_extension(&b("0110"), &pair));
        assert_eq!(r.least_unserved(&b("0"), &rho_eps()), b("00"));
        assert_eq!(r.least_unserved(&b("1"), &rho_eps()), b("1"));
    }

    #[test]
    fn layer_zero_pair_deputy() {
        let mut r = DeputyRegistry::new(2);
        r.define(b("0110"), b("11110"), 1, rho_eps(), 0).unwrap();
        let pair = Anchor::Pair { sigma: b("0110"), tau: b("11110") };
        let nu = b("111101{6}0");
        let image = extend_ones_zero(&b("0110"), nu.len());
        r.define(nu.clone(), image, 0, pair.clone(), 1).unwrap();
        assert!(r.has_served_extension(&b("11110"), &pair));
        assert_eq!(r.least_unserved(&b("11110"), &pair), b("111100"));
    }

    proptest! {
        #[test]
        fn least_unserved_matches_brute_force(
            base in prop::collection::vec(any::<bool>(), 0..3),
            served in prop::collection::vec(prop::collection::vec(any::<bool>(), 0..7), 0..12),
        ) {
            let base = BinaryString::from_bits(base);
            let anchor = Anchor::Rho { rho: b("") };
            let mut r = DeputyRegistry::new(1);
            for (i, bits) in served.iter().enumerate() {
                let s = BinaryString::from_bits(bits.clone());
                r.push_unchecked(DeputyRecord {
                    index: i as u64,
                    image: extend_ones_zero(&b(""), 100 + i as u64),
                    source: s,
                    layer: 0,
                    anchor: anchor.clone(),
                    stage: i as u64,
                });
                // queried after every push so the cached frontier is reused
                let fast = r.least_unserved(&base, &anchor);
                let slow = least_extension(&base, |e| !r.has_served_extension(e, &anchor), base.len() + 9).unwrap();
                prop_assert_eq!(&fast, &slow);
                prop_assert_eq!(r.least_unserved_scan(&base, &anchor), slow);
            }
        }
    }
}
