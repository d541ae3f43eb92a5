//! Finite binary strings, number tuples and the order/search helpers the
//! rest of the crate is built on.
//!
//! Strings produced by the construction are long but highly regular (a short
//! prefix followed by a block of ones and a closing zero), so they are stored
//! run-length encoded. Every operation works directly on the runs.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("no extension satisfies the predicate up to length {cap}")]
    CapExhausted { cap: u64 },
    #[error("search below `{base}` up to length {cap} is too wide to enumerate")]
    SearchTooWide { base: String, cap: u64 },
    #[error("malformed binary string `{0}`")]
    Parse(String),
}

/// A maximal block of equal bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Run {
    pub bit: bool,
    pub len: u64,
}

/// An element of 2^{<ω}.
///
/// Runs are normalized: no empty runs and adjacent runs carry different bits,
/// so structural equality is bit equality.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BinaryString {
    runs: Vec<Run>,
    len: u64,
}

impl BinaryString {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = Self::empty();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// `count` copies of `bit`.
    pub fn repeat(bit: bool, count: u64) -> Self {
        let mut s = Self::empty();
        s.push_run(bit, count);
        s
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    /// Bit at index `i`, `None` when `i >= len`.
    pub fn bit(&self, i: u64) -> Option<bool> {
        if i >= self.len {
            return None;
        }
        let mut offset = 0;
        for run in &self.runs {
            if i < offset + run.len {
                return Some(run.bit);
            }
            offset += run.len;
        }
        None
    }

    pub fn last(&self) -> Option<bool> {
        self.runs.last().map(|r| r.bit)
    }

    pub fn ends_in_zero(&self) -> bool {
        self.last() == Some(false)
    }

    pub fn push(&mut self, bit: bool) {
        self.push_run(bit, 1);
    }

    pub fn push_run(&mut self, bit: bool, count: u64) {
        if count == 0 {
            return;
        }
        self.len += count;
        match self.runs.last_mut() {
            Some(last) if last.bit == bit => last.len += count,
            _ => self.runs.push(Run { bit, len: count }),
        }
    }

    pub fn append(&mut self, other: &BinaryString) {
        for run in &other.runs {
            self.push_run(run.bit, run.len);
        }
    }

    pub fn concat(&self, other: &BinaryString) -> BinaryString {
        let mut s = self.clone();
        s.append(other);
        s
    }

    pub fn with_bit(&self, bit: bool) -> BinaryString {
        let mut s = self.clone();
        s.push(bit);
        s
    }

    /// Initial segment of length `min(m, len)`.
    pub fn restrict(&self, m: u64) -> BinaryString {
        if m >= self.len {
            return self.clone();
        }
        let mut s = BinaryString::empty();
        let mut left = m;
        for run in &self.runs {
            if left == 0 {
                break;
            }
            let take = run.len.min(left);
            s.push_run(run.bit, take);
            left -= take;
        }
        s
    }

    /// `self ⊆ other`.
    pub fn is_prefix_of(&self, other: &BinaryString) -> bool {
        if self.len > other.len {
            return false;
        }
        let Some((last, init)) = self.runs.split_last() else {
            return true;
        };
        if init.iter().zip(&other.runs).any(|(a, b)| a != b) {
            return false;
        }
        match other.runs.get(init.len()) {
            Some(r) => r.bit == last.bit && r.len >= last.len,
            None => false,
        }
    }

    /// `self ⊂ other`.
    pub fn is_proper_prefix_of(&self, other: &BinaryString) -> bool {
        self.len < other.len && self.is_prefix_of(other)
    }

    pub fn comparable(&self, other: &BinaryString) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    pub fn common_prefix_len(&self, other: &BinaryString) -> u64 {
        let mut n = 0;
        for (a, b) in self.runs.iter().zip(&other.runs) {
            if a.bit != b.bit {
                return n;
            }
            n += a.len.min(b.len);
            if a.len != b.len {
                return n;
            }
        }
        n
    }

    pub fn common_prefix(&self, other: &BinaryString) -> BinaryString {
        self.restrict(self.common_prefix_len(other))
    }

    /// Lexicographic order with a proper prefix before its extensions.
    pub fn cmp_lex(&self, other: &BinaryString) -> Ordering {
        let mut i = 0;
        loop {
            match (self.runs.get(i), other.runs.get(i)) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(a), Some(b)) => {
                    if a.bit != b.bit {
                        return a.bit.cmp(&b.bit);
                    }
                    if a.len != b.len {
                        // The shorter run is followed by the opposite bit or by
                        // the end of its string; the longer run continues with
                        // `a.bit`.
                        let (short_is_self, short_has_next) = if a.len < b.len {
                            (true, self.runs.len() > i + 1)
                        } else {
                            (false, other.runs.len() > i + 1)
                        };
                        let short_first = if short_has_next { !a.bit } else { false };
                        let ord = if !short_has_next || !short_first {
                            Ordering::Less
                        } else {
                            Ordering::Greater
                        };
                        return if short_is_self { ord } else { ord.reverse() };
                    }
                }
            }
            i += 1;
        }
    }

    /// Shorter first, then lexicographic with 0 < 1.
    pub fn cmp_length_lex(&self, other: &BinaryString) -> Ordering {
        self.len.cmp(&other.len).then_with(|| self.cmp_lex(other))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut v = Vec::with_capacity(self.len as usize);
        for run in &self.runs {
            v.extend(std::iter::repeat_n(run.bit, run.len as usize));
        }
        v
    }

    /// Positions holding a 1, in increasing order.
    pub fn one_positions(&self) -> impl Iterator<Item = u64> + '_ {
        let mut offset = 0;
        self.runs.iter().flat_map(move |run| {
            let start = offset;
            offset += run.len;
            
            if run.bit { start..start + run.len } else { 0..0 }
        })
    }

    /// Plain 0/1 text, no run compression.
    pub fn to_plain(&self) -> String {
        self.to_bits().iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl Ord for BinaryString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_length_lex(other)
    }
}

impl PartialOrd for BinaryString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs at least this long are written as `b{n}`.
const COMPRESS_RUN: u64 = 8;

impl fmt::Display for BinaryString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for run in &self.runs {
            let c = if run.bit { '1' } else { '0' };
            if run.len >= COMPRESS_RUN {
                write!(f, "{c}{{{}}}", run.len)?;
            } else {
                for _ in 0..run.len {
                    write!(f, "{c}")?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for BinaryString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{self}⟩")
    }
}

impl FromStr for BinaryString {
    type Err = KernelError;

    /// Accepts plain 0/1 text and the `b{n}` run form, e.g. `01{12}0`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = || KernelError::Parse(text.to_string());
        let mut s = BinaryString::empty();
        let mut chars = text.chars().peekable();
        while let Some(c) = chars.next() {
            let bit = match c {
                '0' => false,
                '1' => true,
                _ => return Err(err()),
            };
            if chars.peek() == Some(&'{') {
                chars.next();
                let mut digits = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(d) if d.is_ascii_digit() => digits.push(d),
                        _ => return Err(err()),
                    }
                }
                let count: u64 = digits.parse().map_err(|_| err())?;
                s.push_run(bit, count);
            } else {
                s.push(bit);
            }
        }
        Ok(s)
    }
}

impl Serialize for BinaryString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BinaryString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Wrapper ordering strings lexicographically, so that all extensions of a
/// string form one contiguous range in a sorted map.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Lex(pub BinaryString);

impl Ord for Lex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp_lex(&other.0)
    }
}

impl PartialOrd for Lex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Lex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Keys of `map` that are initial segments of `s`, longest first.
pub fn prefix_keys<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &BinaryString,
) -> Vec<(&'a BinaryString, &'a V)> {
    prefix_keys_with(map, s, true)
}

/// Longest key of `map` that is an initial segment of `s`.
pub fn longest_prefix_key<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &BinaryString,
) -> Option<(&'a BinaryString, &'a V)> {
    longest_prefix_key_with(map, s, true)
}

/// `prefix_keys` for a caller that knows whether any key ends in 1. Without
/// such keys the cost is one range query per run of `s`.
pub fn prefix_keys_with<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &BinaryString,
    odd_keys: bool,
) -> Vec<(&'a BinaryString, &'a V)> {
    let mut out = Vec::new();
    walk_prefix_keys(map, s, odd_keys, |k, v| {
        out.push((k, v));
        true
    });
    out
}

pub fn longest_prefix_key_with<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &BinaryString,
    odd_keys: bool,
) -> Option<(&'a BinaryString, &'a V)> {
    let mut found = None;
    walk_prefix_keys(map, s, odd_keys, |k, v| {
        found = Some((k, v));
        false
    });
    found
}

/// Visits prefix keys of `s` longest first until `visit` returns false.
fn walk_prefix_keys<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &BinaryString,
    odd_keys: bool,
    mut visit: impl FnMut(&'a BinaryString, &'a V) -> bool,
) {
    let mut end = s.len();
    for run in s.runs().iter().rev() {
        let start = end - run.len;
        let low = Lex(s.restrict(start + 1));
        let high = Lex(s.restrict(end));
        if !run.bit {
            // Every key between σ0 and σ0^m is some σ0^j.
            for (Lex(k), v) in map.range(low..=high).rev() {
                if !visit(k, v) {
                    return;
                }
            }
        } else if odd_keys {
            // Keys σ1^i0… interleave with the prefixes σ1^j, so step down
            // through the divergence points.
            let mut cursor = high;
            while let Some((Lex(k), v)) = map.range(low.clone()..=cursor.clone()).next_back() {
                if k.is_prefix_of(&cursor.0) {
                    if !visit(k, v) {
                        return;
                    }
                    if k.len() == start + 1 {
                        break;
                    }
                    cursor = Lex(k.restrict(k.len() - 1));
                } else {
                    cursor = Lex(cursor.0.restrict(k.common_prefix_len(&cursor.0)));
                    if cursor.0.len() <= start {
                        break;
                    }
                }
            }
        }
        end = start;
    }
    if let Some((Lex(k), v)) = map.get_key_value(&Lex(BinaryString::empty())) {
        visit(k, v);
    }
}

/// Keys of `map` extending `s` (including `s` itself), in lexicographic order.
pub fn extension_keys<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &'a BinaryString,
) -> impl Iterator<Item = (&'a BinaryString, &'a V)> + 'a {
    map.range(Lex(s.clone())..)
        .take_while(move |(Lex(k), _)| s.is_prefix_of(k))
        .map(|(Lex(k), v)| (k, v))
}

/// Keys of `map` comparable with `s`.
pub fn comparable_keys<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &'a BinaryString,
) -> impl Iterator<Item = (&'a BinaryString, &'a V)> + 'a {
    comparable_keys_with(map, s, true)
}

pub fn comparable_keys_with<'a, V>(
    map: &'a BTreeMap<Lex, V>,
    s: &'a BinaryString,
    odd_keys: bool,
) -> impl Iterator<Item = (&'a BinaryString, &'a V)> + 'a {
    let below = prefix_keys_with(map, s, odd_keys).into_iter().filter(move |(k, _)| k.len() < s.len());
    below.chain(extension_keys(map, s))
}

/// A finite tuple of natural numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NumTuple(pub Vec<u64>);

impl NumTuple {
    pub fn new(entries: Vec<u64>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<u64> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<u64> {
        self.0.last().copied()
    }

    pub fn max_entry(&self) -> Option<u64> {
        self.0.iter().copied().max()
    }

    /// First `m` entries.
    pub fn restrict(&self, m: usize) -> NumTuple {
        NumTuple(self.0[..m.min(self.0.len())].to_vec())
    }

    pub fn with(&self, x: u64) -> NumTuple {
        let mut v = self.0.clone();
        v.push(x);
        NumTuple(v)
    }

    /// All but the last entry.
    pub fn init(&self) -> NumTuple {
        self.restrict(self.0.len().saturating_sub(1))
    }
}

impl fmt::Display for NumTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for NumTuple {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(NumTuple::default());
        }
        s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>().map(NumTuple)
    }
}

/// `σ⟨1^l 0⟩`.
pub fn extend_ones_zero(sigma: &BinaryString, l: u64) -> BinaryString {
    let mut s = sigma.clone();
    s.push_run(true, l);
    s.push(false);
    s
}

/// Longest prefix of `sigma` that is empty or ends in 0.
pub fn strip_trailing_ones(sigma: &BinaryString) -> BinaryString {
    match sigma.runs.last() {
        Some(r) if r.bit => sigma.restrict(sigma.len - r.len),
        _ => sigma.clone(),
    }
}

/// Widest suffix block `least_extension` is willing to enumerate.
const MAX_SEARCH_DEPTH: u64 = 24;

/// Length-lexicographically least `η ⊇ base` with `predicate(η)`, scanning
/// lengths `|base| ..= cap` by brute force.
pub fn least_extension<F>(
    base: &BinaryString,
    mut predicate: F,
    cap: u64,
) -> Result<BinaryString, KernelError>
where
    F: FnMut(&BinaryString) -> bool,
{
    if cap >= base.len() && cap - base.len() > MAX_SEARCH_DEPTH {
        return Err(KernelError::SearchTooWide { base: base.to_string(), cap });
    }
    for len in base.len()..=cap {
        let depth = len - base.len();
        for code in 0..(1u64 << depth) {
            let mut candidate = base.clone();
            for i in (0..depth).rev() {
                candidate.push(code >> i & 1 == 1);
            }
            if predicate(&candidate) {
                return Ok(candidate);
            }
        }
    }
    Err(KernelError::CapExhausted { cap })
}
