//! Requirements, their canonical enumeration, and the fresh-number supply.
//!
//! Stage `s` decodes to `(code, rep) = unpair(s)`. The code's residue mod 6
//! picks the requirement family and the quotient packs its arguments: strings
//! through the length-lex index `2^|σ| − 1 + value(σ)`, tuples through
//! iterated pairing. Every code is hit at infinitely many stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{BinaryString, NumTuple};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Requirement {
    P { sigma: BinaryString, m: u64 },
    D0 { sigma: BinaryString, tau: BinaryString },
    Dk { k: u32, sigma: BinaryString, tau: BinaryString },
    Drho { rho: BinaryString },
    Q0 { sigma: BinaryString, args: NumTuple },
    Qmid { k: u32, sigma: BinaryString, args: NumTuple },
    Qtop { sigma: BinaryString, x: u64 },
}

fn show(s: &BinaryString) -> String {
    if s.is_empty() {
        "ε".into()
    } else {
        s.to_string()
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requirement::P { sigma, m } => write!(f, "P({}, {m})", show(sigma)),
            Requirement::D0 { sigma, tau } => write!(f, "D(0, {}, {})", show(sigma), show(tau)),
            Requirement::Dk { k, sigma, tau } => write!(f, "D({k}, {}, {})", show(sigma), show(tau)),
            Requirement::Drho { rho } => write!(f, "D({})", show(rho)),
            Requirement::Q0 { sigma, args } => write!(f, "Q(0, {}, ⟨{args}⟩)", show(sigma)),
            Requirement::Qmid { k, sigma, args } => write!(f, "Q({k}, {}, ⟨{args}⟩)", show(sigma)),
            Requirement::Qtop { sigma, x } => write!(f, "Q(top, {}, {x})", show(sigma)),
        }
    }
}

impl Requirement {
    /// Checks the argument bounds of the requirement for the given n.
    pub fn validate(&self, n: u32) -> Result<(), String> {
        let bound = |sigma: &BinaryString, args: &NumTuple| match args.max_entry() {
            Some(m) if m >= sigma.len() => Err(format!("max x⃗ = {m} is not below |σ| = {}", sigma.len())),
            _ => Ok(()),
        };
        match self {
            Requirement::P { .. } | Requirement::D0 { .. } | Requirement::Drho { .. } => Ok(()),
            Requirement::Dk { k, .. } => {
                if *k == 0 || *k >= n {
                    Err(format!("D needs 0 < k < n, got k = {k}"))
                } else {
                    Ok(())
                }
            }
            Requirement::Q0 { sigma, args } => {
                if n < 2 {
                    return Err("Q(0, …) needs n > 1".into());
                }
                if args.len() != n as usize {
                    return Err(format!("Q(0, …) needs {n} arguments"));
                }
                bound(sigma, args)
            }
            Requirement::Qmid { k, sigma, args } => {
                if *k == 0 || *k + 1 >= n {
                    return Err(format!("Q(k, …) needs 0 < k < n−1, got k = {k}"));
                }
                if args.len() != (n - k) as usize {
                    return Err(format!("Q({k}, …) needs {} arguments", n - k));
                }
                bound(sigma, args)
            }
            Requirement::Qtop { sigma, x } => {
                if *x >= sigma.len() {
                    Err(format!("x = {x} is not below |σ| = {}", sigma.len()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Every string the requirement mentions.
    pub fn strings(&self) -> Vec<&BinaryString> {
        match self {
            Requirement::P { sigma, .. }
            | Requirement::Q0 { sigma, .. }
            | Requirement::Qmid { sigma, .. }
            | Requirement::Qtop { sigma, .. } => vec![sigma],
            Requirement::D0 { sigma, tau } | Requirement::Dk { sigma, tau, .. } => vec![sigma, tau],
            Requirement::Drho { rho } => vec![rho],
        }
    }
}

/// Cantor pairing; `None` on overflow.
pub fn pair(a: u64, b: u64) -> Option<u64> {
    let w = (a as u128) + (b as u128);
    let z = w * (w + 1) / 2 + b as u128;
    u64::try_from(z).ok()
}

pub fn unpair(z: u64) -> (u64, u64) {
    let z = z as u128;
    // Largest w with w(w+1)/2 ≤ z.
    let mut w = (((8 * z + 1) as f64).sqrt() as u128).saturating_sub(1) / 2;
    while (w + 1) * (w + 2) / 2 <= z {
        w += 1;
    }
    while w * (w + 1) / 2 > z {
        w -= 1;
    }
    let b = z - w * (w + 1) / 2;
    ((w - b) as u64, b as u64)
}

/// Length-lexicographic index of a string; `None` for strings of length ≥ 63.
pub fn string_code(s: &BinaryString) -> Option<u64> {
    if s.len() >= 63 {
        return None;
    }
    let value = s.to_bits().iter().fold(0u64, |v, &b| (v << 1) | b as u64);
    Some((1u64 << s.len()) - 1 + value)
}

pub fn string_from_code(c: u64) -> BinaryString {
    let len = 63 - (c + 1).leading_zeros() as u64;
    let value = c + 1 - (1u64 << len);
    BinaryString::from_bits((0..len).rev().map(|j| (value >> j) & 1 == 1))
}

/// Packs a tuple of known length by iterated pairing.
pub fn tuple_code(t: &NumTuple) -> Option<u64> {
    match t.0.as_slice() {
        [] => Some(0),
        [x] => Some(*x),
        [x, rest @ ..] => pair(*x, tuple_code(&NumTuple(rest.to_vec()))?),
    }
}

pub fn tuple_from_code(c: u64, len: usize) -> NumTuple {
    let mut out = Vec::with_capacity(len);
    let mut c = c;
    for i in 0..len {
        if i + 1 == len {
            out.push(c);
        } else {
            let (a, rest) = unpair(c);
            out.push(a);
            c = rest;
        }
    }
    NumTuple(out)
}

const TAGS: u64 = 6;

/// Decodes a requirement code; `Err` explains why the code is malformed.
pub fn decode(n: u32, code: u64) -> Result<Requirement, String> {
    let (tag, rest) = (code % TAGS, code / TAGS);
    let req = match tag {
        0 => {
            let (s, m) = unpair(rest);
            Requirement::P { sigma: string_from_code(s), m }
        }
        1 => {
            let (k, st) = unpair(rest);
            let (s, t) = unpair(st);
            let (sigma, tau) = (string_from_code(s), string_from_code(t));
            if k == 0 {
                Requirement::D0 { sigma, tau }
            } else {
                let k = u32::try_from(k).map_err(|_| format!("layer {k} out of range"))?;
                Requirement::Dk { k, sigma, tau }
            }
        }
        2 => Requirement::Drho { rho: string_from_code(rest) },
        3 => {
            let (s, x) = unpair(rest);
            Requirement::Qtop { sigma: string_from_code(s), x }
        }
        4 => {
            let (k, st) = unpair(rest);
            if k == 0 || k + 1 >= n as u64 {
                return Err(format!("Q(k, …) needs 0 < k < n−1, got k = {k}"));
            }
            let (s, t) = unpair(st);
            let k = k as u32;
            Requirement::Qmid { k, sigma: string_from_code(s), args: tuple_from_code(t, (n - k) as usize) }
        }
        _ => {
            if n < 2 {
                return Err("Q(0, …) needs n > 1".into());
            }
            let (s, t) = unpair(rest);
            Requirement::Q0 { sigma: string_from_code(s), args: tuple_from_code(t, n as usize) }
        }
    };
    req.validate(n)?;
    Ok(req)
}

/// Inverse of [`decode`] on well-formed requirements.
pub fn encode(n: u32, req: &Requirement) -> Option<u64> {
    req.validate(n).ok()?;
    let (tag, rest) = match req {
        Requirement::P { sigma, m } => (0, pair(string_code(sigma)?, *m)?),
        Requirement::D0 { sigma, tau } => (1, pair(0, pair(string_code(sigma)?, string_code(tau)?)?)?),
        Requirement::Dk { k, sigma, tau } => {
            (1, pair(*k as u64, pair(string_code(sigma)?, string_code(tau)?)?)?)
        }
        Requirement::Drho { rho } => (2, string_code(rho)?),
        Requirement::Qtop { sigma, x } => (3, pair(string_code(sigma)?, *x)?),
        Requirement::Qmid { k, sigma, args } => {
            (4, pair(*k as u64, pair(string_code(sigma)?, tuple_code(args)?)?)?)
        }
        Requirement::Q0 { sigma, args } => (5, pair(string_code(sigma)?, tuple_code(args)?)?),
    };
    rest.checked_mul(TAGS)?.checked_add(tag)
}

/// What the canonical schedule assigns to one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheduled {
    pub code: u64,
    pub rep: u64,
    pub requirement: Result<Requirement, String>,
}

pub fn requirement_at(n: u32, s: u64) -> Scheduled {
    let (code, rep) = unpair(s);
    Scheduled { code, rep, requirement: decode(n, code) }
}

/// The stage at which `code` is scheduled for the `rep`-th time.
pub fn stage_of(code: u64, rep: u64) -> Option<u64> {
    pair(code, rep)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("fresh numbers exhausted")]
pub struct FreshOverflow;

/// Supply of fresh numbers. `next` always exceeds every recorded numeral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshCounter {
    pub next: u64,
}

impl Default for FreshCounter {
    fn default() -> Self {
        Self { next: 1 }
    }
}

/// Numerals at or above this bound are treated as exhausting the supply.
pub const FRESH_LIMIT: u64 = 1 << 62;

impl FreshCounter {
    pub fn fresh(&mut self) -> Result<u64, FreshOverflow> {
        let v = self.next;
        if v >= FRESH_LIMIT {
            return Err(FreshOverflow);
        }
        self.next += 1;
        Ok(v)
    }

    /// Records that `v` now occurs in the state.
    pub fn observe(&mut self, v: u64) -> Result<(), FreshOverflow> {
        if v >= FRESH_LIMIT {
            return Err(FreshOverflow);
        }
        self.next = self.next.max(v + 1);
        Ok(())
    }
}

/// How stages are assigned to requirements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleConfig {
    Canonical,
    Focused { root: BinaryString, bound: u64 },
}

impl fmt::Display for ScheduleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleConfig::Canonical => write!(f, "canonical"),
            ScheduleConfig::Focused { root, bound } => write!(f, "focused:{root}:{bound}"),
        }
    }
}

impl FromStr for ScheduleConfig {
    type Err = String;

    /// `canonical` or `focused:<root>:<bound>`; the root may be empty.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "canonical" {
            return Ok(ScheduleConfig::Canonical);
        }
        let rest = s
            .strip_prefix("focused:")
            .ok_or_else(|| format!("unknown schedule `{s}`"))?;
        let (root, bound) = rest
            .rsplit_once(':')
            .ok_or_else(|| "expected focused:<root>:<bound>".to_string())?;
        let root = root.parse::<BinaryString>().map_err(|e| e.to_string())?;
        let bound = bound.parse::<u64>().map_err(|e| format!("bad bound: {e}"))?;
        Ok(ScheduleConfig::Focused { root, bound })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(s: &str) -> BinaryString {
        s.parse().unwrap()
    }

    /// Independent pairing oracle: walk the diagonals.
    fn unpair_by_walking(z: u64) -> (u64, u64) {
        let (mut a, mut b) = (0u64, 0u64);
        for _ in 0..z {
            if a == 0 {
                a = b + 1;
                b = 0;
            } else {
                a -= 1;
                b += 1;
            }
        }
        (a, b)
    }

    #[test]
    fn pairing_matches_diagonal_walk() {
        for z in 0..2000 {
            assert_eq!(unpair(z), unpair_by_walking(z), "z = {z}");
            let (a, b) = unpair(z);
            assert_eq!(pair(a, b), Some(z));
        }
    }

    #[test]
    fn first_stages() {
        // stage 0 is (code 0, rep 0); code 0 is P(ε, 0)
        let s0 = requirement_at(1, 0);
        assert_eq!((s0.code, s0.rep), (0, 0));
        assert_eq!(s0.requirement, Ok(Requirement::P { sigma: b(""), m: 0 }));
        // stage 1 is (code 1, rep 0) = D(0, ε, ε)
        assert_eq!(requirement_at(1, 1).requirement, Ok(Requirement::D0 { sigma: b(""), tau: b("") }));
        // code 2 is D(ε); pair(2, 0) = 3
        let s3 = requirement_at(2, 3);
        assert_eq!((s3.code, s3.rep), (2, 0));
        assert_eq!(s3.requirement, Ok(Requirement::Drho { rho: b("") }));
        // code 3 is Q(top, ε, 0), malformed since x ≥ |σ|
        assert!(requirement_at(2, 6).requirement.is_err());
    }

    #[test]
    fn string_codes_enumerate_length_lex() {
        let mut all = vec![BinaryString::empty()];
        for len in 1..=6u64 {
            for v in 0..(1u64 << len) {
                all.push(BinaryString::from_bits((0..len).rev().map(|j| (v >> j) & 1 == 1)));
            }
        }
        for (i, s) in all.iter().enumerate() {
            assert_eq!(string_code(s), Some(i as u64));
            assert_eq!(&string_from_code(i as u64), s);
        }
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn every_small_code_is_scheduled() {
        let mut seen = [false; 100];
        for s in 0..=1_000_000u64 {
            let (code, _) = unpair(s);
            if code < 100 {
                seen[code as usize] = true;
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn schedule_config_parses() {
        assert_eq!("canonical".parse::<ScheduleConfig>(), Ok(ScheduleConfig::Canonical));
        let f: ScheduleConfig = "focused::2".parse().unwrap();
        assert_eq!(f, ScheduleConfig::Focused { root: b(""), bound: 2 });
        assert_eq!(f.to_string().parse::<ScheduleConfig>(), Ok(f));
        assert!("focused:01".parse::<ScheduleConfig>().is_err());
        assert!("sideways".parse::<ScheduleConfig>().is_err());
    }

    #[test]
    fn fresh_counter_basics() {
        let mut c = FreshCounter::default();
        assert_eq!(c.fresh(), Ok(1));
        c.observe(7).unwrap();
        let a = c.fresh().unwrap();
        let b = c.fresh().unwrap();
        assert!(a > 7 && b > a);
        assert!(c.observe(FRESH_LIMIT).is_err());
    }

    fn arb_string() -> impl Strategy<Value = BinaryString> {
        prop::collection::vec(any::<bool>(), 0..6).prop_map(BinaryString::from_bits)
    }

    fn arb_tuple(len: usize) -> impl Strategy<Value = NumTuple> {
        prop::collection::vec(0u64..4, len).prop_map(NumTuple)
    }

    fn arb_requirement(n: u32) -> BoxedStrategy<Requirement> {
        let mut options: Vec<BoxedStrategy<Requirement>> = vec![
            (arb_string(), 0u64..20).prop_map(|(sigma, m)| Requirement::P { sigma, m }).boxed(),
            (arb_string(), arb_string()).prop_map(|(sigma, tau)| Requirement::D0 { sigma, tau }).boxed(),
            arb_string().prop_map(|rho| Requirement::Drho { rho }).boxed(),
            (arb_string(), 0u64..6).prop_map(|(sigma, x)| Requirement::Qtop { sigma, x }).boxed(),
        ];
        if n > 1 {
            options.push(
                (1..n, arb_string(), arb_string())
                    .prop_map(|(k, sigma, tau)| Requirement::Dk { k, sigma, tau })
                    .boxed(),
            );
            options.push(
                (arb_string(), arb_tuple(n as usize))
                    .prop_map(|(sigma, args)| Requirement::Q0 { sigma, args })
                    .boxed(),
            );
        }
        if n > 2 {
            options.push(
                (1..n - 1)
                    .prop_flat_map(move |k| (Just(k), arb_string(), arb_tuple((n - k) as usize)))
                    .prop_map(|(k, sigma, args)| Requirement::Qmid { k, sigma, args })
                    .boxed(),
            );
        }
        prop::strategy::Union::new(options).boxed()
    }

    fn arb_case() -> impl Strategy<Value = (u32, Requirement)> {
        (1u32..5).prop_flat_map(|n| (Just(n), arb_requirement(n)))
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip((n, req) in arb_case(), rep in 0u64..50) {
            match encode(n, &req) {
                Some(code) => {
                    prop_assert_eq!(decode(n, code), Ok(req.clone()));
                    if let Some(s) = stage_of(code, rep) {
                        let at = requirement_at(n, s);
                        prop_assert_eq!((at.code, at.rep), (code, rep));
                        prop_assert_eq!(at.requirement, Ok(req));
                    }
                }
                None => prop_assert!(req.validate(n).is_err()),
            }
        }

        #[test]
        fn decode_encode_round_trip(n in 1u32..5, code in 0u64..200_000) {
            if let Ok(req) = decode(n, code) {
                prop_assert_eq!(encode(n, &req), Some(code));
            }
        }
    }
}
