// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! Insertion-only Cuckoo filter with a one-slot stash.
//!
//! Once the stash is occupied the filter is disabled: every later `up`
//! returns `false` and leaves the state untouched. The insertion that fills
//! the stash still returns `true`.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bloom::STATE_VERSION;
use crate::error::{Error, Result};
use crate::prf::{derive_bits, FunctionOracle};

pub(crate) const FAMILY_CUCKOO: u8 = 1;

pub const DEFAULT_MAX_EVICTIONS: u32 = 500;

/// Largest table `setup` will allocate, in slots.
pub const MAX_SLOTS: u64 = 1 << 32;

pub(crate) const TAG_DOMAIN: u8 = 1;
pub(crate) const INDEX_DOMAIN: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CuckooParams {
    pub s: u32,
    pub index_bits: u32,
    pub tag_bits: u32,
    pub max_evictions: u32,
}

impl CuckooParams {
    pub fn new(s: u32, index_bits: u32, tag_bits: u32, max_evictions: u32) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidParams("cuckoo: s must be at least 1".into()));
        }
        if !(1..=32).contains(&index_bits) {
            return Err(Error::InvalidParams(format!(
                "cuckoo: lambda_I must be in 1..=32, got {index_bits}"
            )));
        }
        if !(1..=32).contains(&tag_bits) {
            return Err(Error::InvalidParams(format!(
                "cuckoo: lambda_T must be in 1..=32, got {tag_bits}"
            )));
        }
        if max_evictions == 0 {
            return Err(Error::InvalidParams("cuckoo: num must be at least 1".into()));
        }
        if u64::from(s) << index_bits > MAX_SLOTS {
            return Err(Error::InvalidParams(format!(
                "cuckoo: s * 2^lambda_I exceeds {MAX_SLOTS} slots"
            )));
        }
        Ok(CuckooParams {
            s,
            index_bits,
            tag_bits,
            max_evictions,
        })
    }

    pub fn buckets(&self) -> u64 {
        1 << self.index_bits
    }

    pub fn slots(&self) -> u64 {
        u64::from(self.s) * self.buckets()
    }
}

/// Fixed-length big-endian encoding of a tag as a domain element.
///
/// `H_I` is evaluated on this byte string, the same way it would be evaluated
/// on an ordinary element with those bytes.
pub fn encode_tag(tag: u32, tag_bits: u32) -> Vec<u8> {
    let len = tag_bits.div_ceil(8) as usize;
    tag.to_be_bytes()[4 - len..].to_vec()
}

/// The pair `(H_T, H_I)`.
pub trait CuckooHashes {
    fn tag(&mut self, x: &[u8], tag_bits: u32) -> u32;
    fn index(&mut self, x: &[u8], index_bits: u32) -> u32;
}

/// Both functions drawn from one oracle under distinct domain tags.
impl CuckooHashes for FunctionOracle {
    fn tag(&mut self, x: &[u8], tag_bits: u32) -> u32 {
        derive_bits(self, x, tag_bits, TAG_DOMAIN).to_u64() as u32
    }

    fn index(&mut self, x: &[u8], index_bits: u32) -> u32 {
        derive_bits(self, x, index_bits, INDEX_DOMAIN).to_u64() as u32
    }
}

/// Lookup tables, for scripted examples.
#[derive(Clone, Debug, Default)]
pub struct TableHashes {
    tags: HashMap<Vec<u8>, u32>,
    indices: HashMap<Vec<u8>, u32>,
}

impl TableHashes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tag(mut self, x: &[u8], tag: u32) -> Self {
        self.tags.insert(x.to_vec(), tag);
        self
    }

    pub fn with_index(mut self, x: &[u8], index: u32) -> Self {
        self.indices.insert(x.to_vec(), index);
        self
    }
}

impl CuckooHashes for TableHashes {
    fn tag(&mut self, x: &[u8], _: u32) -> u32 {
        *self
            .tags
            .get(x)
            .unwrap_or_else(|| panic!("no tag entry for {x:02x?}"))
    }

    fn index(&mut self, x: &[u8], _: u32) -> u32 {
        *self
            .indices
            .get(x)
            .unwrap_or_else(|| panic!("no index entry for {x:02x?}"))
    }
}

/// Random choices made by `up`: the starting bucket of an eviction walk and
/// the slot evicted at each step. Slots are zero-based.
pub trait CoinSource {
    /// `false` picks `i_1`, `true` picks `i_2`.
    fn bucket_choice(&mut self) -> bool;
    fn slot(&mut self, s: u32) -> u32;
}

impl<C: CoinSource + ?Sized> CoinSource for &mut C {
    fn bucket_choice(&mut self) -> bool {
        (**self).bucket_choice()
    }

    fn slot(&mut self, s: u32) -> u32 {
        (**self).slot(s)
    }
}

#[derive(Clone, Debug)]
pub struct RngCoins<R>(pub R);

impl<R: RngCore> CoinSource for RngCoins<R> {
    fn bucket_choice(&mut self) -> bool {
        self.0.gen()
    }

    fn slot(&mut self, s: u32) -> u32 {
        self.0.gen_range(0..s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoinDraw {
    Bucket(bool),
    Slot(u32),
}

/// Replays a fixed list of draws. Panics if the script runs out or a draw
/// of the wrong kind is requested.
#[derive(Clone, Debug, Default)]
pub struct ScriptedCoins {
    draws: VecDeque<CoinDraw>,
}

impl ScriptedCoins {
    pub fn new(draws: impl IntoIterator<Item = CoinDraw>) -> Self {
        ScriptedCoins {
            draws: draws.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.draws.len()
    }
}

impl CoinSource for ScriptedCoins {
    fn bucket_choice(&mut self) -> bool {
        match self.draws.pop_front() {
            Some(CoinDraw::Bucket(b)) => b,
            other => panic!("expected a bucket draw, script has {other:?}"),
        }
    }

    fn slot(&mut self, s: u32) -> u32 {
        match self.draws.pop_front() {
            Some(CoinDraw::Slot(z)) if z < s => z,
            other => panic!("expected a slot draw below {s}, script has {other:?}"),
        }
    }
}

/// Passes draws through and keeps a copy.
pub struct RecordingCoins<C> {
    pub inner: C,
    pub draws: Vec<CoinDraw>,
}

impl<C: CoinSource> RecordingCoins<C> {
    pub fn new(inner: C) -> Self {
        RecordingCoins {
            inner,
            draws: Vec::new(),
        }
    }

    pub fn take(&mut self) -> Vec<CoinDraw> {
        std::mem::take(&mut self.draws)
    }
}

impl<C: CoinSource> CoinSource for RecordingCoins<C> {
    fn bucket_choice(&mut self) -> bool {
        let b = self.inner.bucket_choice();
        self.draws.push(CoinDraw::Bucket(b));
        b
    }

    fn slot(&mut self, s: u32) -> u32 {
        let z = self.inner.slot(s);
        self.draws.push(CoinDraw::Slot(z));
        z
    }
}

/// Buckets plus stash. Occupied slots of a bucket always form a prefix;
/// slots past the load are kept at zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CuckooState {
    pp: CuckooParams,
    slots: Vec<u32>,
    loads: Vec<u32>,
    stash: Option<u32>,
}

impl CuckooState {
    pub fn setup(pp: CuckooParams) -> Self {
        CuckooState {
            pp,
            slots: vec![0; pp.slots() as usize],
            loads: vec![0; pp.buckets() as usize],
            stash: None,
        }
    }

    pub fn params(&self) -> CuckooParams {
        self.pp
    }

    pub fn is_disabled(&self) -> bool {
        self.stash.is_some()
    }

    pub fn stash(&self) -> Option<u32> {
        self.stash
    }

    pub fn load(&self, bucket: u32) -> u32 {
        self.loads[bucket as usize]
    }

    /// Occupied slots of `bucket`.
    pub fn bucket(&self, bucket: u32) -> &[u32] {
        let start = bucket as usize * self.pp.s as usize;
        &self.slots[start..start + self.loads[bucket as usize] as usize]
    }

    pub fn occupied(&self) -> u64 {
        self.loads.iter().map(|&l| u64::from(l)).sum()
    }

    /// Fraction of bucket slots occupied (the stash is not counted).
    pub fn load_factor(&self) -> f64 {
        self.occupied() as f64 / self.pp.slots() as f64
    }

    /// `(bucket, tag)` for every stored tag, bucket-major.
    pub fn stored_tags(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.loads.len() as u32).flat_map(move |b| self.bucket(b).iter().map(move |&t| (b, t)))
    }

    /// Sorted multiset of tags in buckets and stash.
    pub fn tag_multiset(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.stored_tags().map(|(_, t)| t).collect();
        v.extend(self.stash);
        v.sort_unstable();
        v
    }

    fn has_room(&self, bucket: u32) -> bool {
        self.loads[bucket as usize] < self.pp.s
    }

    fn append(&mut self, bucket: u32, tag: u32) {
        let b = bucket as usize;
        let pos = b * self.pp.s as usize + self.loads[b] as usize;
        self.slots[pos] = tag;
        self.loads[b] += 1;
    }

    fn swap(&mut self, bucket: u32, slot: u32, tag: u32) -> u32 {
        let pos = bucket as usize * self.pp.s as usize + slot as usize;
        std::mem::replace(&mut self.slots[pos], tag)
    }

    fn locate<H: CuckooHashes + ?Sized>(&self, x: &[u8], h: &mut H) -> (u32, u32, u32) {
        let CuckooParams {
            index_bits,
            tag_bits,
            ..
        } = self.pp;
        let tag = h.tag(x, tag_bits);
        let i1 = h.index(x, index_bits);
        let i2 = i1 ^ h.index(&encode_tag(tag, tag_bits), index_bits);
        (tag, i1, i2)
    }

    /// In-place `up`.
    pub fn insert<H, C>(&mut self, x: &[u8], h: &mut H, coins: &mut C) -> bool
    where
        H: CuckooHashes + ?Sized,
        C: CoinSource + ?Sized,
    {
        let (mut tag, i1, i2) = self.locate(x, h);
        if self.stash.is_some() {
            return false;
        }
        if self.bucket(i1).contains(&tag) || self.bucket(i2).contains(&tag) {
            return true;
        }
        for i in [i1, i2] {
            if self.has_room(i) {
                self.append(i, tag);
                return true;
            }
        }
        let mut i = if coins.bucket_choice() { i2 } else { i1 };
        for _ in 0..self.pp.max_evictions {
            let slot = coins.slot(self.pp.s);
            tag = self.swap(i, slot, tag);
            i ^= h.index(&encode_tag(tag, self.pp.tag_bits), self.pp.index_bits);
            if self.has_room(i) {
                self.append(i, tag);
                return true;
            }
        }
        self.stash = Some(tag);
        true
    }

    /// `qry`; never mutates.
    pub fn contains<H: CuckooHashes + ?Sized>(&self, x: &[u8], h: &mut H) -> bool {
        let (tag, i1, i2) = self.locate(x, h);
        self.bucket(i1).contains(&tag) || self.bucket(i2).contains(&tag) || self.stash == Some(tag)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.pp.s as usize;
        let mut out = Vec::with_capacity(17 + self.loads.len() * 4 * (s + 1));
        out.push(STATE_VERSION);
        out.push(FAMILY_CUCKOO);
        out.extend_from_slice(&self.pp.s.to_le_bytes());
        out.push(self.pp.index_bits as u8);
        out.push(self.pp.tag_bits as u8);
        out.extend_from_slice(&self.pp.max_evictions.to_le_bytes());
        out.push(u8::from(self.is_disabled()));
        for (b, &load) in self.loads.iter().enumerate() {
            out.extend_from_slice(&load.to_le_bytes());
            for &t in &self.slots[b * s..(b + 1) * s] {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        out.push(u8::from(self.stash.is_some()));
        out.extend_from_slice(&self.stash.unwrap_or(0).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| Error::Decode(format!("cuckoo state: {why}"));
        if bytes.len() < 13 || bytes[0] != STATE_VERSION || bytes[1] != FAMILY_CUCKOO {
            return Err(bad("not a version-1 cuckoo state"));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let pp = CuckooParams::new(
            u32_at(2),
            u32::from(bytes[6]),
            u32::from(bytes[7]),
            u32_at(8),
        )
        .map_err(|e| bad(&e.to_string()))?;
        let disabled = bytes[12];
        let s = pp.s as usize;
        let expected = 13 + pp.buckets() as usize * 4 * (s + 1) + 5;
        if bytes.len() != expected {
            return Err(bad("length mismatch"));
        }
        let mut state = CuckooState::setup(pp);
        let mut at = 13;
        let tag_limit = 1u64 << pp.tag_bits;
        for b in 0..pp.buckets() as usize {
            let load = u32_at(at);
            at += 4;
            if load > pp.s {
                return Err(bad("bucket load exceeds s"));
            }
            state.loads[b] = load;
            for j in 0..s {
                let t = u32_at(at);
                at += 4;
                if (j < load as usize && u64::from(t) >= tag_limit) || (j >= load as usize && t != 0) {
                    return Err(bad("slot value out of range"));
                }
                state.slots[b * s + j] = t;
            }
        }
        let stash = u32_at(at + 1);
        state.stash = match bytes[at] {
            0 if stash == 0 => None,
            1 if u64::from(stash) < tag_limit => Some(stash),
            _ => return Err(bad("bad stash encoding")),
        };
        if disabled != u8::from(state.stash.is_some()) {
            return Err(bad("disabled flag disagrees with stash"));
        }
        Ok(state)
    }
}

/// Functional `up`: returns the answer and the successor state.
pub fn cuckoo_up<H, C>(x: &[u8], state: &CuckooState, h: &mut H, coins: &mut C) -> (bool, CuckooState)
where
    H: CuckooHashes + ?Sized,
    C: CoinSource + ?Sized,
{
    let mut next = state.clone();
    let b = next.insert(x, h, coins);
    (b, next)
}

pub fn cuckoo_qry<H: CuckooHashes + ?Sized>(x: &[u8], state: &CuckooState, h: &mut H) -> bool {
    state.contains(x, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn stub() -> TableHashes {
        TableHashes::new()
            .with_tag(b"a", 0x5)
            .with_index(b"a", 2)
            .with_index(&[0x5], 1)
            .with_tag(b"b", 0x9)
            .with_index(b"b", 2)
            .with_index(&[0x9], 3)
            .with_tag(b"c", 0x7)
            .with_index(b"c", 2)
            .with_index(&[0x7], 3)
    }

    fn small() -> CuckooParams {
        CuckooParams::new(1, 2, 4, 1).unwrap()
    }

    #[test]
    fn setup_is_empty() {
        let s = CuckooState::setup(small());
        assert_eq!(s.loads, vec![0; 4]);
        assert!(!s.is_disabled());
        assert_eq!(s, CuckooState::setup(small()));
    }

    #[test]
    fn params_validation() {
        assert!(CuckooParams::new(0, 2, 4, 1).is_err());
        assert!(CuckooParams::new(1, 0, 4, 1).is_err());
        assert!(CuckooParams::new(1, 33, 4, 1).is_err());
        assert!(CuckooParams::new(1, 2, 0, 1).is_err());
        assert!(CuckooParams::new(1, 2, 33, 1).is_err());
        assert!(CuckooParams::new(1, 2, 4, 0).is_err());
        assert!(CuckooParams::new(2, 32, 4, 1).is_err());
        assert!(CuckooParams::new(1, 32, 32, 1).is_ok());
    }

    #[test]
    fn tag_encoding() {
        assert_eq!(encode_tag(5, 4), vec![5]);
        assert_eq!(encode_tag(0x1234, 13), vec![0x12, 0x34]);
        assert_eq!(encode_tag(0xdead_beef, 32), vec![0xde, 0xad, 0xbe, 0xef]);
    }

    #[test]
    fn scripted_insert_and_eviction() {
        let mut h = stub();
        let mut none = ScriptedCoins::default();
        let s0 = CuckooState::setup(small());

        let (b, s1) = cuckoo_up(b"a", &s0, &mut h, &mut none);
        assert!(b);
        assert_eq!(s1.bucket(2), &[5]);

        let (b, s1b) = cuckoo_up(b"a", &s1, &mut h, &mut none);
        assert!(b);
        assert_eq!(s1b, s1);

        let (b, s2) = cuckoo_up(b"b", &s1, &mut h, &mut none);
        assert!(b);
        assert_eq!(s2.bucket(1), &[9]);

        // c: tag 7, i1 = 2, i2 = 1, both full. Start at i1, evict slot 0.
        let mut coins = ScriptedCoins::new([CoinDraw::Bucket(false), CoinDraw::Slot(0)]);
        let (b, s3) = cuckoo_up(b"c", &s2, &mut h, &mut coins);
        assert!(b);
        assert_eq!(coins.remaining(), 0);
        assert_eq!(s3.bucket(2), &[7]);
        assert_eq!(s3.bucket(3), &[5]);
        assert_eq!(s3.bucket(1), &[9]);
        for x in [b"a", b"b", b"c"] {
            assert!(cuckoo_qry(x, &s3, &mut h));
        }
    }

    #[test]
    fn stash_then_disabled() {
        // every element lands on buckets {0, 1}, s = 1: the third insert
        // walks num = 1 step and stashes
        let mut h = TableHashes::new();
        for (x, t) in [(b"p", 1u32), (b"q", 2), (b"r", 3)] {
            h = h.with_tag(x, t).with_index(x, 0).with_index(&[t as u8], 1);
        }
        h = h.with_tag(b"z", 4).with_index(b"z", 2).with_index(&[4], 1);
        let mut coins = RngCoins(ChaCha20Rng::seed_from_u64(1));
        let mut s = CuckooState::setup(small());
        assert!(s.insert(b"p", &mut h, &mut coins));
        assert!(s.insert(b"q", &mut h, &mut coins));
        assert!(!s.is_disabled());
        assert!(s.insert(b"r", &mut h, &mut coins));
        assert!(s.is_disabled());
        for x in [b"p", b"q", b"r"] {
            assert!(s.contains(x, &mut h));
        }
        let frozen = s.to_bytes();
        assert!(!s.insert(b"z", &mut h, &mut coins));
        assert_eq!(s.to_bytes(), frozen);
        assert!(!s.contains(b"z", &mut h));
    }

    #[test]
    fn recording_coins_replay() {
        let pp = CuckooParams::new(2, 4, 6, 50).unwrap();
        let mut f = FunctionOracle::random(11, 32);
        let mut rec = RecordingCoins::new(RngCoins(ChaCha20Rng::seed_from_u64(3)));
        let mut a = CuckooState::setup(pp);
        for i in 0..40u64 {
            a.insert(&i.to_be_bytes(), &mut f, &mut rec);
        }
        let mut replay = ScriptedCoins::new(rec.take());
        let mut b = CuckooState::setup(pp);
        for i in 0..40u64 {
            b.insert(&i.to_be_bytes(), &mut f, &mut replay);
        }
        assert_eq!(a, b);
        assert_eq!(replay.remaining(), 0);
    }

    #[test]
    fn serialization_round_trip_and_rejects() {
        let pp = CuckooParams::new(2, 3, 5, 10).unwrap();
        let mut f = FunctionOracle::random(5, 32);
        let mut coins = RngCoins(ChaCha20Rng::seed_from_u64(9));
        let mut s = CuckooState::setup(pp);
        for i in 0..30u64 {
            s.insert(&i.to_be_bytes(), &mut f, &mut coins);
        }
        assert!(s.is_disabled());
        let bytes = s.to_bytes();
        assert_eq!(CuckooState::from_bytes(&bytes).unwrap(), s);
        let mut flipped = bytes.clone();
        flipped[12] ^= 1;
        assert!(CuckooState::from_bytes(&flipped).is_err());
        assert!(CuckooState::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn honest_fill_reaches_high_load() {
        let pp = CuckooParams::new(4, 8, 12, 500).unwrap();
        let mut f = FunctionOracle::random(21, 32);
        let mut coins = RngCoins(ChaCha20Rng::seed_from_u64(21));
        let mut s = CuckooState::setup(pp);
        let mut i = 0u64;
        while s.insert(&i.to_be_bytes(), &mut f, &mut coins) {
            i += 1;
        }
        assert!(s.load_factor() > 0.9, "{}", s.load_factor());
    }
}
