// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! The `(m, k)`-Bloom filter over an index function `F : D -> [m]^k`.
//!
//! Index `i` in `[m]` maps to bit `i - 1`. Serialized bytes are LSB-first:
//! bit `j` lives in byte `j / 8` at position `j % 8`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::prf::{derive_index_vector, FunctionOracle, IndexVector};

pub const MAX_K: usize = 64;

pub(crate) const STATE_VERSION: u8 = 1;
pub(crate) const FAMILY_BLOOM: u8 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BloomParams {
    pub m: u64,
    pub k: usize,
}

impl BloomParams {
    pub fn new(m: u64, k: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("bloom: m must be at least 1".into()));
        }
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParams(format!(
                "bloom: k must be in 1..={MAX_K}, got {k}"
            )));
        }
        Ok(BloomParams { m, k })
    }
}

/// Anything that maps an element to `k` indices in `[m]`.
pub trait IndexFunction {
    fn indices(&mut self, x: &[u8], m: u64, k: usize) -> IndexVector;
}

impl IndexFunction for FunctionOracle {
    fn indices(&mut self, x: &[u8], m: u64, k: usize) -> IndexVector {
        derive_index_vector(self, x, m, k)
    }
}

/// Fixed lookup table, for scripted examples.
#[derive(Clone, Debug, Default)]
pub struct TableIndexFunction {
    table: HashMap<Vec<u8>, IndexVector>,
}

impl TableIndexFunction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, x: &[u8], v: IndexVector) -> Self {
        self.table.insert(x.to_vec(), v);
        self
    }
}

impl IndexFunction for TableIndexFunction {
    fn indices(&mut self, x: &[u8], m: u64, k: usize) -> IndexVector {
        let v = self
            .table
            .get(x)
            .unwrap_or_else(|| panic!("no table entry for {x:02x?}"))
            .clone();
        assert!(v.m() == m && v.k() == k, "table entry has wrong shape");
        v
    }
}

/// Unkeyed FNV-1a with Kirsch-Mitzenmacher double hashing, the kind of
/// public hash an off-the-shelf Bloom filter ships with. Anyone can compute
/// it offline.
#[derive(Clone, Copy, Debug, Default)]
pub struct PublicIndexHash;

impl PublicIndexHash {
    fn fnv1a(seed: u64, x: &[u8]) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
        for &b in x {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // final avalanche so short inputs spread over all of [m]
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        h
    }
}

impl IndexFunction for PublicIndexHash {
    fn indices(&mut self, x: &[u8], m: u64, k: usize) -> IndexVector {
        let h1 = Self::fnv1a(0, x);
        let h2 = Self::fnv1a(0x9e37_79b9_7f4a_7c15, x) | 1;
        let indices = (0..k as u64)
            .map(|i| h1.wrapping_add(i.wrapping_mul(h2)) % m + 1)
            .collect();
        IndexVector::new(m, indices).expect("indices are in range by construction")
    }
}

/// An `m`-bit vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BloomState {
    m: u64,
    k: usize,
    words: Vec<u64>,
}

impl BloomState {
    /// `sigma <- 0^m`.
    pub fn setup(pp: BloomParams) -> Self {
        BloomState {
            m: pp.m,
            k: pp.k,
            words: vec![0; pp.m.div_ceil(64) as usize],
        }
    }

    pub fn params(&self) -> BloomParams {
        BloomParams {
            m: self.m,
            k: self.k,
        }
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    /// Bit at zero-based position `pos`.
    pub fn bit(&self, pos: u64) -> bool {
        (self.words[(pos / 64) as usize] >> (pos % 64)) & 1 == 1
    }

    fn set(&mut self, pos: u64) {
        self.words[(pos / 64) as usize] |= 1 << (pos % 64);
    }

    pub fn hamming_weight(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Fraction of bits set.
    pub fn fill_ratio(&self) -> f64 {
        self.hamming_weight() as f64 / self.m as f64
    }

    /// Zero-based positions of the set bits.
    pub fn ones(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.m).filter(|&p| self.bit(p))
    }

    /// `true` if every bit set in `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BloomState) -> bool {
        self.m == other.m
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    /// `sigma <- sigma OR B_{m,k}(v)`.
    pub fn insert_indices(&mut self, v: &IndexVector) {
        debug_assert_eq!(v.m(), self.m);
        for &i in v.indices() {
            self.set(i - 1);
        }
    }

    /// `B_{m,k}(v) == sigma AND B_{m,k}(v)`.
    pub fn contains_indices(&self, v: &IndexVector) -> bool {
        v.indices().iter().all(|&i| self.bit(i - 1))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.m.div_ceil(8) as usize;
        let mut out = Vec::with_capacity(14 + nbytes);
        out.push(STATE_VERSION);
        out.push(FAMILY_BLOOM);
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for (j, w) in self.words.iter().enumerate() {
            let bytes = w.to_le_bytes();
            let take = (nbytes - j * 8).min(8);
            out.extend_from_slice(&bytes[..take]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 || bytes[0] != STATE_VERSION || bytes[1] != FAMILY_BLOOM {
            return Err(Error::Decode("not a version-1 bloom state".into()));
        }
        let m = u64::from_le_bytes(bytes[2..10].try_into().unwrap());
        let k = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let pp = BloomParams::new(m, k).map_err(|e| Error::Decode(e.to_string()))?;
        let payload = &bytes[14..];
        if payload.len() as u64 != m.div_ceil(8) {
            return Err(Error::Decode("bloom payload length mismatch".into()));
        }
        let mut state = BloomState::setup(pp);
        for (j, chunk) in payload.chunks(8).enumerate() {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            state.words[j] = u64::from_le_bytes(w);
        }
        if m % 64 != 0 && state.words.last().unwrap() >> (m % 64) != 0 {
            return Err(Error::Decode("bits set beyond m".into()));
        }
        Ok(state)
    }
}

/// `B_{m,k}(v)`: the `m`-bit map with exactly the bits named by `v` set.
pub fn bitmap(m: u64, k: usize, v: &IndexVector) -> Result<BloomState> {
    let pp = BloomParams::new(m, k)?;
    if v.k() != k {
        return Err(Error::Domain(format!("expected {k} indices, got {}", v.k())));
    }
    if let Some(&bad) = v.indices().iter().find(|&&i| i == 0 || i > m) {
        return Err(Error::Domain(format!("index {bad} outside [1, {m}]")));
    }
    let mut s = BloomState::setup(pp);
    s.insert_indices(v);
    Ok(s)
}

/// `up^F(x, sigma)`; always succeeds.
pub fn bloom_up<F: IndexFunction + ?Sized>(x: &[u8], state: &BloomState, f: &mut F) -> (bool, BloomState) {
    let mut next = state.clone();
    let v = f.indices(x, state.m, state.k);
    next.insert_indices(&v);
    (true, next)
}

/// `qry^F(x, sigma)`.
pub fn bloom_qry<F: IndexFunction + ?Sized>(x: &[u8], state: &BloomState, f: &mut F) -> bool {
    let v = f.indices(x, state.m, state.k);
    state.contains_indices(&v)
}
