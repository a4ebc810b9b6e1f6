// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! Keyed pseudorandom functions and lazily sampled random functions.
//!
//! A [`FunctionOracle`] is either keyed (BLAKE3 in keyed mode, read as an
//! extendable output) or a truly random function whose outputs are sampled
//! on first use from a seeded ChaCha stream and memoized. Both behave as a
//! function from byte strings to infinite byte streams; every consumer reads
//! a prefix of that stream, so a longer read never contradicts a shorter one.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest accepted domain element, in bytes.
pub const MAX_ELEMENT_LEN: usize = 1 << 16;

const KEY_EXPANSION_CONTEXT: &str = "amq-core 2026-10 keyed oracle 128-bit key expansion";

/// An element of the filter domain: a byte string of at most
/// [`MAX_ELEMENT_LEN`] bytes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element(Vec<u8>);

impl Element {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.len() > MAX_ELEMENT_LEN {
            return Err(Error::Domain(format!(
                "element of {} bytes exceeds the {MAX_ELEMENT_LEN}-byte limit",
                bytes.len()
            )));
        }
        Ok(Element(bytes))
    }

    /// Eight-byte big-endian encoding of `v`.
    pub fn from_u64(v: u64) -> Self {
        Element(v.to_be_bytes().to_vec())
    }

    /// A uniformly random element of exactly `len` bytes.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        assert!(len <= MAX_ELEMENT_LEN);
        let mut bytes = vec![0u8; len];
        rng.fill_bytes(&mut bytes);
        Element(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl Deref for Element {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for Element {
    /// Test and CLI convenience; panics on strings longer than the domain bound.
    fn from(s: &str) -> Self {
        Element::new(s.as_bytes().to_vec()).expect("string exceeds domain bound")
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element(")?;
        for b in self.0.iter().take(16) {
            write!(f, "{b:02x}")?;
        }
        if self.0.len() > 16 {
            write!(f, "..")?;
        }
        write!(f, ")")
    }
}

/// Secret key for the keyed mode.
#[derive(Clone, PartialEq, Eq)]
pub enum Key {
    Bits128([u8; 16]),
    Bits256([u8; 32]),
}

impl Key {
    /// Parses 32 or 64 hexadecimal characters.
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        let bytes = decode_hex(s)?;
        match bytes.len() {
            16 => Ok(Key::Bits128(bytes.try_into().unwrap())),
            32 => Ok(Key::Bits256(bytes.try_into().unwrap())),
            n => Err(Error::Input(format!(
                "key must be 32 or 64 hex characters, got {}",
                n * 2
            ))),
        }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Key::Bits256(k)
    }

    fn expanded(&self) -> [u8; 32] {
        match self {
            Key::Bits128(k) => blake3::derive_key(KEY_EXPANSION_CONTEXT, k),
            Key::Bits256(k) => *k,
        }
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Bits128(_) => write!(f, "Key::Bits128(..)"),
            Key::Bits256(_) => write!(f, "Key::Bits256(..)"),
        }
    }
}

fn decode_hex(s: &str) -> Result<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return Err(Error::Input("odd number of hex characters".into()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| Error::Input(format!("invalid hex at offset {i}")))
        })
        .collect()
}

#[derive(Clone)]
enum Mode {
    Keyed {
        hasher: blake3::Hasher,
    },
    Random {
        seed: u64,
        rng: ChaCha20Rng,
        memo: HashMap<Vec<u8>, Vec<u8>>,
    },
}

/// A keyed PRF `R_K` or a lazily sampled random function `F`.
///
/// Keyed oracles are immutable apart from the call counter. Random oracles
/// grow their memo table on every new input and must not be shared between
/// concurrent workers; clone or move them instead.
#[derive(Clone)]
pub struct FunctionOracle {
    mode: Mode,
    output_len: usize,
    calls: u64,
}

impl fmt::Debug for FunctionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match &self.mode {
            Mode::Keyed { .. } => "keyed".to_string(),
            Mode::Random { seed, memo, .. } => format!("random(seed={seed}, memo={})", memo.len()),
        };
        f.debug_struct("FunctionOracle")
            .field("mode", &mode)
            .field("output_len", &self.output_len)
            .field("calls", &self.calls)
            .finish()
    }
}

impl FunctionOracle {
    pub fn keyed(key: &Key, output_len: usize) -> Self {
        assert!(output_len >= 1, "output_len must be positive");
        FunctionOracle {
            mode: Mode::Keyed {
                hasher: blake3::Hasher::new_keyed(&key.expanded()),
            },
            output_len,
            calls: 0,
        }
    }

    pub fn random(seed: u64, output_len: usize) -> Self {
        assert!(output_len >= 1, "output_len must be positive");
        FunctionOracle {
            mode: Mode::Random {
                seed,
                rng: ChaCha20Rng::seed_from_u64(seed),
                memo: HashMap::new(),
            },
            output_len,
            calls: 0,
        }
    }

    pub fn is_keyed(&self) -> bool {
        matches!(self.mode, Mode::Keyed { .. })
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    /// Number of evaluations performed so far (repeated inputs included).
    pub fn call_count(&self) -> u64 {
        self.calls
    }

    /// Evaluates the function on `x`, returning `output_len` bytes.
    pub fn evaluate(&mut self, x: &[u8]) -> Vec<u8> {
        self.calls += 1;
        let mut out = vec![0u8; self.output_len];
        self.fill(x, &mut out);
        out
    }

    /// Fills `out` with the first `out.len()` bytes of the output stream for
    /// `input` without touching the call counter.
    pub(crate) fn fill(&mut self, input: &[u8], out: &mut [u8]) {
        match &mut self.mode {
            Mode::Keyed { hasher } => {
                let mut h = hasher.clone();
                h.update(input);
                h.finalize_xof().fill(out);
            }
            Mode::Random { rng, memo, .. } => {
                let stream = memo.entry(input.to_vec()).or_default();
                if stream.len() < out.len() {
                    let start = stream.len();
                    stream.resize(out.len(), 0);
                    rng.fill_bytes(&mut stream[start..]);
                }
                out.copy_from_slice(&stream[..out.len()]);
            }
        }
    }

    pub(crate) fn count_call(&mut self) {
        self.calls += 1;
    }
}

/// `k` indices, each in `1..=m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexVector {
    m: u64,
    indices: Vec<u64>,
}

impl IndexVector {
    pub fn new(m: u64, indices: Vec<u64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("m must be positive".into()));
        }
        if indices.is_empty() {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i == 0 || i > m) {
            return Err(Error::Domain(format!("index {bad} outside [1, {m}]")));
        }
        Ok(IndexVector { m, indices })
    }

    /// `k` independent uniform indices in `1..=m`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: u64, k: usize) -> Self {
        let indices = (0..k).map(|_| rng.gen_range(1..=m)).collect();
        IndexVector { m, indices }
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }
}

/// Reads big-endian bit chunks from a prefix of an oracle output stream,
/// extending the prefix on demand.
struct BitStream<'a> {
    oracle: &'a mut FunctionOracle,
    input: &'a [u8],
    buf: Vec<u8>,
    bit_pos: usize,
}

impl<'a> BitStream<'a> {
    fn new(oracle: &'a mut FunctionOracle, input: &'a [u8], initial_bytes: usize) -> Self {
        let mut buf = vec![0u8; initial_bytes.max(8)];
        oracle.fill(input, &mut buf);
        BitStream {
            oracle,
            input,
            buf,
            bit_pos: 0,
        }
    }

    fn take(&mut self, nbits: u32) -> u64 {
        debug_assert!(nbits <= 64);
        let needed = (self.bit_pos + nbits as usize).div_ceil(8);
        if needed > self.buf.len() {
            let len = (self.buf.len() * 2).max(needed);
            self.buf.resize(len, 0);
            self.oracle.fill(self.input, &mut self.buf);
        }
        let mut v = 0u64;
        for _ in 0..nbits {
            let byte = self.buf[self.bit_pos / 8];
            let bit = (byte >> (7 - (self.bit_pos % 8))) & 1;
            v = (v << 1) | u64::from(bit);
            self.bit_pos += 1;
        }
        v
    }

    fn bits_consumed(&self) -> usize {
        self.bit_pos
    }
}

/// Bits needed to address `m` values (`ceil(log2 m)`; zero for `m == 1`).
pub fn index_bits(m: u64) -> u32 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

/// Maps `x` to `k` indices in `[m]` by rejection sampling on
/// `ceil(log2 m)`-bit chunks of the oracle output stream.
///
/// When `m` is a power of two no chunk is ever rejected and exactly
/// `k * log2(m)` bits are consumed.
pub fn derive_index_vector(oracle: &mut FunctionOracle, x: &[u8], m: u64, k: usize) -> IndexVector {
    derive_index_vector_counted(oracle, x, m, k).0
}

pub(crate) fn derive_index_vector_counted(
    oracle: &mut FunctionOracle,
    x: &[u8],
    m: u64,
    k: usize,
) -> (IndexVector, usize) {
    assert!(m >= 1 && k >= 1, "m and k must be positive");
    oracle.count_call();
    let width = index_bits(m);
    if width == 0 {
        return (
            IndexVector {
                m,
                indices: vec![1; k],
            },
            0,
        );
    }
    let initial = (k * width as usize).div_ceil(8) + 8;
    let mut stream = BitStream::new(oracle, x, initial);
    let mut indices = Vec::with_capacity(k);
    while indices.len() < k {
        let v = stream.take(width);
        if v < m {
            indices.push(v + 1);
        }
    }
    let consumed = stream.bits_consumed();
    (IndexVector { m, indices }, consumed)
}

/// A fixed-width bit string, stored big-endian in `ceil(nbits / 8)` bytes
/// with the unused high bits of the first byte cleared.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitString {
    nbits: u32,
    bytes: Vec<u8>,
}

impl BitString {
    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// The value as an integer; only for strings of at most 64 bits.
    pub fn to_u64(&self) -> u64 {
        assert!(self.nbits <= 64);
        self.bytes.iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b))
    }
}

/// `nbits` output bits of the oracle on `domain_tag || x`.
///
/// Distinct tags give independent functions out of a single oracle.
pub fn derive_bits(oracle: &mut FunctionOracle, x: &[u8], nbits: u32, domain_tag: u8) -> BitString {
    assert!((1..=256).contains(&nbits), "nbits must be in 1..=256");
    oracle.count_call();
    let mut input = Vec::with_capacity(x.len() + 1);
    input.push(domain_tag);
    input.extend_from_slice(x);
    let len = (nbits as usize).div_ceil(8);
    let mut bytes = vec![0u8; len];
    oracle.fill(&input, &mut bytes);
    let spare = (len * 8) as u32 - nbits;
    if spare > 0 {
        bytes[0] &= 0xff >> spare;
    }
    BitString { nbits, bytes }
}
