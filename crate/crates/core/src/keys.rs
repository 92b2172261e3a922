//! Pairwise keys: which user pairs share a key, the sampled key material,
//! and signed lookup with `S(i, j) = -S(j, i)`.
//!
//! Pairs that are not in the schedule behave as the zero key.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, SymbolVector};

/// Unordered user pair stored as `(lo, hi)` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct Pair {
    lo: usize,
    hi: usize,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::SelfPair(a));
        }
        Ok(Self { lo: a.min(b), hi: a.max(b) })
    }

    #[inline]
    pub fn lo(self) -> usize {
        self.lo
    }

    #[inline]
    pub fn hi(self) -> usize {
        self.hi
    }

    #[inline]
    pub fn contains(self, k: usize) -> bool {
        self.lo == k || self.hi == k
    }

    /// The member of the pair that is not `k`.
    pub fn other(self, k: usize) -> Option<usize> {
        if self.lo == k {
            Some(self.hi)
        } else if self.hi == k {
            Some(self.lo)
        } else {
            None
        }
    }
}

impl TryFrom<[usize; 2]> for Pair {
    type Error = Error;

    fn try_from([a, b]: [usize; 2]) -> Result<Self> {
        if a >= b {
            return Err(Error::InvalidSchedule(format!("pair ({a}, {b}) is not ordered lo < hi")));
        }
        Pair::new(a, b)
    }
}

impl From<Pair> for [usize; 2] {
    fn from(p: Pair) -> Self {
        [p.lo, p.hi]
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.lo, self.hi)
    }
}

/// The set of user pairs that hold an active key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySchedule {
    k: usize,
    pairs: BTreeSet<Pair>,
}

impl KeySchedule {
    pub fn new<I: IntoIterator<Item = Pair>>(k: usize, pairs: I) -> Result<Self> {
        let pairs: BTreeSet<Pair> = pairs.into_iter().collect();
        if let Some(p) = pairs.iter().find(|p| p.hi >= k) {
            return Err(Error::InvalidSchedule(format!("pair {p} outside 0..{k}")));
        }
        Ok(Self { k, pairs })
    }

    /// Every one of the `C(K, 2)` pairs.
    pub fn complete(k: usize) -> Self {
        let pairs = (0..k).flat_map(|i| (i + 1..k).map(move |j| Pair { lo: i, hi: j })).collect();
        Self { k, pairs }
    }

    pub fn empty(k: usize) -> Self {
        Self { k, pairs: BTreeSet::new() }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pairs(&self) -> impl ExactSizeIterator<Item = Pair> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        Pair::new(i, j).map(|p| self.pairs.contains(&p)).unwrap_or(false)
    }

    /// Active pairs that contain `k`, in ascending order.
    pub fn pairs_of(&self, k: usize) -> impl Iterator<Item = Pair> + '_ {
        self.pairs.iter().copied().filter(move |p| p.contains(k))
    }

    /// A copy without `pair`.
    pub fn without(&self, pair: Pair) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.remove(&pair);
        Self { k: self.k, pairs }
    }
}

/// Key schedule used by the ring masking scheme.
///
/// `K = 3` uses all three pairs; for `K >= 4` only the pairs at ring
/// distance two are active, which is `{(0,2), (1,3)}` when `K = 4` and the
/// `K` pairs `{k, k+2}` otherwise.
pub fn schedule_for_ring(k: usize) -> Result<KeySchedule> {
    if k < 3 {
        return Err(Error::RingTooSmall(k));
    }
    if k == 3 {
        return Ok(KeySchedule::complete(3));
    }
    let pairs = (0..k).map(|i| Pair::new(i, (i + 2) % k).expect("distance-2 endpoints differ"));
    KeySchedule::new(k, pairs)
}

/// Sampled key material for every active pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyStore {
    schedule: KeySchedule,
    spec: FieldSpec,
    len: usize,
    material: BTreeMap<Pair, SymbolVector>,
}

impl KeyStore {
    /// Builds a store from explicit material. Every active pair must have a
    /// key of length `len` over `spec`, and no other pair may.
    pub fn from_material(
        schedule: KeySchedule,
        spec: FieldSpec,
        len: usize,
        material: BTreeMap<Pair, SymbolVector>,
    ) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyVector);
        }
        if material.len() != schedule.len() || !schedule.pairs().all(|p| material.contains_key(&p)) {
            return Err(Error::InvalidSchedule("key material does not match the schedule".into()));
        }
        for v in material.values() {
            if v.spec() != spec {
                return Err(Error::FieldMismatch { left: spec.q(), right: v.spec().q() });
            }
            if v.len() != len {
                return Err(Error::LengthMismatch { expected: len, found: v.len() });
            }
        }
        Ok(Self { schedule, spec, len, material })
    }

    pub fn schedule(&self) -> &KeySchedule {
        &self.schedule
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    /// Symbols per key (`L`).
    pub fn symbol_len(&self) -> usize {
        self.len
    }

    pub fn k(&self) -> usize {
        self.schedule.k
    }

    pub fn material(&self) -> &BTreeMap<Pair, SymbolVector> {
        &self.material
    }

    fn zero(&self) -> SymbolVector {
        SymbolVector::zeros(self.spec, self.len).expect("len >= 1 checked at construction")
    }

    /// `S(i, j)`: the stored key if `i < j`, its negation if `i > j`, and
    /// the zero vector when the pair is inactive.
    pub fn lookup(&self, i: usize, j: usize) -> Result<SymbolVector> {
        let k = self.k();
        for v in [i, j] {
            if v >= k {
                return Err(Error::UserOutOfRange { user: v, k });
            }
        }
        let pair = Pair::new(i, j)?;
        Ok(match self.material.get(&pair) {
            Some(s) if i < j => s.clone(),
            Some(s) => s.neg(),
            None => self.zero(),
        })
    }

    /// The keys user `k` holds, each signed as `S(k, peer)`.
    pub fn user_view(&self, k: usize) -> Result<UserKeys> {
        if k >= self.k() {
            return Err(Error::UserOutOfRange { user: k, k: self.k() });
        }
        let mut keys = BTreeMap::new();
        for p in self.schedule.pairs_of(k) {
            let peer = p.other(k).expect("pair contains k");
            keys.insert(peer, self.lookup(k, peer)?);
        }
        Ok(UserKeys { owner: k, spec: self.spec, len: self.len, keys })
    }

    pub fn to_dump(&self) -> KeyStoreDump {
        let width = symbol_width(self.spec);
        KeyStoreDump {
            k: self.k(),
            q: self.spec.q(),
            len: self.len,
            keys: self
                .material
                .iter()
                .map(|(&pair, v)| KeyRecord { pair, key: encode_symbols(v.elems(), width) })
                .collect(),
        }
    }

    pub fn from_dump(dump: &KeyStoreDump) -> Result<Self> {
        let spec = FieldSpec::new(dump.q)?;
        let width = symbol_width(spec);
        let mut material = BTreeMap::new();
        for rec in &dump.keys {
            let elems = decode_symbols(&rec.key, width)?;
            if material.insert(rec.pair, SymbolVector::new(spec, elems)?).is_some() {
                return Err(Error::InvalidSchedule(format!("duplicate key for pair {}", rec.pair)));
            }
        }
        let schedule = KeySchedule::new(dump.k, material.keys().copied())?;
        Self::from_material(schedule, spec, dump.len, material)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_dump()).expect("key dump serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dump: KeyStoreDump = serde_json::from_str(s)?;
        Self::from_dump(&dump)
    }
}

/// Serialized key store: each key is a hex string of fixed-width big-endian
/// symbols (one byte per symbol while `q <= 256`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyStoreDump {
    pub k: usize,
    pub q: u32,
    pub len: usize,
    pub keys: Vec<KeyRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub pair: Pair,
    pub key: String,
}

fn symbol_width(spec: FieldSpec) -> usize {
    let max = spec.q() - 1;
    (32 - max.leading_zeros() as usize).div_ceil(8).max(1)
}

fn encode_symbols(elems: &[u32], width: usize) -> String {
    let bytes: Vec<u8> = elems.iter().flat_map(|&e| e.to_be_bytes()[4 - width..].to_vec()).collect();
    hex::encode(bytes)
}

fn decode_symbols(s: &str, width: usize) -> Result<Vec<u32>> {
    let bytes = hex::decode(s).map_err(|e| Error::Decode(format!("bad key hex: {e}")))?;
    if bytes.len() % width != 0 {
        return Err(Error::Decode(format!("key hex length {} is not a multiple of {width} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks(width)
        .map(|c| c.iter().fold(0u32, |acc, &b| (acc << 8) | b as u32))
        .collect())
}

/// The keys one user holds (`Z_k` restricted to active pairs).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserKeys {
    owner: usize,
    spec: FieldSpec,
    len: usize,
    keys: BTreeMap<usize, SymbolVector>,
}

impl UserKeys {
    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn symbol_len(&self) -> usize {
        self.len
    }

    /// `S(owner, peer)`, or zero if the pair is inactive.
    pub fn toward(&self, peer: usize) -> SymbolVector {
        self.keys
            .get(&peer)
            .cloned()
            .unwrap_or_else(|| SymbolVector::zeros(self.spec, self.len).expect("len >= 1"))
    }

    /// Peers this user shares an active key with.
    pub fn peers(&self) -> impl Iterator<Item = usize> + '_ {
        self.keys.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &SymbolVector)> {
        self.keys.iter().map(|(&p, v)| (p, v))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Where key material comes from. The default is a seeded trusted sampler;
/// an interactive key agreement would implement this trait instead.
pub trait KeySource {
    fn establish(&mut self, schedule: &KeySchedule, len: usize, spec: FieldSpec) -> Result<KeyStore>;
}

/// Draws every active key independently and uniformly from an owned RNG.
#[derive(Debug)]
pub struct SeededSampler<R> {
    rng: R,
}

impl<R: Rng> SeededSampler<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

impl<R: Rng> KeySource for SeededSampler<R> {
    fn establish(&mut self, schedule: &KeySchedule, len: usize, spec: FieldSpec) -> Result<KeyStore> {
        sample_keys(schedule, len, spec, &mut self.rng)
    }
}

/// One independent uniform key per active pair, drawn in ascending pair order.
pub fn sample_keys<R: Rng + ?Sized>(
    schedule: &KeySchedule,
    len: usize,
    spec: FieldSpec,
    rng: &mut R,
) -> Result<KeyStore> {
    let mut material = BTreeMap::new();
    for p in schedule.pairs() {
        material.insert(p, SymbolVector::sample_uniform(len, spec, rng)?);
    }
    KeyStore::from_material(schedule.clone(), spec, len, material)
}
