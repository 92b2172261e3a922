use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::keys::{KeySchedule, Pair};
use crate::topology::RingTopology;

/// One independent uniform source entry: an input or an active key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceId {
    Input(usize),
    Key(Pair),
}

impl std::fmt::Display for SourceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceId::Input(k) => write!(f, "W{k}"),
            SourceId::Key(p) => write!(f, "S{p}"),
        }
    }
}

/// Roster of independent uniform sources: `W_0..W_{K-1}` followed by one
/// entry per active key, in ascending pair order. Each entry is `L` symbols.
///
/// Inactive keys are constants (zero) and have no roster entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceModel {
    k: usize,
    spec: FieldSpec,
    len: usize,
    pairs: Vec<Pair>,
}

impl SourceModel {
    pub fn new(schedule: &KeySchedule, spec: FieldSpec, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyVector);
        }
        Ok(Self { k: schedule.k(), spec, len, pairs: schedule.pairs().collect() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    /// Symbols per entry (`L`).
    pub fn symbol_len(&self) -> usize {
        self.len
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn num_entries(&self) -> usize {
        self.k + self.pairs.len()
    }

    /// Total q-ary symbols in one joint realization.
    pub fn dim(&self) -> usize {
        self.num_entries() * self.len
    }

    pub fn entry(&self, idx: usize) -> SourceId {
        if idx < self.k {
            SourceId::Input(idx)
        } else {
            SourceId::Key(self.pairs[idx - self.k])
        }
    }

    pub fn input_index(&self, k: usize) -> usize {
        assert!(k < self.k, "user {k} out of range");
        k
    }

    pub fn key_index(&self, pair: Pair) -> Option<usize> {
        self.pairs.binary_search(&pair).ok().map(|i| self.k + i)
    }

    /// Roster entries user `k`'s encoder may read: `W_k` and its keys.
    pub fn user_support(&self, k: usize) -> Vec<usize> {
        let mut s = vec![k];
        s.extend(self.pairs.iter().enumerate().filter(|(_, p)| p.contains(k)).map(|(i, _)| self.k + i));
        s
    }

    pub fn zero_row(&self) -> Vec<u32> {
        vec![0; self.num_entries()]
    }

    pub fn unit_row(&self, idx: usize) -> Vec<u32> {
        let mut r = self.zero_row();
        r[idx] = 1;
        r
    }

    /// Coefficient row of `S(a, b)` with the antisymmetric sign convention;
    /// `None` when the pair is inactive.
    pub fn signed_key_row(&self, a: usize, b: usize) -> Option<Vec<u32>> {
        let pair = Pair::new(a, b).ok()?;
        let idx = self.key_index(pair)?;
        let mut r = self.zero_row();
        r[idx] = if a < b { 1 } else { self.spec.neg(1) };
        Some(r)
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.num_entries()).map(|i| self.entry(i).to_string()).collect()
    }
}

/// Message coefficients for every user. `rows[k][c]` is component `c` of
/// `X_k`, as a coefficient row over the roster; with `L > 1` each row acts
/// on every symbol position independently.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearScheme {
    source: SourceModel,
    rows: Vec<Vec<Vec<u32>>>,
}

impl LinearScheme {
    /// Rejects rows that touch sources outside `W_k` and `k`'s keys.
    pub fn new(source: SourceModel, rows: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        if rows.len() != source.k() {
            return Err(Error::InvalidScheme(format!("expected {} users, got {}", source.k(), rows.len())));
        }
        let q = source.spec().q();
        for (k, user_rows) in rows.iter().enumerate() {
            if user_rows.is_empty() {
                return Err(Error::InvalidScheme(format!("user {k} sends no components")));
            }
            let support = source.user_support(k);
            for row in user_rows {
                if row.len() != source.num_entries() {
                    return Err(Error::InvalidScheme(format!("user {k}: row has {} coefficients", row.len())));
                }
                for (idx, &c) in row.iter().enumerate() {
                    if c >= q {
                        return Err(Error::InvalidScheme(format!("user {k}: coefficient {c} outside F_{q}")));
                    }
                    if c != 0 && !support.contains(&idx) {
                        return Err(Error::InvalidScheme(format!(
                            "user {k}'s message depends on {}, which it does not hold",
                            source.entry(idx)
                        )));
                    }
                }
            }
        }
        Ok(Self { source, rows })
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn rows(&self, k: usize) -> &[Vec<u32>] {
        &self.rows[k]
    }

    pub fn all_rows(&self) -> &[Vec<Vec<u32>>] {
        &self.rows
    }

    /// Same coefficients over a different symbol length.
    pub fn with_len(&self, len: usize) -> Result<Self> {
        let mut source = self.source.clone();
        if len == 0 {
            return Err(Error::EmptyVector);
        }
        source.len = len;
        Ok(Self { source, rows: self.rows.clone() })
    }

    pub fn to_dump(&self) -> SchemeDump {
        SchemeDump {
            k: self.source.k,
            q: self.source.spec.q(),
            len: self.source.len,
            roster: self.source.labels(),
            messages: self.rows.clone(),
        }
    }
}

/// Serialized [`LinearScheme`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeDump {
    pub k: usize,
    pub q: u32,
    pub len: usize,
    pub roster: Vec<String>,
    pub messages: Vec<Vec<Vec<u32>>>,
}

/// Linear description of the ring masking scheme over the given schedule.
///
/// Coefficients match `protocol::encode_with_keys`: `1` on `W_k` and `±1`
/// on each key per the sign convention. Pairs missing from `schedule` are
/// zero keys and get no coefficient.
pub fn scheme_from_protocol(k: usize, schedule: &KeySchedule, spec: FieldSpec, len: usize) -> Result<LinearScheme> {
    let ring = RingTopology::new(k)?;
    if schedule.k() != k {
        return Err(Error::ScheduleMismatch { k });
    }
    let source = SourceModel::new(schedule, spec, len)?;
    let masked = |user: usize, peers: &[usize]| {
        let mut row = source.unit_row(source.input_index(user));
        for &p in peers {
            if let Some(key) = source.signed_key_row(user, p) {
                for (x, y) in row.iter_mut().zip(key) {
                    *x = spec.add(*x, y);
                }
            }
        }
        row
    };
    let rows = (0..k)
        .map(|u| match k {
            3 => vec![masked(u, &[ring.next(u), ring.prev(u)])],
            4 => vec![masked(u, &[ring.offset(u, 2)])],
            _ => vec![masked(u, &[ring.offset(u, -2)]), masked(u, &[ring.offset(u, 2)])],
        })
        .collect();
    LinearScheme::new(source, rows)
}

/// Encoder for one user of a black-box scheme. It receives only `W_k` and the
/// keys `k` holds (each as `(pair, symbols)` in ascending pair order), so
/// encoder locality holds by construction.
pub type BlackBoxEncoder = dyn Fn(usize, &[u32], &[(Pair, &[u32])]) -> Vec<u32> + Send + Sync;

/// An arbitrary deterministic scheme, usable only with the enumeration oracle.
pub struct BlackBoxScheme {
    source: SourceModel,
    encoder: Box<BlackBoxEncoder>,
}

impl BlackBoxScheme {
    pub fn new<F>(source: SourceModel, encoder: F) -> Self
    where
        F: Fn(usize, &[u32], &[(Pair, &[u32])]) -> Vec<u32> + Send + Sync + 'static,
    {
        Self { source, encoder: Box::new(encoder) }
    }
}

impl std::fmt::Debug for BlackBoxScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBoxScheme").field("source", &self.source).finish_non_exhaustive()
    }
}

/// Common interface the oracles evaluate.
pub trait Scheme: Sync {
    fn source(&self) -> &SourceModel;

    /// Coefficient rows of `X_k` if the scheme is linear.
    fn linear_rows(&self, k: usize) -> Option<&[Vec<u32>]>;

    /// Evaluates `X_k` on a joint realization laid out entry-major
    /// (`entry * L + position`). Every returned symbol is in `[0, q)`.
    fn message(&self, k: usize, realization: &[u32]) -> Vec<u32>;
}

impl Scheme for LinearScheme {
    fn source(&self) -> &SourceModel {
        &self.source
    }

    fn linear_rows(&self, k: usize) -> Option<&[Vec<u32>]> {
        Some(&self.rows[k])
    }

    fn message(&self, k: usize, realization: &[u32]) -> Vec<u32> {
        let len = self.source.len;
        let spec = self.source.spec;
        let mut out = Vec::with_capacity(self.rows[k].len() * len);
        for row in &self.rows[k] {
            for t in 0..len {
                let mut acc = 0u32;
                for (e, &c) in row.iter().enumerate() {
                    if c != 0 {
                        acc = spec.add(acc, spec.mul(c, realization[e * len + t]));
                    }
                }
                out.push(acc);
            }
        }
        out
    }
}

impl Scheme for BlackBoxScheme {
    fn source(&self) -> &SourceModel {
        &self.source
    }

    fn linear_rows(&self, _k: usize) -> Option<&[Vec<u32>]> {
        None
    }

    fn message(&self, k: usize, realization: &[u32]) -> Vec<u32> {
        let len = self.source.len;
        let w = &realization[k * len..(k + 1) * len];
        let keys: Vec<(Pair, &[u32])> = self
            .source
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.contains(k))
            .map(|(i, &p)| {
                let e = self.source.k + i;
                (p, &realization[e * len..(e + 1) * len])
            })
            .collect();
        (self.encoder)(k, w, &keys)
    }
}
