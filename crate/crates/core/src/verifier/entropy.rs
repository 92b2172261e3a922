//! Exact entropy oracles.
//!
//! Entropies are measured in q-ary symbols. The rank oracle uses the fact
//! that a linear image of independent uniform symbols is uniform on its
//! range, so `H = rank * L`. The enumeration oracle walks every joint
//! realization of the sources the queried variables depend on and builds
//! exact count tables.

use std::collections::HashMap;

use rayon::prelude::*;

use super::source::Scheme;
use crate::error::{Error, Result};
use crate::linalg::rank;
use crate::Rational;

/// Default cap on enumerated joint realizations.
pub const DEFAULT_ENUM_BUDGET: u128 = 1 << 24;

/// A random variable defined over the source roster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    /// Linear form over the roster (coefficient per entry, applied per symbol position).
    Form(Vec<u32>),
    /// The whole broadcast `X_k`.
    Message(usize),
    /// Component `c` of `X_k`; linear schemes only.
    Component(usize, usize),
}

/// Entropy in q-ary symbols.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EntropyValue {
    Exact(Rational),
    /// The distribution is not uniform on `q^r` points, so the entropy is not
    /// a rational number of symbols. `symbols` is a floating approximation
    /// and `support` the number of outcomes with nonzero probability.
    Irrational { support: usize, symbols: f64 },
}

impl EntropyValue {
    pub fn zero() -> Self {
        EntropyValue::Exact(Rational::from_integer(0))
    }

    pub fn exact(&self) -> Option<Rational> {
        match self {
            EntropyValue::Exact(r) => Some(*r),
            EntropyValue::Irrational { .. } => None,
        }
    }

    pub fn approx(&self) -> f64 {
        match self {
            EntropyValue::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            EntropyValue::Irrational { symbols, .. } => *symbols,
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        self.exact().is_some_and(|r| r == Rational::from_integer(0))
    }

    fn combine(self, other: Self, sign: i64) -> Self {
        match (self, other) {
            (EntropyValue::Exact(a), EntropyValue::Exact(b)) => EntropyValue::Exact(a + b * sign),
            (a, b) => EntropyValue::Irrational { support: 0, symbols: a.approx() + sign as f64 * b.approx() },
        }
    }

    pub fn plus(self, other: Self) -> Self {
        self.combine(other, 1)
    }

    pub fn minus(self, other: Self) -> Self {
        self.combine(other, -1)
    }

    /// Value in bits, for reporting.
    pub fn bits(&self, q: u32) -> f64 {
        self.approx() * (q as f64).log2()
    }
}

impl std::fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntropyValue::Exact(r) => write!(f, "{r}"),
            EntropyValue::Irrational { symbols, .. } => write!(f, "~{symbols:.6}"),
        }
    }
}

/// Entropy queries against one scheme.
pub trait EntropyOracle {
    fn entropy(&self, vars: &[Var]) -> Result<EntropyValue>;

    /// `H(A | B) = H(A, B) - H(B)`.
    fn cond_entropy(&self, a: &[Var], b: &[Var]) -> Result<EntropyValue> {
        let ab = concat(a, b);
        Ok(self.entropy(&ab)?.minus(self.entropy(b)?))
    }

    /// `I(A; B | C) = H(A, C) + H(B, C) - H(A, B, C) - H(C)`.
    fn mutual_info(&self, a: &[Var], b: &[Var], c: &[Var]) -> Result<EntropyValue> {
        let ac = concat(a, c);
        let bc = concat(b, c);
        let abc = concat(&ac, b);
        Ok(self.entropy(&ac)?.plus(self.entropy(&bc)?).minus(self.entropy(&abc)?).minus(self.entropy(c)?))
    }
}

pub(crate) fn concat(a: &[Var], b: &[Var]) -> Vec<Var> {
    a.iter().chain(b).cloned().collect()
}

/// Rank-based oracle; every variable must be linear in the roster.
pub struct RankOracle<'a, S: Scheme + ?Sized> {
    scheme: &'a S,
}

impl<'a, S: Scheme + ?Sized> RankOracle<'a, S> {
    pub fn new(scheme: &'a S) -> Self {
        Self { scheme }
    }

    /// Stacked coefficient rows of `vars`.
    pub fn rows(&self, vars: &[Var]) -> Result<Vec<Vec<u32>>> {
        let n = self.scheme.source().num_entries();
        let mut rows = Vec::new();
        for v in vars {
            match v {
                Var::Form(r) => {
                    if r.len() != n {
                        return Err(Error::InvalidArgument(format!("form has {} coefficients, roster has {n}", r.len())));
                    }
                    rows.push(r.clone());
                }
                Var::Message(k) => {
                    let rs = self.scheme.linear_rows(*k).ok_or_else(|| Error::NotLinear(format!("X_{k}")))?;
                    rows.extend(rs.iter().cloned());
                }
                Var::Component(k, c) => {
                    let rs = self.scheme.linear_rows(*k).ok_or_else(|| Error::NotLinear(format!("X_{k}")))?;
                    let r = rs.get(*c).ok_or_else(|| Error::InvalidArgument(format!("X_{k} has no component {c}")))?;
                    rows.push(r.clone());
                }
            }
        }
        Ok(rows)
    }

    pub fn rank(&self, vars: &[Var]) -> Result<usize> {
        let src = self.scheme.source();
        Ok(rank(src.spec(), src.num_entries(), &self.rows(vars)?))
    }
}

impl<S: Scheme + ?Sized> EntropyOracle for RankOracle<'_, S> {
    fn entropy(&self, vars: &[Var]) -> Result<EntropyValue> {
        let r = self.rank(vars)?;
        Ok(EntropyValue::Exact(Rational::from_integer((r * self.scheme.source().symbol_len()) as i64)))
    }
}

pub fn entropy_rank<S: Scheme + ?Sized>(scheme: &S, vars: &[Var]) -> Result<EntropyValue> {
    RankOracle::new(scheme).entropy(vars)
}

const MAX_GROUPS: usize = 4;

/// Exact outcome counts for one group of variables. Outcomes are encoded as
/// base-q integers; `total` is the number of enumerated realizations.
#[derive(Clone, Debug, Default)]
pub struct CountTable {
    pub counts: HashMap<Vec<u128>, u64>,
    pub total: u64,
}

/// Counts over the joint outcome of several variable groups.
#[derive(Clone, Debug)]
pub struct JointTable {
    groups: usize,
    counts: HashMap<[u128; MAX_GROUPS], u64>,
    total: u64,
}

impl JointTable {
    /// Marginal table over the listed group indices.
    pub fn project(&self, keep: &[usize]) -> CountTable {
        debug_assert!(keep.iter().all(|&g| g < self.groups));
        let mut counts = HashMap::new();
        for (key, &c) in &self.counts {
            let k: Vec<u128> = keep.iter().map(|&g| key[g]).collect();
            *counts.entry(k).or_insert(0) += c;
        }
        CountTable { counts, total: self.total }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Exact test of `A ⟂ B | C` for groups `(a, b, c)`:
    /// `n(a,b,c) * n(c) == n(a,c) * n(b,c)` on every point of the product
    /// support.
    pub fn conditionally_independent(&self, a: usize, b: usize, c: usize) -> bool {
        let abc = self.project(&[a, b, c]).counts;
        let ac = self.project(&[a, c]).counts;
        let bc = self.project(&[b, c]).counts;
        let cc = self.project(&[c]).counts;
        for (key, &n) in &abc {
            let n_c = cc[&vec![key[2]]] as u128;
            let n_ac = ac[&vec![key[0], key[2]]] as u128;
            let n_bc = bc[&vec![key[1], key[2]]] as u128;
            if n as u128 * n_c != n_ac * n_bc {
                return false;
            }
        }
        // every (a, b) combination that is possible given c must occur
        let mut per_c: HashMap<u128, (usize, usize, usize)> = HashMap::new();
        for key in abc.keys() {
            per_c.entry(key[2]).or_default().0 += 1;
        }
        for key in ac.keys() {
            per_c.entry(key[1]).or_default().1 += 1;
        }
        for key in bc.keys() {
            per_c.entry(key[1]).or_default().2 += 1;
        }
        per_c.values().all(|&(ab, a, b)| ab == a * b)
    }

    /// True iff group `target` is a function of group `given`.
    pub fn determines(&self, given: usize, target: usize) -> bool {
        self.project(&[given, target]).counts.len() == self.project(&[given]).counts.len()
    }
}

impl CountTable {
    /// Entropy in q-ary symbols, exact when the distribution is uniform on a
    /// power-of-q support.
    pub fn entropy(&self, q: u32) -> EntropyValue {
        let support = self.counts.len();
        let first = self.counts.values().next().copied().unwrap_or(self.total);
        if self.counts.values().all(|&c| c == first) {
            if let Some(r) = exact_log(self.total / first, q) {
                return EntropyValue::Exact(Rational::from_integer(r as i64));
            }
        }
        let n = self.total as f64;
        let bits: f64 = self.counts.values().map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        }).sum();
        EntropyValue::Irrational { support, symbols: bits / (q as f64).log2() }
    }
}

fn exact_log(mut n: u64, q: u32) -> Option<u32> {
    let mut r = 0;
    while n > 1 {
        if !n.is_multiple_of(q as u64) {
            return None;
        }
        n /= q as u64;
        r += 1;
    }
    Some(r)
}

/// Enumeration oracle over the joint source space.
///
/// Only the roster entries that some queried variable depends on are
/// enumerated; the rest are independent of the query and leave every
/// probability unchanged. `budget` caps the number of realizations walked.
pub struct EnumOracle<'a, S: Scheme + ?Sized> {
    scheme: &'a S,
    budget: u128,
}

impl<'a, S: Scheme + ?Sized> EnumOracle<'a, S> {
    pub fn new(scheme: &'a S, budget: u128) -> Self {
        Self { scheme, budget }
    }

    fn support_of(&self, vars: &[Var]) -> Vec<usize> {
        let src = self.scheme.source();
        let mut s = std::collections::BTreeSet::new();
        for v in vars {
            match v {
                Var::Form(r) => s.extend(r.iter().enumerate().filter(|(_, &c)| c != 0).map(|(i, _)| i)),
                Var::Message(k) | Var::Component(k, _) => s.extend(src.user_support(*k)),
            }
        }
        s.into_iter().collect()
    }

    /// Number of realizations a query over `vars` would enumerate.
    pub fn cost(&self, vars: &[Var]) -> u128 {
        let src = self.scheme.source();
        let digits = (self.support_of(vars).len() * src.symbol_len()) as u32;
        (src.spec().q() as u128).checked_pow(digits).unwrap_or(u128::MAX)
    }

    /// Joint outcome counts for up to four variable groups from a single
    /// pass. Each key holds the base-q code of every group in order; unused
    /// slots are zero.
    pub fn joint(&self, groups: &[Vec<Var>]) -> Result<JointTable> {
        if groups.len() > MAX_GROUPS {
            return Err(Error::InvalidArgument(format!("at most {MAX_GROUPS} variable groups per pass")));
        }
        let src = self.scheme.source();
        let q = src.spec().q();
        let len = src.symbol_len();
        let all: Vec<Var> = groups.iter().flatten().cloned().collect();
        for v in &all {
            match v {
                Var::Form(r) if r.len() != src.num_entries() => {
                    return Err(Error::InvalidArgument(format!("form has {} coefficients", r.len())));
                }
                Var::Message(k) | Var::Component(k, _) if *k >= src.k() => {
                    return Err(Error::UserOutOfRange { user: *k, k: src.k() });
                }
                _ => {}
            }
        }
        let support = self.support_of(&all);
        let digits = support.len() * len;
        let n = self.cost(&all);
        if n > self.budget {
            return Err(Error::BudgetExceeded { needed: n, budget: self.budget });
        }
        let n = n as u64;
        let mut users: Vec<usize> = all
            .iter()
            .filter_map(|v| match v {
                Var::Message(k) | Var::Component(k, _) => Some(*k),
                Var::Form(_) => None,
            })
            .collect();
        users.sort_unstable();
        users.dedup();
        for g in groups {
            if (self.output_symbols(g) as f64) * (q as f64).log2() > 127.0 {
                return Err(Error::InvalidArgument("variable group too wide to encode".into()));
            }
        }

        const CHUNK: u64 = 1 << 12;
        let counts = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .fold(HashMap::new, |mut acc: HashMap<[u128; MAX_GROUPS], u64>, chunk| {
                let mut x = vec![0u32; src.dim()];
                let mut msgs: Vec<Option<Vec<u32>>> = vec![None; src.k()];
                let start = chunk * CHUNK;
                for idx in start..(start + CHUNK).min(n) {
                    let mut rem = idx;
                    for d in 0..digits {
                        let e = support[d / len];
                        x[e * len + d % len] = (rem % q as u64) as u32;
                        rem /= q as u64;
                    }
                    for &u in &users {
                        msgs[u] = Some(self.scheme.message(u, &x));
                    }
                    let mut key = [0u128; MAX_GROUPS];
                    for (slot, g) in key.iter_mut().zip(groups) {
                        *slot = self.encode_group(g, &x, &msgs);
                    }
                    *acc.entry(key).or_insert(0) += 1;
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, c) in b {
                    *a.entry(k).or_insert(0) += c;
                }
                a
            });
        Ok(JointTable { groups: groups.len(), counts, total: n })
    }

    fn output_symbols(&self, group: &[Var]) -> usize {
        let src = self.scheme.source();
        let len = src.symbol_len();
        let zero = vec![0u32; src.dim()];
        group
            .iter()
            .map(|v| match v {
                Var::Form(_) | Var::Component(..) => len,
                Var::Message(k) => self.scheme.message(*k, &zero).len(),
            })
            .sum()
    }

    fn encode_group(&self, group: &[Var], x: &[u32], msgs: &[Option<Vec<u32>>]) -> u128 {
        let src = self.scheme.source();
        let spec = src.spec();
        let q = spec.q() as u128;
        let len = src.symbol_len();
        let mut code = 0u128;
        let mut push = |s: u32| {
            code = code * q + s as u128;
        };
        for v in group {
            match v {
                Var::Form(r) => {
                    for t in 0..len {
                        let mut acc = 0u32;
                        for (e, &c) in r.iter().enumerate() {
                            if c != 0 {
                                acc = spec.add(acc, spec.mul(c, x[e * len + t]));
                            }
                        }
                        push(acc);
                    }
                }
                Var::Message(k) => {
                    for &s in msgs[*k].as_ref().expect("message evaluated") {
                        push(s);
                    }
                }
                Var::Component(k, c) => {
                    let m = msgs[*k].as_ref().expect("message evaluated");
                    for &s in &m[c * len..(c + 1) * len] {
                        push(s);
                    }
                }
            }
        }
        code
    }
}

impl<S: Scheme + ?Sized> EntropyOracle for EnumOracle<'_, S> {
    fn entropy(&self, vars: &[Var]) -> Result<EntropyValue> {
        let q = self.scheme.source().spec().q();
        Ok(self.joint(&[vars.to_vec()])?.project(&[0]).entropy(q))
    }

    fn cond_entropy(&self, a: &[Var], b: &[Var]) -> Result<EntropyValue> {
        let q = self.scheme.source().spec().q();
        let t = self.joint(&[a.to_vec(), b.to_vec()])?;
        Ok(t.project(&[0, 1]).entropy(q).minus(t.project(&[1]).entropy(q)))
    }

    fn mutual_info(&self, a: &[Var], b: &[Var], c: &[Var]) -> Result<EntropyValue> {
        let q = self.scheme.source().spec().q();
        let t = self.joint(&[a.to_vec(), b.to_vec(), c.to_vec()])?;
        let h = |g: &[usize]| t.project(g).entropy(q);
        Ok(h(&[0, 2]).plus(h(&[1, 2])).minus(h(&[0, 1, 2])).minus(h(&[2])))
    }
}

pub fn entropy_enum<S: Scheme + ?Sized>(scheme: &S, vars: &[Var], budget: u128) -> Result<EntropyValue> {
    EnumOracle::new(scheme, budget).entropy(vars)
}
