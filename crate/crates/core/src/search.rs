//! Feasibility search over linear ring schemes.
//!
//! A candidate gives every user `m` coefficient rows over its local sources:
//! `W_k` and the keys it shares with every other user (the full pairwise
//! universe, not just a fixed schedule). Local coordinates are relative:
//! coordinate 0 is `W_k` and coordinate `d >= 1` is the key shared with user
//! `k + d`, so rotating the ring is a cyclic shift of the per-user rows.
//!
//! Feasibility only looks at the two neighbours' messages, so the constraint
//! at user `k` couples users `k - 1` and `k + 1` and nothing else. Small
//! spaces are enumerated candidate by candidate; larger ones are solved as a
//! constraint problem over the row spans of each user's message.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::keys::{KeySchedule, Pair};
use crate::linalg::{pack_gf2, rank, rank_gf2, rref};
use crate::topology::RingTopology;
use crate::verifier::{
    check_recovery, check_security, LinearScheme, OracleKind, SchemeDump, SourceId, SourceModel,
    DEFAULT_ENUM_BUDGET,
};

pub const DEFAULT_SEARCH_BUDGET: u128 = 1 << 28;

/// Linear candidate scheme with per-user rows in relative local coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateScheme {
    k: usize,
    m: usize,
    spec: FieldSpec,
    rows: Vec<Vec<Vec<u32>>>,
}

impl CandidateScheme {
    pub fn new(k: usize, m: usize, spec: FieldSpec, rows: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        validate_shape(k, m)?;
        if rows.len() != k {
            return Err(Error::LengthMismatch { expected: k, found: rows.len() });
        }
        for user in &rows {
            if user.len() != m {
                return Err(Error::LengthMismatch { expected: m, found: user.len() });
            }
            for row in user {
                if row.len() != k {
                    return Err(Error::LengthMismatch { expected: k, found: row.len() });
                }
                if let Some(&symbol) = row.iter().find(|&&c| c >= spec.q()) {
                    return Err(Error::SymbolOutOfRange { symbol, q: spec.q() });
                }
            }
        }
        Ok(Self { k, m, spec, rows })
    }

    /// Re-expresses a linear scheme (any key schedule, any `L`) in local
    /// coordinates. Every user must send the same number of components.
    pub fn from_linear(scheme: &LinearScheme) -> Result<Self> {
        let src = scheme.source();
        let k = src.k();
        let m = scheme.rows(0).len();
        let mut rows = Vec::with_capacity(k);
        for u in 0..k {
            if scheme.rows(u).len() != m {
                return Err(Error::InvalidScheme(format!("user {u} sends {} components, user 0 sends {m}", scheme.rows(u).len())));
            }
            let mut user = Vec::with_capacity(m);
            for row in scheme.rows(u) {
                let mut local = vec![0; k];
                for (e, &c) in row.iter().enumerate().filter(|(_, &c)| c != 0) {
                    let d = match src.entry(e) {
                        SourceId::Input(i) if i == u => 0,
                        SourceId::Key(p) if p.contains(u) => (p.other(u).expect("pair holds u") + k - u) % k,
                        other => return Err(Error::InvalidScheme(format!("user {u} uses non-local source {other}"))),
                    };
                    local[d] = c;
                }
                user.push(local);
            }
            rows.push(user);
        }
        Self::new(k, m, src.spec(), rows)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn rows(&self, user: usize) -> &[Vec<u32>] {
        &self.rows[user]
    }

    /// Flat coefficient list, user 0 first. Candidates are ordered by this.
    pub fn encoding(&self) -> Vec<u32> {
        self.rows.iter().flatten().flatten().copied().collect()
    }

    /// Relabels user `u` as `u + r`.
    pub fn rotate(&self, r: usize) -> Self {
        let k = self.k;
        let mut rows = vec![Vec::new(); k];
        for (u, user) in self.rows.iter().enumerate() {
            rows[(u + r) % k] = user.clone();
        }
        Self { rows, ..self.clone() }
    }

    /// Smallest encoding among all rotations.
    pub fn canonical_rotation(&self) -> Self {
        (0..self.k).map(|r| self.rotate(r)).min_by_key(|c| c.encoding()).expect("k >= 3")
    }

    /// The candidate over the complete key universe with `L = 1`.
    pub fn to_linear(&self) -> Result<LinearScheme> {
        let source = SourceModel::new(&KeySchedule::complete(self.k), self.spec, 1)?;
        let cols = column_map(&source);
        let rows = (0..self.k)
            .map(|u| self.rows[u].iter().map(|local| globalize(&source, &cols[u], local)).collect())
            .collect();
        LinearScheme::new(source, rows)
    }
}

fn validate_shape(k: usize, m: usize) -> Result<()> {
    RingTopology::new(k)?;
    if m == 0 {
        return Err(Error::InvalidArgument("each user must send at least one symbol (m >= 1)".into()));
    }
    Ok(())
}

// cols[u][d] is the roster column of local coordinate d of user u
fn column_map(source: &SourceModel) -> Vec<Vec<usize>> {
    let k = source.k();
    (0..k)
        .map(|u| {
            let mut v = vec![source.input_index(u)];
            for d in 1..k {
                let pair = Pair::new(u, (u + d) % k).expect("distinct users");
                v.push(source.key_index(pair).expect("complete universe"));
            }
            v
        })
        .collect()
}

fn globalize(source: &SourceModel, cols: &[usize], local: &[u32]) -> Vec<u32> {
    let mut row = source.zero_row();
    for (&c, &x) in cols.iter().zip(local) {
        row[c] = x;
    }
    row
}

/// One user's message prepared for the constraint check of a neighbour.
#[derive(Clone, Debug)]
enum Prepared {
    Packed(Vec<u64>),
    Dense(Vec<Vec<u32>>),
}

/// Span conditions for recovery and security at every user of a ring, over
/// the complete key universe with `L = 1`.
///
/// With `own` the unit rows of what user `k` holds, `R` the two received
/// messages, `t` the target sum and `e_a, e_b` the neighbour inputs:
/// recovery is `rank(R, own, t) = rank(R, own)` and security is
/// `rank(R, own, e_a, e_b) = rank(R, own, t) + 1`. Unit rows are folded in
/// by zeroing their columns.
struct Checker {
    k: usize,
    spec: FieldSpec,
    source: SourceModel,
    cols: Vec<Vec<usize>>,
    packed: bool,
}

impl Checker {
    fn new(k: usize, spec: FieldSpec) -> Result<Self> {
        let source = SourceModel::new(&KeySchedule::complete(k), spec, 1)?;
        let cols = column_map(&source);
        let packed = spec.q() == 2 && source.num_entries() <= 64;
        Ok(Self { k, spec, source, cols, packed })
    }

    fn prepare(&self, user: usize, local_rows: &[Vec<u32>]) -> Prepared {
        let rows: Vec<Vec<u32>> = local_rows.iter().map(|r| globalize(&self.source, &self.cols[user], r)).collect();
        if self.packed {
            Prepared::Packed(rows.iter().map(|r| pack_gf2(r)).collect())
        } else {
            Prepared::Dense(rows)
        }
    }

    fn user_ok(&self, user: usize, prev: &Prepared, next: &Prepared) -> bool {
        let k = self.k;
        let (a, b) = ((user + k - 1) % k, (user + 1) % k);
        let own = &self.cols[user];
        match (prev, next) {
            (Prepared::Packed(p), Prepared::Packed(n)) => {
                let mask = !own.iter().fold(0u64, |acc, &c| acc | (1 << c));
                let mut rows: Vec<u64> = p.iter().chain(n).map(|r| r & mask).collect();
                let base = rank_gf2(&rows);
                rows.push((1 << a) | (1 << b));
                if rank_gf2(&rows) != base {
                    return false;
                }
                rows.pop();
                rows.push(1 << a);
                rows.push(1 << b);
                rank_gf2(&rows) == base + 1
            }
            (Prepared::Dense(p), Prepared::Dense(n)) => {
                let cols = self.source.num_entries();
                let mut rows: Vec<Vec<u32>> = p
                    .iter()
                    .chain(n)
                    .map(|r| {
                        let mut r = r.clone();
                        for &c in own {
                            r[c] = 0;
                        }
                        r
                    })
                    .collect();
                let base = rank(self.spec, cols, &rows);
                let mut t = self.source.zero_row();
                t[a] = 1;
                t[b] = 1;
                rows.push(t);
                if rank(self.spec, cols, &rows) != base {
                    return false;
                }
                rows.pop();
                rows.push(self.source.unit_row(a));
                rows.push(self.source.unit_row(b));
                rank(self.spec, cols, &rows) == base + 1
            }
            _ => unreachable!("one checker prepares every message the same way"),
        }
    }

    fn all_ok(&self, prepared: &[&Prepared]) -> bool {
        let k = self.k;
        (0..k).all(|u| self.user_ok(u, prepared[(u + k - 1) % k], prepared[(u + 1) % k]))
    }
}

/// Recovery and security at every user (span conditions, `L = 1`).
pub fn feasible(candidate: &CandidateScheme) -> bool {
    let checker = Checker::new(candidate.k, candidate.spec).expect("validated candidate");
    let prepared: Vec<Prepared> = (0..candidate.k).map(|u| checker.prepare(u, &candidate.rows[u])).collect();
    checker.all_ok(&prepared.iter().collect::<Vec<_>>())
}

/// Same decision through the general verifier's rank oracle.
pub fn feasible_reference(candidate: &CandidateScheme) -> Result<bool> {
    let scheme = candidate.to_linear()?;
    let ring = RingTopology::new(candidate.k)?;
    Ok(check_recovery(&scheme, &ring, OracleKind::Rank, DEFAULT_ENUM_BUDGET)?.passed()
        && check_security(&scheme, &ring, OracleKind::Rank, DEFAULT_ENUM_BUDGET)?.passed())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Exhaustive when the candidate count fits the budget, factored otherwise.
    #[default]
    Auto,
    Exhaustive,
    Factored,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Strategy::Auto),
            "exhaustive" => Ok(Strategy::Exhaustive),
            "factored" => Ok(Strategy::Factored),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchOptions {
    /// Drop users whose rows all have a zero `W_k` coefficient.
    pub prune: bool,
    /// Keep one representative per rotation class (exhaustive only).
    pub dedup_rotation: bool,
    pub budget: u128,
    pub max_witnesses: usize,
    pub strategy: Strategy,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { prune: true, dedup_rotation: false, budget: DEFAULT_SEARCH_BUDGET, max_witnesses: 8, strategy: Strategy::Auto }
    }
}

fn checked_pow(base: u128, exp: usize) -> Option<u128> {
    base.checked_pow(u32::try_from(exp).ok()?)
}

fn per_user_count(k: usize, m: usize, spec: FieldSpec, prune: bool) -> Option<u128> {
    let q = spec.q() as u128;
    let all = checked_pow(q, k * m)?;
    let dropped = if prune { checked_pow(q, (k - 1) * m)? } else { 0 };
    Some(all - dropped)
}

/// Number of candidates `enumerate_candidates` walks before rotation
/// deduplication, or `None` on overflow.
pub fn candidate_count(k: usize, m: usize, spec: FieldSpec, prune: bool) -> Option<u128> {
    checked_pow(per_user_count(k, m, spec, prune)?, k)
}

// Every m-tuple of local rows in lexicographic order of the flat coefficients.
fn local_options(k: usize, m: usize, spec: FieldSpec, prune: bool, budget: u128) -> Result<Vec<Vec<Vec<u32>>>> {
    let q = spec.q() as u128;
    let width = k * m;
    let all = checked_pow(q, width).unwrap_or(u128::MAX);
    if all > budget {
        return Err(Error::BudgetExceeded { needed: all, budget });
    }
    let mut out = Vec::new();
    let mut digits = vec![0u32; width];
    for _ in 0..all {
        let tuple: Vec<Vec<u32>> = digits.chunks(k).map(<[u32]>::to_vec).collect();
        if !prune || tuple.iter().any(|r| r[0] != 0) {
            out.push(tuple);
        }
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < spec.q() {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// Streams every candidate in ascending encoding order.
pub struct Candidates {
    k: usize,
    m: usize,
    spec: FieldSpec,
    options: Vec<Vec<Vec<u32>>>,
    next: u128,
    total: u128,
    dedup: bool,
}

impl Candidates {
    pub fn total(&self) -> u128 {
        self.total
    }

    fn ids(&self, mut idx: u128) -> Vec<usize> {
        let per = self.options.len() as u128;
        let mut ids = vec![0; self.k];
        for slot in ids.iter_mut().rev() {
            *slot = (idx % per) as usize;
            idx /= per;
        }
        ids
    }
}

// option ids are in coefficient order, so comparing id tuples compares
// encodings
fn rotation_canonical(ids: &[usize]) -> bool {
    let k = ids.len();
    (1..k).all(|r| {
        let rotated = (0..k).map(|v| ids[(v + k - r) % k]);
        rotated.cmp(ids.iter().copied()) != std::cmp::Ordering::Less
    })
}

impl Iterator for Candidates {
    type Item = CandidateScheme;

    fn next(&mut self) -> Option<CandidateScheme> {
        while self.next < self.total {
            let ids = self.ids(self.next);
            self.next += 1;
            if self.dedup && !rotation_canonical(&ids) {
                continue;
            }
            let rows = ids.iter().map(|&i| self.options[i].clone()).collect();
            return Some(CandidateScheme { k: self.k, m: self.m, spec: self.spec, rows });
        }
        None
    }
}

/// All candidates for `(k, m, q)` subject to the pruning options. Fails if
/// the count exceeds the budget.
pub fn enumerate_candidates(k: usize, m: usize, spec: FieldSpec, opts: &SearchOptions) -> Result<Candidates> {
    validate_shape(k, m)?;
    let total = candidate_count(k, m, spec, opts.prune).unwrap_or(u128::MAX);
    if total > opts.budget {
        return Err(Error::BudgetExceeded { needed: total, budget: opts.budget });
    }
    let options = local_options(k, m, spec, opts.prune, opts.budget)?;
    Ok(Candidates { k, m, spec, options, next: 0, total, dedup: opts.dedup_rotation })
}

/// What a search run found.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub k: usize,
    pub m: usize,
    pub spec: FieldSpec,
    pub strategy: Strategy,
    pub prune: bool,
    pub dedup_rotation: bool,
    /// Size of the candidate space after pruning.
    pub candidates_total: u128,
    /// Feasibility evaluations performed.
    pub examined: u128,
    /// Feasible candidates (rotation classes when deduplicating).
    pub feasible_count: u128,
    /// The first feasible candidates in ascending order.
    pub witnesses: Vec<CandidateScheme>,
    solutions: Solutions,
}

#[derive(Clone, Debug)]
enum Solutions {
    /// Every feasible encoding, sorted.
    Listed(Vec<Vec<u32>>),
    Factored(Box<Csp>),
}

impl SearchOutcome {
    /// Whether `candidate` is in the feasible set this run counted.
    pub fn contains(&self, candidate: &CandidateScheme) -> bool {
        if candidate.k != self.k || candidate.m != self.m || candidate.spec != self.spec {
            return false;
        }
        match &self.solutions {
            Solutions::Listed(list) => {
                let c = if self.dedup_rotation { candidate.canonical_rotation() } else { candidate.clone() };
                list.binary_search(&c.encoding()).is_ok()
            }
            Solutions::Factored(csp) => csp.contains(candidate),
        }
    }

    pub fn report(&self) -> SearchReport {
        SearchReport {
            k: self.k,
            m: self.m,
            q: self.spec.q(),
            strategy: self.strategy,
            prune: self.prune,
            dedup_rotation: self.dedup_rotation,
            scheme_class: "linear",
            candidates_total: self.candidates_total.to_string(),
            examined: self.examined.to_string(),
            feasible_count: self.feasible_count.to_string(),
            witnesses: self
                .witnesses
                .iter()
                .map(|w| w.to_linear().expect("witness is a valid scheme").to_dump())
                .collect(),
        }
    }
}

/// Serializable summary. Counts are decimal strings because they can exceed
/// 64 bits.
#[derive(Clone, Debug, Serialize)]
pub struct SearchReport {
    pub k: usize,
    pub m: usize,
    pub q: u32,
    pub strategy: Strategy,
    pub prune: bool,
    pub dedup_rotation: bool,
    /// Emptiness only rules out linear schemes, not schemes in general.
    pub scheme_class: &'static str,
    pub candidates_total: String,
    pub examined: String,
    pub feasible_count: String,
    pub witnesses: Vec<SchemeDump>,
}

/// Searches all linear `m`-symbol schemes on a `k`-user ring over `spec`.
pub fn search(k: usize, m: usize, spec: FieldSpec, opts: &SearchOptions) -> Result<SearchOutcome> {
    validate_shape(k, m)?;
    let total = candidate_count(k, m, spec, opts.prune).unwrap_or(u128::MAX);
    match opts.strategy {
        Strategy::Exhaustive => exhaustive(k, m, spec, opts),
        Strategy::Factored => factored(k, m, spec, opts, total),
        Strategy::Auto if total <= opts.budget => exhaustive(k, m, spec, opts),
        Strategy::Auto => factored(k, m, spec, opts, total),
    }
}

fn exhaustive(k: usize, m: usize, spec: FieldSpec, opts: &SearchOptions) -> Result<SearchOutcome> {
    let cands = enumerate_candidates(k, m, spec, opts)?;
    let checker = Checker::new(k, spec)?;
    let prepared: Vec<Vec<Prepared>> =
        (0..k).map(|u| cands.options.iter().map(|o| checker.prepare(u, o)).collect()).collect();
    let total = usize::try_from(cands.total).map_err(|_| Error::BudgetExceeded { needed: cands.total, budget: opts.budget })?;
    let dedup = opts.dedup_rotation;

    let (examined, mut found) = (0..total)
        .into_par_iter()
        .with_min_len(4096)
        .fold(
            || (0u128, Vec::new()),
            |(mut examined, mut found), idx| {
                let ids = cands.ids(idx as u128);
                if dedup && !rotation_canonical(&ids) {
                    return (examined, found);
                }
                examined += 1;
                let msgs: Vec<&Prepared> = ids.iter().enumerate().map(|(u, &i)| &prepared[u][i]).collect();
                if checker.all_ok(&msgs) {
                    found.push(ids);
                }
                (examined, found)
            },
        )
        .reduce(
            || (0, Vec::new()),
            |(ea, mut fa), (eb, fb)| {
                fa.extend(fb);
                (ea + eb, fa)
            },
        );
    found.sort_unstable();
    let to_candidate = |ids: &Vec<usize>| CandidateScheme {
        k,
        m,
        spec,
        rows: ids.iter().map(|&i| cands.options[i].clone()).collect(),
    };
    let witnesses = found.iter().take(opts.max_witnesses).map(to_candidate).collect();
    let listed = found.iter().map(|ids| to_candidate(ids).encoding()).collect();
    Ok(SearchOutcome {
        k,
        m,
        spec,
        strategy: Strategy::Exhaustive,
        prune: opts.prune,
        dedup_rotation: dedup,
        candidates_total: cands.total,
        examined,
        feasible_count: found.len() as u128,
        witnesses,
        solutions: Solutions::Listed(listed),
    })
}

/// Constraint problem over row spans: one variable per user whose domain is
/// the set of spans its message can have, with the constraint at user `c`
/// relating `c - 1` and `c + 1`.
#[derive(Clone, Debug)]
struct Csp {
    k: usize,
    spec: FieldSpec,
    m: usize,
    /// Span representatives (RREF rows padded with zero rows to `m`).
    domain: Vec<Vec<Vec<u32>>>,
    /// Number of m-tuples of rows spanning each domain entry.
    weight: Vec<u128>,
    index: BTreeMap<Vec<Vec<u32>>, usize>,
    /// `compat[c][a * D + b]`: constraint at `c` with span `a` at `c - 1`
    /// and span `b` at `c + 1`.
    compat: Vec<Vec<bool>>,
}

impl Csp {
    fn span_key(&self, rows: &[Vec<u32>]) -> Vec<Vec<u32>> {
        canonical_span(self.spec, self.k, self.m, rows)
    }

    fn contains(&self, candidate: &CandidateScheme) -> bool {
        let d = self.domain.len();
        let Some(vals) = (0..self.k).map(|u| self.index.get(&self.span_key(&candidate.rows[u])).copied()).collect::<Option<Vec<_>>>()
        else {
            return false;
        };
        (0..self.k).all(|c| self.compat[c][vals[(c + self.k - 1) % self.k] * d + vals[(c + 1) % self.k]])
    }

    /// Feasible assignments weighted by tuples per span: for each cycle of
    /// the step-2 constraint graph, the trace of the product of transfer
    /// matrices.
    fn count(&self) -> Option<u128> {
        let k = self.k;
        let d = self.domain.len();
        let mut seen = vec![false; k];
        let mut total = 1u128;
        for start in 0..k {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut v = (start + 2) % k;
            while v != start {
                seen[v] = true;
                cycle.push(v);
                v = (v + 2) % k;
            }
            let mut trace = 0u128;
            for a0 in 0..d {
                let mut vec = vec![0u128; d];
                vec[a0] = 1;
                for &v in &cycle {
                    let c = &self.compat[(v + 1) % k];
                    let mut next = vec![0u128; d];
                    for (a, &x) in vec.iter().enumerate().filter(|(_, &x)| x != 0) {
                        let wx = x.checked_mul(self.weight[a])?;
                        for (b, slot) in next.iter_mut().enumerate() {
                            if c[a * d + b] {
                                *slot = slot.checked_add(wx)?;
                            }
                        }
                    }
                    vec = next;
                }
                trace = trace.checked_add(vec[a0])?;
            }
            total = total.checked_mul(trace)?;
        }
        Some(total)
    }

    /// First `limit` feasible span assignments in ascending order, after
    /// arc consistency. Stops early once `steps` search nodes are used.
    fn witnesses(&self, limit: usize, mut steps: u128) -> Vec<Vec<usize>> {
        let k = self.k;
        let d = self.domain.len();
        let mut alive = vec![vec![true; d]; k];
        let mut changed = true;
        while changed {
            changed = false;
            for c in 0..k {
                let (p, n) = ((c + k - 1) % k, (c + 1) % k);
                for a in 0..d {
                    if alive[p][a] && !(0..d).any(|b| alive[n][b] && self.compat[c][a * d + b]) {
                        alive[p][a] = false;
                        changed = true;
                    }
                }
                for b in 0..d {
                    if alive[n][b] && !(0..d).any(|a| alive[p][a] && self.compat[c][a * d + b]) {
                        alive[n][b] = false;
                        changed = true;
                    }
                }
            }
        }
        // constraints whose later endpoint (in user order) is u
        let checks: Vec<Vec<usize>> = (0..k)
            .map(|u| (0..k).filter(|&c| ((c + k - 1) % k).max((c + 1) % k) == u).collect())
            .collect();
        let mut out = Vec::new();
        let mut assign = vec![0usize; k];
        self.dfs(0, &alive, &checks, &mut assign, &mut out, limit, &mut steps);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        u: usize,
        alive: &[Vec<bool>],
        checks: &[Vec<usize>],
        assign: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        limit: usize,
        steps: &mut u128,
    ) {
        let k = self.k;
        let d = self.domain.len();
        if u == k {
            out.push(assign.clone());
            return;
        }
        for a in 0..d {
            if out.len() >= limit || *steps == 0 {
                return;
            }
            if !alive[u][a] {
                continue;
            }
            *steps -= 1;
            assign[u] = a;
            let ok = checks[u].iter().all(|&c| self.compat[c][assign[(c + k - 1) % k] * d + assign[(c + 1) % k]]);
            if ok {
                self.dfs(u + 1, alive, checks, assign, out, limit, steps);
            }
        }
    }
}

fn canonical_span(spec: FieldSpec, k: usize, m: usize, rows: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut r = rref(spec, k, rows);
    r.resize(m, vec![0; k]);
    r
}

fn factored(k: usize, m: usize, spec: FieldSpec, opts: &SearchOptions, total: u128) -> Result<SearchOutcome> {
    if opts.dedup_rotation {
        return Err(Error::InvalidArgument("rotation deduplication needs the exhaustive strategy".into()));
    }
    let tuples = local_options(k, m, spec, false, opts.budget)?;
    let mut spans: BTreeMap<Vec<Vec<u32>>, u128> = BTreeMap::new();
    for t in &tuples {
        *spans.entry(canonical_span(spec, k, m, t)).or_default() += 1;
    }
    // a span has a row with nonzero W coefficient iff its RREF starts at W
    spans.retain(|s, _| !opts.prune || s[0][0] != 0);
    let (domain, weight): (Vec<_>, Vec<_>) = spans.into_iter().unzip();
    let d = domain.len() as u128;
    let cost = (k as u128) * d * d + (k as u128) * d * d * d;
    if cost > opts.budget {
        return Err(Error::BudgetExceeded { needed: cost, budget: opts.budget });
    }

    let checker = Checker::new(k, spec)?;
    let prepared: Vec<Vec<Prepared>> = (0..k).map(|u| domain.iter().map(|s| checker.prepare(u, s)).collect()).collect();
    let dn = domain.len();
    let compat: Vec<Vec<bool>> = (0..k)
        .map(|c| {
            let (p, n) = ((c + k - 1) % k, (c + 1) % k);
            (0..dn * dn)
                .into_par_iter()
                .map(|i| checker.user_ok(c, &prepared[p][i / dn], &prepared[n][i % dn]))
                .collect()
        })
        .collect();
    let index = domain.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let csp = Csp { k, spec, m, domain, weight, index, compat };
    let feasible_count =
        csp.count().ok_or_else(|| Error::InvalidArgument("feasible count overflows 128 bits".into()))?;
    let witnesses = if feasible_count == 0 {
        Vec::new()
    } else {
        csp.witnesses(opts.max_witnesses, opts.budget)
            .into_iter()
            .map(|vals| CandidateScheme { k, m, spec, rows: vals.iter().map(|&v| csp.domain[v].clone()).collect() })
            .collect()
    };
    Ok(SearchOutcome {
        k,
        m,
        spec,
        strategy: Strategy::Factored,
        prune: opts.prune,
        dedup_rotation: false,
        candidates_total: total,
        examined: (k as u128) * d * d,
        feasible_count,
        witnesses,
        solutions: Solutions::Factored(Box::new(csp)),
    })
}

/// The ring scheme the protocol module implements, as a candidate.
pub fn protocol_candidate(k: usize, spec: FieldSpec) -> Result<CandidateScheme> {
    let scheme = crate::verifier::scheme_from_protocol(k, &crate::keys::schedule_for_ring(k)?, spec, 1)?;
    CandidateScheme::from_linear(&scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::measured_rate;
    use proptest::prelude::{prop_assert_eq, prop_oneof, proptest, Just, ProptestConfig};
    use proptest::strategy::Strategy as PropStrategy;

    fn f2() -> FieldSpec {
        FieldSpec::binary()
    }

    fn opts() -> SearchOptions {
        SearchOptions::default()
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(candidate_count(5, 1, f2(), true), Some(1 << 20));
        assert_eq!(candidate_count(3, 1, f2(), true), Some(64));
        assert_eq!(candidate_count(3, 1, f2(), false), Some(512));
        assert_eq!(enumerate_candidates(3, 1, f2(), &opts()).unwrap().count(), 64);
        let c = enumerate_candidates(5, 1, f2(), &opts()).unwrap();
        assert_eq!(c.total(), 1_048_576);
        assert!(enumerate_candidates(3, 0, f2(), &opts()).is_err());
        assert!(search(3, 0, f2(), &opts()).is_err());
        assert!(enumerate_candidates(2, 1, f2(), &opts()).is_err());
        let tight = SearchOptions { budget: 1000, ..opts() };
        assert!(matches!(enumerate_candidates(5, 1, f2(), &tight), Err(Error::BudgetExceeded { needed: 1_048_576, .. })));
    }

    #[test]
    fn enumeration_is_sorted_and_pruned() {
        let all: Vec<_> = enumerate_candidates(4, 1, f2(), &opts()).unwrap().collect();
        assert!(all.windows(2).all(|w| w[0].encoding() < w[1].encoding()));
        assert!(all.iter().all(|c| (0..4).all(|u| c.rows(u).iter().any(|r| r[0] != 0))));
        let dedup: Vec<_> =
            enumerate_candidates(4, 1, f2(), &SearchOptions { dedup_rotation: true, ..opts() }).unwrap().collect();
        assert!(dedup.len() < all.len());
        assert!(dedup.iter().all(|c| c.canonical_rotation() == *c));
    }

    #[test]
    fn protocol_schemes_are_feasible() {
        for k in 3..=7 {
            for q in [2, 3] {
                let c = protocol_candidate(k, FieldSpec::new(q).unwrap()).unwrap();
                assert!(feasible(&c), "K={k} q={q}");
                assert!(feasible_reference(&c).unwrap());
            }
        }
    }

    #[test]
    fn merged_components_fail() {
        let c = protocol_candidate(5, f2()).unwrap();
        let rows = (0..5)
            .map(|u| {
                let r = c.rows(u);
                vec![r[0].iter().zip(&r[1]).map(|(a, b)| (a + b) % 2).collect()]
            })
            .collect();
        let merged = CandidateScheme::new(5, 1, f2(), rows).unwrap();
        assert!(!feasible(&merged));
        assert!(!feasible_reference(&merged).unwrap());
    }

    #[test]
    fn small_rings() {
        let s3 = search(3, 1, f2(), &SearchOptions { max_witnesses: usize::MAX, ..opts() }).unwrap();
        assert!(s3.feasible_count >= 1);
        assert!(s3.contains(&protocol_candidate(3, f2()).unwrap()));
        assert_eq!(s3.witnesses.len() as u128, s3.feasible_count);
        let s4 = search(4, 1, f2(), &opts()).unwrap();
        assert!(s4.contains(&protocol_candidate(4, f2()).unwrap()));
        let s5 = search(5, 1, f2(), &opts()).unwrap();
        assert_eq!(s5.feasible_count, 0);
        assert_eq!(s5.examined, 1 << 20);
    }

    #[test]
    fn strategies_agree() {
        for (k, m) in [(3, 1), (4, 1), (5, 1), (3, 2)] {
            let ex = search(k, m, f2(), &SearchOptions { strategy: Strategy::Exhaustive, ..opts() }).unwrap();
            let fa = search(k, m, f2(), &SearchOptions { strategy: Strategy::Factored, ..opts() }).unwrap();
            assert_eq!(ex.feasible_count, fa.feasible_count, "K={k} m={m}");
            for w in &fa.witnesses {
                assert!(ex.contains(w));
            }
            for w in &ex.witnesses {
                assert!(fa.contains(w));
            }
        }
        let q3 = FieldSpec::new(3).unwrap();
        let ex = search(3, 1, q3, &SearchOptions { strategy: Strategy::Exhaustive, ..opts() }).unwrap();
        let fa = search(3, 1, q3, &SearchOptions { strategy: Strategy::Factored, ..opts() }).unwrap();
        assert_eq!(ex.feasible_count, fa.feasible_count);
    }

    #[test]
    fn pruning_is_complete_at_k3() {
        let all = SearchOptions { prune: false, max_witnesses: usize::MAX, ..opts() };
        let reference = search(3, 1, f2(), &all).unwrap();
        let pruned = search(3, 1, f2(), &SearchOptions { max_witnesses: usize::MAX, ..opts() }).unwrap();
        assert_eq!(reference.examined, 512);
        for w in &reference.witnesses {
            assert!(pruned.contains(w));
        }
        assert_eq!(reference.feasible_count, pruned.feasible_count);
    }

    #[test]
    fn rotation_dedup_counts_classes() {
        let full = search(4, 1, f2(), &SearchOptions { max_witnesses: usize::MAX, ..opts() }).unwrap();
        let dedup = search(4, 1, f2(), &SearchOptions { dedup_rotation: true, ..opts() }).unwrap();
        let mut classes: Vec<_> = full.witnesses.iter().map(|w| w.canonical_rotation().encoding()).collect();
        classes.sort();
        classes.dedup();
        assert_eq!(dedup.feasible_count, classes.len() as u128);
        assert!(search(5, 2, f2(), &SearchOptions { dedup_rotation: true, ..opts() }).is_err());
    }

    #[test]
    fn two_symbol_k5() {
        let s = search(5, 2, f2(), &opts()).unwrap();
        assert_eq!(s.strategy, Strategy::Factored);
        assert!(s.feasible_count > 0);
        assert!(s.contains(&protocol_candidate(5, f2()).unwrap()));
        assert!(!s.witnesses.is_empty());
        for w in &s.witnesses {
            assert!(feasible(w));
            assert!(measured_rate(&w.to_linear().unwrap()).unwrap().iter().all(|r| *r >= crate::Rational::from_integer(1)));
        }
    }

    #[test]
    fn k6_single_symbol_is_empty() {
        let s = search(6, 1, f2(), &SearchOptions { strategy: Strategy::Factored, ..opts() }).unwrap();
        assert_eq!(s.feasible_count, 0);
    }

    #[test]
    fn report_serializes() {
        let s = search(4, 1, f2(), &SearchOptions { max_witnesses: 1, ..opts() }).unwrap();
        let v = serde_json::to_value(s.report()).unwrap();
        assert_eq!(v["strategy"], "exhaustive");
        assert_eq!(v["candidates_total"], "4096");
        assert_eq!(v["witnesses"].as_array().unwrap().len(), 1);
    }

    fn candidate(k: usize, m: usize, q: u32) -> impl PropStrategy<Value = CandidateScheme> {
        proptest::collection::vec(0..q, k * m * k).prop_map(move |flat| {
            let rows = flat.chunks(m * k).map(|u| u.chunks(k).map(<[u32]>::to_vec).collect()).collect();
            CandidateScheme::new(k, m, FieldSpec::new(q).unwrap(), rows).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fast_check_matches_verifier(c in (3usize..6, 1usize..3, prop_oneof![Just(2u32), Just(3)])
            .prop_flat_map(|(k, m, q)| candidate(k, m, q)))
        {
            prop_assert_eq!(feasible(&c), feasible_reference(&c).unwrap());
        }

        #[test]
        fn linear_roundtrip(c in (3usize..7, 1usize..3).prop_flat_map(|(k, m)| candidate(k, m, 3))) {
            prop_assert_eq!(CandidateScheme::from_linear(&c.to_linear().unwrap()).unwrap(), c.clone());
            prop_assert_eq!(feasible(&c.rotate(1)), feasible(&c));
        }
    }
}
