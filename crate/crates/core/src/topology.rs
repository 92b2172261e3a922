//! Communication graphs. Users are labelled `0..K`; rings use circular labels
//! so the neighbours of `k` are `k - 1` and `k + 1` modulo `K`.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can answer neighbourhood queries for the verifier.
pub trait Topology {
    fn num_users(&self) -> usize;

    /// Sorted neighbour list of `k`.
    fn neighbors(&self, k: usize) -> Result<Vec<usize>>;
}

/// Connected undirected simple graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn new(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut adj = vec![BTreeSet::new(); k];
        for &(a, b) in edges {
            if a >= k || b >= k {
                return Err(Error::UserOutOfRange { user: a.max(b), k });
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            adj[a].insert(b);
            adj[b].insert(a);
        }
        let g = Self { adj };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Edge list with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    pub fn neighbor_set(&self, k: usize) -> Result<&BTreeSet<usize>> {
        self.adj.get(k).ok_or(Error::UserOutOfRange { user: k, k: self.adj.len() })
    }
}

impl Topology for Graph {
    fn num_users(&self) -> usize {
        self.adj.len()
    }

    fn neighbors(&self, k: usize) -> Result<Vec<usize>> {
        Ok(self.neighbor_set(k)?.iter().copied().collect())
    }
}

/// `K`-user ring, `K >= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct RingTopology {
    k: usize,
}

impl RingTopology {
    pub fn new(k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::RingTooSmall(k));
        }
        Ok(Self { k })
    }

    #[inline]
    pub fn k(self) -> usize {
        self.k
    }

    fn check(self, v: usize) -> Result<()> {
        if v >= self.k {
            Err(Error::UserOutOfRange { user: v, k: self.k })
        } else {
            Ok(())
        }
    }

    /// `(k + offset) mod K` for a signed offset.
    #[inline]
    pub fn offset(self, k: usize, offset: isize) -> usize {
        (k as isize + offset).rem_euclid(self.k as isize) as usize
    }

    #[inline]
    pub fn prev(self, k: usize) -> usize {
        self.offset(k, -1)
    }

    #[inline]
    pub fn next(self, k: usize) -> usize {
        self.offset(k, 1)
    }

    /// `(prev, next)` neighbours of `k`.
    pub fn neighbor_pair(self, k: usize) -> Result<(usize, usize)> {
        self.check(k)?;
        Ok((self.prev(k), self.next(k)))
    }

    pub fn distance(self, i: usize, j: usize) -> Result<usize> {
        ring_distance(self.k, i, j)
    }

    pub fn to_graph(self) -> Graph {
        let edges: Vec<_> = (0..self.k).map(|v| (v, self.next(v))).collect();
        Graph::new(self.k, &edges).expect("a ring with K >= 3 is a connected simple graph")
    }
}

impl Topology for RingTopology {
    fn num_users(&self) -> usize {
        self.k
    }

    fn neighbors(&self, k: usize) -> Result<Vec<usize>> {
        let (p, n) = self.neighbor_pair(k)?;
        let mut v = vec![p, n];
        v.sort_unstable();
        Ok(v)
    }
}

impl TryFrom<usize> for RingTopology {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        Self::new(k)
    }
}

impl From<RingTopology> for usize {
    fn from(r: RingTopology) -> usize {
        r.k
    }
}

pub fn make_ring(k: usize) -> Result<RingTopology> {
    RingTopology::new(k)
}

/// Hop distance between `i` and `j` on a `K`-cycle.
pub fn ring_distance(k: usize, i: usize, j: usize) -> Result<usize> {
    for v in [i, j] {
        if v >= k {
            return Err(Error::UserOutOfRange { user: v, k });
        }
    }
    let d = i.abs_diff(j);
    Ok(d.min(k - d))
}
