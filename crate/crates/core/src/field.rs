//! Prime-field arithmetic on single symbols and on length-`L` symbol vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prime field `F_q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FieldSpec {
    q: u32,
}

impl FieldSpec {
    /// Accepts `q` only if it is prime.
    pub fn new(q: u32) -> Result<Self> {
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(Self { q })
    }

    pub fn binary() -> Self {
        Self { q: 2 }
    }

    #[inline]
    pub fn q(self) -> u32 {
        self.q
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.q as u64) as u32
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.q as u64) as u32
    }

    /// Multiplicative inverse via Fermat's little theorem. `a` must be nonzero.
    pub fn inv(self, a: u32) -> u32 {
        debug_assert!(!a.is_multiple_of(self.q), "zero has no inverse");
        self.pow(a, self.q as u64 - 2)
    }

    pub fn pow(self, base: u32, mut exp: u64) -> u32 {
        let q = self.q as u64;
        let mut acc = 1u64 % q;
        let mut b = base as u64 % q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * b % q;
            }
            b = b * b % q;
            exp >>= 1;
        }
        acc as u32
    }

    /// Reduces a signed integer into `[0, q)`.
    pub fn reduce(self, v: i64) -> u32 {
        v.rem_euclid(self.q as i64) as u32
    }

    /// Bits per q-ary symbol.
    pub fn bits_per_symbol(self) -> f64 {
        (self.q as f64).log2()
    }
}

impl TryFrom<u32> for FieldSpec {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        Self::new(q)
    }
}

impl From<FieldSpec> for u32 {
    fn from(spec: FieldSpec) -> u32 {
        spec.q
    }
}

impl std::fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "F_{}", self.q)
    }
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let n = n as u64;
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// A vector of `L >= 1` symbols over `F_q`.
///
/// Inputs, keys and message components are all `SymbolVector`s. Every
/// element is kept reduced into `[0, q)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolVector {
    spec: FieldSpec,
    elems: Vec<u32>,
}

impl SymbolVector {
    pub fn new(spec: FieldSpec, elems: Vec<u32>) -> Result<Self> {
        if elems.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(&bad) = elems.iter().find(|&&e| e >= spec.q) {
            return Err(Error::SymbolOutOfRange { symbol: bad, q: spec.q });
        }
        Ok(Self { spec, elems })
    }

    pub fn zeros(spec: FieldSpec, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyVector);
        }
        Ok(Self { spec, elems: vec![0; len] })
    }

    /// Draws `len` independent uniform symbols from `rng`.
    pub fn sample_uniform<R: Rng + ?Sized>(len: usize, spec: FieldSpec, rng: &mut R) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyVector);
        }
        let elems = (0..len).map(|_| rng.random_range(0..spec.q)).collect();
        Ok(Self { spec, elems })
    }

    #[inline]
    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    /// Always false for a constructed vector; present for API symmetry.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    #[inline]
    pub fn elems(&self) -> &[u32] {
        &self.elems
    }

    pub fn into_elems(self) -> Vec<u32> {
        self.elems
    }

    pub fn is_zero(&self) -> bool {
        self.elems.iter().all(|&e| e == 0)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::FieldMismatch { left: self.spec.q, right: other.spec.q });
        }
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: other.len() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let spec = self.spec;
        let elems = self.elems.iter().zip(&other.elems).map(|(&a, &b)| spec.add(a, b)).collect();
        Ok(Self { spec, elems })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        let spec = self.spec;
        for (a, &b) in self.elems.iter_mut().zip(&other.elems) {
            *a = spec.add(*a, b);
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let spec = self.spec;
        Self { spec, elems: self.elems.iter().map(|&a| spec.neg(a)).collect() }
    }

    pub fn scale(&self, c: u32) -> Self {
        let spec = self.spec;
        let c = c % spec.q;
        Self { spec, elems: self.elems.iter().map(|&a| spec.mul(a, c)).collect() }
    }
}

impl std::fmt::Display for SymbolVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.elems.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "]")
    }
}

/// Componentwise sum `a + b`.
pub fn vec_add(a: &SymbolVector, b: &SymbolVector) -> Result<SymbolVector> {
    a.add(b)
}

/// Componentwise additive inverse.
pub fn vec_neg(a: &SymbolVector) -> SymbolVector {
    a.neg()
}

pub fn sample_uniform<R: Rng + ?Sized>(len: usize, spec: FieldSpec, rng: &mut R) -> Result<SymbolVector> {
    SymbolVector::sample_uniform(len, spec, rng)
}
