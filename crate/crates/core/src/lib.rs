//! Secure neighbour-sum aggregation on rings of users with pairwise keys.
//!
//! Every user `k` holds an input `W_k` and must learn `W_{k-1} + W_{k+1}`
//! from the messages its two neighbours broadcast, while learning nothing
//! else about their inputs. The crate provides the field and topology
//! primitives, key setup, the per-user encoders and decoders, a round
//! simulator with transcripts, exact entropy-based verification, and an
//! exhaustive search over small linear schemes.

pub mod error;
pub mod field;
pub mod keys;
pub mod linalg;
pub mod netsim;
pub mod protocol;
pub mod search;
pub mod topology;
pub mod verifier;

/// Exact rational used for rates and entropies measured in `log q` units.
pub type Rational = num_rational::Ratio<i64>;

pub use error::{Error, Result};
pub use field::{FieldSpec, SymbolVector};
pub use keys::{schedule_for_ring, KeySchedule, KeyStore, Pair, UserKeys};
pub use netsim::{replay, run_round, run_round_with, RoundMeta, Transcript};
pub use protocol::{decode, encode, Message, RoundOutput, UserState};
pub use topology::{Graph, RingTopology, Topology};
pub use verifier::{check_recovery, check_security, measured_rate, LinearScheme, OracleKind, Scheme};
