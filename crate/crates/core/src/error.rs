use thiserror::Error;

use crate::protocol::Phase;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u32),
    #[error("symbol {symbol} is outside F_{q}")]
    SymbolOutOfRange { symbol: u32, q: u32 },
    #[error("symbol vectors must have length >= 1")]
    EmptyVector,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("field mismatch: F_{left} vs F_{right}")]
    FieldMismatch { left: u32, right: u32 },

    #[error("a ring needs at least 3 users, got {0}")]
    RingTooSmall(usize),
    #[error("user {user} out of range for K = {k}")]
    UserOutOfRange { user: usize, k: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("a key pair needs two distinct users, got ({0}, {0})")]
    SelfPair(usize),
    #[error("invalid key schedule: {0}")]
    InvalidSchedule(String),
    #[error("key store does not match the ring scheme for K = {k}")]
    ScheduleMismatch { k: usize },

    #[error("user {user}: expected a message from {expected}, got one from {found}")]
    WrongSender { user: usize, expected: usize, found: usize },
    #[error("user {user}: message from {sender} has no component for it")]
    MissingComponent { user: usize, sender: usize },
    #[error("user {user}: operation requires phase {expected:?}, state is {found:?}")]
    PhaseViolation { user: usize, expected: Phase, found: Phase },
    #[error("round aborted at user {user}: {reason}")]
    RoundFailed { user: usize, reason: String },

    #[error("transcript: {0}")]
    Transcript(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("variable is not a linear function of the sources: {0}")]
    NotLinear(String),
    #[error("budget exceeded: {needed} exceeds the limit of {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
