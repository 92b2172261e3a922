//! Exact information-theoretic verification of recovery, security and rate.
//!
//! Two independent oracles back every check: matrix rank for linear schemes
//! and full enumeration of the joint source space for any deterministic
//! scheme. All pass/fail decisions use exact arithmetic.

mod checks;
mod entropy;
mod report;
mod source;

pub use checks::{
    check_recovery, check_security, measured_rate, optimal_ring_rate, rate_report, CheckReport, Constraint,
    Neighborhood, OracleKind, UserResult,
};
pub use entropy::{
    entropy_enum, entropy_rank, CountTable, EntropyOracle, EntropyValue, EnumOracle, JointTable, RankOracle, Var,
    DEFAULT_ENUM_BUDGET,
};
pub use report::{constraint_name, oracle_name, RationalJson, VerificationReport, VerifyRecord, SCHEMA_VERSION};
pub use source::{
    scheme_from_protocol, BlackBoxEncoder, BlackBoxScheme, LinearScheme, SchemeDump, Scheme, SourceId, SourceModel,
};
