use serde::{Deserialize, Serialize};

use super::checks::{CheckReport, Constraint, OracleKind};
use super::entropy::EntropyValue;
use crate::Rational;

pub const SCHEMA_VERSION: u32 = 1;

/// Exact rational as decimal strings so no precision is lost in JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalJson {
    pub num: String,
    pub den: String,
}

impl From<Rational> for RationalJson {
    fn from(r: Rational) -> Self {
        Self { num: r.numer().to_string(), den: r.denom().to_string() }
    }
}

impl RationalJson {
    pub fn to_rational(&self) -> Option<Rational> {
        let n = self.num.parse().ok()?;
        let d: i64 = self.den.parse().ok()?;
        (d != 0).then(|| Rational::new(n, d))
    }
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub user: usize,
    pub constraint: String,
    pub oracle: String,
    /// Present when the quantity is an exact multiple of `log q`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<RationalJson>,
    /// The same quantity in q-ary symbols as a float.
    pub symbols: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerificationReport {
    pub records: Vec<VerifyRecord>,
}

impl VerificationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, report: &CheckReport) {
        for u in &report.users {
            self.records.push(VerifyRecord {
                user: u.user,
                constraint: constraint_name(u.constraint).into(),
                oracle: oracle_name(u.oracle).into(),
                exact: exact_of(&u.value),
                symbols: u.value.approx(),
                pass: u.pass,
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    /// Record lines followed by a verdict line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let failures = self.records.iter().filter(|r| !r.pass).count();
        let verdict = serde_json::json!({
            "verdict": if failures == 0 { "pass" } else { "fail" },
            "records": self.records.len(),
            "failures": failures,
        });
        out.push_str(&verdict.to_string());
        out.push('\n');
        out
    }
}

fn exact_of(v: &EntropyValue) -> Option<RationalJson> {
    v.exact().map(RationalJson::from)
}

pub fn constraint_name(c: Constraint) -> &'static str {
    match c {
        Constraint::Recovery => "recovery",
        Constraint::Security => "security",
        Constraint::Rate => "rate",
    }
}

pub fn oracle_name(o: OracleKind) -> &'static str {
    match o {
        OracleKind::Rank => "rank",
        OracleKind::Enum => "enum",
    }
}
