use serde::Serialize;

use super::entropy::{EntropyOracle, EntropyValue, EnumOracle, RankOracle, Var};
use super::source::Scheme;
use crate::error::{Error, Result};
use crate::topology::Topology;
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Rank,
    Enum,
}

impl std::str::FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(OracleKind::Rank),
            "enum" => Ok(OracleKind::Enum),
            other => Err(Error::InvalidArgument(format!("unknown oracle {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    Recovery,
    Security,
    Rate,
}

/// Outcome of one constraint at one user. `value` is the residual
/// conditional entropy for recovery, the conditional mutual information for
/// security, and `H(X_k)/L` for rate.
#[derive(Clone, Debug, PartialEq)]
pub struct UserResult {
    pub user: usize,
    pub constraint: Constraint,
    pub oracle: OracleKind,
    pub value: EntropyValue,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub constraint: Constraint,
    pub oracle: OracleKind,
    pub users: Vec<UserResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.users.iter().all(|u| u.pass)
    }

    /// First violating user, if any.
    pub fn witness(&self) -> Option<&UserResult> {
        self.users.iter().find(|u| !u.pass)
    }
}

/// Variables describing what user `k` sees and must (not) learn.
pub struct Neighborhood {
    pub received: Vec<Var>,
    pub inputs: Vec<Var>,
    pub target: Vec<Var>,
    /// `W_k` and every roster key `k` holds.
    pub own: Vec<Var>,
}

impl Neighborhood {
    pub fn of<S: Scheme + ?Sized, T: Topology + ?Sized>(scheme: &S, topo: &T, k: usize) -> Result<Self> {
        let src = scheme.source();
        let spec = src.spec();
        let ns = topo.neighbors(k)?;
        let mut target = src.zero_row();
        for &i in &ns {
            target[src.input_index(i)] = spec.add(target[src.input_index(i)], 1);
        }
        let own = src.user_support(k).into_iter().map(|e| Var::Form(src.unit_row(e))).collect();
        Ok(Self {
            received: ns.iter().map(|&i| Var::Message(i)).collect(),
            inputs: ns.iter().map(|&i| Var::Form(src.unit_row(src.input_index(i)))).collect(),
            target: vec![Var::Form(target)],
            own,
        })
    }

    pub fn view(&self) -> Vec<Var> {
        self.received.iter().chain(&self.own).cloned().collect()
    }

    /// Conditioning set of the security constraint.
    pub fn allowed(&self) -> Vec<Var> {
        self.target.iter().chain(&self.own).cloned().collect()
    }
}

fn check_dims<S: Scheme + ?Sized, T: Topology + ?Sized>(scheme: &S, topo: &T) -> Result<()> {
    if scheme.source().k() != topo.num_users() {
        return Err(Error::InvalidArgument(format!(
            "scheme has {} users, topology has {}",
            scheme.source().k(),
            topo.num_users()
        )));
    }
    Ok(())
}

/// Recovery: `H(sum of neighbour inputs | received messages, W_k, Z_k) = 0`
/// for every user.
pub fn check_recovery<S: Scheme + ?Sized, T: Topology + ?Sized>(
    scheme: &S,
    topo: &T,
    oracle: OracleKind,
    budget: u128,
) -> Result<CheckReport> {
    check_dims(scheme, topo)?;
    let q = scheme.source().spec().q();
    let mut users = Vec::with_capacity(topo.num_users());
    for k in 0..topo.num_users() {
        let nb = Neighborhood::of(scheme, topo, k)?;
        let view = nb.view();
        let (value, pass) = match oracle {
            OracleKind::Rank => {
                let v = RankOracle::new(scheme).cond_entropy(&nb.target, &view)?;
                (v, v.is_exact_zero())
            }
            OracleKind::Enum => {
                let t = EnumOracle::new(scheme, budget).joint(&[view, nb.target.clone()])?;
                let v = t.project(&[0, 1]).entropy(q).minus(t.project(&[0]).entropy(q));
                (v, t.determines(0, 1))
            }
        };
        users.push(UserResult { user: k, constraint: Constraint::Recovery, oracle, value, pass });
    }
    Ok(CheckReport { constraint: Constraint::Recovery, oracle, users })
}

/// Security: `I(received; neighbour inputs | their sum, W_k, Z_k) = 0` for
/// every user. The enumeration path decides by exact conditional-independence
/// factorization of the count tables.
pub fn check_security<S: Scheme + ?Sized, T: Topology + ?Sized>(
    scheme: &S,
    topo: &T,
    oracle: OracleKind,
    budget: u128,
) -> Result<CheckReport> {
    check_dims(scheme, topo)?;
    let q = scheme.source().spec().q();
    let mut users = Vec::with_capacity(topo.num_users());
    for k in 0..topo.num_users() {
        let nb = Neighborhood::of(scheme, topo, k)?;
        let allowed = nb.allowed();
        let (value, pass) = match oracle {
            OracleKind::Rank => {
                let v = RankOracle::new(scheme).mutual_info(&nb.received, &nb.inputs, &allowed)?;
                (v, v.is_exact_zero())
            }
            OracleKind::Enum => {
                let t = EnumOracle::new(scheme, budget).joint(&[nb.received.clone(), nb.inputs.clone(), allowed])?;
                let h = |g: &[usize]| t.project(g).entropy(q);
                let v = h(&[0, 2]).plus(h(&[1, 2])).minus(h(&[0, 1, 2])).minus(h(&[2]));
                (v, t.conditionally_independent(0, 1, 2))
            }
        };
        users.push(UserResult { user: k, constraint: Constraint::Security, oracle, value, pass });
    }
    Ok(CheckReport { constraint: Constraint::Security, oracle, users })
}

/// `H(X_k) / L` for every user, from the rank oracle.
pub fn measured_rate<S: Scheme + ?Sized>(scheme: &S) -> Result<Vec<Rational>> {
    let src = scheme.source();
    let oracle = RankOracle::new(scheme);
    (0..src.k())
        .map(|k| {
            let h = oracle.entropy(&[Var::Message(k)])?;
            Ok(h.exact().expect("rank entropies are exact") / Rational::from_integer(src.symbol_len() as i64))
        })
        .collect()
}

/// Rate as a per-user report against an expected value.
pub fn rate_report<S: Scheme + ?Sized>(scheme: &S, expected: Rational) -> Result<CheckReport> {
    let users = measured_rate(scheme)?
        .into_iter()
        .enumerate()
        .map(|(user, r)| UserResult {
            user,
            constraint: Constraint::Rate,
            oracle: OracleKind::Rank,
            value: EntropyValue::Exact(r),
            pass: r == expected,
        })
        .collect();
    Ok(CheckReport { constraint: Constraint::Rate, oracle: OracleKind::Rank, users })
}

/// Optimal rate on a `K`-user ring: 1 for `K = 3, 4` and 2 for `K >= 5`.
pub fn optimal_ring_rate(k: usize) -> Rational {
    Rational::from_integer(if k <= 4 { 1 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::keys::{schedule_for_ring, KeySchedule, Pair};
    use crate::topology::{Graph, RingTopology};
    use crate::verifier::entropy::DEFAULT_ENUM_BUDGET;
    use crate::verifier::source::{scheme_from_protocol, LinearScheme, SourceModel};

    fn ring_scheme(k: usize, q: u32, len: usize) -> LinearScheme {
        scheme_from_protocol(k, &schedule_for_ring(k).unwrap(), FieldSpec::new(q).unwrap(), len).unwrap()
    }

    fn both(
        f: fn(&LinearScheme, &RingTopology, OracleKind, u128) -> Result<CheckReport>,
        s: &LinearScheme,
        ring: &RingTopology,
    ) -> [CheckReport; 2] {
        [
            f(s, ring, OracleKind::Rank, DEFAULT_ENUM_BUDGET).unwrap(),
            f(s, ring, OracleKind::Enum, DEFAULT_ENUM_BUDGET).unwrap(),
        ]
    }

    #[test]
    fn ring_schemes_pass() {
        for k in 3..=8 {
            let ring = RingTopology::new(k).unwrap();
            let s = ring_scheme(k, 2, 1);
            for r in both(check_recovery, &s, &ring) {
                assert!(r.passed(), "K={k} recovery {:?}", r.oracle);
            }
            for r in both(check_security, &s, &ring) {
                assert!(r.passed(), "K={k} security {:?}", r.oracle);
            }
            assert!(measured_rate(&s).unwrap().iter().all(|&x| x == optimal_ring_rate(k)));
        }
    }

    #[test]
    fn zeroed_key_coefficient_breaks_recovery_at_receiver() {
        let ring = RingTopology::new(5).unwrap();
        let s = ring_scheme(5, 2, 1);
        let mut rows = s.all_rows().to_vec();
        let idx = s.source().key_index(Pair::new(0, 2).unwrap()).unwrap();
        rows[0][1][idx] = 0; // X_0 toward user 1 becomes bare W_0
        let broken = LinearScheme::new(s.source().clone(), rows).unwrap();
        for r in both(check_recovery, &broken, &ring) {
            assert!(!r.passed());
            let failing: Vec<_> = r.users.iter().filter(|u| !u.pass).map(|u| u.user).collect();
            assert_eq!(failing, vec![1], "{:?}", r.oracle);
        }
    }

    #[test]
    fn zero_scheme_fails_recovery() {
        let ring = RingTopology::new(4).unwrap();
        let src = SourceModel::new(&schedule_for_ring(4).unwrap(), FieldSpec::binary(), 1).unwrap();
        let rows = (0..4).map(|_| vec![src.zero_row()]).collect();
        let s = LinearScheme::new(src, rows).unwrap();
        for r in both(check_recovery, &s, &ring) {
            assert!(!r.passed());
            assert_eq!(r.witness().unwrap().user, 0);
            assert_eq!(r.witness().unwrap().value.exact(), Some(Rational::from_integer(1)));
        }
    }

    #[test]
    fn unmasked_scheme_leaks_one_symbol_everywhere() {
        for k in [3, 5, 6] {
            for len in [1, 2] {
                let ring = RingTopology::new(k).unwrap();
                let src = SourceModel::new(&KeySchedule::empty(k), FieldSpec::new(3).unwrap(), len).unwrap();
                let rows = (0..k).map(|u| vec![src.unit_row(u)]).collect();
                let s = LinearScheme::new(src, rows).unwrap();
                for r in both(check_security, &s, &ring) {
                    for u in &r.users {
                        assert!(!u.pass);
                        assert_eq!(u.value.exact(), Some(Rational::from_integer(len as i64)), "{:?}", r.oracle);
                    }
                }
            }
        }
    }

    #[test]
    fn dropping_a_key_breaks_security() {
        let ring = RingTopology::new(5).unwrap();
        let sched = schedule_for_ring(5).unwrap().without(Pair::new(0, 2).unwrap());
        let s = scheme_from_protocol(5, &sched, FieldSpec::binary(), 1).unwrap();
        for r in both(check_security, &s, &ring) {
            assert!(!r.passed());
            assert_eq!(r.witness().unwrap().user, 1);
        }
        for r in both(check_recovery, &s, &ring) {
            assert!(r.passed());
        }
    }

    #[test]
    fn duplicated_component_keeps_rate() {
        let s = ring_scheme(6, 2, 1);
        let mut rows = s.all_rows().to_vec();
        let dup = rows[2][0].clone();
        rows[2].push(dup);
        let s2 = LinearScheme::new(s.source().clone(), rows).unwrap();
        assert_eq!(measured_rate(&s2).unwrap(), measured_rate(&s).unwrap());
    }

    #[test]
    fn general_graph_checks() {
        // path 0 - 1 - 2 with a shared key between the endpoints
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let sched = KeySchedule::new(3, [Pair::new(0, 2).unwrap()]).unwrap();
        let src = SourceModel::new(&sched, FieldSpec::new(3).unwrap(), 1).unwrap();
        let key = src.key_index(Pair::new(0, 2).unwrap()).unwrap();
        let mut x0 = src.unit_row(0);
        x0[key] = 1;
        let mut x2 = src.unit_row(2);
        x2[key] = 2;
        let rows = vec![vec![x0], vec![src.unit_row(1)], vec![x2]];
        let s = LinearScheme::new(src, rows).unwrap();
        for o in [OracleKind::Rank, OracleKind::Enum] {
            assert!(check_recovery(&s, &g, o, DEFAULT_ENUM_BUDGET).unwrap().passed());
            assert!(check_security(&s, &g, o, DEFAULT_ENUM_BUDGET).unwrap().passed());
        }
        let ring = RingTopology::new(4).unwrap();
        assert!(check_recovery(&s, &ring, OracleKind::Rank, DEFAULT_ENUM_BUDGET).is_err());
    }
}
