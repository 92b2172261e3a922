//! Per-user encoders and decoders for the ring masking scheme.
//!
//! * `K = 3`: `X_k = W_k + S(k, k+1) + S(k, k+2)`, one component for both
//!   neighbours. The decoder sums both received payloads and adds its own
//!   keys toward each neighbour.
//! * `K = 4`: `X_k = W_k + S(k, k+2)`, one component for both neighbours.
//! * `K >= 5`: `X_k = (W_k + S(k, k-2), W_k + S(k, k+2))`, the first component
//!   tagged for `k - 1` and the second for `k + 1`. User `k` adds the two
//!   components tagged for it; `S(k-1, k+1)` cancels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, SymbolVector};
use crate::keys::{schedule_for_ring, KeyStore, UserKeys};
use crate::topology::RingTopology;
use crate::Rational;

/// One payload inside a broadcast, tagged with the neighbours it is meant for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub receivers: Vec<usize>,
    pub payload: SymbolVector,
}

/// A user's broadcast `X_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub sender: usize,
    pub components: Vec<Component>,
}

impl Message {
    /// Payload of the component tagged for `user`.
    pub fn component_for(&self, user: usize) -> Option<&SymbolVector> {
        self.components.iter().find(|c| c.receivers.contains(&user)).map(|c| &c.payload)
    }

    pub fn total_symbols(&self) -> usize {
        self.components.iter().map(|c| c.payload.len()).sum()
    }

    pub fn to_wire(&self) -> WireMessage {
        WireMessage {
            sender: self.sender,
            components: self
                .components
                .iter()
                .map(|c| WireComponent {
                    receivers: c.receivers.clone(),
                    len: c.payload.len(),
                    q: c.payload.spec().q(),
                    payload: c.payload.elems().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_wire(w: &WireMessage) -> Result<Self> {
        let components = w
            .components
            .iter()
            .map(|c| {
                if c.payload.len() != c.len {
                    return Err(Error::LengthMismatch { expected: c.len, found: c.payload.len() });
                }
                Ok(Component {
                    receivers: c.receivers.clone(),
                    payload: SymbolVector::new(FieldSpec::new(c.q)?, c.payload.clone())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { sender: w.sender, components })
    }

    /// Canonical single-line JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("message serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_wire(&serde_json::from_str(s)?)
    }
}

/// Wire form of a [`Message`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub sender: usize,
    pub components: Vec<WireComponent>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireComponent {
    pub receivers: Vec<usize>,
    pub len: usize,
    pub q: u32,
    pub payload: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    Encoded,
    Decoded,
}

/// One user's local protocol state. Phases only move forward.
#[derive(Clone, Debug)]
pub struct UserState {
    k: usize,
    ring: RingTopology,
    input: SymbolVector,
    keys: UserKeys,
    phase: Phase,
    sent: Option<Message>,
    output: Option<SymbolVector>,
}

impl UserState {
    pub fn new(k: usize, input: SymbolVector, keys: UserKeys, ring: RingTopology) -> Result<Self> {
        ring.neighbor_pair(k)?;
        if keys.owner() != k {
            return Err(Error::InvalidArgument(format!("keys belong to user {}, not {k}", keys.owner())));
        }
        if input.spec() != keys.spec() {
            return Err(Error::FieldMismatch { left: input.spec().q(), right: keys.spec().q() });
        }
        if input.len() != keys.symbol_len() {
            return Err(Error::LengthMismatch { expected: keys.symbol_len(), found: input.len() });
        }
        Ok(Self { k, ring, input, keys, phase: Phase::Setup, sent: None, output: None })
    }

    /// State for user `k` holding its view of `store`.
    pub fn from_store(k: usize, input: SymbolVector, store: &KeyStore, ring: RingTopology) -> Result<Self> {
        check_store(store, ring)?;
        Self::new(k, input, store.user_view(k)?, ring)
    }

    pub fn user(&self) -> usize {
        self.k
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn input(&self) -> &SymbolVector {
        &self.input
    }

    pub fn keys(&self) -> &UserKeys {
        &self.keys
    }

    pub fn sent(&self) -> Option<&Message> {
        self.sent.as_ref()
    }

    pub fn output(&self) -> Option<&SymbolVector> {
        self.output.as_ref()
    }

    fn expect_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(Error::PhaseViolation { user: self.k, expected, found: self.phase });
        }
        Ok(())
    }

    /// Setup -> Encoded.
    pub fn encode(&mut self) -> Result<Message> {
        self.expect_phase(Phase::Setup)?;
        let msg = encode_with_keys(self.k, &self.input, &self.keys, self.ring)?;
        self.sent = Some(msg.clone());
        self.phase = Phase::Encoded;
        Ok(msg)
    }

    /// Encoded -> Decoded. Returns the recovered neighbour sum.
    pub fn decode(&mut self, msg_prev: &Message, msg_next: &Message) -> Result<SymbolVector> {
        self.expect_phase(Phase::Encoded)?;
        let sum = decode_with_keys(self.k, msg_prev, msg_next, &self.keys, self.ring)?;
        self.output = Some(sum.clone());
        self.phase = Phase::Decoded;
        Ok(sum)
    }
}

fn check_store(store: &KeyStore, ring: RingTopology) -> Result<()> {
    if store.k() != ring.k() || *store.schedule() != schedule_for_ring(ring.k())? {
        return Err(Error::ScheduleMismatch { k: ring.k() });
    }
    Ok(())
}

/// Builds `X_k` from `W_k` and the full key store.
pub fn encode(k: usize, input: &SymbolVector, store: &KeyStore, ring: RingTopology) -> Result<Message> {
    check_store(store, ring)?;
    ring.neighbor_pair(k)?;
    let view = store.user_view(k)?;
    if input.spec() != store.spec() {
        return Err(Error::FieldMismatch { left: input.spec().q(), right: store.spec().q() });
    }
    if input.len() != store.symbol_len() {
        return Err(Error::LengthMismatch { expected: store.symbol_len(), found: input.len() });
    }
    encode_with_keys(k, input, &view, ring)
}

/// Builds `X_k` from `(W_k, Z_k)` only.
pub fn encode_with_keys(k: usize, input: &SymbolVector, keys: &UserKeys, ring: RingTopology) -> Result<Message> {
    let (prev, next) = ring.neighbor_pair(k)?;
    let components = match ring.k() {
        3 => {
            let payload = input.add(&keys.toward(next))?.add(&keys.toward(prev))?;
            vec![Component { receivers: vec![prev, next], payload }]
        }
        4 => {
            let payload = input.add(&keys.toward(ring.offset(k, 2)))?;
            vec![Component { receivers: vec![prev, next], payload }]
        }
        _ => vec![
            Component { receivers: vec![prev], payload: input.add(&keys.toward(ring.offset(k, -2)))? },
            Component { receivers: vec![next], payload: input.add(&keys.toward(ring.offset(k, 2)))? },
        ],
    };
    Ok(Message { sender: k, components })
}

/// Recovers `W_{k-1} + W_{k+1}` and advances `state` to `Decoded`.
pub fn decode(
    k: usize,
    msg_prev: &Message,
    msg_next: &Message,
    state: &mut UserState,
    ring: RingTopology,
) -> Result<SymbolVector> {
    if state.k != k || state.ring != ring {
        return Err(Error::InvalidArgument(format!("state belongs to user {} of K = {}", state.k, state.ring.k())));
    }
    state.decode(msg_prev, msg_next)
}

/// Stateless decoder core.
pub fn decode_with_keys(
    k: usize,
    msg_prev: &Message,
    msg_next: &Message,
    keys: &UserKeys,
    ring: RingTopology,
) -> Result<SymbolVector> {
    let (prev, next) = ring.neighbor_pair(k)?;
    for (msg, expected) in [(msg_prev, prev), (msg_next, next)] {
        if msg.sender != expected {
            return Err(Error::WrongSender { user: k, expected, found: msg.sender });
        }
    }
    let from_prev = msg_prev.component_for(k).ok_or(Error::MissingComponent { user: k, sender: prev })?;
    let from_next = msg_next.component_for(k).ok_or(Error::MissingComponent { user: k, sender: next })?;
    let mut sum = from_prev.add(from_next)?;
    if ring.k() == 3 {
        sum.add_assign(&keys.toward(prev))?;
        sum.add_assign(&keys.toward(next))?;
    }
    Ok(sum)
}

/// Symbols sent per input symbol: `total payload symbols / L`.
pub fn nominal_rate(msg: &Message, len: usize) -> Rational {
    Rational::new(msg.total_symbols() as i64, len as i64)
}

/// Ground truth `sum of W_i over i in N_k`.
pub fn neighbor_sum(ring: RingTopology, inputs: &[SymbolVector], k: usize) -> Result<SymbolVector> {
    let (prev, next) = ring.neighbor_pair(k)?;
    inputs[prev].add(&inputs[next])
}

/// Per-user recovered neighbour sums.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundOutput {
    pub sums: Vec<SymbolVector>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::{sample_keys, Pair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn sv(q: u32, e: &[u32]) -> SymbolVector {
        SymbolVector::new(FieldSpec::new(q).unwrap(), e.to_vec()).unwrap()
    }

    fn store_from(k: usize, q: u32, keys: &[((usize, usize), Vec<u32>)]) -> KeyStore {
        let spec = FieldSpec::new(q).unwrap();
        let sched = schedule_for_ring(k).unwrap();
        let material: BTreeMap<_, _> = keys
            .iter()
            .map(|((a, b), e)| (Pair::new(*a, *b).unwrap(), SymbolVector::new(spec, e.clone()).unwrap()))
            .collect();
        KeyStore::from_material(sched, spec, keys[0].1.len(), material).unwrap()
    }

    fn run(ring: RingTopology, inputs: &[SymbolVector], store: &KeyStore) -> Vec<SymbolVector> {
        let k = ring.k();
        let mut states: Vec<_> = (0..k)
            .map(|u| UserState::from_store(u, inputs[u].clone(), store, ring).unwrap())
            .collect();
        let msgs: Vec<_> = states.iter_mut().map(|s| s.encode().unwrap()).collect();
        (0..k)
            .map(|u| {
                let (p, n) = ring.neighbor_pair(u).unwrap();
                states[u].decode(&msgs[p], &msgs[n]).unwrap()
            })
            .collect()
    }

    #[test]
    fn k4_worked_example() {
        let ring = RingTopology::new(4).unwrap();
        let store = store_from(4, 2, &[((0, 2), vec![1]), ((1, 3), vec![0])]);
        let w: Vec<_> = [1, 0, 1, 1].iter().map(|&b| sv(2, &[b])).collect();
        let xs: Vec<_> = (0..4).map(|u| encode(u, &w[u], &store, ring).unwrap()).collect();
        let payloads: Vec<_> = xs.iter().map(|m| m.components[0].payload.elems()[0]).collect();
        assert_eq!(payloads, vec![0, 0, 0, 1]);
        assert!(xs.iter().all(|m| m.components.len() == 1));

        let mut st = UserState::from_store(0, w[0].clone(), &store, ring).unwrap();
        st.encode().unwrap();
        let out = decode(0, &xs[3], &xs[1], &mut st, ring).unwrap();
        assert_eq!(out.elems(), &[1]);
        assert_eq!(st.phase(), Phase::Decoded);
    }

    #[test]
    fn k5_components_follow_distance_two_keys() {
        let ring = RingTopology::new(5).unwrap();
        let q = 5;
        let store = store_from(
            5,
            q,
            &[((0, 2), vec![1]), ((0, 3), vec![2]), ((1, 3), vec![3]), ((1, 4), vec![4]), ((2, 4), vec![1])],
        );
        let w0 = sv(q, &[2]);
        let x0 = encode(0, &w0, &store, ring).unwrap();
        assert_eq!(x0.components.len(), 2);
        // toward user 4: W_0 + S(0, 3); toward user 1: W_0 + S(0, 2)
        assert_eq!(x0.components[0].receivers, vec![4]);
        assert_eq!(x0.components[0].payload.elems(), &[4]);
        assert_eq!(x0.components[1].receivers, vec![1]);
        assert_eq!(x0.components[1].payload.elems(), &[3]);
        // user 3 sends W_3 + S(3, 1) = W_3 - S(1, 3) toward user 2
        let x3 = encode(3, &sv(q, &[0]), &store, ring).unwrap();
        assert_eq!(x3.component_for(2).unwrap().elems(), &[2]);
    }

    #[test]
    fn zero_world() {
        for k in 3..9 {
            let ring = RingTopology::new(k).unwrap();
            let spec = FieldSpec::new(3).unwrap();
            let sched = schedule_for_ring(k).unwrap();
            let material = sched.pairs().map(|p| (p, SymbolVector::zeros(spec, 2).unwrap())).collect();
            let store = KeyStore::from_material(sched, spec, 2, material).unwrap();
            let w = vec![SymbolVector::zeros(spec, 2).unwrap(); k];
            for u in 0..k {
                let m = encode(u, &w[u], &store, ring).unwrap();
                assert!(m.components.iter().all(|c| c.payload.is_zero()));
            }
            assert!(run(ring, &w, &store).iter().all(|s| s.is_zero()));
        }
    }

    #[test]
    fn rates() {
        let spec = FieldSpec::binary();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, len, expected) in [(5usize, 1usize, 2i64), (4, 1, 1), (3, 1, 1), (6, 4, 2), (8, 3, 2)] {
            let ring = RingTopology::new(k).unwrap();
            let store = sample_keys(&schedule_for_ring(k).unwrap(), len, spec, &mut rng).unwrap();
            let w = SymbolVector::sample_uniform(len, spec, &mut rng).unwrap();
            let m = encode(0, &w, &store, ring).unwrap();
            assert_eq!(nominal_rate(&m, len), Rational::from_integer(expected), "K={k}");
        }
    }

    #[test]
    fn phase_and_sender_errors() {
        let ring = RingTopology::new(5).unwrap();
        let spec = FieldSpec::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let store = sample_keys(&schedule_for_ring(5).unwrap(), 1, spec, &mut rng).unwrap();
        let w: Vec<_> = (0..5).map(|_| SymbolVector::sample_uniform(1, spec, &mut rng).unwrap()).collect();
        let msgs: Vec<_> = (0..5).map(|u| encode(u, &w[u], &store, ring).unwrap()).collect();

        let mut st = UserState::from_store(0, w[0].clone(), &store, ring).unwrap();
        assert!(matches!(st.decode(&msgs[4], &msgs[1]), Err(Error::PhaseViolation { .. })));
        st.encode().unwrap();
        assert!(matches!(st.encode(), Err(Error::PhaseViolation { .. })));
        assert!(matches!(st.decode(&msgs[1], &msgs[4]), Err(Error::WrongSender { .. })));
        let mut stripped = msgs[4].clone();
        stripped.components.retain(|c| !c.receivers.contains(&0));
        assert!(matches!(st.decode(&stripped, &msgs[1]), Err(Error::MissingComponent { .. })));
        // failed decodes leave the phase untouched
        assert_eq!(st.phase(), Phase::Encoded);
        st.decode(&msgs[4], &msgs[1]).unwrap();
        assert!(matches!(st.decode(&msgs[4], &msgs[1]), Err(Error::PhaseViolation { .. })));
    }

    #[test]
    fn rejects_foreign_schedule() {
        let ring = RingTopology::new(5).unwrap();
        let spec = FieldSpec::binary();
        let store = sample_keys(
            &crate::keys::KeySchedule::complete(5),
            1,
            spec,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let w = SymbolVector::zeros(spec, 1).unwrap();
        assert!(matches!(encode(0, &w, &store, ring), Err(Error::ScheduleMismatch { .. })));
        let ring6 = RingTopology::new(6).unwrap();
        let store5 = sample_keys(&schedule_for_ring(5).unwrap(), 1, spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(encode(0, &w, &store5, ring6), Err(Error::ScheduleMismatch { .. })));
    }

    #[test]
    fn wire_roundtrip() {
        let ring = RingTopology::new(6).unwrap();
        let spec = FieldSpec::new(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let store = sample_keys(&schedule_for_ring(6).unwrap(), 3, spec, &mut rng).unwrap();
        let w = SymbolVector::sample_uniform(3, spec, &mut rng).unwrap();
        let m = encode(2, &w, &store, ring).unwrap();
        let json = m.to_json();
        assert!(json.starts_with(r#"{"sender":2,"components":[{"receivers":[1],"len":3,"q":7,"payload":["#));
        assert_eq!(Message::from_json(&json).unwrap(), m);
        assert!(Message::from_json(r#"{"sender":0,"components":[{"receivers":[1],"len":2,"q":7,"payload":[1]}]}"#).is_err());
    }

    #[test]
    fn encoder_is_deterministic() {
        let ring = RingTopology::new(7).unwrap();
        let spec = FieldSpec::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let store = sample_keys(&schedule_for_ring(7).unwrap(), 4, spec, &mut rng).unwrap();
        let w = SymbolVector::sample_uniform(4, spec, &mut rng).unwrap();
        let view = store.user_view(3).unwrap();
        assert_eq!(
            encode_with_keys(3, &w, &view, ring).unwrap(),
            encode_with_keys(3, &w, &view.clone(), ring).unwrap()
        );
    }
}
