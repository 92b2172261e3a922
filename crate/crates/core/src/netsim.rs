//! Deterministic single-round simulator for neighbourhood broadcast on a ring.
//!
//! Every user encodes, each broadcast is delivered to both neighbours over an
//! error-free channel, and every user decodes. Deliveries are logged in
//! ascending sender order, then receiver, then component index.
//!
//! A transcript is serialized as newline-delimited JSON: one header record
//! followed by one record per delivery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, SymbolVector};
use crate::keys::{KeyStore, Pair};
use crate::protocol::{encode_with_keys, Component, Message, RoundOutput, UserState};
use crate::topology::{RingTopology, Topology};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundMeta {
    pub round: u64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub round: u64,
    pub k: usize,
    pub q: u32,
    pub len: usize,
    pub schedule: Vec<Pair>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub sender: usize,
    pub receiver: usize,
    /// Position of the component inside the sender's message.
    pub component: usize,
    /// Receivers the component is tagged for.
    pub tag: Vec<usize>,
    pub payload: Vec<u32>,
    pub symbols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header(TranscriptHeader),
    Delivery(Delivery),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub events: Vec<Delivery>,
}

impl Transcript {
    /// Symbols sent by each user. A broadcast is counted once no matter how
    /// many neighbours receive it.
    pub fn symbols_per_sender(&self) -> Vec<usize> {
        let mut totals = vec![0; self.header.k];
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.events {
            if e.sender < totals.len() && seen.insert((e.sender, e.component)) {
                totals[e.sender] += e.symbols;
            }
        }
        totals
    }

    /// `(sender, receiver)` pairs that carried at least one delivery.
    pub fn links(&self) -> std::collections::BTreeSet<(usize, usize)> {
        self.events.iter().map(|e| (e.sender, e.receiver)).collect()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = serde_json::to_string(&Record::Header(self.header.clone())).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(&Record::Delivery(e.clone())).expect("delivery serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = match lines.next() {
            Some(l) => match serde_json::from_str(l)? {
                Record::Header(h) => h,
                Record::Delivery(_) => return Err(Error::Transcript("first record is not a header".into())),
            },
            None => return Err(Error::Transcript("empty transcript".into())),
        };
        let mut events = Vec::new();
        for l in lines {
            match serde_json::from_str(l)? {
                Record::Delivery(d) => events.push(d),
                Record::Header(_) => return Err(Error::Transcript("duplicate header record".into())),
            }
        }
        Ok(Self { header, events })
    }

    /// Rebuilds every sender's message, checking that each neighbour got the
    /// same complete broadcast and that nothing went anywhere else.
    pub fn messages(&self) -> Result<Vec<Message>> {
        let h = &self.header;
        if self.events.is_empty() {
            return Err(Error::Transcript("no deliveries".into()));
        }
        let ring = RingTopology::new(h.k)?;
        let spec = FieldSpec::new(h.q)?;
        let expected_links: std::collections::BTreeSet<_> =
            (0..h.k).flat_map(|s| ring.neighbors(s).unwrap().into_iter().map(move |r| (s, r))).collect();
        let links = self.links();
        if links != expected_links {
            let missing: Vec<_> = expected_links.difference(&links).collect();
            let extra: Vec<_> = links.difference(&expected_links).collect();
            return Err(Error::Transcript(format!("delivery links differ: missing {missing:?}, unexpected {extra:?}")));
        }
        let mut msgs = Vec::with_capacity(h.k);
        for sender in 0..h.k {
            let mut per_receiver: Vec<Vec<&Delivery>> = Vec::new();
            for r in ring.neighbors(sender)? {
                let mut evs: Vec<_> = self.events.iter().filter(|e| e.sender == sender && e.receiver == r).collect();
                evs.sort_by_key(|e| e.component);
                per_receiver.push(evs);
            }
            let first = &per_receiver[0];
            for evs in &per_receiver[1..] {
                let same = evs.len() == first.len()
                    && evs.iter().zip(first).all(|(a, b)| a.component == b.component && a.tag == b.tag && a.payload == b.payload);
                if !same {
                    return Err(Error::Transcript(format!("user {sender}'s broadcast differs between receivers")));
                }
            }
            let mut components = Vec::with_capacity(first.len());
            for (i, e) in first.iter().enumerate() {
                if e.component != i {
                    return Err(Error::Transcript(format!("user {sender}: component {i} missing")));
                }
                if e.payload.len() != h.len || e.symbols != e.payload.len() {
                    return Err(Error::Transcript(format!("user {sender}: component {i} has a bad length")));
                }
                components.push(Component { receivers: e.tag.clone(), payload: SymbolVector::new(spec, e.payload.clone())? });
            }
            msgs.push(Message { sender, components });
        }
        Ok(msgs)
    }

    /// Recovers every user's input from the logged broadcasts and the key
    /// store. Possible because whoever holds all keys can unmask any
    /// component.
    pub fn unmask_inputs(&self, store: &KeyStore) -> Result<Vec<SymbolVector>> {
        check_header(&self.header, store)?;
        let ring = RingTopology::new(self.header.k)?;
        let msgs = self.messages()?;
        let zero = SymbolVector::zeros(store.spec(), store.symbol_len())?;
        (0..ring.k())
            .map(|k| {
                let mask = encode_with_keys(k, &zero, &store.user_view(k)?, ring)?;
                let next = ring.next(k);
                let sent = msgs[k].component_for(next).ok_or(Error::MissingComponent { user: next, sender: k })?;
                let mask = mask.component_for(next).expect("encoder tags every neighbour");
                sent.sub(mask)
            })
            .collect()
    }
}

fn check_header(h: &TranscriptHeader, store: &KeyStore) -> Result<()> {
    let sched: Vec<Pair> = store.schedule().pairs().collect();
    if h.k != store.k() || h.q != store.spec().q() || h.len != store.symbol_len() || h.schedule != sched {
        return Err(Error::Transcript("header does not match the key store".into()));
    }
    Ok(())
}

fn check_inputs(ring: RingTopology, inputs: &[SymbolVector], store: &KeyStore) -> Result<()> {
    if inputs.len() != ring.k() {
        return Err(Error::LengthMismatch { expected: ring.k(), found: inputs.len() });
    }
    for w in inputs {
        if w.spec() != store.spec() {
            return Err(Error::FieldMismatch { left: store.spec().q(), right: w.spec().q() });
        }
        if w.len() != store.symbol_len() {
            return Err(Error::LengthMismatch { expected: store.symbol_len(), found: w.len() });
        }
    }
    Ok(())
}

pub fn run_round(ring: RingTopology, inputs: &[SymbolVector], store: &KeyStore) -> Result<(RoundOutput, Transcript)> {
    run_round_with(RoundMeta::default(), ring, inputs, store)
}

/// Runs one full round and logs every delivery.
pub fn run_round_with(
    meta: RoundMeta,
    ring: RingTopology,
    inputs: &[SymbolVector],
    store: &KeyStore,
) -> Result<(RoundOutput, Transcript)> {
    check_inputs(ring, inputs, store)?;
    let k = ring.k();
    let mut states = (0..k)
        .map(|u| UserState::from_store(u, inputs[u].clone(), store, ring))
        .collect::<Result<Vec<_>>>()?;
    let msgs = states.iter_mut().map(|s| s.encode()).collect::<Result<Vec<_>>>()?;

    let mut events = Vec::new();
    for msg in &msgs {
        for r in ring.neighbors(msg.sender)? {
            for (i, c) in msg.components.iter().enumerate() {
                events.push(Delivery {
                    sender: msg.sender,
                    receiver: r,
                    component: i,
                    tag: c.receivers.clone(),
                    payload: c.payload.elems().to_vec(),
                    symbols: c.payload.len(),
                });
            }
        }
    }

    let sums = decode_all(ring, &mut states, &msgs)?;
    let header = TranscriptHeader {
        round: meta.round,
        k,
        q: store.spec().q(),
        len: store.symbol_len(),
        schedule: store.schedule().pairs().collect(),
        seed: meta.seed,
    };
    Ok((RoundOutput { sums }, Transcript { header, events }))
}

fn decode_all(ring: RingTopology, states: &mut [UserState], msgs: &[Message]) -> Result<Vec<SymbolVector>> {
    (0..ring.k())
        .map(|u| {
            let (p, n) = ring.neighbor_pair(u)?;
            states[u]
                .decode(&msgs[p], &msgs[n])
                .map_err(|e| Error::RoundFailed { user: u, reason: e.to_string() })
        })
        .collect()
}

/// Decodes every user from the logged broadcasts. Each user re-encodes its own
/// message and compares it with the log, so a tampered payload is reported
/// as an integrity failure naming the sender.
pub fn replay(transcript: &Transcript, store: &KeyStore, inputs: &[SymbolVector]) -> Result<RoundOutput> {
    check_header(&transcript.header, store)?;
    let ring = RingTopology::new(transcript.header.k)?;
    check_inputs(ring, inputs, store)?;
    let msgs = transcript.messages()?;
    let mut states = (0..ring.k())
        .map(|u| UserState::from_store(u, inputs[u].clone(), store, ring))
        .collect::<Result<Vec<_>>>()?;
    for (u, st) in states.iter_mut().enumerate() {
        if st.encode()? != msgs[u] {
            return Err(Error::Transcript(format!("integrity check failed: user {u}'s logged broadcast does not match its encoder")));
        }
    }
    let sums = decode_all(ring, &mut states, &msgs)?;
    Ok(RoundOutput { sums })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::{sample_keys, schedule_for_ring};
    use crate::protocol::{neighbor_sum, nominal_rate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(k: usize, q: u32, len: usize, seed: u64) -> (RingTopology, KeyStore, Vec<SymbolVector>) {
        let ring = RingTopology::new(k).unwrap();
        let spec = FieldSpec::new(q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = sample_keys(&schedule_for_ring(k).unwrap(), len, spec, &mut rng).unwrap();
        let w = (0..k).map(|_| SymbolVector::sample_uniform(len, spec, &mut rng).unwrap()).collect();
        (ring, store, w)
    }

    #[test]
    fn k5_binary_example() {
        let (ring, store, _) = setup(5, 2, 1, 7);
        let spec = FieldSpec::binary();
        let w: Vec<_> = [1, 0, 1, 1, 0].iter().map(|&b| SymbolVector::new(spec, vec![b]).unwrap()).collect();
        let (out, tr) = run_round(ring, &w, &store).unwrap();
        let got: Vec<u32> = out.sums.iter().map(|s| s.elems()[0]).collect();
        assert_eq!(got, vec![0, 0, 1, 1, 0]);
        assert!(tr.symbols_per_sender().iter().all(|&s| s == 2));
    }

    #[test]
    fn all_zero_inputs() {
        let (ring, store, w) = setup(6, 3, 2, 1);
        let zeros = vec![SymbolVector::zeros(store.spec(), 2).unwrap(); 6];
        let (out, _) = run_round(ring, &zeros, &store).unwrap();
        assert!(out.sums.iter().all(|s| s.is_zero()));
        assert_eq!(w.len(), 6);
    }

    #[test]
    fn topology_accounting_and_truth() {
        for k in 3..10 {
            for len in [1, 3] {
                let (ring, store, w) = setup(k, 5, len, k as u64 * 31 + len as u64);
                let (out, tr) = run_round(ring, &w, &store).unwrap();
                for u in 0..k {
                    assert_eq!(out.sums[u], neighbor_sum(ring, &w, u).unwrap());
                }
                let expected: std::collections::BTreeSet<_> =
                    (0..k).flat_map(|s| ring.neighbors(s).unwrap().into_iter().map(move |r| (s, r))).collect();
                assert_eq!(tr.links(), expected);
                let msgs = tr.messages().unwrap();
                for (u, total) in tr.symbols_per_sender().into_iter().enumerate() {
                    assert_eq!(crate::Rational::new(total as i64, len as i64), nominal_rate(&msgs[u], len));
                    assert_eq!(total, if k >= 5 { 2 * len } else { len });
                }
                assert!(tr.events.windows(2).all(|p| p[0].sender <= p[1].sender));
            }
        }
    }

    #[test]
    fn transcripts_are_deterministic_and_replayable() {
        let (ring, store, w) = setup(7, 3, 2, 42);
        let meta = RoundMeta { round: 3, seed: Some(42) };
        let (out, tr) = run_round_with(meta, ring, &w, &store).unwrap();
        let (_, tr2) = run_round_with(meta, ring, &w, &store).unwrap();
        assert_eq!(tr.to_ndjson(), tr2.to_ndjson());

        let parsed = Transcript::from_ndjson(&tr.to_ndjson()).unwrap();
        assert_eq!(parsed, tr);
        let store2 = KeyStore::from_json(&store.to_json()).unwrap();
        assert_eq!(replay(&parsed, &store2, &w).unwrap(), out);
        // replay from the transcript and key dump alone
        let recovered = parsed.unmask_inputs(&store2).unwrap();
        assert_eq!(recovered, w);
        assert_eq!(replay(&parsed, &store2, &recovered).unwrap(), out);
    }

    #[test]
    fn tampering_is_detected() {
        let (ring, store, w) = setup(5, 2, 1, 9);
        let (out, tr) = run_round(ring, &w, &store).unwrap();
        for idx in 0..tr.events.len() {
            let mut bad = tr.clone();
            bad.events[idx].payload[0] ^= 1;
            match replay(&bad, &store, &w) {
                Ok(o) => assert_ne!(o, out),
                Err(Error::Transcript(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        let mut truncated = tr.clone();
        truncated.events.pop();
        assert!(replay(&truncated, &store, &w).is_err());
        let empty = Transcript { header: tr.header.clone(), events: vec![] };
        assert!(matches!(replay(&empty, &store, &w), Err(Error::Transcript(_))));
        assert!(Transcript::from_ndjson("").is_err());
    }

    #[test]
    fn size_mismatches() {
        let (ring, store, w) = setup(5, 2, 1, 9);
        assert!(run_round(ring, &w[..4], &store).is_err());
        let ring6 = RingTopology::new(6).unwrap();
        let mut w6 = w.clone();
        w6.push(w[0].clone());
        assert!(run_round(ring6, &w6, &store).is_err());
    }
}
