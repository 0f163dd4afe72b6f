//! Master/worker round protocol.
//!
//! Each round the master broadcasts the truncated iterate as `(index, value)`
//! pairs; every worker densifies it, evaluates its local gradient and answers
//! with the gradient restricted to the broadcast support, values only, aligned
//! positionally with the broadcast indices.
//!
//! Wire format, all multi-byte fields little-endian:
//!
//! ```text
//! "TWT1" | version 0x01 | type (0x01 broadcast, 0x02 gradient) | round u32
//! broadcast: count u32 | count × u32 index | count × f64 value
//! gradient:  worker_id u32 | len u32 | len × f64 value
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Shard;
use crate::sparse::{DenseVector, SupportSet};

pub const MAGIC: [u8; 4] = *b"TWT1";
pub const VERSION: u8 = 0x01;
pub const TYPE_BROADCAST: u8 = 0x01;
pub const TYPE_GRADIENT: u8 = 0x02;

/// Bytes needed to identify a frame: magic, version, type.
pub const PREFIX_LEN: usize = 6;
pub const BROADCAST_HEADER_LEN: usize = 14;
pub const GRADIENT_HEADER_LEN: usize = 18;

#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastMsg {
    pub round: u32,
    /// Strictly increasing support indices.
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientMsg {
    pub round: u32,
    pub worker_id: u32,
    /// Aligned with the indices of the same round's broadcast.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Broadcast(BroadcastMsg),
    Gradient(GradientMsg),
}

impl BroadcastMsg {
    /// Broadcast of `theta` restricted to `support`.
    pub fn from_support(round: u32, theta: &DenseVector, support: &SupportSet) -> Result<Self> {
        crate::error::check_dim(support.ambient_dim(), theta.dim())?;
        let indices = support
            .indices()
            .iter()
            .map(|&i| u32::try_from(i).map_err(|_| Error::protocol("index exceeds u32")))
            .collect::<Result<Vec<_>>>()?;
        let values = support.indices().iter().map(|&i| theta[i]).collect();
        Ok(BroadcastMsg { round, indices, values })
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(Error::protocol(format!(
                "broadcast has {} indices but {} values",
                self.indices.len(),
                self.values.len()
            )));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::protocol("broadcast indices are not strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        BROADCAST_HEADER_LEN + 12 * self.indices.len()
    }
}

impl GradientMsg {
    pub fn frame_len(&self) -> usize {
        GRADIENT_HEADER_LEN + 8 * self.values.len()
    }
}

impl Message {
    pub fn round(&self) -> u32 {
        match self {
            Message::Broadcast(b) => b.round,
            Message::Gradient(g) => g.round,
        }
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::protocol("message too long for a u32 length field"))
}

pub fn encode(msg: &Message) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    match msg {
        Message::Broadcast(b) => {
            b.validate()?;
            out.reserve(b.frame_len() - PREFIX_LEN);
            out.push(TYPE_BROADCAST);
            out.extend_from_slice(&b.round.to_le_bytes());
            out.extend_from_slice(&len_u32(b.indices.len())?.to_le_bytes());
            for i in &b.indices {
                out.extend_from_slice(&i.to_le_bytes());
            }
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Message::Gradient(g) => {
            out.reserve(g.frame_len() - PREFIX_LEN);
            out.push(TYPE_GRADIENT);
            out.extend_from_slice(&g.round.to_le_bytes());
            out.extend_from_slice(&g.worker_id.to_le_bytes());
            out.extend_from_slice(&len_u32(g.values.len())?.to_le_bytes());
            for v in &g.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(Error::Decode {
                offset: self.buf.len(),
                reason: "truncated frame",
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take::<8>()?))
    }
}

/// Validates the six-byte prefix and returns the full header length.
pub fn header_len(prefix: &[u8]) -> Result<usize> {
    for (i, want) in MAGIC.iter().enumerate() {
        match prefix.get(i) {
            None => {
                return Err(Error::Decode {
                    offset: prefix.len(),
                    reason: "truncated frame",
                })
            }
            Some(b) if b != want => {
                return Err(Error::Decode {
                    offset: i,
                    reason: "bad magic",
                })
            }
            Some(_) => {}
        }
    }
    match prefix.get(4) {
        None => {
            return Err(Error::Decode {
                offset: prefix.len(),
                reason: "truncated frame",
            })
        }
        Some(&VERSION) => {}
        Some(_) => {
            return Err(Error::Decode {
                offset: 4,
                reason: "unsupported version",
            })
        }
    }
    match prefix.get(5) {
        None => Err(Error::Decode {
            offset: prefix.len(),
            reason: "truncated frame",
        }),
        Some(&TYPE_BROADCAST) => Ok(BROADCAST_HEADER_LEN),
        Some(&TYPE_GRADIENT) => Ok(GRADIENT_HEADER_LEN),
        Some(_) => Err(Error::Decode {
            offset: 5,
            reason: "unknown message type",
        }),
    }
}

/// Total frame length implied by a complete header.
pub fn frame_len(header: &[u8]) -> Result<usize> {
    let hlen = header_len(header)?;
    if header.len() < hlen {
        return Err(Error::Decode {
            offset: header.len(),
            reason: "truncated frame",
        });
    }
    let count = u32::from_le_bytes([header[hlen - 4], header[hlen - 3], header[hlen - 2], header[hlen - 1]]) as usize;
    let per_item = if hlen == BROADCAST_HEADER_LEN { 12 } else { 8 };
    Ok(hlen + per_item * count)
}

pub fn decode(buf: &[u8]) -> Result<Message> {
    header_len(buf)?;
    let mut r = Reader { buf, pos: PREFIX_LEN };
    let msg = match buf[5] {
        TYPE_BROADCAST => {
            let round = r.u32()?;
            let count = r.u32()? as usize;
            if buf.len() < BROADCAST_HEADER_LEN + 12 * count {
                return Err(Error::Decode {
                    offset: buf.len(),
                    reason: "truncated frame",
                });
            }
            let mut indices = Vec::with_capacity(count);
            for k in 0..count {
                let at = r.pos;
                let idx = r.u32()?;
                if k > 0 && indices[k - 1] >= idx {
                    return Err(Error::Decode {
                        offset: at,
                        reason: "indices not strictly increasing",
                    });
                }
                indices.push(idx);
            }
            let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            Message::Broadcast(BroadcastMsg { round, indices, values })
        }
        _ => {
            let round = r.u32()?;
            let worker_id = r.u32()?;
            let len = r.u32()? as usize;
            if buf.len() < GRADIENT_HEADER_LEN + 8 * len {
                return Err(Error::Decode {
                    offset: buf.len(),
                    reason: "truncated frame",
                });
            }
            let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            Message::Gradient(GradientMsg {
                round,
                worker_id,
                values,
            })
        }
    };
    if r.pos != buf.len() {
        return Err(Error::Decode {
            offset: r.pos,
            reason: "trailing bytes after frame",
        });
    }
    Ok(msg)
}

/// A worker's reply: its local gradient at the broadcast iterate, restricted to
/// the broadcast support.
pub fn worker_step(shard: &Shard, msg: &BroadcastMsg, worker_id: u32) -> Result<GradientMsg> {
    msg.validate()?;
    let d = shard.dim();
    if let Some(&last) = msg.indices.last() {
        if last as usize >= d {
            return Err(Error::protocol(format!(
                "broadcast index {last} out of range for local dimension {d}"
            )));
        }
    }
    let mut theta = alloc::vec![0.0; d];
    for (&i, &v) in msg.indices.iter().zip(&msg.values) {
        theta[i as usize] = v;
    }
    let margins = shard.margins(&theta);
    let mut grad = alloc::vec![0.0; d];
    shard.gradient_from_margins(&margins, &mut grad);
    Ok(GradientMsg {
        round: msg.round,
        worker_id,
        values: msg.indices.iter().map(|&i| grad[i as usize]).collect(),
    })
}

/// Communication of one round, summed over workers.
///
/// Every transmitted index or value counts as one scalar, per worker (unicast).
/// A dense round sends `d` values each way with implicit indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerEntry {
    pub round: u32,
    pub downstream_scalars: u64,
    pub upstream_scalars: u64,
    pub downstream_msgs: u64,
    pub upstream_msgs: u64,
    pub downstream_bytes: u64,
    pub upstream_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommLedger {
    entries: Vec<LedgerEntry>,
}

impl CommLedger {
    pub fn record(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Cumulative totals through the last recorded round.
    pub fn totals(&self) -> LedgerEntry {
        self.entries.iter().fold(LedgerEntry::default(), |acc, e| LedgerEntry {
            round: e.round,
            downstream_scalars: acc.downstream_scalars + e.downstream_scalars,
            upstream_scalars: acc.upstream_scalars + e.upstream_scalars,
            downstream_msgs: acc.downstream_msgs + e.downstream_msgs,
            upstream_msgs: acc.upstream_msgs + e.upstream_msgs,
            downstream_bytes: acc.downstream_bytes + e.downstream_bytes,
            upstream_bytes: acc.upstream_bytes + e.upstream_bytes,
        })
    }
}

/// The byte channel between the master and its `m − 1` workers.
pub trait Transport {
    fn worker_count(&self) -> usize;

    /// Sends `broadcast` to every worker and returns one reply per worker, in
    /// any order.
    fn exchange(&mut self, broadcast: &BroadcastMsg) -> Result<Vec<GradientMsg>>;
}

/// Workers living in the same process. Messages still go through
/// [`encode`]/[`decode`] so the arithmetic matches a socket transport exactly.
pub struct InProcess<'a> {
    workers: &'a [Shard],
}

impl<'a> InProcess<'a> {
    /// `workers[i]` is machine `i + 1`.
    pub fn new(workers: &'a [Shard]) -> Self {
        InProcess { workers }
    }
}

impl Transport for InProcess<'_> {
    fn worker_count(&self) -> usize {
        self.workers.len()
    }

    fn exchange(&mut self, broadcast: &BroadcastMsg) -> Result<Vec<GradientMsg>> {
        let frame = encode(&Message::Broadcast(broadcast.clone()))?;
        let mut replies = Vec::with_capacity(self.workers.len());
        for (i, shard) in self.workers.iter().enumerate() {
            let Message::Broadcast(received) = decode(&frame)? else {
                return Err(Error::protocol("worker expected a broadcast"));
            };
            let reply = worker_step(shard, &received, i as u32 + 1)?;
            match decode(&encode(&Message::Gradient(reply))?)? {
                Message::Gradient(g) => replies.push(g),
                Message::Broadcast(_) => return Err(Error::protocol("master expected a gradient")),
            }
        }
        Ok(replies)
    }
}

/// Runs one gather barrier: broadcast, collect exactly one reply per worker,
/// and account for the traffic.
///
/// Replies are returned sorted by worker id. `dense` selects the dense scalar
/// accounting (`d` each way per worker).
pub fn gather_round(
    transport: &mut dyn Transport,
    broadcast: &BroadcastMsg,
    m: usize,
    d: usize,
    dense: bool,
) -> Result<(Vec<GradientMsg>, LedgerEntry)> {
    broadcast.validate()?;
    let workers = m.checked_sub(1).ok_or_else(|| Error::config("m must be at least 1"))?;
    if transport.worker_count() != workers {
        return Err(Error::protocol(format!(
            "expected {workers} registered workers, transport has {}",
            transport.worker_count()
        )));
    }
    if workers == 0 {
        return Ok((
            Vec::new(),
            LedgerEntry {
                round: broadcast.round,
                ..LedgerEntry::default()
            },
        ));
    }

    let replies = transport.exchange(broadcast)?;
    let mut by_worker: BTreeMap<u32, GradientMsg> = BTreeMap::new();
    for reply in replies {
        if reply.round != broadcast.round {
            return Err(Error::protocol(format!(
                "worker {} answered round {} during round {}",
                reply.worker_id, reply.round, broadcast.round
            )));
        }
        if reply.worker_id == 0 || reply.worker_id as usize > workers {
            return Err(Error::protocol(format!("unknown worker id {}", reply.worker_id)));
        }
        if reply.values.len() != broadcast.len() {
            return Err(Error::protocol(format!(
                "worker {} sent {} values for a support of size {}",
                reply.worker_id,
                reply.values.len(),
                broadcast.len()
            )));
        }
        let id = reply.worker_id;
        if by_worker.insert(id, reply).is_some() {
            return Err(Error::protocol(format!(
                "duplicate reply from worker {id} in round {}",
                broadcast.round
            )));
        }
    }
    let missing: Vec<u32> = (1..=workers as u32).filter(|id| !by_worker.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::protocol(format!(
            "round {}: no reply from workers {missing:?}",
            broadcast.round
        )));
    }

    let w = workers as u64;
    let s = broadcast.len() as u64;
    let (down, up) = if dense { (d as u64, d as u64) } else { (2 * s, s) };
    let replies: Vec<GradientMsg> = by_worker.into_values().collect();
    let entry = LedgerEntry {
        round: broadcast.round,
        downstream_scalars: w * down,
        upstream_scalars: w * up,
        downstream_msgs: w,
        upstream_msgs: w,
        downstream_bytes: w * broadcast.frame_len() as u64,
        upstream_bytes: replies.iter().map(|r| r.frame_len() as u64).sum(),
    };
    Ok((replies, entry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{loss_gradient, LossKind};
    use alloc::vec;
    use proptest::prelude::*;

    fn bmsg(round: u32, indices: Vec<u32>, values: Vec<f64>) -> BroadcastMsg {
        BroadcastMsg { round, indices, values }
    }

    #[test]
    fn broadcast_byte_example() {
        let frame = encode(&Message::Broadcast(bmsg(0, vec![2], vec![1.0]))).unwrap();
        let want: [u8; 26] = [
            0x54, 0x57, 0x54, 0x31, 0x01, 0x01, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00,
            0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F,
        ];
        assert_eq!(frame, want);
        assert_eq!(frame_len(&frame[..BROADCAST_HEADER_LEN]).unwrap(), 26);
    }

    #[test]
    fn gradient_layout() {
        let g = GradientMsg {
            round: 3,
            worker_id: 7,
            values: vec![-2.0],
        };
        let frame = encode(&Message::Gradient(g.clone())).unwrap();
        assert_eq!(&frame[..6], &[0x54, 0x57, 0x54, 0x31, 0x01, 0x02]);
        assert_eq!(&frame[6..18], &[3, 0, 0, 0, 7, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&frame[18..], &(-2.0f64).to_le_bytes());
        assert_eq!(frame.len(), g.frame_len());
        assert_eq!(decode(&frame).unwrap(), Message::Gradient(g));
    }

    #[test]
    fn decode_errors_name_offsets() {
        let frame = encode(&Message::Broadcast(bmsg(0, vec![2, 5], vec![1.0, 2.0]))).unwrap();
        let mut bad = frame.clone();
        bad[0] ^= 0xFF;
        assert_eq!(
            decode(&bad),
            Err(Error::Decode {
                offset: 0,
                reason: "bad magic"
            })
        );
        let mut bad = frame.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::Decode { offset: 4, .. })));
        let mut bad = frame.clone();
        bad[5] = 9;
        assert!(matches!(decode(&bad), Err(Error::Decode { offset: 5, .. })));
        assert!(matches!(
            decode(&frame[..frame.len() - 1]),
            Err(Error::Decode { offset, .. }) if offset == frame.len() - 1
        ));
        let mut bad = frame.clone();
        bad.push(0);
        assert!(matches!(decode(&bad), Err(Error::Decode { offset, .. }) if offset == frame.len()));
        // Second index equal to the first.
        let mut bad = frame;
        bad[18..22].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(Error::Decode { offset: 18, .. })));
    }

    #[test]
    fn encode_rejects_malformed_broadcast() {
        assert!(encode(&Message::Broadcast(bmsg(0, vec![3, 1], vec![1.0, 1.0]))).is_err());
        assert!(encode(&Message::Broadcast(bmsg(0, vec![1], vec![]))).is_err());
    }

    #[test]
    fn worker_step_examples() {
        let shard = Shard::new(3, vec![1.0, 2.0, 0.0], vec![1.0], LossKind::Squared).unwrap();
        let reply = worker_step(&shard, &bmsg(4, vec![0, 1], vec![0.0, 0.0]), 2).unwrap();
        assert_eq!(reply.values, vec![-1.0, -2.0]);
        assert_eq!((reply.round, reply.worker_id), (4, 2));
        let g = loss_gradient(&shard, &DenseVector::zeros(3)).unwrap();
        assert_eq!(&g[..2], &reply.values[..]);

        let empty = worker_step(&shard, &bmsg(0, vec![], vec![]), 1).unwrap();
        assert!(empty.values.is_empty());

        // θ* = [1, 0, 0] fits y exactly: zero slice.
        let exact = worker_step(&shard, &bmsg(0, vec![0], vec![1.0]), 1).unwrap();
        assert_eq!(exact.values, vec![0.0]);

        assert!(matches!(
            worker_step(&shard, &bmsg(0, vec![3], vec![1.0]), 1),
            Err(Error::Protocol(_))
        ));
    }

    fn shards(m: usize, d: usize) -> Vec<Shard> {
        (0..m)
            .map(|j| {
                let rows: Vec<f64> = (0..4 * d).map(|i| ((i * 31 + j * 7) % 11) as f64 - 5.0).collect();
                Shard::new(d, rows, vec![1.0, -1.0, 2.0, 0.5], LossKind::Squared).unwrap()
            })
            .collect()
    }

    #[test]
    fn gather_counts_match_closed_form() {
        let d = 20_000;
        let workers = shards(1, d);
        let mut transport = InProcess::new(&workers);
        let indices: Vec<u32> = (0..20).map(|i| i * 997).collect();
        let b = bmsg(0, indices, vec![0.5; 20]);
        let (replies, sparse) = gather_round(&mut transport, &b, 2, d, false).unwrap();
        assert_eq!(replies.len(), 1);
        assert_eq!(sparse.upstream_scalars, 20);
        assert_eq!(sparse.downstream_scalars, 40);
        assert_eq!(sparse.downstream_bytes, 14 + 12 * 20);
        assert_eq!(sparse.upstream_bytes, 18 + 8 * 20);

        let full = SupportSet::full(d);
        let theta = DenseVector::zeros(d);
        let dense_b = BroadcastMsg::from_support(0, &theta, &full).unwrap();
        let (_, dense) = gather_round(&mut transport, &dense_b, 2, d, true).unwrap();
        assert_eq!(dense.upstream_scalars, 20_000);
        assert_eq!(dense.downstream_scalars, 20_000);
        assert_eq!(sparse.upstream_scalars * d as u64, dense.upstream_scalars * 20);
    }

    #[test]
    fn gather_without_workers_is_free() {
        let mut transport = InProcess::new(&[]);
        let (replies, entry) = gather_round(&mut transport, &bmsg(5, vec![1], vec![1.0]), 1, 10, false).unwrap();
        assert!(replies.is_empty());
        assert_eq!(
            entry,
            LedgerEntry {
                round: 5,
                ..LedgerEntry::default()
            }
        );
    }

    struct Scripted(Vec<GradientMsg>, usize);

    impl Transport for Scripted {
        fn worker_count(&self) -> usize {
            self.1
        }
        fn exchange(&mut self, _: &BroadcastMsg) -> Result<Vec<GradientMsg>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn gather_rejects_bad_replies() {
        let b = bmsg(1, vec![0, 1], vec![1.0, 1.0]);
        let g = |worker_id, round, n| GradientMsg {
            round,
            worker_id,
            values: vec![0.0; n],
        };
        let cases = [
            Scripted(vec![g(1, 1, 2), g(1, 1, 2)], 2),
            Scripted(vec![g(1, 1, 2)], 2),
            Scripted(vec![g(1, 0, 2), g(2, 1, 2)], 2),
            Scripted(vec![g(1, 1, 3), g(2, 1, 2)], 2),
            Scripted(vec![g(1, 1, 2), g(3, 1, 2)], 2),
        ];
        for mut t in cases {
            assert!(matches!(gather_round(&mut t, &b, 3, 4, false), Err(Error::Protocol(_))));
        }
        let mut ok = Scripted(vec![g(2, 1, 2), g(1, 1, 2)], 2);
        let (replies, _) = gather_round(&mut ok, &b, 3, 4, false).unwrap();
        assert_eq!(replies.iter().map(|r| r.worker_id).collect::<Vec<_>>(), vec![1, 2]);
        let mut wrong_m = Scripted(vec![], 1);
        assert!(gather_round(&mut wrong_m, &b, 3, 4, false).is_err());
    }

    #[test]
    fn ledger_totals_are_cumulative() {
        let mut ledger = CommLedger::default();
        for r in 0..3 {
            ledger.record(LedgerEntry {
                round: r,
                downstream_scalars: 4,
                upstream_scalars: 2,
                ..LedgerEntry::default()
            });
        }
        let t = ledger.totals();
        assert_eq!((t.round, t.downstream_scalars, t.upstream_scalars), (2, 12, 6));
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let finite = prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO;
        let broadcast = (any::<u32>(), prop::collection::btree_set(any::<u32>(), 0..64))
            .prop_flat_map(move |(round, idx)| {
                let n = idx.len();
                (
                    Just(round),
                    Just(idx.into_iter().collect::<Vec<_>>()),
                    prop::collection::vec(finite, n),
                )
            })
            .prop_map(|(round, indices, values)| Message::Broadcast(BroadcastMsg { round, indices, values }));
        let gradient = (any::<u32>(), any::<u32>(), prop::collection::vec(finite, 0..64)).prop_map(
            |(round, worker_id, values)| {
                Message::Gradient(GradientMsg {
                    round,
                    worker_id,
                    values,
                })
            },
        );
        prop_oneof![broadcast, gradient]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn codec_round_trips(msg in arb_message()) {
            let frame = encode(&msg).unwrap();
            prop_assert_eq!(frame_len(&frame).unwrap(), frame.len());
            prop_assert_eq!(decode(&frame).unwrap(), msg);
        }
    }
}
