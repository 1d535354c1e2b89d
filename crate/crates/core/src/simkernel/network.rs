use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::KernelError;
use crate::time::SimTime;
use crate::topology::{ClusterTopology, LinkId, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId(pub u64);

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u64,
    pub path: Vec<LinkId>,
    pub injected_at: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HopTiming {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// First bit enters the link (after FIFO queueing).
    pub start: SimTime,
    /// Last bit arrives at `to`.
    pub exit: SimTime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
    pub bytes_lost: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lost {
    pub message: Message,
    pub link: LinkId,
    pub at: SimTime,
}

struct InFlight {
    msg: Message,
    hops: Vec<HopTiming>,
}

/// Store-and-forward transmission with one FIFO per link direction.
///
/// Byte counters are settled when a message is delivered or dropped, so at
/// any instant `bytes_sent == bytes_delivered + bytes_lost` per link.
pub struct Network {
    // [a->b, b->a] time at which each direction becomes free.
    free_at: Vec<[SimTime; 2]>,
    counters: Vec<LinkCounters>,
    hop_bytes: Vec<u64>,
    n_nodes: usize,
    in_flight: BTreeMap<MessageId, InFlight>,
    next_id: u64,
}

impl Network {
    pub fn new(topo: &ClusterTopology) -> Self {
        let n = topo.nodes().len();
        Network {
            free_at: vec![[SimTime::ZERO; 2]; topo.links().len()],
            counters: vec![LinkCounters::default(); topo.links().len()],
            hop_bytes: vec![0; n * n],
            n_nodes: n,
            in_flight: BTreeMap::new(),
            next_id: 0,
        }
    }

    /// Schedules `size_bytes` from `src` to `dst` along `path`, returning the
    /// delivery time. Each hop starts when both the message has arrived and
    /// the link direction is free, then takes serialization plus latency.
    pub fn transmit(
        &mut self,
        topo: &ClusterTopology,
        src: NodeId,
        dst: NodeId,
        size_bytes: u64,
        path: &[LinkId],
        t: SimTime,
    ) -> Result<(MessageId, SimTime), KernelError> {
        if path.is_empty() {
            return Err(KernelError::BrokenPath);
        }
        let mut at = src;
        for &l in path {
            let link = topo.link(l);
            at = link.other(at).ok_or(KernelError::BrokenPath)?;
            if !link.is_up() {
                return Err(KernelError::LinkDown(l));
            }
        }
        if at != dst {
            return Err(KernelError::BrokenPath);
        }

        let mut hops = Vec::with_capacity(path.len());
        let mut arrive = t;
        let mut from = src;
        for &l in path {
            let link = topo.link(l);
            let to = link.other(from).expect("checked above");
            let qos = topo.effective_qos(l, arrive).map_err(|_| KernelError::LinkDown(l))?;
            let dir = usize::from(from != link.a);
            let start = arrive.max(self.free_at[l.idx()][dir]);
            let ser = serialization(size_bytes, qos.bw_from(link, from));
            self.free_at[l.idx()][dir] = start + ser;
            let exit = start + ser + qos.latency;
            hops.push(HopTiming { link: l, from, to, start, exit });
            arrive = exit;
            from = to;
        }
        let id = MessageId(self.next_id);
        self.next_id += 1;
        let msg = Message {
            id,
            src,
            dst,
            size_bytes,
            path: path.to_vec(),
            injected_at: t,
        };
        self.in_flight.insert(id, InFlight { msg, hops });
        Ok((id, arrive))
    }

    /// Settles a delivery. `None` if the message was dropped in the meantime.
    pub fn complete(&mut self, id: MessageId) -> Option<Message> {
        let f = self.in_flight.remove(&id)?;
        for h in &f.hops {
            self.settle_hop(h, f.msg.size_bytes, true);
        }
        Some(f.msg)
    }

    /// Drops every in-flight message that still has to cross `link`.
    pub fn fail_link(&mut self, link: LinkId, t: SimTime) -> Vec<Lost> {
        let doomed: Vec<MessageId> = self
            .in_flight
            .iter()
            .filter(|(_, f)| f.hops.iter().any(|h| h.link == link && h.exit > t))
            .map(|(id, _)| *id)
            .collect();
        let mut lost = Vec::with_capacity(doomed.len());
        for id in doomed {
            let f = self.in_flight.remove(&id).expect("collected above");
            for h in &f.hops {
                if h.link == link {
                    self.settle_hop(h, f.msg.size_bytes, false);
                    break;
                }
                self.settle_hop(h, f.msg.size_bytes, true);
            }
            lost.push(Lost { message: f.msg, link, at: t });
        }
        lost
    }

    fn settle_hop(&mut self, h: &HopTiming, bytes: u64, delivered: bool) {
        let c = &mut self.counters[h.link.idx()];
        c.bytes_sent += bytes;
        if delivered {
            c.bytes_delivered += bytes;
            self.hop_bytes[h.from.idx() * self.n_nodes + h.to.idx()] += bytes;
        } else {
            c.bytes_lost += bytes;
        }
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn hops_of(&self, id: MessageId) -> Option<&[HopTiming]> {
        self.in_flight.get(&id).map(|f| f.hops.as_slice())
    }

    pub fn counters(&self) -> &[LinkCounters] {
        &self.counters
    }

    /// Delivered bytes per directed node pair, counted on every traversal.
    pub fn hop_bytes(&self, from: NodeId, to: NodeId) -> u64 {
        self.hop_bytes[from.idx() * self.n_nodes + to.idx()]
    }
}

/// Microseconds to clock `bytes` onto a link of `bw_mbps`.
pub fn serialization(bytes: u64, bw_mbps: f64) -> SimTime {
    SimTime::from_micros((bytes as f64 * 8.0 / bw_mbps).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{LinkState, NodeSpec};
    use std::collections::BTreeSet;

    pub(crate) fn fig2() -> ClusterTopology {
        let nodes = (0..3)
            .map(|i| NodeSpec {
                id: NodeId(i),
                name: format!("vm{i}"),
                region: format!("r{i}"),
                roles: BTreeSet::new(),
            })
            .collect();
        let mut t = ClusterTopology::new(nodes, Vec::new()).unwrap();
        t.add_link("a", NodeId(0), NodeId(2), 0, 210.0, 100.0, 100.0).unwrap();
        t.add_link("b", NodeId(0), NodeId(2), 1, 140.0, 100.0, 100.0).unwrap();
        t.add_link("c", NodeId(0), NodeId(1), 0, 40.0, 100.0, 100.0).unwrap();
        t.add_link("d", NodeId(1), NodeId(2), 0, 50.0, 100.0, 100.0).unwrap();
        t
    }

    #[test]
    fn single_hop_latency_plus_serialization() {
        let topo = fig2();
        let mut net = Network::new(&topo);
        let (_, at) = net.transmit(&topo, NodeId(0), NodeId(2), 1024, &[LinkId(1)], SimTime::ZERO).unwrap();
        assert_eq!(at.as_micros(), 140_000 + 82);
    }

    #[test]
    fn two_hops_and_zero_size() {
        let topo = fig2();
        let mut net = Network::new(&topo);
        let (_, at) = net
            .transmit(&topo, NodeId(0), NodeId(2), 0, &[LinkId(2), LinkId(3)], SimTime::ZERO)
            .unwrap();
        assert_eq!(at, SimTime::from_millis(90));
    }

    #[test]
    fn fifo_queueing_and_direction_independence() {
        let topo = fig2();
        let mut net = Network::new(&topo);
        let t0 = SimTime::ZERO;
        // 12_500 bytes at 100 Mb/s = 1 ms on the wire.
        let (_, a) = net.transmit(&topo, NodeId(0), NodeId(2), 12_500, &[LinkId(1)], t0).unwrap();
        let (_, b) = net.transmit(&topo, NodeId(0), NodeId(2), 12_500, &[LinkId(1)], t0).unwrap();
        let (_, c) = net.transmit(&topo, NodeId(2), NodeId(0), 12_500, &[LinkId(1)], t0).unwrap();
        assert_eq!(a, SimTime::from_millis(141));
        assert_eq!(b, SimTime::from_millis(142));
        assert_eq!(c, SimTime::from_millis(141));
    }

    #[test]
    fn rejects_broken_or_down_paths() {
        let mut topo = fig2();
        let mut net = Network::new(&topo);
        let t = SimTime::ZERO;
        assert_eq!(
            net.transmit(&topo, NodeId(0), NodeId(2), 1, &[LinkId(2)], t),
            Err(KernelError::BrokenPath)
        );
        assert_eq!(
            net.transmit(&topo, NodeId(0), NodeId(2), 1, &[LinkId(3)], t),
            Err(KernelError::BrokenPath)
        );
        topo.set_link_state(LinkId(1), LinkState::Down, t).unwrap();
        assert_eq!(
            net.transmit(&topo, NodeId(0), NodeId(2), 1, &[LinkId(1)], t),
            Err(KernelError::LinkDown(LinkId(1)))
        );
    }

    #[test]
    fn failure_mid_flight_drops_and_conserves_bytes() {
        let topo = fig2();
        let mut net = Network::new(&topo);
        let (m1, _) = net
            .transmit(&topo, NodeId(0), NodeId(2), 500, &[LinkId(2), LinkId(3)], SimTime::ZERO)
            .unwrap();
        let (m2, _) = net.transmit(&topo, NodeId(0), NodeId(2), 700, &[LinkId(1)], SimTime::ZERO).unwrap();
        let lost = net.fail_link(LinkId(3), SimTime::from_millis(60));
        assert_eq!(lost.len(), 1);
        assert_eq!(lost[0].message.id, m1);
        assert!(net.complete(m1).is_none());
        assert!(net.complete(m2).is_some());
        let c = net.counters();
        assert_eq!(c[2].bytes_delivered, 500);
        assert_eq!(c[3].bytes_lost, 500);
        assert_eq!(c[1].bytes_delivered, 700);
        for k in c {
            assert_eq!(k.bytes_sent, k.bytes_delivered + k.bytes_lost);
        }
        assert_eq!(net.hop_bytes(NodeId(0), NodeId(1)), 500);
        assert_eq!(net.hop_bytes(NodeId(1), NodeId(2)), 0);
    }
}
