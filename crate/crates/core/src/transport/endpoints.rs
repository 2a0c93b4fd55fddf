//! Protocol state machines for the three parties.

use std::collections::{BTreeMap, BTreeSet};

use super::{Packet, PacketKind};

/// What the switch does with an arriving DATA/FIN packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchAction {
    /// Next in sequence: run the pipeline (FIN skips it), advance X.
    Process,
    /// Already processed (a retransmission): forward untouched; the master
    /// ACKs it.
    ForwardUnprocessed,
    /// A gap precedes this packet; drop and wait for the retransmission.
    Drop,
}

/// Per-flow highest processed sequence number at the switch.
#[derive(Debug, Clone, Default)]
pub struct SwitchSeqState {
    highest: BTreeMap<u16, u32>,
}

impl SwitchSeqState {
    pub fn new() -> SwitchSeqState {
        SwitchSeqState::default()
    }

    pub fn highest(&self, fid: u16) -> u32 {
        self.highest.get(&fid).copied().unwrap_or(0)
    }

    /// Sequencing decision for a DATA or FIN packet; advances X on
    /// `Process`. X never moves backwards.
    pub fn step(&mut self, pkt: &Packet) -> SwitchAction {
        debug_assert!(matches!(pkt.kind, PacketKind::Data | PacketKind::Fin));
        let x = self.highest.entry(pkt.fid).or_insert(0);
        if pkt.seq == *x + 1 {
            *x = pkt.seq;
            SwitchAction::Process
        } else if pkt.seq <= *x {
            SwitchAction::ForwardUnprocessed
        } else {
            SwitchAction::Drop
        }
    }
}

/// Worker-side send queue with per-packet retransmission timers.
#[derive(Debug, Clone)]
pub struct WorkerRetxState {
    fid: u16,
    queue: Vec<Packet>,
    next_to_send: usize,
    unacked: BTreeMap<u32, u64>,
    timeout: u64,
    window: usize,
    pub retransmissions: u64,
}

impl WorkerRetxState {
    /// Build the flow: one DATA packet per row (seq 1..=n) plus the FIN at
    /// seq n+1.
    pub fn new(fid: u16, rows: Vec<Vec<u64>>, timeout: u64, window: usize) -> WorkerRetxState {
        let n = rows.len() as u32;
        let mut queue: Vec<Packet> = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| Packet::data(fid, i as u32 + 1, values))
            .collect();
        queue.push(Packet::fin(fid, n + 1));
        WorkerRetxState {
            fid,
            queue,
            next_to_send: 0,
            unacked: BTreeMap::new(),
            timeout,
            window: window.max(1),
            retransmissions: 0,
        }
    }

    pub fn fid(&self) -> u16 {
        self.fid
    }

    /// Packets to transmit now: due retransmissions first, then fresh sends
    /// up to the window.
    pub fn poll_send(&mut self, now: u64) -> Vec<Packet> {
        let mut out = Vec::new();
        let due: Vec<u32> = self
            .unacked
            .iter()
            .filter(|(_, &deadline)| deadline <= now)
            .map(|(&seq, _)| seq)
            .collect();
        for seq in due {
            self.unacked.insert(seq, now + self.timeout);
            self.retransmissions += 1;
            out.push(self.queue[(seq - 1) as usize].clone());
        }
        while self.unacked.len() < self.window && self.next_to_send < self.queue.len() {
            let pkt = self.queue[self.next_to_send].clone();
            self.unacked.insert(pkt.seq, now + self.timeout);
            self.next_to_send += 1;
            out.push(pkt);
        }
        out
    }

    /// An ACK from either the switch (pruned) or the master (delivered).
    pub fn on_ack(&mut self, seq: u32) {
        self.unacked.remove(&seq);
    }

    /// Every packet, including the FIN, has been ACKed.
    pub fn done(&self) -> bool {
        self.next_to_send == self.queue.len() && self.unacked.is_empty()
    }
}

/// Master-side receive state: ACK everything, deduplicate by (fid, seq).
#[derive(Debug, Clone, Default)]
pub struct MasterState {
    received: BTreeMap<u16, BTreeSet<u32>>,
    survivors: Vec<Packet>,
    fins: BTreeSet<u16>,
    pub duplicate_deliveries: u64,
}

impl MasterState {
    pub fn new() -> MasterState {
        MasterState::default()
    }

    /// Ingest a packet and produce the ACK to send back to its worker.
    pub fn on_packet(&mut self, pkt: &Packet) -> Packet {
        let fresh = self.received.entry(pkt.fid).or_default().insert(pkt.seq);
        if fresh {
            match pkt.kind {
                PacketKind::Data => self.survivors.push(pkt.clone()),
                PacketKind::Fin => {
                    self.fins.insert(pkt.fid);
                }
                PacketKind::Ack => unreachable!("masters do not receive ACKs"),
            }
        } else {
            self.duplicate_deliveries += 1;
        }
        Packet::ack(pkt.fid, pkt.seq)
    }

    pub fn fin_received(&self, fid: u16) -> bool {
        self.fins.contains(&fid)
    }

    /// Deduplicated survivor DATA packets in first-delivery order.
    pub fn survivors(&self) -> &[Packet] {
        &self.survivors
    }

    pub fn received_seqs(&self, fid: u16) -> Option<&BTreeSet<u32>> {
        self.received.get(&fid)
    }
}
