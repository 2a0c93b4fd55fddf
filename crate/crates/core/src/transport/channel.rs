//! Deterministic time-stepped simulation of workers, switch, and master
//! over lossy links.
//!
//! Links deliver in FIFO order with a one-step latency; each transmission
//! is dropped independently with the link's loss probability, drawn from a
//! per-link seeded stream. One `step` call of simulated time covers worker
//! sends, switch arrivals, and master arrivals.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::algorithms::Decision;
use crate::hash::derive_seed;

use super::{MasterState, Packet, PacketKind, SwitchAction, SwitchSeqState, WorkerRetxState};

/// Loss probability per link direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLoss {
    pub worker_to_switch: f64,
    pub switch_to_master: f64,
    pub switch_to_worker: f64,
    pub master_to_worker: f64,
}

impl LinkLoss {
    pub fn uniform(p: f64) -> LinkLoss {
        LinkLoss {
            worker_to_switch: p,
            switch_to_master: p,
            switch_to_worker: p,
            master_to_worker: p,
        }
    }

    pub fn none() -> LinkLoss {
        LinkLoss::uniform(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub loss: LinkLoss,
    pub seed: u64,
    /// Livelock guard.
    pub max_steps: u64,
    /// Retransmission timeout in steps.
    pub timeout: u64,
    /// Per-worker in-flight window.
    pub window: usize,
}

impl ChannelConfig {
    pub fn new(loss: LinkLoss, seed: u64) -> ChannelConfig {
        ChannelConfig {
            loss,
            seed,
            max_steps: 0, // filled per workload below
            timeout: 64,
            window: 64,
        }
    }
}

/// One flow's payload: its fid and pre-projected wire rows.
#[derive(Debug, Clone)]
pub struct Workload {
    pub fid: u16,
    pub rows: Vec<Vec<u64>>,
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("simulation exceeded {0} steps without completing")]
    MaxSteps(u64),
    #[error("switch handler failed: {0}")]
    Handler(String),
}

/// Completion statistics and the per-flow accounting sets.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub steps: u64,
    pub retransmissions: u64,
    pub duplicate_deliveries: u64,
    pub pruned: BTreeMap<u16, BTreeSet<u32>>,
    pub forwarded: BTreeMap<u16, BTreeSet<u32>>,
    /// Pruned entries whose retransmission nevertheless reached the master
    /// (lost prune-ACK followed by a replay).
    pub pruned_but_delivered: BTreeMap<u16, BTreeSet<u32>>,
    pub master: MasterState,
}

impl ChannelTrace {
    /// Exactly-once accounting: every sequence number was pruned or
    /// delivered (the overlap is exactly the tracked lost-ACK replays).
    pub fn check_accounting(&self, workloads: &[Workload]) -> Result<(), String> {
        for w in workloads {
            let n = w.rows.len() as u32;
            let pruned = self.pruned.get(&w.fid).cloned().unwrap_or_default();
            let empty = BTreeSet::new();
            let delivered = self.master.received_seqs(w.fid).unwrap_or(&empty);
            for seq in 1..=n {
                let p = pruned.contains(&seq);
                let d = delivered.contains(&seq);
                if !p && !d {
                    return Err(format!("fid {} seq {seq} neither pruned nor delivered", w.fid));
                }
                if p && d
                    && !self
                        .pruned_but_delivered
                        .get(&w.fid)
                        .is_some_and(|s| s.contains(&seq))
                {
                    return Err(format!(
                        "fid {} seq {seq} pruned and delivered without a tracked replay",
                        w.fid
                    ));
                }
            }
            if !self.master.fin_received(w.fid) {
                return Err(format!("fid {} FIN never reached the master", w.fid));
            }
        }
        Ok(())
    }
}

struct Link {
    queue: VecDeque<(u64, Packet)>,
    loss: f64,
    rng: ChaCha12Rng,
}

impl Link {
    fn new(loss: f64, seed: u64) -> Link {
        Link {
            queue: VecDeque::new(),
            loss,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    fn send(&mut self, now: u64, pkt: Packet) {
        // Loss decided at transmission; surviving packets arrive next step.
        if self.loss > 0.0 && self.rng.random::<f64>() < self.loss {
            return;
        }
        self.queue.push_back((now + 1, pkt));
    }

    fn due(&mut self, now: u64) -> Vec<Packet> {
        let mut out = Vec::new();
        while let Some((at, _)) = self.queue.front() {
            if *at <= now {
                out.push(self.queue.pop_front().unwrap().1);
            } else {
                break;
            }
        }
        out
    }
}

/// Run flows to completion: every packet ACKed at every worker.
///
/// `handler` sees each in-sequence DATA packet exactly once, in per-flow
/// order, and decides prune/forward; FIN packets bypass it.
pub fn channel_run(
    workloads: &[Workload],
    handler: &mut dyn FnMut(&Packet) -> Result<Decision, String>,
    cfg: &ChannelConfig,
) -> Result<ChannelTrace, ChannelError> {
    let mut workers: Vec<WorkerRetxState> = workloads
        .iter()
        .map(|w| WorkerRetxState::new(w.fid, w.rows.clone(), cfg.timeout, cfg.window))
        .collect();
    let by_fid: BTreeMap<u16, usize> = workloads
        .iter()
        .enumerate()
        .map(|(i, w)| (w.fid, i))
        .collect();

    let mut seq_state = SwitchSeqState::new();
    let mut master = MasterState::new();
    let mut pruned: BTreeMap<u16, BTreeSet<u32>> = BTreeMap::new();
    let mut forwarded: BTreeMap<u16, BTreeSet<u32>> = BTreeMap::new();
    let mut pruned_but_delivered: BTreeMap<u16, BTreeSet<u32>> = BTreeMap::new();
    // In-sequence monitor: the handler must see each seq exactly once.
    let mut processed: BTreeMap<u16, u32> = BTreeMap::new();

    let mut to_switch = Link::new(cfg.loss.worker_to_switch, derive_seed(cfg.seed, "w->s", 0));
    let mut to_master = Link::new(cfg.loss.switch_to_master, derive_seed(cfg.seed, "s->m", 0));
    let mut switch_acks = Link::new(cfg.loss.switch_to_worker, derive_seed(cfg.seed, "s->w", 0));
    let mut master_acks = Link::new(cfg.loss.master_to_worker, derive_seed(cfg.seed, "m->w", 0));

    let max_steps = if cfg.max_steps > 0 {
        cfg.max_steps
    } else {
        // Generous default: scales with volume and retransmission pressure.
        let volume: u64 = workloads.iter().map(|w| w.rows.len() as u64 + 1).sum();
        20_000 + volume * 40 * (cfg.timeout / 16).max(1)
    };

    for step in 0..max_steps {
        for w in workers.iter_mut() {
            for pkt in w.poll_send(step) {
                to_switch.send(step, pkt);
            }
        }

        for pkt in to_switch.due(step) {
            match seq_state.step(&pkt) {
                SwitchAction::Process => match pkt.kind {
                    PacketKind::Fin => to_master.send(step, pkt),
                    PacketKind::Data => {
                        let last = processed.entry(pkt.fid).or_insert(0);
                        assert_eq!(
                            *last + 1,
                            pkt.seq,
                            "pipeline processing out of sequence on fid {}",
                            pkt.fid
                        );
                        *last = pkt.seq;
                        let decision =
                            handler(&pkt).map_err(ChannelError::Handler)?;
                        match decision {
                            Decision::Prune => {
                                pruned.entry(pkt.fid).or_default().insert(pkt.seq);
                                switch_acks.send(step, Packet::ack(pkt.fid, pkt.seq));
                            }
                            Decision::Forward => {
                                forwarded.entry(pkt.fid).or_default().insert(pkt.seq);
                                to_master.send(step, pkt);
                            }
                        }
                    }
                    PacketKind::Ack => unreachable!("workers do not send ACKs"),
                },
                SwitchAction::ForwardUnprocessed => {
                    if pruned
                        .get(&pkt.fid)
                        .is_some_and(|s| s.contains(&pkt.seq))
                    {
                        pruned_but_delivered
                            .entry(pkt.fid)
                            .or_default()
                            .insert(pkt.seq);
                    }
                    to_master.send(step, pkt);
                }
                SwitchAction::Drop => {}
            }
        }

        for pkt in to_master.due(step) {
            let ack = master.on_packet(&pkt);
            master_acks.send(step, ack);
        }

        for ack in switch_acks.due(step).into_iter().chain(master_acks.due(step)) {
            if let Some(&wi) = by_fid.get(&ack.fid) {
                workers[wi].on_ack(ack.seq);
            }
        }

        if workers.iter().all(|w| w.done()) {
            // Keep only replays that actually reached the master.
            for (fid, seqs) in pruned_but_delivered.iter_mut() {
                let empty = BTreeSet::new();
                let delivered = master.received_seqs(*fid).unwrap_or(&empty);
                seqs.retain(|s| delivered.contains(s));
            }
            return Ok(ChannelTrace {
                steps: step + 1,
                retransmissions: workers.iter().map(|w| w.retransmissions).sum(),
                duplicate_deliveries: master.duplicate_deliveries,
                pruned,
                forwarded,
                pruned_but_delivered,
                master,
            });
        }
    }
    Err(ChannelError::MaxSteps(max_steps))
}
