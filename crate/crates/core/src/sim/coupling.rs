//! Sample-path coupling of retransmission and RLC(K, infinite field).
//!
//! Both senders see the same arrivals and the same channel outcomes. At every
//! slot where the RLC server is idle (before a bulk is formed), three claims
//! must hold:
//!
//! 1. the retransmission server is idle too;
//! 2. both senders have delivered the same set of packets;
//! 3. both queues hold the same packets.

use rand::distr::{Bernoulli, Distribution};
use serde::Serialize;

use super::rng::{stream_rng, Stream};
use super::{Engine, Fidelity, Packet, ProtocolConfig};
use crate::error::{Error, Result};
use crate::gf::{CodingMode, FieldSpec};

/// Violations kept verbatim in a report; the rest are only counted.
const MAX_RECORDED: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub lambda: f64,
    pub q: f64,
    pub max_bulk: usize,
    pub slots: u64,
    pub arrival_seed: u64,
    pub channel_seed: u64,
    /// Flip the retransmission channel outcome at the first busy slot at or
    /// after this one. Used to check that the harness detects divergence.
    pub fault_slot: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Claim {
    RetransmissionBusy,
    DeliveredSetsDiffer,
    QueuesDiffer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub slot: u64,
    pub claim: Claim,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    /// Slots at which the claims were checked.
    pub selection_moments: u64,
    pub delivered: u64,
    pub violations: Vec<Violation>,
    pub total_violations: u64,
    pub fault_applied_at: Option<u64>,
}

/// Order-independent fingerprint of a set of packet ids.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Digest {
    count: u64,
    sum: u64,
    xor: u64,
}

impl Digest {
    fn add(&mut self, p: &Packet) {
        let h = mix(p.id);
        self.count += 1;
        self.sum = self.sum.wrapping_add(h);
        self.xor ^= h.rotate_left(17);
    }
}

// splitmix64 finalizer
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Runs both senders and collects every violated claim.
pub fn run_coupled(cfg: &CouplingConfig) -> Result<CouplingReport> {
    if cfg.max_bulk == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let arrival = Bernoulli::new(cfg.lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let channel = Bernoulli::new(cfg.q).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut arrival_rng = stream_rng(cfg.arrival_seed, Stream::Arrivals);
    let mut channel_rng = stream_rng(cfg.channel_seed, Stream::Channel);
    // neither sender draws coefficients
    let mut unused = stream_rng(0, Stream::Coefficients);

    let mut retx = Engine::new(&ProtocolConfig::retransmission())?;
    let mut rlc = Engine::new(&ProtocolConfig::rlc(
        cfg.max_bulk,
        FieldSpec::Infinite,
        CodingMode::Good,
        Fidelity::RankMarkov,
    ))?;
    let (mut retx_set, mut rlc_set) = (Digest::default(), Digest::default());
    let mut report = CouplingReport {
        selection_moments: 0,
        delivered: 0,
        violations: Vec::new(),
        total_violations: 0,
        fault_applied_at: None,
    };
    let record = |report: &mut CouplingReport, slot, claim, detail: String| {
        report.total_violations += 1;
        if report.violations.len() < MAX_RECORDED {
            report.violations.push(Violation { slot, claim, detail });
        }
    };

    for slot in 0..cfg.slots {
        let arrived = arrival.sample(&mut arrival_rng);
        let received = channel.sample(&mut channel_rng);
        retx.arrive(slot, arrived);
        rlc.arrive(slot, arrived);
        retx.observe_epoch();
        rlc.observe_epoch();

        if rlc.is_idle() {
            report.selection_moments += 1;
            if !retx.is_idle() {
                let detail = format!("retransmission serving packet {}", retx.in_service()[0].id);
                record(&mut report, slot, Claim::RetransmissionBusy, detail);
            }
            if retx_set != rlc_set {
                let detail = format!("delivered {} vs {}", retx_set.count, rlc_set.count);
                record(&mut report, slot, Claim::DeliveredSetsDiffer, detail);
            }
            if retx.queue() != rlc.queue() {
                let detail = format!("queue lengths {} vs {}", retx.queue().len(), rlc.queue().len());
                record(&mut report, slot, Claim::QueuesDiffer, detail);
            }
        }

        retx.form_bulk();
        rlc.form_bulk();
        let mut retx_received = received;
        if let Some(at) = cfg.fault_slot {
            if report.fault_applied_at.is_none() && slot >= at && !retx.is_idle() {
                retx_received = !received;
                report.fault_applied_at = Some(slot);
            }
        }
        if retx.transmit(retx_received, &mut unused)? {
            retx.completed().iter().for_each(|p| retx_set.add(p));
        }
        if rlc.transmit(received, &mut unused)? {
            rlc.completed().iter().for_each(|p| rlc_set.add(p));
        }
    }
    report.delivered = rlc.delivered();
    Ok(report)
}

/// As [`run_coupled`], failing on the first violated claim.
pub fn coupled_run(cfg: &CouplingConfig) -> Result<CouplingReport> {
    let report = run_coupled(cfg)?;
    match report.violations.first() {
        None => Ok(report),
        Some(v) => Err(Error::CouplingViolation {
            slot: v.slot,
            detail: format!("{:?}: {}", v.claim, v.detail),
            total: report.total_violations,
        }),
    }
}
