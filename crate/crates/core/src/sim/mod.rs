//! Slotted simulation of the sender queue under retransmission and RLC(K, F).
//!
//! Every slot runs four steps in order:
//!
//! 1. arrival: with probability lambda a packet stamped with the slot joins the queue;
//! 2. bulk formation: an idle server takes the first min(queue, K) packets;
//! 3. transmission: a busy server sends one packet, received with probability q,
//!    and a received packet is useful with the current rank's probability;
//! 4. completion: at full rank each packet of the bulk is delivered with delay
//!    `slot - arrival_slot + 1` and the server goes idle.
//!
//! The next bulk is formed in the following slot, after that slot's arrival.
//! The queue length at that point (before formation) is the departure-epoch
//! state recorded in [`SimStats::departure_queue_histogram`].

mod coupling;
pub mod rng;
mod stats;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{sample_into, CodingMode, Element, FieldSpec, GaloisField, RankState};
use crate::analytics::stability_threshold;
use crate::service::useful_probability;

pub use coupling::{coupled_run, run_coupled, Claim, CouplingConfig, CouplingReport, Violation};
pub use rng::{derive_seed, stream_rng, Stream, StreamSeeds};
pub use stats::{DelayAccumulator, SimStats, MIN_BATCHES};

pub const DEFAULT_SLOTS: u64 = 10_000_000;
pub const DEFAULT_WARMUP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    #[serde(rename = "retx", alias = "retransmission")]
    Retransmission,
    Rlc,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Retransmission => "retx",
            ProtocolKind::Rlc => "rlc",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "retx" | "retransmission" => Ok(ProtocolKind::Retransmission),
            "rlc" => Ok(ProtocolKind::Rlc),
            other => Err(Error::InvalidParameter(format!("unknown protocol {other:?}"))),
        }
    }
}

/// How receptions are judged useful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// Draw coefficient vectors and track the receiver basis.
    #[serde(alias = "vector")]
    VectorExact,
    /// Draw usefulness from the per-rank probabilities.
    #[serde(alias = "markov")]
    RankMarkov,
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::VectorExact => "vector",
            Fidelity::RankMarkov => "markov",
        })
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vector" | "vector_exact" => Ok(Fidelity::VectorExact),
            "markov" | "rank_markov" => Ok(Fidelity::RankMarkov),
            other => Err(Error::InvalidParameter(format!("unknown fidelity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub max_bulk: usize,
    pub field: FieldSpec,
    pub mode: CodingMode,
    pub fidelity: Fidelity,
}

impl ProtocolConfig {
    pub fn retransmission() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Retransmission,
            max_bulk: 1,
            field: FieldSpec::Infinite,
            mode: CodingMode::Good,
            fidelity: Fidelity::RankMarkov,
        }
    }

    pub fn rlc(max_bulk: usize, field: FieldSpec, mode: CodingMode, fidelity: Fidelity) -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Rlc,
            max_bulk,
            field,
            mode,
            fidelity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ProtocolKind::Rlc {
            if self.max_bulk == 0 {
                return Err(Error::InvalidParameter("K must be at least 1".into()));
            }
            if self.fidelity == Fidelity::VectorExact && self.field.is_infinite() {
                return Err(Error::NotSimulatable);
            }
        }
        Ok(())
    }

    /// Largest bulk actually formed (1 for retransmission).
    pub fn effective_bulk(&self) -> usize {
        match self.kind {
            ProtocolKind::Retransmission => 1,
            ProtocolKind::Rlc => self.max_bulk,
        }
    }

    pub fn stability_threshold(&self, q: f64) -> Result<f64> {
        match self.kind {
            ProtocolKind::Retransmission => Ok(q),
            ProtocolKind::Rlc => stability_threshold(q, self.max_bulk, &self.field, self.mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub q: f64,
    pub slots: u64,
    pub warmup_slots: u64,
    pub seeds: StreamSeeds,
}

impl SimConfig {
    /// Warmup defaults to `DEFAULT_WARMUP`, capped at a tenth of the run.
    pub fn new(lambda: f64, q: f64, slots: u64, master_seed: u64) -> Self {
        SimConfig {
            lambda,
            q,
            slots,
            warmup_slots: DEFAULT_WARMUP.min(slots / 10),
            seeds: StreamSeeds::from_master(master_seed),
        }
    }

    pub fn with_warmup(mut self, warmup_slots: u64) -> Self {
        self.warmup_slots = warmup_slots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda = {}", self.lambda)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParameter(format!("q = {}", self.q)));
        }
        if self.warmup_slots >= self.slots {
            return Err(Error::InvalidParameter(format!(
                "warmup {} must be shorter than the run {}",
                self.warmup_slots, self.slots
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Packet {
    pub id: u64,
    pub arrival_slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochObservation {
    pub queue_len: usize,
    pub bulk_size: usize,
}

#[derive(Debug)]
enum ServiceRule {
    /// Every reception raises the rank.
    EveryReception,
    /// `useful[k - 1][r]`; `None` means certainly useful.
    Markov(Vec<Vec<Option<Bernoulli>>>),
    Vector { field: Arc<GaloisField>, mode: CodingMode },
}

/// One sender: queue, server and receiver state, advanced a slot at a time.
#[derive(Debug)]
pub struct Engine {
    max_bulk: usize,
    rule: ServiceRule,
    queue: VecDeque<Packet>,
    bulk: Vec<Packet>,
    completed: Vec<Packet>,
    rank: usize,
    basis: RankState,
    coeffs: Vec<Element>,
    next_id: u64,
    arrivals: u64,
    delivered: u64,
    pending: Option<usize>,
}

impl Engine {
    pub fn new(protocol: &ProtocolConfig) -> Result<Self> {
        protocol.validate()?;
        let max_bulk = protocol.effective_bulk();
        let rule = match (protocol.kind, protocol.fidelity, protocol.field.galois()) {
            (ProtocolKind::Retransmission, _, _) | (_, _, None) => ServiceRule::EveryReception,
            (_, Fidelity::RankMarkov, Some(_)) => {
                let mut table = Vec::with_capacity(max_bulk);
                for k in 1..=max_bulk {
                    let row = (0..k)
                        .map(|r| {
                            let p = useful_probability(&protocol.field, k, r, protocol.mode)?;
                            Ok(if p >= 1.0 {
                                None
                            } else {
                                Some(Bernoulli::new(p).map_err(|e| {
                                    Error::InvalidParameter(e.to_string())
                                })?)
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    table.push(row);
                }
                ServiceRule::Markov(table)
            }
            (_, Fidelity::VectorExact, Some(gf)) => ServiceRule::Vector {
                field: gf.clone(),
                mode: protocol.mode,
            },
        };
        Ok(Engine {
            max_bulk,
            rule,
            queue: VecDeque::new(),
            bulk: Vec::with_capacity(max_bulk),
            completed: Vec::with_capacity(max_bulk),
            rank: 0,
            basis: RankState::new(0),
            coeffs: Vec::with_capacity(max_bulk),
            next_id: 0,
            arrivals: 0,
            delivered: 0,
            pending: None,
        })
    }

    /// Step 1.
    pub fn arrive(&mut self, slot: u64, arrived: bool) {
        if arrived {
            self.queue.push_back(Packet {
                id: self.next_id,
                arrival_slot: slot,
            });
            self.next_id += 1;
            self.arrivals += 1;
        }
    }

    /// Queue length seen at the bulk selection moment that follows a
    /// departure, with the size of the bulk that departed.
    pub fn observe_epoch(&mut self) -> Option<EpochObservation> {
        self.pending.take().map(|bulk_size| EpochObservation {
            queue_len: self.queue.len(),
            bulk_size,
        })
    }

    /// Step 2. Returns the size of a newly formed bulk.
    pub fn form_bulk(&mut self) -> Option<usize> {
        if !self.bulk.is_empty() || self.queue.is_empty() {
            return None;
        }
        let k = self.queue.len().min(self.max_bulk);
        self.bulk.extend(self.queue.drain(..k));
        self.rank = 0;
        if let ServiceRule::Vector { .. } = self.rule {
            self.basis.reset(k);
        }
        Some(k)
    }

    /// Steps 3 and 4. Returns true when the bulk completed in this slot; the
    /// delivered packets are then available from [`Engine::completed`].
    pub fn transmit<R: Rng + ?Sized>(&mut self, received: bool, rng: &mut R) -> Result<bool> {
        if self.bulk.is_empty() || !received {
            return Ok(false);
        }
        let k = self.bulk.len();
        let useful = match &self.rule {
            ServiceRule::EveryReception => true,
            ServiceRule::Markov(table) => match &table[k - 1][self.rank] {
                None => true,
                Some(b) => b.sample(rng),
            },
            ServiceRule::Vector { field, mode } => {
                self.coeffs.resize(k, 0);
                sample_into(field, *mode == CodingMode::Bad && k >= 2, rng, &mut self.coeffs);
                self.basis.update_slice(field, &self.coeffs)?
            }
        };
        if useful {
            self.rank += 1;
        }
        if self.rank < k {
            return Ok(false);
        }
        self.completed.clear();
        std::mem::swap(&mut self.bulk, &mut self.completed);
        self.delivered += k as u64;
        self.pending = Some(k);
        self.rank = 0;
        Ok(true)
    }

    pub fn completed(&self) -> &[Packet] {
        &self.completed
    }

    pub fn is_idle(&self) -> bool {
        self.bulk.is_empty()
    }

    pub fn queue(&self) -> &VecDeque<Packet> {
        &self.queue
    }

    pub fn in_service(&self) -> &[Packet] {
        &self.bulk
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}

/// Runs one simulation and returns its statistics.
pub fn simulate(protocol: &ProtocolConfig, sim: &SimConfig) -> Result<SimStats> {
    simulate_with(protocol, sim, |_, _| {})
}

/// As [`simulate`], calling `on_delivery(packet, delay)` for every delivered
/// packet, warmup included.
pub fn simulate_with<F>(protocol: &ProtocolConfig, sim: &SimConfig, mut on_delivery: F) -> Result<SimStats>
where
    F: FnMut(&Packet, u64),
{
    sim.validate()?;
    let mut engine = Engine::new(protocol)?;
    let arrival = Bernoulli::new(sim.lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let channel = Bernoulli::new(sim.q).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut arrival_rng = stream_rng(sim.seeds.arrivals, Stream::Arrivals);
    let mut channel_rng = stream_rng(sim.seeds.channel, Stream::Channel);
    let mut coeff_rng = stream_rng(sim.seeds.coefficients, Stream::Coefficients);

    let mut delays = DelayAccumulator::default();
    let mut departures = 0u64;
    let mut queue_hist = Vec::new();
    let mut bulk_hist = vec![0u64; engine.max_bulk + 1];

    for slot in 0..sim.slots {
        let arrived = arrival.sample(&mut arrival_rng);
        let received = channel.sample(&mut channel_rng);
        engine.arrive(slot, arrived);
        if let Some(obs) = engine.observe_epoch() {
            // the departure happened in the previous slot
            if slot > sim.warmup_slots {
                departures += 1;
                stats::bump(&mut queue_hist, obs.queue_len);
                stats::bump(&mut bulk_hist, obs.bulk_size);
            }
        }
        engine.form_bulk();
        if engine.transmit(received, &mut coeff_rng)? {
            for p in engine.completed() {
                let delay = slot - p.arrival_slot + 1;
                on_delivery(p, delay);
                if p.arrival_slot >= sim.warmup_slots {
                    delays.push(delay as f64);
                }
            }
        }
    }

    Ok(SimStats {
        delivered: delays.count(),
        mean_delay: delays.mean(),
        delay_variance: delays.variance(),
        std_error: delays.std_error(),
        ci95_halfwidth: delays.ci95_halfwidth(),
        batches: delays.batch_count(),
        departures,
        departure_queue_histogram: queue_hist,
        bulk_size_histogram: bulk_hist,
        arrivals: engine.arrivals(),
        backlog: (engine.queue().len() + engine.in_service().len()) as u64,
    })
}

/// Normalized histogram of the queue length at departure epochs.
pub fn empirical_departure_distribution(protocol: &ProtocolConfig, sim: &SimConfig) -> Result<Vec<f64>> {
    Ok(simulate(protocol, sim)?.departure_distribution())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::analytics::{retransmission_delay, ChannelParams};
    use proptest::prelude::*;

    fn rlc_inf(k: usize) -> ProtocolConfig {
        ProtocolConfig::rlc(k, FieldSpec::Infinite, CodingMode::Good, Fidelity::RankMarkov)
    }

    #[test]
    fn light_load_retransmission() {
        let sim = SimConfig::new(0.01, 0.5, 1_000_000, 1);
        let stats = simulate(&ProtocolConfig::retransmission(), &sim).unwrap();
        let expected = retransmission_delay(ChannelParams::new(0.5, 0.01).unwrap()).unwrap().delay;
        assert!(
            (stats.mean_delay - expected).abs() < 3.0 * stats.std_error,
            "{} vs {expected} (se {})",
            stats.mean_delay,
            stats.std_error
        );
        assert!(stats.mean_delay >= 1.0);
    }

    #[test]
    fn identical_seeds_identical_stats() {
        let p = ProtocolConfig::rlc(3, FieldSpec::finite(4).unwrap(), CodingMode::Bad, Fidelity::VectorExact);
        let sim = SimConfig::new(0.2, 0.6, 200_000, 9);
        assert_eq!(simulate(&p, &sim).unwrap(), simulate(&p, &sim).unwrap());
        let other = SimConfig::new(0.2, 0.6, 200_000, 10);
        assert_ne!(simulate(&p, &sim).unwrap(), simulate(&p, &other).unwrap());
    }

    #[test]
    fn single_packet_rlc_equals_retransmission() {
        let sim = SimConfig::new(0.3, 0.5, 200_000, 4);
        let trace = |p: &ProtocolConfig| {
            let mut out = Vec::new();
            simulate_with(p, &sim, |pkt, d| out.push((pkt.id, d))).unwrap();
            out
        };
        let retx = trace(&ProtocolConfig::retransmission());
        assert!(!retx.is_empty());
        assert_eq!(retx, trace(&rlc_inf(1)));
        let gf2 = FieldSpec::finite(2).unwrap();
        assert_eq!(retx, trace(&ProtocolConfig::rlc(1, gf2, CodingMode::Bad, Fidelity::VectorExact)));
    }

    #[test]
    fn histograms_count_departures() {
        let sim = SimConfig::new(0.3, 0.5, 300_000, 5);
        let s = simulate(&rlc_inf(4), &sim).unwrap();
        assert_eq!(s.departure_queue_histogram.iter().sum::<u64>(), s.departures);
        assert_eq!(s.bulk_size_histogram.iter().sum::<u64>(), s.departures);
        assert_eq!(s.bulk_size_histogram[0], 0);
        assert!(s.bulk_size_histogram.len() == 5);
    }

    #[test]
    fn zero_load_departures_see_empty_queue() {
        let sim = SimConfig::new(0.001, 0.9, 500_000, 6);
        let d = empirical_departure_distribution(&rlc_inf(4), &sim).unwrap();
        assert!(d[0] > 0.99);
    }

    #[test]
    fn invalid_configs() {
        let p = ProtocolConfig::rlc(2, FieldSpec::Infinite, CodingMode::Good, Fidelity::VectorExact);
        assert_eq!(simulate(&p, &SimConfig::new(0.1, 0.5, 1000, 0)), Err(Error::NotSimulatable));
        let bad_warmup = SimConfig::new(0.1, 0.5, 1000, 0).with_warmup(1000);
        assert!(simulate(&rlc_inf(2), &bad_warmup).is_err());
        assert!(simulate(&rlc_inf(0), &SimConfig::new(0.1, 0.5, 1000, 0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn packets_are_conserved(
            k in 1usize..6,
            lambda in 0.0f64..0.9,
            q in 0.05f64..1.0,
            field in prop::sample::select(vec![0u32, 2, 3, 16]),
            bad in any::<bool>(),
            vector in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let field = if field == 0 { FieldSpec::Infinite } else { FieldSpec::finite(field).unwrap() };
            let fidelity = if vector && !field.is_infinite() { Fidelity::VectorExact } else { Fidelity::RankMarkov };
            let mode = if bad { CodingMode::Bad } else { CodingMode::Good };
            let protocol = ProtocolConfig::rlc(k, field, mode, fidelity);
            let mut engine = Engine::new(&protocol).unwrap();
            let mut rng = stream_rng(seed, Stream::Coefficients);
            let mut last_arrival = 0;
            for slot in 0..2000u64 {
                engine.arrive(slot, rng.random_bool(lambda));
                engine.observe_epoch();
                engine.form_bulk();
                prop_assert!(engine.in_service().len() <= k);
                engine.transmit(rng.random_bool(q), &mut rng).unwrap();
                prop_assert_eq!(
                    engine.arrivals(),
                    engine.delivered() + engine.queue().len() as u64 + engine.in_service().len() as u64
                );
                prop_assert!(engine.rank() <= engine.in_service().len().max(k));
                if let Some(p) = engine.queue().back() {
                    prop_assert!(p.arrival_slot >= last_arrival);
                    last_arrival = p.arrival_slot;
                }
            }
        }
    }
}
