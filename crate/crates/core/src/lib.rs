//! Delay analysis and simulation of random linear coding (RLC) versus plain
//! retransmission over a slotted erasure link with Bernoulli arrivals.
//!
//! * [`gf`]: finite fields, coefficient sampling and receiver rank tracking.
//! * [`service`]: bulk service-time distributions per field and coding mode.
//! * [`analytics`]: embedded-chain boundary solution and delay formulas.
//! * [`sim`]: slot-level simulator, statistics and the coupling harness.

pub mod analytics;
pub mod error;
pub mod gf;
pub mod service;
pub mod sim;

pub use analytics::{
    bulk_distribution, delay_finite_lower, delay_infinite_exact, delay_littles_approx, delay_ratio_bound,
    delay_report, mean_queue_at_departure, queue_pgf_eval, retransmission_delay, stability_threshold,
    stationary_boundary, BulkDistribution, ChannelParams, DelayReport, StationaryBoundary,
};
pub use error::{Error, Result};
pub use gf::{CodingMode, FieldSpec, GaloisField, RankState};
pub use service::{ModelFamily, ServiceTimeModel};
pub use sim::{
    coupled_run, empirical_departure_distribution, simulate, simulate_with, CouplingConfig, Fidelity,
    ProtocolConfig, ProtocolKind, SimConfig, SimStats,
};
