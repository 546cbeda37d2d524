//! Deterministic random streams.
//!
//! Each simulation consumes three streams (arrivals, channel outcomes,
//! coefficient draws). A stream is a PCG-XSL-RR 128/64 generator whose
//! increment is fixed by the stream's role, so two roles never share a
//! sequence even when handed the same seed.

use rand::{RngCore, SeedableRng};
use rand_pcg::{Pcg64, Pcg64Mcg};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Arrivals,
    Channel,
    Coefficients,
    /// Seed derivation for sweeps.
    Derive,
}

impl Stream {
    fn id(self) -> u128 {
        match self {
            Stream::Arrivals => 0xa11e_5eed,
            Stream::Channel => 0xc4a7_7e15,
            Stream::Coefficients => 0xc0ef_f1c1,
            Stream::Derive => 0xde71_7e5d,
        }
    }
}

fn state_from(seed: u64) -> u128 {
    let mut expand = Pcg64Mcg::seed_from_u64(seed);
    ((expand.next_u64() as u128) << 64) | expand.next_u64() as u128
}

pub fn stream_rng(seed: u64, stream: Stream) -> Pcg64 {
    Pcg64::new(state_from(seed), stream.id())
}

/// Seeds for the three streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub arrivals: u64,
    pub channel: u64,
    pub coefficients: u64,
}

impl StreamSeeds {
    pub fn from_master(master: u64) -> Self {
        let mut split = stream_rng(master, Stream::Derive);
        StreamSeeds {
            arrivals: split.next_u64(),
            channel: split.next_u64(),
            coefficients: split.next_u64(),
        }
    }
}

/// Child seed for a position in a sweep (e.g. `[curve, lambda_index]`).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &p| {
        let mut g = Pcg64::new(state_from(acc), Stream::Derive.id() ^ ((p as u128) << 64));
        g.next_u64()
    })
}
