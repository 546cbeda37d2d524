//! Fast self-check run by the `validate` subcommand: simulator against the
//! closed forms, the coupling harness and its fault injection.

use rlc_arq::sim::{derive_seed, run_coupled};
use rlc_arq::{
    delay_infinite_exact, retransmission_delay, simulate, simulate_with, stability_threshold,
    stationary_boundary, ChannelParams, CodingMode, CouplingConfig, FieldSpec, Fidelity, ModelFamily,
    ProtocolConfig, SimConfig,
};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn within_3se(name: String, simulated: f64, se: f64, expected: f64) -> Check {
    let passed = (simulated - expected).abs() <= 3.0 * se;
    Check::new(name, passed, format!("simulated {simulated:.5} ± {se:.5}, expected {expected:.5}"))
}

/// Runs every check with `slots` per simulation.
pub fn run_validation(slots: u64, master_seed: u64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let seed = |path: &[u64]| derive_seed(master_seed, path);
    let inf = |k| ProtocolConfig::rlc(k, FieldSpec::Infinite, CodingMode::Good, Fidelity::RankMarkov);

    for (i, q) in [0.5, 0.9].into_iter().enumerate() {
        let lambda = 0.5 * q;
        let params = ChannelParams::new(q, lambda)?;
        let s = simulate(&ProtocolConfig::retransmission(), &SimConfig::new(lambda, q, slots, seed(&[0, i as u64])))?;
        let expected = retransmission_delay(params)?.delay;
        checks.push(within_3se(format!("retransmission delay q={q}"), s.mean_delay, s.std_error, expected));

        let s = simulate(&inf(4), &SimConfig::new(lambda, q, slots, seed(&[1, i as u64])))?;
        let expected = delay_infinite_exact(params, 4)?;
        checks.push(within_3se(format!("infinite-field RLC(4) delay q={q}"), s.mean_delay, s.std_error, expected));

        for k in [1, 2, 4] {
            let report = run_coupled(&CouplingConfig {
                lambda,
                q,
                max_bulk: k,
                slots,
                arrival_seed: seed(&[2, i as u64, k as u64]),
                channel_seed: seed(&[3, i as u64, k as u64]),
                fault_slot: None,
            })?;
            checks.push(Check::new(
                format!("coupling K={k} q={q}"),
                report.total_violations == 0,
                format!("{} selection moments, {} violations", report.selection_moments, report.total_violations),
            ));
        }
    }

    let faulty = run_coupled(&CouplingConfig {
        lambda: 0.25,
        q: 0.5,
        max_bulk: 4,
        slots: slots.min(200_000),
        arrival_seed: seed(&[4]),
        channel_seed: seed(&[5]),
        fault_slot: Some(slots.min(200_000) / 2),
    })?;
    checks.push(Check::new(
        "coupling fault injection detected",
        faulty.total_violations > 0,
        format!("{} violations after fault at {:?}", faulty.total_violations, faulty.fault_applied_at),
    ));

    let sim = SimConfig::new(0.3, 0.5, slots, seed(&[6]));
    let trace = |p: &ProtocolConfig| -> Result<Vec<(u64, u64)>, CliError> {
        let mut out = Vec::new();
        simulate_with(p, &sim, |pkt, d| out.push((pkt.id, d)))?;
        Ok(out)
    };
    let same = trace(&ProtocolConfig::retransmission())? == trace(&inf(1))?;
    checks.push(Check::new("single-packet RLC equals retransmission", same, String::new()));

    let (q, lambda) = (0.5, 0.2);
    let family = ModelFamily::build(q, &FieldSpec::Infinite, 2, CodingMode::Good)?;
    let boundary = stationary_boundary(ChannelParams::new(q, lambda)?, &family)?;
    let stats = simulate(&inf(2), &SimConfig::new(lambda, q, slots, seed(&[7])))?;
    let tv = total_variation(&stats.departure_distribution(), &boundary.departure_distribution(512)?);
    checks.push(Check::new(
        "departure-epoch distribution K=2",
        tv < 0.01 || stats.departures < 100_000,
        format!("total variation {tv:.5} over {} departures", stats.departures),
    ));

    let t = stability_threshold(1.0, 2, &FieldSpec::finite(2)?, CodingMode::Good)?;
    checks.push(Check::new("GF(2) K=2 saturation point", (t - 0.8).abs() < 1e-12, format!("{t}")));
    let t = stability_threshold(0.5, 4, &FieldSpec::Infinite, CodingMode::Good)?;
    checks.push(Check::new("infinite-field saturation point", t == 0.5, format!("{t}")));
    Ok(checks)
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..a.len().max(b.len())).map(|i| (at(a, i) - at(b, i)).abs()).sum::<f64>()
}
