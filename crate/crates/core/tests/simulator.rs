//! Simulator against analytic oracles and its own invariants.

use num_complex::Complex64;
use proptest::prelude::*;
use rlc_arq::sim::{run_coupled, Engine, Stream};
use rlc_arq::*;

fn inf(k: usize) -> ProtocolConfig {
    ProtocolConfig::rlc(k, FieldSpec::Infinite, CodingMode::Good, Fidelity::RankMarkov)
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(a, i) - at(b, i)).abs()).sum::<f64>()
}

fn departures_target(stats: &SimStats) -> bool {
    stats.departures >= 1_000_000
}

#[test]
fn single_service_departure_distribution() {
    let (q, lambda) = (0.5, 0.25);
    let stats = simulate(&inf(1), &SimConfig::new(lambda, q, 4_500_000, 3)).unwrap();
    assert!(departures_target(&stats));
    let emp = stats.departure_distribution();
    assert!((emp[0] - (1.0 - lambda / q)).abs() < 0.01, "P0 = {}", emp[0]);
    let family = ModelFamily::build(q, &FieldSpec::Infinite, 1, CodingMode::Good).unwrap();
    let b = stationary_boundary(ChannelParams::new(q, lambda).unwrap(), &family).unwrap();
    let exact = b.departure_distribution(512).unwrap();
    assert!(total_variation(&emp, &exact) < 0.01);
}

#[test]
fn departure_pgf_matches_histogram() {
    let (q, lambda) = (0.5, 0.2);
    let stats = simulate(&inf(1), &SimConfig::new(lambda, q, 5_000_000, 4)).unwrap();
    let family = ModelFamily::build(q, &FieldSpec::Infinite, 1, CodingMode::Good).unwrap();
    let b = stationary_boundary(ChannelParams::new(q, lambda).unwrap(), &family).unwrap();
    let emp: f64 = stats
        .departure_distribution()
        .iter()
        .enumerate()
        .map(|(i, p)| p * 0.5f64.powi(i as i32))
        .sum();
    let exact = queue_pgf_eval(&b, Complex64::new(0.5, 0.0)).unwrap().re;
    assert!((emp - exact).abs() < 0.01, "{emp} vs {exact}");
}

#[test]
fn bulk_chain_matches_boundary_solution() {
    let (q, lambda) = (0.5, 0.2);
    let stats = simulate(&inf(2), &SimConfig::new(lambda, q, 12_000_000, 5)).unwrap();
    assert!(departures_target(&stats));
    let family = ModelFamily::build(q, &FieldSpec::Infinite, 2, CodingMode::Good).unwrap();
    let b = stationary_boundary(ChannelParams::new(q, lambda).unwrap(), &family).unwrap();
    let tv = total_variation(&stats.departure_distribution(), &b.departure_distribution(512).unwrap());
    assert!(tv < 0.01, "departure TV {tv}");
    let tv = total_variation(&stats.bulk_distribution(), b.bulk_distribution().probabilities());
    assert!(tv < 0.01, "bulk TV {tv}");
}

#[test]
fn infinite_field_delay_matches_exact_formula() {
    let (q, lambda) = (0.5, 0.25);
    let stats = simulate(&inf(4), &SimConfig::new(lambda, q, 10_000_000, 6)).unwrap();
    let exact = delay_infinite_exact(ChannelParams::new(q, lambda).unwrap(), 4).unwrap();
    assert!(
        (stats.mean_delay - exact).abs() < 3.0 * stats.std_error,
        "{} ± {} vs {exact}",
        stats.mean_delay,
        stats.std_error
    );
}

#[test]
fn coupling_holds_at_half_load() {
    let report = run_coupled(&CouplingConfig {
        lambda: 0.25,
        q: 0.5,
        max_bulk: 4,
        slots: 1_000_000,
        arrival_seed: 11,
        channel_seed: 12,
        fault_slot: None,
    })
    .unwrap();
    assert_eq!(report.total_violations, 0);
    assert!(report.selection_moments > 100_000);
}

#[test]
fn good_coding_beats_bad_for_small_fields() {
    let (q, lambda) = (0.5, 0.25);
    let run = |mode| {
        let p = ProtocolConfig::rlc(2, FieldSpec::finite(2).unwrap(), mode, Fidelity::RankMarkov);
        simulate(&p, &SimConfig::new(lambda, q, 2_000_000, 7)).unwrap()
    };
    let (good, bad) = (run(CodingMode::Good), run(CodingMode::Bad));
    let sigma = (good.std_error.powi(2) + bad.std_error.powi(2)).sqrt();
    assert!(good.mean_delay + 3.0 * sigma < bad.mean_delay);
}

#[test]
fn delay_falls_with_field_size() {
    let (q, lambda) = (0.5, 0.25);
    let means: Vec<(f64, f64)> = [FieldSpec::finite(2).unwrap(), FieldSpec::finite(16).unwrap(), FieldSpec::Infinite]
        .into_iter()
        .map(|f| {
            let p = ProtocolConfig::rlc(4, f, CodingMode::Good, Fidelity::RankMarkov);
            let s = simulate(&p, &SimConfig::new(lambda, q, 2_000_000, 8)).unwrap();
            (s.mean_delay, s.std_error)
        })
        .collect();
    for w in means.windows(2) {
        assert!(w[0].0 + 3.0 * w[0].1 >= w[1].0 - 3.0 * w[1].1, "{means:?}");
    }
}

#[test]
fn fidelities_agree() {
    let p = |fidelity| ProtocolConfig::rlc(3, FieldSpec::finite(2).unwrap(), CodingMode::Bad, fidelity);
    let sim = SimConfig::new(0.2, 0.5, 1_000_000, 9);
    let v = simulate(&p(Fidelity::VectorExact), &sim).unwrap();
    let m = simulate(&p(Fidelity::RankMarkov), &sim).unwrap();
    assert!((v.mean_delay - m.mean_delay).abs() <= v.ci95_halfwidth + m.ci95_halfwidth);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equal_seeds_reproduce(
        seed in any::<u64>(),
        k in 1usize..5,
        lambda in 0.05f64..0.6,
        vector in any::<bool>(),
    ) {
        let fidelity = if vector { Fidelity::VectorExact } else { Fidelity::RankMarkov };
        let p = ProtocolConfig::rlc(k, FieldSpec::finite(4).unwrap(), CodingMode::Bad, fidelity);
        let sim = SimConfig::new(lambda, 0.7, 20_000, seed);
        let a = simulate(&p, &sim).unwrap();
        let b = simulate(&p, &sim).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.delivered == 0 || a.mean_delay >= 1.0);
        prop_assert_eq!(a.departure_queue_histogram.iter().sum::<u64>(), a.departures);
    }

    #[test]
    fn engine_conserves_packets_and_fifo(
        seed in any::<u64>(),
        k in 1usize..6,
        lambda in 0.0f64..1.0,
        q in 0.05f64..1.0,
    ) {
        use rand::Rng;
        let mut engine = Engine::new(&ProtocolConfig::rlc(k, FieldSpec::finite(2).unwrap(), CodingMode::Good, Fidelity::VectorExact)).unwrap();
        let mut rng = sim::stream_rng(seed, Stream::Arrivals);
        for slot in 0..3000u64 {
            engine.arrive(slot, rng.random_bool(lambda));
            engine.observe_epoch();
            engine.form_bulk();
            if engine.transmit(rng.random_bool(q), &mut rng).unwrap() {
                let done = engine.completed();
                prop_assert!(done.windows(2).all(|w| w[0].arrival_slot <= w[1].arrival_slot));
                prop_assert!(done.iter().all(|p| p.arrival_slot <= slot));
            }
            prop_assert_eq!(
                engine.arrivals(),
                engine.delivered() + (engine.queue().len() + engine.in_service().len()) as u64
            );
            let ages: Vec<u64> = engine.in_service().iter().chain(engine.queue()).map(|p| p.arrival_slot).collect();
            prop_assert!(ages.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
