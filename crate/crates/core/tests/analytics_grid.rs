//! Analytic invariants over the stable operating grid.

use num_complex::Complex64;
use rlc_arq::analytics::{denominator_roots, ROOT_RESIDUAL};
use rlc_arq::*;

const QS: [f64; 2] = [0.5, 0.9];
const KS: [usize; 4] = [1, 2, 4, 8];

fn fields() -> Vec<(FieldSpec, CodingMode)> {
    let mut out = Vec::new();
    for f in [FieldSpec::finite(2).unwrap(), FieldSpec::finite(16).unwrap(), FieldSpec::Infinite] {
        for m in [CodingMode::Good, CodingMode::Bad] {
            out.push((f.clone(), m));
        }
    }
    out
}

/// (q, lambda) at 0.1..0.9 of the threshold.
fn loads(threshold: f64, q: f64) -> impl Iterator<Item = ChannelParams> {
    (1..=9).map(move |i| ChannelParams::new(q, threshold * i as f64 / 10.0).unwrap())
}

/// z^K - b_K(lambda z + 1 - lambda), straight from the model.
fn denominator(model: &ServiceTimeModel, lambda: f64, z: Complex64) -> Complex64 {
    let w = z * lambda + (1.0 - lambda);
    z.powi(model.bulk_size() as i32) - model.pgf(w).unwrap()
}

#[test]
fn interior_roots_on_grid() {
    for q in QS {
        for k in KS {
            for (field, mode) in fields() {
                let family = ModelFamily::build(q, &field, k, mode).unwrap();
                let threshold = stability_threshold(q, k, &field, mode).unwrap();
                for p in loads(threshold, q) {
                    let roots = denominator_roots(p, &family)
                        .unwrap_or_else(|e| panic!("q={q} K={k} {field} {mode} λ={}: {e}", p.lambda()));
                    assert_eq!(roots.len(), k - 1);
                    for z in roots {
                        assert!(z.norm() < 1.0);
                        let r = denominator(family.largest(), p.lambda(), z).norm();
                        assert!(r < ROOT_RESIDUAL, "residual {r} at {z}");
                    }
                }
            }
        }
    }
}

#[test]
fn boundary_probabilities_are_valid_on_grid() {
    for q in QS {
        for k in KS {
            for (field, mode) in fields() {
                let family = ModelFamily::build(q, &field, k, mode).unwrap();
                let threshold = stability_threshold(q, k, &field, mode).unwrap();
                for p in loads(threshold, q) {
                    let b = stationary_boundary(p, &family).unwrap();
                    assert!(b.probabilities().iter().all(|&x| (0.0..=1.0).contains(&x)));
                    assert!(b.probabilities().iter().sum::<f64>() <= 1.0 + 1e-9);
                    let bulks = b.bulk_distribution();
                    assert!((bulks.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn mean_queue_matches_numerical_derivative_on_grid() {
    for q in QS {
        for k in KS {
            for (field, mode) in fields() {
                let family = ModelFamily::build(q, &field, k, mode).unwrap();
                let threshold = stability_threshold(q, k, &field, mode).unwrap();
                for p in loads(threshold, q) {
                    let b = stationary_boundary(p, &family).unwrap();
                    let f = |x: f64| b.pgf(Complex64::new(x, 0.0)).unwrap().re;
                    // N and D vanish together at 1; Richardson keeps the step large
                    let central = |h: f64| (f(1.0 + h) - f(1.0 - h)) / (2.0 * h);
                    let h = 1e-3 * (1.0 - p.lambda() / threshold).min(0.1).max(0.02);
                    let numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
                    let s = b.mean_queue();
                    assert!(
                        (s - numeric).abs() <= 1e-6 * s.abs().max(1e-3),
                        "q={q} K={k} {field} {mode} λ={}: {s} vs {numeric}",
                        p.lambda()
                    );
                }
            }
        }
    }
}

#[test]
fn littles_approximation_underestimates_exact_delay() {
    for q in QS {
        for k in KS {
            let family = ModelFamily::build(q, &FieldSpec::Infinite, k, CodingMode::Good).unwrap();
            for p in loads(q, q) {
                let s = stationary_boundary(p, &family).unwrap().mean_queue();
                let approx = delay_littles_approx(s, p.lambda()).unwrap();
                let exact = delay_infinite_exact(p, k).unwrap();
                if k == 1 {
                    assert!((approx - exact).abs() < 1e-9 * exact);
                } else {
                    assert!(approx < exact, "K={k} λ={}: {approx} vs {exact}", p.lambda());
                }
            }
        }
    }
}

#[test]
fn exact_delay_non_decreasing_in_bulk_size() {
    for q in QS {
        for p in loads(q, q) {
            let d: Vec<f64> = KS.iter().map(|&k| delay_infinite_exact(p, k).unwrap()).collect();
            assert!(d.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)), "{d:?}");
        }
    }
}

#[test]
fn lower_bound_consistency() {
    for q in QS {
        for k in KS {
            for p in loads(q, q) {
                let exact = delay_infinite_exact(p, k).unwrap();
                let lower = delay_finite_lower(p, k, &FieldSpec::Infinite, CodingMode::Good).unwrap();
                assert!((exact - lower).abs() <= 1e-12 * exact);
                for (field, mode) in fields() {
                    let threshold = stability_threshold(q, k, &field, mode).unwrap();
                    if p.lambda() < 0.9 * threshold {
                        assert!(delay_finite_lower(p, k, &field, mode).unwrap() >= exact * (1.0 - 1e-12));
                    }
                }
            }
        }
    }
}

#[test]
fn ratio_bound_dominates_on_grid() {
    for q in QS {
        for k in KS {
            for p in loads(q, q) {
                let ratio = delay_infinite_exact(p, k).unwrap() / retransmission_delay(p).unwrap().delay;
                let bound = delay_ratio_bound(p, k).unwrap();
                assert!(ratio <= bound * (1.0 + 1e-12), "K={k} λ={}: {ratio} > {bound}", p.lambda());
            }
        }
    }
}

#[test]
fn unit_bulk_exact_equals_retransmission() {
    for q in QS {
        for p in loads(q, q) {
            let d = delay_infinite_exact(p, 1).unwrap();
            assert!((d - retransmission_delay(p).unwrap().delay).abs() < 1e-12);
        }
    }
}
