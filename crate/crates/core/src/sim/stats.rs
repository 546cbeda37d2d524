use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Fewest batches kept by the batch-means estimator; the count stays in
/// `MIN_BATCHES..2 * MIN_BATCHES`.
pub const MIN_BATCHES: usize = 32;

/// Streaming mean/variance of packet delays with a batch-means standard
/// error. Consecutive delays are strongly correlated, so the naive
/// `sd / sqrt(n)` would understate the error. Batches are contiguous runs of
/// deliveries; when `2 * MIN_BATCHES` batches are full, neighbours merge and
/// the batch length doubles.
#[derive(Debug, Clone)]
pub struct DelayAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    batch_len: u64,
    batches: Vec<f64>,
    current_sum: f64,
    current_len: u64,
}

impl Default for DelayAccumulator {
    fn default() -> Self {
        DelayAccumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            batch_len: 1,
            batches: Vec::with_capacity(2 * MIN_BATCHES),
            current_sum: 0.0,
            current_len: 0,
        }
    }
}

impl DelayAccumulator {
    pub fn push(&mut self, delay: f64) {
        self.count += 1;
        let d = delay - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (delay - self.mean);

        self.current_sum += delay;
        self.current_len += 1;
        if self.current_len == self.batch_len {
            self.batches.push(self.current_sum / self.batch_len as f64);
            self.current_sum = 0.0;
            self.current_len = 0;
            if self.batches.len() == 2 * MIN_BATCHES {
                self.batches = self
                    .batches
                    .chunks(2)
                    .map(|c| 0.5 * (c[0] + c[1]))
                    .collect();
                self.batch_len *= 2;
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// Standard error of the mean from complete batches.
    pub fn std_error(&self) -> f64 {
        let n = self.batches.len();
        if n < 2 {
            return f64::NAN;
        }
        let m = self.batches.iter().sum::<f64>() / n as f64;
        let var = self.batches.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    pub fn ci95_halfwidth(&self) -> f64 {
        let n = self.batches.len();
        if n < 2 {
            return f64::NAN;
        }
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(1.96);
        t * self.std_error()
    }
}

/// Measured delay statistics and departure-epoch histograms for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// Delivered packets that arrived after warmup.
    pub delivered: u64,
    pub mean_delay: f64,
    pub delay_variance: f64,
    /// Batch-means standard error of `mean_delay`.
    pub std_error: f64,
    pub ci95_halfwidth: f64,
    pub batches: usize,
    /// Departure epochs after warmup; both histograms sum to this.
    pub departures: u64,
    /// Queue length at each departure epoch, indexed by length.
    pub departure_queue_histogram: Vec<u64>,
    /// Served bulk sizes, indexed by size (index 0 unused).
    pub bulk_size_histogram: Vec<u64>,
    pub arrivals: u64,
    /// Packets still queued or in service when the run ended.
    pub backlog: u64,
}

impl SimStats {
    pub fn departure_distribution(&self) -> Vec<f64> {
        normalize(&self.departure_queue_histogram)
    }

    /// Empirical B_k, index 0 holding bulks of size 1.
    pub fn bulk_distribution(&self) -> Vec<f64> {
        normalize(self.bulk_size_histogram.get(1..).unwrap_or(&[]))
    }
}

fn normalize(h: &[u64]) -> Vec<f64> {
    let total: u64 = h.iter().sum();
    h.iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

pub(crate) fn bump(h: &mut Vec<u64>, index: usize) {
    if h.len() <= index {
        h.resize(index + 1, 0);
    }
    h[index] += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn welford_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64).collect();
        let mut acc = DelayAccumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_relative_eq!(acc.mean(), m, epsilon = 1e-10);
        assert_relative_eq!(acc.variance(), v, max_relative = 1e-10);
    }

    #[test]
    fn batch_count_stays_bounded() {
        let mut acc = DelayAccumulator::default();
        for i in 0..100_000 {
            acc.push(i as f64 % 7.0);
            assert!(acc.batch_count() < 2 * MIN_BATCHES);
        }
        assert!(acc.batch_count() >= MIN_BATCHES);
        assert!(acc.ci95_halfwidth() > acc.std_error() * 1.9);
    }

    #[test]
    fn constant_delays_have_zero_error() {
        let mut acc = DelayAccumulator::default();
        (0..500).for_each(|_| acc.push(3.0));
        assert_eq!(acc.std_error(), 0.0);
    }
}
