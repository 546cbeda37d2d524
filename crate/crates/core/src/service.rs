//! Bulk service-time distributions.
//!
//! Serving a bulk of `k` packets is a walk through receiver ranks
//! `0, 1, .., k`. In each slot the rank moves from `r` to `r + 1` with
//! probability `g_r = q * p_r`, where `p_r` is the chance that a fresh
//! coefficient vector is independent of the `r` already collected. The
//! service time `X_k` is therefore a sum of independent geometric stage
//! times and its p.g.f. is
//!
//! ```text
//! b_k(w) = prod_r  g_r w / (1 - (1 - g_r) w)
//! ```

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::gf::{CodingMode, FieldSpec};

/// Minimum distance kept between a p.g.f. argument and the nearest pole.
pub const POLE_TOLERANCE: f64 = 1e-9;

/// Probability that a freshly drawn coefficient vector raises the rank of a
/// size-`k` bulk from `r` to `r + 1`.
pub fn useful_probability(field: &FieldSpec, k: usize, r: usize, mode: CodingMode) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("bulk size must be at least 1".into()));
    }
    if r > k {
        return Err(Error::InvalidRank { rank: r, bulk: k });
    }
    if r == k {
        return Ok(0.0);
    }
    let q = match field.order() {
        None => return Ok(1.0),
        Some(q) => q as f64,
    };
    // (Q^k - Q^r) / Q^k  and  (Q^k - Q^r) / (Q^k - 1), written in negative
    // powers to stay finite for large Q^k.
    let missing = 1.0 - q.powi(r as i32 - k as i32);
    Ok(if mode == CodingMode::Bad && k >= 2 {
        missing
    } else {
        missing / (1.0 - q.powi(-(k as i32)))
    })
}

/// First two moments of a service time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// E[X (X - 1)]
    pub factorial2: f64,
}

/// Distribution of the service time of one bulk.
#[derive(Debug, Clone)]
pub struct ServiceTimeModel {
    stages: Vec<f64>,
    q: f64,
    field: FieldSpec,
    mode: CodingMode,
}

impl ServiceTimeModel {
    pub fn build(q: f64, field: &FieldSpec, k: usize, mode: CodingMode) -> Result<Self> {
        check_probability(q)?;
        if k == 0 {
            return Err(Error::InvalidParameter("bulk size must be at least 1".into()));
        }
        let stages = (0..k)
            .map(|r| useful_probability(field, k, r, mode).map(|p| q * p))
            .collect::<Result<Vec<_>>>()?;
        Ok(ServiceTimeModel {
            stages,
            q,
            field: field.clone(),
            mode,
        })
    }

    /// A model from explicit stage probabilities, each in (0, 1].
    pub fn from_stages(stages: Vec<f64>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidParameter("at least one stage is required".into()));
        }
        for &g in &stages {
            check_probability(g)?;
        }
        let q = stages.iter().cloned().fold(0.0, f64::max);
        Ok(ServiceTimeModel {
            stages,
            q,
            field: FieldSpec::Infinite,
            mode: CodingMode::Good,
        })
    }

    pub fn bulk_size(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[f64] {
        &self.stages
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn mode(&self) -> CodingMode {
        self.mode
    }

    /// Radius of convergence of the p.g.f. (the nearest pole), infinite when
    /// every stage succeeds surely.
    pub fn nearest_pole(&self) -> f64 {
        self.stages
            .iter()
            .filter(|&&g| g < 1.0)
            .map(|&g| 1.0 / (1.0 - g))
            .fold(f64::INFINITY, f64::min)
    }

    /// Evaluates b_k(w).
    pub fn pgf(&self, w: Complex64) -> Result<Complex64> {
        self.check_argument(w)?;
        Ok(self.pgf_unchecked(w))
    }

    /// Evaluates b_k'(w).
    pub fn pgf_derivative(&self, w: Complex64) -> Result<Complex64> {
        self.check_argument(w)?;
        Ok(self.pgf_with_derivative(w).1)
    }

    fn check_argument(&self, w: Complex64) -> Result<()> {
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite p.g.f. argument {w}")));
        }
        let pole = self.nearest_pole();
        if w.norm() > pole - POLE_TOLERANCE {
            return Err(Error::PoleProximity { w, pole });
        }
        Ok(())
    }

    pub(crate) fn pgf_unchecked(&self, w: Complex64) -> Complex64 {
        self.stages
            .iter()
            .map(|&g| stage_factor(g, w))
            .product()
    }

    /// (b(w), b'(w)) via the product rule.
    pub(crate) fn pgf_with_derivative(&self, w: Complex64) -> (Complex64, Complex64) {
        let mut value = Complex64::new(1.0, 0.0);
        let mut deriv = Complex64::new(0.0, 0.0);
        for &g in &self.stages {
            let f = stage_factor(g, w);
            let denom = 1.0 - (1.0 - g) * w;
            let df = g / (denom * denom);
            deriv = deriv * f + value * df;
            value *= f;
        }
        (value, deriv)
    }

    pub fn moments(&self) -> Moments {
        let mean: f64 = self.stages.iter().map(|g| 1.0 / g).sum();
        let variance: f64 = self.stages.iter().map(|g| (1.0 - g) / (g * g)).sum();
        Moments {
            mean,
            variance,
            factorial2: variance + mean * mean - mean,
        }
    }

    /// Draws one service time in slots (always at least the bulk size).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.stages
            .iter()
            .map(|&g| {
                if g >= 1.0 {
                    1
                } else {
                    // failures before the first success
                    1 + Geometric::new(g).expect("stage probability in (0,1)").sample(rng)
                }
            })
            .sum()
    }
}

fn stage_factor(g: f64, w: Complex64) -> Complex64 {
    if g >= 1.0 {
        w
    } else {
        g * w / (1.0 - (1.0 - g) * w)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("probability {p} outside (0, 1]")))
    }
}

/// Service models b_1..b_K for one protocol, with b_0 = b_1.
#[derive(Debug, Clone)]
pub struct ModelFamily {
    models: Vec<ServiceTimeModel>,
}

impl ModelFamily {
    pub fn build(q: f64, field: &FieldSpec, max_bulk: usize, mode: CodingMode) -> Result<Self> {
        if max_bulk == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        let models = (1..=max_bulk)
            .map(|k| ServiceTimeModel::build(q, field, k, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelFamily { models })
    }

    /// Wraps explicit models; `models[k - 1]` must serve bulks of size `k`.
    pub fn from_models(models: Vec<ServiceTimeModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParameter("empty model family".into()));
        }
        for (i, m) in models.iter().enumerate() {
            if m.bulk_size() != i + 1 {
                return Err(Error::InvalidParameter(format!(
                    "model {i} serves {} packets, expected {}",
                    m.bulk_size(),
                    i + 1
                )));
            }
        }
        Ok(ModelFamily { models })
    }

    pub fn max_bulk(&self) -> usize {
        self.models.len()
    }

    /// Model for a bulk of size `k`; `k = 0` maps to the size-1 model.
    pub fn bulk(&self, k: usize) -> &ServiceTimeModel {
        &self.models[k.max(1) - 1]
    }

    pub fn largest(&self) -> &ServiceTimeModel {
        self.models.last().expect("non-empty family")
    }
}
