//! Closed-form and semi-analytic delay computations.
//!
//! The embedded chain observed right after each bulk departure has p.g.f.
//!
//! ```text
//!          sum_{k<K} P_k (z^K b_k(beta(z)) - z^k b_K(beta(z)))
//! P(z) = -----------------------------------------------------,  beta(z) = lambda z + 1 - lambda
//!                     z^K - b_K(beta(z))
//! ```
//!
//! The denominator has K - 1 zeros strictly inside the unit disk besides
//! z = 1. The numerator must vanish at each of them, which together with
//! P(1) = 1 fixes the boundary probabilities P_0..P_{K-1}.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf::{CodingMode, FieldSpec};
use crate::service::{ModelFamily, ServiceTimeModel};

/// Analytic results are refused above this fraction of the stability limit.
pub const SATURATION_GUARD: f64 = 0.999;
/// Interior roots must satisfy |z| < 1 - ROOT_RADIUS_MARGIN.
pub const ROOT_RADIUS_MARGIN: f64 = 1e-9;
/// Accepted roots must satisfy |z^K - b_K(beta(z))| < ROOT_RESIDUAL.
pub const ROOT_RESIDUAL: f64 = 1e-9;
/// Polished roots closer than this are treated as one repeated root.
pub const REPEATED_ROOT_GAP: f64 = 1e-7;
/// Largest condition number accepted for the boundary system.
pub const MAX_CONDITION: f64 = 1e12;
/// Boundary values down to minus this are clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-10;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Channel success probability and Bernoulli arrival rate, both per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    q: f64,
    lambda: f64,
}

impl ChannelParams {
    pub fn new(q: f64, lambda: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidParameter(format!("q = {q} outside (0, 1]")));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} outside [0, 1)")));
        }
        Ok(ChannelParams { q, lambda })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Arrival p.g.f. substitution beta(z) = lambda z + 1 - lambda.
    pub fn beta(&self, z: Complex64) -> Complex64 {
        self.lambda * z + (1.0 - self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetransmissionDelay {
    pub waiting: f64,
    pub delay: f64,
}

/// Mean waiting time and delay of plain retransmission.
pub fn retransmission_delay(params: ChannelParams) -> Result<RetransmissionDelay> {
    let (q, lambda) = (params.q, params.lambda);
    if lambda >= q {
        return Err(Error::UnstableQueue { lambda, limit: q });
    }
    let waiting = lambda * (1.0 - q) / (q * (q - lambda));
    Ok(RetransmissionDelay {
        waiting,
        delay: 1.0 / q + waiting,
    })
}

/// Saturation arrival rate K / E[X_K].
pub fn stability_threshold(q: f64, max_bulk: usize, field: &FieldSpec, mode: CodingMode) -> Result<f64> {
    Ok(saturation_rate(&ServiceTimeModel::build(q, field, max_bulk, mode)?))
}

/// K / sum(1 / g_r); equal stages return their common value exactly.
fn saturation_rate(model: &ServiceTimeModel) -> f64 {
    let stages = model.stages();
    if stages.iter().all(|&g| g == stages[0]) {
        return stages[0];
    }
    stages.len() as f64 / model.moments().mean
}

fn family_threshold(family: &ModelFamily) -> f64 {
    saturation_rate(family.largest())
}

fn check_stable(params: ChannelParams, family: &ModelFamily) -> Result<()> {
    let limit = SATURATION_GUARD * family_threshold(family);
    if params.lambda > limit {
        return Err(Error::UnstableQueue {
            lambda: params.lambda,
            limit,
        });
    }
    Ok(())
}

/// D(z) = z^K - b_K(beta(z)) and its derivative.
fn denominator(params: ChannelParams, family: &ModelFamily, z: Complex64) -> (Complex64, Complex64) {
    let k = family.max_bulk() as i32;
    let (b, db) = family.largest().pgf_with_derivative(params.beta(z));
    (z.powi(k) - b, k as f64 * z.powi(k - 1) - params.lambda * db)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients (constant first) of z^K prod(1 - (1-g) beta) - prod(g beta).
fn cleared_denominator(params: ChannelParams, model: &ServiceTimeModel) -> Vec<f64> {
    let lambda = params.lambda;
    let k = model.bulk_size();
    let mut a = vec![1.0];
    let mut gain = 1.0;
    for &g in model.stages() {
        if g < 1.0 {
            let h = 1.0 - g;
            a = poly_mul(&a, &[1.0 - h * (1.0 - lambda), -h * lambda]);
        }
        gain *= g;
    }
    let mut b = vec![gain];
    for _ in 0..k {
        b = poly_mul(&b, &[1.0 - lambda, lambda]);
    }
    let mut p = vec![0.0; (k + a.len()).max(b.len())];
    for (i, &c) in a.iter().enumerate() {
        p[i + k] += c;
    }
    for (i, &c) in b.iter().enumerate() {
        p[i] -= c;
    }
    while p.len() > 1 && *p.last().unwrap() == 0.0 {
        p.pop();
    }
    p
}

/// All complex roots of a real polynomial (constant coefficient first) via
/// companion-matrix eigenvalues. The polynomial is reversed first when that
/// keeps the monic coefficients smaller.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let reversed = coeffs[n].abs() < coeffs[0].abs();
    let c: Vec<f64> = if reversed {
        coeffs.iter().rev().cloned().collect()
    } else {
        coeffs.to_vec()
    };
    let lead = c[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if i + 1 < n {
            companion[(i + 1, i)] = 1.0;
        }
        companion[(i, n - 1)] = -c[i] / lead;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|&w| if reversed { ONE / w } else { w })
        .collect()
}

fn newton_polish(params: ChannelParams, family: &ModelFamily, mut z: Complex64) -> Complex64 {
    for _ in 0..100 {
        let (d, dd) = denominator(params, family, z);
        if dd.norm() == 0.0 || !d.re.is_finite() {
            break;
        }
        let step = d / dd;
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// A zero of the denominator inside the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InteriorRoot {
    pub z: Complex64,
    pub multiplicity: usize,
}

fn interior_roots(params: ChannelParams, family: &ModelFamily) -> Result<Vec<InteriorRoot>> {
    let k = family.max_bulk();
    if k == 1 {
        return Ok(Vec::new());
    }
    let model = family.largest();
    let pole = model.nearest_pole();
    let candidates: Vec<Complex64> = polynomial_roots(&cleared_denominator(params, model))
        .into_iter()
        .filter(|z| z.norm() < 1.5)
        .map(|z| newton_polish(params, family, z))
        .collect();
    let mut accepted: Vec<Complex64> = candidates
        .iter()
        .cloned()
        .filter(|z| z.norm() < 1.0 - ROOT_RADIUS_MARGIN)
        .filter(|z| {
            // roots coinciding with a cleared pole are spurious
            (params.beta(*z).norm() - pole).abs() > ROOT_RADIUS_MARGIN
        })
        .filter(|z| denominator(params, family, *z).0.norm() < ROOT_RESIDUAL)
        .map(|z| {
            if z.im.abs() <= 1e-12 * (1.0 + z.norm()) {
                Complex64::new(z.re, 0.0)
            } else {
                z
            }
        })
        .collect();
    accepted.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let mut grouped: Vec<InteriorRoot> = Vec::new();
    for z in accepted {
        match grouped
            .iter_mut()
            .find(|r| (r.z - z).norm() < REPEATED_ROOT_GAP)
        {
            Some(r) => r.multiplicity += 1,
            None => grouped.push(InteriorRoot { z, multiplicity: 1 }),
        }
    }
    let found: usize = grouped.iter().map(|r| r.multiplicity).sum();
    let upper: usize = grouped.iter().filter(|r| r.z.im > 0.0).map(|r| r.multiplicity).sum();
    let lower: usize = grouped.iter().filter(|r| r.z.im < 0.0).map(|r| r.multiplicity).sum();
    if found != k - 1 || upper != lower {
        return Err(Error::RootCountMismatch {
            expected: k - 1,
            found,
            candidates,
        });
    }
    Ok(grouped)
}

/// The K - 1 zeros of z^K - b_K(beta(z)) strictly inside the unit disk,
/// listed with multiplicity.
pub fn denominator_roots(params: ChannelParams, family: &ModelFamily) -> Result<Vec<Complex64>> {
    if params.lambda >= family_threshold(family) {
        return Err(Error::UnstableQueue {
            lambda: params.lambda,
            limit: family_threshold(family),
        });
    }
    Ok(interior_roots(params, family)?
        .into_iter()
        .flat_map(|r| std::iter::repeat_n(r.z, r.multiplicity))
        .collect())
}

/// b_k(beta(z)) and its z-derivative for k = 0..=K (b_0 = b_1).
fn composed_pgfs(params: ChannelParams, family: &ModelFamily, z: Complex64) -> Vec<(Complex64, Complex64)> {
    let w = params.beta(z);
    (0..=family.max_bulk())
        .map(|k| {
            let (b, db) = family.bulk(k).pgf_with_derivative(w);
            (b, params.lambda * db)
        })
        .collect()
}

/// Numerator coefficient functions c_k(z) = z^K b_k - z^k b_K and their
/// derivatives, k = 0..K-1.
fn numerator_terms(
    params: ChannelParams,
    family: &ModelFamily,
    z: Complex64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let kk = family.max_bulk();
    let pg = composed_pgfs(params, family, z);
    let (bk, dbk) = pg[kk];
    let zk = z.powi(kk as i32);
    let dzk = kk as f64 * z.powi(kk as i32 - 1);
    let mut value = Vec::with_capacity(kk);
    let mut deriv = Vec::with_capacity(kk);
    for (k, &(b, db)) in pg.iter().enumerate().take(kk) {
        let zj = z.powi(k as i32);
        let dzj = if k == 0 { Complex64::new(0.0, 0.0) } else { k as f64 * z.powi(k as i32 - 1) };
        value.push(zk * b - zj * bk);
        deriv.push(dzk * b + zk * db - dzj * bk - zj * dbk);
    }
    (value, deriv)
}

/// Boundary probabilities of the departure-epoch chain.
#[derive(Debug, Clone)]
pub struct StationaryBoundary {
    params: ChannelParams,
    family: ModelFamily,
    probabilities: Vec<f64>,
    roots: Vec<InteriorRoot>,
    condition: f64,
}

/// Solves for P_0..P_{K-1}.
pub fn stationary_boundary(params: ChannelParams, family: &ModelFamily) -> Result<StationaryBoundary> {
    check_stable(params, family)?;
    let kk = family.max_bulk();
    if params.lambda == 0.0 {
        let mut probabilities = vec![0.0; kk];
        probabilities[0] = 1.0;
        return Ok(StationaryBoundary {
            params,
            family: family.clone(),
            probabilities,
            roots: Vec::new(),
            condition: 1.0,
        });
    }
    let roots = interior_roots(params, family)?;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(kk);
    let mut rhs: Vec<f64> = Vec::with_capacity(kk);
    for root in &roots {
        if root.z.im < 0.0 {
            continue;
        }
        if root.multiplicity > 2 {
            return Err(Error::NumericallyDegenerate(format!(
                "root {} has multiplicity {}",
                root.z, root.multiplicity
            )));
        }
        let (value, deriv) = numerator_terms(params, family, root.z);
        let mut conditions = vec![value];
        if root.multiplicity == 2 {
            conditions.push(deriv);
        }
        for c in conditions {
            rows.push(c.iter().map(|x| x.re).collect());
            rhs.push(0.0);
            if root.z.im > 0.0 {
                rows.push(c.iter().map(|x| x.im).collect());
                rhs.push(0.0);
            }
        }
    }
    // P(1) = 1 through l'Hopital: N'(1) = D'(1).
    let mean = |k: usize| family.bulk(k).moments().mean;
    let lambda = params.lambda;
    rows.push(
        (0..kk)
            .map(|k| (kk - k) as f64 + lambda * (mean(k) - mean(kk)))
            .collect(),
    );
    rhs.push(kk as f64 - lambda * mean(kk));
    debug_assert_eq!(rows.len(), kk);

    // Row equilibration leaves the solution unchanged.
    for (row, b) in rows.iter_mut().zip(rhs.iter_mut()) {
        let scale = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale > 0.0 {
            row.iter_mut().for_each(|x| *x /= scale);
            *b /= scale;
        }
    }
    let a = DMatrix::from_fn(kk, kk, |i, j| rows[i][j]);
    let singular = a.clone().svd(false, false).singular_values;
    let smax = singular.max();
    let smin = singular.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NumericallyDegenerate(format!(
            "condition number {condition:e}"
        )));
    }
    let solution = a
        .lu()
        .solve(&DVector::from_vec(rhs))
        .ok_or_else(|| Error::NumericallyDegenerate("singular boundary system".into()))?;

    let mut probabilities = Vec::with_capacity(kk);
    for (k, &p) in solution.iter().enumerate() {
        if p < -NEGATIVE_CLAMP || !p.is_finite() {
            return Err(Error::NumericallyDegenerate(format!("P_{k} = {p}")));
        }
        probabilities.push(p.max(0.0));
    }
    if probabilities.iter().sum::<f64>() > 1.0 + 1e-10 {
        return Err(Error::NumericallyDegenerate(format!(
            "boundary mass {} exceeds one",
            probabilities.iter().sum::<f64>()
        )));
    }
    Ok(StationaryBoundary {
        params,
        family: family.clone(),
        probabilities,
        roots,
        condition,
    })
}

impl StationaryBoundary {
    pub fn params(&self) -> ChannelParams {
        self.params
    }

    pub fn max_bulk(&self) -> usize {
        self.family.max_bulk()
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    /// P_0..P_{K-1}.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn roots(&self) -> &[InteriorRoot] {
        &self.roots
    }

    pub fn has_repeated_roots(&self) -> bool {
        self.roots.iter().any(|r| r.multiplicity > 1)
    }

    /// Condition number of the equilibrated boundary system.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    fn numerator(&self, z: Complex64) -> (Complex64, Complex64) {
        let (value, deriv) = numerator_terms(self.params, &self.family, z);
        self.probabilities
            .iter()
            .zip(value.iter().zip(&deriv))
            .fold(
                (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
                |(n, dn), (&p, (&v, &d))| (n + p * v, dn + p * d),
            )
    }

    /// Evaluates P(z). Removable singularities at z = 1 and at the interior
    /// roots are resolved by their limits.
    pub fn pgf(&self, z: Complex64) -> Result<Complex64> {
        if (z - ONE).norm() < 1e-9 {
            return Ok(ONE);
        }
        let w = self.params.beta(z);
        let limit = self.family.largest().nearest_pole();
        if w.norm() > limit - crate::service::POLE_TOLERANCE {
            return Err(Error::PoleProximity { w, pole: limit });
        }
        let (n, dn) = self.numerator(z);
        let (d, dd) = denominator(self.params, &self.family, z);
        let near_root = self
            .roots
            .iter()
            .any(|r| (r.z - z).norm() < 1e-9 || (r.z.conj() - z).norm() < 1e-9);
        Ok(if near_root { dn / dd } else { n / d })
    }

    /// Mean queue length just after a departure, P'(1).
    pub fn mean_queue(&self) -> f64 {
        let kk = self.family.max_bulk();
        let k_f = kk as f64;
        let lambda = self.params.lambda;
        let m = |k: usize| self.family.bulk(k).moments();
        let (e_k, f_k) = (m(kk).mean, m(kk).factorial2);
        let d1 = k_f - lambda * e_k;
        let d2 = k_f * (k_f - 1.0) - lambda * lambda * f_k;
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        for (k, &p) in self.probabilities.iter().enumerate() {
            let kf = k as f64;
            let mo = m(k);
            n1 += p * (k_f - kf + lambda * (mo.mean - e_k));
            n2 += p
                * ((k_f * (k_f - 1.0) + 2.0 * k_f * lambda * mo.mean + lambda * lambda * mo.factorial2)
                    - (kf * (kf - 1.0) + 2.0 * kf * lambda * e_k + lambda * lambda * f_k));
        }
        (n2 * d1 - n1 * d2) / (2.0 * d1 * d1)
    }

    pub fn bulk_distribution(&self) -> BulkDistribution {
        let kk = self.family.max_bulk();
        let p = &self.probabilities;
        let mut b = vec![0.0; kk];
        if kk == 1 {
            b[0] = 1.0;
        } else {
            b[0] = p[0] + p[1];
            b[1..kk - 1].copy_from_slice(&p[2..kk]);
            let rest: f64 = b[..kk - 1].iter().sum();
            b[kk - 1] = (1.0 - rest).max(0.0);
        }
        BulkDistribution { probabilities: b }
    }

    /// First `terms` probabilities P_0, P_1, .. of the departure-epoch queue
    /// length, by discrete Fourier inversion of P(z) on the unit circle.
    pub fn departure_distribution(&self, terms: usize) -> Result<Vec<f64>> {
        let m = (4 * terms).next_power_of_two().max(8192);
        let mut buf = (0..m)
            .map(|j| self.pgf(Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64)))
            .collect::<Result<Vec<_>>>()?;
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        Ok(buf[..terms]
            .iter()
            .map(|c| (c.re / m as f64).max(0.0))
            .collect())
    }
}

/// P(z) from the departure-epoch chain.
pub fn queue_pgf_eval(boundary: &StationaryBoundary, z: Complex64) -> Result<Complex64> {
    boundary.pgf(z)
}

/// Mean queue length just after a bulk departure.
pub fn mean_queue_at_departure(boundary: &StationaryBoundary) -> f64 {
    boundary.mean_queue()
}

/// Little's-law approximation S / lambda; `None` when lambda = 0.
pub fn delay_littles_approx(mean_queue: f64, lambda: f64) -> Option<f64> {
    (lambda > 0.0).then(|| mean_queue / lambda)
}

/// Probabilities B_1..B_K that a served bulk holds k packets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BulkDistribution {
    probabilities: Vec<f64>,
}

impl BulkDistribution {
    pub fn max_bulk(&self) -> usize {
        self.probabilities.len()
    }

    /// Probability of a bulk of size `k` (1-based).
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 || k > self.probabilities.len() {
            0.0
        } else {
            self.probabilities[k - 1]
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn mean_size(&self) -> f64 {
        self.iter().map(|(k, b)| k as f64 * b).sum()
    }

    /// (k, B_k) for k = 1..=K.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probabilities.iter().enumerate().map(|(i, &b)| (i + 1, b))
    }
}

pub fn bulk_distribution(boundary: &StationaryBoundary) -> BulkDistribution {
    boundary.bulk_distribution()
}

/// Retransmission waiting time plus the mean modified service time of a
/// packet, where a packet in position j of a size-k bulk is charged
/// `service(k, j)`. Bulk probabilities are converted to the probability that
/// a packet travels in a size-k bulk (proportional to k B_k).
fn waiting_plus_service(
    params: ChannelParams,
    bulks: &BulkDistribution,
    service: impl Fn(usize) -> f64,
) -> Result<f64> {
    let waiting = retransmission_delay(params)?.waiting;
    let per_packet: f64 = bulks.iter().map(|(k, b)| b * service(k)).sum();
    Ok(waiting + per_packet / bulks.mean_size())
}

/// Exact mean delay of RLC(K) over the infinite field.
pub fn delay_infinite_exact(params: ChannelParams, max_bulk: usize) -> Result<f64> {
    let family = ModelFamily::build(params.q, &FieldSpec::Infinite, max_bulk, CodingMode::Good)?;
    let bulks = stationary_boundary(params, &family)?.bulk_distribution();
    // sum over the bulk of (k - j + 1)/q
    waiting_plus_service(params, &bulks, |k| (k * (k + 1)) as f64 / (2.0 * params.q))
}

/// Upper bound on the ratio of infinite-field RLC(K) delay to retransmission delay.
pub fn delay_ratio_bound(params: ChannelParams, max_bulk: usize) -> Result<f64> {
    let (q, lambda) = (params.q, params.lambda);
    if lambda >= q {
        return Err(Error::UnstableQueue { lambda, limit: q });
    }
    let k = max_bulk as f64;
    // (q - l) K (K + 1) / (2q(1 - l)) + l(1 - q) / (q(1 - l)), regrouped so
    // that K = 1 gives exactly 1
    Ok(1.0 + (q - lambda) * (k * (k + 1.0) / 2.0 - 1.0) / (q * (1.0 - lambda)))
}

/// Lower estimate of the finite-field RLC(K) delay: retransmission waiting
/// plus the per-packet stage accounting of the coded service, where packet j
/// of a size-k bulk is charged the stages j-1..k-1.
pub fn delay_finite_lower(
    params: ChannelParams,
    max_bulk: usize,
    field: &FieldSpec,
    mode: CodingMode,
) -> Result<f64> {
    let family = ModelFamily::build(params.q, field, max_bulk, mode)?;
    let bulks = stationary_boundary(params, &family)?.bulk_distribution();
    waiting_plus_service(params, &bulks, |k| {
        family
            .bulk(k)
            .stages()
            .iter()
            .enumerate()
            .map(|(r, g)| (r + 1) as f64 / g)
            .sum()
    })
}

/// Every analytic quantity for one operating point; `None` marks values
/// that are undefined or refused as unstable there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    pub q: f64,
    pub lambda: f64,
    pub max_bulk: usize,
    pub field: String,
    pub mode: CodingMode,
    pub stability_threshold: f64,
    pub waiting_retransmission: Option<f64>,
    pub delay_retransmission: Option<f64>,
    pub mean_queue_at_departure: Option<f64>,
    pub delay_littles_approx: Option<f64>,
    pub delay_infinite_exact: Option<f64>,
    pub delay_finite_lower: Option<f64>,
    pub ratio_bound: Option<f64>,
}

pub fn delay_report(
    params: ChannelParams,
    max_bulk: usize,
    field: &FieldSpec,
    mode: CodingMode,
) -> Result<DelayReport> {
    let family = ModelFamily::build(params.q, field, max_bulk, mode)?;
    let boundary = stationary_boundary(params, &family).ok();
    let mean_queue = boundary.as_ref().map(|b| b.mean_queue());
    let re = retransmission_delay(params).ok();
    Ok(DelayReport {
        q: params.q,
        lambda: params.lambda,
        max_bulk,
        field: field.to_string(),
        mode,
        stability_threshold: family_threshold(&family),
        waiting_retransmission: re.map(|r| r.waiting),
        delay_retransmission: re.map(|r| r.delay),
        mean_queue_at_departure: mean_queue,
        delay_littles_approx: mean_queue.and_then(|s| delay_littles_approx(s, params.lambda)),
        delay_infinite_exact: delay_infinite_exact(params, max_bulk).ok(),
        delay_finite_lower: delay_finite_lower(params, max_bulk, field, mode).ok(),
        ratio_bound: delay_ratio_bound(params, max_bulk).ok(),
    })
}
