//! Finite-field arithmetic and incremental rank tracking.
//!
//! Elements of GF(p^m) are encoded as integers whose base-p digits are the
//! polynomial coefficients (lowest degree in the least significant digit).
//! Every extension field is built from the lexicographically least monic
//! irreducible polynomial of its degree, e.g. `x^4 + x + 1` for GF(16) and
//! `x^8 + x^4 + x^3 + x + 1` for GF(256), so tables are reproducible.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Element = u16;

/// Largest supported field order.
pub const MAX_ORDER: u32 = 1 << 16;

/// Fields up to this order multiply through log/antilog tables.
const TABLE_LIMIT: u32 = 256;

/// Coefficient selection rule for encoded packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodingMode {
    /// The all-zero coefficient vector is never sent.
    Good,
    /// The all-zero vector may be sent whenever the bulk holds two or more packets.
    Bad,
}

impl fmt::Display for CodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodingMode::Good => "good",
            CodingMode::Bad => "bad",
        })
    }
}

impl FromStr for CodingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "good" => Ok(CodingMode::Good),
            "bad" => Ok(CodingMode::Bad),
            other => Err(Error::InvalidParameter(format!("unknown coding mode {other:?}"))),
        }
    }
}

#[derive(Debug)]
enum Multiplier {
    Tables { exp: Vec<Element>, log: Vec<u32> },
    Prime,
    Binary { modulus: u32 },
    Polynomial,
}

/// A concrete finite field GF(p^m) with p^m <= 2^16.
#[derive(Debug)]
pub struct GaloisField {
    order: u32,
    characteristic: u32,
    degree: u32,
    /// Monic modulus, coefficients from x^0 up to x^m.
    modulus: Vec<u32>,
    mul: Multiplier,
}

impl GaloisField {
    pub fn new(order: u32) -> Result<Self> {
        let (characteristic, degree) =
            prime_power(order).ok_or(Error::InvalidFieldOrder(order as u64))?;
        let modulus = if degree == 1 {
            vec![0, 1]
        } else {
            least_irreducible(characteristic, degree)
        };
        let mut field = GaloisField {
            order,
            characteristic,
            degree,
            modulus,
            mul: Multiplier::Polynomial,
        };
        field.mul = if order <= TABLE_LIMIT {
            field.build_tables()
        } else if degree == 1 {
            Multiplier::Prime
        } else if characteristic == 2 {
            let modulus = field
                .modulus
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &c)| acc | (c << i));
            Multiplier::Binary { modulus }
        } else {
            Multiplier::Polynomial
        };
        Ok(field)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn characteristic(&self) -> u32 {
        self.characteristic
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Modulus coefficients from the constant term upwards (monic).
    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    pub fn contains(&self, a: u32) -> bool {
        a < self.order
    }

    pub fn check(&self, a: u32) -> Result<Element> {
        if self.contains(a) {
            Ok(a as Element)
        } else {
            Err(Error::InvalidElement {
                value: a,
                order: self.order,
            })
        }
    }

    #[inline]
    pub fn add(&self, a: Element, b: Element) -> Element {
        if self.characteristic == 2 {
            a ^ b
        } else if self.degree == 1 {
            ((a as u32 + b as u32) % self.characteristic) as Element
        } else {
            let p = self.characteristic;
            self.digitwise(a, b, |x, y| (x + y) % p)
        }
    }

    #[inline]
    pub fn sub(&self, a: Element, b: Element) -> Element {
        if self.characteristic == 2 {
            a ^ b
        } else if self.degree == 1 {
            ((a as u32 + self.characteristic - b as u32) % self.characteristic) as Element
        } else {
            let p = self.characteristic;
            self.digitwise(a, b, |x, y| (x + p - y) % p)
        }
    }

    #[inline]
    pub fn neg(&self, a: Element) -> Element {
        self.sub(0, a)
    }

    #[inline]
    pub fn mul(&self, a: Element, b: Element) -> Element {
        if a == 0 || b == 0 {
            return 0;
        }
        match &self.mul {
            Multiplier::Tables { exp, log } => exp[(log[a as usize] + log[b as usize]) as usize],
            Multiplier::Prime => ((a as u32 * b as u32) % self.characteristic) as Element,
            Multiplier::Binary { modulus } => {
                clmul_reduce(a as u32, b as u32, *modulus, self.degree) as Element
            }
            Multiplier::Polynomial => self.poly_mul(a, b),
        }
    }

    pub fn inv(&self, a: Element) -> Result<Element> {
        if a == 0 {
            return Err(Error::DivisionByZero);
        }
        Ok(match &self.mul {
            Multiplier::Tables { exp, log } => {
                let n = self.order - 1;
                exp[((n - log[a as usize]) % n) as usize]
            }
            _ => self.pow(a, self.order - 2),
        })
    }

    pub fn div(&self, a: Element, b: Element) -> Result<Element> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Element, mut e: u32) -> Element {
        let mut base = a;
        let mut acc: Element = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    fn digitwise(&self, a: Element, b: Element, f: impl Fn(u32, u32) -> u32) -> Element {
        let p = self.characteristic;
        let (mut a, mut b) = (a as u32, b as u32);
        let mut out = 0u32;
        let mut place = 1u32;
        for _ in 0..self.degree {
            out += f(a % p, b % p) * place;
            a /= p;
            b /= p;
            place *= p;
        }
        out as Element
    }

    fn poly_mul(&self, a: Element, b: Element) -> Element {
        let p = self.characteristic;
        let da = digits(a as u32, p, self.degree);
        let db = digits(b as u32, p, self.degree);
        let mut prod = vec![0u32; da.len() + db.len() - 1];
        for (i, &x) in da.iter().enumerate() {
            for (j, &y) in db.iter().enumerate() {
                prod[i + j] = (prod[i + j] + x * y) % p;
            }
        }
        poly_reduce(&mut prod, &self.modulus, p);
        undigits(&prod[..self.degree as usize], p) as Element
    }

    fn build_tables(&self) -> Multiplier {
        let n = self.order - 1;
        // smallest multiplicative generator
        let generator = (2..self.order)
            .map(|g| g as Element)
            .find(|&g| {
                let mut x: Element = 1;
                for i in 1..n {
                    x = self.poly_mul_raw(x, g);
                    if x == 1 {
                        return i == n;
                    }
                }
                true
            })
            .unwrap_or(1);
        let mut exp = vec![0 as Element; 2 * n as usize];
        let mut log = vec![0u32; self.order as usize];
        let mut x: Element = 1;
        for i in 0..n {
            exp[i as usize] = x;
            log[x as usize] = i;
            x = self.poly_mul_raw(x, generator);
        }
        for i in n..2 * n {
            exp[i as usize] = exp[(i - n) as usize];
        }
        Multiplier::Tables { exp, log }
    }

    fn poly_mul_raw(&self, a: Element, b: Element) -> Element {
        if self.degree == 1 {
            ((a as u32 * b as u32) % self.characteristic) as Element
        } else {
            self.poly_mul(a, b)
        }
    }
}

fn clmul_reduce(a: u32, b: u32, modulus: u32, degree: u32) -> u32 {
    let mut prod = 0u64;
    for i in 0..degree {
        if (b >> i) & 1 == 1 {
            prod ^= (a as u64) << i;
        }
    }
    for bit in (degree..2 * degree).rev() {
        if (prod >> bit) & 1 == 1 {
            prod ^= (modulus as u64) << (bit - degree);
        }
    }
    prod as u32
}

fn digits(mut a: u32, p: u32, len: u32) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let d = a % p;
            a /= p;
            d
        })
        .collect()
}

fn undigits(d: &[u32], p: u32) -> u32 {
    d.iter().rev().fold(0, |acc, &x| acc * p + x)
}

/// Reduces `a` in place modulo the monic polynomial `m`; the result occupies
/// the low `deg(m)` coefficients.
fn poly_reduce(a: &mut Vec<u32>, m: &[u32], p: u32) {
    let dm = m.len() - 1;
    while a.len() > dm {
        let top = a.pop().unwrap_or(0);
        if top != 0 {
            let shift = a.len() - dm;
            for (i, &c) in m[..dm].iter().enumerate() {
                a[shift + i] = (a[shift + i] + (p - top) * c) % p;
            }
        }
    }
    a.resize(dm, 0);
}

fn smallest_prime_factor(n: u32) -> u32 {
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return d;
        }
        d += 1;
    }
    n
}

fn prime_power(order: u32) -> Option<(u32, u32)> {
    if !(2..=MAX_ORDER).contains(&order) {
        return None;
    }
    let p = smallest_prime_factor(order);
    let mut rest = order;
    let mut m = 0;
    while rest % p == 0 {
        rest /= p;
        m += 1;
    }
    (rest == 1).then_some((p, m))
}

/// First monic irreducible polynomial of degree `m` over GF(p) when the
/// non-leading coefficients are read as a base-p number, highest degree first.
fn least_irreducible(p: u32, m: u32) -> Vec<u32> {
    let tails = p.pow(m);
    (0..tails)
        .map(|t| {
            let mut poly = digits(t, p, m);
            poly.push(1);
            poly
        })
        .find(|poly| is_irreducible(poly, p))
        .expect("an irreducible polynomial exists for every degree")
}

fn is_irreducible(poly: &[u32], p: u32) -> bool {
    let m = (poly.len() - 1) as u32;
    if poly[0] == 0 {
        return false;
    }
    for d in 1..=m / 2 {
        for t in 0..p.pow(d) {
            let mut divisor = digits(t, p, d);
            divisor.push(1);
            let mut rem = poly.to_vec();
            poly_reduce(&mut rem, &divisor, p);
            if rem.iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

/// A coding field: either a concrete GF(Q) or the infinite-field limit.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    Finite(Arc<GaloisField>),
    Infinite,
}

impl FieldSpec {
    pub fn finite(order: u32) -> Result<Self> {
        Ok(FieldSpec::Finite(Arc::new(GaloisField::new(order)?)))
    }

    pub fn order(&self) -> Option<u32> {
        match self {
            FieldSpec::Finite(f) => Some(f.order()),
            FieldSpec::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, FieldSpec::Infinite)
    }

    pub fn galois(&self) -> Option<&Arc<GaloisField>> {
        match self {
            FieldSpec::Finite(f) => Some(f),
            FieldSpec::Infinite => None,
        }
    }
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order()
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.order() {
            Some(q) => write!(f, "{q}"),
            None => f.write_str("inf"),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "∞" => Ok(FieldSpec::Infinite),
            t => {
                let order: u64 = t
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad field {s:?}")))?;
                let order =
                    u32::try_from(order).map_err(|_| Error::InvalidFieldOrder(order))?;
                FieldSpec::finite(order)
            }
        }
    }
}

/// Serialized as its display string ("16", "inf").
impl Serialize for FieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Order(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Order(o) => o.to_string().parse(),
            Raw::Name(n) => n.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Coefficients of one encoded packet over the bulk's information packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientVector(pub Vec<Element>);

impl CoefficientVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

/// Draws the coefficient vector of one encoded packet for a bulk of `k` packets.
pub fn sample_coefficients<R: Rng + ?Sized>(
    field: &FieldSpec,
    k: usize,
    mode: CodingMode,
    rng: &mut R,
) -> Result<CoefficientVector> {
    let gf = field.galois().ok_or(Error::NotSimulatable)?;
    if k == 0 {
        return Err(Error::InvalidParameter("bulk size must be at least 1".into()));
    }
    let allow_zero = mode == CodingMode::Bad && k >= 2;
    let mut v = vec![0 as Element; k];
    sample_into(gf, allow_zero, rng, &mut v);
    Ok(CoefficientVector(v))
}

/// Fills `out` with a fresh coefficient vector, rejecting the zero vector
/// unless `allow_zero`.
pub(crate) fn sample_into<R: Rng + ?Sized>(
    gf: &GaloisField,
    allow_zero: bool,
    rng: &mut R,
    out: &mut [Element],
) {
    let q = gf.order();
    loop {
        for c in out.iter_mut() {
            *c = rng.random_range(0..q) as Element;
        }
        if allow_zero || out.iter().any(|&c| c != 0) {
            return;
        }
    }
}

/// Receiver knowledge for one bulk: a row-echelon basis of the received
/// coefficient vectors, indexed by pivot column. Each stored row has a unit
/// pivot and zeros before it.
#[derive(Debug, Clone)]
pub struct RankState {
    rows: Vec<Option<Vec<Element>>>,
    rank: usize,
    receptions: u64,
    scratch: Vec<Element>,
}

impl RankState {
    pub fn new(dimension: usize) -> Self {
        RankState {
            rows: vec![None; dimension],
            rank: 0,
            receptions: 0,
            scratch: Vec::with_capacity(dimension),
        }
    }

    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Successful receptions presented so far, useful or not.
    pub fn receptions(&self) -> u64 {
        self.receptions
    }

    pub fn is_full(&self) -> bool {
        self.rank == self.rows.len()
    }

    /// Clears the basis and resizes it for a new bulk.
    pub fn reset(&mut self, dimension: usize) {
        self.rows.clear();
        self.rows.resize(dimension, None);
        self.rank = 0;
        self.receptions = 0;
    }

    /// Adds a received vector; returns whether it raised the rank.
    pub fn update(&mut self, field: &GaloisField, v: &CoefficientVector) -> Result<bool> {
        self.update_slice(field, &v.0)
    }

    pub(crate) fn update_slice(&mut self, field: &GaloisField, v: &[Element]) -> Result<bool> {
        let k = self.rows.len();
        if v.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: v.len(),
            });
        }
        self.receptions += 1;
        let mut w = std::mem::take(&mut self.scratch);
        w.clear();
        w.extend_from_slice(v);
        for col in 0..k {
            if w[col] == 0 {
                continue;
            }
            match &self.rows[col] {
                Some(row) => {
                    let factor = w[col];
                    for (x, &r) in w[col..].iter_mut().zip(&row[col..]) {
                        *x = field.sub(*x, field.mul(factor, r));
                    }
                }
                None => {
                    let inv = field.inv(w[col])?;
                    for x in w[col..].iter_mut() {
                        *x = field.mul(*x, inv);
                    }
                    self.rows[col] = Some(w);
                    self.rank += 1;
                    return Ok(true);
                }
            }
        }
        self.scratch = w;
        Ok(false)
    }
}
