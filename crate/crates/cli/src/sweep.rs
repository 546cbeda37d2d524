use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use rlc_arq::sim::{derive_seed, DEFAULT_WARMUP};
use rlc_arq::{
    delay_finite_lower, delay_infinite_exact, delay_littles_approx, retransmission_delay, simulate,
    stationary_boundary, ChannelParams, CodingMode, FieldSpec, Fidelity, ModelFamily, ProtocolConfig,
    ProtocolKind, SimConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CSV_HEADER: [&str; 15] = [
    "curve",
    "source",
    "protocol",
    "K",
    "field",
    "coding_mode",
    "q",
    "lambda",
    "slots",
    "seed",
    "mean_delay",
    "ci95",
    "delivered",
    "analytic_value",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Retransmission delay.
    Eq1,
    /// Little's-law approximation from the departure-epoch mean queue.
    Eq4,
    /// Exact infinite-field RLC delay.
    Eq8,
    /// Finite-field lower estimate.
    Lower,
    Sim,
}

impl Source {
    pub fn is_analytic(self) -> bool {
        self != Source::Sim
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Eq1 => "eq1",
            Source::Eq4 => "eq4",
            Source::Eq8 => "eq8",
            Source::Lower => "lower",
            Source::Sim => "sim",
        })
    }
}

impl FromStr for Source {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "eq1" | "analytic_eq1" => Ok(Source::Eq1),
            "eq4" | "analytic_eq4" => Ok(Source::Eq4),
            "eq8" | "analytic_eq8" => Ok(Source::Eq8),
            "lower" | "analytic_lower" => Ok(Source::Lower),
            "sim" | "simulate" => Ok(Source::Sim),
            other => Err(CliError::InvalidSpec(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub name: String,
    pub source: Source,
    pub protocol: ProtocolKind,
    #[serde(rename = "K")]
    pub max_bulk: usize,
    pub field: FieldSpec,
    pub coding_mode: CodingMode,
    pub fidelity: Fidelity,
}

impl CurveSpec {
    pub fn new(
        source: Source,
        protocol: ProtocolKind,
        max_bulk: usize,
        field: FieldSpec,
        coding_mode: CodingMode,
        fidelity: Fidelity,
    ) -> Self {
        let mut c = CurveSpec {
            name: String::new(),
            source,
            protocol,
            max_bulk,
            field,
            coding_mode,
            fidelity,
        };
        c.name = c.default_name();
        c
    }

    pub fn retransmission(source: Source) -> Self {
        CurveSpec::new(
            source,
            ProtocolKind::Retransmission,
            1,
            FieldSpec::Infinite,
            CodingMode::Good,
            Fidelity::RankMarkov,
        )
    }

    pub fn rlc(source: Source, max_bulk: usize, field: FieldSpec, mode: CodingMode) -> Self {
        CurveSpec::new(source, ProtocolKind::Rlc, max_bulk, field, mode, Fidelity::RankMarkov)
    }

    /// e.g. `rlc-K4-gf16-good-sim`, `retx-eq1`.
    pub fn default_name(&self) -> String {
        match self.protocol {
            ProtocolKind::Retransmission => format!("retx-{}", self.source),
            ProtocolKind::Rlc => {
                let field = match self.field.order() {
                    Some(q) => format!("gf{q}"),
                    None => "inf".to_string(),
                };
                format!("rlc-K{}-{field}-{}-{}", self.max_bulk, self.coding_mode, self.source)
            }
        }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        match self.protocol {
            ProtocolKind::Retransmission => ProtocolConfig::retransmission(),
            ProtocolKind::Rlc => {
                ProtocolConfig::rlc(self.max_bulk, self.field.clone(), self.coding_mode, self.fidelity)
            }
        }
    }

    fn effective_bulk(&self) -> usize {
        self.protocol_config().effective_bulk()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::InvalidSpec(format!("curve {:?}: {msg}", self.name)));
        if self.name.is_empty() {
            return bad("empty name");
        }
        if self.protocol == ProtocolKind::Rlc && self.max_bulk == 0 {
            return bad("K must be at least 1");
        }
        match self.source {
            Source::Eq1 if self.protocol != ProtocolKind::Retransmission => {
                bad("eq1 describes retransmission only")
            }
            Source::Eq8 if !self.field.is_infinite() || self.coding_mode != CodingMode::Good => {
                bad("eq8 requires the infinite field")
            }
            Source::Eq4 | Source::Eq8 | Source::Lower if self.protocol != ProtocolKind::Rlc => {
                bad("source requires the rlc protocol")
            }
            Source::Sim => self
                .protocol_config()
                .validate()
                .map_err(|e| CliError::InvalidSpec(format!("curve {:?}: {e}", self.name))),
            _ => Ok(()),
        }
    }

    /// Saturation point of the curve's protocol at channel success `q`.
    pub fn stability_threshold(&self, q: f64) -> Result<f64, CliError> {
        Ok(self.protocol_config().stability_threshold(q)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub q: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(default = "default_steps")]
    pub lambda_steps: usize,
    pub curves: Vec<CurveSpec>,
    pub slots: u64,
    /// Defaults to the simulator's warmup, capped at a tenth of the run.
    #[serde(default)]
    pub warmup_slots: Option<u64>,
    pub master_seed: u64,
    pub output: PathBuf,
}

fn default_steps() -> usize {
    100
}

impl SweepSpec {
    /// Evenly spaced, both ends included.
    pub fn lambdas(&self) -> Vec<f64> {
        if self.lambda_steps == 1 {
            return vec![self.lambda_min];
        }
        let last = self.lambda_steps - 1;
        let span = self.lambda_max - self.lambda_min;
        (0..=last)
            .map(|i| match i {
                0 => self.lambda_min,
                i if i == last => self.lambda_max,
                i => self.lambda_min + span * i as f64 / last as f64,
            })
            .collect()
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_slots.unwrap_or(DEFAULT_WARMUP.min(self.slots / 10))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::InvalidSpec(msg));
        if !(self.q > 0.0 && self.q <= 1.0) {
            return bad(format!("q = {} outside (0, 1]", self.q));
        }
        if !(0.0 <= self.lambda_min && self.lambda_min <= self.lambda_max && self.lambda_max <= 1.0) {
            return bad(format!("lambda range [{}, {}]", self.lambda_min, self.lambda_max));
        }
        if self.master_seed > i64::MAX as u64 {
            return bad(format!("master seed {} exceeds 2^63 - 1", self.master_seed));
        }
        if self.lambda_steps == 0 {
            return bad("lambda_steps must be positive".into());
        }
        if self.curves.is_empty() {
            return bad("no curves".into());
        }
        let mut names = HashSet::new();
        for c in &self.curves {
            c.validate()?;
            if !names.insert(&c.name) {
                return bad(format!("duplicate curve name {:?}", c.name));
            }
        }
        if self.curves.iter().any(|c| c.source == Source::Sim) && self.warmup() >= self.slots {
            return bad(format!("warmup {} must be shorter than {} slots", self.warmup(), self.slots));
        }
        Ok(())
    }

    /// Seed of the simulation at (curve, lambda index). Kept below 2^63 so
    /// manifests can store it as a TOML integer.
    pub fn point_seed(&self, curve: usize, lambda_index: usize) -> u64 {
        derive_seed(self.master_seed, &[curve as u64, lambda_index as u64]) >> 1
    }
}

/// One CSV row; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub curve: String,
    pub source: Source,
    pub protocol: ProtocolKind,
    #[serde(rename = "K")]
    pub max_bulk: usize,
    pub field: String,
    pub coding_mode: CodingMode,
    pub q: f64,
    pub lambda: f64,
    pub slots: Option<u64>,
    pub seed: Option<u64>,
    pub mean_delay: Option<f64>,
    pub ci95: Option<f64>,
    pub delivered: Option<u64>,
    pub analytic_value: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Unstable,
}

fn analytic_value(curve: &CurveSpec, params: ChannelParams) -> rlc_arq::Result<f64> {
    let k = curve.max_bulk;
    match curve.source {
        Source::Eq1 => Ok(retransmission_delay(params)?.delay),
        Source::Eq4 => {
            let family = ModelFamily::build(params.q(), &curve.field, k, curve.coding_mode)?;
            let s = stationary_boundary(params, &family)?.mean_queue();
            delay_littles_approx(s, params.lambda())
                .ok_or_else(|| rlc_arq::Error::InvalidParameter("lambda = 0".into()))
        }
        Source::Eq8 => delay_infinite_exact(params, k),
        Source::Lower => delay_finite_lower(params, k, &curve.field, curve.coding_mode),
        Source::Sim => unreachable!("simulation curves are not analytic"),
    }
}

fn evaluate(spec: &SweepSpec, curve_index: usize, lambda_index: usize, lambda: f64) -> Result<Row, CliError> {
    let curve = &spec.curves[curve_index];
    let mut row = Row {
        curve: curve.name.clone(),
        source: curve.source,
        protocol: curve.protocol,
        max_bulk: curve.effective_bulk(),
        field: curve.field.to_string(),
        coding_mode: curve.coding_mode,
        q: spec.q,
        lambda,
        slots: None,
        seed: None,
        mean_delay: None,
        ci95: None,
        delivered: None,
        analytic_value: None,
        status: Status::Ok,
    };
    if curve.source.is_analytic() {
        match ChannelParams::new(spec.q, lambda).and_then(|p| analytic_value(curve, p)) {
            Ok(v) => row.analytic_value = Some(v),
            Err(rlc_arq::Error::UnstableQueue { .. }) => row.status = Status::Unstable,
            Err(e) => {
                eprintln!("warning: {} at lambda = {lambda}: {e}", curve.name);
                row.status = Status::Unstable;
            }
        }
        return Ok(row);
    }
    let seed = spec.point_seed(curve_index, lambda_index);
    let sim = SimConfig::new(lambda, spec.q, spec.slots, seed).with_warmup(spec.warmup());
    let stats = simulate(&curve.protocol_config(), &sim)?;
    row.slots = Some(spec.slots);
    row.seed = Some(seed);
    row.delivered = Some(stats.delivered);
    row.mean_delay = stats.mean_delay.is_finite().then_some(stats.mean_delay);
    row.ci95 = stats.ci95_halfwidth.is_finite().then_some(stats.ci95_halfwidth);
    if lambda >= curve.stability_threshold(spec.q)? {
        row.status = Status::Unstable;
    }
    Ok(row)
}

/// Evaluates every (curve, lambda) point in parallel. Rows come back sorted
/// by curve name, then lambda.
pub fn sweep_rows(spec: &SweepSpec) -> Result<Vec<Row>, CliError> {
    spec.validate()?;
    let lambdas = spec.lambdas();
    let points: Vec<(usize, usize, f64)> = (0..spec.curves.len())
        .flat_map(|c| lambdas.iter().enumerate().map(move |(i, &l)| (c, i, l)))
        .collect();
    let mut rows = points
        .into_par_iter()
        .map(|(c, i, l)| evaluate(spec, c, i, l))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.curve.cmp(&b.curve).then(a.lambda.total_cmp(&b.lambda)));
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<Row>, _>>()?)
}

/// Runs the sweep and writes its CSV to `spec.output`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<Row>, CliError> {
    let rows = sweep_rows(spec)?;
    let file = File::create(&spec.output).map_err(|e| CliError::io(&spec.output, e))?;
    write_csv(&rows, file)?;
    Ok(rows)
}
