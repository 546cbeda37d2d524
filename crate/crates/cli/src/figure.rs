use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rlc_arq::{CodingMode, FieldSpec};
use serde::{Deserialize, Serialize};

use crate::sweep::{run_sweep, CurveSpec, Row, Source, Status, SweepSpec};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2,
    Fig3,
}

impl Figure {
    pub fn q(self) -> f64 {
        match self {
            Figure::Fig2 => 0.5,
            Figure::Fig3 => 0.9,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        })
    }
}

impl FromStr for Figure {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            other => Err(CliError::InvalidSpec(format!("unknown figure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 25 arrival rates, 10^6 slots each.
    Desk,
    /// 100 arrival rates, 10^7 slots each.
    Full,
}

impl Scale {
    pub fn steps(self) -> usize {
        match self {
            Scale::Desk => 25,
            Scale::Full => 100,
        }
    }

    pub fn slots(self) -> u64 {
        match self {
            Scale::Desk => 1_000_000,
            Scale::Full => 10_000_000,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

impl FromStr for Scale {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(CliError::InvalidSpec(format!("unknown scale {other:?}"))),
        }
    }
}

/// Bulk sizes drawn in the presets.
pub const PRESET_BULKS: [usize; 2] = [2, 4];

/// Curves of a figure preset: retransmission, the infinite-field exact and
/// approximate delays, and simulations over GF(2) and GF(16) in both modes.
pub fn preset_curves() -> Vec<CurveSpec> {
    let gf2 = FieldSpec::finite(2).expect("GF(2)");
    let gf16 = FieldSpec::finite(16).expect("GF(16)");
    let mut curves = vec![
        CurveSpec::retransmission(Source::Eq1),
        CurveSpec::retransmission(Source::Sim),
    ];
    for k in PRESET_BULKS {
        curves.push(CurveSpec::rlc(Source::Eq8, k, FieldSpec::Infinite, CodingMode::Good));
        curves.push(CurveSpec::rlc(Source::Eq4, k, FieldSpec::Infinite, CodingMode::Good));
        curves.push(CurveSpec::rlc(Source::Eq4, k, gf2.clone(), CodingMode::Bad));
        for field in [&gf2, &gf16] {
            for mode in [CodingMode::Good, CodingMode::Bad] {
                curves.push(CurveSpec::rlc(Source::Sim, k, field.clone(), mode));
            }
        }
    }
    curves
}

/// Sweep for a preset: lambda_i = q i / steps, i = 1..=steps.
pub fn preset_spec(which: Figure, scale: Scale, master_seed: u64, out_dir: &Path) -> SweepSpec {
    let q = which.q();
    let steps = scale.steps();
    SweepSpec {
        q,
        lambda_min: q / steps as f64,
        lambda_max: q,
        lambda_steps: steps,
        curves: preset_curves(),
        slots: scale.slots(),
        warmup_slots: None,
        master_seed,
        output: out_dir.join(format!("{which}_{scale}.csv")),
    }
}

/// Parameters and seeds of a run, written next to its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub figure: Option<Figure>,
    pub scale: Option<Scale>,
    pub csv: PathBuf,
    pub plot_data: Option<PathBuf>,
    pub warmup_slots: u64,
    pub spec: SweepSpec,
    pub points: Vec<PointSeed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSeed {
    pub curve: String,
    pub lambda: f64,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(spec: &SweepSpec, rows: &[Row]) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            figure: None,
            scale: None,
            csv: spec.output.clone(),
            plot_data: None,
            warmup_slots: spec.warmup(),
            spec: spec.clone(),
            points: rows
                .iter()
                .filter_map(|r| {
                    r.seed.map(|seed| PointSeed {
                        curve: r.curve.clone(),
                        lambda: r.lambda,
                        seed,
                    })
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Manifest(e.to_string()))?;
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Manifest(e.to_string()))
    }
}

/// Writes one gnuplot data block per curve (select with `index`). Columns:
/// lambda, value, ci95; unstable points are commented out.
pub fn write_plot_data<W: Write>(rows: &[Row], mut out: W) -> Result<(), CliError> {
    let mut index = 0;
    let mut i = 0;
    while i < rows.len() {
        let curve = &rows[i].curve;
        let end = i + rows[i..].iter().take_while(|r| &r.curve == curve).count();
        if index > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# index {index}: {curve}")?;
        writeln!(out, "# lambda value ci95")?;
        for r in &rows[i..end] {
            let value = r.analytic_value.or(r.mean_delay);
            let prefix = if r.status == Status::Ok { "" } else { "# unstable " };
            match value {
                Some(v) => writeln!(out, "{prefix}{} {v} {}", r.lambda, r.ci95.unwrap_or(0.0))?,
                None => writeln!(out, "# {} -", r.lambda)?,
            }
        }
        index += 1;
        i = end;
    }
    Ok(())
}

pub struct FigureOutput {
    pub rows: Vec<Row>,
    pub csv: PathBuf,
    pub plot_data: PathBuf,
    pub manifest: PathBuf,
}

/// Runs a preset and writes `<fig>_<scale>.csv`, `.dat` and `.toml` into `out_dir`.
pub fn reproduce_figure(which: Figure, scale: Scale, master_seed: u64, out_dir: &Path) -> Result<FigureOutput, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let spec = preset_spec(which, scale, master_seed, out_dir);
    let rows = run_sweep(&spec)?;
    let plot_data = spec.output.with_extension("dat");
    let file = fs::File::create(&plot_data).map_err(|e| CliError::io(&plot_data, e))?;
    write_plot_data(&rows, std::io::BufWriter::new(file))?;
    let manifest = spec.output.with_extension("toml");
    let mut m = RunManifest::new(&spec, &rows);
    m.figure = Some(which);
    m.scale = Some(scale);
    m.plot_data = Some(plot_data.clone());
    m.write(&manifest)?;
    Ok(FigureOutput {
        rows,
        csv: spec.output,
        plot_data,
        manifest,
    })
}

/// Empirical saturation point of a simulated curve: the first arrival rate
/// whose mean delay exceeds `factor` times the delay at the lightest load.
/// `None` if the curve never saturates on its grid.
pub fn saturation_point(rows: &[Row], curve: &str, factor: f64) -> Option<f64> {
    let mut points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.curve == curve)
        .filter_map(|r| r.mean_delay.map(|d| (r.lambda, d)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let base = points.first()?.1;
    points.iter().find(|(_, d)| *d > factor * base).map(|(l, _)| *l)
}

/// Checks the saturation order of a preset's simulated curves for each
/// bulk size: GF(2) bad, then GF(2) good, then both GF(16) curves, then
/// retransmission. Returns the violated comparisons.
pub fn saturation_order_violations(rows: &[Row]) -> Vec<String> {
    const FACTOR: f64 = 10.0;
    let sat = |name: &str| saturation_point(rows, name, FACTOR).unwrap_or(f64::INFINITY);
    let mut out = Vec::new();
    let mut check = |a: &str, b: &str, strict: bool| {
        let (sa, sb) = (sat(a), sat(b));
        if sa > sb || (strict && sa == sb) {
            out.push(format!("{a} saturates at {sa}, {b} at {sb}"));
        }
    };
    for k in PRESET_BULKS {
        let bad2 = format!("rlc-K{k}-gf2-bad-sim");
        let good2 = format!("rlc-K{k}-gf2-good-sim");
        check(&bad2, &good2, false);
        for mode in ["bad", "good"] {
            let gf16 = format!("rlc-K{k}-gf16-{mode}-sim");
            check(&good2, &gf16, false);
            check(&gf16, "retx-sim", false);
        }
        check(&bad2, "retx-sim", true);
    }
    out
}
