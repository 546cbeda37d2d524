use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rlc_arq::{delay_report, ChannelParams, CodingMode, FieldSpec, Fidelity, ProtocolKind};
use rlc_arq_cli::figure::{preset_spec, RunManifest};
use rlc_arq_cli::{
    reproduce_figure, run_sweep, run_validation, saturation_order_violations, CliError, CurveSpec, Figure,
    Scale, Source, SweepSpec,
};

#[derive(Parser)]
#[command(name = "rlc-arq", version, about = "Delay of random linear coding versus retransmission")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the arrival rate for one curve (or a TOML spec of curves) and write CSV.
    Sweep(SweepArgs),
    /// Reproduce a figure preset: CSV, gnuplot columns and a run manifest.
    Figure(FigureArgs),
    /// Print every analytic quantity at one operating point.
    Analytic(AnalyticArgs),
    /// Run the oracle and coupling self-checks.
    Validate(ValidateArgs),
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Args)]
struct PointArgs {
    #[arg(long = "K", default_value_t = 1)]
    max_bulk: usize,
    /// Field order or `inf`.
    #[arg(long, default_value = "inf", value_parser = parse::<FieldSpec>)]
    field: FieldSpec,
    #[arg(long, default_value = "good", value_parser = parse::<CodingMode>)]
    coding: CodingMode,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep spec; replaces the single-curve flags below.
    #[arg(long, conflicts_with_all = ["q", "source", "protocol"])]
    spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    q: Option<f64>,
    /// Defaults to lambda-max / steps.
    #[arg(long)]
    lambda_min: Option<f64>,
    /// Defaults to q.
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, value_parser = parse::<ProtocolKind>)]
    protocol: Option<ProtocolKind>,
    #[arg(long, value_parser = parse::<Source>)]
    source: Option<Source>,
    #[arg(long, value_parser = parse::<Fidelity>, default_value = "markov")]
    fidelity: Fidelity,
    #[arg(long, default_value_t = 10_000_000)]
    slots: u64,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_parser = parse::<Figure>)]
    which: Figure,
    #[arg(long, default_value = "desk", value_parser = parse::<Scale>)]
    scale: Scale,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long)]
    q: f64,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    point: PointArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1_000_000)]
    slots: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn sweep_spec(args: SweepArgs) -> anyhow::Result<SweepSpec> {
    if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return toml::from_str(&text).map_err(|e| CliError::InvalidSpec(e.to_string()).into());
    }
    let q = args.q.expect("required by clap");
    let protocol = args.protocol.unwrap_or(ProtocolKind::Rlc);
    let source = args.source.unwrap_or(Source::Sim);
    let curve = CurveSpec::new(
        source,
        protocol,
        args.point.max_bulk,
        args.point.field,
        args.point.coding,
        args.fidelity,
    );
    let lambda_max = args.lambda_max.unwrap_or(q);
    Ok(SweepSpec {
        q,
        lambda_min: args.lambda_min.unwrap_or(lambda_max / args.steps.max(1) as f64),
        lambda_max,
        lambda_steps: args.steps,
        curves: vec![curve],
        slots: args.slots,
        warmup_slots: args.warmup,
        master_seed: args.seed,
        output: args.out,
    })
}

/// Exit code 1: a check failed.
struct ValidationFailed;

fn run(cli: Cli) -> anyhow::Result<Result<(), ValidationFailed>> {
    match cli.command {
        Command::Sweep(args) => {
            let spec = sweep_spec(args)?;
            let rows = run_sweep(&spec)?;
            let manifest = spec.output.with_extension("toml");
            RunManifest::new(&spec, &rows).write(&manifest)?;
            println!("{} rows -> {}", rows.len(), spec.output.display());
            println!("manifest -> {}", manifest.display());
        }
        Command::Figure(args) => {
            let planned = preset_spec(args.which, args.scale, args.seed, &args.out);
            eprintln!(
                "{} {}: {} curves x {} arrival rates, {} slots per simulated point",
                args.which,
                args.scale,
                planned.curves.len(),
                planned.lambda_steps,
                planned.slots
            );
            let out = reproduce_figure(args.which, args.scale, args.seed, &args.out)?;
            println!("csv -> {}", out.csv.display());
            println!("plot data -> {}", out.plot_data.display());
            println!("manifest -> {}", out.manifest.display());
            let violations = saturation_order_violations(&out.rows);
            if !violations.is_empty() {
                for v in violations {
                    eprintln!("saturation order: {v}");
                }
                return Ok(Err(ValidationFailed));
            }
            println!("saturation order: ok");
        }
        Command::Analytic(args) => {
            let params = ChannelParams::new(args.q, args.lambda)?;
            let report = delay_report(params, args.point.max_bulk, &args.point.field, args.point.coding)?;
            print!("{}", toml::to_string(&report)?);
        }
        Command::Validate(args) => {
            let checks = run_validation(args.slots, args.seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return Ok(Err(ValidationFailed));
            }
        }
    }
    Ok(Ok(()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(ValidationFailed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<CliError>().is_some_and(CliError::is_usage)
                || e.downcast_ref::<rlc_arq::Error>().is_some_and(|e| {
                    matches!(e, rlc_arq::Error::InvalidParameter(_) | rlc_arq::Error::InvalidFieldOrder(_))
                });
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
