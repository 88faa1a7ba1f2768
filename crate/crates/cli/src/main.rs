//! Command-line harness: single trials, parameter sweeps, quantizer design
//! reports, and built-in consistency checks.
//!
//! Configuration comes from an optional TOML file whose keys mirror
//! `SystemConfig` one-to-one, with individual flag overrides on top. All
//! randomness is seeded; repeated invocations with the same arguments produce
//! byte-identical output. Trials within a sweep point run in parallel; set
//! `RAYON_NUM_THREADS` to bound the worker count.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use qadce_core::bussgang::{bussgang_gain, residual_variance};
use qadce_core::config::{AdcBits, PriorHyper, SystemConfig};
use qadce_core::quantizer::{lloyd_max_design, Quantizer};
use qadce_core::selftest;
use qadce_core::sim::{run_sweep, run_trial, write_sweep_csv, SweepAxis, SweepSpec};

#[derive(Parser)]
#[command(
    name = "qadce",
    about = "Joint activity detection and channel estimation under low-resolution ADCs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded trial and print its metrics as a CSV row.
    Trial(TrialArgs),
    /// Sweep one parameter axis and print aggregate CSV rows.
    Sweep(SweepArgs),
    /// Print a Lloyd-Max quantizer design and its Bussgang statistics as JSON.
    QuantizerReport(QuantizerArgs),
    /// Run the built-in consistency checks; nonzero exit on any failure.
    Selftest,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file with scenario parameters (keys mirror the library config).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Device count override.
    #[arg(long)]
    devices: Option<usize>,
    /// Antenna count override (the angular grid follows it).
    #[arg(long)]
    antennas: Option<usize>,
    /// Pilot length override.
    #[arg(long)]
    pilot_length: Option<usize>,
    /// Average received SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// ADC resolution: 1..=12 bits, or "inf" for an ideal front end.
    #[arg(long)]
    adc_bits: Option<AdcBitsArg>,
    /// Device active ratio in [0, 1].
    #[arg(long)]
    active_ratio: Option<f64>,
}

#[derive(Clone, Copy)]
struct AdcBitsArg(AdcBits);

impl FromStr for AdcBitsArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(AdcBitsArg(AdcBits::Infinite));
        }
        s.parse::<u32>()
            .map(|b| AdcBitsArg(AdcBits::Finite(b)))
            .map_err(|_| format!("expected a bit count or \"inf\", got {s:?}"))
    }
}

impl ConfigArgs {
    fn build(&self) -> Result<SystemConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                toml::from_str::<SystemConfig>(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => SystemConfig::desk_default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.devices {
            cfg.n = v;
        }
        if let Some(v) = self.antennas {
            cfg.m = v;
            cfg.m_tilde = v;
            cfg.hyper = PriorHyper {
                q_s: cfg.hyper.q_s,
                ..PriorHyper::default_for(cfg.hyper.q_s, v)
            };
        }
        if let Some(v) = self.pilot_length {
            cfg.t = v;
        }
        if let Some(v) = self.snr_db {
            cfg.snr_db = v;
        }
        if let Some(AdcBitsArg(v)) = self.adc_bits {
            cfg.adc_bits = v;
        }
        if let Some(v) = self.active_ratio {
            cfg.q_s = v;
            cfg.hyper.q_s = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the CSV to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Swept parameter: pilot_length, snr_db, or adc_bits.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values (for adc_bits, integers or "inf").
    #[arg(long)]
    values: String,
    /// Independent trials per axis point.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Base of the per-trial seed schedule (trial t uses seed_base + t).
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Write the CSV to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizerArgs {
    /// Bits per real dimension (1..=12).
    #[arg(long)]
    bits: u32,
    /// Standard deviation of the Gaussian input the design targets.
    #[arg(long, default_value_t = 1.0)]
    input_std: f64,
}

const TRIAL_CSV_HEADER: &str =
    "seed,mse,nmse,tpr,fpr,iters,converged,n_active_true,n_active_est";

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.8e}"),
        None => "nan".into(),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_trial(args: &TrialArgs) -> Result<()> {
    let cfg = args.config.build()?;
    let out = run_trial(&cfg)?;
    let r = out.record;
    let text = format!(
        "{TRIAL_CSV_HEADER}\n{},{:.8e},{},{},{},{},{},{},{}\n",
        r.seed,
        r.mse,
        opt(r.nmse),
        opt(r.tpr),
        opt(r.fpr),
        r.iters,
        r.converged,
        r.n_active_true,
        r.n_active_est
    );
    emit(&args.out, &text)
}

fn parse_axis(axis: &str, values: &str) -> Result<SweepAxis> {
    let parts: Vec<&str> = values.split(',').map(str::trim).collect();
    anyhow::ensure!(!parts.is_empty(), "axis values must be non-empty");
    match axis {
        "pilot_length" => Ok(SweepAxis::PilotLength(
            parts
                .iter()
                .map(|p| p.parse::<usize>().context("pilot_length values must be integers"))
                .collect::<Result<_>>()?,
        )),
        "snr_db" => Ok(SweepAxis::SnrDb(
            parts
                .iter()
                .map(|p| p.parse::<f64>().context("snr_db values must be numbers"))
                .collect::<Result<_>>()?,
        )),
        "adc_bits" => Ok(SweepAxis::AdcBits(
            parts
                .iter()
                .map(|p| {
                    p.parse::<AdcBitsArg>()
                        .map(|a| a.0)
                        .map_err(anyhow::Error::msg)
                })
                .collect::<Result<_>>()?,
        )),
        other => anyhow::bail!(
            "unknown axis {other:?}; expected pilot_length, snr_db, or adc_bits"
        ),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base = args.config.build()?;
    let spec = SweepSpec {
        base,
        axis: parse_axis(&args.axis, &args.values)?,
        trials: args.trials,
        seed_base: args.seed_base,
    };
    let records = run_sweep(&spec)?;
    let mut buf = Vec::new();
    write_sweep_csv(&records, &mut buf)?;
    emit(&args.out, std::str::from_utf8(&buf).expect("csv is ascii"))
}

fn cmd_quantizer_report(args: &QuantizerArgs) -> Result<()> {
    let design = lloyd_max_design(args.bits, args.input_std)?;
    let q = Quantizer::Finite(design.clone());
    let gain = bussgang_gain(&q, args.input_std);
    let residual = residual_variance(&q, args.input_std);
    let report = serde_json::json!({
        "bits": design.bits,
        "input_std": args.input_std,
        "thresholds": design.thresholds,
        "levels": design.levels,
        "bussgang_gain": gain,
        "residual_distortion_variance": residual,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let reports = selftest::run_all();
    let mut failed = 0usize;
    for r in &reports {
        println!(
            "{} {} — {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    for r in &reports {
        if !r.passed {
            failed += 1;
        }
    }
    anyhow::ensure!(failed == 0, "{failed} of {} checks failed", reports.len());
    println!("all {} checks passed", reports.len());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Trial(a) => cmd_trial(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::QuantizerReport(a) => cmd_quantizer_report(a),
        Command::Selftest => cmd_selftest(),
    };
    if let Err(err) = result {
        let line = serde_json::json!({ "error": format!("{err:#}") });
        let _ = writeln!(std::io::stderr(), "{line}");
        std::process::exit(1);
    }
}
