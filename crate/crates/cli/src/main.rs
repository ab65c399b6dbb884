use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use modmul::circreg::{self, CurveKind, HaltMode, Init, RegressionConfig, Variant, VerifyPolicy};
use modmul::dhloss::{self, DhRecord};
use modmul::harness::{self, LandscapeSpec, SweepSpec};
use modmul::modnum::{self, Modulus};
use modmul::seqrep;

#[derive(Parser)]
#[command(
    name = "modmul",
    version,
    about = "Learnability experiments for modular multiplication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an LWE dataset b = a·s + e (mod p) for every a in [1, p-1]
    Gen {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        secret: u64,
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run circular regression on a dataset file
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        eta: f64,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = VariantArg::Reciprocal)]
        variant: VariantArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to p
        #[arg(long)]
        max_steps: Option<usize>,
        /// Fixed initial guess instead of a random integer
        #[arg(long)]
        init: Option<f64>,
        /// Residual threshold; defaults to ceil(4·sigma)
        #[arg(long)]
        tau: Option<u64>,
        /// Fraction of checked samples that must pass; defaults to 0.95
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = VerifyPolicy::DEFAULT_SUBSET)]
        verify_size: usize,
        /// verify | tolerance:EPS | relaxed
        #[arg(long, default_value = "verify")]
        halt: String,
        #[arg(long, default_value_t = circreg::DEFAULT_GRAD_FLOOR)]
        grad_floor: f64,
        /// Write the descent trace as CSV
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Success counts over a grid of primes, learning rates and batch sizes
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        primes: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = VariantArg::Reciprocal)]
        variant: VariantArg,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steps needed by successful runs at eta = 2, k = 256
    Steps {
        #[arg(long, value_delimiter = ',', default_values_t = harness::STEPS_PRIMES)]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the loss, gradient or reciprocal gradient over a range of s
    Landscape {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        secret: u64,
        #[arg(long, value_enum, default_value_t = CurveArg::Loss)]
        what: CurveArg,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Defaults to p
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = circreg::DEFAULT_GRAD_FLOOR)]
        grad_floor: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode integers as fixed-width base-B digits, or decode digit lists
    Tokenize {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        base: u32,
        /// Treat each value as a comma-separated digit list and decode it
        #[arg(long)]
        decode: bool,
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Exact-match accuracy and arithmetic difference of a prediction-pair file
    Metrics {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Generate a Diffie–Hellman dataset y = g^(a·s) mod p
    DhGen {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        g: u64,
        #[arg(long)]
        secret: u64,
        #[arg(long, default_value_t = 2)]
        base: u32,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify primitivity, exact residuals and loss gradients of a DH dataset
    DhCheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plain,
    Reciprocal,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Plain => Variant::Plain,
            VariantArg::Reciprocal => Variant::Reciprocal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveArg {
    Loss,
    Grad,
    GradRecip,
}

impl From<CurveArg> for CurveKind {
    fn from(c: CurveArg) -> Self {
        match c {
            CurveArg::Loss => CurveKind::Loss,
            CurveArg::Grad => CurveKind::Gradient,
            CurveArg::GradRecip => CurveKind::ReciprocalGradient,
        }
    }
}

/// Exit status 2 for bad input, 1 for everything else.
enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<modmul::Error> for Failure {
    fn from(e: modmul::Error) -> Self {
        match e {
            modmul::Error::Io(_) | modmul::Error::Csv(_) => Failure::Runtime(e.into()),
            _ => Failure::Invalid(e.into()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(Failure::Runtime)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn input(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Invalid)
}

fn workers() -> CliResult<Option<usize>> {
    Ok(harness::workers_from_env()?)
}

fn parse_halt(s: &str) -> CliResult<HaltMode> {
    match s {
        "verify" => Ok(HaltMode::VerifyRounding),
        "relaxed" => Ok(HaltMode::RelaxedHalfM),
        _ => s
            .strip_prefix("tolerance:")
            .and_then(|eps| eps.parse().ok())
            .map(HaltMode::LossTolerance)
            .ok_or_else(|| Failure::Invalid(anyhow!("--halt expects verify, relaxed or tolerance:EPS, got {s:?}"))),
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Gen {
            p,
            secret,
            sigma,
            seed,
            out,
        } => {
            let mut d = modnum::gen_dataset(Modulus::new(p)?, secret, sigma, &mut ChaCha8Rng::seed_from_u64(seed))?;
            d.set_seed(Some(seed));
            modnum::write_dataset(&d, output(out.as_deref())?)?;
        }
        Command::Solve {
            data,
            eta,
            batch_size,
            variant,
            seed,
            max_steps,
            init,
            tau,
            rho,
            verify_size,
            halt,
            grad_floor,
            trace,
        } => {
            let d = modnum::read_dataset(input(&data)?)?;
            let default = VerifyPolicy::for_sigma(d.sigma());
            let policy = VerifyPolicy {
                threshold: tau.unwrap_or(default.threshold),
                fraction: rho.unwrap_or(default.fraction),
                subset_size: verify_size,
            };
            let mut cfg = RegressionConfig::new(eta, batch_size)
                .with_variant(variant.into())
                .with_verify(policy)
                .with_halt(parse_halt(&halt)?)
                .with_grad_floor(grad_floor)
                .with_trace(trace.is_some());
            cfg.max_steps = max_steps;
            if let Some(s0) = init {
                cfg = cfg.with_init(Init::Fixed(s0));
            }
            let result = circreg::solve(d.public(), &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
            if let (Some(path), Some(tr)) = (trace, result.trace.as_ref()) {
                circreg::write_trace(tr, output(Some(&path))?)?;
            }
            let summary = serde_json::json!({
                "success": result.success,
                "steps_taken": result.steps_taken,
                "success_at_init": result.success_at_init,
                "final_s": result.final_s,
                "recovered_secret": result.recovered_secret,
                "matches_stored_secret": d.secret().map(|s| result.success && s == result.recovered_secret),
            });
            println!("{summary}");
        }
        Command::Sweep {
            primes,
            etas,
            batch_sizes,
            trials,
            sigma,
            seed,
            variant,
            max_steps,
            out,
        } => {
            let mut spec = SweepSpec::new(primes, etas, batch_sizes, seed);
            spec.trials = trials;
            spec.sigma = sigma;
            spec.variant = variant.into();
            spec.max_steps = max_steps;
            let report = harness::run_sweep(&spec, workers()?)?;
            report_diagnostics(&report);
            report.write_csv(output(out.as_deref())?)?;
        }
        Command::Steps {
            primes,
            trials,
            sigma,
            seed,
            out,
        } => {
            let mut spec = SweepSpec::steps_experiment(primes, seed);
            spec.trials = trials;
            spec.sigma = sigma;
            let report = harness::run_sweep(&spec, workers()?)?;
            report_diagnostics(&report);
            report.write_steps_csv(output(out.as_deref())?)?;
        }
        Command::Landscape {
            p,
            secret,
            what,
            from,
            to,
            step,
            sigma,
            seed,
            grad_floor,
            out,
        } => {
            let spec = LandscapeSpec {
                p,
                secret,
                sigma,
                seed,
                kind: what.into(),
                from,
                to: to.unwrap_or(p as f64),
                step,
                grad_floor,
            };
            harness::emit_landscape(&spec, output(out.as_deref())?)?;
        }
        Command::Tokenize {
            p,
            base,
            decode,
            values,
        } => {
            let width = seqrep::width_for(p, base)?;
            let mut out = output(None)?;
            for v in values {
                if decode {
                    let digits = v
                        .split(',')
                        .map(|d| d.trim().parse::<u32>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| Failure::Invalid(anyhow!("bad digit list {v:?}: {e}")))?;
                    let seq = seqrep::TokenSequence::new(base, digits)?;
                    writeln!(out, "{v} -> {}", seq.decode()?)?;
                } else {
                    let x: u64 = v
                        .parse()
                        .map_err(|e| Failure::Invalid(anyhow!("bad value {v:?}: {e}")))?;
                    let seq = seqrep::encode(x, base, width)?;
                    let digits: Vec<String> = seq.digits().iter().map(|d| d.to_string()).collect();
                    writeln!(out, "{x} -> {}", digits.join(","))?;
                }
            }
            out.flush()?;
        }
        Command::Metrics { pairs } => {
            let file = seqrep::read_pairs(input(&pairs)?)?;
            let metrics = seqrep::score_pairs(&file)?;
            println!(
                "{}",
                serde_json::to_string(&metrics).map_err(|e| Failure::Runtime(e.into()))?
            );
        }
        Command::DhGen {
            p,
            g,
            secret,
            base,
            count,
            seed,
            out,
        } => {
            let inst = dhloss::gen_dh_dataset(
                Modulus::new(p)?,
                g,
                secret,
                base,
                count,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?;
            dhloss::write_dh_dataset(&DhRecord::from_instance(&inst), output(out.as_deref())?)?;
        }
        Command::DhCheck { data, seed } => {
            let rec = dhloss::read_dh_dataset(input(&data)?)?;
            let checks = dhloss::run_checks(&rec, &mut ChaCha8Rng::seed_from_u64(seed));
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Err(Failure::Runtime(anyhow!("dh-check failed")));
            }
        }
    }
    Ok(())
}

fn report_diagnostics(report: &harness::SweepReport) {
    for row in &report.rows {
        for o in &row.outcomes {
            if let Some(d) = &o.diagnostic {
                eprintln!("p={} eta={} k={} secret={}: {d}", row.p, row.eta, row.k, o.secret);
            }
        }
    }
}
