//! Experiment orchestration: success-rate sweeps over `(p, η, k)`, the
//! steps-versus-`p` experiment and loss-landscape export.
//!
//! Every random stream is derived from the master seed and the coordinates
//! of the trial it serves, so results do not depend on how trials are
//! scheduled across workers.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circreg::{self, CurveKind, RegressionConfig, Variant};
use crate::modnum::{gen_dataset, Modulus};
use crate::{Error, Result};

mod seeding;

pub use seeding::{mix_seed, stream};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MODMUL_THREADS";

/// Primes used for the steps-versus-`p` experiment.
pub const STEPS_PRIMES: [u64; 7] = [251, 1471, 11197, 20663, 42899, 115301, 222553];
/// Learning rate and batch size of the steps-versus-`p` experiment.
pub const STEPS_ETA: f64 = 2.0;
pub const STEPS_BATCH: usize = 256;

const TAG_SECRETS: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_SOLVE: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub primes: Vec<u64>,
    pub etas: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    pub sigma: f64,
    pub master_seed: u64,
    pub variant: Variant,
    /// `None` gives each run `p` steps.
    pub max_steps: Option<usize>,
}

impl SweepSpec {
    pub fn new(primes: Vec<u64>, etas: Vec<f64>, batch_sizes: Vec<usize>, master_seed: u64) -> Self {
        SweepSpec {
            primes,
            etas,
            batch_sizes,
            trials: 20,
            sigma: 3.0,
            master_seed,
            variant: Variant::Reciprocal,
            max_steps: None,
        }
    }

    /// The fixed `η = 2`, `k = 256` cell over the given primes.
    pub fn steps_experiment(primes: Vec<u64>, master_seed: u64) -> Self {
        SweepSpec::new(primes, vec![STEPS_ETA], vec![STEPS_BATCH], master_seed)
    }

    pub fn validate(&self) -> Result<Vec<Modulus>> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.primes.is_empty() || self.etas.is_empty() || self.batch_sizes.is_empty() {
            return bad("primes, etas and batch sizes must all be nonempty".into());
        }
        if self.trials == 0 {
            return bad("trials per cell must be at least 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be finite and >= 0", self.sigma));
        }
        let moduli = self
            .primes
            .iter()
            .map(|&p| Modulus::new(p))
            .collect::<Result<Vec<_>>>()?;
        for p in &moduli {
            if self.trials as u64 > p.get() - 1 {
                return bad(format!("{} distinct secrets do not exist below {p}", self.trials));
            }
        }
        for &eta in &self.etas {
            RegressionConfig::new(eta, 1).validate()?;
        }
        if self.batch_sizes.contains(&0) || self.max_steps == Some(0) {
            return bad("batch sizes and max_steps must be positive".into());
        }
        Ok(moduli)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub secret: u64,
    pub success: bool,
    pub steps: usize,
    pub recovered: u64,
    /// Why a trial was counted as a failure other than running out of steps.
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CellReport {
    pub p: u64,
    pub eta: f64,
    /// Requested batch size; runs clamp it to the dataset size.
    pub k: usize,
    pub successes: usize,
    pub trials: usize,
    /// Steps of the successful trials, ascending.
    pub step_counts: Vec<usize>,
    pub wall_time: Duration,
    pub outcomes: Vec<TrialOutcome>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    /// Sorted by `(p, η, k)`.
    pub rows: Vec<CellReport>,
}

impl SweepReport {
    pub fn row(&self, p: u64, eta: f64, k: usize) -> Option<&CellReport> {
        self.rows.iter().find(|r| r.p == p && r.eta == eta && r.k == k)
    }

    /// CSV `p,eta,k,successes,trials,steps` with `;`-joined step counts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "eta", "k", "successes", "trials", "steps"])?;
        for r in &self.rows {
            w.write_record([
                r.p.to_string(),
                r.eta.to_string(),
                r.k.to_string(),
                r.successes.to_string(),
                r.trials.to_string(),
                join_steps(&r.step_counts),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `p,log2_p,successes,trials,steps`, one row per prime.
    pub fn write_steps_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "log2_p", "successes", "trials", "steps"])?;
        for r in &self.rows {
            w.write_record([
                r.p.to_string(),
                bit_length(r.p - 1).to_string(),
                r.successes.to_string(),
                r.trials.to_string(),
                join_steps(&r.step_counts),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn join_steps(steps: &[usize]) -> String {
    steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";")
}

/// `ceil(log2 p)` for primes `p > 2`.
fn bit_length(x: u64) -> u32 {
    64 - x.leading_zeros()
}

/// Worker count from `MODMUL_THREADS`, if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidConfig(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
    }
}

/// The secrets used for prime `p`: distinct, uniform over `[1, p-1]`, and
/// shared by every `(η, k)` cell.
pub fn secrets_for(p: Modulus, trials: usize, master_seed: u64) -> Vec<u64> {
    let mut rng = stream(&[master_seed, TAG_SECRETS, p.get()]);
    index::sample(&mut rng, (p.get() - 1) as usize, trials)
        .iter()
        .map(|i| i as u64 + 1)
        .collect()
}

fn dataset_rng(master_seed: u64, p: u64, trial: usize) -> ChaCha8Rng {
    stream(&[master_seed, TAG_DATA, p, trial as u64])
}

fn solver_rng(master_seed: u64, p: u64, eta: f64, k: usize, trial: usize) -> ChaCha8Rng {
    stream(&[master_seed, TAG_SOLVE, p, eta.to_bits(), k as u64, trial as u64])
}

fn run_trial(spec: &SweepSpec, p: Modulus, eta: f64, k: usize, trial: usize, secret: u64) -> TrialOutcome {
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<circreg::RegressionResult> {
        let data = gen_dataset(
            p,
            secret,
            spec.sigma,
            &mut dataset_rng(spec.master_seed, p.get(), trial),
        )?;
        let mut cfg = RegressionConfig::new(eta, k).with_variant(spec.variant);
        cfg.max_steps = spec.max_steps;
        circreg::solve(
            data.public(),
            &cfg,
            &mut solver_rng(spec.master_seed, p.get(), eta, k, trial),
        )
    }));
    let failed = |diagnostic: String| TrialOutcome {
        secret,
        success: false,
        steps: 0,
        recovered: 0,
        diagnostic: Some(diagnostic),
    };
    match attempt {
        Ok(Ok(r)) if r.success && r.recovered_secret != secret => failed(format!(
            "verification accepted {} but the secret is {secret}",
            r.recovered_secret
        )),
        Ok(Ok(r)) => TrialOutcome {
            secret,
            success: r.success,
            steps: r.steps_taken,
            recovered: r.recovered_secret,
            diagnostic: None,
        },
        Ok(Err(e)) => failed(e.to_string()),
        Err(panic) => failed(format!("trial panicked: {}", panic_message(&panic))),
    }
}

fn panic_message(payload: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Runs every `(p, η, k)` cell of the sweep. `workers = None` uses the
/// machine default.
pub fn run_sweep(spec: &SweepSpec, workers: Option<usize>) -> Result<SweepReport> {
    let moduli = spec.validate()?;
    let mut cells = Vec::new();
    for &p in &moduli {
        for &eta in &spec.etas {
            for &k in &spec.batch_sizes {
                cells.push((p, eta, k));
            }
        }
    }
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    cells.dedup();

    let secrets: Vec<(Modulus, Vec<u64>)> = moduli
        .iter()
        .map(|&p| (p, secrets_for(p, spec.trials, spec.master_seed)))
        .collect();
    let secrets_of = |p: Modulus| &secrets.iter().find(|(q, _)| *q == p).expect("validated prime").1;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let results: Vec<(TrialOutcome, Duration)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| {
                let (p, eta, k) = cells[c];
                let start = Instant::now();
                let outcome = run_trial(spec, p, eta, k, t, secrets_of(p)[t]);
                (outcome, start.elapsed())
            })
            .collect()
    });

    let rows = cells
        .iter()
        .zip(results.chunks(spec.trials))
        .map(|(&(p, eta, k), chunk)| {
            let outcomes: Vec<TrialOutcome> = chunk.iter().map(|(o, _)| o.clone()).collect();
            let mut step_counts: Vec<usize> = outcomes.iter().filter(|o| o.success).map(|o| o.steps).collect();
            step_counts.sort_unstable();
            CellReport {
                p: p.get(),
                eta,
                k,
                successes: step_counts.len(),
                trials: spec.trials,
                step_counts,
                wall_time: chunk.iter().map(|(_, d)| *d).sum(),
                outcomes,
            }
        })
        .collect();
    Ok(SweepReport { rows })
}

/// The steps-versus-`p` experiment: one `(η = 2, k = 256)` cell per prime.
pub fn run_steps_experiment(primes: Vec<u64>, master_seed: u64, workers: Option<usize>) -> Result<SweepReport> {
    run_sweep(&SweepSpec::steps_experiment(primes, master_seed), workers)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeSpec {
    pub p: u64,
    pub secret: u64,
    pub sigma: f64,
    pub seed: u64,
    pub kind: CurveKind,
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub grad_floor: f64,
}

/// Samples a loss, gradient or reciprocal-gradient curve for a generated
/// dataset and writes it as CSV.
pub fn emit_landscape<W: Write>(spec: &LandscapeSpec, out: W) -> Result<()> {
    let p = Modulus::new(spec.p)?;
    let data = gen_dataset(p, spec.secret, spec.sigma, &mut ChaCha8Rng::seed_from_u64(spec.seed))?;
    let angles = circreg::to_angles(data.public());
    let points = circreg::sample_curve(&angles, spec.kind, spec.from, spec.to, spec.step, spec.grad_floor)?;
    circreg::write_curve(&points, out)
}
